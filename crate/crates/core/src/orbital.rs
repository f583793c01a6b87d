//! Walker-delta constellations, circular two-body propagation and
//! line-of-sight geometry.
//!
//! All positions are in an Earth-centred inertial frame in kilometres. The
//! Greenwich meridian is aligned with the inertial x axis at epoch 0, so a
//! ground node only picks up Earth rotation as time advances.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Mean Earth radius, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Earth gravitational parameter, km^3/s^2.
pub const MU_EARTH_KM3_S2: f64 = 398_600.441_8;
/// Sidereal rotation rate, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

pub type Vec3 = Vector3<f64>;

/// Walker-delta geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstellationConfig {
    pub num_planes: u32,
    pub sats_per_plane: u32,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub phasing_factor: u32,
    pub raan_spread_deg: f64,
}

impl Default for ConstellationConfig {
    fn default() -> Self {
        Self {
            num_planes: 6,
            sats_per_plane: 20,
            altitude_km: 1000.0,
            inclination_deg: 53.0,
            phasing_factor: 1,
            raan_spread_deg: 360.0,
        }
    }
}

impl ConstellationConfig {
    pub fn new(
        num_planes: u32,
        sats_per_plane: u32,
        altitude_km: f64,
        inclination_deg: f64,
        phasing_factor: u32,
    ) -> Result<Self, ConfigError> {
        let config =
            Self { num_planes, sats_per_plane, altitude_km, inclination_deg, phasing_factor, raan_spread_deg: 360.0 };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_planes < 1 {
            return Err(ConfigError::field("constellation.num_planes", "must be at least 1"));
        }
        if self.sats_per_plane < 1 {
            return Err(ConfigError::field("constellation.sats_per_plane", "must be at least 1"));
        }
        if !(self.altitude_km > 0.0) || !self.altitude_km.is_finite() {
            return Err(ConfigError::field("constellation.altitude_km", "must be positive"));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(ConfigError::field("constellation.inclination_deg", "must be within [0, 180]"));
        }
        if self.phasing_factor >= self.num_planes {
            return Err(ConfigError::field("constellation.phasing_factor", "must be within [0, num_planes - 1]"));
        }
        if !(self.raan_spread_deg > 0.0 && self.raan_spread_deg <= 360.0) {
            return Err(ConfigError::field("constellation.raan_spread_deg", "must be within (0, 360]"));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.num_planes as usize * self.sats_per_plane as usize
    }

    pub fn semi_major_axis_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self) -> f64 {
        (MU_EARTH_KM3_S2 / self.semi_major_axis_km().powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        2.0 * PI / self.mean_motion()
    }

    /// True when the planes close around the full 360 degrees of node, so the
    /// last plane neighbours the first one.
    pub fn planes_wrap(&self) -> bool {
        (self.raan_spread_deg - 360.0).abs() < 1e-9
    }

    pub fn sat_ids(&self) -> impl Iterator<Item = SatId> + '_ {
        (0..self.num_planes).flat_map(move |plane| (0..self.sats_per_plane).map(move |slot| SatId { plane, slot }))
    }

    /// Dense index of a satellite, plane-major.
    pub fn index_of(&self, id: SatId) -> usize {
        id.plane as usize * self.sats_per_plane as usize + id.slot as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SatId {
    pub plane: u32,
    pub slot: u32,
}

impl fmt::Display for SatId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}-{}", self.plane, self.slot)
    }
}

impl std::str::FromStr for SatId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s.strip_prefix('S').ok_or_else(|| format!("`{s}` is not a satellite id"))?;
        let (plane, slot) = rest.split_once('-').ok_or_else(|| format!("`{s}` is not a satellite id"))?;
        Ok(SatId {
            plane: plane.parse().map_err(|_| format!("bad plane in `{s}`"))?,
            slot: slot.parse().map_err(|_| format!("bad slot in `{s}`"))?,
        })
    }
}

/// Initial elements of one Walker satellite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerElements {
    pub id: SatId,
    pub raan_deg: f64,
    /// Argument of latitude at epoch 0.
    pub anomaly_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub id: SatId,
    pub position_km: Vec3,
    pub velocity_km_s: Vec3,
}

pub fn generate_walker(config: &ConstellationConfig) -> Vec<WalkerElements> {
    let planes = config.num_planes as f64;
    let slots = config.sats_per_plane as f64;
    let phase_step = config.phasing_factor as f64 * 360.0 / (planes * slots);
    config
        .sat_ids()
        .map(|id| WalkerElements {
            id,
            raan_deg: id.plane as f64 * config.raan_spread_deg / planes,
            anomaly_deg: (id.slot as f64 * 360.0 / slots + id.plane as f64 * phase_step).rem_euclid(360.0),
        })
        .collect()
}

fn orbit_state(a: f64, n: f64, raan: f64, inc: f64, u: f64) -> (Vec3, Vec3) {
    let (so, co) = raan.sin_cos();
    let (si, ci) = inc.sin_cos();
    let (su, cu) = u.sin_cos();
    let position = Vec3::new(co * cu - so * su * ci, so * cu + co * su * ci, su * si) * a;
    let velocity = Vec3::new(-co * su - so * cu * ci, -so * su + co * cu * ci, cu * si) * (a * n);
    (position, velocity)
}

/// States of every satellite at `epoch_s`, in [`generate_walker`] order.
pub fn propagate(config: &ConstellationConfig, epoch_s: f64) -> Vec<SatelliteState> {
    let a = config.semi_major_axis_km();
    let n = config.mean_motion();
    let inc = config.inclination_deg.to_radians();
    generate_walker(config)
        .into_iter()
        .map(|el| {
            // Reduce the advance modulo one revolution before adding so long
            // epochs keep full precision.
            let advance = (n * epoch_s).rem_euclid(2.0 * PI);
            let u = el.anomaly_deg.to_radians() + advance;
            let (position_km, velocity_km_s) = orbit_state(a, n, el.raan_deg.to_radians(), inc, u);
            SatelliteState { id: el.id, position_km, velocity_km_s }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundKind {
    GroundStation,
    Aircraft,
}

/// A ground station or an aircraft.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundNode {
    pub node_id: String,
    pub kind: GroundKind,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    #[serde(default)]
    pub altitude_km: f64,
    #[serde(default)]
    pub heading_deg: f64,
    #[serde(default)]
    pub speed_km_s: f64,
}

/// Default A320 cruise altitude, km.
pub const AIRCRAFT_CRUISE_ALTITUDE_KM: f64 = 10.7;
/// Default A320 cruise speed, km/s.
pub const AIRCRAFT_CRUISE_SPEED_KM_S: f64 = 0.23;

impl GroundNode {
    pub fn ground_station(node_id: impl Into<String>, latitude_deg: f64, longitude_deg: f64) -> Self {
        Self {
            node_id: node_id.into(),
            kind: GroundKind::GroundStation,
            latitude_deg,
            longitude_deg,
            altitude_km: 0.0,
            heading_deg: 0.0,
            speed_km_s: 0.0,
        }
    }

    pub fn aircraft(node_id: impl Into<String>, latitude_deg: f64, longitude_deg: f64, heading_deg: f64) -> Self {
        Self {
            node_id: node_id.into(),
            kind: GroundKind::Aircraft,
            latitude_deg,
            longitude_deg,
            altitude_km: AIRCRAFT_CRUISE_ALTITUDE_KM,
            heading_deg,
            speed_km_s: AIRCRAFT_CRUISE_SPEED_KM_S,
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if self.node_id.is_empty() {
            return Err(ConfigError::field(format!("{field}.node_id"), "must not be empty"));
        }
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(ConfigError::field(format!("{field}.latitude_deg"), "must be within [-90, 90]"));
        }
        if !self.longitude_deg.is_finite() {
            return Err(ConfigError::field(format!("{field}.longitude_deg"), "must be finite"));
        }
        if !(self.altitude_km >= 0.0) {
            return Err(ConfigError::field(format!("{field}.altitude_km"), "must be non-negative"));
        }
        match self.kind {
            GroundKind::GroundStation if self.speed_km_s != 0.0 => {
                Err(ConfigError::field(format!("{field}.speed_km_s"), "ground stations do not move"))
            }
            _ if !(self.speed_km_s >= 0.0) => {
                Err(ConfigError::field(format!("{field}.speed_km_s"), "must be non-negative"))
            }
            _ => Ok(()),
        }
    }

    /// Geodetic coordinates (degrees) at `epoch_s` after great-circle travel.
    pub fn coordinates_at(&self, epoch_s: f64) -> (f64, f64) {
        if self.speed_km_s == 0.0 || epoch_s == 0.0 {
            return (self.latitude_deg, self.longitude_deg);
        }
        let radius = EARTH_RADIUS_KM + self.altitude_km;
        let delta = self.speed_km_s * epoch_s / radius;
        let lat1 = self.latitude_deg.to_radians();
        let lon1 = self.longitude_deg.to_radians();
        let heading = self.heading_deg.to_radians();
        let lat2 = (lat1.sin() * delta.cos() + lat1.cos() * delta.sin() * heading.cos()).asin();
        let lon2 = lon1 + (heading.sin() * delta.sin() * lat1.cos()).atan2(delta.cos() - lat1.sin() * lat2.sin());
        (lat2.to_degrees(), lon2.to_degrees())
    }
}

/// Earth-fixed position of a geodetic point, spherical Earth.
pub fn geodetic_to_fixed(latitude_deg: f64, longitude_deg: f64, altitude_km: f64) -> Vec3 {
    let r = EARTH_RADIUS_KM + altitude_km;
    let (slat, clat) = latitude_deg.to_radians().sin_cos();
    let (slon, clon) = longitude_deg.to_radians().sin_cos();
    Vec3::new(r * clat * clon, r * clat * slon, r * slat)
}

/// Inertial position of a ground node at `epoch_s`.
pub fn ground_position(node: &GroundNode, epoch_s: f64) -> Vec3 {
    let (lat, lon) = node.coordinates_at(epoch_s);
    let fixed = geodetic_to_fixed(lat, lon, node.altitude_km);
    let theta = (EARTH_ROTATION_RAD_S * epoch_s).rem_euclid(2.0 * PI);
    let (s, c) = theta.sin_cos();
    Vec3::new(c * fixed.x - s * fixed.y, s * fixed.x + c * fixed.y, fixed.z)
}

/// Elevation of `target` above the local horizon of `observer`, degrees.
pub fn elevation_deg(observer: &Vec3, target: &Vec3) -> f64 {
    let line = target - observer;
    let range = line.norm();
    let up_norm = observer.norm();
    if range == 0.0 || up_norm == 0.0 {
        return 90.0;
    }
    let sin_el = (line.dot(observer) / (range * up_norm)).clamp(-1.0, 1.0);
    sin_el.asin().to_degrees()
}

/// True when the segment `a`-`b` stays outside the sphere of `radius_km`.
pub fn segment_clears_sphere(a: &Vec3, b: &Vec3, radius_km: f64) -> bool {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return true;
    }
    let t = (-a.dot(&d) / len2).clamp(0.0, 1.0);
    let closest = a + d * t;
    closest.norm() > radius_km
}

/// Visibility rules for space and ground endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility {
    pub grazing_altitude_km: f64,
    pub elevation_mask_deg: f64,
}

impl Default for Visibility {
    fn default() -> Self {
        Self { grazing_altitude_km: 80.0, elevation_mask_deg: 10.0 }
    }
}

impl Visibility {
    fn grazing_radius(&self) -> f64 {
        EARTH_RADIUS_KM + self.grazing_altitude_km
    }

    fn is_space(&self, p: &Vec3) -> bool {
        p.norm() >= self.grazing_radius()
    }

    /// Symmetric visibility between two positions. Endpoints inside the
    /// grazing sphere are treated as ground nodes and judged by elevation:
    /// ground-space pairs need the elevation mask, ground-ground pairs need
    /// each end above the other's horizon.
    pub fn visible(&self, a: &Vec3, b: &Vec3) -> bool {
        if a == b {
            return true;
        }
        match (self.is_space(a), self.is_space(b)) {
            (true, true) => segment_clears_sphere(a, b, self.grazing_radius()),
            (false, true) => elevation_deg(a, b) >= self.elevation_mask_deg,
            (true, false) => elevation_deg(b, a) >= self.elevation_mask_deg,
            (false, false) => elevation_deg(a, b) >= 0.0 && elevation_deg(b, a) >= 0.0,
        }
    }
}

/// Space-space line-of-sight test against the grazing sphere.
pub fn visible(a: &Vec3, b: &Vec3, grazing_altitude_km: f64) -> bool {
    segment_clears_sphere(a, b, EARTH_RADIUS_KM + grazing_altitude_km)
}
