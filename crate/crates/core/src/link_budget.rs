//! Link capacity and propagation delay for the RF access/feeder links and
//! the laser ISLs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, LinkError};

pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
pub const BOLTZMANN_J_K: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    SatToAir,
    GroundToAir,
    GroundToSat,
    IslLaser,
}

impl LinkClass {
    pub const ALL: [LinkClass; 4] =
        [LinkClass::SatToAir, LinkClass::GroundToAir, LinkClass::GroundToSat, LinkClass::IslLaser];

    pub fn as_str(self) -> &'static str {
        match self {
            LinkClass::SatToAir => "sat_to_air",
            LinkClass::GroundToAir => "ground_to_air",
            LinkClass::GroundToSat => "ground_to_sat",
            LinkClass::IslLaser => "isl_laser",
        }
    }
}

impl fmt::Display for LinkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetParams {
    pub link_class: LinkClass,
    pub tx_power_w: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    #[serde(default = "default_noise_temperature")]
    pub noise_temperature_k: f64,
    /// Only meaningful for laser ISLs.
    #[serde(default)]
    pub lisl_fixed_rate_bps: f64,
}

fn default_noise_temperature() -> f64 {
    290.0
}

const SATELLITE_TX_W: f64 = 5.0;
const GS_TX_W: f64 = 10.0;
const SATELLITE_GAIN_DB: f64 = 40.0;
const AIRCRAFT_GAIN_DB: f64 = 30.0;
const GS_GAIN_DB: f64 = 52.0;
const RF_BANDWIDTH_HZ: f64 = 100e6;

impl LinkBudgetParams {
    pub fn sat_to_air() -> Self {
        Self::rf(LinkClass::SatToAir, SATELLITE_TX_W, SATELLITE_GAIN_DB, AIRCRAFT_GAIN_DB, 15e9)
    }

    pub fn ground_to_air() -> Self {
        Self::rf(LinkClass::GroundToAir, GS_TX_W, GS_GAIN_DB, AIRCRAFT_GAIN_DB, 18e9)
    }

    pub fn ground_to_sat() -> Self {
        Self::rf(LinkClass::GroundToSat, GS_TX_W, GS_GAIN_DB, SATELLITE_GAIN_DB, 30e9)
    }

    pub fn isl_laser() -> Self {
        Self {
            link_class: LinkClass::IslLaser,
            tx_power_w: SATELLITE_TX_W,
            tx_gain_db: SATELLITE_GAIN_DB,
            rx_gain_db: SATELLITE_GAIN_DB,
            carrier_hz: 197e12,
            bandwidth_hz: RF_BANDWIDTH_HZ,
            noise_temperature_k: 290.0,
            lisl_fixed_rate_bps: 10e9,
        }
    }

    fn rf(link_class: LinkClass, tx_power_w: f64, tx_gain_db: f64, rx_gain_db: f64, carrier_hz: f64) -> Self {
        Self {
            link_class,
            tx_power_w,
            tx_gain_db,
            rx_gain_db,
            carrier_hz,
            bandwidth_hz: RF_BANDWIDTH_HZ,
            noise_temperature_k: 290.0,
            lisl_fixed_rate_bps: 0.0,
        }
    }

    pub fn validate(&self, field: &str) -> Result<(), ConfigError> {
        let positive = [
            ("tx_power_w", self.tx_power_w),
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_hz", self.carrier_hz),
            ("noise_temperature_k", self.noise_temperature_k),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::field(format!("{field}.{name}"), "must be positive"));
            }
        }
        if self.link_class == LinkClass::IslLaser && !(self.lisl_fixed_rate_bps > 0.0) {
            return Err(ConfigError::field(format!("{field}.lisl_fixed_rate_bps"), "must be positive"));
        }
        Ok(())
    }

    /// Received-signal to noise ratio (linear) over the full bandwidth.
    pub fn full_band_snr(&self, distance_km: f64) -> Result<f64, LinkError> {
        let loss = fspl_db(distance_km, self.carrier_hz)?;
        let rx_dbw = 10.0 * self.tx_power_w.log10() + self.tx_gain_db + self.rx_gain_db - loss;
        let noise_dbw = 10.0 * (BOLTZMANN_J_K * self.noise_temperature_k * self.bandwidth_hz).log10();
        Ok(10f64.powf((rx_dbw - noise_dbw) / 10.0))
    }
}

/// Free-space path loss in dB.
pub fn fspl_db(distance_km: f64, carrier_hz: f64) -> Result<f64, LinkError> {
    if !(distance_km > 0.0) {
        return Err(LinkError::NonPositiveDistance(distance_km));
    }
    Ok(92.45 + 20.0 * (carrier_hz / 1e9).log10() + 20.0 * distance_km.log10())
}

/// Shannon rate over a `share` of the full bandwidth, given the full-band
/// SNR. The noise power scales with the occupied bandwidth.
pub fn shannon_rate(bandwidth_hz: f64, full_band_snr: f64, share: f64) -> f64 {
    let b = share * bandwidth_hz;
    b * (1.0 + full_band_snr / share).log2()
}

pub fn capacity_bps(params: &LinkBudgetParams, distance_km: f64, bandwidth_share: f64) -> Result<f64, LinkError> {
    if !(bandwidth_share > 0.0 && bandwidth_share <= 1.0) {
        return Err(LinkError::InvalidShare(bandwidth_share));
    }
    if !(distance_km > 0.0) {
        return Err(LinkError::NonPositiveDistance(distance_km));
    }
    if params.link_class == LinkClass::IslLaser {
        return Ok(params.lisl_fixed_rate_bps);
    }
    let snr = params.full_band_snr(distance_km)?;
    Ok(shannon_rate(params.bandwidth_hz, snr, bandwidth_share))
}

pub fn propagation_delay_s(distance_km: f64) -> f64 {
    distance_km / SPEED_OF_LIGHT_KM_S
}

/// One parameter block per link class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkParamSet {
    pub sat_to_air: LinkBudgetParams,
    pub ground_to_air: LinkBudgetParams,
    pub ground_to_sat: LinkBudgetParams,
    pub isl_laser: LinkBudgetParams,
}

impl Default for LinkParamSet {
    fn default() -> Self {
        Self {
            sat_to_air: LinkBudgetParams::sat_to_air(),
            ground_to_air: LinkBudgetParams::ground_to_air(),
            ground_to_sat: LinkBudgetParams::ground_to_sat(),
            isl_laser: LinkBudgetParams::isl_laser(),
        }
    }
}

impl LinkParamSet {
    pub fn get(&self, class: LinkClass) -> &LinkBudgetParams {
        match class {
            LinkClass::SatToAir => &self.sat_to_air,
            LinkClass::GroundToAir => &self.ground_to_air,
            LinkClass::GroundToSat => &self.ground_to_sat,
            LinkClass::IslLaser => &self.isl_laser,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for class in LinkClass::ALL {
            let field = format!("link_params.{class}");
            let params = self.get(class);
            if params.link_class != class {
                return Err(ConfigError::field(format!("{field}.link_class"), format!("must be `{class}`")));
            }
            params.validate(&field)?;
        }
        Ok(())
    }
}
