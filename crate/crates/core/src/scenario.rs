//! Scenario files: the whole experiment setup in one TOML document.
//!
//! Every field is optional; omitted fields take the reference values
//! ([`Scenario::default`]).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ConfigError;
use crate::ifc::IfcSettings;
use crate::link_budget::LinkParamSet;
use crate::orbital::{ConstellationConfig, GroundKind, GroundNode};
use crate::topology::TopologySettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub snapshot_duration_s: f64,
    pub seeds: Vec<u64>,
    pub constellation: ConstellationConfig,
    pub topology: TopologySettings,
    pub link_params: LinkParamSet,
    pub ifc: IfcSettings,
    pub ground_stations: Vec<GroundNode>,
    pub aircraft: Vec<GroundNode>,
}

/// Five ground stations spread over China.
pub fn default_ground_stations() -> Vec<GroundNode> {
    vec![
        GroundNode::ground_station("GS-Beijing", 39.9, 116.4),
        GroundNode::ground_station("GS-Kashgar", 39.5, 76.0),
        GroundNode::ground_station("GS-Sanya", 18.25, 109.5),
        GroundNode::ground_station("GS-Harbin", 45.75, 126.65),
        GroundNode::ground_station("GS-HongKong", 22.3, 114.2),
    ]
}

/// Ten A320s at cruise on domestic routes.
pub fn default_aircraft() -> Vec<GroundNode> {
    [
        (35.5, 118.5, 150.0),
        (30.0, 114.0, 0.0),
        (41.5, 100.0, 85.0),
        (30.5, 110.0, 90.0),
        (38.0, 120.0, 200.0),
        (30.0, 106.0, 30.0),
        (33.0, 117.0, 20.0),
        (27.0, 109.0, 180.0),
        (30.0, 97.0, 80.0),
        (27.0, 118.0, 220.0),
    ]
    .iter()
    .enumerate()
    .map(|(i, &(lat, lon, heading))| GroundNode::aircraft(format!("AC-{:02}", i + 1), lat, lon, heading))
    .collect()
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            snapshot_duration_s: 10.0,
            seeds: (0..11).collect(),
            constellation: ConstellationConfig::default(),
            topology: TopologySettings::default(),
            link_params: LinkParamSet::default(),
            ifc: IfcSettings::default(),
            ground_stations: default_ground_stations(),
            aircraft: default_aircraft(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.snapshot_duration_s > 0.0 && self.snapshot_duration_s.is_finite()) {
            return Err(ConfigError::field("snapshot_duration_s", "must be positive"));
        }
        self.constellation.validate()?;
        self.topology.validate()?;
        self.link_params.validate()?;
        self.ifc.validate()?;
        let mut ids = BTreeSet::new();
        for (list, kind, nodes) in [
            ("ground_stations", GroundKind::GroundStation, &self.ground_stations),
            ("aircraft", GroundKind::Aircraft, &self.aircraft),
        ] {
            for (i, node) in nodes.iter().enumerate() {
                let field = format!("{list}[{i}]");
                if node.kind != kind {
                    let expected = match kind {
                        GroundKind::GroundStation => "ground_station",
                        GroundKind::Aircraft => "aircraft",
                    };
                    return Err(ConfigError::field(format!("{field}.kind"), format!("must be `{expected}`")));
                }
                node.validate(&field)?;
                if !ids.insert(node.node_id.as_str()) {
                    return Err(ConfigError::field(
                        format!("{field}.node_id"),
                        format!("duplicate id `{}`", node.node_id),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates scenario text.
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of(text, s.start));
            ScenarioError::Parse { line, message: e.message().to_string() }
        })?;
        scenario.validate().map_err(|e| ScenarioError::Invalid { line: locate(text, &e.field), source: e })?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario is always representable")
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}parse error: {message}", LineTag(*.line))]
    Parse { line: Option<usize>, message: String },
    #[error("{}{source}", LineTag(*.line))]
    Invalid { line: Option<usize>, source: ConfigError },
}

impl ScenarioError {
    pub fn line(&self) -> Option<usize> {
        match self {
            ScenarioError::Io { .. } => None,
            ScenarioError::Parse { line, .. } | ScenarioError::Invalid { line, .. } => *line,
        }
    }
}

struct LineTag(Option<usize>);

impl fmt::Display for LineTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(line) => write!(f, "line {line}: "),
            None => Ok(()),
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    Scenario::from_toml(&text)
}

/// 1-based line of a byte offset.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// `name` or `name[i]` split into its parts.
fn segment(seg: &str) -> (&str, Option<usize>) {
    match seg.split_once('[') {
        Some((name, rest)) => (name, rest.trim_end_matches(']').parse().ok()),
        None => (seg, None),
    }
}

/// Best-effort line of a dotted field path in the source: the key's own
/// line when written explicitly, else its table header. `None` when the
/// value came from a default.
fn locate(text: &str, field: &str) -> Option<usize> {
    let segs: Vec<(&str, Option<usize>)> = field.split('.').map(segment).collect();
    let (key, _) = *segs.last()?;
    let table = &segs[..segs.len() - 1];
    let wanted: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
    let wanted_index = table.last().and_then(|(_, i)| *i);

    let mut in_table = table.is_empty();
    let mut header_line = None;
    let mut occurrences = 0usize;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let array = line.starts_with("[[");
            let name = line.trim_matches(|c| c == '[' || c == ']').trim();
            let parts: Vec<&str> = name.split('.').map(str::trim).collect();
            in_table = false;
            if parts == wanted {
                if array {
                    let hit = wanted_index == Some(occurrences);
                    occurrences += 1;
                    in_table = hit;
                } else {
                    in_table = true;
                }
                if in_table {
                    header_line = Some(n + 1);
                }
            }
            continue;
        }
        if in_table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(n + 1);
                }
            }
        }
    }
    header_line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_scenario() {
        assert_eq!(Scenario::from_toml("").unwrap(), Scenario::default());
    }

    #[test]
    fn defaults_match_the_reference_setup() {
        let s = Scenario::default();
        assert_eq!(s.constellation.total(), 120);
        assert_eq!(s.ground_stations.len(), 5);
        assert_eq!(s.ifc.packet_bits, 1080);
        assert_eq!(s.link_params.sat_to_air.carrier_hz, 15e9);
        assert_eq!(s.link_params.ground_to_air.carrier_hz, 18e9);
        assert_eq!(s.link_params.ground_to_sat.carrier_hz, 30e9);
        assert!(s.seeds.len() >= 10);
        s.validate().unwrap();
    }

    #[test]
    fn bad_inclination_names_field_and_line() {
        let text = "seeds = [1]\n\n[constellation]\nnum_planes = 6\ninclination_deg = 200\n";
        let err = Scenario::from_toml(text).unwrap_err();
        assert_eq!(err.line(), Some(5));
        let msg = err.to_string();
        assert!(msg.contains("constellation.inclination_deg") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        let err = Scenario::from_toml("[topology]\nmax_isl = 3\n").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn aircraft_errors_point_at_the_right_entry() {
        let text = "[[aircraft]]\nnode_id = \"A\"\nkind = \"aircraft\"\nlatitude_deg = 10\nlongitude_deg = 0\n\n\
                    [[aircraft]]\nnode_id = \"B\"\nkind = \"aircraft\"\nlatitude_deg = 100\nlongitude_deg = 0\n";
        let err = Scenario::from_toml(text).unwrap_err();
        assert!(err.to_string().contains("aircraft[1].latitude_deg"), "{err}");
        assert_eq!(err.line(), Some(10));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut s = Scenario::default();
        s.aircraft[1].node_id = s.ground_stations[0].node_id.clone();
        let err = Scenario::from_toml(&s.to_toml()).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn round_trip() {
        let s = Scenario::default();
        let again = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_toml(), s.to_toml());
    }
}
