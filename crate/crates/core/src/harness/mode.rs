use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{AntennaKind, CsiKind};
use crate::error::{Error, Result};
use crate::optimizer::Objective;

/// How the RIS phases are chosen in a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseMode {
    Random,
    Optimized(Objective),
}

/// System under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SystemKind {
    Ris { antenna: AntennaKind, phases: PhaseMode },
    /// Conventional array with `N_A` antennas and no RIS.
    Baseline,
}

/// One evaluated configuration, rendered as `omni/random/ub`,
/// `directional/opt-f1/pcsi` or `baseline/lb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode {
    pub system: SystemKind,
    pub csi: CsiKind,
}

impl Mode {
    pub fn ris(antenna: AntennaKind, phases: PhaseMode, csi: CsiKind) -> Self {
        Self {
            system: SystemKind::Ris { antenna, phases },
            csi,
        }
    }

    pub fn baseline(csi: CsiKind) -> Self {
        Self {
            system: SystemKind::Baseline,
            csi,
        }
    }

    pub fn antenna(&self) -> Option<AntennaKind> {
        match self.system {
            SystemKind::Ris { antenna, .. } => Some(antenna),
            SystemKind::Baseline => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.system {
            SystemKind::Ris { antenna, phases } => {
                let p = match phases {
                    PhaseMode::Random => "random".to_string(),
                    PhaseMode::Optimized(o) => format!("opt-{o}"),
                };
                write!(f, "{}/{p}/{}", antenna.name(), self.csi.name())
            }
            SystemKind::Baseline => write!(f, "baseline/{}", self.csi.name()),
        }
    }
}

fn parse_csi(s: &str) -> Result<CsiKind> {
    match s {
        "pcsi" => Ok(CsiKind::Pcsi),
        "ub" => Ok(CsiKind::Ub),
        "lb" => Ok(CsiKind::Lb),
        other => Err(Error::Config(format!("unknown CSI kind `{other}`"))),
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        match parts.as_slice() {
            ["baseline", csi] => Ok(Mode::baseline(parse_csi(csi)?)),
            [antenna, phases, csi] => {
                let antenna = match *antenna {
                    "omni" => AntennaKind::Omni,
                    "directional" => AntennaKind::Directional,
                    other => return Err(Error::Config(format!("unknown antenna kind `{other}`"))),
                };
                let phases = match phases.strip_prefix("opt-") {
                    Some(obj) => PhaseMode::Optimized(obj.parse()?),
                    None if *phases == "random" => PhaseMode::Random,
                    None => return Err(Error::Config(format!("unknown phase mode `{phases}`"))),
                };
                Ok(Mode::ris(antenna, phases, parse_csi(csi)?))
            }
            _ => Err(Error::Config(format!("malformed mode `{s}`"))),
        }
    }
}

impl Serialize for Mode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        let modes = [
            Mode::ris(AntennaKind::Omni, PhaseMode::Random, CsiKind::Lb),
            Mode::ris(AntennaKind::Directional, PhaseMode::Optimized(Objective::F2), CsiKind::Ub),
            Mode::baseline(CsiKind::Pcsi),
        ];
        for m in modes {
            let label = m.to_string();
            assert_eq!(label.parse::<Mode>().unwrap(), m);
        }
        assert_eq!(modes[1].to_string(), "directional/opt-f2/ub");
        assert!("omni/opt-f3/ub".parse::<Mode>().is_err());
        assert!("baseline".parse::<Mode>().is_err());
    }
}
