//! Unit handling. Internally heads are feet, flows cubic feet per second and
//! time seconds; other units only appear at I/O boundaries and inside the GP
//! model (see [`crate::gp_model::ModelConfig::gp_flow_unit`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// US gallons per minute in one cubic foot per second.
pub const GPM_PER_CFS: f64 = 448.831;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowUnit {
    /// Cubic feet per second.
    Cfs,
    /// US gallons per minute.
    Gpm,
}

impl FlowUnit {
    /// How many cfs one unit of `self` is.
    pub fn cfs_per_unit(self) -> f64 {
        match self {
            FlowUnit::Cfs => 1.0,
            FlowUnit::Gpm => 1.0 / GPM_PER_CFS,
        }
    }

    pub fn to_cfs(self, value: f64) -> f64 {
        match self {
            FlowUnit::Cfs => value,
            FlowUnit::Gpm => value / GPM_PER_CFS,
        }
    }

    pub fn from_cfs(self, value: f64) -> f64 {
        match self {
            FlowUnit::Cfs => value,
            FlowUnit::Gpm => value * GPM_PER_CFS,
        }
    }
}

impl fmt::Display for FlowUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowUnit::Cfs => write!(f, "CFS"),
            FlowUnit::Gpm => write!(f, "GPM"),
        }
    }
}

impl FromStr for FlowUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CFS" => Ok(FlowUnit::Cfs),
            "GPM" => Ok(FlowUnit::Gpm),
            other => Err(format!("unsupported flow unit `{other}` (expected CFS or GPM)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gpm_conversion_constant() {
        assert_eq!(FlowUnit::Gpm.to_cfs(448.831), 1.0);
        assert_eq!(FlowUnit::Gpm.from_cfs(1.0), 448.831);
        assert_eq!(FlowUnit::Cfs.to_cfs(2.5), 2.5);
    }

    #[test]
    fn parse_units() {
        assert_eq!("gpm".parse::<FlowUnit>().unwrap(), FlowUnit::Gpm);
        assert_eq!("CFS".parse::<FlowUnit>().unwrap(), FlowUnit::Cfs);
        assert!("LPS".parse::<FlowUnit>().is_err());
    }

    proptest! {
        #[test]
        fn gpm_round_trip(q in -1.0e4f64..1.0e4) {
            let back = FlowUnit::Gpm.from_cfs(FlowUnit::Gpm.to_cfs(q));
            prop_assert!((back - q).abs() <= 1e-12 * q.abs().max(1e-300));
        }
    }
}
