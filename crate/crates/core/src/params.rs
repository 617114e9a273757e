use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the five-link biped (MKS).
///
/// Each link is a point mass at its geometric center; the torso mass sits
/// `l3` above the midpoint of the hip axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    #[serde(default = "defaults::g")]
    pub g: f64,
    /// Hip width.
    #[serde(rename = "W", alias = "w", default = "defaults::w")]
    pub w: f64,
    /// Shin length.
    #[serde(rename = "L1", alias = "l1", default = "defaults::l1")]
    pub l1: f64,
    /// Thigh length.
    #[serde(rename = "L2", alias = "l2", default = "defaults::l2")]
    pub l2: f64,
    /// Torso mass offset above the hip midpoint.
    #[serde(rename = "L3", alias = "l3", default = "defaults::l3")]
    pub l3: f64,
    #[serde(default = "defaults::m1")]
    pub m1: f64,
    #[serde(default = "defaults::m2")]
    pub m2: f64,
    #[serde(default = "defaults::m3")]
    pub m3: f64,
}

mod defaults {
    pub fn g() -> f64 {
        9.81
    }
    pub fn w() -> f64 {
        0.15
    }
    pub fn l1() -> f64 {
        0.275
    }
    pub fn l2() -> f64 {
        0.275
    }
    pub fn l3() -> f64 {
        0.05
    }
    pub fn m1() -> f64 {
        0.875
    }
    pub fn m2() -> f64 {
        0.875
    }
    pub fn m3() -> f64 {
        5.5
    }
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            g: defaults::g(),
            w: defaults::w(),
            l1: defaults::l1(),
            l2: defaults::l2(),
            l3: defaults::l3(),
            m1: defaults::m1(),
            m2: defaults::m2(),
            m3: defaults::m3(),
        }
    }
}

impl RobotParams {
    pub fn total_mass(&self) -> f64 {
        2.0 * self.m1 + 2.0 * self.m2 + self.m3
    }

    /// Masses in the order used by the kinematic chain: stance shin, stance
    /// thigh, torso, swing thigh, swing shin.
    pub fn link_masses(&self) -> [f64; 5] {
        [self.m1, self.m2, self.m3, self.m2, self.m1]
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g", self.g),
            ("W", self.w),
            ("L1", self.l1),
            ("L2", self.l2),
            ("L3", self.l3),
            ("m1", self.m1),
            ("m2", self.m2),
            ("m3", self.m3),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: name.to_string(),
                    reason: format!("must be finite and strictly positive, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: RobotParams = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}
