//! TOML run configuration.
//!
//! ```toml
//! [robot]
//! m3 = 5.5
//!
//! [controller]
//! epsilon = 0.05
//!
//! [simulation]
//! steps = 30
//!
//! [optimizer]
//! criterion = "spectral_radius"
//!
//! [stability]
//! r = 2.0
//! ```
//!
//! Every section and field is optional; missing values take defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControlGains;
use crate::error::{Error, Result};
use crate::optimizer::OptimizationProblem;
use crate::params::RobotParams;
use crate::simulator::SimConfig;
use crate::stability::Perturbations;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySettings {
    pub perturbations: Perturbations,
    /// Input weight of the stride-to-stride LQR (`R = r I`, `Q = I`).
    pub r: f64,
}

impl Default for StabilitySettings {
    fn default() -> Self {
        Self { perturbations: Perturbations::default(), r: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub robot: RobotParams,
    pub controller: ControlGains,
    pub simulation: SimConfig,
    pub optimizer: OptimizationProblem,
    pub stability: StabilitySettings,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Config = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.robot.validate()?;
        self.controller.validate()?;
        self.sim_config().validate()?;
        self.optimizer.validate()?;
        if !(self.stability.r > 0.0 && self.stability.r.is_finite()) {
            return Err(Error::InvalidParameter { name: "stability.r".into(), reason: "must be strictly positive".into() });
        }
        if self.stability.perturbations.state.iter().chain([&self.stability.perturbations.beta]).any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "stability.perturbations".into(),
                reason: "must be strictly positive".into(),
            });
        }
        Ok(())
    }

    /// Simulation settings with the controller gains filled in.
    pub fn sim_config(&self) -> SimConfig {
        SimConfig { gains: self.controller, ..self.simulation }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml_str("").unwrap();
        assert_eq!(c, Config::default());
    }

    #[test]
    fn sections_are_read() {
        let c = Config::from_toml_str(
            "[robot]\nm3 = 6.0\n[controller]\nepsilon = 0.1\n[simulation]\nsteps = 3\ncontroller = \"hzd+dlqr\"\n\
             [optimizer]\ncriterion = \"spectral_radius\"\n[stability]\nr = 10.0\n",
        )
        .unwrap();
        assert_eq!(c.robot.m3, 6.0);
        assert_eq!(c.sim_config().gains.epsilon, 0.1);
        assert_eq!(c.simulation.steps, 3);
        assert_eq!(c.simulation.controller, crate::simulator::ControllerKind::HzdDlqr);
        assert_eq!(c.optimizer.criterion, crate::optimizer::Criterion::SpectralRadius);
        assert_eq!(c.stability.r, 10.0);
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in ["[robot]\nm3 = 0.0\n", "[stability]\nr = -1.0\n", "[optimizer]\nmu = 0.0\n", "[robot]\nmass = 1.0\n"] {
            assert!(Config::from_toml_str(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml_str(&c.to_toml_string().unwrap()).unwrap(), c);
    }
}
