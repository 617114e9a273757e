//! Gait files: everything needed to run or analyze one periodic gait.

use std::path::Path;

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::constraints::{bezier_from_boundary, Bezier, OutputSelection};
use crate::error::{Error, Result};
use crate::impact;
use crate::params::RobotParams;
use crate::state::{RobotState, StanceLeg, Vector8};

pub const GAIT_SCHEMA: &str = "hzd3d.gait.v1";

/// Stride-to-stride gain `β = −K (x − x*)` stored with a gait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventGain {
    #[serde(with = "rows")]
    pub k: na::SMatrix<f64, 6, 3>,
    /// Fixed point `[q1, q̇1, θ̇]` of the restricted return map.
    pub x_star: [f64; 3],
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitDesign {
    pub schema: String,
    pub name: String,
    pub params: RobotParams,
    pub bezier: Bezier,
    /// Pre-impact state at the end of the step.
    pub qf: Vector8,
    pub dqf: Vector8,
    /// Post-impact state at the start of the step, mirrored into the Leg1 chart.
    pub qi: Vector8,
    pub dqi: Vector8,
    /// Stance yaw at the start of the step; half the per-step yaw jump, negated.
    pub initial_yaw: f64,
    #[serde(default)]
    pub selection: OutputSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_gain: Option<EventGain>,
}

impl GaitDesign {
    /// Builds the nominal design whose step ends at `(qf, q̇f)`: impact and
    /// mirror give the initial state, and the Bezier profile joins the two.
    pub fn from_final_state(name: &str, params: &RobotParams, qf: Vector8, dqf: Vector8) -> Result<Self> {
        let (start, r) = impact::impact_and_mirror(&RobotState::new(qf, dqf, StanceLeg::Leg1), params)?;
        let (qi, dqi) = (start.q, start.dq);
        let a = |v: &Vector8| -> crate::state::Vector6 { v.fixed_rows::<6>(2).into() };
        let bezier = bezier_from_boundary(
            &a(&qi),
            &a(&dqi),
            &a(&qf),
            &a(&dqf),
            crate::constraints::theta_of(&qi),
            crate::constraints::theta_of(&qf),
            crate::constraints::dtheta_of(&dqi),
            crate::constraints::dtheta_of(&dqf),
        )?;
        Ok(Self {
            schema: GAIT_SCHEMA.to_string(),
            name: name.to_string(),
            params: *params,
            bezier,
            qf,
            dqf,
            qi,
            dqi,
            initial_yaw: -0.5 * r.yaw_increment,
            selection: OutputSelection::default(),
            event_gain: None,
        })
    }

    pub fn theta_i(&self) -> f64 {
        self.bezier.theta_i
    }

    pub fn theta_f(&self) -> f64 {
        self.bezier.theta_f
    }

    /// Restricted state `[q1, q̇1, θ̇]` at the end of the nominal step.
    pub fn final_zd_state(&self) -> [f64; 3] {
        [self.qf[0], self.dqf[0], crate::constraints::dtheta_of(&self.dqf)]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GaitDesign = serde_json::from_str(s)?;
        if g.schema != GAIT_SCHEMA {
            return Err(Error::Config(format!("unsupported gait schema `{}`", g.schema)));
        }
        g.params.validate()?;
        g.selection.ma_inverse()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Serializes fixed-size matrices as a list of rows.
pub mod rows {
    use nalgebra as na;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer, const R: usize, const C: usize>(
        m: &na::SMatrix<f64, R, C>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..R).map(|r| (0..C).map(|c| m[(r, c)]).collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const R: usize, const C: usize>(
        d: D,
    ) -> Result<na::SMatrix<f64, R, C>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        if rows.len() != R || rows.iter().any(|r| r.len() != C) {
            return Err(D::Error::custom(format!("expected a {R}x{C} matrix")));
        }
        Ok(na::SMatrix::from_fn(|r, c| rows[r][c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::published;

    #[test]
    fn gait_file_round_trips() {
        for g in [published::torque_optimal(), published::torque_optimal_y4()] {
            let back = GaitDesign::from_json(&g.to_json().unwrap()).unwrap();
            assert_eq!(back, g);
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let mut g = published::torque_optimal();
        g.schema = "other".into();
        assert!(GaitDesign::from_json(&g.to_json().unwrap()).is_err());
    }
}
