//! Within-step torque: the constraint-preserving feedforward `u*` and the
//! input-output linearizing feedback around it.

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::constraints::{Constraint, Matrix6, OutputEval};
use crate::error::{Error, Result};
use crate::model::{self, Dynamics};
use crate::params::RobotParams;
use crate::state::{StanceLeg, Vector6, Vector8};

/// Condition number above which the decoupling matrix is treated as singular.
pub const MAX_DECOUPLING_CONDITION: f64 = 1e6;

/// Output error dynamics `ÿ + (Kd/ε) ẏ + (Kp/ε²) y = 0`, with diagonal gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlGains {
    pub kp: [f64; 6],
    pub kd: [f64; 6],
    pub epsilon: f64,
    /// Optional symmetric torque limit [N·m].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturation: Option<f64>,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self { kp: [1.0; 6], kd: [2.0; 6], epsilon: 0.05, saturation: None }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| Err(Error::InvalidParameter { name: name.into(), reason: reason.into() });
        if self.kp.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("kp", "gains must be strictly positive");
        }
        if self.kd.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return bad("kd", "gains must be strictly positive");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("epsilon", "must be strictly positive");
        }
        if let Some(s) = self.saturation {
            if !(s > 0.0) {
                return bad("saturation", "must be strictly positive");
            }
        }
        Ok(())
    }

    pub fn kp_matrix(&self) -> Matrix6 {
        Matrix6::from_diagonal(&Vector6::from(self.kp))
    }

    pub fn kd_matrix(&self) -> Matrix6 {
        Matrix6::from_diagonal(&Vector6::from(self.kd))
    }
}

/// Torque and the quantities it was computed from.
#[derive(Debug, Clone, Copy)]
pub struct ControlEval {
    pub u: Vector6,
    pub u_star: Vector6,
    pub output: OutputEval,
    pub dynamics: Dynamics,
}

struct Decoupled {
    lu: na::LU<f64, na::U6, na::U6>,
    u_star: Vector6,
    output: OutputEval,
    dynamics: Dynamics,
}

fn decouple(q: &Vector8, dq: &Vector8, c: &Constraint, p: &RobotParams, stance: StanceLeg) -> Result<Decoupled> {
    let dynamics = model::dynamics(q, dq, p, stance);
    let chol = dynamics.d.cholesky().ok_or(Error::SingularDecoupling { cond: f64::INFINITY })?;
    let output = c.output(q, dq);
    let dinv_b = chol.solve(&dynamics.b);
    let dinv_h = chol.solve(&dynamics.h);
    let a: Matrix6 = output.jacobian * dinv_b;
    let sv = a.svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > MAX_DECOUPLING_CONDITION {
        return Err(Error::SingularDecoupling { cond });
    }
    let lu = a.lu();
    let u_star = lu
        .solve(&(output.jacobian * dinv_h - output.drift))
        .ok_or(Error::SingularDecoupling { cond: f64::INFINITY })?;
    Ok(Decoupled { lu, u_star, output, dynamics })
}

/// Feedforward torque that keeps `ÿ = 0`.
pub fn nominal_torque(q: &Vector8, dq: &Vector8, c: &Constraint, p: &RobotParams, stance: StanceLeg) -> Result<Vector6> {
    Ok(decouple(q, dq, c, p, stance)?.u_star)
}

/// `u = u* − (J D⁻¹ B)⁻¹ (Kp/ε² y + Kd/ε ẏ)`, optionally saturated.
pub fn feedback_torque(
    q: &Vector8,
    dq: &Vector8,
    c: &Constraint,
    gains: &ControlGains,
    p: &RobotParams,
    stance: StanceLeg,
) -> Result<ControlEval> {
    let d = decouple(q, dq, c, p, stance)?;
    let e = gains.epsilon;
    let v = gains.kp_matrix() * d.output.y / (e * e) + gains.kd_matrix() * d.output.dy / e;
    let correction = d.lu.solve(&v).ok_or(Error::SingularDecoupling { cond: f64::INFINITY })?;
    let mut u = d.u_star - correction;
    if let Some(limit) = gains.saturation {
        u = u.map(|x| x.clamp(-limit, limit));
    }
    Ok(ControlEval { u, u_star: d.u_star, output: d.output, dynamics: d.dynamics })
}

/// Joint accelerations under a given torque.
pub fn accelerations(dynamics: &Dynamics, u: &Vector6) -> Result<Vector8> {
    dynamics.accelerations(u).ok_or(Error::SingularReducedInertia)
}
