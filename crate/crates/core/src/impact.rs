//! Rigid plastic impact of the swing foot and relabeling of the coordinates
//! into the chart of the new stance leg.

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::ad::{Dual, Real};
use crate::error::{Error, Result};
use crate::kinematics::{self, chain};
use crate::model::{self, Vector3};
use crate::params::RobotParams;
use crate::state::{mirror, ExtendedState, FootPose, RobotState, StanceLeg, Vector8};

/// Allowed swing-foot height at impact.
pub const SURFACE_TOLERANCE: f64 = 1e-6;
/// Condition number above which the impact system is treated as singular.
pub const MAX_IMPACT_CONDITION: f64 = 1e12;

pub type Vector4 = na::SVector<f64, 4>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactResult {
    /// Post-impact coordinates in the chart of the new stance leg.
    pub q_plus: Vector8,
    pub dq_plus: Vector8,
    /// Impulsive wrench on the landing foot: force (3) and yaw moment.
    pub impulse: Vector4,
    pub stance_leg_new: StanceLeg,
    /// Yaw of the new stance leg relative to the old stance frame.
    pub yaw_increment: f64,
    /// New stance-foot position in the old stance-foot frame.
    pub foot_offset: Vector3,
}

impl ImpactResult {
    pub fn state(&self) -> RobotState {
        RobotState::new(self.q_plus, self.dq_plus, self.stance_leg_new)
    }
}

/// Coordinates of the same configuration in the chart of the other leg,
/// from extended coordinates `[q; x; y; z; q0]`.
fn relabel_generic<T: Real>(qe: &[T; 12], p: &RobotParams, stance: StanceLeg) -> ([T; 8], T) {
    let q: [T; 8] = std::array::from_fn(|i| qe[i]);
    let c = chain(&q, p, stance);
    let world = kinematics::mat_mul(&kinematics::rot_z(qe[11]), &c.swing_shin);
    let (yaw, roll, pitch) = kinematics::zxy_angles(&world);
    ([roll, -pitch, q[7], q[6], q[5], q[4], q[3], q[2]], yaw)
}

/// Relabels a double-support configuration into the chart of the other leg.
/// Returns the new coordinates and the yaw of the new stance leg relative
/// to the current stance frame.
pub fn relabel(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> (Vector8, f64) {
    let mut qe = [0.0; 12];
    qe[..8].copy_from_slice(q.as_slice());
    let (qn, yaw) = relabel_generic(&qe, p, stance);
    (Vector8::from(qn), yaw)
}

/// Relabeled coordinates and their rates along extended velocities `dqe`.
fn relabel_with_rates(
    qe: &na::SVector<f64, 12>,
    dqe: &na::SVector<f64, 12>,
    p: &RobotParams,
    stance: StanceLeg,
) -> (Vector8, Vector8, f64) {
    let x: [Dual<1>; 12] = std::array::from_fn(|i| Dual::seeded(qe[i], [dqe[i]]));
    let (qn, yaw) = relabel_generic(&x, p, stance);
    (Vector8::from_fn(|i, _| qn[i].v), Vector8::from_fn(|i, _| qn[i].d[0]), yaw.v)
}

/// Applies the impact map to a pre-impact state on the switching surface.
pub fn impact_map(state: &RobotState, p: &RobotParams) -> Result<ImpactResult> {
    let foot = model::swing_foot_position(&state.q, p, state.stance);
    if foot.z.abs() > SURFACE_TOLERANCE || foot.x <= 0.0 {
        return Err(Error::OffSurface { z_sw: foot.z, x_sw: foot.x });
    }
    impact_unchecked(state, p)
}

/// Impact map without the switching-surface precondition.
pub fn impact_unchecked(state: &RobotState, p: &RobotParams) -> Result<ImpactResult> {
    let ext = ExtendedState { state: *state, foot: FootPose::default() };
    let (de, e) = model::extended_dynamics(&ext, p);
    let mut a = na::SMatrix::<f64, 16, 16>::zeros();
    a.fixed_view_mut::<12, 12>(0, 0).copy_from(&de);
    a.fixed_view_mut::<12, 4>(0, 12).copy_from(&(-e.transpose()));
    a.fixed_view_mut::<4, 12>(12, 0).copy_from(&e);
    let sv = a.svd(false, false).singular_values;
    let cond = sv.max() / sv.min();
    if !cond.is_finite() || cond > MAX_IMPACT_CONDITION {
        return Err(Error::SingularImpactMatrix { cond });
    }
    let qe = ext.coordinates();
    let dqe = ext.velocities();
    let mut rhs = na::SVector::<f64, 16>::zeros();
    rhs.fixed_rows_mut::<12>(0).copy_from(&(de * dqe));
    let sol = a.lu().solve(&rhs).ok_or(Error::SingularImpactMatrix { cond: f64::INFINITY })?;
    let dqe_plus: na::SVector<f64, 12> = sol.fixed_rows::<12>(0).into();
    let impulse: Vector4 = sol.fixed_rows::<4>(12).into();
    let (q_plus, dq_plus, yaw_increment) = relabel_with_rates(&qe, &dqe_plus, p, state.stance);
    Ok(ImpactResult {
        q_plus,
        dq_plus,
        impulse,
        stance_leg_new: state.stance.other(),
        yaw_increment,
        foot_offset: model::swing_foot_position(&state.q, p, state.stance),
    })
}

/// Impact followed by the left/right mirror, so that a Leg1 pre-impact state
/// maps to a Leg1 post-impact state. This is the step-to-step map used by
/// the periodic-gait machinery.
pub fn impact_and_mirror(state: &RobotState, p: &RobotParams) -> Result<(RobotState, ImpactResult)> {
    let r = impact_map(state, p)?;
    Ok((RobotState::new(mirror(&r.q_plus), mirror(&r.dq_plus), state.stance), r))
}
