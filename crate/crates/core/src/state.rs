use nalgebra as na;
use serde::{Deserialize, Serialize};

pub type Vector8 = na::SVector<f64, 8>;
pub type Vector6 = na::SVector<f64, 6>;
pub type Matrix8 = na::SMatrix<f64, 8, 8>;

/// Which leg is on the ground.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StanceLeg {
    Leg1,
    Leg2,
}

impl StanceLeg {
    pub fn other(self) -> Self {
        match self {
            StanceLeg::Leg1 => StanceLeg::Leg2,
            StanceLeg::Leg2 => StanceLeg::Leg1,
        }
    }

    /// Sign applied to the hip width: support on leg 2 is modeled as leg 1
    /// with a hip width of −W, which puts the swing leg on the correct side.
    pub fn hip_sign(self) -> f64 {
        match self {
            StanceLeg::Leg1 => 1.0,
            StanceLeg::Leg2 => -1.0,
        }
    }
}

/// Generalized coordinates and velocities in the chart of the current stance leg.
///
/// `q = [q1 .. q8]`: stance-foot roll and pitch (unactuated), stance knee,
/// stance hip pitch and roll, swing hip roll and pitch, swing knee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub q: Vector8,
    pub dq: Vector8,
    pub stance: StanceLeg,
}

impl RobotState {
    pub fn new(q: Vector8, dq: Vector8, stance: StanceLeg) -> Self {
        Self { q, dq, stance }
    }

    /// Left/right mirror image: the same motion expressed for the other
    /// stance leg (roll-type coordinates change sign).
    pub fn mirrored(&self) -> Self {
        Self { q: mirror(&self.q), dq: mirror(&self.dq), stance: self.stance.other() }
    }
}

/// Stance-foot placement in the inertial frame; constant during single support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Yaw of the stance leg about the vertical axis.
    pub yaw: f64,
}

impl Default for FootPose {
    fn default() -> Self {
        Self { x: 0.0, y: 0.0, z: 0.0, yaw: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub state: RobotState,
    pub foot: FootPose,
}

impl ExtendedState {
    /// `q_e = [q; x_st; y_st; z_st; q0_st]`.
    pub fn coordinates(&self) -> na::SVector<f64, 12> {
        let mut qe = na::SVector::<f64, 12>::zeros();
        qe.fixed_rows_mut::<8>(0).copy_from(&self.state.q);
        qe[8] = self.foot.x;
        qe[9] = self.foot.y;
        qe[10] = self.foot.z;
        qe[11] = self.foot.yaw;
        qe
    }

    /// Extended velocities; the stance-foot pose is fixed so its rates are zero.
    pub fn velocities(&self) -> na::SVector<f64, 12> {
        let mut v = na::SVector::<f64, 12>::zeros();
        v.fixed_rows_mut::<8>(0).copy_from(&self.state.dq);
        v
    }
}

/// Signs of the left/right symmetry map on `q`.
pub const MIRROR_SIGNS: [f64; 8] = [-1.0, 1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0];

pub fn mirror(v: &Vector8) -> Vector8 {
    Vector8::from_fn(|i, _| MIRROR_SIGNS[i] * v[i])
}
