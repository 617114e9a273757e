//! Frames and sign conventions of the five-link chain.
//!
//! Inertial frame: `x` forward, `y` lateral (left), `z` up. The stance-foot
//! frame has its origin at the contact point. Rotations are composed
//! parent-to-child:
//!
//! ```text
//! stance shin   R_s  = Rx(q1) · Ry(−q2)
//! stance thigh  R_t  = R_s · Ry(−q3)
//! torso         R_b  = R_t · Ry(−q4) · Rx(q5)
//! swing thigh   R_w  = R_b · Rx(−q6) · Ry(q7)
//! swing shin    R_ws = R_w · Ry(q8)
//! ```
//!
//! With these signs `θ = −q2 − q3/2` grows as the hip moves forward, knee
//! flexion is positive on both legs, and reversing the chain maps
//! `[q3..q8]` onto `[q8..q3]` unchanged. The swing hip sits at `+W` along
//! the torso `y` axis for support on leg 1 and at `−W` for leg 2.

use crate::ad::Real;
use crate::params::RobotParams;
use crate::state::StanceLeg;

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub fn rot_x<T: Real>(a: T) -> Mat3<T> {
    let (c, s) = (a.cos(), a.sin());
    let (o, z) = (T::cst(1.0), T::cst(0.0));
    [[o, z, z], [z, c, -s], [z, s, c]]
}

#[inline]
pub fn rot_y<T: Real>(a: T) -> Mat3<T> {
    let (c, s) = (a.cos(), a.sin());
    let (o, z) = (T::cst(1.0), T::cst(0.0));
    [[c, z, s], [z, o, z], [-s, z, c]]
}

#[inline]
pub fn rot_z<T: Real>(a: T) -> Mat3<T> {
    let (c, s) = (a.cos(), a.sin());
    let (o, z) = (T::cst(1.0), T::cst(0.0));
    [[c, -s, z], [s, c, z], [z, z, o]]
}

#[inline]
pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut r = [[T::cst(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    r
}

/// `a · [x, y, z]` for constant link offsets.
#[inline]
pub fn apply<T: Real>(a: &Mat3<T>, v: [f64; 3]) -> Vec3<T> {
    let mut r = [T::cst(0.0); 3];
    for i in 0..3 {
        let mut acc = T::cst(0.0);
        for (j, &vj) in v.iter().enumerate() {
            if vj != 0.0 {
                acc = acc + a[i][j] * vj;
            }
        }
        r[i] = acc;
    }
    r
}

#[inline]
pub fn mat_vec<T: Real>(a: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    let mut r = [T::cst(0.0); 3];
    for i in 0..3 {
        r[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
    }
    r
}

#[inline]
pub fn add<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
fn midpoint<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
    [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5, (a[2] + b[2]) * 0.5]
}

/// Positions and orientations of the chain in the stance-foot frame.
#[derive(Debug, Clone, Copy)]
pub struct Chain<T> {
    /// Point masses: stance shin, stance thigh, torso, swing thigh, swing shin.
    pub masses: [Vec3<T>; 5],
    pub stance_knee: Vec3<T>,
    pub stance_hip: Vec3<T>,
    pub hip_center: Vec3<T>,
    pub swing_hip: Vec3<T>,
    pub swing_knee: Vec3<T>,
    pub swing_foot: Vec3<T>,
    pub torso: Mat3<T>,
    pub swing_shin: Mat3<T>,
}

pub fn chain<T: Real>(q: &[T; 8], p: &RobotParams, stance: StanceLeg) -> Chain<T> {
    let half_w = 0.5 * p.w * stance.hip_sign();
    let r_shin = mat_mul(&rot_x(q[0]), &rot_y(-q[1]));
    let knee = apply(&r_shin, [0.0, 0.0, p.l1]);
    let r_thigh = mat_mul(&r_shin, &rot_y(-q[2]));
    let hip = add(&knee, &apply(&r_thigh, [0.0, 0.0, p.l2]));
    let r_torso = mat_mul(&mat_mul(&r_thigh, &rot_y(-q[3])), &rot_x(q[4]));
    let center = add(&hip, &apply(&r_torso, [0.0, half_w, 0.0]));
    let swing_hip = add(&center, &apply(&r_torso, [0.0, half_w, 0.0]));
    let torso_mass = add(&center, &apply(&r_torso, [0.0, 0.0, p.l3]));
    let r_swing_thigh = mat_mul(&mat_mul(&r_torso, &rot_x(-q[5])), &rot_y(q[6]));
    let swing_knee = add(&swing_hip, &apply(&r_swing_thigh, [0.0, 0.0, -p.l2]));
    let r_swing_shin = mat_mul(&r_swing_thigh, &rot_y(q[7]));
    let swing_foot = add(&swing_knee, &apply(&r_swing_shin, [0.0, 0.0, -p.l1]));
    let zero = [T::cst(0.0); 3];
    Chain {
        masses: [
            midpoint(&zero, &knee),
            midpoint(&knee, &hip),
            torso_mass,
            midpoint(&swing_hip, &swing_knee),
            midpoint(&swing_knee, &swing_foot),
        ],
        stance_knee: knee,
        stance_hip: hip,
        hip_center: center,
        swing_hip,
        swing_knee,
        swing_foot,
        torso: r_torso,
        swing_shin: r_swing_shin,
    }
}

/// Yaw angle `a` of a rotation written as `Rz(a)·Rx(b)·Ry(c)`.
pub fn yaw_of<T: Real>(r: &Mat3<T>) -> T {
    (-r[0][1]).atan2(r[1][1])
}

/// Decompose `R = Rz(yaw)·Rx(roll)·Ry(pitch)` on the branch `|roll| < π/2`.
pub fn zxy_angles<T: Real>(r: &Mat3<T>) -> (T, T, T) {
    let yaw = yaw_of(r);
    let roll = r[2][1].asin();
    let pitch = (-r[2][0]).atan2(r[2][2]);
    (yaw, roll, pitch)
}
