//! Single-support dynamics `D(q) q̈ + H(q, q̇) = B u` of the point-mass chain.

use nalgebra as na;

use crate::ad::{Dual, Taylor2};
use crate::kinematics::{self, chain, Chain};
use crate::params::RobotParams;
use crate::state::{ExtendedState, Matrix8, StanceLeg, Vector8};

pub type Vector3 = na::Vector3<f64>;
pub type Matrix12 = na::SMatrix<f64, 12, 12>;
pub type SwingJacobian = na::SMatrix<f64, 4, 12>;
pub type Actuation = na::SMatrix<f64, 8, 6>;

/// `D`, `H` and the constant actuation map `B = [0₂ₓ₆; I₆]`.
#[derive(Debug, Clone, Copy)]
pub struct Dynamics {
    pub d: Matrix8,
    pub h: Vector8,
    pub b: Actuation,
}

impl Dynamics {
    /// Accelerations for a given input torque.
    pub fn accelerations(&self, u: &na::SVector<f64, 6>) -> Option<Vector8> {
        self.d.cholesky().map(|c| c.solve(&(self.b * u - self.h)))
    }
}

pub fn actuation_matrix() -> Actuation {
    let mut b = Actuation::zeros();
    b.fixed_view_mut::<6, 6>(2, 0).fill_with_identity();
    b
}

fn dual_q<const N: usize>(q: &[f64]) -> [Dual<N>; 8] {
    std::array::from_fn(|i| Dual::variable(q[i], i))
}

fn mass_jacobians(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> [na::SMatrix<f64, 3, 8>; 5] {
    let c: Chain<Dual<8>> = chain(&dual_q::<8>(q.as_slice()), p, stance);
    c.masses.map(|m| na::SMatrix::<f64, 3, 8>::from_fn(|r, k| m[r].d[k]))
}

/// Second time derivative of every mass position along `q + t·q̇ + ½t²·q̈`.
fn mass_accelerations(q: &Vector8, dq: &Vector8, ddq: &Vector8, p: &RobotParams, stance: StanceLeg) -> [Vector3; 5] {
    let path: [Taylor2; 8] = std::array::from_fn(|i| Taylor2::new(q[i], dq[i], 0.5 * ddq[i]));
    let c = chain(&path, p, stance);
    c.masses.map(|m| Vector3::new(m[0].second_derivative(), m[1].second_derivative(), m[2].second_derivative()))
}

pub fn mass_matrix(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> Matrix8 {
    let jac = mass_jacobians(q, p, stance);
    let mut d = Matrix8::zeros();
    for (j, m) in jac.iter().zip(p.link_masses()) {
        d += m * j.transpose() * j;
    }
    d
}

pub fn bias_vector(q: &Vector8, dq: &Vector8, p: &RobotParams, stance: StanceLeg) -> Vector8 {
    dynamics(q, dq, p, stance).h
}

/// Mass matrix and bias vector from one Jacobian pass and one
/// second-order directional pass.
pub fn dynamics(q: &Vector8, dq: &Vector8, p: &RobotParams, stance: StanceLeg) -> Dynamics {
    let jac = mass_jacobians(q, p, stance);
    let acc = mass_accelerations(q, dq, &Vector8::zeros(), p, stance);
    let mut d = Matrix8::zeros();
    let mut h = Vector8::zeros();
    for ((j, a), m) in jac.iter().zip(acc.iter()).zip(p.link_masses()) {
        d += m * j.transpose() * j;
        let gravity = Vector3::new(0.0, 0.0, p.g);
        h += m * j.transpose() * (a + gravity);
    }
    Dynamics { d, h, b: actuation_matrix() }
}

pub fn kinetic_energy(q: &Vector8, dq: &Vector8, p: &RobotParams, stance: StanceLeg) -> f64 {
    0.5 * dq.dot(&(mass_matrix(q, p, stance) * dq))
}

pub fn potential_energy(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> f64 {
    let c = chain(&to_array(q), p, stance);
    c.masses.iter().zip(p.link_masses()).map(|(x, m)| m * p.g * x[2]).sum()
}

fn to_array(q: &Vector8) -> [f64; 8] {
    std::array::from_fn(|i| q[i])
}

pub fn swing_foot_position(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> Vector3 {
    let c = chain(&to_array(q), p, stance);
    Vector3::from(c.swing_foot)
}

/// Swing-foot velocity `J_sw(q) q̇` in the stance-foot frame.
pub fn swing_foot_velocity(q: &Vector8, dq: &Vector8, p: &RobotParams, stance: StanceLeg) -> Vector3 {
    let path: [Dual<1>; 8] = std::array::from_fn(|i| Dual::seeded(q[i], [dq[i]]));
    let c = chain(&path, p, stance);
    Vector3::new(c.swing_foot[0].d[0], c.swing_foot[1].d[0], c.swing_foot[2].d[0])
}

/// Gradient of the swing-foot height with respect to `q`.
pub fn swing_height_gradient(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> Vector8 {
    let c: Chain<Dual<8>> = chain(&dual_q::<8>(q.as_slice()), p, stance);
    Vector8::from_column_slice(&c.swing_foot[2].d)
}

pub fn center_of_mass(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> Vector3 {
    let c = chain(&to_array(q), p, stance);
    let mut acc = Vector3::zeros();
    for (x, m) in c.masses.iter().zip(p.link_masses()) {
        acc += m * Vector3::from(*x);
    }
    acc / p.total_mass()
}

/// Jacobian of the centre of mass, `3 × 8`.
pub fn center_of_mass_jacobian(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> na::SMatrix<f64, 3, 8> {
    let jac = mass_jacobians(q, p, stance);
    let mut acc = na::SMatrix::<f64, 3, 8>::zeros();
    for (j, m) in jac.iter().zip(p.link_masses()) {
        acc += m * j;
    }
    acc / p.total_mass()
}

/// Height of the torso point mass, used for fall detection.
pub fn torso_height(q: &Vector8, p: &RobotParams, stance: StanceLeg) -> f64 {
    chain(&to_array(q), p, stance).masses[2][2]
}

/// Ground reaction force on the stance foot in the inertial frame,
/// `F = m (a_com + g ẑ)`.
pub fn ground_reaction(q: &Vector8, dq: &Vector8, ddq: &Vector8, p: &RobotParams, stance: StanceLeg) -> Vector3 {
    let acc = mass_accelerations(q, dq, ddq, p, stance);
    let mut f = Vector3::new(0.0, 0.0, p.g * p.total_mass());
    for (a, m) in acc.iter().zip(p.link_masses()) {
        f += m * a;
    }
    f
}

/// Extended mass matrix over `q_e = [q; x_st; y_st; z_st; q0_st]` and the
/// Jacobian of `[x_sw, y_sw, z_sw, q0_sw]` with respect to `q_e`.
pub fn extended_dynamics(qe: &ExtendedState, p: &RobotParams) -> (Matrix12, SwingJacobian) {
    let coords = qe.coordinates();
    let x: [Dual<12>; 12] = std::array::from_fn(|i| Dual::variable(coords[i], i));
    let q: [Dual<12>; 8] = std::array::from_fn(|i| x[i]);
    let c = chain(&q, p, qe.state.stance);
    let rz = kinematics::rot_z(x[11]);
    let offset = [x[8], x[9], x[10]];
    let world = |v: &[Dual<12>; 3]| kinematics::add(&kinematics::mat_vec(&rz, v), &offset);

    let mut de = Matrix12::zeros();
    for (pos, m) in c.masses.iter().zip(p.link_masses()) {
        let w = world(pos);
        let j = na::SMatrix::<f64, 3, 12>::from_fn(|r, k| w[r].d[k]);
        de += m * j.transpose() * j;
    }
    let foot = world(&c.swing_foot);
    let yaw = kinematics::yaw_of(&kinematics::mat_mul(&rz, &c.swing_shin));
    let rows = [foot[0], foot[1], foot[2], yaw];
    let e = SwingJacobian::from_fn(|r, k| rows[r].d[k]);
    (de, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::published;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(rng: &mut ChaCha8Rng) -> Vector8 {
        Vector8::from_fn(|_, _| rng.random_range(-0.6..0.6))
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let q = random_q(&mut rng);
            for stance in [StanceLeg::Leg1, StanceLeg::Leg2] {
                let d = mass_matrix(&q, &p, stance);
                assert!((d - d.transpose()).abs().max() < 1e-10);
                let min_eig = d.symmetric_eigenvalues().min();
                assert!(min_eig > 0.0, "min eigenvalue {min_eig}");
            }
        }
    }

    #[test]
    fn mass_matrix_positive_definite_at_published_configuration() {
        let p = RobotParams::default();
        let qf = published::torque_optimal().qf;
        let eig = mass_matrix(&qf, &p, StanceLeg::Leg1).symmetric_eigenvalues();
        assert!(eig.min() > 0.0);
    }

    #[test]
    fn gravity_only_when_at_rest() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_q(&mut rng);
        let h = bias_vector(&q, &Vector8::zeros(), &p, StanceLeg::Leg1);
        let e = 1e-6;
        let grad = Vector8::from_fn(|i, _| {
            let mut a = q;
            let mut b = q;
            a[i] += e;
            b[i] -= e;
            (potential_energy(&a, &p, StanceLeg::Leg1) - potential_energy(&b, &p, StanceLeg::Leg1)) / (2.0 * e)
        });
        assert!((h - grad).abs().max() < 1e-7);
    }

    /// Christoffel-symbol factorization `C(q, q̇)` with `C q̇ = H − ∂V/∂q`,
    /// built from finite differences of `D`.
    fn coriolis_matrix(q: &Vector8, dq: &Vector8, p: &RobotParams) -> Matrix8 {
        let e = 1e-6;
        let dd: Vec<Matrix8> = (0..8)
            .map(|k| {
                let mut a = *q;
                let mut b = *q;
                a[k] += e;
                b[k] -= e;
                (mass_matrix(&a, p, StanceLeg::Leg1) - mass_matrix(&b, p, StanceLeg::Leg1)) / (2.0 * e)
            })
            .collect();
        Matrix8::from_fn(|k, j| {
            (0..8).map(|i| 0.5 * (dd[i][(k, j)] + dd[j][(k, i)] - dd[k][(i, j)]) * dq[i]).sum()
        })
    }

    #[test]
    fn coriolis_factorization_is_skew_compatible() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let q = random_q(&mut rng);
            let dq = Vector8::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let c = coriolis_matrix(&q, &dq, &p);
            let h = bias_vector(&q, &dq, &p, StanceLeg::Leg1);
            let g = bias_vector(&q, &Vector8::zeros(), &p, StanceLeg::Leg1);
            assert!((c * dq - (h - g)).abs().max() < 1e-6);
            // Ḋ along q̇ by central differences
            let e = 1e-6;
            let d_dot = (mass_matrix(&(q + e * dq), &p, StanceLeg::Leg1)
                - mass_matrix(&(q - e * dq), &p, StanceLeg::Leg1))
                / (2.0 * e);
            let n = d_dot - 2.0 * c;
            assert!(dq.dot(&(n * dq)).abs() < 1e-6);
        }
    }

    #[test]
    fn leg2_model_is_mirror_of_leg1() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let dq = Vector8::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let (qm, dqm) = (crate::state::mirror(&q), crate::state::mirror(&dq));
            let k1 = kinetic_energy(&q, &dq, &p, StanceLeg::Leg1);
            let k2 = kinetic_energy(&qm, &dqm, &p, StanceLeg::Leg2);
            assert!((k1 - k2).abs() < 1e-12 * (1.0 + k1));
            let h1 = bias_vector(&q, &dq, &p, StanceLeg::Leg1);
            let h2 = bias_vector(&qm, &dqm, &p, StanceLeg::Leg2);
            assert!((crate::state::mirror(&h1) - h2).abs().max() < 1e-10);
        }
    }

    #[test]
    fn swing_jacobian_matches_position_derivative() {
        let p = RobotParams::default();
        let qf = published::torque_optimal().qf;
        let dq = Vector8::from_fn(|i, _| 0.3 - 0.1 * i as f64);
        let mut qe = ExtendedState {
            state: crate::state::RobotState::new(qf, dq, StanceLeg::Leg1),
            foot: crate::state::FootPose { x: 0.2, y: -0.1, z: 0.0, yaw: 0.05 },
        };
        let (_, e) = extended_dynamics(&qe, &p);
        let v = qe.velocities();
        let h = 1e-6;
        let z_of = |s: &ExtendedState| {
            let f = swing_foot_position(&s.state.q, &p, StanceLeg::Leg1);
            let (c, sn) = (s.foot.yaw.cos(), s.foot.yaw.sin());
            Vector3::new(c * f.x - sn * f.y + s.foot.x, sn * f.x + c * f.y + s.foot.y, f.z + s.foot.z)
        };
        let q0 = qe.state.q;
        qe.state.q = q0 + h * dq;
        let plus = z_of(&qe);
        qe.state.q = q0 - h * dq;
        let minus = z_of(&qe);
        let fd = (plus - minus) / (2.0 * h);
        let ev = e * v;
        for r in 0..3 {
            assert!((ev[r] - fd[r]).abs() < 1e-8, "row {r}: {} vs {}", ev[r], fd[r]);
        }
        let sv = e.svd(false, false).singular_values;
        assert!(sv.min() > 1e-3, "E_sw rank deficient: {sv}");
    }

    #[test]
    fn extended_mass_matrix_reduces_to_pinned_model() {
        let p = RobotParams::default();
        let qf = published::torque_optimal().qf;
        let qe = ExtendedState {
            state: crate::state::RobotState::new(qf, Vector8::zeros(), StanceLeg::Leg1),
            foot: Default::default(),
        };
        let (de, _) = extended_dynamics(&qe, &p);
        let d = mass_matrix(&qf, &p, StanceLeg::Leg1);
        assert!((de.fixed_view::<8, 8>(0, 0) - d).abs().max() < 1e-12);
    }

    #[test]
    fn static_reaction_is_weight() {
        let p = RobotParams::default();
        let z = Vector8::zeros();
        let f = ground_reaction(&published::torque_optimal().qf, &z, &z, &p, StanceLeg::Leg1);
        assert!((f - Vector3::new(0.0, 0.0, 9.0 * 9.81)).norm() < 1e-12);
    }

    #[test]
    fn reaction_matches_momentum_rate() {
        // F = d/dt (m v_com) + m g ẑ, check against differentiated CoM
        let p = RobotParams::default();
        let q = published::torque_optimal().qf;
        let dq = Vector8::from_fn(|i, _| 0.5 - 0.13 * i as f64);
        let ddq = Vector8::from_fn(|i, _| -1.0 + 0.4 * i as f64);
        let f = ground_reaction(&q, &dq, &ddq, &p, StanceLeg::Leg1);
        let h = 1e-4;
        let com = |t: f64| center_of_mass(&(q + t * dq + 0.5 * t * t * ddq), &p, StanceLeg::Leg1);
        let acc = (com(h) - 2.0 * com(0.0) + com(-h)) / (h * h);
        let expect = p.total_mass() * (acc + Vector3::new(0.0, 0.0, p.g));
        assert!((f - expect).norm() < 1e-4);
    }
}
