//! Zero dynamics, restricted return map on the switching surface, its
//! linearization, and the stride-to-stride LQR gain.

use nalgebra as na;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{event_term_coeffs, from_phase_coordinates, phase_transform, theta_of, Constraint};
use crate::error::{Error, Result};
use crate::gait::{EventGain, GaitDesign};
use crate::impact;
use crate::model::{self, Dynamics};
use crate::ode::{self, Event, OdeOptions, Solution};
use crate::state::{RobotState, StanceLeg, Vector6, Vector8};

pub type Matrix3 = na::Matrix3<f64>;
pub type Vector3 = na::Vector3<f64>;
pub type InputMatrix = na::SMatrix<f64, 3, 6>;
pub type GainMatrix = na::SMatrix<f64, 6, 3>;

/// Point of the switching surface on the zero-dynamics manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZdState {
    pub q1: f64,
    pub dq1: f64,
    pub dtheta: f64,
}

impl ZdState {
    pub fn new(q1: f64, dq1: f64, dtheta: f64) -> Self {
        Self { q1, dq1, dtheta }
    }

    pub fn from_vector(v: &Vector3) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3 {
        Vector3::new(self.q1, self.dq1, self.dtheta)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

/// Full state and accelerations on the zero dynamics.
#[derive(Debug, Clone, Copy)]
pub struct ZdEval {
    pub ddq1: f64,
    pub ddtheta: f64,
    pub q: Vector8,
    pub dq: Vector8,
    pub ddq: Vector8,
    pub dynamics: Dynamics,
}

impl ZdEval {
    /// Torque realizing the motion: the actuated rows of `D q̈ + H`.
    pub fn torque(&self) -> Vector6 {
        let r = self.dynamics.d * self.ddq + self.dynamics.h;
        r.fixed_rows::<6>(2).into()
    }
}

/// Accelerations of `(q1, θ)` with the actuated coordinates slaved to the
/// constraint. Uses the two unactuated rows of `Tᵀ(D q̈ + H) = Tᵀ B u`.
pub fn zero_dynamics_rhs(q1: f64, theta: f64, dq1: f64, dtheta: f64, c: &Constraint) -> Result<ZdEval> {
    let (qa, d_theta, dd_theta, d_q1) = c.qa_from_constraint(q1, theta);
    let q = from_phase_coordinates(q1, theta, &qa);
    let dqa = d_theta * dtheta + d_q1 * dq1;
    let dq = from_phase_coordinates(dq1, dtheta, &dqa);
    let p = &c.design.params;
    let dynamics = model::dynamics(&q, &dq, p, StanceLeg::Leg1);
    let t = phase_transform();
    let a = t.transpose() * dynamics.d * t;
    let b = t.transpose() * dynamics.h;
    let top = a.fixed_view::<2, 6>(0, 2);
    let m = na::Matrix2::new(
        a[(0, 0)] + top.row(0).dot(&d_q1.transpose()),
        a[(0, 1)] + top.row(0).dot(&d_theta.transpose()),
        a[(1, 0)] + top.row(1).dot(&d_q1.transpose()),
        a[(1, 1)] + top.row(1).dot(&d_theta.transpose()),
    );
    let drift = dd_theta * (dtheta * dtheta);
    let rhs = -(na::Vector2::new(b[0], b[1]) + top * drift);
    let det = m.determinant();
    if !det.is_finite() || det.abs() < 1e-12 * m.norm_squared() {
        return Err(Error::SingularReducedInertia);
    }
    let sol = m.lu().solve(&rhs).ok_or(Error::SingularReducedInertia)?;
    let (ddq1, ddtheta) = (sol[0], sol[1]);
    let ddqa = d_theta * ddtheta + d_q1 * ddq1 + drift;
    let ddq = from_phase_coordinates(ddq1, ddtheta, &ddqa);
    Ok(ZdEval { ddq1, ddtheta, q, dq, ddq, dynamics })
}

/// Where a reduced step ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Section {
    /// `θ = θ_f`.
    Theta(f64),
    /// Swing foot touches the ground (`z_sw = 0`, moving down, `x_sw > 0`)
    /// after half of the nominal phase range.
    Ground,
}

/// Reduced state `[q1, θ, q̇1, θ̇, ∫‖u‖² dt]`.
pub type ZdVector = na::SVector<f64, 5>;

#[derive(Debug, Clone)]
pub struct ZdTrajectory {
    pub solution: Solution<5>,
}

impl ZdTrajectory {
    pub fn end(&self) -> ZdVector {
        self.solution.x
    }

    pub fn duration(&self) -> f64 {
        self.solution.t - self.solution.t0()
    }

    pub fn torque_integral(&self) -> f64 {
        self.solution.x[4]
    }

    pub fn end_zd_state(&self) -> ZdState {
        let x = self.end();
        ZdState::new(x[0], x[2], x[3])
    }
}

pub fn reduced_options() -> OdeOptions {
    OdeOptions { rtol: 1e-11, atol: 1e-12, h_max: 0.01, max_steps: 100_000 }
}

/// Maximum duration of a single step before it is declared a failure.
const STEP_HORIZON: f64 = 3.0;

/// Integrates the zero dynamics from `(q1, θ, q̇1, θ̇)` to the section.
pub fn integrate_zero_dynamics(c: &Constraint, start: [f64; 4], section: Section, opts: &OdeOptions) -> Result<ZdTrajectory> {
    let p = c.design.params;
    let rhs = |_t: f64, x: &ZdVector| -> Result<ZdVector> {
        let e = zero_dynamics_rhs(x[0], x[1], x[2], x[3], c)?;
        let u = e.torque();
        Ok(ZdVector::new(x[2], x[3], e.ddq1, e.ddtheta, u.norm_squared()))
    };
    let theta_i = start[1];
    let halfway = theta_i + 0.5 * (c.design.theta_f() - theta_i);
    let theta_section = |_t: f64, x: &ZdVector| match section {
        Section::Theta(tf) => tf - x[1],
        Section::Ground => 0.0,
    };
    let ground = |_t: f64, x: &ZdVector| {
        if x[1] < halfway {
            return 1.0;
        }
        let (qa, ..) = c.qa_from_constraint(x[0], x[1]);
        model::swing_foot_position(&from_phase_coordinates(x[0], x[1], &qa), &p, StanceLeg::Leg1).z
    };
    let ahead = |_t: f64, x: &ZdVector| {
        let (qa, ..) = c.qa_from_constraint(x[0], x[1]);
        model::swing_foot_position(&from_phase_coordinates(x[0], x[1], &qa), &p, StanceLeg::Leg1).x > 0.0
    };
    let always = |_t: f64, _x: &ZdVector| true;
    let event = match section {
        Section::Theta(_) => Event { g: &theta_section, accept: &always, tolerance: 1e-13 },
        Section::Ground => Event { g: &ground, accept: &ahead, tolerance: 1e-13 },
    };
    let x0 = ZdVector::new(start[0], start[1], start[2], start[3], 0.0);
    let observer = |_t: f64, x: &ZdVector| {
        if x[3] <= 0.0 || x[0].abs() > std::f64::consts::FRAC_PI_4 {
            Err(Error::NoReturn)
        } else {
            Ok(())
        }
    };
    let solution = ode::integrate(rhs, 0.0, x0, STEP_HORIZON, opts, Some(&event), observer)?;
    if !solution.event {
        return Err(Error::NoReturn);
    }
    Ok(ZdTrajectory { solution })
}

/// Phase at which the nominal constraint puts the swing foot on the ground
/// for a given stance roll, found by Newton iteration from `θ_f`.
pub fn ground_phase(c: &Constraint, q1: f64) -> Result<f64> {
    let p = c.design.params;
    let z = |theta: f64| {
        let (qa, ..) = c.qa_from_constraint(q1, theta);
        model::swing_foot_position(&from_phase_coordinates(q1, theta, &qa), &p, StanceLeg::Leg1).z
    };
    let mut theta = c.design.theta_f();
    for _ in 0..50 {
        let v = z(theta);
        if v.abs() < 1e-14 {
            return Ok(theta);
        }
        let h = 1e-7;
        let slope = (z(theta + h) - z(theta - h)) / (2.0 * h);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        theta -= v / slope;
    }
    if z(theta).abs() < 1e-10 {
        Ok(theta)
    } else {
        Err(Error::NoReturn)
    }
}

/// Full pre-impact state on the switching surface for a restricted state.
pub fn reconstruct(design: &GaitDesign, xz: &ZdState) -> Result<RobotState> {
    let c = Constraint::nominal(design)?;
    let theta = ground_phase(&c, xz.q1)?;
    let (q, dq) = c.embed(xz.q1, theta, xz.dq1, xz.dtheta);
    Ok(RobotState::new(q, dq, StanceLeg::Leg1))
}

/// Restricted return map: impact, step-start correction, optional event
/// term `β`, and one step of the zero dynamics to the next touchdown.
pub fn restricted_poincare(xz: &ZdState, beta: &Vector6, design: &GaitDesign) -> Result<ZdState> {
    Ok(restricted_step(xz, beta, design, &reduced_options())?.end_zd_state())
}

pub fn restricted_step(xz: &ZdState, beta: &Vector6, design: &GaitDesign, opts: &OdeOptions) -> Result<ZdTrajectory> {
    let pre = reconstruct(design, xz)?;
    let (post, _) = impact::impact_and_mirror(&pre, &design.params)?;
    let theta_i = theta_of(&post.q);
    let event = event_term_coeffs(beta, theta_i, design.theta_f())?;
    let c = Constraint::nominal(design)?.with_event(Some(event)).corrected_at(&post.q, &post.dq)?;
    let start = [post.q[0], theta_i, post.dq[0], crate::constraints::dtheta_of(&post.dq)];
    integrate_zero_dynamics(&c, start, Section::Ground, opts)
}

/// Newton iteration for the fixed point of the restricted map with `β = 0`.
pub fn find_fixed_point(design: &GaitDesign, guess: &ZdState) -> Result<ZdState> {
    let zero = Vector6::zeros();
    let map = |x: &Vector3| -> Result<Vector3> {
        Ok(restricted_poincare(&ZdState::from_vector(x), &zero, design)?.to_vector() - x)
    };
    let mut x = guess.to_vector();
    let steps = Vector3::new(1e-6, 1e-5, 1e-5);
    for _ in 0..20 {
        let r = map(&x)?;
        if r.abs().max() < 1e-11 {
            return Ok(ZdState::from_vector(&x));
        }
        let cols: Vec<Result<Vector3>> = (0..3)
            .into_par_iter()
            .map(|i| {
                let mut e = Vector3::zeros();
                e[i] = steps[i];
                Ok((map(&(x + e))? - map(&(x - e))?) / (2.0 * steps[i]))
            })
            .collect();
        let mut j = Matrix3::zeros();
        for (i, c) in cols.into_iter().enumerate() {
            j.set_column(i, &c?);
        }
        let dx = j.lu().solve(&(-r)).ok_or(Error::NoConvergence { iterations: 0 })?;
        x += dx;
    }
    let r = map(&x)?;
    if r.abs().max() < 1e-8 {
        Ok(ZdState::from_vector(&x))
    } else {
        Err(Error::NoConvergence { iterations: 20 })
    }
}

/// Central-difference step sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbations {
    /// `[Δq1 (rad), Δq̇1 (rad/s), Δθ̇ (rad/s)]`.
    pub state: [f64; 3],
    /// `Δβ` (rad), same for every component.
    pub beta: f64,
}

impl Default for Perturbations {
    fn default() -> Self {
        let d = std::f64::consts::PI / 180.0;
        Self { state: [0.075 * d, 0.375 * d, 0.375 * d], beta: 0.075 * d }
    }
}

impl Perturbations {
    pub fn halved(&self) -> Self {
        Self { state: self.state.map(|v| 0.5 * v), beta: 0.5 * self.beta }
    }
}

/// Eigenvalue as a `(re, im)` pair.
pub type Eigenvalue = (f64, f64);

pub fn eigenvalues(a: &Matrix3) -> Vec<Eigenvalue> {
    let mut ev: Vec<Eigenvalue> = a.complex_eigenvalues().iter().map(|c| (c.re, c.im)).collect();
    ev.sort_by(|x, y| x.0.hypot(x.1).partial_cmp(&y.0.hypot(y.1)).unwrap().reverse());
    ev
}

pub fn spectral_radius(a: &Matrix3) -> f64 {
    eigenvalues(a).iter().map(|(r, i)| r.hypot(*i)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema: String,
    pub gait: String,
    pub x_star: [f64; 3],
    #[serde(with = "crate::gait::rows")]
    pub az: Matrix3,
    pub eigenvalues: Vec<Eigenvalue>,
    pub spectral_radius: f64,
    /// Verdict of the closed loop when a gain is present, else of `A^z`.
    pub stable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub f: Option<InputMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_rows")]
    pub k: Option<GainMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop_eigenvalues: Option<Vec<Eigenvalue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed_loop_spectral_radius: Option<f64>,
    pub perturbations: Perturbations,
}

pub const REPORT_SCHEMA: &str = "hzd3d.stability.v1";

mod opt_rows {
    use nalgebra as na;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const R: usize, const C: usize>(
        m: &Option<na::SMatrix<f64, R, C>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => crate::gait::rows::serialize(m, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const R: usize, const C: usize>(
        d: D,
    ) -> Result<Option<na::SMatrix<f64, R, C>>, D::Error> {
        let rows = Option::<Vec<Vec<f64>>>::deserialize(d)?;
        match rows {
            None => Ok(None),
            Some(rows) => {
                if rows.len() != R || rows.iter().any(|r| r.len() != C) {
                    return Err(serde::de::Error::custom(format!("expected a {R}x{C} matrix")));
                }
                Ok(Some(na::SMatrix::from_fn(|r, c| rows[r][c])))
            }
        }
    }
}

/// Central-difference Jacobians of the restricted map at `x*`: `A^z` in the
/// state and, optionally, `F` in `β`. With a gain, `β = −K (x − x*)` is
/// applied inside the map, giving the closed-loop Jacobian instead.
pub fn jacobians(
    design: &GaitDesign,
    x_star: &ZdState,
    pert: &Perturbations,
    with_f: bool,
    gain: Option<&GainMatrix>,
) -> Result<(Matrix3, Option<InputMatrix>)> {
    let xs = x_star.to_vector();
    let map = |x: &Vector3, beta: &Vector6| -> Result<Vector3> {
        let b = match gain {
            Some(k) => beta - k * (x - xs),
            None => *beta,
        };
        Ok(restricted_poincare(&ZdState::from_vector(x), &b, design)?.to_vector())
    };
    let n_cols = if with_f { 9 } else { 3 };
    let cols: Vec<Result<Vector3>> = (0..n_cols)
        .into_par_iter()
        .map(|i| {
            if i < 3 {
                let mut e = Vector3::zeros();
                e[i] = pert.state[i];
                let b = Vector6::zeros();
                Ok((map(&(xs + e), &b)? - map(&(xs - e), &b)?) / (2.0 * pert.state[i]))
            } else {
                let mut e = Vector6::zeros();
                e[i - 3] = pert.beta;
                Ok((map(&xs, &e)? - map(&xs, &(-e))?) / (2.0 * pert.beta))
            }
        })
        .collect();
    let mut a = Matrix3::zeros();
    let mut f = InputMatrix::zeros();
    for (i, c) in cols.into_iter().enumerate() {
        let c = c?;
        if i < 3 {
            a.set_column(i, &c);
        } else {
            f.set_column(i - 3, &c);
        }
    }
    Ok((a, with_f.then_some(f)))
}

/// Fixed point plus `A^z` (and `F` when requested) with verdict.
pub fn linearize(design: &GaitDesign, pert: &Perturbations, with_f: bool) -> Result<StabilityReport> {
    let x_star = find_fixed_point(design, &ZdState::from_array(design.final_zd_state()))?;
    let (az, f) = jacobians(design, &x_star, pert, with_f, None)?;
    Ok(report(design, &x_star, az, f, pert))
}

/// Like [`linearize`], and when the design carries an event gain also the
/// Jacobian of the return map closed by that gain.
pub fn analyze(design: &GaitDesign, pert: &Perturbations) -> Result<StabilityReport> {
    let rep = linearize(design, pert, design.event_gain.is_some())?;
    match &design.event_gain {
        Some(g) => {
            let (jac, _) = jacobians(design, &ZdState::from_array(g.x_star), pert, false, Some(&g.k))?;
            Ok(rep.with_closed_loop(g.k, &jac))
        }
        None => Ok(rep),
    }
}

fn report(design: &GaitDesign, x: &ZdState, az: Matrix3, f: Option<InputMatrix>, pert: &Perturbations) -> StabilityReport {
    let rho = spectral_radius(&az);
    StabilityReport {
        schema: REPORT_SCHEMA.to_string(),
        gait: design.name.clone(),
        x_star: [x.q1, x.dq1, x.dtheta],
        az,
        eigenvalues: eigenvalues(&az),
        spectral_radius: rho,
        stable: rho < 1.0,
        f,
        k: None,
        closed_loop_eigenvalues: None,
        closed_loop_spectral_radius: None,
        perturbations: *pert,
    }
}

impl StabilityReport {
    /// Adds a DLQR gain and the linear closed-loop spectrum `A − F K`.
    pub fn with_gain(mut self, k: GainMatrix) -> Self {
        if let Some(f) = self.f {
            let cl = self.az - f * k;
            let rho = spectral_radius(&cl);
            self.closed_loop_spectral_radius = Some(rho);
            self.closed_loop_eigenvalues = Some(eigenvalues(&cl));
            self.stable = rho < 1.0;
        }
        self.k = Some(k);
        self
    }

    /// Replaces the closed-loop spectrum by the one of `jac`, the Jacobian of
    /// the return map with the event controller inside it.
    pub fn with_closed_loop(mut self, k: GainMatrix, jac: &Matrix3) -> Self {
        let rho = spectral_radius(jac);
        self.k = Some(k);
        self.closed_loop_eigenvalues = Some(eigenvalues(jac));
        self.closed_loop_spectral_radius = Some(rho);
        self.stable = rho < 1.0;
        self
    }

    pub fn event_gain(&self, r: f64) -> Option<EventGain> {
        self.k.map(|k| EventGain { k, x_star: self.x_star, r })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DlqrSolution {
    pub k: GainMatrix,
    pub p: Matrix3,
    pub iterations: usize,
}

/// Riccati residual `‖P − AᵀPA + AᵀPF(R + FᵀPF)⁻¹FᵀPA − Q‖∞` with `Q = I`, `R = rI`.
pub fn riccati_residual(a: &Matrix3, f: &InputMatrix, r: f64, p: &Matrix3) -> f64 {
    (riccati_update(a, f, r, p).map(|next| (p - next).abs().max())).unwrap_or(f64::INFINITY)
}

fn riccati_update(a: &Matrix3, f: &InputMatrix, r: f64, p: &Matrix3) -> Option<Matrix3> {
    let s = na::SMatrix::<f64, 6, 6>::identity() * r + f.transpose() * p * f;
    let ftpa = f.transpose() * p * a;
    let k = s.cholesky()?.solve(&ftpa);
    let closed = a - f * k;
    let next = Matrix3::identity() + k.transpose() * k * r + closed.transpose() * p * closed;
    Some((next + next.transpose()) * 0.5)
}

/// Discrete LQR with `Q = I₃`, `R = r I₆` by fixed-point Riccati iteration from `P = I`.
pub fn dlqr(a: &Matrix3, f: &InputMatrix, r: f64) -> Result<DlqrSolution> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter { name: "r".into(), reason: "must be strictly positive".into() });
    }
    const MAX_ITERATIONS: usize = 100_000;
    let mut p = Matrix3::identity();
    for it in 1..=MAX_ITERATIONS {
        let next = riccati_update(a, f, r, &p).ok_or(Error::RiccatiDivergence { iterations: it })?;
        if !next.iter().all(|v| v.is_finite()) || next.abs().max() > 1e15 {
            return Err(Error::RiccatiDivergence { iterations: it });
        }
        let delta = (next - p).abs().max();
        p = next;
        if delta < 1e-12 * p.abs().max().max(1.0) {
            let s = na::SMatrix::<f64, 6, 6>::identity() * r + f.transpose() * p * f;
            let k = s
                .cholesky()
                .ok_or(Error::RiccatiDivergence { iterations: it })?
                .solve(&(f.transpose() * p * a));
            if spectral_radius(&(a - f * k)) >= 1.0 {
                return Err(Error::RiccatiDivergence { iterations: it });
            }
            return Ok(DlqrSolution { k, p, iterations: it });
        }
    }
    Err(Error::RiccatiDivergence { iterations: MAX_ITERATIONS })
}

/// Stride-to-stride policy `β = −K (x − x*)`.
pub fn event_policy(xz: &ZdState, x_star: &ZdState, k: &GainMatrix) -> Vector6 {
    -(k * (xz.to_vector() - x_star.to_vector()))
}

/// Linear coefficients on `q` of the frontal distance between the centre
/// of mass and the swing foot, `c_y − y_sw`, about `q`.
pub fn frontal_distance_coefficients(q: &Vector8, p: &crate::params::RobotParams) -> Vector8 {
    model::center_of_mass_jacobian(q, p, StanceLeg::Leg1).row(1).transpose()
        - swing_foot_jacobian_row(q, p, 1)
}

fn swing_foot_jacobian_row(q: &Vector8, p: &crate::params::RobotParams, row: usize) -> Vector8 {
    let x: [crate::ad::Dual<8>; 8] = std::array::from_fn(|i| crate::ad::Dual::variable(q[i], i));
    let c = crate::kinematics::chain(&x, p, StanceLeg::Leg1);
    Vector8::from_column_slice(&c.swing_foot[row].d)
}

/// Number of spline knots for the nominal stance-roll profile.
pub const PROFILE_KNOTS: usize = 50;

/// Copy of `design` whose output `row` is the linear combination `c · q`
/// minus its value along the nominal orbit. The nominal stance-roll
/// profile is sampled from the zero dynamics and stored as a spline.
pub fn reselect_output(design: &GaitDesign, row: usize, c: &Vector8, name: &str) -> Result<GaitDesign> {
    let nominal = GaitDesign { selection: Default::default(), ..design.clone() };
    let con = Constraint::nominal(&nominal)?;
    let start = [design.qi[0], design.theta_i(), design.dqi[0], crate::constraints::dtheta_of(&design.dqi)];
    let traj = integrate_zero_dynamics(&con, start, Section::Theta(design.theta_f()), &reduced_options())?;
    let samples = sample_by_phase(&traj.solution, design.theta_i(), design.theta_f(), PROFILE_KNOTS)?;
    let knots: Vec<f64> = samples.iter().map(|x| x[1]).collect();
    let values: Vec<f64> = samples.iter().map(|x| x[0]).collect();
    let (first, last) = (samples[0], samples[samples.len() - 1]);
    let spline = crate::constraints::Spline::clamped(knots, values, first[2] / first[3], last[2] / last[3]);
    let mut out = design.clone();
    out.name = name.to_string();
    out.selection.set_row_from_joint_coefficients(row, c);
    out.selection.q1_profile = Some(spline);
    out.selection.ma_inverse()?;
    Ok(out)
}

/// States of a reduced trajectory at `n` phase values uniformly spaced
/// over `[theta_a, theta_b]`, located on the dense output.
pub fn sample_by_phase(sol: &Solution<5>, theta_a: f64, theta_b: f64, n: usize) -> Result<Vec<ZdVector>> {
    let (t0, t1) = (sol.t0(), sol.t);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let target = theta_a + (theta_b - theta_a) * k as f64 / (n - 1) as f64;
        let (mut a, mut b) = (t0, t1);
        if sol.eval(a)[1] > target + 1e-12 || sol.eval(b)[1] < target - 1e-12 {
            return Err(Error::NoReturn);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if sol.eval(m)[1] < target {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-15 {
                break;
            }
        }
        out.push(sol.eval(0.5 * (a + b)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::published;

    #[test]
    fn selection_without_roll_coupling_gives_same_zero_dynamics() {
        let g = published::torque_optimal();
        let mut g2 = g.clone();
        g2.selection.m[(1, 3)] = 0.3;
        g2.selection.m[(4, 6)] = -0.2;
        let c1 = Constraint::nominal(&g).unwrap();
        let c2 = Constraint::nominal(&g2).unwrap();
        for (q1, th, dq1, dth) in [(0.01, -0.05, -0.2, 1.0), (-0.02, 0.1, 0.3, 0.8)] {
            let a = zero_dynamics_rhs(q1, th, dq1, dth, &c1).unwrap();
            let b = zero_dynamics_rhs(q1, th, dq1, dth, &c2).unwrap();
            assert!((a.ddq1 - b.ddq1).abs() < 1e-9 && (a.ddtheta - b.ddtheta).abs() < 1e-9);
        }
    }

    #[test]
    fn dlqr_without_input_is_lyapunov() {
        let a = Matrix3::new(0.5, 0.1, 0.0, 0.0, -0.3, 0.2, 0.1, 0.0, 0.4);
        let s = dlqr(&a, &InputMatrix::zeros(), 1.0).unwrap();
        assert_eq!(s.k, GainMatrix::zeros());
        assert!((s.p - (Matrix3::identity() + a.transpose() * s.p * a)).abs().max() < 1e-10);
    }

    #[test]
    fn policy_is_linear() {
        let k = GainMatrix::from_fn(|r, c| (r as f64) - 0.5 * c as f64);
        let xs = ZdState::new(0.01, -0.2, 1.1);
        assert_eq!(event_policy(&xs, &xs, &k), Vector6::zeros());
        let d = Vector3::new(1e-3, -2e-3, 5e-3);
        let one = event_policy(&ZdState::from_vector(&(xs.to_vector() + d)), &xs, &k);
        let two = event_policy(&ZdState::from_vector(&(xs.to_vector() + 2.0 * d)), &xs, &k);
        assert!((two - 2.0 * one).abs().max() < 1e-15);
    }
}
