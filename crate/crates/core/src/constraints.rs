//! Virtual constraints: phase variable, Bezier profiles, step-start
//! correction, event term, and the general linear output selection.

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::GaitDesign;
use crate::state::{Vector6, Vector8};

pub type Matrix6 = na::SMatrix<f64, 6, 6>;
pub type OutputMatrix = na::SMatrix<f64, 6, 8>;

/// Gradient of the phase variable with respect to `q`.
pub const THETA_GRADIENT: [f64; 8] = [0.0, -1.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0];

/// Phase variable: pitch of the virtual leg from the stance foot to the hip.
pub fn theta_of(q: &Vector8) -> f64 {
    -q[1] - 0.5 * q[2]
}

pub fn dtheta_of(dq: &Vector8) -> f64 {
    -dq[1] - 0.5 * dq[2]
}

/// Maps reduced coordinates `[q1, θ, q_a]` to `q`.
pub fn from_phase_coordinates(q1: f64, theta: f64, qa: &Vector6) -> Vector8 {
    let mut q = Vector8::zeros();
    q[0] = q1;
    q[2] = qa[0];
    q[1] = -theta - 0.5 * qa[0];
    q.fixed_rows_mut::<5>(3).copy_from(&qa.fixed_rows::<5>(1));
    q
}

/// The constant matrix `T` with `q = T [q1; θ; q_a]`.
pub fn phase_transform() -> na::SMatrix<f64, 8, 8> {
    let mut t = na::SMatrix::<f64, 8, 8>::zeros();
    t[(0, 0)] = 1.0;
    t[(1, 1)] = -1.0;
    t[(1, 2)] = -0.5;
    for k in 2..8 {
        t[(k, k)] = 1.0;
    }
    t
}

pub fn actuated(q: &Vector8) -> Vector6 {
    q.fixed_rows::<6>(2).into()
}

/// Value and first two θ-derivatives of a vector profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Profile {
    pub h: Vector6,
    pub dh: Vector6,
    pub ddh: Vector6,
}

impl Profile {
    pub fn zero() -> Self {
        Self { h: Vector6::zeros(), dh: Vector6::zeros(), ddh: Vector6::zeros() }
    }
}

impl std::ops::Add for Profile {
    type Output = Profile;
    fn add(self, o: Profile) -> Profile {
        Profile { h: self.h + o.h, dh: self.dh + o.dh, ddh: self.ddh + o.ddh }
    }
}

/// Degree-3 Bezier profile `h_d(θ)` for the actuated coordinates.
///
/// Outside `[θ_i, θ_f]` the cubic is continued as a polynomial, which keeps
/// `h`, `h'` and `h''` mutually consistent during perturbed transients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bezier {
    pub alpha: [[f64; 6]; 4],
    pub theta_i: f64,
    pub theta_f: f64,
}

impl Bezier {
    pub fn coefficient(&self, k: usize) -> Vector6 {
        Vector6::from(self.alpha[k])
    }

    pub fn normalized(&self, theta: f64) -> f64 {
        (theta - self.theta_i) / (self.theta_f - self.theta_i)
    }

    pub fn eval(&self, theta: f64) -> Profile {
        let d = self.theta_f - self.theta_i;
        let s = self.normalized(theta);
        let r = 1.0 - s;
        let [a0, a1, a2, a3] = [0, 1, 2, 3].map(|k| self.coefficient(k));
        let h = a0 * (r * r * r) + a1 * (3.0 * s * r * r) + a2 * (3.0 * s * s * r) + a3 * (s * s * s);
        let dh = ((a1 - a0) * (r * r) + (a2 - a1) * (2.0 * s * r) + (a3 - a2) * (s * s)) * (3.0 / d);
        let ddh = ((a2 - a1 * 2.0 + a0) * r + (a3 - a2 * 2.0 + a1) * s) * (6.0 / (d * d));
        Profile { h, dh, ddh }
    }
}

/// Bezier profile matching positions and θ-slopes at both ends of the step.
#[allow(clippy::too_many_arguments)]
pub fn bezier_from_boundary(
    qa_i: &Vector6,
    dqa_i: &Vector6,
    qa_f: &Vector6,
    dqa_f: &Vector6,
    theta_i: f64,
    theta_f: f64,
    dtheta_i: f64,
    dtheta_f: f64,
) -> Result<Bezier> {
    if theta_f == theta_i {
        return Err(Error::DegeneratePhaseInterval(theta_i));
    }
    if dtheta_i == 0.0 || dtheta_f == 0.0 {
        return Err(Error::ZeroPhaseRate);
    }
    let k = (theta_f - theta_i) / 3.0;
    let a1 = qa_i + dqa_i * (k / dtheta_i);
    let a2 = qa_f - dqa_f * (k / dtheta_f);
    let arr = |v: &Vector6| -> [f64; 6] { std::array::from_fn(|i| v[i]) };
    Ok(Bezier { alpha: [arr(qa_i), arr(&a1), arr(&a2), arr(qa_f)], theta_i, theta_f })
}

/// Per-joint polynomial in `θ − θ_start` that is identically zero beyond
/// `theta_end`, joined there with three continuous derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct JunctionPolynomial {
    pub theta_start: f64,
    pub theta_end: f64,
    /// Monomial coefficients, lowest degree first.
    pub coeffs: Vec<Vector6>,
}

impl JunctionPolynomial {
    fn zero(theta_start: f64, theta_end: f64) -> Self {
        Self { theta_start, theta_end, coeffs: vec![Vector6::zeros()] }
    }

    /// Solves for the coefficients from rows of conditions `(x, derivative order)`.
    fn solve(theta_start: f64, theta_end: f64, conditions: &[(f64, usize)], values: &[Vector6]) -> Result<Self> {
        let n = conditions.len();
        let a = na::DMatrix::from_fn(n, n, |r, k| {
            let (x, order) = conditions[r];
            monomial_derivative(k, order, x)
        });
        let lu = a.lu();
        let mut coeffs = vec![Vector6::zeros(); n];
        for joint in 0..6 {
            let b = na::DVector::from_fn(n, |r, _| values[r][joint]);
            let c = lu.solve(&b).ok_or(Error::DegeneratePhaseInterval(theta_start))?;
            for k in 0..n {
                coeffs[k][joint] = c[k];
            }
        }
        Ok(Self { theta_start, theta_end, coeffs })
    }

    pub fn eval(&self, theta: f64) -> Profile {
        if theta >= self.theta_end {
            return Profile::zero();
        }
        let x = theta - self.theta_start;
        let mut p = Profile::zero();
        for (k, c) in self.coeffs.iter().enumerate() {
            p.h += c * monomial_derivative(k, 0, x);
            p.dh += c * monomial_derivative(k, 1, x);
            p.ddh += c * monomial_derivative(k, 2, x);
        }
        p
    }

    /// Third θ-derivative, used to check the junction smoothness.
    pub fn third_derivative(&self, theta: f64) -> Vector6 {
        if theta >= self.theta_end {
            return Vector6::zeros();
        }
        let x = theta - self.theta_start;
        self.coeffs.iter().enumerate().map(|(k, c)| c * monomial_derivative(k, 3, x)).sum()
    }
}

/// `d^order/dx^order x^k`.
fn monomial_derivative(k: usize, order: usize, x: f64) -> f64 {
    if order > k {
        return 0.0;
    }
    let falling: f64 = ((k - order + 1)..=k).map(|v| v as f64).product();
    falling * x.powi((k - order) as i32)
}

/// Quintic that cancels the output error at the start of a step and
/// vanishes from mid-step on.
#[derive(Debug, Clone, PartialEq)]
pub struct StrideCorrection {
    pub y_i: Vector6,
    pub dy_i: Vector6,
    pub poly: JunctionPolynomial,
}

/// Builds the step-start correction. `dy_i` is the time rate of the output
/// error; its θ-slope is `dy_i / θ̇_i`.
pub fn correction_coeffs(
    y_i: &Vector6,
    dy_i: &Vector6,
    theta_i: f64,
    theta_f: f64,
    dtheta_i: f64,
) -> Result<StrideCorrection> {
    if dtheta_i <= 0.0 {
        return Err(Error::ZeroPhaseRate);
    }
    let theta_m = 0.5 * (theta_i + theta_f);
    if theta_m == theta_i {
        return Err(Error::DegeneratePhaseInterval(theta_i));
    }
    let poly = if y_i.iter().chain(dy_i.iter()).all(|v| *v == 0.0) {
        JunctionPolynomial::zero(theta_i, theta_m)
    } else {
        let m = theta_m - theta_i;
        let conditions = [(0.0, 0), (0.0, 1), (m, 0), (m, 1), (m, 2), (m, 3)];
        let z = Vector6::zeros();
        let values = [*y_i, dy_i / dtheta_i, z, z, z, z];
        JunctionPolynomial::solve(theta_i, theta_m, &conditions, &values)?
    };
    Ok(StrideCorrection { y_i: *y_i, dy_i: *dy_i, poly })
}

/// Sextic parameterized by `β`: zero with zero slope at step start, equal to
/// `β` at mid-step, and vanishing from `0.1 θ_i + 0.9 θ_f` on.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTerm {
    pub beta: Vector6,
    pub poly: JunctionPolynomial,
}

pub fn event_term_coeffs(beta: &Vector6, theta_i: f64, theta_f: f64) -> Result<EventTerm> {
    let theta_m = 0.5 * (theta_i + theta_f);
    let theta_e = 0.1 * theta_i + 0.9 * theta_f;
    if theta_e == theta_i {
        return Err(Error::DegeneratePhaseInterval(theta_i));
    }
    let poly = if beta.iter().all(|v| *v == 0.0) {
        JunctionPolynomial::zero(theta_i, theta_e)
    } else {
        let (m, e) = (theta_m - theta_i, theta_e - theta_i);
        let conditions = [(0.0, 0), (0.0, 1), (m, 0), (e, 0), (e, 1), (e, 2), (e, 3)];
        let z = Vector6::zeros();
        let values = [z, z, *beta, z, z, z, z];
        JunctionPolynomial::solve(theta_i, theta_e, &conditions, &values)?
    };
    Ok(EventTerm { beta: *beta, poly })
}

/// Clamped cubic spline of a scalar profile over uniform knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spline {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    /// Second derivatives at the knots.
    pub curvatures: Vec<f64>,
}

impl Spline {
    /// Clamped spline with prescribed end slopes.
    pub fn clamped(knots: Vec<f64>, values: Vec<f64>, slope_start: f64, slope_end: f64) -> Self {
        let n = knots.len();
        assert!(n >= 2 && values.len() == n);
        let mut a = na::DMatrix::<f64>::zeros(n, n);
        let mut b = na::DVector::<f64>::zeros(n);
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        a[(0, 0)] = h[0] / 3.0;
        a[(0, 1)] = h[0] / 6.0;
        b[0] = (values[1] - values[0]) / h[0] - slope_start;
        for i in 1..n - 1 {
            a[(i, i - 1)] = h[i - 1] / 6.0;
            a[(i, i)] = (h[i - 1] + h[i]) / 3.0;
            a[(i, i + 1)] = h[i] / 6.0;
            b[i] = (values[i + 1] - values[i]) / h[i] - (values[i] - values[i - 1]) / h[i - 1];
        }
        a[(n - 1, n - 2)] = h[n - 2] / 6.0;
        a[(n - 1, n - 1)] = h[n - 2] / 3.0;
        b[n - 1] = slope_end - (values[n - 1] - values[n - 2]) / h[n - 2];
        let m = a.lu().solve(&b).expect("spline system is diagonally dominant");
        Self { knots, values, curvatures: m.iter().copied().collect() }
    }

    /// Value, slope and curvature. Beyond the knots the end pieces are continued.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.knots.len();
        let i = match self.knots.partition_point(|k| *k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.curvatures[i], self.curvatures[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let v = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d = (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let dd = a * m0 + b * m1;
        (v, d, dd)
    }
}

/// Linear output selection `y = M [q1; θ; q_a] − M q*(θ)`.
///
/// `M = [M1 | Mθ | Ma]`. When `M1 ≠ 0` the nominal stance-roll profile
/// `q1*(θ)` is needed, stored as a spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSelection {
    #[serde(with = "crate::gait::rows")]
    pub m: OutputMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q1_profile: Option<Spline>,
}

impl Default for OutputSelection {
    fn default() -> Self {
        let mut m = OutputMatrix::zeros();
        m.fixed_view_mut::<6, 6>(0, 2).fill_with_identity();
        Self { m, q1_profile: None }
    }
}

impl OutputSelection {
    pub fn m1(&self) -> Vector6 {
        self.m.column(0).into()
    }

    pub fn ma(&self) -> Matrix6 {
        self.m.fixed_view::<6, 6>(0, 2).into()
    }

    pub fn is_default(&self) -> bool {
        *self == Self::default()
    }

    /// Replaces output `row` by a linear combination `c · q` of the joint
    /// coordinates, rewritten on `[q1; θ; q_a]`.
    pub fn set_row_from_joint_coefficients(&mut self, row: usize, c: &Vector8) {
        let mut r = [0.0; 8];
        r[0] = c[0];
        r[1] = -c[1];
        r[2] = c[2] - 0.5 * c[1];
        r[3..8].copy_from_slice(&c.as_slice()[3..8]);
        for (k, v) in r.iter().enumerate() {
            self.m[(row, k)] = *v;
        }
    }

    /// `Ma⁻¹`, rejecting nearly singular selections.
    pub fn ma_inverse(&self) -> Result<Matrix6> {
        let ma = self.ma();
        let sv = ma.svd(false, false).singular_values;
        if sv.min() <= 1e-10 * sv.max().max(1.0) {
            return Err(Error::SingularOutputSelection);
        }
        ma.try_inverse().ok_or(Error::SingularOutputSelection)
    }

    fn q1_star(&self, theta: f64) -> (f64, f64, f64) {
        match &self.q1_profile {
            Some(s) => s.eval(theta),
            None => (0.0, 0.0, 0.0),
        }
    }
}

/// Output evaluation at a state.
#[derive(Debug, Clone, Copy)]
pub struct OutputEval {
    pub y: Vector6,
    pub dy: Vector6,
    /// `∂y/∂q`.
    pub jacobian: OutputMatrix,
    /// Velocity-dependent part of `ÿ`, so that `ÿ = J q̈ + drift`.
    pub drift: Vector6,
}

/// The virtual constraint active during one step: the gait's nominal
/// profile plus optional step-start correction and event term.
#[derive(Debug, Clone)]
pub struct Constraint<'a> {
    pub design: &'a GaitDesign,
    pub correction: Option<StrideCorrection>,
    pub event: Option<EventTerm>,
    ma_inv: Matrix6,
}

impl<'a> Constraint<'a> {
    pub fn nominal(design: &'a GaitDesign) -> Result<Self> {
        let ma_inv = design.selection.ma_inverse()?;
        if !design.selection.m1().iter().all(|v| *v == 0.0) && design.selection.q1_profile.is_none() {
            return Err(Error::InvalidParameter {
                name: "selection.q1_profile".into(),
                reason: "required when the output couples the stance roll".into(),
            });
        }
        Ok(Self { design, correction: None, event: None, ma_inv })
    }

    pub fn with_event(mut self, event: Option<EventTerm>) -> Self {
        self.event = event;
        self
    }

    /// Adds the correction that zeroes `y` and `ẏ` at the post-impact state.
    pub fn corrected_at(mut self, q: &Vector8, dq: &Vector8) -> Result<Self> {
        self.correction = None;
        let out = self.output(q, dq);
        let theta_i = theta_of(q);
        let dtheta_i = dtheta_of(dq);
        let y = self.ma_inv * out.y;
        let dy = self.ma_inv * out.dy;
        self.correction = Some(correction_coeffs(&y, &dy, theta_i, self.design.bezier.theta_f, dtheta_i)?);
        Ok(self)
    }

    pub fn ma_inverse(&self) -> &Matrix6 {
        &self.ma_inv
    }

    /// Actuated-coordinate profile `h_d + h_c + h_s`.
    pub fn qa_profile(&self, theta: f64) -> Profile {
        let mut p = self.design.bezier.eval(theta);
        if let Some(c) = &self.correction {
            p = p + c.poly.eval(theta);
        }
        if let Some(e) = &self.event {
            p = p + e.poly.eval(theta);
        }
        p
    }

    /// `g(θ) = M1 q1*(θ) + Ma h(θ)` and its θ-derivatives; `y = M1 q1 + Ma q_a − g(θ)`.
    fn target(&self, theta: f64) -> Profile {
        let sel = &self.design.selection;
        let (m1, ma) = (sel.m1(), sel.ma());
        let (r, dr, ddr) = sel.q1_star(theta);
        let h = self.qa_profile(theta);
        Profile { h: m1 * r + ma * h.h, dh: m1 * dr + ma * h.dh, ddh: m1 * ddr + ma * h.ddh }
    }

    pub fn output(&self, q: &Vector8, dq: &Vector8) -> OutputEval {
        let sel = &self.design.selection;
        let theta = theta_of(q);
        let dtheta = dtheta_of(dq);
        let g = self.target(theta);
        let mut jacobian = OutputMatrix::zeros();
        jacobian.set_column(0, &sel.m1());
        jacobian.fixed_view_mut::<6, 6>(0, 2).copy_from(&sel.ma());
        for k in 0..8 {
            let c = jacobian.column(k) - g.dh * THETA_GRADIENT[k];
            jacobian.set_column(k, &c);
        }
        let y = sel.m1() * q[0] + sel.ma() * actuated(q) - g.h;
        OutputEval { y, dy: jacobian * dq, jacobian, drift: -g.ddh * (dtheta * dtheta) }
    }

    /// Actuated coordinates implied by `y = 0` at `(q1, θ)`, with their
    /// partial derivatives in θ (first and second) and in `q1`.
    pub fn qa_from_constraint(&self, q1: f64, theta: f64) -> (Vector6, Vector6, Vector6, Vector6) {
        let g = self.target(theta);
        let m1 = self.design.selection.m1();
        let qa = self.ma_inv * (g.h - m1 * q1);
        (qa, self.ma_inv * g.dh, self.ma_inv * g.ddh, -(self.ma_inv * m1))
    }

    /// Full state on the constraint surface from `(q1, θ, q̇1, θ̇)`.
    pub fn embed(&self, q1: f64, theta: f64, dq1: f64, dtheta: f64) -> (Vector8, Vector8) {
        let (qa, d_theta, _, d_q1) = self.qa_from_constraint(q1, theta);
        let dqa = d_theta * dtheta + d_q1 * dq1;
        (from_phase_coordinates(q1, theta, &qa), from_phase_coordinates(dq1, dtheta, &dqa))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::published;
    use proptest::prelude::*;

    fn v6(s: [f64; 6]) -> Vector6 {
        Vector6::from(s)
    }

    #[test]
    fn theta_at_published_final_configuration() {
        let mut q = Vector8::zeros();
        q[1] = -0.34038;
        q[2] = 0.3820;
        assert!((theta_of(&q) - 0.14938).abs() < 1e-12);
        assert_eq!(theta_of(&Vector8::zeros()), 0.0);
    }

    #[test]
    fn constant_boundary_gives_constant_profile() {
        let a = v6([0.1, -0.2, 0.3, 0.0, 0.5, -0.6]);
        let z = Vector6::zeros();
        let b = bezier_from_boundary(&a, &z, &a, &z, -0.1, 0.2, 1.0, 1.0).unwrap();
        for k in 0..4 {
            assert_eq!(b.coefficient(k), a);
        }
        let p = b.eval(0.05);
        assert!((p.h - a).abs().max() < 1e-15 && p.dh.abs().max() < 1e-14);
    }

    #[test]
    fn degenerate_bezier_inputs_are_rejected() {
        let z = Vector6::zeros();
        assert!(matches!(
            bezier_from_boundary(&z, &z, &z, &z, 0.1, 0.1, 1.0, 1.0),
            Err(Error::DegeneratePhaseInterval(_))
        ));
        assert!(matches!(bezier_from_boundary(&z, &z, &z, &z, 0.0, 0.1, 0.0, 1.0), Err(Error::ZeroPhaseRate)));
    }

    #[test]
    fn zero_correction_is_identically_zero() {
        let z = Vector6::zeros();
        let c = correction_coeffs(&z, &z, -0.1, 0.15, 1.2).unwrap();
        for th in [-0.1, -0.05, 0.0, 0.1] {
            assert_eq!(c.poly.eval(th), Profile::zero());
        }
        let e = event_term_coeffs(&z, -0.1, 0.15).unwrap();
        assert_eq!(e.poly.eval(0.0), Profile::zero());
    }

    #[test]
    fn spline_reproduces_cubic() {
        let f = |x: f64| 0.3 * x * x * x - x * x + 0.5 * x - 0.1;
        let df = |x: f64| 0.9 * x * x - 2.0 * x + 0.5;
        let knots: Vec<f64> = (0..11).map(|k| -0.2 + 0.04 * k as f64).collect();
        let values = knots.iter().map(|x| f(*x)).collect();
        let s = Spline::clamped(knots, values, df(-0.2), df(0.2));
        for x in [-0.19, -0.031, 0.0, 0.127, 0.2] {
            let (v, d, _) = s.eval(x);
            assert!((v - f(x)).abs() < 1e-12);
            assert!((d - df(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn nominal_output_vanishes_on_the_orbit_boundary() {
        let g = published::torque_optimal();
        let c = Constraint::nominal(&g).unwrap();
        for (q, dq) in [(g.qi, g.dqi), (g.qf, g.dqf)] {
            let o = c.output(&q, &dq);
            assert!(o.y.abs().max() < 1e-12 && o.dy.abs().max() < 1e-12);
        }
    }

    fn fd_jacobian(c: &Constraint, q: &Vector8) -> OutputMatrix {
        let e = 1e-6;
        let mut j = OutputMatrix::zeros();
        for k in 0..8 {
            let mut a = *q;
            let mut b = *q;
            a[k] += e;
            b[k] -= e;
            let d = (c.output(&a, &Vector8::zeros()).y - c.output(&b, &Vector8::zeros()).y) / (2.0 * e);
            j.set_column(k, &d);
        }
        j
    }

    #[test]
    fn output_jacobian_matches_finite_differences() {
        let g = published::torque_optimal();
        let y4 = published::torque_optimal_y4();
        let q = g.qf * 0.8 + g.qi * 0.2 + Vector8::from_fn(|i, _| 0.01 * i as f64);
        let dq = g.dqi;
        for design in [&g, &y4] {
            let beta = v6([0.01, -0.02, 0.005, 0.0, 0.01, -0.01]);
            let c = Constraint::nominal(design)
                .unwrap()
                .with_event(Some(event_term_coeffs(&beta, g.bezier.theta_i, g.bezier.theta_f).unwrap()))
                .corrected_at(&g.qi, &(g.dqi * 1.1))
                .unwrap();
            let o = c.output(&q, &dq);
            assert!((o.jacobian - fd_jacobian(&c, &q)).abs().max() < 1e-6);
        }
    }

    #[test]
    fn corrected_output_is_zero_at_step_start() {
        let g = published::torque_optimal();
        let q = g.qi + Vector8::from_fn(|i, _| -0.0175 * (i % 3) as f64);
        let dq = g.dqi - Vector8::repeat(0.087);
        let c = Constraint::nominal(&g).unwrap().corrected_at(&q, &dq).unwrap();
        let o = c.output(&q, &dq);
        assert!(o.y.norm() < 1e-12, "{}", o.y.norm());
        assert!(o.dy.norm() < 1e-12, "{}", o.dy.norm());
    }

    #[test]
    fn qa_from_constraint_on_orbit_and_default_selection() {
        let g = published::torque_optimal();
        let c = Constraint::nominal(&g).unwrap();
        let theta = 0.02;
        let (a, ..) = c.qa_from_constraint(0.0, theta);
        let (b, ..) = c.qa_from_constraint(0.1, theta);
        assert_eq!(a, b);
        let y4 = published::torque_optimal_y4();
        let c4 = Constraint::nominal(&y4).unwrap();
        let (q1s, ..) = y4.selection.q1_profile.as_ref().unwrap().eval(theta);
        let (on, ..) = c4.qa_from_constraint(q1s, theta);
        assert!((on - g.bezier.eval(theta).h).abs().max() < 1e-12);
        let dq1 = 0.01;
        let (off, _, _, dq1_partial) = c4.qa_from_constraint(q1s + dq1, theta);
        let expect = -(y4.selection.ma_inverse().unwrap() * y4.selection.m1()) * dq1;
        assert!(((off - on) - expect).abs().max() < 1e-12);
        assert!((dq1_partial * dq1 - expect).abs().max() < 1e-15);
    }

    proptest! {
        #[test]
        fn bezier_boundary_identities(
            qi in prop::array::uniform6(-1.0f64..1.0), dqi in prop::array::uniform6(-3.0f64..3.0),
            qf in prop::array::uniform6(-1.0f64..1.0), dqf in prop::array::uniform6(-3.0f64..3.0),
            thi in -0.3f64..-0.05, span in 0.1f64..0.5, dthi in 0.2f64..2.0, dthf in 0.2f64..2.0,
        ) {
            let thf = thi + span;
            let b = bezier_from_boundary(&v6(qi), &v6(dqi), &v6(qf), &v6(dqf), thi, thf, dthi, dthf).unwrap();
            let s = b.eval(thi);
            let e = b.eval(thf);
            prop_assert!((s.h - v6(qi)).abs().max() < 1e-12);
            prop_assert!((e.h - v6(qf)).abs().max() < 1e-12);
            prop_assert!((s.dh - v6(dqi) / dthi).abs().max() < 1e-9);
            prop_assert!((e.dh - v6(dqf) / dthf).abs().max() < 1e-9);
        }

        #[test]
        fn correction_conditions(
            y in prop::array::uniform6(-0.1f64..0.1), dy in prop::array::uniform6(-1.0f64..1.0),
            thi in -0.3f64..-0.05, span in 0.1f64..0.5, dthi in 0.2f64..2.0,
        ) {
            let thf = thi + span;
            let c = correction_coeffs(&v6(y), &v6(dy), thi, thf, dthi).unwrap();
            let s = c.poly.eval(thi);
            prop_assert!((s.h - v6(y)).abs().max() < 1e-12);
            prop_assert!((s.dh - v6(dy) / dthi).abs().max() < 1e-9);
            let m = 0.5 * (thi + thf) - 1e-13;
            let j = c.poly.eval(m);
            prop_assert!(j.h.abs().max() < 1e-9 && j.dh.abs().max() < 1e-7 && j.ddh.abs().max() < 1e-4);
            prop_assert_eq!(c.poly.eval(m + 2e-13), Profile::zero());
        }

        #[test]
        fn event_term_conditions(
            beta in prop::array::uniform6(-0.1f64..0.1), thi in -0.3f64..-0.05, span in 0.1f64..0.5,
        ) {
            let thf = thi + span;
            let e = event_term_coeffs(&v6(beta), thi, thf).unwrap();
            let s = e.poly.eval(thi);
            prop_assert!(s.h.abs().max() < 1e-14 && s.dh.abs().max() < 1e-12);
            prop_assert!((e.poly.eval(0.5 * (thi + thf)).h - v6(beta)).abs().max() < 1e-12);
            let j = e.poly.eval(0.1 * thi + 0.9 * thf - 1e-13);
            prop_assert!(j.h.abs().max() < 1e-9 && j.dh.abs().max() < 1e-7 && j.ddh.abs().max() < 1e-4);
        }
    }
}
