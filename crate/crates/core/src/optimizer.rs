//! Periodic gait search over the fifteen final-state parameters.
//!
//! The final configuration is charted by seven free angles; the swing knee
//! is solved so that the swing foot rests on the ground. The problem is
//! solved by SQP with forward-difference gradients, a damped BFGS Hessian,
//! an l1 merit line search, and elastic QP subproblems.

use nalgebra as na;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{dtheta_of, Constraint};
use crate::error::{EvalPhase, Error, Result};
use crate::gait::GaitDesign;
use crate::model;
use crate::params::RobotParams;
use crate::stability::{self, sample_by_phase, Perturbations, Section, ZdState};
use crate::state::{StanceLeg, Vector8};

pub const N_VARS: usize = 15;
pub type DecisionVector = na::SVector<f64, N_VARS>;

/// Index of the coordinate solved from ground contact (swing knee).
pub const CLOSURE_INDEX: usize = 7;

/// Solves the swing knee so the swing foot touches the ground ahead of the
/// stance foot, starting from the value already in `q`.
pub fn close_chain(q: &mut Vector8, p: &RobotParams) -> Result<()> {
    let z = |q: &Vector8| model::swing_foot_position(q, p, StanceLeg::Leg1).z;
    for _ in 0..50 {
        let v = z(q);
        if v.abs() < 1e-14 {
            break;
        }
        let slope = model::swing_height_gradient(q, p, StanceLeg::Leg1)[CLOSURE_INDEX];
        if slope.abs() < 1e-9 {
            return Err(Error::InvalidChain);
        }
        let step = (v / slope).clamp(-0.2, 0.2);
        q[CLOSURE_INDEX] -= step;
    }
    let foot = model::swing_foot_position(q, p, StanceLeg::Leg1);
    if foot.z.abs() > 1e-12 || foot.x <= 0.0 || q[CLOSURE_INDEX].abs() > std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidChain);
    }
    Ok(())
}

/// Packs `(q_f, q̇_f)` into the decision vector (seven angles, eight rates).
pub fn encode(qf: &Vector8, dqf: &Vector8) -> DecisionVector {
    let mut x = DecisionVector::zeros();
    let mut k = 0;
    for i in 0..8 {
        if i != CLOSURE_INDEX {
            x[k] = qf[i];
            k += 1;
        }
    }
    x.fixed_rows_mut::<8>(7).copy_from(dqf);
    x
}

/// Unpacks the decision vector; the closure angle starts from `closure_guess`.
pub fn unpack(x: &DecisionVector, closure_guess: f64, p: &RobotParams) -> Result<(Vector8, Vector8)> {
    let mut q = Vector8::zeros();
    let mut k = 0;
    for i in 0..8 {
        if i == CLOSURE_INDEX {
            q[i] = closure_guess;
        } else {
            q[i] = x[k];
            k += 1;
        }
    }
    close_chain(&mut q, p)?;
    Ok((q, x.fixed_rows::<8>(7).into()))
}

/// Final state and the nominal design it induces.
pub fn decode(x: &DecisionVector, closure_guess: f64, p: &RobotParams) -> Result<GaitDesign> {
    let (qf, dqf) = unpack(x, closure_guess, p)?;
    GaitDesign::from_final_state("optimized", p, qf, dqf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// `(1/L) ∫ u*ᵀu* dt`.
    TorquePerStep,
    /// Spectral radius of the linearized restricted return map.
    SpectralRadius,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqpSettings {
    pub max_iterations: usize,
    /// Relative forward-difference step.
    pub fd_step: f64,
    /// Largest change of any decision variable in one iteration.
    pub max_step: f64,
    pub step_tolerance: f64,
    pub equality_tolerance: f64,
    pub inequality_tolerance: f64,
    /// Weight of the elastic relaxation in the QP subproblem.
    pub elastic_weight: f64,
}

impl Default for SqpSettings {
    fn default() -> Self {
        Self {
            max_iterations: 60,
            fd_step: 1e-6,
            max_step: 0.05,
            step_tolerance: 1e-7,
            equality_tolerance: 1e-5,
            inequality_tolerance: 1e-6,
            elastic_weight: 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationProblem {
    pub criterion: Criterion,
    pub mu: f64,
    /// Phase samples for the path constraints.
    pub samples: usize,
    /// Smallest admissible phase rate.
    pub min_dtheta: f64,
    /// When set, require spectral radius `≤ 1 − δ`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_margin: Option<f64>,
    /// Half-width of the box around the initial guess.
    pub box_half_width: [f64; 2],
    pub perturbations: Perturbations,
    pub settings: SqpSettings,
}

impl Default for OptimizationProblem {
    fn default() -> Self {
        Self {
            criterion: Criterion::TorquePerStep,
            mu: 0.6,
            samples: 50,
            min_dtheta: 0.05,
            stability_margin: None,
            box_half_width: [0.3, 3.0],
            perturbations: Perturbations::default(),
            settings: SqpSettings::default(),
        }
    }
}

impl OptimizationProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter { name: "mu".into(), reason: "must be strictly positive".into() });
        }
        if self.samples < 3 {
            return Err(Error::InvalidParameter { name: "samples".into(), reason: "need at least 3".into() });
        }
        Ok(())
    }
}

/// Step metrics of a periodic gait.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitMetrics {
    pub period: f64,
    pub step_length: f64,
    pub step_width: f64,
    pub speed: f64,
    pub yaw_increment: f64,
}

/// Length and width of the step ending at `qf`, in the walking frame.
pub fn step_geometry(design: &GaitDesign) -> (f64, f64) {
    let foot = model::swing_foot_position(&design.qf, &design.params, StanceLeg::Leg1);
    let (s, c) = design.initial_yaw.sin_cos();
    (c * foot.x - s * foot.y, (s * foot.x + c * foot.y).abs())
}

/// Path quantities at one phase sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub theta: f64,
    pub dtheta: f64,
    pub z_sw: f64,
    pub force: [f64; 3],
    pub torque: [f64; 6],
}

impl PathSample {
    pub fn friction_ratio(&self) -> f64 {
        self.force[0].hypot(self.force[1]) / self.force[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub criterion: f64,
    /// `[q1(T) − q1f, q̇1(T) − q̇1f, θ̇(T) − θ̇f]`.
    pub equality: [f64; 3],
    /// Margins, non-negative when feasible: phase rate, swing height,
    /// normal force, friction cone, then the stability margin if requested.
    pub inequality: Vec<f64>,
    pub metrics: GaitMetrics,
    pub torque_cost: f64,
    pub samples: Vec<PathSample>,
}

impl Evaluation {
    pub fn max_equality(&self) -> f64 {
        self.equality.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min_inequality(&self) -> f64 {
        self.inequality.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Integrates one nominal step of the design's zero dynamics to `θ = θ_f`
/// and samples it uniformly in phase.
pub fn nominal_path(design: &GaitDesign, n: usize) -> Result<(stability::ZdTrajectory, Vec<PathSample>)> {
    let c = Constraint::nominal(design)?;
    let start = [design.qi[0], design.theta_i(), design.dqi[0], dtheta_of(&design.dqi)];
    let traj = stability::integrate_zero_dynamics(&c, start, Section::Theta(design.theta_f()), &stability::reduced_options())?;
    let states = sample_by_phase(&traj.solution, design.theta_i(), design.theta_f(), n)?;
    let mut samples = Vec::with_capacity(n);
    for x in states {
        let e = stability::zero_dynamics_rhs(x[0], x[1], x[2], x[3], &c)?;
        let f = model::ground_reaction(&e.q, &e.dq, &e.ddq, &design.params, StanceLeg::Leg1);
        let u = e.torque();
        samples.push(PathSample {
            theta: x[1],
            dtheta: x[3],
            z_sw: model::swing_foot_position(&e.q, &design.params, StanceLeg::Leg1).z,
            force: [f.x, f.y, f.z],
            torque: std::array::from_fn(|i| u[i]),
        });
    }
    Ok((traj, samples))
}

/// Criterion, periodicity residuals and path-constraint margins of a design.
pub fn evaluate_design(design: &GaitDesign, problem: &OptimizationProblem) -> Result<Evaluation> {
    let (traj, samples) = nominal_path(design, problem.samples).map_err(|e| e.in_phase(EvalPhase::Integrate))?;
    let end = traj.end();
    let equality = [end[0] - design.qf[0], end[2] - design.dqf[0], end[3] - dtheta_of(&design.dqf)];
    let (length, width) = step_geometry(design);
    let period = traj.duration();
    let weight = design.params.total_mass() * design.params.g;
    let mut inequality = Vec::with_capacity(4 * samples.len() + 1);
    inequality.extend(samples.iter().map(|s| s.dtheta - problem.min_dtheta));
    let n = samples.len();
    inequality.extend(samples[1..n - 1].iter().map(|s| s.z_sw));
    inequality.extend(samples.iter().map(|s| s.force[2] / weight));
    inequality.extend(samples.iter().map(|s| (problem.mu * s.force[2] - s.force[0].hypot(s.force[1])) / weight));
    let torque_cost = traj.torque_integral() / length;
    let needs_radius = problem.criterion == Criterion::SpectralRadius || problem.stability_margin.is_some();
    let radius = if needs_radius {
        let x = ZdState::from_array(design.final_zd_state());
        let (az, _) = stability::jacobians(design, &x, &problem.perturbations, false, None)
            .map_err(|e| e.in_phase(EvalPhase::Stability))?;
        stability::spectral_radius(&az)
    } else {
        f64::NAN
    };
    if let Some(delta) = problem.stability_margin {
        inequality.push(1.0 - delta - radius);
    }
    let criterion = match problem.criterion {
        Criterion::TorquePerStep => torque_cost,
        Criterion::SpectralRadius => radius,
    };
    Ok(Evaluation {
        criterion,
        equality,
        inequality,
        metrics: GaitMetrics {
            period,
            step_length: length,
            step_width: width,
            speed: length / period,
            yaw_increment: -2.0 * design.initial_yaw,
        },
        torque_cost,
        samples,
    })
}

pub fn evaluate(x: &DecisionVector, closure_guess: f64, p: &RobotParams, problem: &OptimizationProblem) -> Result<Evaluation> {
    let design = decode(x, closure_guess, p).map_err(|e| e.in_phase(EvalPhase::Decode))?;
    evaluate_design(&design, problem)
}

fn periodicity_residual(x: &DecisionVector, guess: f64, p: &RobotParams) -> Result<na::Vector3<f64>> {
    let design = decode(x, guess, p)?;
    let c = Constraint::nominal(&design)?;
    let start = [design.qi[0], design.theta_i(), design.dqi[0], dtheta_of(&design.dqi)];
    let traj = stability::integrate_zero_dynamics(&c, start, Section::Theta(design.theta_f()), &stability::reduced_options())?;
    let e = traj.end();
    Ok(na::Vector3::new(e[0] - design.qf[0], e[2] - design.dqf[0], e[3] - dtheta_of(&design.dqf)))
}

/// Minimum-norm Gauss-Newton projection of `x` onto the set of exactly
/// periodic decision vectors.
pub fn project_periodic(x: &DecisionVector, guess: f64, p: &RobotParams, max_iterations: usize) -> Result<DecisionVector> {
    let mut x = *x;
    for it in 0..max_iterations {
        let r = periodicity_residual(&x, guess, p)?;
        if r.abs().max() < 1e-12 {
            return Ok(x);
        }
        let h = 1e-7;
        let cols: Vec<Result<na::Vector3<f64>>> = (0..N_VARS)
            .into_par_iter()
            .map(|i| {
                let mut e = DecisionVector::zeros();
                e[i] = h;
                Ok((periodicity_residual(&(x + e), guess, p)? - periodicity_residual(&(x - e), guess, p)?) / (2.0 * h))
            })
            .collect();
        let mut j = na::SMatrix::<f64, 3, N_VARS>::zeros();
        for (i, c) in cols.into_iter().enumerate() {
            j.set_column(i, &c?);
        }
        let y = (j * j.transpose()).lu().solve(&r).ok_or(Error::NoConvergence { iterations: it })?;
        x -= j.transpose() * y;
    }
    if periodicity_residual(&x, guess, p)?.abs().max() < 1e-9 {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iterations: max_iterations })
    }
}

/// Nearest exactly periodic final state to `(q_f, q̇_f)`, moving all
/// fifteen parameters.
pub fn polish(qf: &Vector8, dqf: &Vector8, p: &RobotParams) -> Result<(Vector8, Vector8)> {
    let guess = qf[CLOSURE_INDEX];
    let x = project_periodic(&encode(qf, dqf), guess, p, 15)?;
    unpack(&x, guess, p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub criterion: f64,
    pub max_equality: f64,
    pub min_inequality: f64,
    pub merit: f64,
    pub step_norm: f64,
    pub line_search_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub x: Vec<f64>,
    pub initial_criterion: f64,
    pub evaluation: Evaluation,
    pub history: Vec<IterationRecord>,
    #[serde(skip)]
    pub design: Option<GaitDesign>,
}

struct Point {
    x: DecisionVector,
    eval: Evaluation,
}

fn feasible(e: &Evaluation, s: &SqpSettings) -> bool {
    e.max_equality() <= s.equality_tolerance && e.min_inequality() >= -s.inequality_tolerance
}

fn violation(e: &Evaluation) -> f64 {
    e.equality.iter().map(|v| v.abs()).sum::<f64>() + e.inequality.iter().map(|v| (-v).max(0.0)).sum::<f64>()
}

/// Local SQP from an initial design.
pub fn optimize(initial: &GaitDesign, problem: &OptimizationProblem) -> Result<OptimizationOutcome> {
    problem.validate()?;
    let s = problem.settings;
    let p = initial.params;
    let guess = initial.qf[CLOSURE_INDEX];
    let x0 = encode(&initial.qf, &initial.dqf);
    let mut lower = DecisionVector::zeros();
    let mut upper = DecisionVector::zeros();
    for i in 0..N_VARS {
        let w = if i < 7 { problem.box_half_width[0] } else { problem.box_half_width[1] };
        lower[i] = x0[i] - w;
        upper[i] = x0[i] + w;
    }
    let eval_at = |x: &DecisionVector| evaluate(x, guess, &p, problem);
    let mut cur = Point { x: x0, eval: eval_at(&x0)? };
    let initial_criterion = cur.eval.criterion;
    let n_in = cur.eval.inequality.len();
    let mut hess = na::DMatrix::<f64>::identity(N_VARS, N_VARS);
    let mut penalty: f64 = 10.0;
    let mut history = Vec::new();
    let mut best: Option<Point> = feasible(&cur.eval, &s).then(|| Point { x: cur.x, eval: cur.eval.clone() });
    let mut converged = false;
    let mut iterations = 0;
    let mut grads = gradients(&cur, &eval_at, s.fd_step, n_in)?;
    let mut restarted = false;

    for it in 0..s.max_iterations {
        iterations = it + 1;
        let (grad_f, jac_eq, jac_in) = &grads;
        let qp = solve_qp(&cur, &hess, grad_f, jac_eq, jac_in, &lower, &upper, &s)?;
        let d = qp.step;
        let lambda_max = qp.multipliers_eq.amax().max(qp.multipliers_in.amax());
        penalty = penalty.max(1.5 * lambda_max);
        let merit = |e: &Evaluation| e.criterion + penalty * violation(e);
        let m0 = merit(&cur.eval);
        let dir_deriv = grad_f.dot(&d) - penalty * violation(&cur.eval);
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut ls = 0;
        while alpha > 1e-4 {
            ls += 1;
            let xn = cur.x + d * alpha;
            if let Ok(e) = eval_at(&xn) {
                if merit(&e) <= m0 + 1e-4 * alpha * dir_deriv.min(0.0) {
                    accepted = Some(Point { x: xn, eval: e });
                    break;
                }
            }
            alpha *= 0.5;
        }
        let step_norm = d.amax() * alpha;
        let Some(next) = accepted else {
            log::debug!("line search failed at iteration {it}");
            if d.amax() < s.step_tolerance && feasible(&cur.eval, &s) {
                converged = true;
                break;
            }
            if restarted {
                break;
            }
            hess = na::DMatrix::identity(N_VARS, N_VARS);
            restarted = true;
            continue;
        };
        restarted = false;
        let next = restore(next, &eval_at, guess, &p, &s);
        let next_grads = gradients(&next, &eval_at, s.fd_step, n_in)?;
        // damped BFGS on the Lagrangian gradient
        let grad_lag = |(g, je, ji): &Gradients| -> DecisionVector {
            g + je.transpose() * na::Vector3::from_column_slice(qp.multipliers_eq.as_slice())
                - ji.transpose() * &qp.multipliers_in
        };
        let sv = na::DVector::from_column_slice((next.x - cur.x).as_slice());
        let yv = na::DVector::from_column_slice((grad_lag(&next_grads) - grad_lag(&grads)).as_slice());
        let bs = &hess * &sv;
        let sbs = sv.dot(&bs);
        let sy = sv.dot(&yv);
        if sbs > 1e-16 {
            let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
            let r = &yv * theta + &bs * (1.0 - theta);
            let sr = sv.dot(&r);
            if sr > 1e-16 {
                hess = &hess - &bs * bs.transpose() / sbs + &r * r.transpose() / sr;
            }
        }
        grads = next_grads;
        history.push(IterationRecord {
            iteration: it,
            criterion: next.eval.criterion,
            max_equality: next.eval.max_equality(),
            min_inequality: next.eval.min_inequality(),
            merit: merit(&next.eval),
            step_norm,
            line_search_steps: ls,
        });
        log::info!(
            "sqp {it}: J = {:.6}, eq = {:.2e}, ineq = {:.2e}, step = {:.2e}",
            next.eval.criterion,
            next.eval.max_equality(),
            next.eval.min_inequality(),
            step_norm
        );
        cur = next;
        if feasible(&cur.eval, &s) && best.as_ref().is_none_or(|b| cur.eval.criterion <= b.eval.criterion) {
            best = Some(Point { x: cur.x, eval: cur.eval.clone() });
        }
        if step_norm < s.step_tolerance && feasible(&cur.eval, &s) {
            converged = true;
            break;
        }
    }
    let final_point = best.unwrap_or(cur);
    let mut design = decode(&final_point.x, guess, &p)?;
    design.name = match problem.criterion {
        Criterion::TorquePerStep => "torque-optimized".into(),
        Criterion::SpectralRadius => "stability-optimized".into(),
    };
    Ok(OptimizationOutcome {
        converged,
        iterations,
        x: final_point.x.iter().copied().collect(),
        initial_criterion,
        evaluation: final_point.eval,
        history,
        design: Some(design),
    })
}

/// Replaces an accepted iterate by its periodic projection when that
/// evaluates and reduces the constraint violation.
fn restore<F>(point: Point, eval_at: &F, guess: f64, p: &RobotParams, s: &SqpSettings) -> Point
where
    F: Fn(&DecisionVector) -> Result<Evaluation>,
{
    if point.eval.max_equality() <= s.equality_tolerance {
        return point;
    }
    let Ok(x) = project_periodic(&point.x, guess, p, 4) else { return point };
    if (x - point.x).amax() > s.max_step {
        return point;
    }
    match eval_at(&x) {
        Ok(eval) if violation(&eval) < violation(&point.eval) => Point { x, eval },
        _ => point,
    }
}

type Gradients = (DecisionVector, na::SMatrix<f64, 3, N_VARS>, na::DMatrix<f64>);

fn gradients<F>(cur: &Point, eval_at: &F, fd_step: f64, n_in: usize) -> Result<Gradients>
where
    F: Fn(&DecisionVector) -> Result<Evaluation> + Sync,
{
    let cols: Vec<Result<(f64, [f64; 3], Vec<f64>)>> = (0..N_VARS)
        .into_par_iter()
        .map(|i| {
            let h = fd_step * cur.x[i].abs().max(1.0);
            let mut xp = cur.x;
            xp[i] += h;
            let (e, h) = match eval_at(&xp) {
                Ok(e) => (e, h),
                Err(_) => {
                    let mut xm = cur.x;
                    xm[i] -= h;
                    (eval_at(&xm)?, -h)
                }
            };
            let df = (e.criterion - cur.eval.criterion) / h;
            let deq = std::array::from_fn(|k| (e.equality[k] - cur.eval.equality[k]) / h);
            let din = e.inequality.iter().zip(&cur.eval.inequality).map(|(a, b)| (a - b) / h).collect();
            Ok((df, deq, din))
        })
        .collect();
    let mut g = DecisionVector::zeros();
    let mut jeq = na::SMatrix::<f64, 3, N_VARS>::zeros();
    let mut jin = na::DMatrix::<f64>::zeros(n_in, N_VARS);
    for (i, c) in cols.into_iter().enumerate() {
        let (df, deq, din) = c?;
        g[i] = df;
        for k in 0..3 {
            jeq[(k, i)] = deq[k];
        }
        for (k, v) in din.iter().enumerate().take(n_in) {
            jin[(k, i)] = *v;
        }
    }
    Ok((g, jeq, jin))
}

struct QpSolution {
    step: DecisionVector,
    multipliers_eq: na::DVector<f64>,
    multipliers_in: na::DVector<f64>,
}

/// Elastic QP subproblem
/// `min ½dᵀBd + gᵀd + w(Σv⁺ + Σv⁻ + Σs)` subject to
/// `c_eq + J_eq d = v⁺ − v⁻`, `c_in + J_in d + s ≥ 0`, box and step limits.
#[allow(clippy::too_many_arguments)]
fn solve_qp(
    cur: &Point,
    hess: &na::DMatrix<f64>,
    grad: &DecisionVector,
    jac_eq: &na::SMatrix<f64, 3, N_VARS>,
    jac_in: &na::DMatrix<f64>,
    lower: &DecisionVector,
    upper: &DecisionVector,
    s: &SqpSettings,
) -> Result<QpSolution> {
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT};

    let n_in = jac_in.nrows();
    let n = N_VARS + 6 + n_in;
    let (vp, vm, sl) = (N_VARS, N_VARS + 3, N_VARS + 6);
    let mut pi = Vec::new();
    let mut pj = Vec::new();
    let mut pv = Vec::new();
    for c in 0..N_VARS {
        for r in 0..=c {
            let v = 0.5 * (hess[(r, c)] + hess[(c, r)]);
            if v != 0.0 {
                pi.push(r);
                pj.push(c);
                pv.push(v);
            }
        }
    }
    let pmat = CscMatrix::new_from_triplets(n, n, pi, pj, pv);
    let mut q = vec![s.elastic_weight; n];
    q[..N_VARS].copy_from_slice(grad.as_slice());

    let (mut ai, mut aj, mut av, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut row = 0;
    // equalities: J_eq d − v⁺ + v⁻ = −c_eq
    for k in 0..3 {
        for c in 0..N_VARS {
            ai.push(row);
            aj.push(c);
            av.push(jac_eq[(k, c)]);
        }
        ai.extend([row, row]);
        aj.extend([vp + k, vm + k]);
        av.extend([-1.0, 1.0]);
        b.push(-cur.eval.equality[k]);
        row += 1;
    }
    // inequalities: −J_in d − s + slack = c_in
    for k in 0..n_in {
        for c in 0..N_VARS {
            if jac_in[(k, c)] != 0.0 {
                ai.push(row);
                aj.push(c);
                av.push(-jac_in[(k, c)]);
            }
        }
        ai.push(row);
        aj.push(sl + k);
        av.push(-1.0);
        b.push(cur.eval.inequality[k]);
        row += 1;
    }
    // elastic variables non-negative
    for k in 0..(6 + n_in) {
        ai.push(row);
        aj.push(N_VARS + k);
        av.push(-1.0);
        b.push(0.0);
        row += 1;
    }
    // box and step limits on d
    for c in 0..N_VARS {
        let hi = (upper[c] - cur.x[c]).min(s.max_step).max(0.0);
        let lo = (cur.x[c] - lower[c]).min(s.max_step).max(0.0);
        ai.push(row);
        aj.push(c);
        av.push(1.0);
        b.push(hi);
        row += 1;
        ai.push(row);
        aj.push(c);
        av.push(-1.0);
        b.push(lo);
        row += 1;
    }
    let amat = CscMatrix::new_from_triplets(row, n, ai, aj, av);
    let cones = [ZeroConeT(3), NonnegativeConeT(row - 3)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .build()
        .map_err(|e| Error::IntegratorFailure(format!("QP settings: {e:?}")))?;
    let mut solver = DefaultSolver::new(&pmat, &q, &amat, &b, &cones, settings)
        .map_err(|e| Error::IntegratorFailure(format!("QP setup: {e:?}")))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        st => return Err(Error::IntegratorFailure(format!("QP subproblem status {st:?}"))),
    }
    let x = &solver.solution.x;
    let z = &solver.solution.z;
    Ok(QpSolution {
        step: DecisionVector::from_column_slice(&x[..N_VARS]),
        multipliers_eq: na::DVector::from_column_slice(&z[..3]),
        multipliers_in: na::DVector::from_column_slice(&z[3..3 + n_in]),
    })
}
