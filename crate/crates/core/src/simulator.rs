//! Closed-loop simulation of the full hybrid model: single-support flow
//! under a within-step controller, touchdown detection, impact, and leg
//! relabelling, repeated over many steps.
//!
//! Every step is integrated in the chart of leg 1. After an impact the
//! state is mirrored back into that chart and the physical leg and world
//! pose of the stance foot are tracked separately.

use std::path::Path;

use nalgebra as na;
use serde::{Deserialize, Serialize};

use crate::constraints::{dtheta_of, event_term_coeffs, theta_of, Constraint};
use crate::controller::{self, ControlGains};
use crate::error::{Error, Result};
use crate::gait::GaitDesign;
use crate::impact;
use crate::model::{self, Vector3};
use crate::ode::{self, Event, OdeOptions};
use crate::params::RobotParams;
use crate::stability::{event_policy, ZdState};
use crate::state::{RobotState, StanceLeg, Vector6, Vector8};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    /// Nominal virtual constraints, no step-start correction.
    Fixed,
    /// Step-start correction restoring hybrid invariance.
    Hzd,
    /// Corrected constraints plus the stride-to-stride LQR policy.
    #[serde(rename = "hzd+dlqr")]
    HzdDlqr,
    /// Corrected constraints with a reselected output; requires a design
    /// whose output selection differs from the actuated joints.
    Reselected,
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "hzd" => Ok(Self::Hzd),
            "hzd+dlqr" => Ok(Self::HzdDlqr),
            "reselected" => Ok(Self::Reselected),
            _ => Err(Error::Config(format!("unknown controller `{s}`"))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Hzd => "hzd",
            Self::HzdDlqr => "hzd+dlqr",
            Self::Reselected => "reselected",
        })
    }
}

/// Offset added to the initial state, in degrees and degrees per second.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub position_deg: f64,
    pub velocity_deg_s: f64,
}

impl Perturbation {
    pub fn apply(&self, state: &RobotState) -> RobotState {
        let d = std::f64::consts::PI / 180.0;
        RobotState::new(
            state.q.add_scalar(self.position_deg * d),
            state.dq.add_scalar(self.velocity_deg_s * d),
            state.stance,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Largest integrator step [s].
    pub h_max: f64,
    /// Tolerance on `|z_sw|` at a located touchdown [m].
    pub event_tolerance: f64,
    /// Longest admissible step [s].
    pub step_horizon: f64,
    pub max_integrator_steps: usize,
    /// Number of walking steps.
    pub steps: usize,
    pub controller: ControllerKind,
    /// Filled from the `[controller]` section of the run configuration.
    #[serde(skip)]
    pub gains: ControlGains,
    pub perturbation: Perturbation,
    /// Spacing of the recorded samples [s].
    pub record_interval: f64,
    pub min_torso_height: f64,
    /// Largest admissible stance roll [rad].
    pub max_stance_roll: f64,
    /// Fraction of the phase range before which touchdowns are ignored.
    pub min_phase_progress: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: 0.005,
            event_tolerance: 1e-12,
            step_horizon: 2.0,
            max_integrator_steps: 200_000,
            steps: 10,
            controller: ControllerKind::Hzd,
            gains: ControlGains::default(),
            perturbation: Perturbation::default(),
            record_interval: 0.002,
            min_torso_height: 0.3,
            max_stance_roll: std::f64::consts::FRAC_PI_4,
            min_phase_progress: 0.02,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("h_max", self.h_max),
            ("event_tolerance", self.event_tolerance),
            ("step_horizon", self.step_horizon),
            ("record_interval", self.record_interval),
            ("max_stance_roll", self.max_stance_roll),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter { name: name.into(), reason: "must be strictly positive".into() });
            }
        }
        if !(0.0..1.0).contains(&self.min_phase_progress) {
            return Err(Error::InvalidParameter { name: "min_phase_progress".into(), reason: "must lie in [0, 1)".into() });
        }
        self.gains.validate()
    }

    fn ode_options(&self) -> OdeOptions {
        OdeOptions { rtol: self.rtol, atol: self.atol, h_max: self.h_max, max_steps: self.max_integrator_steps }
    }
}

/// Pose of the stance foot in the world and which physical leg it is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldFrame {
    pub stance: StanceLeg,
    pub position: [f64; 3],
    /// Yaw of the chart frame [rad].
    pub yaw: f64,
}

impl Default for WorldFrame {
    fn default() -> Self {
        Self { stance: StanceLeg::Leg1, position: [0.0; 3], yaw: 0.0 }
    }
}

impl WorldFrame {
    /// World coordinates of a point given in the leg-1 chart.
    pub fn to_world(&self, v: &Vector3) -> Vector3 {
        let local = Vector3::new(v.x, self.stance.hip_sign() * v.y, v.z);
        Vector3::from(self.position) + na::Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw) * local
    }
}

/// One simulated step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub frame: WorldFrame,
    pub t: Vec<f64>,
    pub q: Vec<[f64; 8]>,
    pub dq: Vec<[f64; 8]>,
    pub u: Vec<[f64; 6]>,
    /// Stance-foot reaction force in the chart frame [N].
    pub force: Vec<[f64; 3]>,
    pub z_sw: Vec<f64>,
    pub theta: Vec<f64>,
    /// `‖y‖, ‖ẏ‖` right after the step-start correction.
    pub initial_output_norm: [f64; 2],
    /// Event parameters applied during the step.
    pub beta: [f64; 6],
    /// Pre-impact `[q1, θ, q̇1, θ̇]`.
    pub end: [f64; 4],
    pub duration: f64,
    pub step_length: f64,
    pub step_width: f64,
    /// World yaw change of the chart frame at the impact ending the step.
    pub yaw_increment: f64,
}

impl StepRecord {
    /// Pre-impact `(q1, q̇1, θ̇)`.
    pub fn end_zd_state(&self) -> ZdState {
        ZdState::new(self.end[0], self.end[2], self.end[3])
    }
}

/// Step records of a walk and the reason it stopped early, if any.
#[derive(Debug)]
pub struct Walk {
    pub steps: Vec<StepRecord>,
    pub failure: Option<Error>,
}

struct Sample {
    u: Vector6,
    force: Vector3,
}

fn evaluate(x: &na::SVector<f64, 16>, c: &Constraint, gains: &ControlGains) -> Result<(Vector8, Sample)> {
    let q: Vector8 = x.fixed_rows::<8>(0).into();
    let dq: Vector8 = x.fixed_rows::<8>(8).into();
    let p = &c.design.params;
    let e = controller::feedback_torque(&q, &dq, c, gains, p, StanceLeg::Leg1)?;
    let ddq = controller::accelerations(&e.dynamics, &e.u)?;
    let force = model::ground_reaction(&q, &dq, &ddq, p, StanceLeg::Leg1);
    Ok((ddq, Sample { u: e.u, force }))
}

/// Within-step controller for a step starting at `start`.
fn step_controller<'a>(
    design: &'a GaitDesign,
    kind: ControllerKind,
    start: &RobotState,
    beta: &Vector6,
) -> Result<Constraint<'a>> {
    let c = Constraint::nominal(design)?;
    match kind {
        ControllerKind::Fixed => Ok(c),
        ControllerKind::Hzd | ControllerKind::Reselected => c.corrected_at(&start.q, &start.dq),
        ControllerKind::HzdDlqr => {
            let event = event_term_coeffs(beta, theta_of(&start.q), design.theta_f())?;
            c.with_event(Some(event)).corrected_at(&start.q, &start.dq)
        }
    }
}

/// Integrates one step from `start` (leg-1 chart) to touchdown. Returns the
/// record and the pre-impact state.
pub fn simulate_step(
    design: &GaitDesign,
    start: &RobotState,
    beta: &Vector6,
    config: &SimConfig,
    index: usize,
    frame: WorldFrame,
) -> Result<(StepRecord, RobotState)> {
    let p = design.params;
    let c = step_controller(design, config.controller, start, beta)?;
    let out0 = c.output(&start.q, &start.dq);
    let gains = config.gains;
    let theta_start = theta_of(&start.q);
    let theta_gate = theta_start + config.min_phase_progress * (design.theta_f() - theta_start);

    let rhs = |_t: f64, x: &na::SVector<f64, 16>| -> Result<na::SVector<f64, 16>> {
        let (ddq, _) = evaluate(x, &c, &gains)?;
        let mut dx = na::SVector::<f64, 16>::zeros();
        dx.fixed_rows_mut::<8>(0).copy_from(&x.fixed_rows::<8>(8));
        dx.fixed_rows_mut::<8>(8).copy_from(&ddq);
        Ok(dx)
    };
    let q_of = |x: &na::SVector<f64, 16>| -> Vector8 { x.fixed_rows::<8>(0).into() };
    let g = |_t: f64, x: &na::SVector<f64, 16>| {
        let q = q_of(x);
        if theta_of(&q) < theta_gate {
            return 1.0;
        }
        model::swing_foot_position(&q, &p, StanceLeg::Leg1).z
    };
    let accept = |_t: f64, x: &na::SVector<f64, 16>| {
        let q = q_of(x);
        let dq: Vector8 = x.fixed_rows::<8>(8).into();
        model::swing_foot_position(&q, &p, StanceLeg::Leg1).x > 0.0
            && model::swing_foot_velocity(&q, &dq, &p, StanceLeg::Leg1).z < 0.0
    };
    let event = Event { g: &g, accept: &accept, tolerance: config.event_tolerance };
    let observer = |_t: f64, x: &na::SVector<f64, 16>| {
        let q = q_of(x);
        if q[0].abs() > config.max_stance_roll {
            return Err(Error::FallDetected(format!("stance roll {:.3} rad", q[0])));
        }
        let h = model::torso_height(&q, &p, StanceLeg::Leg1);
        if h < config.min_torso_height {
            return Err(Error::FallDetected(format!("torso height {h:.3} m")));
        }
        let dtheta = dtheta_of(&x.fixed_rows::<8>(8).into());
        if dtheta <= 0.0 {
            return Err(Error::FallDetected(format!("phase rate {dtheta:.3} rad/s")));
        }
        Ok(())
    };
    let mut x0 = na::SVector::<f64, 16>::zeros();
    x0.fixed_rows_mut::<8>(0).copy_from(&start.q);
    x0.fixed_rows_mut::<8>(8).copy_from(&start.dq);
    let sol = ode::integrate(rhs, 0.0, x0, config.step_horizon, &config.ode_options(), Some(&event), observer)?;
    if !sol.event {
        return Err(Error::NoImpact { horizon: config.step_horizon });
    }

    let n = (sol.t / config.record_interval).floor() as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| k as f64 * config.record_interval).filter(|t| *t < sol.t).collect();
    times.push(sol.t);
    let mut rec = StepRecord {
        index,
        frame,
        t: Vec::with_capacity(times.len()),
        q: Vec::with_capacity(times.len()),
        dq: Vec::with_capacity(times.len()),
        u: Vec::with_capacity(times.len()),
        force: Vec::with_capacity(times.len()),
        z_sw: Vec::with_capacity(times.len()),
        theta: Vec::with_capacity(times.len()),
        initial_output_norm: [out0.y.norm(), out0.dy.norm()],
        beta: std::array::from_fn(|i| beta[i]),
        end: [0.0; 4],
        duration: sol.t,
        step_length: 0.0,
        step_width: 0.0,
        yaw_increment: 0.0,
    };
    for &t in &times {
        let x = sol.eval(t);
        let (_, s) = evaluate(&x, &c, &gains)?;
        let q = q_of(&x);
        rec.t.push(t);
        rec.q.push(std::array::from_fn(|i| x[i]));
        rec.dq.push(std::array::from_fn(|i| x[8 + i]));
        rec.u.push(std::array::from_fn(|i| s.u[i]));
        rec.force.push([s.force.x, s.force.y, s.force.z]);
        rec.z_sw.push(model::swing_foot_position(&q, &p, StanceLeg::Leg1).z);
        rec.theta.push(theta_of(&q));
    }
    let pre = RobotState::new(q_of(&sol.x), sol.x.fixed_rows::<8>(8).into(), StanceLeg::Leg1);
    rec.end = [pre.q[0], theta_of(&pre.q), pre.dq[0], dtheta_of(&pre.dq)];
    Ok((rec, pre))
}

/// Chains steps from `initial` (a post-impact state in the leg-1 chart).
/// With the LQR controller, `β` is set at each impact from the pre-impact
/// restricted state; the first step uses `β = 0`.
pub fn simulate_walk(design: &GaitDesign, initial: &RobotState, n_steps: usize, config: &SimConfig) -> Walk {
    let mut steps = Vec::with_capacity(n_steps);
    let failure = walk_into(design, initial, n_steps, config, &mut steps).err();
    Walk { steps, failure }
}

fn walk_into(
    design: &GaitDesign,
    initial: &RobotState,
    n_steps: usize,
    config: &SimConfig,
    steps: &mut Vec<StepRecord>,
) -> Result<()> {
    config.validate()?;
    let gain = match config.controller {
        ControllerKind::HzdDlqr => Some(design.event_gain.as_ref().ok_or_else(|| {
            Error::Config("controller `hzd+dlqr` needs a gait file with an event gain".into())
        })?),
        ControllerKind::Reselected if design.selection.is_default() => {
            return Err(Error::Config("controller `reselected` needs a gait file with a reselected output".into()));
        }
        _ => None,
    };
    let mut state = *initial;
    let mut beta = Vector6::zeros();
    let mut frame = WorldFrame::default();
    for k in 0..n_steps {
        let wrap = |e: Error| Error::StepFailed { step: k, source: Box::new(e) };
        let (mut rec, pre) = simulate_step(design, &state, &beta, config, k, frame).map_err(wrap)?;
        let (post, imp) = impact::impact_and_mirror(&pre, &design.params).map_err(wrap)?;
        let (s, c) = (-0.5 * imp.yaw_increment).sin_cos();
        let foot = imp.foot_offset;
        rec.step_length = c * foot.x - s * foot.y;
        rec.step_width = (s * foot.x + c * foot.y).abs();
        let sign = frame.stance.hip_sign();
        rec.yaw_increment = sign * imp.yaw_increment;
        let landing = frame.to_world(&foot);
        frame = WorldFrame { stance: frame.stance.other(), position: landing.into(), yaw: frame.yaw + rec.yaw_increment };
        if let Some(g) = gain {
            beta = event_policy(&rec.end_zd_state(), &ZdState::from_array(g.x_star), &g.k);
        }
        steps.push(rec);
        state = post;
    }
    Ok(())
}

/// Post-impact state of the design's periodic orbit with the configured
/// perturbation applied.
pub fn initial_state(design: &GaitDesign, config: &SimConfig) -> RobotState {
    config.perturbation.apply(&RobotState::new(design.qi, design.dqi, StanceLeg::Leg1))
}

/// Euclidean norm of the end-of-step restricted-state error per step.
pub fn convergence_series(steps: &[StepRecord], x_star: &ZdState) -> Vec<f64> {
    steps.iter().map(|s| (s.end_zd_state().to_vector() - x_star.to_vector()).norm()).collect()
}

pub const SUMMARY_SCHEMA: &str = "hzd3d.walk.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub index: usize,
    pub stance: StanceLeg,
    pub duration: f64,
    pub step_length: f64,
    pub step_width: f64,
    pub speed: f64,
    pub yaw_increment: f64,
    /// Pre-impact `[q1, θ, q̇1, θ̇]`.
    pub end: [f64; 4],
    pub initial_output_norm: [f64; 2],
    pub max_abs_torque: f64,
    pub min_normal_force: f64,
    pub max_friction_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub schema: String,
    pub gait: String,
    pub controller: ControllerKind,
    pub steps: Vec<StepSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Stability report produced alongside, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_report: Option<String>,
}

impl WalkSummary {
    pub fn new(design: &GaitDesign, controller: ControllerKind, walk: &Walk) -> Self {
        let steps = walk
            .steps
            .iter()
            .map(|s| StepSummary {
                index: s.index,
                stance: s.frame.stance,
                duration: s.duration,
                step_length: s.step_length,
                step_width: s.step_width,
                speed: s.step_length / s.duration,
                yaw_increment: s.yaw_increment,
                end: s.end,
                initial_output_norm: s.initial_output_norm,
                max_abs_torque: s.u.iter().flatten().fold(0.0, |a: f64, v| a.max(v.abs())),
                min_normal_force: s.force.iter().map(|f| f[2]).fold(f64::INFINITY, f64::min),
                max_friction_ratio: s.force.iter().map(|f| f[0].hypot(f[1]) / f[2]).fold(0.0, f64::max),
            })
            .collect();
        Self {
            schema: SUMMARY_SCHEMA.into(),
            gait: design.name.clone(),
            controller,
            steps,
            failure: walk.failure.as_ref().map(|e| e.to_string()),
            stability_report: None,
        }
    }
}

const Q_NAMES: [&str; 8] = ["q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8"];

/// Writes `positions.csv`, `velocities.csv`, `torques.csv` and
/// `forces.csv` into `dir`.
pub fn write_csv(steps: &[StepRecord], params: &RobotParams, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let open = |name: &str| csv::Writer::from_path(dir.join(name)).map_err(csv_err);
    let (mut pos, mut vel, mut tor, mut frc) =
        (open("positions.csv")?, open("velocities.csv")?, open("torques.csv")?, open("forces.csv")?);

    let head = |extra: &[String]| -> Vec<String> {
        ["step", "stance", "t", "t_step"].iter().map(|s| s.to_string()).chain(extra.iter().cloned()).collect()
    };
    let mut pos_cols: Vec<String> = Q_NAMES.iter().map(|s| format!("{s}_rad")).collect();
    pos_cols.extend(["theta_rad", "z_sw_m", "com_x_m", "com_y_m", "com_z_m"].map(String::from));
    pos.write_record(head(&pos_cols)).map_err(csv_err)?;
    let mut vel_cols: Vec<String> = Q_NAMES.iter().map(|s| format!("d{s}_rad_s")).collect();
    vel_cols.push("dtheta_rad_s".into());
    vel.write_record(head(&vel_cols)).map_err(csv_err)?;
    tor.write_record(head(&(3..=8).map(|i| format!("u{i}_nm")).collect::<Vec<_>>())).map_err(csv_err)?;
    frc.write_record(head(&["fx_n", "fy_n", "fz_n", "friction_ratio"].map(String::from))).map_err(csv_err)?;

    let mut t0 = 0.0;
    for s in steps {
        let leg = match s.frame.stance {
            StanceLeg::Leg1 => "1",
            StanceLeg::Leg2 => "2",
        };
        for i in 0..s.t.len() {
            let lead = [s.index.to_string(), leg.to_string(), fmt(t0 + s.t[i]), fmt(s.t[i])];
            let q = Vector8::from(s.q[i]);
            let dq = Vector8::from(s.dq[i]);
            let com = s.frame.to_world(&model::center_of_mass(&q, params, StanceLeg::Leg1));
            let mut r: Vec<String> = lead.to_vec();
            r.extend(s.q[i].iter().map(|v| fmt(*v)));
            r.extend([s.theta[i], s.z_sw[i], com.x, com.y, com.z].map(fmt));
            pos.write_record(&r).map_err(csv_err)?;
            let mut r: Vec<String> = lead.to_vec();
            r.extend(s.dq[i].iter().map(|v| fmt(*v)));
            r.push(fmt(dtheta_of(&dq)));
            vel.write_record(&r).map_err(csv_err)?;
            let mut r: Vec<String> = lead.to_vec();
            r.extend(s.u[i].iter().map(|v| fmt(*v)));
            tor.write_record(&r).map_err(csv_err)?;
            let f = s.force[i];
            let mut r: Vec<String> = lead.to_vec();
            r.extend([f[0], f[1], f[2], f[0].hypot(f[1]) / f[2]].map(fmt));
            frc.write_record(&r).map_err(csv_err)?;
        }
        t0 += s.duration;
    }
    for w in [&mut pos, &mut vel, &mut tor, &mut frc] {
        w.flush()?;
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v:.12e}")
}
