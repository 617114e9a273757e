//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so the verdict lines reach stdout. A
//! criterion is PASS when all of its checks pass. Checks listed as known
//! deviations are reported but do not fail the run; every other failing
//! check makes the process exit non-zero.

use std::io::Write;
use std::time::{Duration, Instant};

use hzd3d::constraints::Constraint;
use hzd3d::model;
use hzd3d::ode::{self, OdeOptions};
use hzd3d::optimizer::{self, Criterion, OptimizationProblem};
use hzd3d::published;
use hzd3d::simulator::{self, ControllerKind, Perturbation, SimConfig};
use hzd3d::stability::{self, Perturbations, Section, ZdState};
use hzd3d::state::{Vector6, Vector8};
use hzd3d::{RobotParams, RobotState, StanceLeg};
use nalgebra as na;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Check {
    name: String,
    pass: bool,
    known_deviation: bool,
}

#[derive(Default)]
struct Report {
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Report {
    fn check(&mut self, name: impl Into<String>, pass: bool) {
        self.checks.push(Check { name: name.into(), pass, known_deviation: false });
    }

    /// A check expected to fail with this model; see the README.
    fn deviation(&mut self, name: impl Into<String>, pass: bool) {
        self.checks.push(Check { name: name.into(), pass, known_deviation: true });
    }

    fn runtime(&mut self, started: Instant, limit: Duration) {
        let t = started.elapsed();
        self.check(format!("runtime {:.2}s < {}s", t.as_secs_f64(), limit.as_secs()), t < limit);
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn fmt_ev(ev: &[(f64, f64)]) -> String {
    ev.iter()
        .map(|(r, i)| if *i == 0.0 { format!("{r:.4}") } else { format!("{r:.4}{:+.4}i", i) })
        .collect::<Vec<_>>()
        .join(", ")
}

fn nominal_metrics(c: &mut Report) {
    let started = Instant::now();
    let g = published::torque_optimal();
    let cfg = SimConfig::default();
    let walk = simulator::simulate_walk(&g, &simulator::initial_state(&g, &cfg), 2, &cfg);
    c.check("walk completes", walk.failure.is_none() && walk.steps.len() == 2);
    if let Some(s) = walk.steps.last() {
        let speed = s.step_length / s.duration;
        c.note(format!("T={:.4} L={:.4} W={:.4} v={:.4}", s.duration, s.step_length, s.step_width, speed));
        c.check("period within 5% of 0.39 s", rel(s.duration, 0.39) <= 0.05);
        c.check("length within 5% of 0.176 m", rel(s.step_length, 0.176) <= 0.05);
        c.check("width within 5% of 0.156 m", rel(s.step_width, 0.156) <= 0.05);
        c.check("speed within 5% of 0.447 m/s", rel(speed, 0.447) <= 0.05);
    }
    c.runtime(started, Duration::from_secs(5));
}

fn instability(c: &mut Report) {
    let started = Instant::now();
    let g = published::torque_optimal();
    match stability::linearize(&g, &Perturbations::default(), false) {
        Ok(rep) => {
            let largest = rep.eigenvalues[0];
            let mag = largest.0.hypot(largest.1);
            c.note(format!("eig = [{}]", fmt_ev(&rep.eigenvalues)));
            c.check("largest |eig| in [1.6, 2.6]", (1.6..=2.6).contains(&mag));
            c.check("spectral radius > 1", rep.spectral_radius > 1.0);
            let printed = published::printed_az();
            let worst = (0..9).map(|i| rel(rep.az[i], printed[i])).fold(0.0, f64::max);
            c.note(format!("worst entry deviation from printed matrix {:.0}%", 100.0 * worst));
            c.deviation("entries within 10% of printed matrix", worst <= 0.10);
        }
        Err(e) => c.check(format!("linearization ({e})"), false),
    }
    c.runtime(started, Duration::from_secs(30));
}

fn stable_gait(c: &mut Report) {
    let started = Instant::now();
    let problem = OptimizationProblem { criterion: Criterion::SpectralRadius, ..Default::default() };
    match optimizer::optimize(&published::torque_optimal(), &problem) {
        Ok(out) => {
            let e = &out.evaluation;
            c.note(format!(
                "J={:.4} from {:.4}, {} iterations, eq={:.1e}, ineq={:.1e}",
                e.criterion,
                out.initial_criterion,
                out.iterations,
                e.max_equality(),
                e.min_inequality()
            ));
            c.check("equality residual <= 1e-5", e.max_equality() <= 1e-5);
            c.check("inequality margin >= -1e-6", e.min_inequality() >= -1e-6);
            let design = out.design.expect("outcome carries its design");
            match stability::linearize(&design, &Perturbations::default(), false) {
                Ok(rep) => {
                    c.note(format!("ground-section eig = [{}]", fmt_ev(&rep.eigenvalues)));
                    c.check("spectral radius < 1", rep.spectral_radius < 1.0);
                }
                Err(err) => c.check(format!("linearization ({err})"), false),
            }
            let m = e.metrics;
            let near = rel(m.period, 0.175) <= 0.1 && rel(m.step_length, 0.144) <= 0.1 && rel(m.speed, 0.82) <= 0.1;
            c.note(format!(
                "T={:.4} L={:.4} v={:.4}; {} the reference stable gait (best effort)",
                m.period,
                m.step_length,
                m.speed,
                if near { "matches" } else { "does not match" }
            ));
        }
        Err(e) => c.check(format!("optimizer ({e})"), false),
    }
    c.runtime(started, Duration::from_secs(1800));
}

fn dlqr_oracle(c: &mut Report) {
    let started = Instant::now();
    let (a, f, printed) = (published::printed_az(), published::printed_f(), published::printed_k());
    match stability::dlqr(&a, &f, 2.0) {
        Ok(sol) => {
            let worst = (0..18).map(|i| rel(sol.k[i], printed[i])).fold(0.0, f64::max);
            let cl = stability::eigenvalues(&(a - f * sol.k));
            c.note(format!("worst K entry deviation {:.0}%, closed loop [{}]", 100.0 * worst, fmt_ev(&cl)));
            c.check("Riccati residual < 1e-9", stability::riccati_residual(&a, &f, 2.0, &sol.p) < 1e-9);
            c.deviation("K within 2% per entry", worst <= 0.02);
            let mags: Vec<f64> = cl.iter().map(|(r, i)| r.hypot(*i)).collect();
            let want = published::PRINTED_CLOSED_LOOP_EIGENVALUES.map(|(r, i)| r.hypot(i));
            let ok = mags.iter().zip(want).all(|(m, w)| rel(*m, w) <= 0.02);
            c.deviation("closed-loop |eig| within 2%", ok);
        }
        Err(e) => c.check(format!("dlqr ({e})"), false),
    }
    if let Ok(sol) = stability::dlqr(&a, &f, 10.0) {
        let worst = (0..18).map(|i| rel(sol.k[i], printed[i])).fold(0.0, f64::max);
        let cl = stability::eigenvalues(&(a - f * sol.k));
        c.note(format!("with r=10: worst K deviation {:.0}%, closed loop [{}]", 100.0 * worst, fmt_ev(&cl)));
    }
    c.runtime(started, Duration::from_secs(1));
}

const PERTURBATION: Perturbation = Perturbation { position_deg: -1.0, velocity_deg_s: -5.0 };

fn perturbed_errors(design: &hzd3d::GaitDesign, controller: ControllerKind, c: &mut Report) -> Option<Vec<f64>> {
    let cfg = SimConfig { controller, perturbation: PERTURBATION, ..Default::default() };
    let walk = simulator::simulate_walk(design, &simulator::initial_state(design, &cfg), 30, &cfg);
    if let Some(e) = &walk.failure {
        c.check(format!("30 steps without failure ({e})"), false);
        return None;
    }
    let x_star = stability::find_fixed_point(design, &ZdState::from_array(design.final_zd_state())).ok()?;
    Some(simulator::convergence_series(&walk.steps, &x_star))
}

fn convergence_checks(errors: &[f64], c: &mut Report) {
    c.note(format!(
        "error step 1 {:.1e}, step 10 {:.1e}, step 30 {:.1e}",
        errors[0],
        errors[9],
        errors[errors.len() - 1]
    ));
    c.check("error halves within 10 steps", errors[..10].iter().any(|e| *e <= 0.5 * errors[0]));
    c.check("error < 1e-3 within 30 steps", errors.iter().any(|e| *e < 1e-3));
}

fn event_stabilization(c: &mut Report) {
    let started = Instant::now();
    let mut g = published::torque_optimal();
    let rep = match stability::linearize(&g, &Perturbations::default(), true) {
        Ok(r) => r,
        Err(e) => return c.check(format!("linearization ({e})"), false),
    };
    let k = match stability::dlqr(&rep.az, &rep.f.unwrap(), 2.0) {
        Ok(s) => s.k,
        Err(e) => return c.check(format!("dlqr ({e})"), false),
    };
    let rep = rep.with_gain(k);
    c.note(format!("linear closed loop [{}]", fmt_ev(rep.closed_loop_eigenvalues.as_deref().unwrap_or(&[]))));
    g.event_gain = rep.event_gain(2.0);
    if let Some(errors) = perturbed_errors(&g, ControllerKind::HzdDlqr, c) {
        convergence_checks(&errors, c);
    }
    c.runtime(started, Duration::from_secs(30));
}

fn output_reselection(c: &mut Report) {
    let g = published::torque_optimal_y4();
    match stability::linearize(&g, &Perturbations::default(), false) {
        Ok(rep) => {
            c.note(format!("eig = [{}]", fmt_ev(&rep.eigenvalues)));
            c.check("spectral radius < 1", rep.spectral_radius < 1.0);
            let real = rep.eigenvalues.iter().find(|e| e.1 == 0.0).copied();
            let pair = rep.eigenvalues.iter().find(|e| e.1 != 0.0).copied();
            let l1_ok = match (real, pair) {
                (Some(r), Some(_)) => (r.0 - 0.7846).abs() <= 0.1,
                _ => rep.eigenvalues.iter().any(|e| (e.0 - 0.7846).abs() <= 0.1 && e.1 == 0.0),
            };
            c.check("real eigenvalue within 0.1 of 0.7846", l1_ok);
            let pair_mag = pair.map(|(r, i)| r.hypot(i)).unwrap_or(f64::NAN);
            c.deviation("complex pair |eig| within 0.1 of 0.2512", (pair_mag - 0.2512).abs() <= 0.1);
        }
        Err(e) => c.check(format!("linearization ({e})"), false),
    }
    if let Some(errors) = perturbed_errors(&g, ControllerKind::Reselected, c) {
        convergence_checks(&errors, c);
    }
    let printed = published::torque_optimal_y4_printed();
    if let Ok(rep) = stability::linearize(&printed, &Perturbations::default(), false) {
        c.note(format!("with the printed output coefficients: eig = [{}]", fmt_ev(&rep.eigenvalues)));
    }
}

fn random_q(rng: &mut ChaCha8Rng) -> Vector8 {
    Vector8::from_fn(|_, _| rng.random_range(-0.8..0.8))
}

fn mass_matrix_pd(c: &mut Report) {
    let p = RobotParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ok = (0..100).all(|_| {
        let q = random_q(&mut rng);
        [StanceLeg::Leg1, StanceLeg::Leg2].iter().all(|&s| {
            let d = model::mass_matrix(&q, &p, s);
            (d - d.transpose()).abs().max() < 1e-10 && d.symmetric_eigenvalues().min() > 0.0
        })
    });
    c.check("D symmetric positive definite on 100 states", ok);
}

fn passive_energy(c: &mut Report) {
    let p = RobotParams::default();
    let g = published::torque_optimal();
    let energy = |x: &na::SVector<f64, 16>| {
        let q: Vector8 = x.fixed_rows::<8>(0).into();
        let dq: Vector8 = x.fixed_rows::<8>(8).into();
        model::kinetic_energy(&q, &dq, &p, StanceLeg::Leg1) + model::potential_energy(&q, &p, StanceLeg::Leg1)
    };
    let mut x0 = na::SVector::<f64, 16>::zeros();
    x0.fixed_rows_mut::<8>(0).copy_from(&g.qi);
    x0.fixed_rows_mut::<8>(8).copy_from(&g.dqi);
    let e0 = energy(&x0);
    let mut drift: f64 = 0.0;
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, h_max: 1e-3, ..Default::default() };
    let rhs = |_t: f64, x: &na::SVector<f64, 16>| {
        let q: Vector8 = x.fixed_rows::<8>(0).into();
        let dq: Vector8 = x.fixed_rows::<8>(8).into();
        let ddq = model::dynamics(&q, &dq, &p, StanceLeg::Leg1)
            .accelerations(&Vector6::zeros())
            .ok_or(hzd3d::Error::SingularDecoupling { cond: f64::INFINITY })?;
        let mut out = na::SVector::<f64, 16>::zeros();
        out.fixed_rows_mut::<8>(0).copy_from(&dq);
        out.fixed_rows_mut::<8>(8).copy_from(&ddq);
        Ok(out)
    };
    let res = ode::integrate(rhs, 0.0, x0, 0.2, &opts, None, |_, x| {
        drift = drift.max((energy(x) - e0).abs() / e0.abs());
        Ok(())
    });
    c.note(format!("passive energy drift {drift:.1e}"));
    c.check("passive energy drift < 1e-6 over 0.2 s", res.is_ok() && drift < 1e-6);
}

fn impact_energy(c: &mut Report) {
    let p = RobotParams::default();
    let g = published::torque_optimal();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut n = 0;
    let mut ok = true;
    while n < 50 {
        let mut q = g.qf + Vector8::from_fn(|_, _| rng.random_range(-0.05..0.05));
        if optimizer::close_chain(&mut q, &p).is_err() {
            continue;
        }
        let dq = g.dqf + Vector8::from_fn(|_, _| rng.random_range(-0.3..0.3));
        let s = RobotState::new(q, dq, StanceLeg::Leg1);
        let Ok(r) = hzd3d::impact::impact_map(&s, &p) else { continue };
        let before = model::kinetic_energy(&q, &dq, &p, StanceLeg::Leg1);
        let after = model::kinetic_energy(&r.q_plus, &r.dq_plus, &p, r.stance_leg_new);
        ok &= after <= before * (1.0 + 1e-12);
        n += 1;
    }
    c.check("impact does not increase kinetic energy on 50 states", ok);
}

fn output_jacobian(c: &mut Report) {
    let g = published::torque_optimal();
    let con = Constraint::nominal(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let q = g.qi * 0.5 + g.qf * 0.5 + Vector8::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let jac = con.output(&q, &Vector8::zeros()).jacobian;
        for k in 0..8 {
            let h = 1e-6;
            let mut a = q;
            let mut b = q;
            a[k] += h;
            b[k] -= h;
            let d = (con.output(&a, &Vector8::zeros()).y - con.output(&b, &Vector8::zeros()).y) / (2.0 * h);
            worst = worst.max((jac.column(k) - d).amax());
        }
    }
    c.note(format!("output Jacobian vs finite differences {worst:.1e}"));
    c.check("output Jacobian matches finite differences < 1e-6", worst < 1e-6);
}

fn hzd_invariance(c: &mut Report) {
    let g = published::torque_optimal();
    let cfg = SimConfig { perturbation: PERTURBATION, ..Default::default() };
    let walk = simulator::simulate_walk(&g, &simulator::initial_state(&g, &cfg), 1, &cfg);
    let norm = walk.steps.first().map(|s| s.initial_output_norm[0]).unwrap_or(f64::INFINITY);
    c.note(format!("|y| at perturbed step start {norm:.1e}"));
    c.check("|y| at step start < 1e-10", norm < 1e-10);
}

fn full_vs_reduced(c: &mut Report) {
    let g = published::torque_optimal();
    let cfg = SimConfig::default();
    let walk = simulator::simulate_walk(&g, &simulator::initial_state(&g, &cfg), 1, &cfg);
    let con = Constraint::nominal(&g).unwrap();
    let start = [g.qi[0], g.theta_i(), g.dqi[0], hzd3d::constraints::dtheta_of(&g.dqi)];
    let reduced = stability::integrate_zero_dynamics(&con, start, Section::Ground, &stability::reduced_options());
    let diff = match (walk.steps.first(), reduced) {
        (Some(s), Ok(r)) => {
            let e = r.end();
            let d = (0..4).map(|i| (s.end[i] - e[i]).abs()).fold(0.0, f64::max);
            d.max((s.duration - r.duration()).abs())
        }
        _ => f64::INFINITY,
    };
    c.note(format!("full vs reduced touchdown state {diff:.1e}"));
    c.check("full and reduced models agree < 1e-5", diff < 1e-5);
}

fn richardson(c: &mut Report) {
    let g = published::torque_optimal();
    let pert = Perturbations::default();
    let full = stability::linearize(&g, &pert, false);
    let half = stability::linearize(&g, &pert.halved(), false);
    let worst = match (full, half) {
        (Ok(a), Ok(b)) => (0..9).map(|i| rel(a.az[i], b.az[i])).fold(0.0, f64::max),
        _ => f64::INFINITY,
    };
    c.note(format!("A^z change under halved perturbations {:.3}%", 100.0 * worst));
    c.check("A^z stable under perturbation halving < 1%", worst < 0.01);
}

fn properties(c: &mut Report) {
    let started = Instant::now();
    mass_matrix_pd(c);
    passive_energy(c);
    impact_energy(c);
    output_jacobian(c);
    hzd_invariance(c);
    full_vs_reduced(c);
    richardson(c);
    c.runtime(started, Duration::from_secs(120));
}

fn feasibility(c: &mut Report) {
    let g = published::torque_optimal();
    let samples = match optimizer::nominal_path(&g, 400) {
        Ok((_, s)) => s,
        Err(e) => return c.check(format!("nominal path ({e})"), false),
    };
    let min_fz = samples.iter().map(|s| s.force[2]).fold(f64::INFINITY, f64::min);
    let max_ratio = samples.iter().map(|s| s.friction_ratio()).fold(0.0, f64::max);
    let min_z = samples.iter().map(|s| s.z_sw).fold(f64::INFINITY, f64::min);
    let min_rate = samples.iter().map(|s| s.dtheta).fold(f64::INFINITY, f64::min);
    let max_u = samples.iter().flat_map(|s| s.torque).map(f64::abs).fold(0.0, f64::max);
    c.note(format!(
        "min Fz {min_fz:.2} N, max friction ratio {max_ratio:.3}, min z_sw {min_z:.1e} m, min rate {min_rate:.3}, max |u| {max_u:.2} N m"
    ));
    c.check("normal force > 0", min_fz > 0.0);
    c.check("friction ratio <= 0.6", max_ratio <= 0.6);
    c.check("swing height >= -1e-6 m", min_z >= -1e-6);
    c.check("phase rate > 0", min_rate > 0.0);
    c.check("max |u| < 10 N m", max_u < 10.0);
}

fn main() {
    let criteria: [(&str, fn(&mut Report)); 8] = [
        ("nominal gait metrics", nominal_metrics),
        ("instability of the torque-optimal gait", instability),
        ("stability-optimized gait", stable_gait),
        ("DLQR on printed matrices", dlqr_oracle),
        ("event-based stabilization", event_stabilization),
        ("output reselection", output_reselection),
        ("property suite", properties),
        ("nominal gait feasibility", feasibility),
    ];
    let mut unexpected = 0;
    let mut out = std::io::stdout().lock();
    for (i, (title, run)) in criteria.iter().enumerate() {
        let mut c = Report::default();
        let started = Instant::now();
        run(&mut c);
        let failed: Vec<&Check> = c.checks.iter().filter(|k| !k.pass).collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        let detail = if failed.is_empty() {
            String::new()
        } else {
            let names: Vec<String> = failed
                .iter()
                .map(|k| if k.known_deviation { format!("{} [known deviation]", k.name) } else { k.name.clone() })
                .collect();
            format!(" failed: {}", names.join("; "))
        };
        writeln!(out, "criterion {}: {verdict} {title} ({:.1}s){detail}", i + 1, started.elapsed().as_secs_f64()).unwrap();
        for n in &c.notes {
            writeln!(out, "    {n}").unwrap();
        }
        unexpected += failed.iter().filter(|k| !k.known_deviation).count();
    }
    out.flush().unwrap();
    if unexpected > 0 {
        eprintln!("{unexpected} unexpected check failure(s)");
        std::process::exit(1);
    }
}
