//! Model self-checks with measured residuals.

use nalgebra as na;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::Constraint;
use crate::error::{Error, Result};
use crate::gait::GaitDesign;
use crate::impact;
use crate::model;
use crate::ode::{self, OdeOptions};
use crate::optimizer;
use crate::params::RobotParams;
use crate::state::{RobotState, StanceLeg, Vector6, Vector8};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    /// Worst measured residual.
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Diagnostic {
    fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.to_string(), value, threshold, pass: value < threshold }
    }
}

/// Symmetry residual and smallest eigenvalue of `D` on random configurations.
pub fn mass_matrix(p: &RobotParams, n: usize, seed: u64) -> Vec<Diagnostic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut asym: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for _ in 0..n {
        let q = Vector8::from_fn(|_, _| rng.random_range(-0.8..0.8));
        for stance in [StanceLeg::Leg1, StanceLeg::Leg2] {
            let d = model::mass_matrix(&q, p, stance);
            asym = asym.max((d - d.transpose()).abs().max());
            min_eig = min_eig.min(d.symmetric_eigenvalues().min());
        }
    }
    vec![
        Diagnostic::below("mass matrix symmetry", asym, 1e-10),
        Diagnostic { name: "mass matrix smallest eigenvalue".into(), value: min_eig, threshold: 0.0, pass: min_eig > 0.0 },
    ]
}

/// Relative drift of total energy over `duration` with zero torque.
pub fn passive_energy(design: &GaitDesign, duration: f64) -> Result<Diagnostic> {
    let p = &design.params;
    let split = |x: &na::SVector<f64, 16>| -> (Vector8, Vector8) { (x.fixed_rows::<8>(0).into(), x.fixed_rows::<8>(8).into()) };
    let energy = |x: &na::SVector<f64, 16>| {
        let (q, dq) = split(x);
        model::kinetic_energy(&q, &dq, p, StanceLeg::Leg1) + model::potential_energy(&q, p, StanceLeg::Leg1)
    };
    let mut x0 = na::SVector::<f64, 16>::zeros();
    x0.fixed_rows_mut::<8>(0).copy_from(&design.qi);
    x0.fixed_rows_mut::<8>(8).copy_from(&design.dqi);
    let e0 = energy(&x0);
    let mut drift: f64 = 0.0;
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-14, h_max: 1e-3, ..Default::default() };
    let rhs = |_t: f64, x: &na::SVector<f64, 16>| {
        let (q, dq) = split(x);
        let ddq = model::dynamics(&q, &dq, p, StanceLeg::Leg1)
            .accelerations(&Vector6::zeros())
            .ok_or(Error::SingularReducedInertia)?;
        let mut out = na::SVector::<f64, 16>::zeros();
        out.fixed_rows_mut::<8>(0).copy_from(&dq);
        out.fixed_rows_mut::<8>(8).copy_from(&ddq);
        Ok(out)
    };
    ode::integrate(rhs, 0.0, x0, duration, &opts, None, |_, x| {
        drift = drift.max((energy(x) - e0).abs() / e0.abs());
        Ok(())
    })?;
    Ok(Diagnostic::below("passive energy drift", drift, 1e-6))
}

/// Largest difference between the analytic output Jacobian and central
/// differences near the middle of the step.
pub fn output_jacobian(design: &GaitDesign, n: usize, seed: u64) -> Result<Diagnostic> {
    let c = Constraint::nominal(design)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = Vector8::zeros();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let q = (design.qi + design.qf) * 0.5 + Vector8::from_fn(|_, _| rng.random_range(-0.05..0.05));
        let jac = c.output(&q, &zero).jacobian;
        for k in 0..8 {
            let mut e = Vector8::zeros();
            e[k] = h;
            let d = (c.output(&(q + e), &zero).y - c.output(&(q - e), &zero).y) / (2.0 * h);
            worst = worst.max((jac.column(k) - d).amax());
        }
    }
    Ok(Diagnostic::below("output Jacobian vs finite differences", worst, 1e-6))
}

/// Largest relative kinetic-energy gain across the impact on random
/// states near the design's switching state.
pub fn impact_energy(design: &GaitDesign, n: usize, seed: u64) -> Diagnostic {
    let p = &design.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    let mut found = 0;
    for _ in 0..50 * n {
        if found == n {
            break;
        }
        let mut q = design.qf + Vector8::from_fn(|_, _| rng.random_range(-0.05..0.05));
        if optimizer::close_chain(&mut q, p).is_err() {
            continue;
        }
        let dq = design.dqf + Vector8::from_fn(|_, _| rng.random_range(-0.3..0.3));
        let Ok(r) = impact::impact_map(&RobotState::new(q, dq, StanceLeg::Leg1), p) else { continue };
        let before = model::kinetic_energy(&q, &dq, p, StanceLeg::Leg1);
        let after = model::kinetic_energy(&r.q_plus, &r.dq_plus, p, r.stance_leg_new);
        worst = worst.max((after - before) / before);
        found += 1;
    }
    Diagnostic {
        name: format!("impact kinetic energy gain ({found} states)"),
        value: worst,
        threshold: 1e-12,
        pass: found == n && worst <= 1e-12,
    }
}

/// Full property suite for the robot parameters of `design`.
pub fn run(design: &GaitDesign) -> Vec<Diagnostic> {
    let failed = |name: &str, e: Error| Diagnostic {
        name: format!("{name} ({e})"),
        value: f64::NAN,
        threshold: f64::NAN,
        pass: false,
    };
    let mut out = mass_matrix(&design.params, 100, 1);
    out.push(passive_energy(design, 0.2).unwrap_or_else(|e| failed("passive energy drift", e)));
    out.push(output_jacobian(design, 20, 3).unwrap_or_else(|e| failed("output Jacobian", e)));
    out.push(impact_energy(design, 50, 2));
    out
}
