use hzd3d::constraints::{event_term_coeffs, Constraint};
use hzd3d::controller::{self, ControlGains};
use hzd3d::impact;
use hzd3d::model;
use hzd3d::optimizer::{self, OptimizationProblem};
use hzd3d::published;
use hzd3d::simulator::{self, SimConfig, WorldFrame};
use hzd3d::stability::{self, InputMatrix, Matrix3, Section, ZdState};
use hzd3d::state::{Vector6, Vector8};
use hzd3d::{GaitDesign, RobotParams, RobotState, StanceLeg};
use proptest::prelude::*;

/// States along one nominal step of the zero dynamics, lifted to the full model.
fn orbit_states(g: &GaitDesign, n: usize) -> Vec<(Vector8, Vector8)> {
    let c = Constraint::nominal(g).unwrap();
    let start = [g.qi[0], g.theta_i(), g.dqi[0], hzd3d::constraints::dtheta_of(&g.dqi)];
    let traj = stability::integrate_zero_dynamics(&c, start, Section::Theta(g.theta_f()), &stability::reduced_options()).unwrap();
    stability::sample_by_phase(&traj.solution, g.theta_i(), g.theta_f(), n)
        .unwrap()
        .iter()
        .map(|x| c.embed(x[0], x[1], x[2], x[3]))
        .collect()
}

fn one_step(g: &GaitDesign) -> simulator::StepRecord {
    let cfg = SimConfig::default();
    let start = simulator::initial_state(g, &cfg);
    simulator::simulate_step(g, &start, &Vector6::zeros(), &cfg, 0, WorldFrame::default()).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dlqr_solution_satisfies_riccati_and_stabilizes(
        a in prop::array::uniform9(-2.0f64..2.0),
        f in prop::collection::vec(-1.0f64..1.0, 18),
        r in 0.1f64..20.0,
    ) {
        let a = Matrix3::from_row_slice(&a);
        let f = InputMatrix::from_row_slice(&f);
        if let Ok(sol) = stability::dlqr(&a, &f, r) {
            let scale = sol.p.abs().max().max(1.0);
            prop_assert!(stability::riccati_residual(&a, &f, r, &sol.p) < 1e-10 * scale);
            prop_assert!(stability::spectral_radius(&(a - f * sol.k)) < 1.0);
            prop_assert!((sol.p - sol.p.transpose()).abs().max() < 1e-9 * scale);
        }
    }

    #[test]
    fn mass_matrix_positive_definite(q in prop::array::uniform8(-1.0f64..1.0), leg2 in any::<bool>()) {
        let stance = if leg2 { StanceLeg::Leg2 } else { StanceLeg::Leg1 };
        let d = model::mass_matrix(&Vector8::from(q), &RobotParams::default(), stance);
        prop_assert!((d - d.transpose()).abs().max() < 1e-10);
        prop_assert!(d.symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn landing_impulse_pushes_up_on_the_nominal_gaits() {
    for g in [published::torque_optimal(), published::stability_optimal()] {
        let r = impact::impact_map(&RobotState::new(g.qf, g.dqf, StanceLeg::Leg1), &g.params).unwrap();
        assert!(r.impulse[2] >= 0.0, "{}: {}", g.name, r.impulse[2]);
    }
}

#[test]
fn touchdown_is_located_on_the_ground() {
    for g in [published::torque_optimal(), published::stability_optimal()] {
        let rec = one_step(&g);
        let z = *rec.z_sw.last().unwrap();
        assert!(z.abs() < 1e-8, "{}: {z:e}", g.name);
    }
}

#[test]
fn decoupling_matrix_invertible_in_a_tube_around_the_orbit() {
    let g = published::torque_optimal();
    let c = Constraint::nominal(&g).unwrap();
    let d = 5f64.to_radians();
    for (q, dq) in orbit_states(&g, 40) {
        for k in 0..16 {
            let signs = Vector8::from_fn(|i, _| if (k >> (i % 4)) & 1 == 1 { d } else { -d });
            let qp = q + if k % 2 == 0 { signs } else { -signs };
            assert!(controller::nominal_torque(&qp, &dq, &c, &g.params, StanceLeg::Leg1).is_ok());
        }
    }
}

#[test]
fn feedback_torque_is_continuous() {
    let g = published::torque_optimal();
    let c = Constraint::nominal(&g).unwrap();
    let gains = ControlGains::default();
    for (q, dq) in orbit_states(&g, 20) {
        let u = controller::feedback_torque(&q, &dq, &c, &gains, &g.params, StanceLeg::Leg1).unwrap().u;
        let e = Vector8::from_fn(|i, _| 1e-8 * (i as f64 - 3.5));
        let v = controller::feedback_torque(&(q + e), &(dq - e), &c, &gains, &g.params, StanceLeg::Leg1).unwrap().u;
        assert!((u - v).amax() < 1e-4, "{:e}", (u - v).amax());
    }
}

#[test]
fn controller_variants_coincide_on_the_orbit() {
    let g = published::torque_optimal();
    let fixed = Constraint::nominal(&g).unwrap();
    let corrected = Constraint::nominal(&g).unwrap().corrected_at(&g.qi, &g.dqi).unwrap();
    let event = event_term_coeffs(&Vector6::zeros(), g.theta_i(), g.theta_f()).unwrap();
    let with_event = Constraint::nominal(&g).unwrap().with_event(Some(event)).corrected_at(&g.qi, &g.dqi).unwrap();
    for (q, dq) in orbit_states(&g, 30) {
        let u0 = controller::nominal_torque(&q, &dq, &fixed, &g.params, StanceLeg::Leg1).unwrap();
        for c in [&corrected, &with_event] {
            let u = controller::nominal_torque(&q, &dq, c, &g.params, StanceLeg::Leg1).unwrap();
            assert!((u - u0).amax() < 1e-9);
            assert!(c.output(&q, &dq).y.amax() < 1e-9);
        }
    }
}

#[test]
fn frontal_profile_reproduces_the_orbit() {
    let g = published::torque_optimal();
    let y4 = published::torque_optimal_y4();
    let c = Constraint::nominal(&y4).unwrap();
    let worst = orbit_states(&g, 400)
        .iter()
        .map(|(q, dq)| c.output(q, dq).y[published::FRONTAL_OUTPUT_ROW].abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst:e}");
}

#[test]
fn reduced_fixed_point_matches_the_full_model() {
    for g in [published::torque_optimal(), published::stability_optimal()] {
        let x = stability::find_fixed_point(&g, &ZdState::from_array(g.final_zd_state())).unwrap();
        let end = one_step(&g).end_zd_state();
        let err = (end.to_vector() - x.to_vector()).amax();
        assert!(err < 1e-5, "{}: {err:e}", g.name);
    }
}

#[test]
fn optimizer_result_closes_the_orbit_in_the_full_model() {
    let mut problem = OptimizationProblem::default();
    problem.settings.max_iterations = 2;
    let out = optimizer::optimize(&published::torque_optimal(), &problem).unwrap();
    let g = out.design.unwrap();
    let end = one_step(&g).end_zd_state();
    let err = (end.to_vector() - ZdState::from_array(g.final_zd_state()).to_vector()).amax();
    assert!(err < 1e-4, "{err:e}");
}

#[test]
fn margins_agree_with_dense_resampling() {
    let g = published::torque_optimal();
    let coarse = OptimizationProblem::default();
    let dense = OptimizationProblem { samples: 2 * coarse.samples - 1, ..coarse.clone() };
    let a = optimizer::evaluate_design(&g, &coarse).unwrap();
    let b = optimizer::evaluate_design(&g, &dense).unwrap();
    assert_eq!(a.equality, b.equality);
    let group_min = |e: &optimizer::Evaluation, n: usize| -> Vec<f64> {
        let mut out = Vec::new();
        let mut rest = &e.inequality[..];
        for len in [n, n - 2, n, n] {
            out.push(rest[..len].iter().copied().fold(f64::INFINITY, f64::min));
            rest = &rest[len..];
        }
        out
    };
    let ma = group_min(&a, coarse.samples);
    let mb = group_min(&b, dense.samples);
    for k in [0, 2, 3] {
        assert!((ma[k] - mb[k]).abs() < 1e-6, "group {k}: {} vs {}", ma[k], mb[k]);
    }
    // The interior swing height tends to zero at both ends, so only its sign is compared.
    assert!(mb[1] >= -1e-6);
}
