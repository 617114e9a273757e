//! Reference gaits and printed matrices used for reproduction checks.
//!
//! The printed fixed points carry four digits, which leaves a periodicity
//! residual of order 1e-3 in this model. The `*_FINAL_*` constants are the
//! nearest exactly periodic points, found by a minimum-norm correction of
//! all fifteen gait parameters (see [`crate::optimizer::polish`]).

use std::sync::OnceLock;

use crate::gait::GaitDesign;
use crate::params::RobotParams;
use crate::stability::{reselect_output, InputMatrix, GainMatrix, Matrix3};
use crate::state::Vector8;

/// Torque-optimal gait, pre-impact configuration and velocity as printed.
pub const PRINTED_TORQUE_OPTIMAL_QF: [f64; 8] = [-0.0174, -0.34038, 0.3820, -0.2940, 0.0602, 0.0487, -0.5077, 0.1688];
pub const PRINTED_TORQUE_OPTIMAL_DQF: [f64; 8] = [-0.4759, -1.1825, 0.0997, 0.2785, -0.1000, 0.1000, 1.398, 0.0];

/// Stability-optimal gait as printed.
pub const PRINTED_STABILITY_OPTIMAL_QF: [f64; 8] =
    [-0.0306, -0.3304, 0.3892, -0.2853, 0.0703, 0.0265, -0.4948, 0.2827];
pub const PRINTED_STABILITY_OPTIMAL_DQF: [f64; 8] =
    [-0.2719, -1.6158, -0.0710, -0.1553, -0.1998, 0.2312, 1.1816, -0.0450];

pub const TORQUE_OPTIMAL_FINAL_Q: [f64; 8] = [
    -0.01609929, -0.33951119, 0.3823284, -0.29487597, 0.05890166, 0.04994847, -0.50658859, 0.16913143,
];
pub const TORQUE_OPTIMAL_FINAL_DQ: [f64; 8] = [
    -0.476911715, -1.18306947, 0.0994296356, 0.278471913, -0.100072476, 0.0999599523, 1.39798289, -5.33e-6,
];
pub const STABILITY_OPTIMAL_FINAL_Q: [f64; 8] =
    [-0.0305898, -0.33045437, 0.38915445, -0.28529573, 0.07037145, 0.02670084, -0.494812, 0.28271574];
pub const STABILITY_OPTIMAL_FINAL_DQ: [f64; 8] =
    [-0.27184639, -1.61578484, -0.07099341, -0.15529879, -0.19979531, 0.23120194, 1.1816, -0.04499985];

/// Printed linearized return map of the torque-optimal gait.
pub fn printed_az() -> Matrix3 {
    Matrix3::new(0.1979, -0.4625, -0.2145, 5.8899, -2.8417, -1.7476, -4.7411, -0.2132, 0.7809)
}

/// Printed eigenvalues of the torque-optimal gait.
pub const PRINTED_AZ_EIGENVALUES: [f64; 3] = [0.8878, -0.6951, -2.0891];

/// Printed sensitivity of the return map to the event parameters.
pub fn printed_f() -> InputMatrix {
    InputMatrix::from_row_slice(&[
        -0.030, -0.028, 0.141, -0.065, 0.028, 0.018, //
        -0.237, -0.233, 1.073, -0.494, 0.225, 0.144, //
        0.163, 0.224, -0.023, 0.001, -0.231, -0.064,
    ])
}

/// Printed stride-to-stride gain, stated for `r = 2`.
pub fn printed_k() -> GainMatrix {
    GainMatrix::from_row_slice(&[
        -0.603, 0.243, 0.176, //
        -0.607, 0.186, 0.171, //
        2.566, -1.704, -0.814, //
        -1.181, 0.793, 0.376, //
        0.590, -0.164, -0.165, //
        0.359, -0.179, -0.108,
    ])
}

/// Printed closed-loop eigenvalues `(re, im)`.
pub const PRINTED_CLOSED_LOOP_EIGENVALUES: [(f64, f64); 3] = [(0.7906, 0.0), (-0.4478, 0.047), (-0.4478, -0.047)];

/// Printed stability-optimal eigenvalues.
pub const PRINTED_STABILITY_OPTIMAL_EIGENVALUES: [(f64, f64); 3] = [(0.887, 0.0), (-0.873, 0.216), (-0.873, -0.216)];

/// Printed linearized frontal distance between centre of mass and swing foot.
pub const PRINTED_FRONTAL_COEFFICIENTS: [f64; 8] = [-0.457, -0.020, -0.018, -0.020, -0.489, 0.461, -0.056, -0.022];

/// Printed eigenvalues with the reselected output.
pub const PRINTED_Y4_EIGENVALUES: [(f64, f64); 3] = [(0.7846, 0.0), (-0.028, 0.250), (-0.028, -0.250)];

/// Output row replaced by the frontal-distance output (the swing hip roll).
pub const FRONTAL_OUTPUT_ROW: usize = 3;

fn build(name: &str, q: [f64; 8], dq: [f64; 8]) -> GaitDesign {
    GaitDesign::from_final_state(name, &RobotParams::default(), Vector8::from(q), Vector8::from(dq))
        .expect("published fixed point is on the switching surface")
}

/// Torque-optimal gait with the original outputs.
pub fn torque_optimal() -> GaitDesign {
    static CELL: OnceLock<GaitDesign> = OnceLock::new();
    CELL.get_or_init(|| build("torque-optimal", TORQUE_OPTIMAL_FINAL_Q, TORQUE_OPTIMAL_FINAL_DQ)).clone()
}

/// Stability-optimal gait with the original outputs.
pub fn stability_optimal() -> GaitDesign {
    static CELL: OnceLock<GaitDesign> = OnceLock::new();
    CELL.get_or_init(|| build("stability-optimal", STABILITY_OPTIMAL_FINAL_Q, STABILITY_OPTIMAL_FINAL_DQ)).clone()
}

/// Torque-optimal orbit with the swing hip roll output replaced by the
/// frontal distance between centre of mass and swing foot, linearized at
/// the pre-impact configuration of this model.
pub fn torque_optimal_y4() -> GaitDesign {
    static CELL: OnceLock<GaitDesign> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = torque_optimal();
        let c = crate::stability::frontal_distance_coefficients(&g.qf, &g.params);
        reselect_output(&g, FRONTAL_OUTPUT_ROW, &c, "torque-optimal-y4").expect("nominal orbit integrates")
    })
    .clone()
}

/// Same as [`torque_optimal_y4`] but with the printed coefficients.
pub fn torque_optimal_y4_printed() -> GaitDesign {
    static CELL: OnceLock<GaitDesign> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = torque_optimal();
        let c = Vector8::from(PRINTED_FRONTAL_COEFFICIENTS);
        reselect_output(&g, FRONTAL_OUTPUT_ROW, &c, "torque-optimal-y4-printed").expect("nominal orbit integrates")
    })
    .clone()
}
