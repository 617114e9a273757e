use thiserror::Error;

/// Where an optimizer evaluation failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPhase {
    Decode,
    Integrate,
    Stability,
}

impl std::fmt::Display for EvalPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EvalPhase::Decode => "decode",
            EvalPhase::Integrate => "integrate",
            EvalPhase::Stability => "stability",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("impact matrix is singular (condition number {cond:.3e})")]
    SingularImpactMatrix { cond: f64 },
    #[error("state is not on the switching surface (z_sw = {z_sw:.3e} m, x_sw = {x_sw:.3e} m)")]
    OffSurface { z_sw: f64, x_sw: f64 },
    #[error("degenerate phase interval: theta_i == theta_f == {0}")]
    DegeneratePhaseInterval(f64),
    #[error("phase rate is zero at a step boundary")]
    ZeroPhaseRate,
    #[error("output selection block M_a is not invertible")]
    SingularOutputSelection,
    #[error("decoupling matrix is singular (condition number {cond:.3e})")]
    SingularDecoupling { cond: f64 },
    #[error("reduced inertia matrix is singular")]
    SingularReducedInertia,
    #[error("no impact within {horizon} s")]
    NoImpact { horizon: f64 },
    #[error("fall detected: {0}")]
    FallDetected(String),
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("trajectory did not return to the switching surface")]
    NoReturn,
    #[error("Riccati iteration did not converge after {iterations} iterations")]
    RiccatiDivergence { iterations: usize },
    #[error("final configuration chart failed to close the kinematic chain")]
    InvalidChain,
    #[error("evaluation failed during {phase}: {source}")]
    EvaluationFailed {
        phase: EvalPhase,
        #[source]
        source: Box<Error>,
    },
    #[error("optimizer did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("step {step}: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_phase(self, phase: EvalPhase) -> Error {
        Error::EvaluationFailed { phase, source: Box::new(self) }
    }

    /// Innermost error, looking through the step and phase wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::EvaluationFailed { source, .. } | Error::StepFailed { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
