use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("numerical blow-up in Runge-Kutta stage {stage}")]
    NumericalBlowUp { stage: usize },

    #[error("numerical blow-up at expansion iteration {iteration} (stage {stage})")]
    ExpansionBlowUp { iteration: usize, stage: usize },

    #[error("stiff/singular trajectory: step size {step:e} underflow at t = {t}")]
    StepUnderflow { t: f64, step: f64 },

    #[error("divergence: state norm {norm:e} exceeded escape radius at t = {t}")]
    Divergence { t: f64, norm: f64 },

    #[error("Newton divergence after {iterations} iterations (best residual {residual:e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("non-hyperbolic equilibrium (min |Re λ| = {margin:e})")]
    NonHyperbolic { margin: f64 },

    #[error("no boundary UEP found (enlarge search box)")]
    NoBoundaryUep,

    #[error("no crossing (extend horizon or fault is CCT-unbounded at this V_cr)")]
    NoCrossing,

    #[error("PEBS not found (extend horizon)")]
    PebsNotFound,

    #[error("BCU failure: trajectory stays interior")]
    BcuInterior,

    #[error("CUEP not located")]
    CuepNotLocated,

    #[error("verdict timeout: still inconclusive after {horizon} s")]
    VerdictTimeout { horizon: f64 },

    #[error("no instability within scan range")]
    NoInstability,

    #[error("islanded or degenerate network")]
    DegenerateNetwork,

    #[error("invalid fault location: bus {0}")]
    InvalidFault(usize),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("power flow did not converge (mismatch {0:e})")]
    PowerFlow(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
