use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: asymmetry {asymmetry:.3e} exceeds tolerance {tol:.3e}")]
    Asymmetric { asymmetry: f64, tol: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("frames live over different base points")]
    BasePointMismatch,

    #[error("frame is not transversal to the {0}")]
    NotTransversal(&'static str),

    #[error("no transversal horizontal found after {0} shear draws")]
    NoTransversalShear(usize),

    #[error("sampling too coarse at parameter {at}: argument increment {increment:.3} reaches pi/2")]
    RefinementNeeded { at: f64, increment: f64 },

    #[error("kernel dimension changes along the path at parameter {at} ({from} -> {to})")]
    StratumChange { at: f64, from: usize, to: usize },

    #[error("phase chart degenerates at parameter {at}; switch chart or use a gaussian phase")]
    ChartDegenerate { at: f64 },

    #[error("path endpoint lies on a rank-change event at parameter {0}")]
    EndpointOnEvent(f64),

    #[error("rank-change event near parameter {0} could not be resolved under refinement")]
    UnresolvedEvent(f64),

    #[error("Theta_Phi is not an integer (fractional part {0:.3e}); phase is not in the admissible class")]
    NonIntegralTheta(f64),

    #[error("trajectory left the chart at time {0}")]
    ChartExit(f64),

    #[error("newton iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("invalid phase: {0}")]
    InvalidPhase(String),

    #[error("canonical map rejected: {0}")]
    NotCanonical(String),

    #[error("composition undefined: {0}")]
    CompositionUndefined(String),

    #[error("quadrature budget exceeded: {0}")]
    Budget(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
