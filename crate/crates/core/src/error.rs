use thiserror::Error;

/// Errors raised by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("gramian fixed point ({side}) not converged after {} iterations, residual history {history:?}", history.len())]
    FixedPointDiverged { side: &'static str, history: Vec<f64> },

    #[error("stationary density is not positive at index {index} (value {value:e})")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("matrix is not Hurwitz (spectral abscissa {0:e})")]
    NotHurwitz(f64),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("requested rank {requested} exceeds numerical rank {available}")]
    RankDeficient { requested: usize, available: usize },

    #[error("{what}: size {size} exceeds guard {limit}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("tensor of order {0} is missing")]
    MissingTensor(usize),

    #[error("zero-block residual {residual:e} exceeds tolerance {tol:e}")]
    ProjectionResidual { residual: f64, tol: f64 },

    #[error("quadrature rule too inaccurate: max relative error {error:e} on [{lo:e}, {hi:e}]")]
    Quadrature { error: f64, lo: f64, hi: f64 },

    #[error("tensor equation residual {residual:e} exceeds tolerance {tol:e} (order {order})")]
    TensorResidual { order: usize, residual: f64, tol: f64 },

    #[error("Armijo backtracking exhausted at outer iteration {iteration} (cost {cost:e}, gradient norm {grad_norm:e})")]
    LineSearch {
        iteration: usize,
        cost: f64,
        grad_norm: f64,
    },

    #[error("state blow-up at t = {t}")]
    BlowUp { t: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("interpolation out of range: t = {t} not in [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Extension for tagging results with a stage name.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
