use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("no frame intersects window {window}; available timestamps: {available:?}")]
    EmptyWindow { window: String, available: Vec<String> },

    #[error("raster dimensions differ: expected {expected:?}, got {actual:?}")]
    Dimensions {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("composites must be six months apart: current window {now}, previous window {prev}")]
    PairingOffset { now: String, prev: String },

    #[error("invalid scene spec: {0}")]
    SceneSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dataset must contain both classes ({0})")]
    SingleClass(String),

    #[error("SMO did not converge within {cap} iterations (KKT residual {residual:.3e})")]
    SvmNonConvergence { cap: usize, residual: f64 },

    #[error("index {index} out of range for series of length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CoreError>,
    },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Nn(#[from] wastemap_nn::NnError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub(crate) fn at_stage(stage: &'static str) -> impl FnOnce(CoreError) -> CoreError {
        move |source| CoreError::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
