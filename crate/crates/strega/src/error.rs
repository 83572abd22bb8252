use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch on axis {axis}: expected {expected}, got {got} ({context})")]
    ShapeMismatch {
        axis: usize,
        expected: usize,
        got: usize,
        context: String,
    },
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate batch: batch normalization needs at least 2 samples per channel in training mode, got {0}")]
    DegenerateBatch(usize),
    #[error("non-finite gradient encountered in {0}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: total={total}, kl={kl}, rec_vae={rec_vae}, rec_ce={rec_ce}")]
    TrainingDiverged {
        epoch: usize,
        total: f64,
        kl: f64,
        rec_vae: f64,
        rec_ce: f64,
    },
    #[error("empty mask: {0}")]
    EmptyMask(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
