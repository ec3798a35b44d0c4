use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("record {id}: expected {expected} features, found {found}")]
    FeatureLength {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("record {id}: invalid conditions: {message}")]
    InvalidConditions { id: String, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate surface: {0}")]
    DegenerateSurface(String),

    #[error("surface has non-positive enclosed volume {volume} (inward orientation)")]
    InwardOrientation { volume: f64 },

    #[error(
        "helical averaging lines do not close on a {n_phi}x{n_theta} grid \
         (nfp={nfp}, helicity={helicity}); choose n_phi dividing helicity*nfp*n_theta"
    )]
    NonClosingHelicalGrid {
        n_phi: usize,
        n_theta: usize,
        nfp: u32,
        helicity: u32,
    },

    #[error("quasisymmetric component has zero norm")]
    ZeroField,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("sampling produced a non-finite state at timestep {step}")]
    SamplingNonFinite { step: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("external evaluator failed: {0}")]
    External(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
