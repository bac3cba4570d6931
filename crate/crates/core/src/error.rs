use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("template length must be odd, got {0}")]
    EvenTemplateLength(usize),

    #[error("sub-grid index {k} out of range for refinement factor {k_factor}")]
    SubGridIndex { k: usize, k_factor: usize },

    #[error("zero-norm vector: {0}")]
    ZeroNorm(&'static str),

    #[error("could not place {requested} events in {duration} s with the requested spacing")]
    InfeasiblePacking { requested: usize, duration: f64 },

    #[error("window length {window} must exceed template length {template}")]
    WindowTooShort { window: usize, template: usize },

    #[error("residual is identically zero; nothing left to select")]
    ZeroResidual,

    #[error("candidate atom is linearly dependent on the active set (pivot^2 = {pivot_sq:e})")]
    LinearDependence { pivot_sq: f64 },

    #[error("singular Gram matrix of the active atoms")]
    SingularGram,

    #[error("template {0} has no occurrences in the codes")]
    TemplateUnused(usize),

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported method `{0}`")]
    UnsupportedMethod(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn in_window(self, window: usize) -> Self {
        Error::Window { window, source: Box::new(self) }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
