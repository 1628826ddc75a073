use thiserror::Error;

/// Errors raised anywhere in the inference pipeline.
///
/// Variants are grouped into families (see [`ErrorFamily`]) so the command
/// line front end can map them onto stable exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("regressor matrix is rank deficient (condition ratio {ratio:.3e}); near-null combination: {combination}")]
    RankDeficient { ratio: f64, combination: String },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not positive semi-definite: min eigenvalue {min_eigenvalue:.3e}, trace {trace:.3e}")]
    NotPsd { min_eigenvalue: f64, trace: f64 },

    #[error("imaginary residual {imag:.3e} exceeds tolerance for magnitude {magnitude:.3e} in {context}")]
    ImaginaryResidual {
        imag: f64,
        magnitude: f64,
        context: &'static str,
    },

    #[error("zero scale: {0}")]
    ZeroScale(String),

    #[error("bootstrap failure: {0}")]
    Bootstrap(String),

    #[error("non-stationary ARMA specification: {0}")]
    NonStationary(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("replication {replication} in cell {cell} failed: {source}")]
    Replication {
        cell: usize,
        replication: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of errors, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFamily {
    Input,
    Numerical,
    Config,
}

impl ErrorFamily {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorFamily::Input => 2,
            ErrorFamily::Numerical => 3,
            ErrorFamily::Config => 4,
        }
    }
}

impl Error {
    pub fn family(&self) -> ErrorFamily {
        match self {
            Error::InvalidPanel(_)
            | Error::NonFinite(_)
            | Error::Input(_)
            | Error::Io(_)
            | Error::Csv(_) => ErrorFamily::Input,
            Error::Config(_) | Error::InvalidArgument(_) | Error::NonStationary(_) => {
                ErrorFamily::Config
            }
            Error::DimensionMismatch(_)
            | Error::RankDeficient { .. }
            | Error::Singular(_)
            | Error::NotPsd { .. }
            | Error::ImaginaryResidual { .. }
            | Error::ZeroScale(_)
            | Error::Bootstrap(_) => ErrorFamily::Numerical,
            Error::Replication { source, .. } => source.family(),
        }
    }
}
