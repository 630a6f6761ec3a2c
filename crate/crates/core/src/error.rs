use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate array: directional spacing needs at least 3 active elements, got {0}")]
    DegenerateArray(usize),

    #[error(
        "the radiation sector already spans the RIS (numerator {numerator:.6e} m); use d_A = lambda/2"
    )]
    SectorCoversRis { numerator: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported pilot length {0}: must be a power of two")]
    UnsupportedPilotLength(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("configuration key `{key}` has the wrong unit suffix, expected `{expected}`")]
    UnitSuffix { key: String, expected: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("zero channel: beamformer for user {0} has zero norm")]
    ZeroChannel(usize),

    #[error("degenerate channel: all composite channels are zero")]
    DegenerateChannel,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("mode mismatch between records: {0}")]
    ModeMismatch(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the index of the trial it occurred in.
    pub fn in_trial(self, trial: usize) -> Self {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }

    /// True for errors caused by user configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::UnknownKey(_) | Error::UnitSuffix { .. } => true,
            Error::InvalidGeometry(_)
            | Error::DegenerateArray(_)
            | Error::SectorCoversRis { .. }
            | Error::UnsupportedPilotLength(_) => true,
            Error::Trial { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
