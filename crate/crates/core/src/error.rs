use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid sample buffer: {0}")]
    InvalidBuffer(String),
    #[error("invalid frame spec: {0}")]
    InvalidFrameSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("zero-frequency filter output is not finite at sample {index}; split the input into shorter segments")]
    NonFiniteOutput { index: usize },
    #[error("signal too short: {len} samples, need at least {required}")]
    SignalTooShort { len: usize, required: usize },
    #[error("trend removal window of {window} samples does not fit a signal of {len} samples")]
    WindowTooLarge { window: usize, len: usize },
    #[error("invalid trend removal window {0}: must be odd and at least 3")]
    InvalidWindow(usize),
    #[error("frame hop mismatch: {hyp_ms} ms vs {ref_ms} ms")]
    HopMismatch { hyp_ms: f64, ref_ms: f64 },
    #[error("label length mismatch: {hyp} vs {reference} frames")]
    LengthMismatch { hyp: usize, reference: usize },
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: unknown label format")]
    UnknownFormat { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
