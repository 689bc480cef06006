//! Crate-wide error type.
//!
//! Every fallible operation returns [`Result`]. Errors are grouped into
//! three exit classes so the CLI can map them onto process exit codes
//! (1 usage, 2 data, 3 numeric).

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("truncated data: {0}")]
    TruncatedData(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("unknown channel: {0}")]
    UnknownChannel(String),
    #[error("window out of range: {0}")]
    WindowOutOfRange(String),
    #[error("signal too short: {0}")]
    TooShort(String),
    #[error("missing line-noise template for channel {0}")]
    MissingTemplate(String),
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("no valid epochs (all pulse windows out of range)")]
    NoValidEpochs,
    #[error("empty epoch set")]
    Empty,
    #[error("too few epochs: {got} < {need}")]
    TooFewEpochs { got: usize, need: usize },
    #[error("no N1 extremum below the noise floor in the search window")]
    NoN1,
    #[error("trace has no zero crossing between artifact end and N1")]
    NoZeroCrossing,
    #[error("onset undefined: t_zc1 missing on one of the inputs")]
    UndefinedOnset,
    #[error("delay must be positive to yield a velocity, got {0} ms")]
    NonPositiveDelay(f64),
    #[error("distance must be positive, got {0} mm")]
    NonPositiveDistance(f64),
    #[error("fiber diameter must be positive, got {0} um")]
    NonPositiveDiameter(f64),
    #[error("sample too small: n = {0}")]
    SampleTooSmall(usize),
    #[error("sample too large: n = {0}")]
    SampleTooLarge(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
    #[error("empty sample")]
    EmptySample,
    #[error("x values are constant")]
    DegenerateX,
    #[error("kernel does not fit inside the window: {0}")]
    KernelOutOfWindow(String),
    #[error("train does not fit in the requested duration: {0}")]
    TrainTooLong(String),
    #[error("epoch window too short: {0}")]
    WindowTooShort(String),
    #[error("requested window center {0} ms not present in the map")]
    MissingCenter(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Exit classes for the CLI: 1 usage, 2 data error, 3 numeric failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

impl Error {
    pub fn exit_class(&self) -> ExitClass {
        use Error::*;
        match self {
            Config(_) | InvalidSpec(_) => ExitClass::Usage,
            MissingFile(_) | TruncatedData(_) | InvalidManifest(_) | UnknownChannel(_)
            | MissingTemplate(_) | Io(_) | WindowOutOfRange(_) | TooShort(_)
            | WindowTooShort(_) | KernelOutOfWindow(_) | TrainTooLong(_) => ExitClass::Data,
            _ => ExitClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
