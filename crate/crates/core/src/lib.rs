//! epkit — analysis toolkit for stimulation-evoked cortical potentials.

pub mod conduction;
pub mod epochs;
pub mod error;
pub mod filter;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod preprocess;
pub mod report;
pub mod signal;
pub mod stats;
pub mod synth;
pub mod timefreq;

pub use error::{Error, Result};
pub use signal::{ElectrodeGeometry, EpKind, Session, SignalBuffer, StimTrain};
