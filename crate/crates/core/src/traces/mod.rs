//! Trace data model, the `FGT1` file format, manifests, synthetic generators,
//! and the expected-length oracle for Bernoulli termination processes.

pub mod format;
mod manifest;
pub mod oracle;
pub mod synth;
mod trace;

pub use format::{read_trace, write_trace};
pub use manifest::{Manifest, ManifestEntry, Split};
pub use oracle::{expected_length, Hazards, OracleResult};
pub use synth::{
    ConstantShift, Hazard, History, LengthLaw, Mode, Modulator, SynthConfig, SynthWorld, MIN_LEN,
};
pub use trace::{MetaBuilder, Trace};
