//! Modulated one-sided discrete Hilbert transforms: block measures and their
//! correlations, maximal truncations, constructive sparse bounds, random kernels
//! and ergodic averages, each paired with numerical checks.

pub mod acceptance;
pub mod ergodic;
pub mod error;
pub mod kernel;
pub mod operators;
pub mod oracle;
pub mod phase;
pub mod random;
pub mod report;
pub mod signal;
pub mod sparse;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use ergodic::{MPSystem, Rotation, StepFunction, TailProfile};
pub use kernel::CoeffSequence;
pub use operators::{LocalizedOp, TruncationFamily};
pub use phase::{AdmissiblePhase, PhaseTerm, VdcParams};
pub use random::{Distribution, ExceptionalCover, RandomRealization};
pub use report::ExperimentReport;
pub use signal::{average, convolve, reflect_conj, DyadicInterval, FiniteSignal, Interval};
pub use sparse::{CzDecomposition, IntervalClassification, SparseCollection, SparseConfig};
