//! Classical simulator for a divide-and-conquer quantum LWE solver.
//!
//! The pipeline is: generate an LWE instance ([`instance`]), reduce samples to
//! single-coordinate pairs ([`reduce`]), run the two-register Fourier kernel
//! and extract a candidate ([`qsim`]), screen candidates with the `M`-trial
//! test ([`verify`]), and drive it all per coordinate ([`solver`]). The
//! [`oracle`] module holds exact probabilities and bounds used to check the
//! simulation, and [`experiment`] runs seeded Monte Carlo sweeps.

pub mod error;
pub mod experiment;
pub mod fq;
pub mod instance;
pub mod oracle;
pub mod qsim;
pub mod reduce;
pub mod seed;
pub mod solver;
pub mod verify;

pub use error::{LweError, Result};
pub use fq::{CenteredInt, FieldElement, FieldMatrix, FieldVector};
pub use instance::{ErrorDistribution, ErrorKind, LweInstance, Sample};
pub use reduce::{InputSet, ReducedBatch, ReducedPair, ReductionMode};
pub use qsim::{MeasurementOutcome, TwoQuditState};
pub use solver::{OutcomeClass, SolveOptions, SolveOutcome, SolveParameters};
