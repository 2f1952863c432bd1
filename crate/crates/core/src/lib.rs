//! Finite-dimensional quantum measurement theory.
//!
//! States and observables ([`quantum`]), POVMs ([`povm`]), completely
//! positive instruments and their tests ([`instrument`]), indirect
//! measurement models and their construction from instruments
//! ([`dilation`]), and joint statistics of measurement sequences
//! ([`seqsim`]). Everything works on dense complex matrices ([`linalg`]).

pub mod dilation;
pub mod error;
pub mod instrument;
pub mod linalg;
pub mod outcome;
pub mod povm;
pub mod quantum;
pub mod random;
pub mod seqsim;

pub use dilation::IndirectModel;
pub use error::{Error, Result};
pub use instrument::{Instrument, Operation};
pub use linalg::{CMatrix, C64};
pub use outcome::{label, Outcome};
pub use povm::Povm;
pub use quantum::{DensityOperator, Observable, OutcomeDistribution};
pub use seqsim::{JointDistribution, MeasurementStep, Scenario};
