//! Numerical laboratory for Schatten p→q norms of completely positive maps.
//!
//! * [`linalg`]: dense complex matrices, Schatten norms, partial traces.
//! * [`channels`]: entanglement-breaking, Kraus and Choi representations.
//! * [`norms`]: multi-start optimizer for ‖Φ‖_{p→q} and related checks.
//! * [`multiplicativity`]: product-map tests ‖Φ⊗Ω‖ vs ‖Φ‖·‖Ω‖.
//! * [`semigroup`]: depolarizing semigroup and hypercontractivity times.
//! * [`prooftrace`]: step-by-step numerical check of the multiplicativity
//!   argument for entrywise-positive measurements and diagonal outputs.
//!
//! With the default `parallel` feature, optimizer starts, trials and trace
//! instances run on rayon; every work item derives its own seed so results
//! are identical to the sequential build.

pub mod channels;
pub mod error;
pub mod linalg;
pub mod multiplicativity;
pub mod norms;
pub mod par;
pub mod prooftrace;
pub mod random;
pub mod semigroup;

pub use channels::{EbClass, EbMap, EbPair, KrausMap, SuperOp};
pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use norms::{NormEstimate, NormQuery, OptimizerConfig};
