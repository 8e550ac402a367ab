//! Differentially private universally consistent learners and density
//! estimators, with the synthetic ground truth and audit harness needed to
//! measure them.

pub mod classify;
pub mod density;
pub mod dp;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod partition;
pub mod rng;
pub mod ssl;
pub mod synthetic;
pub mod textfmt;

pub use error::{Error, Result};
pub use rng::SeededRng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/privacy.md")]
    mod privacy {}
    #[doc = include_str!("../../../book/src/partitions.md")]
    mod partitions {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/density.md")]
    mod density {}
    #[doc = include_str!("../../../book/src/semi_supervised.md")]
    mod semi_supervised {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/formats.md")]
    mod formats {}
}
