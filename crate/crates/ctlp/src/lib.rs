//! Constant-time LP-based approximation for bounded-degree CSPs.

pub mod corpus;
pub mod csp;
pub mod error;
pub mod estimator;
pub mod gap;
pub mod local;
pub mod lp;
pub mod pipeline;
pub mod robust;
pub mod rounding;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/instances.md")]
    mod instances {}
    #[doc = include_str!("../../../book/src/basic-lp.md")]
    mod basic_lp {}
    #[doc = include_str!("../../../book/src/repair.md")]
    mod repair {}
    #[doc = include_str!("../../../book/src/local-oracle.md")]
    mod local_oracle {}
    #[doc = include_str!("../../../book/src/rounding.md")]
    mod rounding {}
    #[doc = include_str!("../../../book/src/gap.md")]
    mod gap {}
}
