//! Adversarial robustness workbench for learned power allocation in
//! distributed MIMO.
//!
//! See the guide under `book/` for a walkthrough of each module.

pub mod attack;
pub mod bench;
pub mod error;
pub mod features;
pub mod mmf;
pub mod nn;
pub mod radio;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/allocator.md")]
    mod allocator {}
    #[doc = include_str!("../../../book/src/attacks.md")]
    mod attacks {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
}
