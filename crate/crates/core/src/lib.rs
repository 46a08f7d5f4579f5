pub mod admodel;
pub mod error;
pub mod firstorder;
pub mod harness;
pub mod hybrid;
pub mod kerneldx;
pub mod numkit;
pub mod problems;
pub mod sampleweight;
pub mod secondorder;

pub use error::{Error, Result};

/// The book's chapters, compiled so their code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/numerics.md")]
    mod numerics {}
    #[doc = include_str!("../../../book/src/derivatives.md")]
    mod derivatives {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/first_order.md")]
    mod first_order {}
    #[doc = include_str!("../../../book/src/second_order.md")]
    mod second_order {}
    #[doc = include_str!("../../../book/src/hybrid.md")]
    mod hybrid {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    mod sampling {}
    #[doc = include_str!("../../../book/src/theory.md")]
    mod theory {}
    #[doc = include_str!("../../../book/src/reproducing.md")]
    mod reproducing {}
}
