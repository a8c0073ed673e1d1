//! Recovering the hidden layer of a one-hidden-layer network from its
//! input-output behaviour.
//!
//! A teacher network is queried on augmented images, an ensemble of wider
//! students is trained to imitate its logits, and student neurons that agree
//! across the ensemble are clustered and collapsed into a reconstruction.
//!
//! * [`data`]: IDX files, standardisation, subsets, query-set storage.
//! * [`augment`]: query-construction strategies.
//! * [`network`]: the network, its activation and gradients.
//! * [`train`]: Adam, plateau scheduling, teacher and student training.
//! * [`reconstruct`]: clustering, collapse, fine-tuning, matching and reports.
//! * [`metrics`]: off-distribution losses, pre-activation variability and histograms.
//! * [`cli`]: config files and the pipeline stages behind the binary.

pub mod augment;
pub mod cli;
pub mod data;
pub mod error;
pub mod io_util;
pub mod metrics;
pub mod network;
pub mod reconstruct;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};

// README and book chapters, compiled and run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    pub mod network {}
    #[doc = include_str!("../../../book/src/queries.md")]
    pub mod queries {}
    #[doc = include_str!("../../../book/src/students.md")]
    pub mod students {}
    #[doc = include_str!("../../../book/src/reconstruction.md")]
    pub mod reconstruction {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    pub mod diagnostics {}
    #[doc = include_str!("../../../book/src/running.md")]
    pub mod running {}
}
