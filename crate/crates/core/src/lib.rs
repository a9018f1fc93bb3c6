//! Self-supervised human activity recognition from wrist-worn accelerometers.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`ingest`] normalizes raw streams to G, resamples them onto a 30 Hz grid
//!    and cuts 10 s windows.
//! 2. [`pairing`] and [`augment`] build batches of coincident window pairs
//!    (temporal neighbours and augmented views) with their label/weight matrices.
//! 3. [`encoder`] pre-trains a convolutional tower on those batches using the
//!    small reverse-mode kernel in [`nn`].
//! 4. [`head`] trains an MLP on frozen embeddings and smooths its logits in time;
//!    [`baseline`] is the 8-statistic reference classifier.
//! 5. [`evalkit`] maps label semantics between datasets and scores predictions
//!    with accuracy and Cohen's kappa.

pub mod augment;
pub mod baseline;
pub mod cli;
pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod head;
pub mod ingest;
pub mod logging;
pub mod nn;
pub mod pairing;
pub(crate) mod rng;

pub use error::{Error, ErrorCategory, Result};
