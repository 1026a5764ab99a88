//! A desk-scale laboratory for studying how label smoothing interacts with
//! knowledge distillation.
//!
//! The crate trains small multilayer perceptrons from scratch on synthetic
//! Gaussian clusters, distils students from frozen teachers, and measures what
//! smoothing does to the teacher's output distributions (intra- and
//! inter-class stability) and to its penultimate-layer geometry.
//!
//! Start with [`pipeline::ExperimentConfig::desk_default`] and
//! [`pipeline::run_matrix`], or use the pieces directly:
//!
//! ```
//! use lskd::labels::{smooth_labels, softmax, cross_entropy, LogitVector};
//!
//! let target = smooth_labels(0, 0.1, 4).unwrap();
//! let p = softmax(&LogitVector::new(vec![2.0, 0.5, 0.1, -1.0]).unwrap(), 1.0).unwrap();
//! let loss = cross_entropy(&p, &target).unwrap();
//! assert!(loss > 0.0);
//! ```

pub mod binarize;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod geometry;
pub mod gradcore;
pub mod labels;
pub mod linalg;
pub mod metrics;
pub mod pipeline;

pub use error::{LabError, Result};
