//! Kernel mean embeddings of state distributions, learned embedded
//! Perron-Frobenius operators and multistep MMD ambiguity tubes.
//!
//! The pipeline is:
//!
//! 1. [`sde`] generates paired samples `(x_i, y_i)` where `y_i` is the state
//!    reached from `x_i` after a lag time.
//! 2. [`operator::FittedOperator`] fits the regularized empirical operator
//!    `K_YX (K_XX + m lambda I)^-1` and pushes embeddings forward.
//! 3. [`bootstrap`] estimates a quantile of the operator estimation error by
//!    resampling pairs; [`concentration`] provides an analytic alternative.
//! 4. [`tube`] propagates an embedding together with an MMD radius, producing
//!    an ambiguity tube.
//!
//! [`experiment`] wires these into the reproducible commands exposed by the
//! `embedtube` binary.

pub mod bootstrap;
pub mod concentration;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod io;
pub mod kernels;
pub mod operator;
pub mod plot;
pub mod rng;
pub mod sde;
pub mod tube;

mod fgt;
mod linalg;

pub use bootstrap::{bootstrap_deviation_quantile, BootstrapSummary};
pub use error::{Error, Result};
pub use kernels::{Embedding, Kernel, KernelFamily, KernelSpec, PointSet};
pub use operator::{FittedOperator, OperatorNorms};
pub use sde::{InitialDistribution, PairedDataset, SdeModel};
pub use tube::{AmbiguityTube, TubeStep};
