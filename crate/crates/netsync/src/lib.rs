//! Synchronization of node variables over networks from noisy pairwise
//! difference measurements on edges.
//!
//! The library covers three measurement spaces: real vectors with Gaussian
//! edge noise, circle-valued variables (phases) with von Mises noise, and
//! mixed products of the two. For each space it provides the closed-form or
//! iterative maximum-likelihood estimators, distributed variants that only
//! exchange messages along edges, Fisher-information reports tied to
//! spanning-tree counts, and a round-based simulator for comparing
//! estimators on synthetic networks.

pub mod abelian;
pub mod circle;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod graph;
pub mod incidence;
pub mod io;
pub mod jacobi;
pub mod sim;

pub use error::{Error, Result};
pub use graph::Graph;
pub use incidence::{CycleBasis, IncidenceSet, TreeCount};
