//! Location obfuscation with Blahut-Arimoto channels, estimation of the
//! original distribution with the iterative Bayesian update, and the
//! incremental collection loop that alternates the two.
//!
//! Modules, bottom-up:
//! - [`geo`]: bounding boxes, grids, Euclidean distance tables, check-in ingestion
//! - [`prob`]: pmfs, stochastic channels, seeded sampling and obfuscation
//! - [`metrics`]: mutual information, average distortion, total variation, exact EMD
//! - [`mechanisms`]: BA and Laplace-kernel channels, privacy audits
//! - [`estimation`]: empirical pmfs, IBU, a brute-force MLE oracle, the BA/IBU duality trace
//! - [`privic`]: the per-cycle BA -> obfuscate -> IBU loop
//! - [`markov`]: the loop as a finite Markov chain on a simplex mesh
//! - [`experiments`]: the study drivers used by the command-line tool

pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geo;
pub mod markov;
pub mod mechanisms;
pub mod metrics;
pub mod privic;
pub mod prob;
pub mod report;
pub mod synthetic;
mod transport;

pub use error::{Error, Result};
pub use geo::{build_grid, BoundingBox, DistanceMatrix, GridSpace};
pub use prob::{Channel, Pmf, SampleSet};
