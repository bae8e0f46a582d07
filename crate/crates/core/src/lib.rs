//! Clustering with automatic model and hyperparameter selection driven by the
//! eigen-gap of the normalized graph Laplacian.
//!
//! Data matrices hold one point per column. The main entry points are
//! [`search::grid_search`], [`search::bo_search`] and, for large inputs,
//! [`nse::eggs_nse`].

pub mod affinity;
pub mod cli;
pub mod error;
pub mod io;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod nse;
pub mod search;
pub mod spectra;
pub mod synthetic;

pub use error::{Error, Result};
