//! Numerical laboratory for studying how graph neural networks built from
//! heat-kernel filters generalize on graphs sampled from smooth manifolds.
//!
//! The crate is organized bottom-up:
//! - [`manifold`]: analytic models (circle, sphere, flat torus), sampling,
//!   Laplace eigenfunctions, band-limited targets, certified deformations.
//! - [`geograph`]: epsilon-neighborhood graphs over point clouds, graph
//!   Laplacians, perturbations, and file ingestion.
//! - [`spectral`]: eigendecompositions, heat-kernel filter application, and
//!   integral-Lipschitz filter certificates.
//! - [`gnn`]: a small trainable heat-filter network with hand-derived
//!   gradients.
//! - [`experiment`]: generalization-gap measurement, parameter sweeps, and
//!   bound-shape fitting.
//! - [`cli`]: the `genlab` command-line front end.

pub mod error;
pub mod experiment;
pub mod geograph;
pub mod gnn;
pub mod manifold;
pub mod rng;
pub mod sparse;
pub mod spectral;

pub mod cli;

pub use error::{Error, Result};
