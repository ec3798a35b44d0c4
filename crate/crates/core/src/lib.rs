//! Conditional diffusion pipeline for stellarator plasma-boundary generation.
//!
//! Boundaries are tensor-Fourier coefficient vectors ([`surface`]), reduced
//! with [`pca`], normalized ([`dataset`]) and modelled by a conditional DDPM
//! ([`ddpm`], [`mlp`]). Generated boundaries are scored with the geometric
//! and quasisymmetry metrics in [`surface`] and [`qsmetrics`], with field
//! data supplied through [`evaluator`] and summarized by [`report`].
//! [`synth`] builds a small torus-family training set.

pub mod dataset;
pub mod ddpm;
pub mod error;
pub mod evaluator;
pub mod mlp;
pub mod pca;
pub mod qsmetrics;
pub mod report;
pub mod surface;
pub mod synth;

pub use error::{Error, Result};
