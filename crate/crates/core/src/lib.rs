//! Periodic homogenization of a thermo-diffusion system with Smoluchowski
//! aggregation and surface deposition in a perforated porous medium.
//!
//! The crate solves the pore-scale problem on an ε-periodic perforated
//! square, the corrector problems on the unit cell, and the upscaled
//! problem with effective tensors, and compares the two scales.

pub mod cell_solver;
pub mod config;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kinetics;
pub mod linalg;
pub mod macro_solver;
pub mod micro_solver;
pub mod mollifier;
mod par;
pub mod scheme;

pub use error::{Error, Result};
