//! Numerical toolkit for Busemann-Petty type comparison problems over the
//! real, complex and quaternionic block structures of `R^N`.
//!
//! The crate is organised bottom-up: [`special`] and [`quadrature`] supply
//! one-dimensional numerics, [`sphere`] integrates on spheres, [`algebra`]
//! builds the symmetry groups and section frames, [`harmonic`] and
//! [`transforms`] carry the spherical analysis, [`bodies`] and [`sections`]
//! describe star bodies and their sections, and [`bp`] runs the comparison
//! experiments.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod audit;
pub mod bp;
pub mod bodies;
pub mod error;
pub mod harmonic;
pub mod quadrature;
pub mod sections;
pub mod special;
pub mod sphere;
pub mod transforms;

pub use error::{Error, Result};
