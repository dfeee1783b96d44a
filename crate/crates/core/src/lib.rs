//! Measure-theoretic fractal dimension toolkit on dyadic trees.
//!
//! Sets are finite-depth prefix trees of half-open dyadic cubes
//! ([`set::DyadicSetTree`]); measures are exact-rational mass labellings of
//! those trees ([`measure::DyadicMeasureTree`]). On top of these sit the
//! dimension estimators, the Cantor-type counterexample constructions with
//! exact count verification, and Fourier-side estimates.

pub mod constructions;
pub mod dyadic;
pub mod error;
pub mod estimators;
pub mod exact;
pub mod fourier;
pub mod io;
pub mod measure;
pub mod quadrature;
pub mod set;

pub use error::{DimError, Result};

/// Exact rational number used for masses and parameters.
pub type Rational = num_rational::BigRational;
