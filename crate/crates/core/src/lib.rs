//! Wick theorem for correlated q-Exponential random variables and the planar
//! resolvent expansion of covariance-estimator spectra.
//!
//! The algebraic core (monomial polynomials in the mixture variances, the
//! resolvent series, rotation tensors) is generic over [`Scalar`], so the same
//! code runs over `f64`, `f32` or exact rationals. Numerical evaluation
//! (densities, Gamma-factor averages) is generic over [`Real`]. The Monte Carlo
//! estimator and the inverse fit work in `f64`.

pub mod distribution;
pub mod error;
pub mod estimator;
pub mod inverse;
pub mod partition;
pub mod poly;
pub mod quadrature;
pub mod resolvent;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod tensor;
pub mod wick;

pub use error::{Error, Result};
pub use scalar::{Real, Scalar};

/// Exact rational scalar used for bit-exact algebra checks.
pub type Rational = num_rational::BigRational;

pub type QExpParams64 = distribution::QExpParams<f64>;
pub type QExpParams32 = distribution::QExpParams<f32>;
pub type RotationTensor64 = tensor::RotationTensor<f64>;
pub type ExactRotationTensor = tensor::RotationTensor<Rational>;
pub type Poly64 = poly::Poly<f64>;
pub type ExactPoly = poly::Poly<Rational>;
pub type XiSeries64 = resolvent::XiSeries<f64>;
pub type ExactXiSeries = resolvent::XiSeries<Rational>;
pub type SpectralMoments64 = resolvent::SpectralMoments<f64>;
