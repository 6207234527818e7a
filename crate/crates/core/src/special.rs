//! Gamma-function helpers and the analytic xi-average factor.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn ln_gamma<T: Real>(x: T) -> T {
    T::lit(libm::lgamma(x.to_f64().expect("finite argument")))
}

/// `f(D, nu) = ((D+1)/2)^nu * Gamma(D/2 - nu) / Gamma(D/2)`, the average of
/// `xi^{-2 nu}` under the mixture weight. For integer `nu` the Gamma ratio
/// telescopes, so the factor is the product `prod_{j=1..nu} (D+1)/(D-2j)`.
pub fn xi_average_factor<T: Real>(d: T, nu: u32) -> Result<T> {
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Error::InvalidParameter {
            name: "D",
            value: d.to_f64().unwrap_or(f64::NAN),
            reason: "must be positive and finite",
        });
    }
    if d <= T::lit(2.0 * nu as f64) {
        return Err(Error::divergence(nu, d.to_f64().unwrap_or(f64::NAN)));
    }
    let mut f = T::one();
    for j in 1..=nu {
        f = f * (d + T::one()) / (d - T::lit(2.0 * j as f64));
    }
    Ok(f)
}

/// ln of the radial normalisation `(D+1)^{D/2} / (2^{D/2-1} Gamma(D/2))` of the
/// xi weight, so that `N * int_0^inf xi^{D-1} e^{-xi^2 (D+1)/2} dxi = 1`.
pub fn ln_xi_normalisation<T: Real>(d: T) -> T {
    let half = d / T::lit(2.0);
    half * (d + T::one()).ln() - (half - T::one()) * T::LN_2() - ln_gamma(half)
}

/// `(2k-1)!!`, the number of perfect matchings of `2k` points.
pub fn double_factorial_odd(k: usize) -> u64 {
    (1..=k as u64).map(|j| 2 * j - 1).product()
}
