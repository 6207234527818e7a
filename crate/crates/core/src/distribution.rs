//! The symmetric q-Exponential distribution
//! `D_K(x) = N_K / sqrt(2 pi sigma_K^2) * (1 + x^2 / (2 K sigma_K^2))^{-K}`
//! and its representation as a Gaussian scale mixture.

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};
use crate::rng::rng_from_seed;
use crate::scalar::Real;
use crate::special::{double_factorial_odd, ln_gamma, xi_average_factor};

/// Shape `K` (with `D = 2K - 1`) and scale `sigma`; `sigma^2` is the variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QExpParams<T> {
    k: T,
    sigma: T,
}

impl<T: Real> QExpParams<T> {
    pub fn from_k(k: T, sigma: T) -> Result<Self> {
        if !k.is_finite() || k <= T::lit(1.5) {
            return Err(Error::InvalidParameter {
                name: "K",
                value: k.to_f64().unwrap_or(f64::NAN),
                reason: "must be finite and greater than 3/2",
            });
        }
        if !sigma.is_finite() || sigma <= T::zero() {
            return Err(Error::InvalidParameter {
                name: "sigma",
                value: sigma.to_f64().unwrap_or(f64::NAN),
                reason: "must be finite and positive",
            });
        }
        Ok(QExpParams { k, sigma })
    }

    pub fn from_d(d: T, sigma: T) -> Result<Self> {
        if !d.is_finite() || d <= T::lit(2.0) {
            return Err(Error::InvalidParameter {
                name: "D",
                value: d.to_f64().unwrap_or(f64::NAN),
                reason: "must be finite and greater than 2",
            });
        }
        Self::from_k((d + T::one()) / T::lit(2.0), sigma)
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn d(&self) -> T {
        T::lit(2.0) * self.k - T::one()
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn with_sigma(&self, sigma: T) -> Result<Self> {
        Self::from_k(self.k, sigma)
    }

    /// `sigma_K = sigma sqrt((K - 3/2)/K)`.
    pub fn sigma_k(&self) -> T {
        self.sigma * ((self.k - T::lit(1.5)) / self.k).sqrt()
    }

    /// `sigma_D = sigma sqrt((D - 2)/(D + 1))`; equal to `sigma_K`.
    pub fn sigma_d(&self) -> T {
        let d = self.d();
        self.sigma * ((d - T::lit(2.0)) / (d + T::one())).sqrt()
    }

    pub fn ln_norm_k(&self) -> T {
        ln_gamma(self.k) - T::lit(0.5) * self.k.ln() - ln_gamma(self.k - T::lit(0.5))
    }

    /// `N_K = Gamma(K) / (sqrt(K) Gamma(K - 1/2))`.
    pub fn norm_k(&self) -> T {
        self.ln_norm_k().exp()
    }

    pub fn ln_pdf(&self, x: T) -> T {
        let sk2 = self.sigma_k() * self.sigma_k();
        let two = T::lit(2.0);
        self.ln_norm_k()
            - T::lit(0.5) * (two * T::PI() * sk2).ln()
            - self.k * (x * x / (two * self.k * sk2)).ln_1p()
    }

    pub fn pdf(&self, x: T) -> T {
        self.ln_pdf(x).exp()
    }

    /// Scale of the equivalent Student-t with `D` degrees of freedom:
    /// `X = s * t_D` with `s = sigma sqrt((D-2)/D)`.
    pub fn student_t_scale(&self) -> T {
        let d = self.d();
        self.sigma * ((d - T::lit(2.0)) / d).sqrt()
    }

    /// Closed form `<X^{2k}> = (2k-1)!! sigma_D^{2k} f(D, k)`.
    pub fn moment(&self, order: u32) -> Result<T> {
        if order % 2 == 1 {
            return Ok(T::zero());
        }
        let k = order / 2;
        let f = xi_average_factor(self.d(), k)?;
        let pairings = T::lit(double_factorial_odd(k as usize) as f64);
        Ok(pairings * self.sigma_d().powi(order as i32) * f)
    }

    /// `int x^order D_K(x) dx` by adaptive quadrature on the tangent-mapped line.
    pub fn quadrature_moment(&self, order: u32) -> Result<T> {
        if order % 2 == 1 {
            return Err(Error::OddMoment(order as usize));
        }
        let d = self.d().to_f64().expect("finite");
        if d <= order as f64 {
            return Err(Error::divergence(order / 2, d));
        }
        let p64 = self.to_f64();
        let integrand = |x: f64| {
            if x == 0.0 {
                return if order == 0 { p64.pdf(0.0) } else { 0.0 };
            }
            (order as f64 * x.abs().ln() + p64.ln_pdf(x)).exp()
        };
        let half = quadrature::integrate_half_line(integrand, Tolerance::default())?;
        Ok(T::lit(2.0 * half.value))
    }

    pub fn to_f64(&self) -> QExpParams<f64> {
        QExpParams {
            k: self.k.to_f64().expect("finite"),
            sigma: self.sigma.to_f64().expect("finite"),
        }
    }

    pub fn sampler(&self) -> QExpSampler {
        QExpSampler::new(&self.to_f64())
    }

    /// `n` independent draws from the generator seeded with `rng_seed`.
    pub fn sample(&self, n: usize, rng_seed: u64) -> Vec<T> {
        let sampler = self.sampler();
        let mut rng = rng_from_seed(rng_seed);
        (0..n).map(|_| T::lit(sampler.sample(&mut rng))).collect()
    }
}

/// Exact mixture sampler: `s ~ chi^2_D`, `xi^2 = s/(D+1)`, `z ~ N(0,1)`,
/// `x = sigma_D z / xi`.
#[derive(Debug, Clone, Copy)]
pub struct QExpSampler {
    chi2: ChiSquared<f64>,
    sigma_d: f64,
    dof_plus_one: f64,
}

impl QExpSampler {
    pub fn new(p: &QExpParams<f64>) -> Self {
        let d = p.d();
        QExpSampler {
            chi2: ChiSquared::new(d).expect("D > 2 checked at construction"),
            sigma_d: p.sigma_d(),
            dof_plus_one: d + 1.0,
        }
    }
}

impl Distribution<f64> for QExpSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let s: f64 = self.chi2.sample(rng);
        let xi = (s / self.dof_plus_one).sqrt();
        let z: f64 = rng.sample(StandardNormal);
        self.sigma_d * z / xi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_k() {
        assert!(QExpParams::from_k(1.5f64, 1.0).is_err());
        assert!(QExpParams::from_k(1.4f64, 1.0).is_err());
        assert!(QExpParams::from_d(2.0f64, 1.0).is_err());
        assert!(QExpParams::from_k(2.0f64, 0.0).is_err());
        assert!(QExpParams::from_k(2.0f64, -1.0).is_err());
    }

    #[test]
    fn k_and_d_forms_agree() {
        for &k in &[1.75f64, 2.0, 4.0, 10.0, 100.0, 1e6] {
            let p = QExpParams::from_k(k, 1.3).unwrap();
            let q = QExpParams::from_d(2.0 * k - 1.0, 1.3).unwrap();
            assert!((p.sigma_k() - p.sigma_d()).abs() <= 4.0 * f64::EPSILON * p.sigma_d());
            assert_eq!(p.k(), q.k());
            assert!(p.norm_k() > 0.0);
        }
    }

    #[test]
    fn pdf_at_origin_k2() {
        // N_2 = 1/(sqrt 2 * Gamma(3/2)) and sigma_2^2 = 1/4, so D_2(0) = 2/pi.
        let p = QExpParams::from_k(2.0f64, 1.0).unwrap();
        assert!((p.pdf(0.0) - 2.0 / std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn gaussian_limit_at_origin() {
        let p = QExpParams::from_k(1e6f64, 1.0).unwrap();
        assert!((p.pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-4);
    }

    #[test]
    fn pdf_even_and_unimodal() {
        let p = QExpParams::from_k(3.3f64, 0.7).unwrap();
        let mut prev = p.pdf(0.0);
        for i in 1..200 {
            let x = i as f64 * 0.05;
            assert_eq!(p.pdf(x), p.pdf(-x));
            assert!(p.pdf(x) < prev);
            prev = p.pdf(x);
        }
    }

    #[test]
    fn matches_scaled_student_t() {
        // Student-t density with nu = D, rescaled by s.
        let p = QExpParams::from_k(3.0f64, 1.7).unwrap();
        let nu = p.d();
        let s = p.student_t_scale();
        for &x in &[0.0, 0.3, 1.0, 4.0, 25.0] {
            let t = x / s;
            let ln_t = ln_gamma((nu + 1.0) / 2.0)
                - ln_gamma(nu / 2.0)
                - 0.5 * (nu * std::f64::consts::PI).ln()
                - (nu + 1.0) / 2.0 * (t * t / nu).ln_1p();
            let expected = (ln_t - s.ln()).exp();
            assert!((p.pdf(x) - expected).abs() < 1e-13 * expected);
        }
    }

    #[test]
    fn quadrature_moments() {
        let p = QExpParams::from_k(4.0f64, 1.0).unwrap();
        assert!((p.quadrature_moment(2).unwrap() - 1.0).abs() < 1e-8);
        assert!((p.quadrature_moment(4).unwrap() - 5.0).abs() < 1e-7);
        assert!((p.moment(4).unwrap() - 5.0).abs() < 1e-12);
        let heavy = QExpParams::from_k(2.0f64, 1.0).unwrap();
        assert!(matches!(
            heavy.quadrature_moment(4),
            Err(Error::MomentDivergence { nu: 2, .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = QExpParams::from_k(4.0f64, 1.0).unwrap();
        assert_eq!(p.sample(100, 42), p.sample(100, 42));
        assert_ne!(p.sample(100, 42), p.sample(100, 43));
    }

    #[test]
    fn single_precision_works() {
        let p = QExpParams::from_k(4.0f32, 1.0).unwrap();
        assert!((p.pdf(0.0) - p.to_f64().pdf(0.0) as f32).abs() < 1e-6);
        assert_eq!(p.sample(3, 1).len(), 3);
    }
}
