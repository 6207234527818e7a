//! The indirect problem: recover `(sigma, K)` and a few structural parameters
//! of the rotation tensor from measured spectral moments by weighted moment
//! matching with a bounded Nelder-Mead search.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::QExpParams;
use crate::error::{Error, Result};
use crate::resolvent::{MomentPatterns, SpectralMoments};
use crate::rng::rng_stream;
use crate::tensor::{DenseMatrix, Dims, RotationTensor};

pub const RESTARTS: usize = 5;
pub const CONVERGENCE_DIAMETER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameterization {
    /// `O = identity`; free: `sigma`.
    ScalarSigma,
    /// `O = A (x) I`, `A = I + beta 1 1^T / N`; free: `sigma`, `beta`.
    CrossSectionalOnefactor,
    /// `O = I (x) B`, `B_{t,l} = a^(t-l)` for `l <= t`; free: `sigma`, `a`.
    TemporalExpdecay,
    /// Both structures; free: `sigma`, `beta`, `a`.
    Combined,
}

impl Parameterization {
    fn structure_names(self) -> &'static [&'static str] {
        match self {
            Parameterization::ScalarSigma => &[],
            Parameterization::CrossSectionalOnefactor => &["beta"],
            Parameterization::TemporalExpdecay => &["a"],
            Parameterization::Combined => &["beta", "a"],
        }
    }
}

impl std::str::FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scalar-sigma" => Ok(Parameterization::ScalarSigma),
            "cross-sectional-onefactor" => Ok(Parameterization::CrossSectionalOnefactor),
            "temporal-expdecay" => Ok(Parameterization::TemporalExpdecay),
            "combined" => Ok(Parameterization::Combined),
            other => Err(Error::Specification(format!(
                "unknown parameterization {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

fn default_bound(name: &str) -> Bound {
    let (lower, upper) = match name {
        "sigma" => (1e-6, 1e6),
        "beta" => (-0.9, 20.0),
        // m_n is even in a, so only a >= 0 is identifiable.
        "a" => (0.0, 0.95),
        "K" => (1.6, 1e4),
        _ => unreachable!("no default bound for {name}"),
    };
    Bound {
        name: name.to_string(),
        lower,
        upper,
    }
}

/// Model family, fixed values and bounds for the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub parameterization: Parameterization,
    pub n: usize,
    pub t: usize,
    /// Shape `K`; the fixed value, or the starting value when `fit_k`.
    pub k: f64,
    #[serde(default)]
    pub fit_k: bool,
    /// Overrides of the default box bounds, by parameter name.
    #[serde(default)]
    pub bounds: Vec<Bound>,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(parameterization: Parameterization, n: usize, t: usize, k: f64) -> Self {
        ModelSpec {
            parameterization,
            n,
            t,
            k,
            fit_k: false,
            bounds: Vec::new(),
            seed: 0,
        }
    }

    /// Free parameter names in vector order: `sigma`, structure, then `K`.
    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["sigma".to_string()];
        out.extend(
            self.parameterization
                .structure_names()
                .iter()
                .map(|s| s.to_string()),
        );
        if self.fit_k {
            out.push("K".into());
        }
        out
    }

    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.n, self.t)
    }

    pub fn bound_list(&self) -> Vec<Bound> {
        self.names()
            .iter()
            .map(|n| {
                self.bounds
                    .iter()
                    .find(|b| &b.name == n)
                    .cloned()
                    .unwrap_or_else(|| default_bound(n))
            })
            .collect()
    }

    /// Hard identifiability guard against the number of nontrivial moments.
    pub fn validate(&self, moments: usize) -> Result<()> {
        self.dims()?;
        let free = self.names().len();
        if moments < 2 {
            return Err(Error::Specification(format!(
                "need at least 2 nontrivial moments, got {moments}"
            )));
        }
        if free + 1 > moments {
            return Err(Error::Specification(format!(
                "{free} free parameters are not identifiable from {moments} moments (at most {})",
                moments - 1
            )));
        }
        if self.fit_k && moments < 4 {
            return Err(Error::Specification(format!(
                "fitting K needs at least 4 moments, got {moments}"
            )));
        }
        for b in &self.bounds {
            if !self.names().contains(&b.name) {
                return Err(Error::Specification(format!(
                    "bound for unknown parameter {:?}",
                    b.name
                )));
            }
        }
        for b in self.bound_list() {
            if !(b.lower < b.upper) || !b.lower.is_finite() || !b.upper.is_finite() {
                return Err(Error::Specification(format!(
                    "empty or infinite bound [{}, {}] for {}",
                    b.lower, b.upper, b.name
                )));
            }
        }
        QExpParams::from_k(self.k, 1.0)?;
        Ok(())
    }

    /// Rotation tensor for the structural parameters `(beta?, a?)`.
    pub fn rotation(&self, structure: &[f64]) -> Result<RotationTensor<f64>> {
        let dims = self.dims()?;
        let (n, t) = (dims.n, dims.t);
        let one_factor = |beta: f64| {
            DenseMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) + beta / n as f64)
        };
        let decay = |a: f64| {
            DenseMatrix::from_fn(
                t,
                t,
                |r, l| if l <= r { a.powi((r - l) as i32) } else { 0.0 },
            )
        };
        match (self.parameterization, structure) {
            (Parameterization::ScalarSigma, []) => Ok(RotationTensor::identity(dims)),
            (Parameterization::CrossSectionalOnefactor, &[beta]) => {
                RotationTensor::kronecker(one_factor(beta), DenseMatrix::identity(t))
            }
            (Parameterization::TemporalExpdecay, &[a]) => {
                RotationTensor::kronecker(DenseMatrix::identity(n), decay(a))
            }
            (Parameterization::Combined, &[beta, a]) => {
                RotationTensor::kronecker(one_factor(beta), decay(a))
            }
            _ => Err(Error::Specification(format!(
                "{:?} takes {} structural parameters, got {}",
                self.parameterization,
                self.parameterization.structure_names().len(),
                structure.len()
            ))),
        }
    }
}

type PatternCache = HashMap<(Vec<u64>, usize), Arc<MomentPatterns<f64>>>;

/// Direct-problem evaluator for a spec. Pattern sums depend only on the
/// structural parameters, so they are cached; `sigma` and `K` only enter
/// through the analytic weights.
pub struct Predictor {
    spec: ModelSpec,
    cache: Mutex<PatternCache>,
}

const CACHE_LIMIT: usize = 4096;

impl Predictor {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.dims()?;
        Ok(Predictor {
            spec,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn split<'a>(&self, theta: &'a [f64]) -> Result<(f64, &'a [f64], f64)> {
        let names = self.spec.names();
        if theta.len() != names.len() {
            return Err(Error::Dimension(format!(
                "parameter vector has {} entries, spec has {:?}",
                theta.len(),
                names
            )));
        }
        for (v, b) in theta.iter().zip(self.spec.bound_list()) {
            if !(b.lower..=b.upper).contains(v) {
                return Err(Error::InvalidParameter {
                    name: "theta",
                    value: *v,
                    reason: "outside its box bound",
                });
            }
        }
        let s = self.spec.parameterization.structure_names().len();
        let k = if self.spec.fit_k {
            theta[1 + s]
        } else {
            self.spec.k
        };
        Ok((theta[0], &theta[1..1 + s], k))
    }

    fn patterns(&self, structure: &[f64], n_max: usize) -> Result<Arc<MomentPatterns<f64>>> {
        let key = (
            structure.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            n_max,
        );
        if let Some(p) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(p));
        }
        let built = Arc::new(MomentPatterns::build(
            &self.spec.rotation(structure)?,
            n_max,
        )?);
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&built));
        Ok(built)
    }

    pub fn predict(&self, theta: &[f64], n_max: usize) -> Result<SpectralMoments<f64>> {
        let (sigma, structure, k) = self.split(theta)?;
        let p = QExpParams::from_k(k, sigma)?;
        self.patterns(structure, n_max)?.evaluate(&p)
    }
}

/// Planar moments `m_0..=m_{n_max}` of the model at `theta`.
pub fn predict_moments(
    spec: &ModelSpec,
    theta: &[f64],
    n_max: usize,
) -> Result<SpectralMoments<f64>> {
    Predictor::new(spec.clone())?.predict(theta, n_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Converged,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameterization: Parameterization,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub bounds: Vec<Bound>,
    /// `sum_n w_n residual_n^2`, summed in order `n = 1, 2, ...`.
    pub objective: f64,
    pub initial_objective: f64,
    /// `m_n^pred - m_n^emp` for `n = 1..`.
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
    pub predicted: Vec<f64>,
    pub status: FitStatus,
    pub evaluations: usize,
    pub restart: usize,
    /// Best objective after each simplex iteration of the winning restart.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn recompute_objective(&self) -> f64 {
        weighted_objective(&self.residuals, &self.weights)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }
}

fn weighted_objective(residuals: &[f64], weights: &[f64]) -> f64 {
    residuals
        .iter()
        .zip(weights)
        .fold(0.0, |acc, (r, w)| acc + w * r * r)
}

#[derive(Debug, Clone)]
struct Run {
    x: Vec<f64>,
    f: f64,
    f0: f64,
    status: FitStatus,
    evaluations: usize,
    trace: Vec<f64>,
}

/// Bounded Nelder-Mead: vertices are projected onto the box. Converged when
/// the simplex diameter relative to the best vertex falls below `tol`.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    budget: usize,
    tol: f64,
) -> Run {
    let dim = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
            *v = v.clamp(*l, *h);
        }
    };
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for i in 0..dim {
        let mut v = start.clone();
        let span = hi[i] - lo[i];
        let step = if v[i] != 0.0 {
            0.1 * v[i].abs()
        } else {
            0.05 * span.min(1.0)
        };
        v[i] = if v[i] + step <= hi[i] {
            v[i] + step
        } else {
            v[i] - step
        };
        clamp(&mut v);
        let fv = eval(&v, &mut evals);
        simplex.push((v, fv));
    }
    let mut trace = Vec::new();
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    let diameter = |s: &[(Vec<f64>, f64)]| {
        let best = &s[0].0;
        let scale = best.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        s[1..]
            .iter()
            .map(|(x, _)| {
                x.iter()
                    .zip(best)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(0.0, f64::max)
            / scale
    };
    let status = loop {
        trace.push(simplex[0].1);
        if diameter(&simplex) < tol {
            break FitStatus::Converged;
        }
        if evals + dim + 2 > budget {
            break FitStatus::BudgetExhausted;
        }
        let worst = simplex[dim].clone();
        let mut centroid = vec![0.0; dim];
        for (x, _) in &simplex[..dim] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / dim as f64;
            }
        }
        let along = |t: f64| {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp(&mut p);
            p
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = best
                        .iter()
                        .zip(&v.0)
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    clamp(&mut x);
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
        order(&mut simplex);
    };
    Run {
        x: simplex[0].0.clone(),
        f: simplex[0].1,
        f0,
        status,
        evaluations: evals,
        trace,
    }
}

/// Fit the spec to empirical moments `m_1..=m_n`. Default weights are
/// `m_n^-2`. Five restarts run in parallel; the lowest objective wins, ties
/// going to the lowest restart index.
pub fn fit(
    spec: &ModelSpec,
    empirical: &SpectralMoments<f64>,
    weights: Option<&[f64]>,
    budget: usize,
) -> Result<FitResult> {
    let emp: Vec<f64> = empirical.values.iter().skip(1).copied().collect();
    let n_max = emp.len();
    spec.validate(n_max)?;
    let r = spec.n as f64 / spec.t as f64;
    if (empirical.ratio - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Specification(format!(
            "moments were measured at r = {} but the spec has N / T = {r}",
            empirical.ratio
        )));
    }
    let weights: Vec<f64> = match weights {
        Some(w) if w.len() != n_max => {
            return Err(Error::Dimension(format!(
                "{} weights for {n_max} moments",
                w.len()
            )));
        }
        Some(w) => w.to_vec(),
        None => emp.iter().map(|m| 1.0 / (m * m)).collect(),
    };
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Specification(
            "weights must be finite and positive".into(),
        ));
    }
    let mut bounds = spec.bound_list();
    if spec.fit_k {
        // Every moment up to n_max must exist: D > 2 n_max.
        let kb = bounds.last_mut().expect("K bound");
        kb.lower = kb.lower.max(n_max as f64 + 0.5 + 1e-6);
        if kb.lower >= kb.upper {
            return Err(Error::Specification(
                "K bound excludes all finite-moment shapes".into(),
            ));
        }
    }
    let fit_spec = ModelSpec {
        bounds: bounds.clone(),
        ..spec.clone()
    };
    let predictor = Predictor::new(fit_spec)?;
    let objective = |theta: &[f64]| -> f64 {
        match predictor.predict(theta, n_max) {
            Ok(m) => {
                let res: Vec<f64> = m.values[1..].iter().zip(&emp).map(|(p, e)| p - e).collect();
                weighted_objective(&res, &weights)
            }
            Err(_) => f64::INFINITY,
        }
    };
    let lo: Vec<f64> = bounds.iter().map(|b| b.lower).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.upper).collect();
    let names = spec.names();
    let guess: Vec<f64> = names
        .iter()
        .zip(&bounds)
        .map(|(n, b)| {
            let v = match n.as_str() {
                "sigma" => emp[0].max(1e-300).sqrt(),
                "K" => spec.k,
                _ => 0.0,
            };
            v.clamp(b.lower, b.upper)
        })
        .collect();
    let per_restart = (budget / RESTARTS).max(names.len() + 3);
    let runs: Vec<Run> = (0..RESTARTS)
        .into_par_iter()
        .map(|restart| {
            let start = if restart == 0 {
                guess.clone()
            } else {
                let mut rng = rng_stream(spec.seed, restart as u64);
                guess
                    .iter()
                    .zip(names.iter().zip(&bounds))
                    .map(|(g, (n, b))| match n.as_str() {
                        "sigma" => (g * rng.random_range(0.5..2.0)).clamp(b.lower, b.upper),
                        "K" => (g * rng.random_range(0.5..2.0)).clamp(b.lower, b.upper),
                        _ => {
                            let (l, h) = (b.lower, b.upper.min(b.lower + 10.0));
                            rng.random_range(l..h)
                        }
                    })
                    .collect()
            };
            nelder_mead(
                objective,
                &start,
                &lo,
                &hi,
                per_restart,
                CONVERGENCE_DIAMETER,
            )
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let (restart, best) = runs
        .iter()
        .enumerate()
        .fold(None::<(usize, &Run)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.f <= r.f => acc,
            _ => Some((i, r)),
        })
        .expect("at least one restart");
    let predicted = predictor.predict(&best.x, n_max)?;
    let residuals: Vec<f64> = predicted.values[1..]
        .iter()
        .zip(&emp)
        .map(|(p, e)| p - e)
        .collect();
    let objective = weighted_objective(&residuals, &weights);
    Ok(FitResult {
        parameterization: spec.parameterization,
        names,
        values: best.x.clone(),
        bounds,
        objective,
        initial_objective: runs[0].f0,
        residuals,
        weights,
        predicted: predicted.values,
        status: best.status,
        evaluations,
        restart,
        trace: best.trace.clone(),
    })
}
