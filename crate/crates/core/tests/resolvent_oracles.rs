use qwick_core::distribution::QExpParams;
use qwick_core::partition::enumerate_pair_partitions;
use qwick_core::resolvent::{
    average_xi, check_planar_consistency, solve_resolvent, spectral_moments_direct, MomentPatterns,
};
use qwick_core::rng::rng_from_seed;
use qwick_core::tensor::{DenseMatrix, Dims, RotationTensor};
use rand::Rng;

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Marchenko-Pastur moments from Narayana numbers.
fn narayana_moment(n: u64, r: f64) -> f64 {
    (0..n)
        .map(|k| r.powi(k as i32) / (k + 1) as f64 * binomial(n, k) * binomial(n - 1, k))
        .sum()
}

fn random_dense(dims: Dims, seed: u64) -> RotationTensor<f64> {
    let nt = dims.flat_len();
    let mut rng = rng_from_seed(seed);
    let m = DenseMatrix::from_fn(nt, nt, |a, b| {
        let noise: f64 = rng.random_range(-0.5..0.5);
        if a == b {
            1.0 + noise
        } else {
            noise
        }
    });
    RotationTensor::dense(dims, m).unwrap()
}

fn random_square(n: usize, rng: &mut impl Rng) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(n, n, |i, j| {
        let v: f64 = rng.random_range(-0.6..0.6);
        if i == j {
            1.0 + v
        } else {
            v
        }
    })
}

fn cycles(perm: &[usize]) -> Vec<usize> {
    let mut seen = vec![false; perm.len()];
    let mut out = Vec::new();
    for s in 0..perm.len() {
        if seen[s] {
            continue;
        }
        let mut len = 0;
        let mut x = s;
        while !seen[x] {
            seen[x] = true;
            x = perm[x];
            len += 1;
        }
        out.push(len);
    }
    out
}

fn normalised_trace_powers(m: &DenseMatrix<f64>, max: usize) -> Vec<f64> {
    let n = m.rows();
    let mut out = vec![1.0];
    let mut p = DenseMatrix::identity(n);
    for _ in 0..max {
        p = p.mul(m);
        out.push((0..n).map(|i| *p.get(i, i)).sum::<f64>() / n as f64);
    }
    out
}

/// Planar moments of the Gaussian doubly-correlated Wishart ensemble
/// `X = A Y B^T`: pairings of the trace word whose row and column graphs have
/// `n + 1` cycles in total, each contributing `r^(R-1) prod a_l prod b_l`.
fn wishart_planar_moment(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>, n: usize, r: f64) -> f64 {
    let cn = a.mul(&a.transpose());
    let ct = b.mul(&b.transpose());
    let an = normalised_trace_powers(&cn, n);
    let bt = normalised_trace_powers(&ct, n);
    let mut total = 0.0;
    for pairing in enumerate_pair_partitions(n).unwrap() {
        // slot 2k = X_{i_k, t_k}, slot 2k+1 = X_{i_{k+1}, t_k}
        let row = |s: usize| {
            if s.is_multiple_of(2) {
                s / 2
            } else {
                (s / 2 + 1) % n
            }
        };
        let col = |s: usize| s / 2;
        // Each index has two slots; link the index at one end of a pair to the other.
        let mut row_adj = vec![Vec::new(); n];
        let mut col_adj = vec![Vec::new(); n];
        for &(x, y) in pairing.pairs() {
            row_adj[row(x)].push(row(y));
            row_adj[row(y)].push(row(x));
            col_adj[col(x)].push(col(y));
            col_adj[col(y)].push(col(x));
        }
        let count = |adj: &Vec<Vec<usize>>| -> Vec<usize> {
            // Walk the 2-regular multigraph into cycles.
            let mut used = vec![vec![false; 2]; n];
            let mut lens = Vec::new();
            for s in 0..n {
                for e in 0..2 {
                    if used[s][e] {
                        continue;
                    }
                    let (mut v, mut edge, mut len) = (s, e, 0);
                    loop {
                        used[v][edge] = true;
                        let w = adj[v][edge];
                        let back = (0..2).find(|&f| adj[w][f] == v && !used[w][f]).unwrap();
                        used[w][back] = true;
                        len += 1;
                        v = w;
                        edge = 1 - back;
                        if used[v][edge] {
                            break;
                        }
                    }
                    lens.push(len);
                }
            }
            lens
        };
        let rc = count(&row_adj);
        let cc = count(&col_adj);
        if rc.len() + cc.len() != n + 1 {
            continue;
        }
        let mut term = r.powi(rc.len() as i32 - 1);
        for l in rc {
            term *= an[l];
        }
        for l in cc {
            term *= bt[l];
        }
        total += term;
    }
    total
}

#[test]
fn cycle_helper_sanity() {
    assert_eq!(cycles(&[1, 0, 2]), vec![2, 1]);
}

#[test]
fn identity_reduces_to_marchenko_pastur() {
    for &(n, t) in &[(2usize, 8usize), (4, 8), (4, 4), (3, 12)] {
        let o = RotationTensor::identity(Dims::new(n, t).unwrap());
        let r = n as f64 / t as f64;
        let m = MomentPatterns::build(&o, 5)
            .unwrap()
            .evaluate_gaussian(1.0)
            .unwrap();
        for k in 1..=5 {
            let mp = narayana_moment(k as u64, r);
            assert!(
                (m.values[k] - mp).abs() < 1e-12 * mp,
                "N={n} T={t} k={k}: {} vs {mp}",
                m.values[k]
            );
        }
        let p = QExpParams::<f64>::from_d(1e6, 1.0).unwrap();
        let m = spectral_moments_direct(&o, &p, 3).unwrap();
        assert!((m.values[2] - (1.0 + r)).abs() < 1e-3);
        assert!((m.values[3] - (1.0 + 3.0 * r + r * r)).abs() < 1e-3);
    }
}

#[test]
fn factorised_gaussian_limit_matches_wishart_planar_oracle() {
    let mut rng = rng_from_seed(2024);
    for &(n, t) in &[(2usize, 3usize), (3, 2), (2, 2)] {
        let a = random_square(n, &mut rng);
        let b = random_square(t, &mut rng);
        let o = RotationTensor::kronecker(a.clone(), b.clone()).unwrap();
        let r = n as f64 / t as f64;
        let m = MomentPatterns::build(&o, 4)
            .unwrap()
            .evaluate_gaussian(1.0)
            .unwrap();
        for k in 1..=4 {
            let oracle = wishart_planar_moment(&a, &b, k, r);
            assert!(
                (m.values[k] - oracle).abs() < 1e-11 * oracle.abs(),
                "N={n} T={t} k={k}: {} vs {oracle}",
                m.values[k]
            );
        }
    }
}

#[test]
fn identity_finite_d_second_moment() {
    // Planar m_2 = sigma^4 (1 + r + (2 kappa / 3 - 2) / T), kappa = 3 (D-2)/(D-4).
    let (n, t) = (3usize, 5usize);
    let o = RotationTensor::identity(Dims::new(n, t).unwrap());
    let p = QExpParams::<f64>::from_k(4.0, 1.2).unwrap();
    let d: f64 = 7.0;
    let kappa = 3.0 * (d - 2.0) / (d - 4.0);
    let m = spectral_moments_direct(&o, &p, 2).unwrap();
    let expect =
        1.2f64.powi(4) * (1.0 + n as f64 / t as f64 + (2.0 * kappa / 3.0 - 2.0) / t as f64);
    assert!((m.values[2] - expect).abs() < 1e-12 * expect);
    assert!((m.values[1] - 1.44).abs() < 1e-13);
}

#[test]
fn truncation_is_bitwise_stable() {
    let o = random_dense(Dims::new(2, 3).unwrap(), 5);
    let p = QExpParams::<f64>::from_k(8.0, 0.9).unwrap();
    let lo = spectral_moments_direct(&o, &p, 3).unwrap();
    let hi = spectral_moments_direct(&o, &p, 4).unwrap();
    assert_eq!(lo.values[..], hi.values[..4]);
}

#[test]
fn traces_are_positive_over_random_tensors() {
    let p = QExpParams::<f64>::from_k(6.0, 1.0).unwrap();
    for seed in 0..100 {
        let o = random_dense(Dims::new(2, 2).unwrap(), 1000 + seed);
        let m = spectral_moments_direct(&o, &p, 4).unwrap();
        assert!(m.is_admissible(), "seed {seed}: {:?}", m.values);
    }
}

#[test]
fn planar_consistency_reports() {
    let p = QExpParams::<f64>::from_k(4.0, 1.0).unwrap();
    let o = random_dense(Dims::new(2, 2).unwrap(), 77);
    for order in [2, 3] {
        let rep = check_planar_consistency(&o, &p, order).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.non_planar_note.contains("1/N"));
    }
    let id = RotationTensor::identity(Dims::new(2, 2).unwrap());
    assert!(check_planar_consistency(&id, &p, 2).unwrap().passed());
    assert!(check_planar_consistency(&id, &p, 4).is_err());
}

#[test]
fn order_two_frozen_value_against_quadrature() {
    // N = 1, T = 2, K = 4: g^(2) = (2 u_1^2 + 2 u_2^2 + 2 u_1 u_2) / 4, averaged with the
    // mixture weight by 2-d quadrature over xi.
    use qwick_core::quadrature::{integrate_half_line, Tolerance};
    use qwick_core::special::ln_xi_normalisation;
    let p = QExpParams::<f64>::from_k(4.0, 1.0).unwrap();
    let d = p.d();
    let sd2 = p.sigma_d().powi(2);
    let ln_norm = ln_xi_normalisation(d);
    let weight = |xi: f64| (ln_norm + (d - 1.0) * xi.ln() - 0.5 * (d + 1.0) * xi * xi).exp();
    let tol = Tolerance::default();
    let moment = |nu: i32| {
        integrate_half_line(|xi| weight(xi) * (sd2 / (xi * xi)).powi(nu), tol)
            .unwrap()
            .value
    };
    let (e1, e2) = (moment(1), moment(2));
    let quad = (2.0 * e2 + 2.0 * e2 + 2.0 * e1 * e1) / 4.0;
    let o = RotationTensor::identity(Dims::new(1, 2).unwrap());
    let avg = average_xi(&solve_resolvent(&o, 2).unwrap(), &p).unwrap();
    assert!((avg[2].get(0, 0) - quad).abs() < 1e-8);
    assert!((avg[2].get(0, 0) - 13.0 / 6.0).abs() < 1e-12);
}

#[test]
fn desk_scale_identity_moments() {
    let o = RotationTensor::identity(Dims::new(32, 128).unwrap());
    let p = QExpParams::<f64>::from_k(5.0, 1.0).unwrap();
    let start = std::time::Instant::now();
    let m = spectral_moments_direct(&o, &p, 3).unwrap();
    let elapsed = start.elapsed();
    let r = 0.25;
    assert!((m.values[1] - 1.0).abs() < 1e-12);
    let kappa = 3.0 * 7.0 / 5.0;
    let m2 = 1.0 + r + (2.0 * kappa / 3.0 - 2.0) / 128.0;
    assert!((m.values[2] - m2).abs() < 1e-12 * m2);
    assert!(m.values[3] > 1.0 + 3.0 * r + r * r);
    assert!(elapsed.as_secs() < 60, "{elapsed:?}");
    eprintln!(
        "N=32 T=128 n=3 planar moments in {elapsed:?}: {:?}",
        m.values
    );
}
