use std::sync::Arc;

use qwick_core::distribution::QExpParams;
use qwick_core::estimator::monte_carlo_moments;
use qwick_core::inverse::{
    fit, predict_moments, FitResult, FitStatus, ModelSpec, Parameterization,
};
use qwick_core::resolvent::SpectralMoments;
use qwick_core::tensor::{Dims, RotationTensor};
use qwick_core::Error;

fn scalar_spec() -> ModelSpec {
    ModelSpec::new(Parameterization::ScalarSigma, 8, 32, 5.0)
}

#[test]
fn predictions_scale_and_degenerate() {
    let spec = scalar_spec();
    let one = predict_moments(&spec, &[1.0], 3).unwrap();
    assert!((one.values[1] - 1.0).abs() < 1e-14);
    let two = predict_moments(&spec, &[2.0], 3).unwrap();
    for n in 1..=3 {
        let ratio = two.values[n] / one.values[n];
        assert!((ratio - 4f64.powi(n as i32)).abs() < 1e-12 * ratio);
    }
    let decay = ModelSpec::new(Parameterization::TemporalExpdecay, 8, 32, 5.0);
    let flat = predict_moments(&decay, &[1.0, 0.0], 3).unwrap();
    assert_eq!(flat.values, one.values);
    assert!(predict_moments(&spec, &[-1.0], 3).is_err());
}

#[test]
fn predictions_are_smooth_in_structure() {
    let spec = ModelSpec::new(Parameterization::TemporalExpdecay, 3, 6, 6.0);
    let h = 1e-4;
    let f = |a: f64| predict_moments(&spec, &[1.0, a], 3).unwrap().values[3];
    let (l, c, r) = (f(0.3 - h), f(0.3), f(0.3 + h));
    let second = (l - 2.0 * c + r) / (h * h);
    assert!(second.is_finite() && second.abs() < 1e4);
    assert!((r - l).abs() < 1e-2);
}

#[test]
fn noiseless_scalar_recovery() {
    let spec = scalar_spec();
    let m = predict_moments(&spec, &[1.3], 3).unwrap();
    let res = fit(&spec, &m, None, 2000).unwrap();
    assert_eq!(res.status, FitStatus::Converged);
    assert!((res.values[0] - 1.3).abs() < 1e-4, "{:?}", res.values);
    assert!(res.objective <= res.initial_objective);
    assert_eq!(res.objective, res.recompute_objective());
    assert!(res.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn scale_equivariance() {
    let spec = scalar_spec();
    let m = predict_moments(&spec, &[0.8], 3).unwrap();
    let s: f64 = 2.25;
    let scaled = SpectralMoments {
        ratio: m.ratio,
        values: m
            .values
            .iter()
            .enumerate()
            .map(|(n, v)| v * s.powi(n as i32))
            .collect(),
    };
    let a = fit(&spec, &m, None, 2000).unwrap().values[0];
    let b = fit(&spec, &scaled, None, 2000).unwrap().values[0];
    assert!((b / a - s.sqrt()).abs() < 1e-5, "{a} {b}");
}

#[test]
fn two_parameter_recovery_one_factor() {
    let spec = ModelSpec::new(Parameterization::CrossSectionalOnefactor, 4, 8, 6.0);
    let m = predict_moments(&spec, &[1.1, 1.5], 3).unwrap();
    let res = fit(&spec, &m, None, 4000).unwrap();
    assert!(
        (res.value("sigma").unwrap() - 1.1).abs() < 1e-3,
        "{:?}",
        res.values
    );
    assert!(
        (res.value("beta").unwrap() - 1.5).abs() < 1e-2,
        "{:?}",
        res.values
    );
}

#[test]
fn overparameterised_spec_rejected() {
    let mut spec = ModelSpec::new(Parameterization::Combined, 4, 8, 6.0);
    spec.fit_k = true;
    let m = SpectralMoments {
        ratio: 0.5,
        values: vec![1.0, 1.0, 1.6, 3.2],
    };
    assert!(matches!(
        fit(&spec, &m, None, 100),
        Err(Error::Specification(_))
    ));
    // r = 0.5 measured, spec has N / T = 0.25
    assert!(matches!(
        fit(&scalar_spec(), &m, None, 100),
        Err(Error::Specification(_))
    ));
}

#[test]
fn monte_carlo_closed_loop() {
    let o = Arc::new(RotationTensor::identity(Dims::new(32, 128).unwrap()));
    let p = QExpParams::from_k(5.0, 1.3).unwrap();
    let seeds: Vec<u64> = (0..200).collect();
    let mc = monte_carlo_moments(&o, &p, &seeds, 3).unwrap();
    let spec = ModelSpec::new(Parameterization::ScalarSigma, 32, 128, 5.0);
    let res = fit(&spec, &mc.as_moments(), None, 1000).unwrap();
    assert!((res.values[0] - 1.3).abs() < 0.05 * 1.3, "{:?}", res.values);
}

#[test]
fn fit_result_json_round_trip() {
    let spec = scalar_spec();
    let m = predict_moments(&spec, &[1.0], 2).unwrap();
    let res = fit(&spec, &m, None, 500).unwrap();
    let json = serde_json::to_string(&res).unwrap();
    assert!(json.contains("\"parameterization\":\"scalar-sigma\""));
    let back: FitResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, res);
}
