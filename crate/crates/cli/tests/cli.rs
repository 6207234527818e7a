use std::process::Command;

use qwick_core::distribution::QExpParams;
use qwick_core::estimator::{import_panel, write_matrix_csv};
use qwick_core::resolvent::SpectralMoments;
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("qwick").chain(args.iter().copied());
    let code = qwick_cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

#[test]
fn spectral_identity_example() {
    let (code, out, _) = run(&[
        "spectral",
        "--K",
        "4",
        "--sigma",
        "1",
        "--N",
        "8",
        "--T",
        "32",
        "--rotation",
        "identity",
        "--nmax",
        "3",
    ]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "n,planar");
    assert_eq!(lines[1], "1,1.0");
}

#[test]
fn check_example_passes() {
    let (code, out, err) = run(&["check", "--order", "3", "--seed", "7"]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["planar"]["order"], 3);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["spectral", "--bogus"][..],
        &["spectral", "--N", "4", "--T", "8"][..],
        &["spectral", "--K", "4", "--D", "7", "--N", "4", "--T", "8"][..],
        &[
            "spectral", "--K", "4", "--N", "4", "--T", "8", "--seeds", "5..1",
        ][..],
        &["spectral", "--K", "1.2", "--N", "4", "--T", "8"][..],
        &[
            "moment", "--K", "4", "--N", "2", "--T", "2", "--slots", "3:1,1:1",
        ][..],
        &["check", "--order", "5"][..],
    ] {
        let (code, _, err) = run(args);
        assert_eq!(code, 2, "{args:?}: {err}");
        assert!(!err.is_empty());
    }
}

#[test]
fn divergence_exits_one_and_names_nu_and_d() {
    let (code, _, err) = run(&[
        "moment",
        "--K",
        "2",
        "--N",
        "1",
        "--T",
        "1",
        "--slots",
        "1:1,1:1,1:1,1:1",
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("nu = 2") && err.contains("D = 3"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_qwick");
    let ok = Command::new(bin)
        .args(["pdf", "--K", "3", "--points", "5"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let usage = Command::new(bin).args(["pdf"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));
    let help = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn pdf_table_round_trips() {
    let (code, out, _) = run(&["pdf", "--K", "2.5", "--sigma", "0.7", "--points", "41"]);
    assert_eq!(code, 0);
    let p = QExpParams::<f64>::from_k(2.5, 0.7).unwrap();
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let x: f64 = rec[0].parse().unwrap();
        let y: f64 = rec[1].parse().unwrap();
        assert_eq!(y, p.pdf(x));
        rows += 1;
    }
    assert_eq!(rows, 41);
}

#[test]
fn moment_matches_variance() {
    let (code, out, _) = run(&[
        "moment", "--K", "6", "--sigma", "1.5", "--N", "2", "--T", "3", "--slots", "2:3,2:3",
        "--format", "json",
    ]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pairings"], 1);
    assert!((v["value"].as_f64().unwrap() - 2.25).abs() < 1e-14);
}

#[test]
fn sample_writes_panels_that_import_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("panels");
    let (code, listing, err) = run(&[
        "sample",
        "--K",
        "3",
        "--N",
        "3",
        "--T",
        "7",
        "--seeds",
        "4,9",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(listing.lines().count(), 2);
    for seed in [4u64, 9] {
        let (x, meta) = import_panel(&out_dir, &format!("panel_{seed}")).unwrap();
        assert_eq!((meta.n, meta.t, meta.seed), (3, 7, seed));
        // re-serialising what was read gives the same bytes
        let mut again = Vec::new();
        write_matrix_csv(&mut again, &x, "t").unwrap();
        let on_disk = std::fs::read(out_dir.join(format!("panel_{seed}.csv"))).unwrap();
        assert_eq!(again, on_disk);
    }
}

#[test]
fn spectral_json_feeds_fit() {
    let dir = tempfile::tempdir().unwrap();
    let moments = dir.path().join("m.json");
    let (code, _, err) = run(&[
        "spectral",
        "--K",
        "5",
        "--sigma",
        "1.3",
        "--N",
        "8",
        "--T",
        "32",
        "--nmax",
        "3",
        "--format",
        "json",
        "--out",
        moments.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let m: SpectralMoments<f64> =
        serde_json::from_str(&std::fs::read_to_string(&moments).unwrap()).unwrap();
    assert_eq!(m.values.len(), 4);
    assert_eq!(m.ratio, 0.25);

    let (code, out, err) = run(&[
        "fit",
        "--K",
        "5",
        "--N",
        "8",
        "--T",
        "32",
        "--moments",
        moments.to_str().unwrap(),
        "--model",
        "scalar-sigma",
    ]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["status"], "converged");
    assert!((v["values"][0].as_f64().unwrap() - 1.3).abs() < 1e-4);

    // more free parameters than moments
    let (code, _, err) = run(&[
        "fit",
        "--K",
        "5",
        "--N",
        "8",
        "--T",
        "32",
        "--moments",
        moments.to_str().unwrap(),
        "--model",
        "combined",
        "--fit-k",
    ]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn spectral_monte_carlo_and_histogram() {
    let (code, out, err) = run(&[
        "spectral", "--K", "5", "--N", "4", "--T", "16", "--nmax", "2", "--seeds", "0..6",
        "--bins", "8", "--format", "json",
    ]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["monte_carlo"]["panels"], 6);
    let mass: f64 = v["histogram"]["mass"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m.as_f64().unwrap())
        .sum();
    assert!((mass - 1.0).abs() < 1e-12);
    let (code, _, _) = run(&[
        "spectral", "--K", "5", "--N", "4", "--T", "16", "--bins", "8",
    ]);
    assert_eq!(code, 2);
}

#[test]
fn kronecker_rotation_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    std::fs::write(&a, "c1,c2\n1.0,0.5\n0.0,1.0\n").unwrap();
    std::fs::write(&b, "c1,c2,c3\n1.0,0.0,0.0\n0.3,1.0,0.0\n0.0,0.3,1.0\n").unwrap();
    let rot = format!("kron:{},{}", a.display(), b.display());
    let (code, out, err) = run(&[
        "spectral",
        "--K",
        "6",
        "--rotation",
        &rot,
        "--nmax",
        "2",
        "--format",
        "json",
    ]);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!((v["r"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    // first moment is the normalised trace of the two-point function
    let m1 = v["moments"][1].as_f64().unwrap();
    let expect = (1.0 + 0.25 + 1.0) * (1.0 + 1.09 + 1.09) / 6.0;
    assert!((m1 - expect).abs() < 1e-12, "{m1} vs {expect}");
    let (code, _, _) = run(&["spectral", "--K", "6", "--N", "3", "--rotation", &rot]);
    assert_eq!(code, 2);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[params]\nK = 4.0\nsigma = 2.0\n\n[dims]\nN = 4\nT = 16\n\n[run]\nnmax = 2\n",
    )
    .unwrap();
    let (code, out, _) = run(&["spectral", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.lines().nth(1).unwrap().starts_with("1,4.0"), "{out}");
    let (code, out, _) = run(&[
        "spectral",
        "--config",
        cfg.to_str().unwrap(),
        "--sigma",
        "1",
    ]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().nth(1).unwrap(), "1,1.0");
}

#[test]
fn fit_monte_carlo_block() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("mc.json");
    let path = m.to_str().unwrap();
    let common = ["--K", "5", "--sigma", "1.2", "--N", "8", "--T", "32"];
    let mut args = vec![
        "spectral", "--seeds", "0..60", "--format", "json", "--out", path,
    ];
    args.extend(common);
    assert_eq!(run(&args).0, 0);
    let mut args = vec!["fit", "--moments", path, "--monte-carlo"];
    args.extend(common);
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    let sigma = v["values"][0].as_f64().unwrap();
    // sampled moments, so not exact, but close
    assert!((sigma - 1.2).abs() < 0.05 * 1.2, "{sigma}");
    assert!(v["objective"].as_f64().unwrap() > 0.0);
    // a planar-only file has no Monte Carlo block
    let mut args = vec!["spectral", "--format", "json", "--out", path];
    args.extend(common);
    assert_eq!(run(&args).0, 0);
    let mut args = vec!["fit", "--moments", path, "--monte-carlo"];
    args.extend(common);
    assert_eq!(run(&args).0, 2);
}
