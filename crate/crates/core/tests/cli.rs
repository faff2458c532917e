use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use linfbp::io;

fn linfbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_linfbp")).args(args).output().expect("run linfbp")
}

fn ok(args: &[&str]) -> String {
    let out = linfbp(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn phantom_writes_description_image_sidecar_and_preview() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sl.f32");
    ok(&["phantom", "--shepp-logan", "--size", "128", "--out", &s(&out)]);
    assert_eq!(files_in(dir.path()), ["sl.f32", "sl.json", "sl.pgm", "sl_spec.json"]);
    let (img, _) = io::read_image(&out).unwrap();
    assert_eq!((img.height(), img.width()), (128, 128));
    let (w, h, _) = io::read_pgm(&dir.path().join("sl.pgm")).unwrap();
    assert_eq!((w, h), (128, 128));
}

#[test]
fn random_phantom_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.f32");
    let b = dir.path().join("b.f32");
    for p in [&a, &b] {
        ok(&["phantom", "--random", "--seed", "7", "--ellipses", "6", "--size", "48", "--out", &s(p)]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.pgm")).unwrap(),
        std::fs::read(dir.path().join("b.pgm")).unwrap()
    );
    assert_eq!(
        std::fs::read(dir.path().join("a_spec.json")).unwrap(),
        std::fs::read(dir.path().join("b_spec.json")).unwrap()
    );
}

#[test]
fn missing_output_directory_fails_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("missing").join("p.f32");
    let res = linfbp(&["phantom", "--shepp-logan", "--size", "16", "--out", &s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(files_in(dir.path()).is_empty());
}

#[test]
fn exit_codes() {
    assert_eq!(linfbp(&["no-such-command"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let sino = dir.path().join("s.f32");
    ok(&["project", "--shepp-logan", "--size", "32", "--bins", "47", "--views", "20", "--out", &s(&sino)]);
    let bad = linfbp(&["reconstruct", "--input", &s(&sino), "--method", "spline_fbp", "--out", "x.f32"]);
    assert_eq!(bad.status.code(), Some(1));
    let no_ckpt = linfbp(&[
        "reconstruct",
        "--input",
        &s(&sino),
        "--method",
        "l_linfbp",
        "--out",
        &s(&dir.path().join("r.f32")),
    ]);
    assert_eq!(no_ckpt.status.code(), Some(2));
    let zero = linfbp(&["train", "--data", &s(dir.path()), "--epochs", "0", "--out", "m.ckpt"]);
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn analytic_and_pixel_driven_projections_agree() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.f32");
    let p = dir.path().join("p.f32");
    let common = ["--shepp-logan", "--size", "256", "--bins", "185", "--bin-width", "0.015625", "--views", "90"];
    for (mode, out) in [("--analytic", s(&a)), ("--pixel-driven", s(&p))] {
        let mut args = vec!["project", mode];
        args.extend(common);
        args.extend(["--out", out.as_str()]);
        ok(&args);
    }
    let (sa, _) = io::read_sinogram(&a).unwrap();
    let (sp, _) = io::read_sinogram(&p).unwrap();
    let num: f64 = sa.samples().iter().zip(sp.samples()).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = sa.samples().iter().map(|x| x * x).sum();
    let rel = (num / den).sqrt();
    assert!(rel < 0.05, "relative difference {rel}");
}

#[test]
fn degrade_reduces_views_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sino = dir.path().join("s.f32");
    ok(&["project", "--shepp-logan", "--size", "64", "--bins", "95", "--views", "120", "--out", &s(&sino)]);
    let q = dir.path().join("q.f32");
    ok(&["degrade", "--input", &s(&sino), "--keep-views", "4", "--out", &s(&q)]);
    assert_eq!(io::read_sinogram(&q).unwrap().0.n_views(), 30);
    let d1 = dir.path().join("d1.f32");
    let d2 = dir.path().join("d2.f32");
    for d in [&d1, &d2] {
        ok(&["degrade", "--input", &s(&sino), "--dose", "0.25", "--dose-seed", "3", "--out", &s(d)]);
    }
    assert_eq!(std::fs::read(&d1).unwrap(), std::fs::read(&d2).unwrap());
    assert_ne!(std::fs::read(&d1).unwrap(), std::fs::read(&sino).unwrap());
    let out = ok(&["verify", &s(&q), &s(&d1), &s(&sino)]);
    assert_eq!(out.lines().filter(|l| l.starts_with("ok")).count(), 3);
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let sino = dir.path().join("s.f32");
    ok(&["project", "--shepp-logan", "--size", "32", "--bins", "47", "--views", "20", "--out", &s(&sino)]);
    let mut bytes = std::fs::read(&sino).unwrap();
    bytes[100] ^= 0x40;
    std::fs::write(&sino, bytes).unwrap();
    let res = linfbp(&["verify", &s(&sino)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stdout).contains("DIFFERS"));
}

fn psnr_from_output(stdout: &str) -> f64 {
    let line = stdout.lines().last().unwrap();
    line.split(',').nth(2).unwrap().parse().unwrap()
}

#[test]
fn reconstruction_quality_and_interpolation_ordering() {
    let dir = tempfile::tempdir().unwrap();
    let phantom = dir.path().join("p.f32");
    ok(&["phantom", "--shepp-logan", "--size", "128", "--out", &s(&phantom)]);
    let dense = dir.path().join("dense.f32");
    ok(&["project", "--shepp-logan", "--size", "128", "--bins", "185", "--views", "360", "--out", &s(&dense)]);
    let recon = |input: &Path, method: &str| {
        let out = dir.path().join(format!("{method}.f32"));
        psnr_from_output(&ok(&[
            "reconstruct",
            "--input",
            &s(input),
            "--method",
            method,
            "--filter",
            "ramp",
            "--reference",
            &s(&phantom),
            "--out",
            &s(&out),
        ]))
    };
    assert!(recon(&dense, "li_fbp") >= 20.0);
    let quarter = dir.path().join("quarter.f32");
    ok(&["degrade", "--input", &s(&dense), "--keep-views", "4", "--out", &s(&quarter)]);
    assert!(recon(&quarter, "li_fbp") >= recon(&quarter, "ne_fbp"));
}

fn make_dataset(dir: &Path, name: &str, count: &str, first_seed: &str) -> PathBuf {
    let data = dir.join(name);
    ok(&[
        "dataset", "--count", count, "--first-seed", first_seed, "--size", "24", "--bins", "37", "--views", "16",
        "--out", &s(&data),
    ]);
    data
}

#[test]
fn resumed_training_continues_the_same_curve() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path(), "data", "3", "40");
    let full = dir.path().join("full.ckpt");
    ok(&["train", "--data", &s(&data), "--epochs", "4", "--seed", "2", "--lr", "1e-3", "--out", &s(&full)]);
    let part = dir.path().join("part.ckpt");
    ok(&["train", "--data", &s(&data), "--epochs", "2", "--seed", "2", "--lr", "1e-3", "--out", &s(&part)]);
    ok(&["train", "--data", &s(&data), "--resume", &s(&part), "--epochs", "4", "--out", &s(&part)]);
    let a = io::read_train_log(&dir.path().join("full.log.csv")).unwrap();
    let b = io::read_train_log(&dir.path().join("part.log.csv")).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.epoch, x.sample_index), (y.epoch, y.sample_index));
        assert!((x.loss - y.loss).abs() <= 1e-12 * x.loss.abs());
    }
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&part).unwrap());
}

#[test]
fn compare_counts_rows_and_summaries_match_columns() {
    let dir = tempfile::tempdir().unwrap();
    let train = make_dataset(dir.path(), "train", "2", "1");
    let test = make_dataset(dir.path(), "test", "8", "500");
    let f = dir.path().join("f.ckpt");
    let l = dir.path().join("l.ckpt");
    ok(&["train", "--data", &s(&train), "--epochs", "1", "--basis", "fourier", "--init", "near-linear", "--out", &s(&f)]);
    ok(&["train", "--data", &s(&train), "--epochs", "1", "--basis", "linear", "--init", "near-linear", "--out", &s(&l)]);
    let csv = dir.path().join("cmp.csv");
    let maps = dir.path().join("maps");
    ok(&[
        "compare",
        "--data",
        &s(&test),
        "--checkpoint",
        &s(&f),
        "--checkpoint",
        &s(&l),
        "--error-maps",
        &s(&maps),
        "--out",
        &s(&csv),
    ]);
    let rows = io::read_metric_csv(&csv).unwrap();
    assert_eq!(rows.len(), 40);
    assert_eq!(files_in(&maps).len(), 40);
    let summary: Vec<linfbp::cli::SummaryRow> = io::read_json(&dir.path().join("cmp.summary.json")).unwrap();
    assert_eq!(summary.len(), 5);
    for row in &summary {
        let col: Vec<f64> = rows.iter().filter(|r| r.method == row.method).map(|r| r.psnr_db).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!((mean - row.psnr_db.mean).abs() < 1e-12);
    }
    let li = summary.iter().find(|r| r.method == "li_fbp").unwrap();
    assert_eq!(li.delta_psnr_db, 0.0);

    let eval_csv = dir.path().join("eval.csv");
    ok(&["eval", "--data", &s(&test), "--method", "l_linfbp", "--checkpoint", &s(&l), "--out", &s(&eval_csv)]);
    let eval_rows = io::read_metric_csv(&eval_csv).unwrap();
    let from_compare: Vec<_> = rows.into_iter().filter(|r| r.method == "l_linfbp").collect();
    assert_eq!(eval_rows, from_compare);
}

#[test]
fn learned_reconstruction_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path(), "data", "2", "9");
    let ckpt = dir.path().join("m.ckpt");
    ok(&["train", "--data", &s(&data), "--epochs", "1", "--out", &s(&ckpt)]);
    let sino = data.join("sample_0000_sino.f32");
    let out = dir.path().join("r.f32");
    ok(&[
        "reconstruct", "--input", &s(&sino), "--method", "l_linfbp", "--checkpoint", &s(&ckpt), "--size", "24",
        "--out", &s(&out),
    ]);
    assert!(ok(&["verify", &s(&out)]).starts_with("ok"));
    let wrong = linfbp(&[
        "reconstruct", "--input", &s(&sino), "--method", "f_linfbp", "--checkpoint", &s(&ckpt), "--out",
        &s(&dir.path().join("w.f32")),
    ]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn run_writes_effective_config_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp");
    let config = serde_json::json!({
        "geometry": {"n_bins": 47, "bin_width_mm": 0.0625, "n_views": 24, "angle_span_rad": std::f64::consts::PI},
        "grid": {"height": 32, "width": 32, "pixel_size_mm": 0.0625},
        "phantom": {"random": {"seed": 3, "ellipses": 5}},
        "degradation": {"keep_every": 2, "dose_fraction": 0.5, "seed": 1},
        "method": "li_fbp",
        "training": {"count": 2, "first_seed": 10, "ellipses": 4,
                     "config": {"basis": {"family": "linear", "k": 2}, "filter": "ramp", "epochs": 1, "seed": 0}},
        "output_dir": s(&dir.path().join("ignored"))
    });
    let path = dir.path().join("exp.json");
    std::fs::write(&path, serde_json::to_vec(&config).unwrap()).unwrap();
    ok(&["run", "--config", &s(&path), "--output-dir", &s(&out_dir), "--method", "l_linfbp"]);
    let names = files_in(&out_dir);
    for expected in ["effective_config.json", "metrics.csv", "model.ckpt", "recon.f32", "sinogram.f32", "train_log.csv"] {
        assert!(names.contains(&expected.to_string()), "{expected} missing from {names:?}");
    }
    let effective: serde_json::Value = io::read_json(&out_dir.join("effective_config.json")).unwrap();
    assert_eq!(effective["method"], "l_linfbp");
    assert_eq!(effective["output_dir"], s(&out_dir));
    assert!(ok(&["verify", &s(&out_dir.join("recon.f32")), &s(&out_dir.join("sinogram.f32"))])
        .lines()
        .all(|l| l.starts_with("ok")));

    let mut bad = config.clone();
    bad["surprise"] = serde_json::json!(true);
    std::fs::write(&path, serde_json::to_vec(&bad).unwrap()).unwrap();
    assert_eq!(linfbp(&["run", "--config", &s(&path)]).status.code(), Some(2));
}

#[test]
fn diverging_training_exits_with_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let data = make_dataset(dir.path(), "data", "1", "3");
    let res = linfbp(&["train", "--data", &s(&data), "--epochs", "5", "--lr", "1e300", "--out", &s(&dir.path().join("m.ckpt"))]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn matrix_oracle_command() {
    let out = ok(&["matrix-oracle"]);
    assert!(out.contains("max abs difference"));
}
