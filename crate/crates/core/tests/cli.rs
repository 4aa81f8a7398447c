use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kcr")).args(args).env("KCR_THREADS", "1").output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"{
  "schema": 1,
  "seed": 3,
  "data": {"synthetic": {"n_train": 64, "n_val": 32, "image_side": 8}},
  "model": {"image_side": 8, "dim": 16, "heads": 2, "depth": 1, "d_min": 2},
  "run": {"t_search": 1, "t_train": 3, "t_warm": 1, "batch": 32, "m_land": 16, "eval_chunk": 32}
}"#;

#[test]
fn gen_data_round_trips_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let v = stdout_json(&kcr(&["gen-data", "--n-train", "8", "--n-val", "4", "--seed", "11", "--out-dir", s(d)]));
        assert_eq!(v["seed"], 11);
        assert_eq!(v["config"]["data"]["synthetic"]["n_train"], 8);
    }
    let raw = kcr::data::read_split(&a, "train").unwrap();
    assert_eq!(raw.images.len(), 8);
    assert!(raw.labels.iter().all(|&l| l < 4));
    for name in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "val-images-idx3-ubyte", "dataset.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    let img = std::fs::read(a.join("train-images-idx3-ubyte")).unwrap();
    assert_eq!(&img[..4], &[0, 0, 8, 3]);
}

#[test]
fn zero_noise_makes_class_images_identical() {
    let dir = tempfile::tempdir().unwrap();
    stdout_json(&kcr(&["gen-data", "--n-train", "16", "--n-val", "4", "--noise", "0", "--out-dir", s(dir.path())]));
    let raw = kcr::data::read_split(dir.path(), "train").unwrap();
    for i in 0..16 {
        for j in 0..16 {
            if raw.labels[i] == raw.labels[j] {
                assert_eq!(raw.images[i], raw.images[j]);
            }
        }
    }
}

#[test]
fn analyze_reports_complexity_of_csv_features() {
    let dir = tempfile::tempdir().unwrap();
    let run = |rows: &str, extra: &[&str]| {
        let csv = dir.path().join("f.csv");
        std::fs::write(&csv, rows).unwrap();
        let mut args = vec!["analyze", "--features", s(&csv), "--out-dir", s(dir.path())];
        args.extend_from_slice(extra);
        stdout_json(&kcr(&args))
    };
    // K_n = F Fᵀ / 4 = I when F = 2 I
    let v = run("2,0,0,0\n0,2,0,0\n0,0,2,0\n0,0,0,2\n", &["--full-landmarks"]);
    assert_eq!(v["analysis"]["kc_exact"], 1.0);
    assert_eq!(v["analysis"]["kc_h"], 0);
    // identity features give K_n = I / 4
    let v = run("1,0,0,0\n0,1,0,0\n0,0,1,0\n0,0,0,1\n", &["--full-landmarks"]);
    assert_eq!(v["analysis"]["kc_exact"], 0.5);

    let v = run("1,2\n2,4\n3,6\n-1,-2\n", &["--full-landmarks"]);
    let spectrum = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    for line in spectrum.lines().skip(1) {
        let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(cells[2].abs() < 1e-12 && cells[3].abs() < 1e-12, "{line}");
    }
    assert!(v["analysis"]["bound"]["upper"].as_f64().unwrap() > 0.0);

    let mut rng = kcr::Rng::new(1, 0);
    let rows: String = (0..40)
        .map(|_| (0..6).map(|_| format!("{}", rng.normal())).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    let v = run(&rows, &["--full-landmarks", "--gamma", "0.5"]);
    assert!(v["analysis"]["max_abs_delta"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["analysis"]["landmarks"], 40);
    let v = run(&rows, &["--landmarks", "10"]);
    assert_eq!(v["analysis"]["landmarks"], 10);
    let bounds: Value = serde_json::from_slice(&std::fs::read(dir.path().join("bounds.json")).unwrap()).unwrap();
    assert_eq!(bounds["config"]["run"]["m_land"], 10);
}

#[test]
fn analyze_names_the_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "1,2\n3,4\n5,oops\n").unwrap();
    let o = kcr(&["analyze", "--features", s(&csv), "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));
    let o = kcr(&["analyze", "--features", s(&dir.path().join("none.csv"))]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn gd_verify_exit_codes() {
    let v = stdout_json(&kcr(&["gd-verify"]));
    let r = &v["gd_verify"];
    assert_eq!(r["pass"], true);
    assert!(r["max_rel_deviation"].as_f64().unwrap() <= 1e-8);
    assert_eq!((r["n"].clone(), r["d"].clone(), r["t"].clone()), (32.into(), 8.into(), 50.into()));

    let v = stdout_json(&kcr(&["gd-verify", "--t", "0", "--seed", "4"]));
    assert_eq!(v["gd_verify"]["max_rel_deviation"], 0.0);
    assert_eq!(v["seed"], 4);

    let o = kcr(&["gd-verify", "--eta-rel", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("warning") && err.contains("diverged"), "{err}");
}

#[test]
fn report_handles_degenerate_and_perfect_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let header = kcr::training::CSV_HEADER;
    let row = |e: usize, upper: f64, val: f64| format!("{e},regularized,1,0,0.1,0,{upper},0.5,{val},0.9,100,1");
    let csv = dir.path().join("m.csv");

    std::fs::write(&csv, format!("{header}\n{}\n{}\n", row(1, 2.0, 1.0), row(2, 2.0, 1.0))).unwrap();
    stdout_json(&kcr(&["report", "--metrics", s(&csv), "--out-dir", s(dir.path())]));
    let c: Value = serde_json::from_slice(&std::fs::read(dir.path().join("curves.json")).unwrap()).unwrap();
    assert!(c["curves"]["upper_val_correlation"].is_null());

    std::fs::write(&csv, format!("{header}\n{}\n{}\n{}\n", row(1, 1.5, 1.0), row(2, 2.7, 2.2), row(3, 1.9, 1.4))).unwrap();
    let v = stdout_json(&kcr(&["report", "--metrics", s(&csv), "--out-dir", s(dir.path())]));
    assert!((v["upper_val_correlation"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["epochs"], 3);

    std::fs::write(&csv, "epoch,phase\n1,search\n").unwrap();
    assert_eq!(kcr(&["report", "--metrics", s(&csv)]).status.code(), Some(1));
}

#[test]
fn search_and_train_write_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.json");
    std::fs::write(&cfg, TINY).unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));

    let v = stdout_json(&kcr(&["search", "--config", s(&cfg), "--out-dir", s(&a)]));
    assert_eq!(v["epochs"], 1);
    for f in ["architecture.json", "checkpoint.json", "checkpoint.bin", "metrics.csv", "bounds.json"] {
        assert!(a.join(f).exists(), "{f}");
    }

    for d in [&b, &c] {
        stdout_json(&kcr(&["train", "--config", s(&cfg), "--out-dir", s(d), "--lambda", "0.1"]));
    }
    for f in ["metrics.csv", "bounds.json", "architecture.json", "checkpoint.bin"] {
        assert_eq!(std::fs::read(b.join(f)).unwrap(), std::fs::read(c.join(f)).unwrap(), "{f}");
    }
    let arch: Value = serde_json::from_slice(&std::fs::read(b.join("architecture.json")).unwrap()).unwrap();
    assert_eq!(arch["config"]["run"]["lambda"], 0.1);
    assert_eq!(arch["seed"], 3);

    // retrain the searched architecture without the regularizer
    let v = stdout_json(&kcr(&[
        "train", "--config", s(&cfg), "--out-dir", s(&c), "--architecture", s(&a.join("architecture.json")),
        "--kcr-weight", "0", "--epochs", "2", "--warmup", "0",
    ]));
    assert_eq!(v["epochs"], 2);
    let rows = kcr::training::parse_csv(&std::fs::read_to_string(c.join("metrics.csv")).unwrap()).unwrap();
    assert!(rows.iter().all(|r| r.kcr == 0.0));

    let o = kcr(&["analyze", "--checkpoint", s(&c.join("checkpoint.json")), "--config", s(&cfg), "--out-dir", s(&c)]);
    let v = stdout_json(&o);
    assert_eq!(v["analysis"]["n"], 64);
}

#[test]
fn validation_errors_exit_with_one_and_io_errors_with_three() {
    assert_eq!(kcr(&["search", "--bogus"]).status.code(), Some(1));
    assert_eq!(kcr(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(kcr(&["search", "--config", "/nonexistent/cfg.json"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"run": {"gamma": 0.9}}"#).unwrap();
    assert_eq!(kcr(&["train", "--config", s(&cfg)]).status.code(), Some(1));
    std::fs::write(&cfg, r#"{"unknown": 1}"#).unwrap();
    assert_eq!(kcr(&["search", "--config", s(&cfg)]).status.code(), Some(1));
    assert_eq!(kcr(&["--help"]).status.code(), Some(0));
}
