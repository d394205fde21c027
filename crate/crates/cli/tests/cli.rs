use std::path::Path;
use std::process::{Command, Output};

fn range_ae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_range-ae"))
        .args(args)
        .env("RANGE_AE_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = range_ae(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    range_ae(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn synth_and_scene_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let pulse = dir.path().join("pulse.csv");
    let spec = dir.path().join("spec.csv");
    ok(&["synth", "--pulse", "bessel", "--out", p(&pulse), "--spectrum", p(&spec)]);
    let rows = lines(&pulse);
    assert_eq!(rows[0], "t,amplitude");
    assert_eq!(rows.len(), 1025);
    let spectrum = lines(&spec);
    assert_eq!(spectrum[0], "f,power");
    assert_eq!(spectrum.len(), 1025);

    let clean = dir.path().join("clean.csv");
    let noisy = dir.path().join("noisy.csv");
    let again = dir.path().join("again.csv");
    ok(&["scene", "--pulse", "sinc", "--separation", "0.4", "--out", p(&clean)]);
    ok(&["scene", "--pulse", "sinc", "--separation", "0.4", "--snr", "1", "--seed", "3", "--out", p(&noisy)]);
    ok(&["scene", "--pulse", "sinc", "--separation", "0.4", "--snr", "1", "--seed", "3", "--out", p(&again)]);
    assert_ne!(lines(&clean), lines(&noisy));
    assert_eq!(lines(&noisy), lines(&again));
}

#[test]
fn train_analyze_rank_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    for pulse in ["sinc", "bessel"] {
        let out = ok(&[
            "train", "--encoder", "fourier", "--pulse", pulse, "--epochs", "5", "--seed", "2",
            "--out", p(&d(&format!("{pulse}.json"))), "--loss", p(&d(&format!("{pulse}_loss.csv"))),
        ]);
        assert!(out.starts_with("final loss"));
        assert_eq!(lines(&d(&format!("{pulse}_loss.csv"))).len(), 6);
    }
    let info = ok(&["model", "info", p(&d("sinc.json"))]);
    assert!(info.contains("encoder: fourier") && info.contains("epochs: 5"), "{info}");

    ok(&["analyze-clean", "--ckpt", p(&d("sinc.json")), "--out", p(&d("curve.csv")), "--scaled", p(&d("scaled.csv")), "--separations", "16"]);
    assert_eq!(lines(&d("curve.csv")).len(), 17);
    let scaled = lines(&d("scaled.csv"));
    let first: f64 = scaled[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(first, 0.0);

    for pulse in ["sinc", "bessel"] {
        let out = ok(&[
            "analyze-noisy", "--ckpt", p(&d(&format!("{pulse}.json"))), "--snr", "1",
            "--out", p(&d(&format!("{pulse}_stats.csv"))), "--separations", "6", "--draws", "10",
        ]);
        assert!(out.starts_with("mean scaled std"));
    }
    let sinc_stats = format!("s={}", p(&d("sinc_stats.csv")));
    let ranked = ok(&["rank", "--stats", &sinc_stats, p(&d("bessel_stats.csv")), "--out", p(&d("rank.csv"))]);
    assert_eq!(ranked.lines().count(), 2);
    let table = lines(&d("rank.csv"));
    assert_eq!(table[0], "rank,label,mean_scaled_std");
    assert!(table.iter().any(|l| l.contains(",s,")) && table.iter().any(|l| l.contains(",bessel_stats,")));

    ok(&["scene", "--pulse", "sinc", "--separation", "0.1", "--out", p(&d("a.csv"))]);
    let verdict = ok(&["compare", "--ckpt", p(&d("sinc.json")), "--scene1", p(&d("a.csv")), "--scene2", p(&d("a.csv"))]);
    assert_eq!(verdict.trim(), "indistinguishable");
}

#[test]
fn ensemble_writes_members_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "ensemble", "--encoder", "linear", "--pulse", "triangle", "--epochs", "2", "--count", "3",
        "--out-dir", p(dir.path()),
    ]);
    assert_eq!(out.lines().count(), 3);
    for k in 0..3 {
        assert!(dir.path().join(format!("member_{k}.json")).is_file());
    }
    let report = lines(&dir.path().join("report.csv"));
    assert_eq!(report[0], "member,epoch,loss");
    assert_eq!(report.len(), 1 + 3 * 2);
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--cases", "20"]);
    assert!(out.trim_end().ends_with("20 checks, 0 failed"), "{out}");
}

#[test]
fn run_dry_run_and_tiny_run() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"pulses": ["sinc", "triangle"], "ensemble_size": 1, "n_draws": 3}"#).unwrap();
    let common = [
        "run", "--config", p(&cfg), "--epochs-noiseless", "2", "--epochs-noisy", "2",
        "--n-curve-separations", "4", "--n-stat-separations", "3", "--out", p(&out_dir),
    ];
    let plan = ok(&[&common[..], &["--dry-run"]].concat());
    assert!(plan.starts_with("estimated cost"));
    assert_eq!(plan.lines().count(), 5);
    assert!(!out_dir.exists());

    let first = ok(&common);
    assert!(first.contains("(4 trained, 0 resumed)"), "{first}");
    assert!(first.contains("snr 1: "));
    let second = ok(&common);
    assert!(second.contains("(0 trained, 4 resumed)"), "{second}");
    let sha = |s: &str| s.split_whitespace().nth(3).unwrap().to_string();
    assert_eq!(sha(&first), sha(&second));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(code(&["run", "--snr", "0", "--out", p(&out)]), 2);
    assert_eq!(code(&["run", "--profile", "paper", "--out", p(&out)]), 2);
    assert!(!out.exists());
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&["model", "info", p(&missing)]), 4);
    assert_eq!(code(&["analyze-clean", "--ckpt", p(&missing), "--out", p(&out)]), 4);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"epochs_noisy\": \"many\"\n}").unwrap();
    let res = range_ae(&["run", "--config", p(&bad), "--out", p(&out)]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("line 2"), "{err}");

    let ckpt = dir.path().join("m.json");
    ok(&["train", "--encoder", "fourier", "--pulse", "sinc", "--epochs", "1", "--out", p(&ckpt)]);
    assert_eq!(
        code(&["analyze-noisy", "--ckpt", p(&ckpt), "--snr", "0", "--out", p(&out)]),
        2
    );
    assert_eq!(
        code(&["train", "--encoder", "fourier", "--pulse", "sinc", "--epochs", "3", "--learning-rate", "1e300", "--out", p(&ckpt)]),
        3
    );
}
