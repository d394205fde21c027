//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p range-ae-core --test acceptance -- 1 2 10`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use range_ae::analysis::{encoder_response, noisy_response_stats, scale_curve, Encoder};
use range_ae::experiment::{
    plan_experiment, run_experiment, ExperimentConfig, ExperimentOutcome, Profile, MANIFEST_FILE,
};
use range_ae::model::{fold_trace, save_checkpoint, AutoencoderModel, EncoderKind, DECODER_ROW_ENDS};
use range_ae::nn::gradcheck::run_suite;
use range_ae::nn::layer::Layer;
use range_ae::nn::Tensor;
use range_ae::pulses::{power_fraction_above, power_spectrum, PulseKind, PulseSpec};
use range_ae::scene::{return_signal, sample_pulse, SamplingGrid, SceneConfig};
use range_ae::train::{train_autoencoder, TrainConfig};
use range_ae::Error;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

fn gradients() -> Check {
    let results = run_suite(2024, 20).map_err(fail)?;
    let mut per_layer: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for r in &results {
        let e = per_layer.entry(r.layer).or_default();
        e.0 += 1;
        e.1 = e.1.max(r.rel_error);
        ensure(r.rel_error < 1e-6, format!("{} {:?}: rel error {:.2e}", r.layer, r.input_shape, r.rel_error))?;
    }
    let want = ["conv1d", "gelu", "linear", "maxpool1d", "mse", "tanh"];
    ensure(
        per_layer.keys().copied().eq(want.iter().copied()),
        format!("layers checked: {:?}", per_layer.keys()),
    )?;
    ensure(per_layer.values().all(|(n, _)| *n >= 20), "fewer than 20 shapes for some layer")?;
    let worst = per_layer.values().map(|v| v.1).fold(0.0, f64::max);
    Ok(format!("{} checks over 6 layers, worst rel error {worst:.2e} (< 1e-6)", results.len()))
}

// ---------------------------------------------------------------- 2

fn rows(kind: EncoderKind) -> Result<Vec<Vec<usize>>, String> {
    let m = AutoencoderModel::seeded(kind, 0, 0).map_err(fail)?;
    let trace = m.encoder.shape_trace(&Tensor::zeros(&[2, 1, 1024])).map_err(fail)?;
    Ok(fold_trace(&trace, kind.table_row_ends()))
}

fn architectures() -> Check {
    let conv = rows(EncoderKind::Conv)?;
    let lengths: Vec<usize> = conv.iter().map(|r| *r.last().unwrap()).collect();
    ensure(lengths == [961, 240, 209, 52, 37, 9, 1, 32, 1], format!("conv rows {conv:?}"))?;

    let linear = rows(EncoderKind::Linear)?;
    ensure(
        linear == vec![vec![1024], vec![256], vec![64], vec![8], vec![1]],
        format!("linear rows {linear:?}"),
    )?;

    let fourier = rows(EncoderKind::Fourier)?;
    let want: Vec<Vec<usize>> = vec![vec![1, 22], vec![22], vec![22], vec![22], vec![22], vec![22], vec![1]];
    ensure(fourier == want, format!("fourier rows {fourier:?}"))?;
    let m = AutoencoderModel::seeded(EncoderKind::Fourier, 0, 0).map_err(fail)?;
    let bins = m.encoder.layers.iter().find_map(|l| match l {
        Layer::Fourier(f) => Some((f.bins(), f.features())),
        _ => None,
    });
    ensure(bins == Some((11, 22)), format!("fourier bins/features {bins:?}"))?;

    let dec = m.decoder.shape_trace(&Tensor::zeros(&[2, 1])).map_err(fail)?;
    let dec = fold_trace(&dec, &DECODER_ROW_ENDS);
    ensure(dec == vec![vec![256], vec![1024], vec![1, 1024]], format!("decoder rows {dec:?}"))?;
    Ok("conv 961,240,209,52,37,9,1,32,1; linear 1024,256,64,8,1; fourier 11 bins -> 22 features; decoder 256,1024".into())
}

// ---------------------------------------------------------------- 3

fn signals() -> Check {
    let (s, t, b) = (PulseSpec::sinc(), PulseSpec::triangle(), PulseSpec::bessel());
    ensure((s.eval(0.0) - 1.0).abs() <= 1e-12, format!("f_S(0) = {}", s.eval(0.0)))?;
    ensure(t.eval(0.0).abs() <= 1e-12, format!("f_T(0) = {}", t.eval(0.0)))?;
    ensure((b.eval(0.0) - 0.259858).abs() <= 1e-12, format!("f_B(0) = {}", b.eval(0.0)))?;

    let grid = SamplingGrid::canonical();
    let mut worst_parity: f64 = 0.0;
    let mut worst_return: f64 = 0.0;
    for kind in PulseKind::ALL {
        let spec = PulseSpec::from(kind);
        for x in grid.points() {
            let (a, c) = (spec.eval(x), spec.eval(-x));
            worst_parity = worst_parity.max(if kind == PulseKind::Triangle { (a + c).abs() } else { (a - c).abs() });
        }
        let pulse = sample_pulse(&spec, &grid).map_err(fail)?;
        let ret = return_signal(&SceneConfig::new(spec, 0.0).map_err(fail)?, &grid).map_err(fail)?;
        for (a, c) in pulse.values().iter().zip(ret.values()) {
            worst_return = worst_return.max((a - c).abs());
        }
    }
    ensure(worst_parity <= 1e-12, format!("parity violated by {worst_parity:e}"))?;
    ensure(worst_return <= 1e-12, format!("l=0 return differs by {worst_return:e}"))?;
    Ok(format!(
        "values at 0 exact to 1e-12; parity residual {worst_parity:.1e}; l=0 return residual {worst_return:.1e}"
    ))
}

// ---------------------------------------------------------------- 4

/// Power fraction above |f| > 1 from a direct O(N^2) DFT.
fn direct_fraction_above(values: &[f64], window: f64) -> f64 {
    let n = values.len();
    let (mut total, mut above) = (0.0, 0.0);
    for k in 0..n {
        let (mut re, mut im) = (0.0, 0.0);
        for (j, &v) in values.iter().enumerate() {
            let phase = -2.0 * PI * ((k * j) % n) as f64 / n as f64;
            re += v * phase.cos();
            im += v * phase.sin();
        }
        let p = re * re + im * im;
        let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        total += p;
        if (signed / window).abs() > 1.0 + 1e-9 {
            above += p;
        }
    }
    above / total
}

fn bandlimit() -> Check {
    let grid = SamplingGrid::canonical();
    let mut parts = Vec::new();
    for kind in PulseKind::ALL {
        let signal = sample_pulse(&PulseSpec::from(kind), &grid).map_err(fail)?;
        let frac = power_fraction_above(&power_spectrum(&signal), 1.0);
        let direct = direct_fraction_above(signal.values(), grid.span());
        ensure(
            (frac - direct).abs() <= 1e-9 * direct.max(1e-300) + 1e-15,
            format!("{kind}: fft {frac:e} vs direct {direct:e}"),
        )?;
        match kind {
            PulseKind::Bessel => ensure(frac > 1e-4, format!("bessel fraction {frac:e} not above 1e-4"))?,
            _ => ensure(frac < 1e-4, format!("{kind} fraction {frac:e} not below 1e-4"))?,
        }
        parts.push(format!("{kind} {frac:.2e}"));
    }
    Ok(format!("power fraction above F: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- 5

struct SumEncoder;

impl Encoder for SumEncoder {
    fn encode_batch(&self, batch: &Tensor) -> range_ae::Result<Vec<f64>> {
        Ok((0..batch.batch()).map(|b| batch.row(b).iter().sum()).collect())
    }
}

struct Affine {
    a: f64,
    b: f64,
}

impl Encoder for Affine {
    fn encode_batch(&self, batch: &Tensor) -> range_ae::Result<Vec<f64>> {
        Ok(SumEncoder.encode_batch(batch)?.into_iter().map(|z| self.a * z + self.b).collect())
    }
}

fn scaling() -> Check {
    let grid = SamplingGrid::canonical();
    let spec = PulseSpec::sinc();
    let base = scale_curve(&encoder_response(&SumEncoder, &spec, 64, &grid).map_err(fail)?).map_err(fail)?;
    let base_stats = noisy_response_stats(&SumEncoder, &spec, 0.5, 21, 200, 9, &grid).map_err(fail)?;
    let mut worst_general: f64 = 0.0;
    for (a, b, exact) in [(2.0, 0.0, true), (-0.25, 0.0, true), (-3.0, 7.0, false), (0.37, -1.1, false)] {
        let enc = Affine { a, b };
        let scaled = scale_curve(&encoder_response(&enc, &spec, 64, &grid).map_err(fail)?).map_err(fail)?;
        ensure(
            scaled.values[0] == 0.0 && *scaled.values.last().unwrap() == 1.0,
            format!("endpoints ({a},{b}): {} {}", scaled.values[0], scaled.values.last().unwrap()),
        )?;
        let stats = noisy_response_stats(&enc, &spec, 0.5, 21, 200, 9, &grid).map_err(fail)?;
        // invariance of the scaled curve and of the scaled noise statistics
        let pairs = scaled
            .values
            .iter()
            .zip(&base.values)
            .chain(stats.scaled_means.iter().zip(&base_stats.scaled_means))
            .chain(stats.scaled_stds.iter().zip(&base_stats.scaled_stds));
        // covariance of the raw statistics
        let raw_means = stats.means.iter().zip(&base_stats.means).map(|(y, m)| (y - (a * m + b)).abs() / y.abs().max(1.0));
        let raw_stds = stats.stds.iter().zip(&base_stats.stds).map(|(y, s)| (y - a.abs() * s).abs() / y.abs().max(1e-300));
        if exact {
            for (x, y) in pairs {
                ensure(x == y, format!("({a},{b}) not bitwise invariant: {x} vs {y}"))?;
            }
            for (y, s) in stats.stds.iter().zip(&base_stats.stds) {
                ensure(*y == a.abs() * s, format!("({a},{b}) std {y} vs {}", a.abs() * s))?;
            }
        } else {
            for (x, y) in pairs {
                worst_general = worst_general.max((x - y).abs());
            }
            worst_general = raw_means.chain(raw_stds).fold(worst_general, f64::max);
        }
    }
    ensure(worst_general <= 1e-12, format!("general affine maps deviate by {worst_general:e}"))?;
    Ok(format!(
        "endpoints exactly 0 and 1; power-of-two scalings bitwise invariant; general affine maps within {worst_general:.1e}"
    ))
}

// ---------------------------------------------------------------- 10

fn params(m: &AutoencoderModel) -> Vec<u64> {
    m.params().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect()
}

fn zero_noise() -> Check {
    let grid = SamplingGrid::canonical();
    let mut parts = Vec::new();
    for kind in PulseKind::ALL {
        let spec = PulseSpec::from(kind);
        let mut clean_cfg = TrainConfig::new(spec.clone(), None, 77);
        clean_cfg.epochs = 40;
        let mut zero_cfg = TrainConfig::new(spec.clone(), Some(0.0), 77);
        zero_cfg.epochs = 40;
        let (clean, clean_report) = train_autoencoder(EncoderKind::Fourier, &clean_cfg, 1).map_err(fail)?;
        let (zero, zero_report) = train_autoencoder(EncoderKind::Fourier, &zero_cfg, 1).map_err(fail)?;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&clean_report.losses) == bits(&zero_report.losses), format!("{kind}: loss trajectories differ"))?;
        ensure(params(&clean) == params(&zero), format!("{kind}: parameters differ"))?;

        let c1 = encoder_response(&clean, &spec, 101, &grid).map_err(fail)?;
        let c0 = encoder_response(&zero, &spec, 101, &grid).map_err(fail)?;
        ensure(c1 == c0, format!("{kind}: clean curves differ"))?;
        ensure(scale_curve(&c1).map_err(fail)? == scale_curve(&c0).map_err(fail)?, format!("{kind}: scaled curves differ"))?;
        let stats = noisy_response_stats(&zero, &spec, 0.0, 101, 20, 5, &grid).map_err(fail)?;
        ensure(bits(&stats.means) == bits(&c1.values), format!("{kind}: zero-noise means differ from the clean curve"))?;
        ensure(stats.stds.iter().all(|&s| s == 0.0), format!("{kind}: zero-noise spread is not zero"))?;
        parts.push(kind.to_string());
    }
    Ok(format!(
        "sigma = 0 reproduces losses, parameters, curves and statistics bit for bit ({}, 40 epochs)",
        parts.join(", ")
    ))
}

// ---------------------------------------------------------------- 8

fn paper_profile() -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let mut cfg = ExperimentConfig::defaults(Profile::Paper);
    cfg.output_dir = dir.path().to_path_buf();
    cfg.validate().map_err(fail)?;
    ensure(cfg.encoder == EncoderKind::Conv, "encoder is not conv")?;
    ensure((cfg.epochs_noiseless, cfg.epochs_noisy) == (3000, 5000), "epochs differ from 3000/5000")?;
    ensure(cfg.ensemble_size == 20 && cfg.n_draws == 1000, "ensemble or draws differ from 20/1000")?;
    ensure(cfg.snrs.contains(&1.0), "ratio 1 missing")?;

    match run_experiment(&cfg) {
        Err(Error::Config(msg)) if msg.contains("--long-run") => {}
        other => return Err(format!("paper profile ran without the long-run flag: {other:?}")),
    }
    ensure(!dir.path().join(MANIFEST_FILE).exists(), "refused run left a manifest")?;

    let plan = plan_experiment(&cfg).map_err(fail)?;
    let pending: usize = plan.iter().map(|p| p.pending.len()).sum();
    ensure(pending == 300, format!("{pending} members pending, expected 300"))?;

    // a finished member on disk is picked up, not retrained
    let target = &plan[0];
    let ens = dir.path().join(&target.directory);
    std::fs::create_dir_all(&ens).map_err(fail)?;
    let mut model = AutoencoderModel::seeded(EncoderKind::Conv, target.training_seed, 0).map_err(fail)?;
    model.metadata.pulse = Some(target.pulse);
    model.metadata.target_ratio = target.target_ratio;
    model.metadata.epochs = target.epochs;
    model.metadata.final_loss = Some(0.0);
    let mut names = vec!["member_0_loss.csv".to_string(), "curve_0.csv".into(), "curve_scaled_0.csv".into()];
    if target.target_ratio.is_some() {
        names.push("stats_0.csv".into());
    }
    for n in names {
        std::fs::write(ens.join(n), "x\n").map_err(fail)?;
    }
    save_checkpoint(&model, &ens.join("member_0.json")).map_err(fail)?;
    let again = plan_experiment(&cfg).map_err(fail)?;
    ensure(again[0].complete == vec![0], format!("finished member not detected: {:?}", again[0].complete))?;
    let pending: usize = again.iter().map(|p| p.pending.len()).sum();
    ensure(pending == 299, format!("{pending} pending after resume point"))?;
    Ok("conv, 3000/5000 epochs, 20 members, 1000 draws; refused without --long-run; 300-member plan resumes from disk".into())
}

// ---------------------------------------------------------------- 6, 7, 9

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn desk(seed: u64, dir: &Path, noiseless: bool) -> Result<ExperimentOutcome, String> {
    let mut cfg = ExperimentConfig::defaults(Profile::Desk);
    cfg.master_seed = seed;
    cfg.noiseless = noiseless;
    cfg.output_dir = dir.to_path_buf();
    let outcome = run_experiment(&cfg).map_err(fail)?;
    outcome.check().map_err(fail)?;
    Ok(outcome)
}

fn monotone_curves(full: &ExperimentOutcome) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in PulseKind::ALL {
        let e = full.manifest.ensemble(kind, None).ok_or(format!("no noiseless {kind} ensemble"))?;
        let good = e.members.iter().filter(|m| m.monotonicity >= 0.95).count();
        let fractions: Vec<String> = e.members.iter().map(|m| format!("{:.3}", m.monotonicity)).collect();
        ok &= e.members.len() == 5 && good >= 4;
        parts.push(format!("{kind} {good}/{} [{}]", e.members.len(), fractions.join(" ")));
    }
    let msg = format!("monotone (>= 0.95) members: {}", parts.join("; "));
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn hierarchy(runs: &[(u64, &ExperimentOutcome)]) -> Check {
    let mut wins = 0;
    let mut parts = Vec::new();
    for (seed, run) in runs {
        let score = |k: PulseKind| {
            run.manifest
                .ensemble(k, Some(1.0))
                .and_then(|e| e.mean_scaled_std())
                .ok_or(format!("seed {seed}: no {k} ensemble at ratio 1"))
        };
        let (b, t, s) = (score(PulseKind::Bessel)?, score(PulseKind::Triangle)?, score(PulseKind::Sinc)?);
        let ordered = b < t && t < s;
        wins += usize::from(ordered);
        parts.push(format!("seed {seed}: {b:.3} < {t:.3} < {s:.3} {}", if ordered { "yes" } else { "no" }));
    }
    let msg = format!("{wins}/{} seeds ordered bessel < triangle < sinc ({})", runs.len(), parts.join("; "));
    if wins >= 4 && runs.len() == 5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn tree(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(fail)? {
            let path = entry.map_err(fail)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).map_err(fail)?.display().to_string();
                out.push((rel, std::fs::read(&path).map_err(fail)?));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn determinism(first: &ExperimentOutcome, first_dir: &Path, seed: u64) -> Check {
    let dir = tempfile::tempdir().map_err(fail)?;
    let second = desk(seed, dir.path(), true)?;
    ensure(second.trained == first.trained && second.resumed == 0, "rerun did not retrain every member")?;
    let (a, b) = (tree(first_dir)?, tree(dir.path())?);
    let names = |t: &[(String, Vec<u8>)]| t.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
    ensure(names(&a) == names(&b), "rerun produced a different file set")?;
    let differing: Vec<&str> = a.iter().zip(&b).filter(|(x, y)| x.1 != y.1).map(|(x, _)| x.0.as_str()).collect();
    ensure(differing.is_empty(), format!("files differ: {differing:?}"))?;
    let checkpoints = a.iter().filter(|f| f.0.rsplit('/').next().is_some_and(|n| n.starts_with("member_") && n.ends_with(".json"))).count();
    let csvs = a.iter().filter(|f| f.0.ends_with(".csv")).count();
    Ok(format!(
        "rerun of seed {seed}: all {} files byte-identical ({checkpoints} checkpoints, {csvs} CSVs), manifest sha256 {}",
        a.len(),
        &first.manifest_sha256[..16]
    ))
}

// ----------------------------------------------------------------

fn report(id: u8, name: &str, started: Instant, result: &Check) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (tag, text) = match result {
        Ok(t) => ("PASS", t),
        Err(t) => ("FAIL", t),
    };
    println!("{tag} criterion {id:>2} ({name}, {secs:.1}s): {text}");
    std::io::stdout().flush().ok();
    result.is_ok()
}

fn main() {
    let wanted: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |id: u8| wanted.is_empty() || wanted.contains(&id);
    let mut all_ok = true;

    let quick: [(u8, &str, fn() -> Check); 7] = [
        (1, "gradient integrity", gradients),
        (2, "architecture conformance", architectures),
        (3, "signal fidelity", signals),
        (4, "bandlimit", bandlimit),
        (5, "scaling laws", scaling),
        (8, "paper profile", paper_profile),
        (10, "zero-noise degeneracy", zero_noise),
    ];
    for (id, name, f) in quick {
        if want(id) {
            let t = Instant::now();
            all_ok &= report(id, name, t, &f());
        }
    }

    if want(6) || want(7) || want(9) {
        let t = Instant::now();
        let first_dir = tempfile::tempdir().expect("temp dir");
        let first = desk(SEEDS[0], first_dir.path(), true);
        if want(6) {
            all_ok &= report(6, "desk monotone curves", t, &first.as_ref().map_err(Clone::clone).and_then(monotone_curves));
        }
        if want(7) {
            let t = Instant::now();
            let mut extra = Vec::new();
            let mut result: Check = Ok(String::new());
            match &first {
                Ok(_) => {
                    for &seed in &SEEDS[1..] {
                        let dir = tempfile::tempdir().expect("temp dir");
                        match desk(seed, dir.path(), false) {
                            Ok(o) => extra.push((seed, o)),
                            Err(e) => {
                                result = Err(format!("seed {seed}: {e}"));
                                break;
                            }
                        }
                    }
                }
                Err(e) => result = Err(e.clone()),
            }
            if result.is_ok() {
                let first = first.as_ref().unwrap();
                let mut runs = vec![(SEEDS[0], first)];
                runs.extend(extra.iter().map(|(s, o)| (*s, o)));
                result = hierarchy(&runs);
            }
            all_ok &= report(7, "desk hierarchy", t, &result);
        }
        if want(9) {
            let t = Instant::now();
            let result = first
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|o| determinism(o, first_dir.path(), SEEDS[0]));
            all_ok &= report(9, "determinism", t, &result);
        }
    }

    if !all_ok {
        std::process::exit(1);
    }
}
