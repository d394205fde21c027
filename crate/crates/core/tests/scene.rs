use std::f64::consts::PI;

use range_ae::pulses::{PulseKind, PulseSpec};
use range_ae::rng::{stream, Domain};
use range_ae::scene::{
    add_noise, corrupt, noise_sigma_for_ratio, return_signal, sample_pulse, NoiseModel, SampledSignal,
    SamplingGrid, SceneConfig,
};
use range_ae::train::make_training_batch;

fn grid_points() -> Vec<f64> {
    (0..1024).map(|k| -5.0 + (k as f64 + 0.5) * 10.0 / 1024.0).collect()
}

/// sinc(t/5)^10 written out directly.
fn sinc_oracle(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let y = PI * t / 5.0;
        (y.sin() / y).powi(10)
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

#[test]
fn canonical_grid_is_midpoint_and_symmetric() {
    let grid = SamplingGrid::canonical();
    let pts: Vec<f64> = grid.points().collect();
    assert_eq!(pts, grid_points());
    for k in 0..1024 {
        assert_eq!(pts[k], -pts[1023 - k]);
    }
}

#[test]
fn zero_separation_return_is_the_pulse() {
    let grid = SamplingGrid::canonical();
    for kind in PulseKind::ALL {
        let spec = PulseSpec::from(kind);
        let pulse = sample_pulse(&spec, &grid).unwrap();
        let ret = return_signal(&SceneConfig::new(spec, 0.0).unwrap(), &grid).unwrap();
        for (a, b) in pulse.values().iter().zip(ret.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn training_rows_match_direct_superposition() {
    let grid = SamplingGrid::canonical();
    let (batch, seps) = make_training_batch(&PulseSpec::sinc(), 512, &grid).unwrap();
    for j in [0usize, 1, 100, 255, 511] {
        let l = seps[j];
        assert_eq!(l, j as f64 / 511.0);
        let want = normalize(
            grid_points()
                .iter()
                .map(|&t| 0.5 * (sinc_oracle(t - l / 2.0) + sinc_oracle(t + l / 2.0)))
                .collect(),
        );
        for (a, b) in batch.row(j).iter().zip(&want) {
            assert!((a - b).abs() < 1e-13, "row {j}");
        }
    }
}

#[test]
fn separations_outside_unit_interval_are_rejected() {
    assert!(SceneConfig::new(PulseSpec::sinc(), -0.1).is_err());
    assert!(SceneConfig::new(PulseSpec::sinc(), 1.5).is_err());
    assert!(SceneConfig::new(PulseSpec::sinc(), 1.0).is_ok());
}

#[test]
fn noise_norm_matches_the_target_ratio_on_average() {
    let grid = SamplingGrid::canonical();
    let clean = return_signal(&SceneConfig::new(PulseSpec::bessel(), 0.5).unwrap(), &grid).unwrap();
    for ratio in [0.5, 1.0, 2.0] {
        let noise = NoiseModel::new(ratio, 1024, 7).unwrap();
        let mut rng = stream(7, Domain::Test, 0, 0);
        let draws = 2000;
        let mean_sq = (0..draws)
            .map(|_| {
                let noisy = corrupt(&clean, &noise, &mut rng);
                noisy
                    .values()
                    .iter()
                    .zip(clean.values())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / draws as f64;
        // E||xi||^2 = ratio^2; the sample mean has relative sd sqrt(2/(N draws))
        assert!((mean_sq / (ratio * ratio) - 1.0).abs() < 0.01, "ratio {ratio}: {mean_sq}");
    }
}

#[test]
fn noise_sigma_at_unit_ratio() {
    assert_eq!(noise_sigma_for_ratio(1.0, 1024, 1.0).unwrap(), 1.0 / 32.0);
    assert!(noise_sigma_for_ratio(0.0, 1024, 1.0).is_err());
}

#[test]
fn noisy_signals_are_not_renormalized() {
    let grid = SamplingGrid::canonical();
    let clean = sample_pulse(&PulseSpec::triangle(), &grid).unwrap();
    let noisy = corrupt(&clean, &NoiseModel::new(1.0, 1024, 1).unwrap(), &mut stream(1, Domain::Test, 0, 0));
    assert!(!noisy.is_normalized());
    assert!((noisy.norm() - 1.0).abs() > 1e-6);
}

#[test]
fn zero_sigma_noise_leaves_values_and_consumes_the_stream() {
    let mut a = vec![0.25; 16];
    let mut rng = stream(2, Domain::Test, 0, 0);
    add_noise(&mut a, 0.0, &mut rng);
    assert!(a.iter().all(|&v| v == 0.25));
    // the generator advanced exactly as it would for non-zero sigma
    let mut b = vec![0.0; 16];
    let mut fresh = stream(2, Domain::Test, 0, 0);
    add_noise(&mut b, 1.0, &mut fresh);
    let mut c = vec![0.0; 1];
    let mut d = vec![0.0; 1];
    add_noise(&mut c, 1.0, &mut rng);
    add_noise(&mut d, 1.0, &mut fresh);
    assert_eq!(c, d);
}

#[test]
fn signal_csv_round_trips_and_rejects_other_grids() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let grid = SamplingGrid::canonical();
    let s = sample_pulse(&PulseSpec::bessel(), &grid).unwrap();
    s.write_csv(&path).unwrap();
    let back = SampledSignal::read_csv(&path, &grid).unwrap();
    assert_eq!(back.values(), s.values());
    let other = SamplingGrid::new(-4.0, 4.0, 1024).unwrap();
    assert!(SampledSignal::read_csv(&path, &other).is_err());
}
