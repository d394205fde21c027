use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use range_ae::analysis::{
    compare_scenes, encoder_response, noisy_response_stats, rank_signals, scale_curve, NoiseStats, SceneOrder,
    CLEAN_SEPARATIONS, DEFAULT_COMPARE_TOLERANCE, NOISE_DRAWS, NOISY_SEPARATIONS,
};
use range_ae::csvio::{fmt_f64, write_table};
use range_ae::error::ErrorClass;
use range_ae::experiment::{
    configure_threads, estimate_cost, parse_config, plan_experiment, run_experiment, ConfigOverrides, Profile,
};
use range_ae::model::{load_checkpoint, save_checkpoint, AutoencoderModel, EncoderKind};
use range_ae::nn::gradcheck::run_suite;
use range_ae::pulses::{power_spectrum, PulseKind, PulseSpec};
use range_ae::rng::{stream, Domain};
use range_ae::scene::{corrupt, return_signal, sample_pulse, NoiseModel, SampledSignal, SamplingGrid, SceneConfig};
use range_ae::train::{train_autoencoder, train_ensemble, TrainConfig};
use range_ae::{Error, Result};

const EXIT_INTERNAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_TRAINING: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "range-ae", version, about = "Sub-resolution range analysis with bottleneck autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an outgoing pulse (and optionally its power spectrum).
    Synth {
        #[arg(long)]
        pulse: PulseKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Two-scatterer return signal, optionally with detector noise.
    Scene {
        #[arg(long)]
        pulse: PulseKind,
        #[arg(long)]
        separation: f64,
        /// Noise-to-signal norm ratio.
        #[arg(long)]
        snr: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one autoencoder.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 0)]
        member: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss table.
        #[arg(long)]
        loss: Option<PathBuf>,
    },
    /// Train an ensemble; writes member_<k>.json and report.csv.
    Ensemble {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Clean response curve of a trained encoder.
    AnalyzeClean {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the endpoint-scaled curve here.
        #[arg(long)]
        scaled: Option<PathBuf>,
        /// Pulse to probe with; defaults to the one the model was trained on.
        #[arg(long)]
        pulse: Option<PulseKind>,
        #[arg(long, default_value_t = CLEAN_SEPARATIONS)]
        separations: usize,
    },
    /// Mean and spread of the encoder output under noise.
    AnalyzeNoisy {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        snr: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pulse: Option<PulseKind>,
        #[arg(long, default_value_t = NOISY_SEPARATIONS)]
        separations: usize,
        #[arg(long, default_value_t = NOISE_DRAWS)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank noise statistics by mean scaled deviation (best first).
    Rank {
        /// Stats files, as `label=path` or plain paths labelled by file stem.
        #[arg(long, num_args = 1.., required = true)]
        stats: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide which of two scenes has the larger separation.
    Compare {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene1: PathBuf,
        #[arg(long)]
        scene2: PathBuf,
        #[arg(long)]
        pulse: Option<PulseKind>,
        #[arg(long, default_value_t = DEFAULT_COMPARE_TOLERANCE)]
        tolerance: f64,
    },
    /// Finite-difference gradient checks of every layer.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        cases: usize,
    },
    /// Full experiment: ensembles, curves, statistics, rankings, manifest.
    Run(RunArgs),
    /// Checkpoint utilities.
    Model {
        #[command(subcommand)]
        action: ModelCommand,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print kind, parameter shapes and metadata.
    Info { ckpt: PathBuf },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    encoder: EncoderKind,
    #[arg(long)]
    pulse: PulseKind,
    /// Train as a denoiser at this noise-to-signal ratio.
    #[arg(long)]
    snr: Option<f64>,
    /// Defaults to 3000 (noiseless) or 5000 (denoising).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    learning_rate: Option<f64>,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::new(PulseSpec::from(self.pulse), self.snr, self.seed);
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(lr) = self.learning_rate {
            cfg.learning_rate = lr;
        }
        cfg
    }
}

#[derive(Args)]
struct RunArgs {
    /// Flat JSON config; flags take precedence over its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    profile: Option<Profile>,
    #[arg(long, value_delimiter = ',')]
    pulse: Option<Vec<PulseKind>>,
    #[arg(long)]
    encoder: Option<EncoderKind>,
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    noiseless: Option<bool>,
    #[arg(long, allow_hyphen_values = true)]
    t_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_max: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    epochs_noiseless: Option<usize>,
    #[arg(long)]
    epochs_noisy: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    n_curve_separations: Option<usize>,
    #[arg(long)]
    n_stat_separations: Option<usize>,
    #[arg(long)]
    n_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow the multi-hour paper profile.
    #[arg(long)]
    long_run: bool,
    /// Print the plan and cost estimate without running anything.
    #[arg(long)]
    dry_run: bool,
}

impl RunArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            profile: self.profile,
            pulses: self.pulse.clone(),
            encoder: self.encoder,
            snrs: self.snr.clone(),
            noiseless: self.noiseless,
            t_min: self.t_min,
            t_max: self.t_max,
            n_samples: self.n_samples,
            epochs_noiseless: self.epochs_noiseless,
            epochs_noisy: self.epochs_noisy,
            ensemble_size: self.ensemble_size,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            n_curve_separations: self.n_curve_separations,
            n_stat_separations: self.n_stat_separations,
            n_draws: self.n_draws,
            master_seed: self.seed,
            output_dir: self.out.clone(),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => EXIT_CONFIG,
                ErrorClass::Training => EXIT_TRAINING,
                ErrorClass::Io => EXIT_IO,
                ErrorClass::Internal => EXIT_INTERNAL,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    let grid = SamplingGrid::canonical();
    match command {
        Command::Synth { pulse, out, spectrum } => {
            let signal = sample_pulse(&PulseSpec::from(pulse), &grid)?;
            signal.write_csv(&out)?;
            if let Some(path) = spectrum {
                let mut bins = power_spectrum(&signal);
                bins.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
                let f: Vec<f64> = bins.iter().map(|b| b.frequency).collect();
                let p: Vec<f64> = bins.iter().map(|b| b.power).collect();
                write_table(&path, &["f", "power"], &[&f, &p])?;
            }
        }
        Command::Scene {
            pulse,
            separation,
            snr,
            seed,
            out,
        } => {
            let clean = return_signal(&SceneConfig::new(PulseSpec::from(pulse), separation)?, &grid)?;
            let signal = match snr {
                None => clean,
                Some(r) => {
                    let noise = NoiseModel::new(r, grid.n_samples, seed)?;
                    corrupt(&clean, &noise, &mut stream(seed, Domain::SceneNoise, 0, 0))
                }
            };
            signal.write_csv(&out)?;
        }
        Command::Train {
            train,
            member,
            out,
            loss,
        } => {
            let cfg = train.config();
            let (model, report) = train_autoencoder(train.encoder, &cfg, member)?;
            save_checkpoint(&model, &out)?;
            if let Some(path) = loss {
                let epochs: Vec<f64> = (0..report.losses.len()).map(|e| e as f64).collect();
                write_table(&path, &["epoch", "loss"], &[&epochs, &report.losses])?;
            }
            println!("final loss {:.6e} after {} epochs", report.final_loss(), cfg.epochs);
        }
        Command::Ensemble { train, count, out_dir } => {
            let mut cfg = train.config();
            cfg.ensemble_size = count;
            let members = train_ensemble(train.encoder, &cfg)?;
            let (mut m, mut e, mut l) = (Vec::new(), Vec::new(), Vec::new());
            for (model, report) in &members {
                save_checkpoint(model, &out_dir.join(format!("member_{}.json", report.member)))?;
                for (epoch, loss) in report.losses.iter().enumerate() {
                    m.push(report.member as f64);
                    e.push(epoch as f64);
                    l.push(*loss);
                }
                println!("member {} final loss {:.6e}", report.member, report.final_loss());
            }
            write_table(&out_dir.join("report.csv"), &["member", "epoch", "loss"], &[&m, &e, &l])?;
        }
        Command::AnalyzeClean {
            ckpt,
            out,
            scaled,
            pulse,
            separations,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let spec = probe_pulse(&model, pulse, &ckpt)?;
            let curve = encoder_response(&model, &spec, separations, &grid)?;
            curve.write_csv(&out)?;
            if let Some(path) = scaled {
                scale_curve(&curve)?.write_csv(&path)?;
            }
        }
        Command::AnalyzeNoisy {
            ckpt,
            snr,
            out,
            pulse,
            separations,
            draws,
            seed,
        } => {
            if !(snr > 0.0 && snr.is_finite()) {
                return Err(Error::Config(format!("--snr must be > 0, got {snr}")));
            }
            let model = load_checkpoint(&ckpt)?;
            let spec = probe_pulse(&model, pulse, &ckpt)?;
            let stats = noisy_response_stats(&model, &spec, snr, separations, draws, seed, &grid)?;
            stats.write_csv(&out)?;
            println!("mean scaled std {:.6e}", stats.mean_scaled_std());
        }
        Command::Rank { stats, out } => {
            let mut table = BTreeMap::new();
            for item in &stats {
                let (label, path) = split_label(item);
                if table.insert(label.clone(), NoiseStats::read_csv(&path)?).is_some() {
                    return Err(Error::Config(format!("duplicate label '{label}' in --stats")));
                }
            }
            let ranked = rank_signals(&table)?;
            let mut text = String::from("rank,label,mean_scaled_std\n");
            for (i, (label, score)) in ranked.iter().enumerate() {
                println!("{} {label} {score:.6e}", i + 1);
                text.push_str(&format!("{},{label},{}\n", i + 1, fmt_f64(*score)));
            }
            if let Some(path) = out {
                std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Compare {
            ckpt,
            scene1,
            scene2,
            pulse,
            tolerance,
        } => {
            let model = load_checkpoint(&ckpt)?;
            let spec = probe_pulse(&model, pulse, &ckpt)?;
            let first = SampledSignal::read_csv(&scene1, &grid)?;
            let second = SampledSignal::read_csv(&scene2, &grid)?;
            let verdict = match compare_scenes(&model, &spec, &first, &second, tolerance)? {
                SceneOrder::FirstLarger => "first-larger",
                SceneOrder::SecondLarger => "second-larger",
                SceneOrder::Indistinguishable => "indistinguishable",
            };
            println!("{verdict}");
        }
        Command::Gradcheck { seed, cases } => {
            let results = run_suite(seed, cases)?;
            let mut failed = 0;
            for r in &results {
                let status = if r.passed() { "ok" } else { "FAIL" };
                println!("{status:4} {:10} {:?} rel_error {:.3e}", r.layer, r.input_shape, r.rel_error);
                failed += usize::from(!r.passed());
            }
            println!("{} checks, {failed} failed", results.len());
            if failed > 0 {
                return Err(Error::InvalidArgument(format!("{failed} gradient checks failed")));
            }
        }
        Command::Run(args) => run(args)?,
        Command::Model {
            action: ModelCommand::Info { ckpt },
        } => print!("{}", load_checkpoint(&ckpt)?.describe()),
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let (mut config, _notes) = parse_config(args.config.as_deref(), &args.overrides())?;
    config.long_run = args.long_run;
    if args.dry_run {
        println!("estimated cost: {}", estimate_cost(&config)?);
        for plan in plan_experiment(&config)? {
            println!(
                "{}: seed {}, {} epochs, finished {:?}, pending {:?}",
                plan.directory, plan.training_seed, plan.epochs, plan.complete, plan.pending
            );
        }
        return Ok(());
    }
    let outcome = run_experiment(&config)?;
    println!(
        "manifest {} sha256 {} ({} trained, {} resumed)",
        outcome.manifest_path.display(),
        outcome.manifest_sha256,
        outcome.trained,
        outcome.resumed
    );
    for r in &outcome.manifest.rankings {
        let order: Vec<String> = r
            .order
            .iter()
            .map(|e| format!("{} ({:.4e})", e.pulse, e.mean_scaled_std))
            .collect();
        println!("snr {}: {}", r.target_ratio, order.join(" < "));
    }
    outcome.check()
}

/// The pulse a checkpoint should be probed with.
fn probe_pulse(model: &AutoencoderModel, pulse: Option<PulseKind>, ckpt: &Path) -> Result<PulseSpec> {
    pulse
        .or(model.metadata.pulse)
        .map(PulseSpec::from)
        .ok_or_else(|| {
            Error::Config(format!(
                "{} does not record a pulse; pass --pulse",
                ckpt.display()
            ))
        })
}

fn split_label(item: &str) -> (String, PathBuf) {
    match item.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(item);
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| item.to_string());
            (label, path)
        }
    }
}
