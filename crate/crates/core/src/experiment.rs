//! End-to-end experiments: configuration, per-ensemble training and
//! analysis, resumable artifact layout and the JSON manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! manifest.json
//! ranking_snr_<R>.csv
//! <pulse>/noiseless/member_<k>.json        checkpoint
//! <pulse>/noiseless/member_<k>_loss.csv    epoch,loss
//! <pulse>/noiseless/curve_<k>.csv          raw clean response
//! <pulse>/noiseless/curve_scaled_<k>.csv
//! <pulse>/noiseless/report.csv             member,epoch,loss
//! <pulse>/snr_<R>/...                      same, plus stats_<k>.csv
//! ```
//!
//! A member's checkpoint is written last, so an existing checkpoint whose
//! metadata matches the plan marks the member as finished and a rerun skips
//! it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{encoder_response, monotonicity_fraction, noisy_response_stats, scale_curve};
use crate::csvio::{read_table, write_table};
use crate::error::{Error, Result};
use crate::model::{build_decoder, build_encoder, load_checkpoint, save_checkpoint, AutoencoderModel, EncoderKind};
use crate::pulses::{PulseKind, PulseSpec};
use crate::rng::{derive_seed, stream, Domain};
use crate::scene::{SamplingGrid, CANONICAL_SAMPLES};
use crate::train::{train_autoencoder, TrainConfig, BATCH_SIZE, ENSEMBLE_SIZE, NOISELESS_EPOCHS, NOISY_EPOCHS};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
/// Per-ensemble record of the settings its members were produced with.
pub const SETTINGS_FILE: &str = "settings.json";
pub const THREADS_ENV: &str = "RANGE_AE_THREADS";

/// Noise ratios of the paper-scale sweep.
pub const PAPER_SNRS: [f64; 4] = [0.5, 2.0 / 3.0, 1.0, 2.0];

const DESK_EPOCHS: usize = 500;
const DESK_ENSEMBLE: usize = 5;
const DESK_DRAWS: usize = 200;
/// Rough single-core throughput used for cost estimates.
const MULTIPLY_ADDS_PER_SEC: f64 = 5e9;
const ANALYSIS_SALT: u64 = 0xa11a;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Fourier encoder, 500 epochs, 5 members, 200 draws, ratio 1.
    Desk,
    /// Conv encoder, 3000/5000 epochs, 20 members, 1000 draws, four ratios.
    Paper,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile '{other}' (expected desk or paper)"))),
        }
    }
}

/// A fully resolved experiment. Serialized into the manifest, minus the
/// output directory and the long-run switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub pulses: Vec<PulseKind>,
    pub encoder: EncoderKind,
    /// Noise ratios for the denoising ensembles.
    pub snrs: Vec<f64>,
    /// Whether to train the noiseless ensembles as well.
    pub noiseless: bool,
    pub t_min: f64,
    pub t_max: f64,
    pub n_samples: usize,
    pub epochs_noiseless: usize,
    pub epochs_noisy: usize,
    pub ensemble_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_curve_separations: usize,
    pub n_stat_separations: usize,
    pub n_draws: usize,
    pub master_seed: u64,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub long_run: bool,
}

impl ExperimentConfig {
    pub fn defaults(profile: Profile) -> Self {
        let grid = SamplingGrid::canonical();
        let base = ExperimentConfig {
            profile,
            pulses: PulseKind::ALL.to_vec(),
            encoder: EncoderKind::Fourier,
            snrs: vec![1.0],
            noiseless: true,
            t_min: grid.t_min,
            t_max: grid.t_max,
            n_samples: grid.n_samples,
            epochs_noiseless: DESK_EPOCHS,
            epochs_noisy: DESK_EPOCHS,
            ensemble_size: DESK_ENSEMBLE,
            batch_size: BATCH_SIZE,
            learning_rate: 1e-3,
            n_curve_separations: crate::analysis::CLEAN_SEPARATIONS,
            n_stat_separations: crate::analysis::NOISY_SEPARATIONS,
            n_draws: DESK_DRAWS,
            master_seed: 0,
            output_dir: PathBuf::from("range-ae-out"),
            long_run: false,
        };
        match profile {
            Profile::Desk => base,
            Profile::Paper => ExperimentConfig {
                encoder: EncoderKind::Conv,
                snrs: PAPER_SNRS.to_vec(),
                epochs_noiseless: NOISELESS_EPOCHS,
                epochs_noisy: NOISY_EPOCHS,
                ensemble_size: ENSEMBLE_SIZE,
                n_draws: crate::analysis::NOISE_DRAWS,
                ..base
            },
        }
    }

    pub fn grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::new(self.t_min, self.t_max, self.n_samples)
    }

    fn apply(&mut self, ov: &ConfigOverrides) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = &ov.$field {
                    self.$field = v.clone();
                })*
            };
        }
        take!(
            pulses,
            encoder,
            snrs,
            noiseless,
            t_min,
            t_max,
            n_samples,
            epochs_noiseless,
            epochs_noisy,
            ensemble_size,
            batch_size,
            learning_rate,
            n_curve_separations,
            n_stat_separations,
            n_draws,
            master_seed,
            output_dir
        );
        if let Some(p) = ov.profile {
            self.profile = p;
        }
    }

    /// Checks everything that is not tied to a single key.
    pub fn validate(&self) -> Result<()> {
        check_overrides(&ConfigOverrides::from(self), &Origin::Resolved)?;
        let canonical = SamplingGrid::canonical();
        let grid = self.grid()?;
        if grid != canonical {
            return Err(Error::Config(format!(
                "the architectures need the canonical grid [{}, {}] with {CANONICAL_SAMPLES} samples",
                canonical.t_min, canonical.t_max
            )));
        }
        if !self.noiseless && self.snrs.is_empty() {
            return Err(Error::Config("nothing to run: noiseless is off and no snrs are given".into()));
        }
        Ok(())
    }

    fn train_config(&self, pulse: PulseKind, target_ratio: Option<f64>) -> Result<TrainConfig> {
        Ok(TrainConfig {
            pulse: PulseSpec::from(pulse),
            target_ratio,
            epochs: match target_ratio {
                None => self.epochs_noiseless,
                Some(_) => self.epochs_noisy,
            },
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            master_seed: ensemble_seed(self.master_seed, pulse, target_ratio),
            ensemble_size: self.ensemble_size,
            grid: self.grid()?,
        })
    }

    /// (pulse, ratio) pairs in run order: noiseless first, then each ratio.
    fn ensembles(&self) -> Vec<(PulseKind, Option<f64>)> {
        let mut out = Vec::new();
        for &pulse in &self.pulses {
            if self.noiseless {
                out.push((pulse, None));
            }
            for &r in &self.snrs {
                out.push((pulse, Some(r)));
            }
        }
        out
    }
}

/// Partial configuration, as read from a flat JSON file or assembled from
/// command-line flags. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub profile: Option<Profile>,
    pub pulses: Option<Vec<PulseKind>>,
    pub encoder: Option<EncoderKind>,
    pub snrs: Option<Vec<f64>>,
    pub noiseless: Option<bool>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub n_samples: Option<usize>,
    pub epochs_noiseless: Option<usize>,
    pub epochs_noisy: Option<usize>,
    pub ensemble_size: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub n_curve_separations: Option<usize>,
    pub n_stat_separations: Option<usize>,
    pub n_draws: Option<usize>,
    pub master_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl From<&ExperimentConfig> for ConfigOverrides {
    fn from(c: &ExperimentConfig) -> Self {
        ConfigOverrides {
            profile: Some(c.profile),
            pulses: Some(c.pulses.clone()),
            encoder: Some(c.encoder),
            snrs: Some(c.snrs.clone()),
            noiseless: Some(c.noiseless),
            t_min: Some(c.t_min),
            t_max: Some(c.t_max),
            n_samples: Some(c.n_samples),
            epochs_noiseless: Some(c.epochs_noiseless),
            epochs_noisy: Some(c.epochs_noisy),
            ensemble_size: Some(c.ensemble_size),
            batch_size: Some(c.batch_size),
            learning_rate: Some(c.learning_rate),
            n_curve_separations: Some(c.n_curve_separations),
            n_stat_separations: Some(c.n_stat_separations),
            n_draws: Some(c.n_draws),
            master_seed: Some(c.master_seed),
            output_dir: Some(c.output_dir.clone()),
        }
    }
}

impl ConfigOverrides {
    /// `self` overridden by `flags`. Every key set on both sides with
    /// different values is reported in the returned notes.
    fn merged_with(&self, flags: &ConfigOverrides) -> (ConfigOverrides, Vec<String>) {
        let mut out = self.clone();
        let mut notes = Vec::new();
        macro_rules! merge {
            ($($field:ident),*) => {
                $(if let Some(v) = &flags.$field {
                    if let Some(old) = &self.$field {
                        if old != v {
                            notes.push(format!(
                                "{} overrides the config file ({:?} -> {:?})",
                                flag_name(stringify!($field)),
                                old,
                                v
                            ));
                        }
                    }
                    out.$field = Some(v.clone());
                })*
            };
        }
        merge!(
            profile,
            pulses,
            encoder,
            snrs,
            noiseless,
            t_min,
            t_max,
            n_samples,
            epochs_noiseless,
            epochs_noisy,
            ensemble_size,
            batch_size,
            learning_rate,
            n_curve_separations,
            n_stat_separations,
            n_draws,
            master_seed,
            output_dir
        );
        (out, notes)
    }
}

/// Command-line spelling of a config key.
pub fn flag_name(key: &str) -> String {
    match key {
        "pulses" => "--pulse".into(),
        "snrs" => "--snr".into(),
        "master_seed" => "--seed".into(),
        "output_dir" => "--out".into(),
        other => format!("--{}", other.replace('_', "-")),
    }
}

enum Origin<'a> {
    File { label: &'a str, text: &'a str },
    Flags,
    Resolved,
}

impl Origin<'_> {
    fn locate(&self, key: &str) -> String {
        match self {
            Origin::File { label, text } => {
                let needle = format!("\"{key}\"");
                match text.lines().position(|l| l.contains(&needle)) {
                    Some(i) => format!("{label} line {}: key '{key}'", i + 1),
                    None => format!("{label}: key '{key}'"),
                }
            }
            Origin::Flags => flag_name(key),
            Origin::Resolved => format!("config key '{key}'"),
        }
    }
}

fn check_overrides(ov: &ConfigOverrides, origin: &Origin<'_>) -> Result<()> {
    let fail = |key: &str, msg: String| Err(Error::Config(format!("{}: {msg}", origin.locate(key))));
    let at_least = |key: &str, v: Option<usize>, min: usize| match v {
        Some(v) if v < min => fail(key, format!("must be >= {min}, got {v}")),
        _ => Ok(()),
    };

    if let Some(snrs) = &ov.snrs {
        if let Some(bad) = snrs.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return fail("snrs", format!("noise ratios must be > 0, got {bad}"));
        }
    }
    if let Some(pulses) = &ov.pulses {
        if pulses.is_empty() {
            return fail("pulses", "at least one pulse is required".into());
        }
        for (i, p) in pulses.iter().enumerate() {
            if pulses[..i].contains(p) {
                return fail("pulses", format!("pulse '{p}' is listed twice"));
            }
        }
    }
    if let Some(lr) = ov.learning_rate {
        if !(lr.is_finite() && lr > 0.0) {
            return fail("learning_rate", format!("must be > 0, got {lr}"));
        }
    }
    for (key, v) in [("t_min", ov.t_min), ("t_max", ov.t_max)] {
        if let Some(v) = v {
            if !v.is_finite() {
                return fail(key, format!("must be finite, got {v}"));
            }
        }
    }
    at_least("n_samples", ov.n_samples, 2)?;
    at_least("epochs_noiseless", ov.epochs_noiseless, 1)?;
    at_least("epochs_noisy", ov.epochs_noisy, 1)?;
    at_least("ensemble_size", ov.ensemble_size, 1)?;
    at_least("batch_size", ov.batch_size, 2)?;
    at_least("n_curve_separations", ov.n_curve_separations, 2)?;
    at_least("n_stat_separations", ov.n_stat_separations, 2)?;
    at_least("n_draws", ov.n_draws, 1)?;
    Ok(())
}

/// Resolves a configuration from an optional flat JSON file and flag
/// overrides. Flags win over the file; each such conflict is logged and
/// returned as a note. Missing keys take the defaults of the chosen profile.
pub fn parse_config(file: Option<&Path>, flags: &ConfigOverrides) -> Result<(ExperimentConfig, Vec<String>)> {
    match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_config_str(&text, &path.display().to_string(), flags)
        }
        None => parse_config_str("{}", "<defaults>", flags),
    }
}

/// As [`parse_config`], with the file contents given directly. `label`
/// names the source in error messages.
pub fn parse_config_str(text: &str, label: &str, flags: &ConfigOverrides) -> Result<(ExperimentConfig, Vec<String>)> {
    let from_file: ConfigOverrides = if text.trim().is_empty() {
        ConfigOverrides::default()
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("{label}: {e}")))?
    };
    check_overrides(&from_file, &Origin::File { label, text })?;
    check_overrides(flags, &Origin::Flags)?;
    let (merged, notes) = from_file.merged_with(flags);
    for n in &notes {
        log::info!("{n}");
    }
    let mut config = ExperimentConfig::defaults(merged.profile.unwrap_or(Profile::Desk));
    config.apply(&merged);
    config.validate()?;
    Ok((config, notes))
}

/// Master seed of the ensemble for `(pulse, ratio)`; independent of the
/// order in which pulses and ratios are listed.
pub fn ensemble_seed(master_seed: u64, pulse: PulseKind, target_ratio: Option<f64>) -> u64 {
    let pulse_code = PulseKind::ALL.iter().position(|p| *p == pulse).unwrap_or(0) as u64;
    derive_seed(master_seed, &[pulse_code, target_ratio.map_or(u64::MAX, f64::to_bits)])
}

/// Seed of the noise draws used to analyse one member.
pub fn analysis_seed(training_seed: u64, member: u64) -> u64 {
    derive_seed(training_seed, &[ANALYSIS_SALT, member])
}

/// Directory of one ensemble, relative to the output directory.
pub fn ensemble_dir(pulse: PulseKind, target_ratio: Option<f64>) -> String {
    match target_ratio {
        None => format!("{}/noiseless", pulse.name()),
        Some(r) => format!("{}/snr_{r}", pulse.name()),
    }
}

/// Rough amount of work in an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub trainings: usize,
    pub training_multiply_adds: f64,
    pub analysis_multiply_adds: f64,
}

impl CostEstimate {
    pub fn cpu_hours(&self) -> f64 {
        (self.training_multiply_adds + self.analysis_multiply_adds) / MULTIPLY_ADDS_PER_SEC / 3600.0
    }
}

impl fmt::Display for CostEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} model trainings, about {:.1e} multiply-adds for training and {:.1e} for analysis (roughly {:.1} CPU-hours on one core)",
            self.trainings,
            self.training_multiply_adds,
            self.analysis_multiply_adds,
            self.cpu_hours()
        )
    }
}

pub fn estimate_cost(config: &ExperimentConfig) -> Result<CostEstimate> {
    let mut rng = stream(0, Domain::Init, 0, 0);
    let row = [1, CANONICAL_SAMPLES];
    let enc = build_encoder(config.encoder, &mut rng).multiply_adds(&row)? as f64;
    let dec = build_decoder(&mut rng).multiply_adds(&[1])? as f64;
    let members = config.ensemble_size as f64;
    let mut est = CostEstimate {
        trainings: 0,
        training_multiply_adds: 0.0,
        analysis_multiply_adds: 0.0,
    };
    for (_, ratio) in config.ensembles() {
        let epochs = if ratio.is_some() {
            config.epochs_noisy
        } else {
            config.epochs_noiseless
        } as f64;
        est.trainings += config.ensemble_size;
        // forward plus roughly twice that for backward
        est.training_multiply_adds += members * epochs * config.batch_size as f64 * 3.0 * (enc + dec);
        let mut rows = config.n_curve_separations as f64;
        if ratio.is_some() {
            rows += (config.n_stat_separations * config.n_draws) as f64;
        }
        est.analysis_multiply_adds += members * rows * enc;
    }
    Ok(est)
}

/// One ensemble of the plan and which of its members are already on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePlan {
    pub pulse: PulseKind,
    pub target_ratio: Option<f64>,
    pub directory: String,
    pub training_seed: u64,
    pub epochs: usize,
    pub complete: Vec<u64>,
    pub pending: Vec<u64>,
}

fn member_files(member: u64, noisy: bool) -> Vec<String> {
    let mut files = vec![
        format!("member_{member}_loss.csv"),
        format!("curve_{member}.csv"),
        format!("curve_scaled_{member}.csv"),
    ];
    if noisy {
        files.push(format!("stats_{member}.csv"));
    }
    files.push(checkpoint_name(member));
    files
}

fn checkpoint_name(member: u64) -> String {
    format!("member_{member}.json")
}

/// Loads a member's checkpoint if it and all its artifacts exist and it was
/// trained under `train`.
fn finished_member(
    dir: &Path,
    kind: EncoderKind,
    train: &TrainConfig,
    member: u64,
) -> Option<AutoencoderModel> {
    let noisy = train.target_ratio.is_some();
    if !member_files(member, noisy).iter().all(|f| dir.join(f).is_file()) {
        return None;
    }
    let model = load_checkpoint(&dir.join(checkpoint_name(member))).ok()?;
    let m = &model.metadata;
    let matches = model.kind == kind
        && m.pulse == Some(train.pulse.kind)
        && m.target_ratio == train.target_ratio
        && m.master_seed == train.master_seed
        && m.member == member
        && m.epochs == train.epochs;
    matches.then_some(model)
}

/// Everything that shapes an ensemble's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleSettings {
    encoder: EncoderKind,
    pulse: PulseKind,
    target_ratio: Option<f64>,
    training_seed: u64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    t_min: f64,
    t_max: f64,
    n_samples: usize,
    n_curve_separations: usize,
    n_stat_separations: Option<usize>,
    n_draws: Option<usize>,
}

impl EnsembleSettings {
    fn new(config: &ExperimentConfig, train: &TrainConfig) -> Self {
        let noisy = train.target_ratio.is_some();
        EnsembleSettings {
            encoder: config.encoder,
            pulse: train.pulse.kind,
            target_ratio: train.target_ratio,
            training_seed: train.master_seed,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            t_min: config.t_min,
            t_max: config.t_max,
            n_samples: config.n_samples,
            n_curve_separations: config.n_curve_separations,
            n_stat_separations: noisy.then_some(config.n_stat_separations),
            n_draws: noisy.then_some(config.n_draws),
        }
    }

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("settings serialize");
        s.push('\n');
        s
    }

    /// Fails if `dir` already holds an ensemble made with other settings.
    fn check(&self, dir: &Path) -> Result<()> {
        let path = dir.join(SETTINGS_FILE);
        if !path.is_file() {
            return Ok(());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        match serde_json::from_str::<EnsembleSettings>(&text) {
            Ok(found) if found == *self => Ok(()),
            _ => Err(Error::Config(format!(
                "{} was produced with different settings; use another output directory",
                path.display()
            ))),
        }
    }
}

/// Which members of each ensemble still need work.
pub fn plan_experiment(config: &ExperimentConfig) -> Result<Vec<EnsemblePlan>> {
    config.validate()?;
    config
        .ensembles()
        .into_iter()
        .map(|(pulse, ratio)| {
            let train = config.train_config(pulse, ratio)?;
            let directory = ensemble_dir(pulse, ratio);
            let dir = config.output_dir.join(&directory);
            EnsembleSettings::new(config, &train).check(&dir)?;
            let (complete, pending) = (0..config.ensemble_size as u64)
                .partition(|&k| finished_member(&dir, config.encoder, &train, k).is_some());
            Ok(EnsemblePlan {
                pulse,
                target_ratio: ratio,
                directory,
                training_seed: train.master_seed,
                epochs: train.epochs,
                complete,
                pending,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub member: u64,
    pub analysis_seed: u64,
    pub final_loss: f64,
    pub monotonicity: f64,
    /// Mean scaled deviation over the noisy separations; noisy ensembles only.
    pub mean_scaled_std: Option<f64>,
    /// SHA-256 of every file written for this member.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRecord {
    pub pulse: PulseKind,
    pub target_ratio: Option<f64>,
    pub directory: String,
    pub training_seed: u64,
    pub epochs: usize,
    pub members: Vec<MemberRecord>,
    pub report_sha256: Option<String>,
}

impl EnsembleRecord {
    /// Ensemble average of the members' mean scaled deviation.
    pub fn mean_scaled_std(&self) -> Option<f64> {
        let v: Vec<f64> = self.members.iter().filter_map(|m| m.mean_scaled_std).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub pulse: PulseKind,
    pub mean_scaled_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub target_ratio: f64,
    pub file: String,
    pub sha256: String,
    /// Best (smallest mean scaled deviation) first.
    pub order: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedMember {
    pub pulse: PulseKind,
    pub target_ratio: Option<f64>,
    pub member: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub ensembles: Vec<EnsembleRecord>,
    pub rankings: Vec<RankingRecord>,
    pub failed: Vec<FailedMember>,
}

impl Manifest {
    pub fn ensemble(&self, pulse: PulseKind, target_ratio: Option<f64>) -> Option<&EnsembleRecord> {
        self.ensembles
            .iter()
            .find(|e| e.pulse == pulse && e.target_ratio == target_ratio)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
    pub manifest_sha256: String,
    pub trained: usize,
    pub resumed: usize,
}

impl ExperimentOutcome {
    /// `Err` when any member failed; the manifest on disk lists them.
    pub fn check(&self) -> Result<()> {
        match self.manifest.failed.len() {
            0 => Ok(()),
            count => Err(Error::PartialFailure {
                count,
                manifest: self.manifest_path.clone(),
            }),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Trains (unless already finished) and analyses one member, writing its
/// artifacts with the checkpoint last.
fn run_member(
    config: &ExperimentConfig,
    train: &TrainConfig,
    dir: &Path,
    member: u64,
) -> Result<MemberRecord> {
    let seed = analysis_seed(train.master_seed, member);
    let noisy = train.target_ratio.is_some();
    let model = match finished_member(dir, config.encoder, train, member) {
        Some(model) => model,
        None => {
            let (model, report) = train_autoencoder(config.encoder, train, member)?;
            let epochs: Vec<f64> = (0..report.losses.len()).map(|e| e as f64).collect();
            write_table(
                &dir.join(format!("member_{member}_loss.csv")),
                &["epoch", "loss"],
                &[&epochs, &report.losses],
            )?;
            let curve = encoder_response(&model, &train.pulse, config.n_curve_separations, &train.grid)?;
            curve.write_csv(&dir.join(format!("curve_{member}.csv")))?;
            scale_curve(&curve)?.write_csv(&dir.join(format!("curve_scaled_{member}.csv")))?;
            if let Some(ratio) = train.target_ratio {
                let stats = noisy_response_stats(
                    &model,
                    &train.pulse,
                    ratio,
                    config.n_stat_separations,
                    config.n_draws,
                    seed,
                    &train.grid,
                )?;
                stats.write_csv(&dir.join(format!("stats_{member}.csv")))?;
            }
            save_checkpoint(&model, &dir.join(checkpoint_name(member)))?;
            model
        }
    };

    let scaled = crate::analysis::ScaledCurve::read_csv(&dir.join(format!("curve_scaled_{member}.csv")))?;
    let mean_scaled_std = if noisy {
        let stats = crate::analysis::NoiseStats::read_csv(&dir.join(format!("stats_{member}.csv")))?;
        Some(stats.mean_scaled_std())
    } else {
        None
    };
    let files = member_files(member, noisy)
        .into_iter()
        .map(|f| Ok((f.clone(), hash_file(&dir.join(&f))?)))
        .collect::<Result<_>>()?;
    Ok(MemberRecord {
        member,
        analysis_seed: seed,
        final_loss: model.metadata.final_loss.unwrap_or(f64::NAN),
        monotonicity: monotonicity_fraction(&scaled),
        mean_scaled_std,
        files,
    })
}

/// Concatenates the per-member loss files into `report.csv`.
fn write_report(dir: &Path, members: &[u64]) -> Result<Option<String>> {
    if members.is_empty() {
        return Ok(None);
    }
    let (mut m, mut e, mut l) = (Vec::new(), Vec::new(), Vec::new());
    for &k in members {
        let path = dir.join(format!("member_{k}_loss.csv"));
        let t = read_table(&path)?;
        let epochs = t.require("epoch", &path)?;
        m.extend(std::iter::repeat_n(k as f64, epochs.len()));
        e.extend_from_slice(epochs);
        l.extend_from_slice(t.require("loss", &path)?);
    }
    let path = dir.join("report.csv");
    write_table(&path, &["member", "epoch", "loss"], &[&m, &e, &l])?;
    hash_file(&path).map(Some)
}

fn write_ranking(out: &Path, ratio: f64, order: &[RankEntry]) -> Result<RankingRecord> {
    let file = format!("ranking_snr_{ratio}.csv");
    let mut text = String::from("rank,pulse,mean_scaled_std\n");
    for (i, e) in order.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            e.pulse,
            crate::csvio::fmt_f64(e.mean_scaled_std)
        ));
    }
    let path = out.join(&file);
    write_text(&path, &text)?;
    Ok(RankingRecord {
        target_ratio: ratio,
        sha256: sha256_hex(text.as_bytes()),
        file,
        order: order.to_vec(),
    })
}

/// Runs (or resumes) a full experiment and writes its manifest.
///
/// Members that fail are listed in the manifest rather than aborting the
/// run; [`ExperimentOutcome::check`] turns them into an error. The paper
/// profile is refused unless `config.long_run` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    if config.profile == Profile::Paper && !config.long_run {
        return Err(Error::Config(format!(
            "the paper profile is a long run and needs --long-run; estimated cost: {}",
            estimate_cost(config)?
        )));
    }
    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let plans = plan_experiment(config)?;
    let mut ensembles = Vec::new();
    let mut failed = Vec::new();
    let (mut trained, mut resumed) = (0, 0);

    for plan in &plans {
        let train = config.train_config(plan.pulse, plan.target_ratio)?;
        let dir = out.join(&plan.directory);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_text(&dir.join(SETTINGS_FILE), &EnsembleSettings::new(config, &train).to_json())?;
        log::info!(
            "{}: {} member(s) to train, {} already finished",
            plan.directory,
            plan.pending.len(),
            plan.complete.len()
        );
        trained += plan.pending.len();
        resumed += plan.complete.len();

        let members: Vec<u64> = (0..config.ensemble_size as u64).collect();
        let results: Vec<(u64, Result<MemberRecord>)> = members
            .par_iter()
            .map(|&k| (k, run_member(config, &train, &dir, k)))
            .collect();
        let mut records = Vec::new();
        for (k, r) in results {
            match r {
                Ok(rec) => records.push(rec),
                Err(e) => {
                    log::error!("{} member {k}: {e}", plan.directory);
                    failed.push(FailedMember {
                        pulse: plan.pulse,
                        target_ratio: plan.target_ratio,
                        member: k,
                        error: e.to_string(),
                    });
                }
            }
        }
        let ok: Vec<u64> = records.iter().map(|r| r.member).collect();
        ensembles.push(EnsembleRecord {
            pulse: plan.pulse,
            target_ratio: plan.target_ratio,
            directory: plan.directory.clone(),
            training_seed: plan.training_seed,
            epochs: plan.epochs,
            report_sha256: write_report(&dir, &ok)?,
            members: records,
        });
    }

    let mut rankings = Vec::new();
    for &ratio in &config.snrs {
        let mut order: Vec<RankEntry> = ensembles
            .iter()
            .filter(|e| e.target_ratio == Some(ratio))
            .filter_map(|e| {
                e.mean_scaled_std().map(|s| RankEntry {
                    pulse: e.pulse,
                    mean_scaled_std: s,
                })
            })
            .collect();
        order.sort_by(|a, b| {
            a.mean_scaled_std
                .total_cmp(&b.mean_scaled_std)
                .then_with(|| a.pulse.name().cmp(b.pulse.name()))
        });
        rankings.push(write_ranking(out, ratio, &order)?);
    }

    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        config: config.clone(),
        ensembles,
        rankings,
        failed,
    };
    let text = manifest.to_json();
    let manifest_path = out.join(MANIFEST_FILE);
    write_text(&manifest_path, &text)?;
    Ok(ExperimentOutcome {
        manifest_sha256: sha256_hex(text.as_bytes()),
        manifest,
        manifest_path,
        trained,
        resumed,
    })
}

/// Caps the worker pool at `RANGE_AE_THREADS` if set. Returns the cap.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // a second call (e.g. from tests) finds the pool already built
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}
