//! Configuration presets and the offline/online pipeline behind the CLI.
//!
//! All artifacts live under `output_dir`:
//!
//! * `data/`: dataset files and `manifest.json`
//! * `model/`: `last.lodn`, `best.lodn`, `adam.loda`, `history.jsonl`, `summary.json`
//! * `eval/<experiment>/`: `report.json` and cross-section CSVs
//! * `study/`: `decay.csv`, `convergence.csv`, `study.json`
//!
//! Every command also writes the resolved configuration to
//! `output_dir/config.json`.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coeff::{
    cracks, default_cracks, smooth_sine, Coefficient, Interval, StreamSeed, CRACK_FAMILY_CODE, UNIT_FIVE,
};
use crate::dataset::{generate, Dataset, DatasetConfig, Family, Manifest, Split};
use crate::error::{Error, Result};
use crate::lod::{h_convergence_study, localization_decay_study, ConvergenceStudy, DecayStudy, Load, LodContext};
use crate::nn::{
    default_architecture, evaluate_loss, train, AdamState, Architecture, EpochRecord, MlpParameters, Schedule,
    TrainOptions,
};
use crate::surrogate::{aggregate_by_family, evaluate, EvaluateOptions, EvaluationReport, FamilyAggregate};

/// Scale presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            _ => Err(Error::config(format!("preset: unknown preset {s:?}"))),
        }
    }
}

/// Coefficients available to the error studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyCoefficient {
    /// `a = 1`.
    Unit,
    /// `2 + sin(2 pi x) sin(2 pi y)`.
    Smooth,
    /// One multiscale sample drawn from the experiment seed.
    Ms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub decay_coefficient: StudyCoefficient,
    pub decay_layers: Vec<usize>,
    pub convergence_coefficient: StudyCoefficient,
    pub convergence_levels: Vec<u32>,
    pub convergence_layers: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            decay_coefficient: StudyCoefficient::Ms,
            decay_layers: vec![1, 2, 3, 4],
            convergence_coefficient: StudyCoefficient::Smooth,
            convergence_levels: vec![2, 3, 4, 5],
            convergence_layers: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub coarse_level: u32,
    pub eps_level: u32,
    pub layers: usize,
    pub families: Vec<Family>,
    pub samples_per_family: usize,
    pub split: [f64; 3],
    pub interval: Interval,
    pub schedule: Schedule,
    /// Master seed for coefficients, initialization and shuffling.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Held-out multiscale coefficients used by the multiscale evaluation.
    pub eval_samples: usize,
    pub study: StudyConfig,
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self {
                coarse_level: 4,
                eps_level: 6,
                layers: 2,
                families: (0..=6).map(Family::Level).chain([Family::Multiscale]).collect(),
                samples_per_family: 40,
                split: [0.8, 0.1, 0.1],
                interval: UNIT_FIVE,
                schedule: Schedule {
                    epochs: 8,
                    batch_size: 256,
                    initial_step: 1e-4,
                    final_step: 1e-5,
                    switch_epoch: 5,
                },
                seed: 1,
                output_dir: PathBuf::from("lodc-out"),
                eval_samples: 5,
                study: StudyConfig::default(),
            },
            Preset::Paper => Self {
                coarse_level: 5,
                eps_level: 8,
                layers: 2,
                families: (0..=8).map(Family::Level).chain([Family::Multiscale]).collect(),
                samples_per_family: 500,
                split: [0.8, 0.1, 0.1],
                interval: UNIT_FIVE,
                schedule: Schedule {
                    epochs: 20,
                    batch_size: 1000,
                    initial_step: 1e-4,
                    final_step: 1e-5,
                    switch_epoch: 5,
                },
                seed: 1,
                output_dir: PathBuf::from("lodc-out"),
                eval_samples: 5,
                study: StudyConfig {
                    convergence_levels: vec![2, 3, 4, 5, 6],
                    ..StudyConfig::default()
                },
            },
        }
    }

    /// The preset overlaid with the keys of a JSON object; nested objects
    /// are merged key by key.
    pub fn from_json_overlay(preset: Preset, json: &str) -> Result<Self> {
        let overlay: Value = serde_json::from_str(json).map_err(|e| Error::config(format!("config: {e}")))?;
        if !overlay.is_object() {
            return Err(Error::config("config: top level must be a JSON object"));
        }
        let mut base = serde_json::to_value(Self::preset(preset))?;
        merge(&mut base, overlay);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(preset: Preset, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::from_json_overlay(preset, &text)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset_config().validate()?;
        self.schedule.validate()?;
        if self.eval_samples == 0 {
            return Err(Error::config("eval_samples must be positive"));
        }
        let st = &self.study;
        if st.decay_layers.len() < 2 || st.decay_layers.contains(&0) {
            return Err(Error::config(
                "study.decay_layers: need at least two positive patch sizes",
            ));
        }
        if st.convergence_levels.len() < 2 || st.convergence_levels.iter().any(|&l| l >= self.eps_level) {
            return Err(Error::config(format!(
                "study.convergence_levels: need at least two levels below eps_level ({})",
                self.eps_level
            )));
        }
        if st.convergence_layers == 0 {
            return Err(Error::config("study.convergence_layers must be positive"));
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            coarse_level: self.coarse_level,
            eps_level: self.eps_level,
            layers: self.layers,
            families: self.families.clone(),
            samples_per_family: self.samples_per_family,
            split: self.split,
            seed: self.seed,
            interval: self.interval,
        }
    }

    pub fn context(&self) -> Result<LodContext> {
        LodContext::new(self.coarse_level, self.eps_level, self.layers)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let ctx = self.context()?;
        default_architecture(ctx.input_len(), ctx.label_len(), self.eps_level - self.coarse_level)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.output_dir.join("model")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.output_dir.join("eval")
    }

    pub fn study_dir(&self) -> PathBuf {
        self.output_dir.join("study")
    }

    fn stream_rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn init_rng(&self) -> ChaCha8Rng {
        self.stream_rng(INIT_STREAM)
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.stream_rng(SHUFFLE_STREAM).next_u64()
    }

    /// Rough sizes of the offline phase.
    pub fn resource_estimate(&self) -> Result<ResourceEstimate> {
        let ctx = self.context()?;
        let arch = self.architecture()?;
        let samples = (self.families.len() * self.samples_per_family) as u64;
        let pairs = samples * ctx.num_elements() as u64;
        let record = 12 + 8 * (ctx.input_len() + ctx.label_len()) as u64;
        Ok(ResourceEstimate {
            pairs,
            dataset_bytes: pairs * record,
            parameters: arch.num_params() as u64,
            training_flops: 6.0 * arch.num_params() as f64 * pairs as f64 * 0.8 * self.schedule.epochs as f64,
        })
    }

    fn write_resolved(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)?;
        write_atomic(
            &self.output_dir.join("config.json"),
            (serde_json::to_string_pretty(self)? + "\n").as_bytes(),
        )
    }
}

fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResourceEstimate {
    pub pairs: u64,
    pub dataset_bytes: u64,
    pub parameters: u64,
    pub training_flops: f64,
}

impl fmt::Display for ResourceEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} pairs, {:.1} GB of data, {} parameters, {:.1e} training FLOP",
            self.pairs,
            self.dataset_bytes as f64 / 1e9,
            self.parameters,
            self.training_flops
        )
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Saves through a temporary file so an interrupted write leaves the old file intact.
fn save_atomic(path: &Path, save: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    save(&tmp)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Offline phase, part one: dataset files and manifest.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    cfg.write_resolved()?;
    let dir = cfg.data_dir();
    log::info!("generating dataset in {}", dir.display());
    generate(&cfg.dataset_config(), &dir, |p| {
        if p.samples_done % 16 == 0 || p.samples_done == p.samples_total {
            log::info!("{}/{} samples", p.samples_done, p.samples_total);
        }
    })
}

pub const LAST_CHECKPOINT: &str = "last.lodn";
pub const BEST_CHECKPOINT: &str = "best.lodn";
pub const OPTIMIZER_STATE: &str = "adam.loda";
pub const HISTORY: &str = "history.jsonl";
pub const TRAIN_SUMMARY: &str = "summary.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub architecture: Vec<usize>,
    pub parameters: usize,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// Mean loss of the best checkpoint on the test split.
    pub test_loss: f64,
    pub history: Vec<EpochRecord>,
}

fn read_history(path: &Path) -> Result<Vec<EpochRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

fn open_split(cfg: &ExperimentConfig, dir: &Path, split: Split) -> Result<Dataset> {
    let path = dir.join(split.file_name());
    if !path.exists() {
        return Err(Error::config(format!(
            "dataset file {} not found; run gen-data first",
            path.display()
        )));
    }
    let data = Dataset::open(&path)?;
    let ctx = cfg.context()?;
    if data.input_len() != ctx.input_len() || data.label_len() != ctx.label_len() {
        return Err(Error::config(format!(
            "dataset {} has widths ({}, {}), the configuration needs ({}, {})",
            path.display(),
            data.input_len(),
            data.label_len(),
            ctx.input_len(),
            ctx.label_len()
        )));
    }
    Ok(data)
}

/// Offline phase, part two: trains the network on the generated data.
///
/// With `resume`, training continues from `model/last.lodn` and its
/// optimizer state; epoch numbering continues from the checkpoint.
pub fn train_model(cfg: &ExperimentConfig, data_dir: Option<&Path>, resume: bool) -> Result<TrainSummary> {
    cfg.validate()?;
    cfg.write_resolved()?;
    let data_dir = data_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.data_dir());
    let train_data = open_split(cfg, &data_dir, Split::Train)?;
    let val_data = open_split(cfg, &data_dir, Split::Val)?;
    let test_data = open_split(cfg, &data_dir, Split::Test)?;
    let arch = cfg.architecture()?;

    let dir = cfg.model_dir();
    fs::create_dir_all(&dir)?;
    let last_path = dir.join(LAST_CHECKPOINT);
    let best_path = dir.join(BEST_CHECKPOINT);
    let adam_path = dir.join(OPTIMIZER_STATE);
    let history_path = dir.join(HISTORY);

    let (params, adam, start_epoch, mut history) = if resume {
        if !last_path.exists() {
            return Err(Error::config(format!(
                "cannot resume: {} not found",
                last_path.display()
            )));
        }
        let (params, epochs) = MlpParameters::load_expecting(&last_path, &arch)?;
        let adam = AdamState::load(&adam_path)?;
        let mut history = read_history(&history_path)?;
        history.truncate(epochs as usize);
        log::info!("resuming after epoch {epochs}");
        (params, Some(adam), epochs as usize, history)
    } else {
        let params = MlpParameters::init_glorot(&arch, &mut cfg.init_rng());
        (params, None, 0, Vec::new())
    };
    if start_epoch >= cfg.schedule.epochs {
        return Err(Error::config(format!(
            "schedule.epochs ({}) leaves nothing to do after epoch {start_epoch}",
            cfg.schedule.epochs
        )));
    }

    let history_text: String = history
        .iter()
        .map(|r| serde_json::to_string(r).map(|s| s + "\n"))
        .collect::<std::result::Result<_, _>>()?;
    write_atomic(&history_path, history_text.as_bytes())?;
    let mut best_val = history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    if !best_path.exists() {
        best_val = f64::INFINITY;
    }

    let opts = TrainOptions {
        schedule: cfg.schedule.clone(),
        shuffle_seed: cfg.shuffle_seed(),
        start_epoch,
    };
    let outcome = train(&train_data, &val_data, params, adam, &opts, |record, params, adam| {
        let epochs = record.epoch as u32;
        save_atomic(&last_path, |p| params.save(p, epochs))?;
        save_atomic(&adam_path, |p| adam.save(p))?;
        if record.val_loss < best_val {
            best_val = record.val_loss;
            save_atomic(&best_path, |p| params.save(p, epochs))?;
        }
        let mut f = fs::OpenOptions::new().append(true).open(&history_path)?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        Ok(())
    })?;
    history.extend(outcome.history);

    let (best, best_epoch) = MlpParameters::load_expecting(&best_path, &arch)?;
    let (test_loss, _) = evaluate_loss(&best, &test_data, cfg.schedule.batch_size.max(256))?;
    let summary = TrainSummary {
        architecture: arch.widths().to_vec(),
        parameters: arch.num_params(),
        epochs: cfg.schedule.epochs,
        best_epoch: best_epoch as usize,
        best_val_loss: best_val,
        test_loss,
        history,
    };
    write_atomic(
        &dir.join(TRAIN_SUMMARY),
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    Ok(summary)
}

/// Online experiments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Experiment {
    /// Held-out multiscale coefficients with `f = 1`.
    Multiscale,
    /// Smooth sine coefficient with `f = x1` for `x1 >= 0.5`, else 0.
    Smooth,
    /// Crack coefficient with `f = cos(2 pi x1)`.
    Cracks,
    /// A coefficient file with `f = 1`.
    Custom(PathBuf),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Multiscale => "multiscale",
            Experiment::Smooth => "smooth",
            Experiment::Cracks => "cracks",
            Experiment::Custom(_) => "custom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub experiment: String,
    pub checkpoint: PathBuf,
    pub reports: Vec<EvaluationReport>,
    pub aggregates: Vec<FamilyAggregate>,
}

fn smooth_load(x: f64, _y: f64) -> f64 {
    if x >= 0.5 {
        x
    } else {
        0.0
    }
}

fn cosine_load(x: f64, _y: f64) -> f64 {
    (2.0 * PI * x).cos()
}

/// Held-out multiscale coefficient `i`: sample indices past the generated ones.
pub fn held_out_multiscale(cfg: &ExperimentConfig, i: usize) -> Result<Coefficient> {
    Family::Multiscale.sample(
        cfg.eps_level,
        cfg.interval,
        cfg.seed,
        (cfg.samples_per_family + i) as u64,
    )
}

pub fn crack_coefficient(cfg: &ExperimentConfig) -> Result<Coefficient> {
    let mut rng = StreamSeed::new(cfg.seed, CRACK_FAMILY_CODE, 0).level_rng(cfg.eps_level);
    cracks(
        cfg.eps_level,
        Interval::new(1.0, 2.0),
        Interval::new(4.0, 5.0),
        &default_cracks(),
        &mut rng,
    )
}

type LoadFn = fn(f64, f64) -> f64;

/// Online phase: compares the network surrogate with the reference PG-LOD.
pub fn eval_model(cfg: &ExperimentConfig, checkpoint: Option<&Path>, experiment: &Experiment) -> Result<EvalOutput> {
    cfg.validate()?;
    let checkpoint = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.model_dir().join(BEST_CHECKPOINT));
    if !checkpoint.exists() {
        return Err(Error::config(format!("checkpoint {} not found", checkpoint.display())));
    }
    cfg.write_resolved()?;
    let (net, _) = MlpParameters::load_expecting(&checkpoint, &cfg.architecture()?)?;
    let ctx = cfg.context()?;

    let mut cases: Vec<(String, String, Coefficient, LoadFn)> = Vec::new();
    let unit: LoadFn = |_, _| 1.0;
    match experiment {
        Experiment::Multiscale => {
            for i in 0..cfg.eval_samples {
                cases.push((
                    format!("multiscale_{i}"),
                    "ms".into(),
                    held_out_multiscale(cfg, i)?,
                    unit,
                ));
            }
        }
        Experiment::Smooth => cases.push((
            "smooth".into(),
            "smooth".into(),
            smooth_sine(cfg.eps_level)?,
            smooth_load,
        )),
        Experiment::Cracks => cases.push(("cracks".into(), "cracks".into(), crack_coefficient(cfg)?, cosine_load)),
        Experiment::Custom(path) => {
            let coeff = Coefficient::load(path)?;
            if coeff.level() != cfg.eps_level {
                return Err(Error::config(format!(
                    "coefficient {} is on level {}, eps_level is {}",
                    path.display(),
                    coeff.level(),
                    cfg.eps_level
                )));
            }
            cases.push(("custom".into(), "custom".into(), coeff, unit));
        }
    }

    let dir = cfg.eval_dir().join(experiment.name());
    fs::create_dir_all(&dir)?;
    let mut reports = Vec::new();
    for (name, family, coeff, f) in cases {
        let opts = EvaluateOptions {
            name: name.clone(),
            family,
            fine_reference: true,
            ..Default::default()
        };
        let report = evaluate(&ctx, &coeff, f, &net, &opts)?;
        log::info!(
            "{name}: relative L2 {:.3e}, spectral {:.3e}",
            report.relative_l2_error,
            report.spectral_difference
        );
        for cs in &report.cross_sections {
            let axis = serde_json::to_value(cs.axis)?;
            let file = format!("{name}_{}.csv", axis.as_str().unwrap_or("axis"));
            write_atomic(&dir.join(file), cs.to_csv().as_bytes())?;
        }
        reports.push(report);
    }
    let out = EvalOutput {
        experiment: experiment.name().into(),
        checkpoint,
        aggregates: aggregate_by_family(&reports),
        reports,
    };
    write_atomic(
        &dir.join("report.json"),
        (serde_json::to_string_pretty(&out)? + "\n").as_bytes(),
    )?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    /// Localization error under the load `v -> sum_i I_h v(x_i)`.
    pub decay: DecayStudy,
    /// The same study with `f = 1`.
    pub decay_unit_load: DecayStudy,
    pub convergence: ConvergenceStudy,
}

fn study_coefficient(cfg: &ExperimentConfig, kind: StudyCoefficient) -> Result<Coefficient> {
    match kind {
        StudyCoefficient::Unit => Coefficient::constant(cfg.eps_level, 1.0),
        StudyCoefficient::Smooth => smooth_sine(cfg.eps_level),
        StudyCoefficient::Ms => held_out_multiscale(cfg, 0),
    }
}

fn manufactured_load(x: f64, y: f64) -> f64 {
    2.0 * PI * PI * (PI * x).sin() * (PI * y).sin()
}

/// Localization decay and h-convergence tables.
pub fn lod_study(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    cfg.write_resolved()?;
    let st = &cfg.study;
    let coeff = study_coefficient(cfg, st.decay_coefficient)?;
    let m = crate::mesh::CartesianMesh::new(cfg.coarse_level)?.num_interior_nodes();
    let ones = vec![1.0; m];
    let decay = localization_decay_study(cfg.coarse_level, &coeff, Load::Dual(&ones), &st.decay_layers)?;
    let unit = |_: f64, _: f64| 1.0;
    let decay_unit_load = localization_decay_study(cfg.coarse_level, &coeff, Load::Function(&unit), &st.decay_layers)?;
    let conv_coeff = study_coefficient(cfg, st.convergence_coefficient)?;
    let convergence = h_convergence_study(
        &st.convergence_levels,
        &conv_coeff,
        manufactured_load,
        st.convergence_layers,
    )?;

    let dir = cfg.study_dir();
    fs::create_dir_all(&dir)?;
    let mut csv = String::from("layers,rel_l2_error,unit_load_rel_l2_error,unit_load_coarse_rel_l2_error\n");
    for (a, b) in decay.rows.iter().zip(&decay_unit_load.rows) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            a.layers, a.corrected_error, b.corrected_error, b.coarse_error
        ));
    }
    write_atomic(&dir.join("decay.csv"), csv.as_bytes())?;
    let mut csv = String::from("h,rel_l2_error\n");
    for r in &convergence.rows {
        csv.push_str(&format!("{},{}\n", r.h, r.error));
    }
    write_atomic(&dir.join("convergence.csv"), csv.as_bytes())?;
    let out = StudyOutput {
        decay,
        decay_unit_load,
        convergence,
    };
    write_atomic(
        &dir.join("study.json"),
        (serde_json::to_string_pretty(&out)? + "\n").as_bytes(),
    )?;
    Ok(out)
}
