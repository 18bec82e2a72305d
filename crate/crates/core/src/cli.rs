//! The `sno` command line: `gen-data`, `train`, `eval` and `diagnose`.
//!
//! Every subcommand resolves its settings as flags over an optional JSON
//! config file over defaults, and writes the resolved settings next to its
//! outputs.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{generate, random_state, sample_rng, Dataset, GenConfig};
use crate::error::{Error, Result};
use crate::eval::{
    backward_rollout, reconstruction_series, rollout, structure_report, summarize, summary_csv, RolloutReport,
};
use crate::functional::KernelMode;
use crate::model::{BlockOrder, FnoConfig, Model, ModelSpec, SnoConfig};
use crate::params::Parametric;
use crate::pde::{SystemKind, SystemSpec};
use crate::rk45::reference_trajectory;
use crate::spectral::{Boundary, Grid};
use crate::train::{Checkpoint, LossKind, TrainConfig, Trainer, METRICS_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sno", version, about = "Symplectic neural operators for 1D Hamiltonian PDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset of one-step pairs.
    GenData(GenDataArgs),
    /// Train an SNO or baseline FNO on a dataset.
    Train(TrainArgs),
    /// Roll out a checkpoint against reference trajectories.
    Eval(EvalArgs),
    /// Report structure defects of a checkpoint or a fresh model.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryArg {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// wave, maxwell, schrodinger or klein-gordon.
    #[arg(long)]
    pub system: Option<String>,
    /// Wave speed.
    #[arg(long)]
    pub c: Option<f64>,
    /// Grid points.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub cheb_degree: Option<usize>,
    #[arg(long)]
    pub rk_tolerance: Option<f64>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSettings {
    pub system: String,
    pub c: f64,
    pub n: usize,
    pub dt: f64,
    pub count: usize,
    pub seed: u64,
    pub cheb_degree: usize,
    pub rk_tolerance: f64,
    pub boundary: BoundaryArg,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self {
            system: "wave".into(),
            c: 0.05,
            n: 128,
            dt: 0.1,
            count: 2000,
            seed: 0,
            cheb_degree: 12,
            rk_tolerance: 1e-8,
            boundary: BoundaryArg::Dirichlet,
        }
    }
}

impl GenSettings {
    pub fn system_spec(&self) -> Result<SystemSpec> {
        let boundary = match self.boundary {
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
            BoundaryArg::Periodic => Boundary::Periodic,
        };
        SystemSpec::new(SystemKind::parse(&self.system)?, self.c, Grid::new(self.n, 1.0, boundary)?)
    }

    pub fn gen_config(&self) -> Result<GenConfig> {
        let cfg = GenConfig {
            system: self.system_spec()?,
            dt: self.dt,
            count: self.count,
            cheb_degree: self.cheb_degree,
            seed: self.seed,
            rk_tolerance: self.rk_tolerance,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sno,
    Fno,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArg {
    SelfAdjoint,
    General,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossArg {
    L2,
    Sobolev,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// SNO stages (each one low and one up shear).
    #[arg(long)]
    pub stages: Option<usize>,
    /// Lifted width of each SNO inner operator.
    #[arg(long)]
    pub width: Option<usize>,
    /// Layers of each SNO inner operator.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Hidden widths of the SNO energy heads, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Apply the up shear first in each stage.
    #[arg(long)]
    pub up_first: bool,
    /// Fourier layers of the baseline FNO.
    #[arg(long)]
    pub fno_depth: Option<usize>,
    /// Baseline FNO predicts `s + F(s)`.
    #[arg(long)]
    pub residual: bool,
}

/// Architecture settings. The FNO width is matched to the parameter count
/// of the SNO described by the same settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub model: ModelKind,
    pub stages: usize,
    pub width: usize,
    pub depth: usize,
    pub k_max: usize,
    pub hidden: Vec<usize>,
    pub kernel: KernelArg,
    pub up_first: bool,
    pub fno_depth: usize,
    pub residual: bool,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model: ModelKind::Sno,
            stages: 2,
            width: 8,
            depth: 2,
            k_max: 12,
            hidden: vec![16],
            kernel: KernelArg::SelfAdjoint,
            up_first: false,
            fno_depth: 2,
            residual: false,
        }
    }
}

impl ModelSettings {
    fn apply(&mut self, a: &ModelArgs) {
        set(&mut self.model, a.model);
        set(&mut self.stages, a.stages);
        set(&mut self.width, a.width);
        set(&mut self.depth, a.depth);
        set(&mut self.k_max, a.k_max);
        set(&mut self.hidden, a.hidden.clone());
        set(&mut self.kernel, a.kernel);
        set(&mut self.fno_depth, a.fno_depth);
        self.up_first |= a.up_first;
        self.residual |= a.residual;
    }

    pub fn sno_config(&self) -> SnoConfig {
        SnoConfig {
            channels: 1,
            stages: self.stages,
            width: self.width,
            depth: self.depth,
            k_max: self.k_max,
            hidden: self.hidden.clone(),
            kernel: match self.kernel {
                KernelArg::SelfAdjoint => KernelMode::SelfAdjoint,
                KernelArg::General => KernelMode::General,
            },
            order: if self.up_first { BlockOrder::UpLow } else { BlockOrder::LowUp },
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let sno = self.sno_config();
        Ok(match self.model {
            ModelKind::Sno => ModelSpec::Sno(sno),
            ModelKind::Fno => {
                let reference = Model::init(&ModelSpec::Sno(sno), &mut sample_rng(0, 0))?.param_count();
                ModelSpec::Fno(FnoConfig::matched(1, self.fno_depth, self.k_max, reference, self.residual))
            }
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset file written by `gen-data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub validation_split: Option<f64>,
    /// Keep the learning rate constant.
    #[arg(long)]
    pub no_decay: bool,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    /// Sobolev exponent `s` for `--loss sobolev`.
    #[arg(long)]
    pub sobolev_s: Option<f64>,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many epochs in this invocation.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub data: Option<PathBuf>,
    pub seed: u64,
    pub model: ModelSettings,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub validation_split: f64,
    pub cosine_decay: bool,
    pub loss: LossArg,
    pub sobolev_s: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: None,
            seed: 0,
            model: ModelSettings::default(),
            epochs: t.epochs,
            batch_size: 16,
            lr: t.learning_rate,
            validation_split: t.validation_split,
            cosine_decay: true,
            loss: LossArg::L2,
            sobolev_s: 1.0,
        }
    }
}

impl TrainSettings {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            model: self.model.spec()?,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.lr,
            seed: self.seed,
            validation_split: self.validation_split,
            cosine_decay: self.cosine_decay,
            loss: match self.loss {
                LossArg::L2 => LossKind::L2,
                LossArg::Sobolev => LossKind::Sobolev { s: self.sobolev_s },
            },
            ..TrainConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Number of random initial conditions.
    #[arg(long)]
    pub n_init: Option<usize>,
    /// Also reconstruct each initial state by the inverse map (SNO only).
    #[arg(long)]
    pub backward: bool,
    #[arg(long)]
    pub rk_tolerance: Option<f64>,
    #[arg(long)]
    pub cheb_degree: Option<usize>,
    /// Random probes for the structure report.
    #[arg(long)]
    pub probes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub steps: usize,
    pub n_init: usize,
    pub backward: bool,
    pub rk_tolerance: f64,
    pub cheb_degree: usize,
    pub probes: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            checkpoint: None,
            seed: 0,
            steps: 1000,
            n_init: 10,
            backward: false,
            rk_tolerance: 1e-8,
            cheb_degree: 12,
            probes: 4,
        }
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Checkpoint to inspect; without it a freshly initialized model is used.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Grid points for a fresh model.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSettings {
    pub checkpoint: Option<PathBuf>,
    pub seed: u64,
    pub model: ModelSettings,
    pub n: usize,
    pub samples: usize,
}

impl Default for DiagnoseSettings {
    fn default() -> Self {
        Self {
            checkpoint: None,
            seed: 0,
            model: ModelSettings::default(),
            n: 128,
            samples: 10,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_settings<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))
        }
    }
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file", path.display()),
        )))
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(common: &CommonArgs) -> Result<()> {
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::InvalidConfig("--threads must be at least 1".into()));
        }
        // a second configuration in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    fs::create_dir_all(&common.out)?;
    Ok(())
}

pub fn resolve_gen(a: &GenDataArgs) -> Result<GenSettings> {
    let mut s: GenSettings = load_settings(a.common.config.as_deref())?;
    set(&mut s.system, a.system.clone());
    set(&mut s.c, a.c);
    set(&mut s.n, a.n);
    set(&mut s.dt, a.dt);
    set(&mut s.count, a.count);
    set(&mut s.seed, a.common.seed);
    set(&mut s.cheb_degree, a.cheb_degree);
    set(&mut s.rk_tolerance, a.rk_tolerance);
    set(&mut s.boundary, a.boundary);
    Ok(s)
}

pub fn resolve_train(a: &TrainArgs) -> Result<TrainSettings> {
    let mut s: TrainSettings = load_settings(a.common.config.as_deref())?;
    s.model.apply(&a.model);
    if a.data.is_some() {
        s.data = a.data.clone();
    }
    set(&mut s.seed, a.common.seed);
    set(&mut s.epochs, a.epochs);
    set(&mut s.batch_size, a.batch_size);
    set(&mut s.lr, a.lr);
    set(&mut s.validation_split, a.validation_split);
    set(&mut s.loss, a.loss);
    set(&mut s.sobolev_s, a.sobolev_s);
    if a.no_decay {
        s.cosine_decay = false;
    }
    Ok(s)
}

pub fn resolve_eval(a: &EvalArgs) -> Result<EvalSettings> {
    let mut s: EvalSettings = load_settings(a.common.config.as_deref())?;
    if a.checkpoint.is_some() {
        s.checkpoint = a.checkpoint.clone();
    }
    set(&mut s.seed, a.common.seed);
    set(&mut s.steps, a.steps);
    set(&mut s.n_init, a.n_init);
    set(&mut s.rk_tolerance, a.rk_tolerance);
    set(&mut s.cheb_degree, a.cheb_degree);
    set(&mut s.probes, a.probes);
    s.backward |= a.backward;
    Ok(s)
}

pub fn resolve_diagnose(a: &DiagnoseArgs) -> Result<DiagnoseSettings> {
    let mut s: DiagnoseSettings = load_settings(a.common.config.as_deref())?;
    s.model.apply(&a.model);
    if a.checkpoint.is_some() {
        s.checkpoint = a.checkpoint.clone();
    }
    set(&mut s.seed, a.common.seed);
    set(&mut s.n, a.n);
    set(&mut s.samples, a.samples);
    Ok(s)
}

pub const DATASET_FILE: &str = "dataset.bin";

fn cmd_gen_data(a: &GenDataArgs) -> Result<()> {
    let s = resolve_gen(a)?;
    let cfg = s.gen_config()?;
    prepare(&a.common)?;
    write_json(&a.common.out.join("gen_data_config.json"), &s)?;
    let ds = generate(&cfg)?;
    ds.save(a.common.out.join(DATASET_FILE))?;
    write_json(&a.common.out.join("manifest.json"), &ds.manifest)?;
    eprintln!(
        "wrote {} pairs of {} on {} points to {}",
        ds.len(),
        cfg.system.kind.name(),
        cfg.system.grid.n_points(),
        a.common.out.join(DATASET_FILE).display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let s = resolve_train(a)?;
    let cfg = s.train_config()?;
    let data_path = s
        .data
        .clone()
        .ok_or_else(|| Error::InvalidConfig("train needs --data PATH".into()))?;
    prepare(&a.common)?;
    let out = &a.common.out;
    write_json(&out.join("train_config.json"), &s)?;
    let data = Dataset::load(existing(&data_path)?)?;
    let last_path = out.join("last.ckpt");
    let best_path = out.join("best.ckpt");
    let metrics_path = out.join("metrics.csv");
    let mut trainer = if a.resume {
        let last = Checkpoint::load(existing(&last_path)?)?;
        if last.manifest.train != cfg {
            return Err(Error::InvalidConfig(
                "resumed settings differ from the checkpoint's training configuration".into(),
            ));
        }
        let best = if best_path.exists() { Some(Checkpoint::load(&best_path)?) } else { None };
        let t = Trainer::resume(cfg, &data, &last, best)?;
        let kept: Vec<String> = fs::read_to_string(&metrics_path)
            .unwrap_or_default()
            .lines()
            .take(t.epochs_completed() + 1)
            .map(str::to_string)
            .collect();
        let mut text = if kept.is_empty() { METRICS_HEADER.to_string() } else { kept.join("\n") };
        text.push('\n');
        fs::write(&metrics_path, text)?;
        t
    } else {
        fs::write(&metrics_path, format!("{METRICS_HEADER}\n"))?;
        Trainer::new(cfg, &data)?
    };
    let stop_at = a.stop_after.map(|k| trainer.epochs_completed() + k);
    let mut best_epoch = trainer.best().map(|b| b.manifest.best_epoch);
    let model_kind = trainer.model().kind_name();
    eprintln!("training {model_kind} with {} parameters", trainer.model().param_count());
    while !trainer.is_finished() && stop_at.is_none_or(|k| trainer.epochs_completed() < k) {
        let m = trainer.run_epoch()?;
        eprintln!("epoch {:>4}  train {:.4e}  val {:.4e}  defect {:.2e}", m.epoch, m.train_loss, m.val_loss, m.symplectic_defect);
        let mut f = fs::OpenOptions::new().append(true).open(&metrics_path)?;
        writeln!(f, "{}", m.csv_row())?;
        trainer.checkpoint().save(&last_path)?;
        let now_best = trainer.best().map(|b| b.manifest.best_epoch);
        if now_best != best_epoch {
            if let Some(b) = trainer.best() {
                b.save(&best_path)?;
            }
            best_epoch = now_best;
        }
    }
    trainer.checkpoint().save(&last_path)?;
    if trainer.is_finished() {
        let rows: Vec<f64> = fs::read_to_string(&metrics_path)?
            .lines()
            .skip(1)
            .filter_map(|l| l.split(',').nth(1)?.parse().ok())
            .collect();
        let mut ema: Option<f64> = None;
        let mut rising = Vec::new();
        for (i, &l) in rows.iter().enumerate() {
            let next = ema.map_or(l, |e| 0.5 * e + 0.5 * l);
            if ema.is_some_and(|e| next > e) {
                rising.push(i + 1);
            }
            ema = Some(next);
        }
        if !rising.is_empty() {
            fs::write(
                out.join("warnings.txt"),
                format!("training-loss moving average increased at epochs {rising:?}\n"),
            )?;
        }
        if let Some(b) = trainer.best() {
            eprintln!(
                "done: best validation loss {:.4e} at epoch {}, {} skipped steps",
                b.manifest.best_val_loss,
                b.manifest.best_epoch,
                trainer.skipped_steps()
            );
        }
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let s = resolve_eval(a)?;
    let path = s
        .checkpoint
        .clone()
        .ok_or_else(|| Error::InvalidConfig("eval needs --checkpoint PATH".into()))?;
    if s.n_init == 0 {
        return Err(Error::InvalidConfig("--n-init must be at least 1".into()));
    }
    prepare(&a.common)?;
    let out = &a.common.out;
    let ckpt = Checkpoint::load(existing(&path)?)?;
    let model = ckpt.model()?;
    if s.backward && matches!(model, Model::Fno(_)) {
        return Err(Error::Unsupported(
            "--backward needs an exactly invertible model; the baseline FNO has no inverse".into(),
        ));
    }
    write_json(&out.join("eval_config.json"), &s)?;
    let sys = ckpt.manifest.system.clone();
    let dt = ckpt.manifest.dt;
    let results = (0..s.n_init)
        .into_par_iter()
        .map(|i| {
            let u0 = random_state(&mut sample_rng(s.seed, i), sys.grid, s.cheb_degree);
            let truth = reference_trajectory(&sys, &u0, dt, s.rk_tolerance, s.steps)?;
            let pred = rollout(&model, &u0, s.steps);
            let report = RolloutReport::compare(&sys, &pred, &truth)?;
            let back = if s.backward {
                let b = backward_rollout(&model, pred.last(), pred.states.len() - 1)?;
                Some(reconstruction_series(&pred, &b)?)
            } else {
                None
            };
            Ok((report, back))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::with_capacity(results.len());
    for (i, (report, back)) in results.into_iter().enumerate() {
        fs::write(out.join(format!("rollout_{i:03}.csv")), report.to_csv())?;
        if let Some((k, why)) = &report.failure {
            eprintln!("initial condition {i}: rollout stopped at step {k}: {why}");
        }
        if let Some(series) = back {
            let mut text = String::from("steps_back,rel_residual\n");
            for (k, r) in series.iter().enumerate() {
                text.push_str(&format!("{k},{r:e}\n"));
            }
            fs::write(out.join(format!("backward_{i:03}.csv")), text)?;
        }
        reports.push(report);
    }
    let rows = summarize(&reports, s.steps);
    fs::write(out.join("summary.csv"), summary_csv(&rows))?;
    let report = structure_report(&model, sys.grid, s.probes.max(1), &mut sample_rng(s.seed, usize::MAX))?;
    write_json(&out.join("structure.json"), &report)?;
    if let Some(r) = rows.last() {
        eprintln!(
            "step {}: relative L2 {:.4e} ± {:.2e}, relative energy {:.4e} ± {:.2e}",
            r.step, r.rel_l2_mean, r.rel_l2_std, r.rel_energy_mean, r.rel_energy_std
        );
    }
    Ok(())
}

fn cmd_diagnose(a: &DiagnoseArgs) -> Result<()> {
    let s = resolve_diagnose(a)?;
    prepare(&a.common)?;
    let (model, grid) = match &s.checkpoint {
        Some(p) => {
            let c = Checkpoint::load(existing(p)?)?;
            (c.model()?, c.manifest.grid)
        }
        None => (
            Model::init(&s.model.spec()?, &mut sample_rng(s.seed, 0))?,
            Grid::dirichlet(s.n)?,
        ),
    };
    if 2 * model_k_max(&model) >= grid.n_points() {
        return Err(Error::InvalidConfig(format!(
            "k_max {} needs more than {} grid points",
            model_k_max(&model),
            2 * model_k_max(&model)
        )));
    }
    write_json(&a.common.out.join("diagnose_config.json"), &s)?;
    let report = structure_report(&model, grid, s.samples.max(1), &mut sample_rng(s.seed, 1))?;
    write_json(&a.common.out.join("structure.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn model_k_max(model: &Model) -> usize {
    model.spec().map_or(0, |s| s.k_max())
}

/// Exit code for an error: 1 for I/O and file problems, 2 for domain
/// validation, 3 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else if e.is_validation() || matches!(e, Error::ShapeMismatch { .. }) {
        EXIT_VALIDATION
    } else if let Error::Sample { source, .. } = e {
        exit_code(source)
    } else {
        EXIT_IO
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

/// Parses `args` and runs the subcommand, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_IO } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("sno").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_config_over_defaults() {
        let dir = std::env::temp_dir().join(format!("sno-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("gen.json");
        fs::write(&cfg, r#"{"n": 64, "dt": 0.05, "count": 3}"#).unwrap();
        let cli = parse(&["gen-data", "--config", cfg.to_str().unwrap(), "--count", "5"]);
        let Command::GenData(a) = &cli.command else { panic!() };
        let s = resolve_gen(a).unwrap();
        assert_eq!((s.n, s.dt, s.count, s.c), (64, 0.05, 5, 0.05));
        fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
        assert!(resolve_gen(a).unwrap_err().is_validation());
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["sno", "train", "--learning-speed", "3"]).is_err());
        assert_eq!(run(["sno", "gen-data", "--frobnicate"]), EXIT_IO);
    }

    #[test]
    fn fno_settings_match_sno_capacity() {
        let mut s = ModelSettings { model: ModelKind::Fno, ..Default::default() };
        let ModelSpec::Fno(f) = s.spec().unwrap() else { panic!() };
        s.model = ModelKind::Sno;
        let sno = Model::init(&s.spec().unwrap(), &mut sample_rng(0, 0)).unwrap().param_count();
        let gap = f.param_count().abs_diff(sno) as f64 / sno as f64;
        assert!(gap <= 0.1, "{} vs {sno}", f.param_count());
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(exit_code(&Error::Cfl { ratio: 2.0, limit: 1.0 }), EXIT_VALIDATION);
        assert_eq!(exit_code(&Error::Diverged { epoch: 1, val_loss: 1e7 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Format("x".into())), EXIT_IO);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(exit_code(&Error::Io(io)), EXIT_IO);
    }
}
