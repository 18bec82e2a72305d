//! Mini-batch Adam on one-step pairs, with checkpoints and per-epoch metrics.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{sample_rng, Dataset};
use crate::error::{Error, Result};
use crate::model::{Model, ModelSpec, PhaseState, SnoConfig};
use crate::params::Parametric;
use crate::pde::SystemSpec;
use crate::spectral::{inner_product, Grid, Multiplier};
use crate::tensor::Mat;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SNOCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Largest symplectic defect tolerated in an SNO between epochs.
pub const SYMPLECTIC_TOLERANCE: f64 = 1e-9;

const INIT_STREAM: usize = 0;
const SPLIT_STREAM: usize = 1;
const PROBE_STREAM: usize = 2;
const EPOCH_STREAM_BASE: usize = 1 << 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// `‖Δq‖² + ‖Δp‖²`
    #[default]
    L2,
    /// Residual weighted by `(1 + ξ²)^s` in frequency before squaring.
    Sobolev { s: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub validation_split: f64,
    pub cosine_decay: bool,
    pub loss: LossKind,
    /// Largest admissible `sup_ξ ‖R(ξ)‖_F` over all Fourier layers.
    pub multiplier_bound: f64,
    /// Validation inputs probed for the symplectic defect each epoch.
    pub structure_probes: usize,
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Sno(SnoConfig::default()),
            batch_size: 32,
            epochs: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_split: 0.1,
            cosine_decay: true,
            loss: LossKind::L2,
            multiplier_bound: 1e4,
            structure_probes: 2,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return bad(format!("validation_split must lie in (0, 1), got {}", self.validation_split));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("Adam betas must lie in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if let LossKind::Sobolev { s } = self.loss {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("Sobolev exponent must be non-negative, got {s}"));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First and second moments plus the count of applied steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One bias-corrected Adam update. Returns `false`, leaving everything
/// untouched, when the gradient is not finite.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<bool> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape("adam_step", params.len(), grads.len()));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Ok(false);
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(true)
}

/// `½(1 + cos(π·step/total))·lr`.
pub fn cosine_lr(lr: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return lr;
    }
    let frac = step.min(total) as f64 / total as f64;
    0.5 * lr * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// `⟨Δq, Δq⟩ + ⟨Δp, Δp⟩`.
pub fn pair_loss(pred: &PhaseState, target: &PhaseState) -> Result<f64> {
    let d = pred.axpy(-1.0, target)?;
    Ok(inner_product(&d.q, &d.q)? + inner_product(&d.p, &d.p)?)
}

/// Mean squared phase-space norm of the prediction residual over a batch.
pub fn loss(model: &Model, batch: &[(PhaseState, PhaseState)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("loss of an empty batch".into()));
    }
    let terms = batch
        .par_iter()
        .map(|(u, v)| pair_loss(&model.forward(u)?, v))
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / batch.len() as f64)
}

/// Diagonal `(1 + ξ²)^(s/2)` over the modes kept by a Sobolev loss.
fn sobolev_weights(channels: usize, n: usize, s: f64) -> Result<Multiplier> {
    let k_max = n / 2 - 1;
    Multiplier::from_fn(channels, k_max, |xi| {
        let w = (1.0 + (xi * xi) as f64).powf(0.5 * s);
        let mut m = vec![Complex64::new(0.0, 0.0); channels * channels];
        for c in 0..channels {
            m[c * channels + c] = Complex64::new(w, 0.0);
        }
        m
    })
}

/// Loss of one pair and its gradient in parameter order.
pub fn pair_loss_gradient(
    model: &Model,
    input: &PhaseState,
    target: &PhaseState,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    let grid = *input.grid();
    let (n, d) = (grid.n_points(), input.channels());
    let weights = match kind {
        LossKind::L2 => None,
        LossKind::Sobolev { s } => Some(sobolev_weights(d, n, s)?),
    };
    let mut tape = Tape::new();
    let ids = model.register(&mut tape);
    let (q0, p0) = input.to_mats();
    let (tq, tp) = target.to_mats();
    let q = tape.input_real(q0);
    let p = tape.input_real(p0);
    let (oq, op) = model.record(&mut tape, &ids, q, p)?;
    let w = weights.map(|w| tape.input_real(Mat::from_vec(1, w.data().len(), w.data().to_vec())));
    let mut total = None;
    for (out, t) in [(oq, tq), (op, tp)] {
        let t = tape.input_real(t);
        let neg = tape.scale(t, -1.0)?;
        let mut r = tape.add(out, neg)?;
        if let Some(w) = w {
            let modes = n / 2;
            let f = tape.dft(r, modes)?;
            let f = tape.spectral_multiply(w, f, false)?;
            r = tape.idft(f, n)?;
        }
        let sq = tape.mul(r, r)?;
        let term = tape.quadrature_sum(sq, grid.dx())?;
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let total = total.unwrap();
    let value = tape.scalar(total);
    let grads = tape.backward(total)?.flatten();
    Ok((value, grads))
}

/// Mean loss and gradient over `indices`, summed in index order.
pub fn batch_loss_gradient(model: &Model, data: &Dataset, indices: &[usize], kind: LossKind) -> Result<(f64, Vec<f64>)> {
    if indices.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let parts = indices
        .par_iter()
        .map(|&i| {
            let (u, v) = data.pair(i);
            pair_loss_gradient(model, &u, &v, kind)
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = 1.0 / indices.len() as f64;
    let mut grad = vec![0.0; model.param_count()];
    let mut value = 0.0;
    for (l, g) in &parts {
        value += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((value * scale, grad))
}

/// Mean `‖Δq‖² + ‖Δp‖²` over `indices`.
pub fn dataset_loss(model: &Model, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidConfig("empty index set".into()));
    }
    let terms = indices
        .par_iter()
        .map(|&i| {
            let (u, v) = data.pair(i);
            pair_loss(&model.forward(&u)?, &v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / indices.len() as f64)
}

/// Mean one-step `‖Φ(u) − v‖ / ‖v‖` over `indices`.
pub fn one_step_relative_error(model: &Model, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::InvalidConfig("empty index set".into()));
    }
    let terms = indices
        .par_iter()
        .map(|&i| {
            let (u, v) = data.pair(i);
            let err = model.forward(&u)?.axpy(-1.0, &v)?.norm();
            let norm = v.norm();
            Ok(if norm == 0.0 { err } else { err / norm })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / indices.len() as f64)
}

/// Seeded split of `0..n` into training and validation indices.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 pairs to split, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut sample_rng(seed, SPLIT_STREAM));
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

/// Model initialized from the training seed.
pub fn init_model(cfg: &TrainConfig) -> Result<Model> {
    Model::init(&cfg.model, &mut sample_rng(cfg.seed, INIT_STREAM))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub grad_norm: f64,
    pub symplectic_defect: f64,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,val_loss,grad_norm,symplectic_defect,wall_seconds";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:.3}",
            self.epoch, self.train_loss, self.val_loss, self.grad_norm, self.symplectic_defect, self.wall_seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub model: ModelSpec,
    pub param_shapes: Vec<(usize, usize)>,
    pub system: SystemSpec,
    pub grid: Grid,
    pub dt: f64,
    pub train: TrainConfig,
    pub epochs_completed: usize,
    pub adam_t: u64,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub skipped_steps: usize,
}

/// Model parameters with the optimizer state needed to resume.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub params: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

fn write_block(w: &mut impl Write, values: &[f64]) -> Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| truncated(e, what))?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(e: std::io::Error, what: &str) -> Error {
    match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated checkpoint while reading {what}")),
        _ => Error::Io(e),
    }
}

fn read_block(r: &mut impl Read, what: &str) -> Result<Vec<f64>> {
    let len = read_u64(r, what)? as usize;
    let mut bytes = vec![0u8; len.checked_mul(8).ok_or_else(|| Error::Format(format!("{what} length overflows")))?];
    r.read_exact(&mut bytes).map_err(|e| truncated(e, what))?;
    Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
}

impl Checkpoint {
    /// Rebuilds the model described by the manifest.
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::init(&self.manifest.model, &mut sample_rng(0, INIT_STREAM))?;
        if model.param_shapes() != self.manifest.param_shapes {
            return Err(Error::Format("checkpoint parameter layout does not match its model".into()));
        }
        model.load_flat(&self.params)?;
        Ok(model)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(manifest.len() as u64).to_le_bytes())?;
        w.write_all(&manifest)?;
        write_block(w, &self.params)?;
        write_block(w, &self.adam_m)?;
        write_block(w, &self.adam_v)?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| truncated(e, "magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let len = read_u64(r, "manifest length")? as usize;
        let mut manifest = vec![0u8; len];
        r.read_exact(&mut manifest).map_err(|e| truncated(e, "manifest"))?;
        let manifest: CheckpointManifest = serde_json::from_slice(&manifest)?;
        if manifest.format_version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {}", manifest.format_version)));
        }
        let params = read_block(r, "parameters")?;
        let adam_m = read_block(r, "first moments")?;
        let adam_v = read_block(r, "second moments")?;
        let expected: usize = manifest.param_shapes.iter().map(|(a, b)| a * b).sum();
        if params.len() != expected || adam_m.len() != expected || adam_v.len() != expected {
            return Err(Error::Format(format!(
                "checkpoint declares {expected} parameters but stores {}/{}/{}",
                params.len(),
                adam_m.len(),
                adam_v.len()
            )));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint payload".into()));
        }
        Ok(Self { manifest, params, adam_m, adam_v })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

/// Epoch-level training state over a borrowed dataset.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    data: &'a Dataset,
    model: Model,
    adam: AdamState,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    epochs_completed: usize,
    skipped_steps: usize,
    best: Option<Checkpoint>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, data: &'a Dataset) -> Result<Self> {
        let model = init_model(&cfg)?;
        Self::with_model(cfg, data, model)
    }

    /// Starts from the given parameters with fresh optimizer state.
    pub fn with_model(cfg: TrainConfig, data: &'a Dataset, model: Model) -> Result<Self> {
        cfg.validate()?;
        if model.spec().as_ref() != Some(&cfg.model) {
            return Err(Error::InvalidConfig("model does not match the configured architecture".into()));
        }
        let n = data.grid().n_points();
        if model.channels() != 1 || 2 * cfg.model.k_max() >= n {
            return Err(Error::shape(
                "train",
                format!("{} channel(s), k_max {}", cfg.model.channels(), cfg.model.k_max()),
                format!("1 channel on {n} points"),
            ));
        }
        let (train_idx, val_idx) = split_indices(data.len(), cfg.validation_split, cfg.seed)?;
        let adam = AdamState::new(model.param_count());
        Ok(Self {
            cfg,
            data,
            model,
            adam,
            train_idx,
            val_idx,
            epochs_completed: 0,
            skipped_steps: 0,
            best: None,
        })
    }

    /// Continues from `last`, keeping `best` as the best-so-far snapshot.
    pub fn resume(cfg: TrainConfig, data: &'a Dataset, last: &Checkpoint, best: Option<Checkpoint>) -> Result<Self> {
        if last.manifest.model != cfg.model {
            return Err(Error::InvalidConfig("checkpoint model differs from the configured model".into()));
        }
        if last.manifest.grid != data.grid() {
            return Err(Error::InvalidConfig("checkpoint grid differs from the dataset grid".into()));
        }
        let mut t = Self::with_model(cfg, data, last.model()?)?;
        t.adam = AdamState {
            t: last.manifest.adam_t,
            m: last.adam_m.clone(),
            v: last.adam_v.clone(),
        };
        t.epochs_completed = last.manifest.epochs_completed;
        t.skipped_steps = last.manifest.skipped_steps;
        t.best = best;
        Ok(t)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn skipped_steps(&self) -> usize {
        self.skipped_steps
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn validation_indices(&self) -> &[usize] {
        &self.val_idx
    }

    pub fn best(&self) -> Option<&Checkpoint> {
        self.best.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_completed >= self.cfg.epochs
    }

    pub fn validation_loss(&self) -> Result<f64> {
        dataset_loss(&self.model, self.data, &self.val_idx)
    }

    fn batches_per_epoch(&self) -> usize {
        self.train_idx.len().div_ceil(self.cfg.batch_size)
    }

    fn structure_defect(&self) -> Result<f64> {
        let mut rng = sample_rng(self.cfg.seed, PROBE_STREAM);
        let mut worst = 0.0_f64;
        for &i in self.val_idx.iter().take(self.cfg.structure_probes) {
            worst = worst.max(self.model.symplectic_defect(&self.data.input(i), 2, &mut rng)?);
        }
        Ok(worst)
    }

    /// Runs one epoch and returns its metrics row.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        let start = Instant::now();
        let epoch = self.epochs_completed;
        let mut order = self.train_idx.clone();
        order.shuffle(&mut sample_rng(self.cfg.seed, EPOCH_STREAM_BASE + epoch));
        let per_epoch = self.batches_per_epoch();
        let total_steps = per_epoch * self.cfg.epochs;
        let adam = self.cfg.adam();
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut grad_norm_sum = 0.0;
        let mut applied_steps = 0usize;
        for (b, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let (value, grads) = batch_loss_gradient(&self.model, self.data, batch, self.cfg.loss)?;
            let lr = if self.cfg.cosine_decay {
                cosine_lr(self.cfg.learning_rate, epoch * per_epoch + b, total_steps)
            } else {
                self.cfg.learning_rate
            };
            let mut params = self.model.to_store().values;
            let applied = value.is_finite() && adam_step(&mut params, &grads, &mut self.adam, lr, &adam)?;
            if !applied {
                self.skipped_steps += 1;
                continue;
            }
            self.model.load_flat(&params)?;
            let bound = self.model.max_multiplier_norm();
            if bound > self.cfg.multiplier_bound {
                return Err(Error::MultiplierBound { value: bound, bound: self.cfg.multiplier_bound });
            }
            loss_sum += value * batch.len() as f64;
            loss_count += batch.len();
            grad_norm_sum += grads.iter().map(|g| g * g).sum::<f64>().sqrt();
            applied_steps += 1;
        }
        let val_loss = self.validation_loss().unwrap_or(f64::NAN);
        self.epochs_completed += 1;
        if val_loss.is_nan() || val_loss > self.cfg.divergence_threshold {
            return Err(Error::Diverged { epoch: self.epochs_completed, val_loss });
        }
        let defect = self.structure_defect()?;
        if matches!(self.model, Model::Sno(_)) && defect > SYMPLECTIC_TOLERANCE {
            return Err(Error::StructureViolation {
                epoch: self.epochs_completed,
                defect,
                tolerance: SYMPLECTIC_TOLERANCE,
            });
        }
        let improved = self.best.as_ref().is_none_or(|b| val_loss < b.manifest.best_val_loss);
        let metrics = EpochMetrics {
            epoch: self.epochs_completed,
            train_loss: if loss_count > 0 { loss_sum / loss_count as f64 } else { f64::NAN },
            val_loss,
            grad_norm: grad_norm_sum / applied_steps.max(1) as f64,
            symplectic_defect: defect,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if improved {
            self.best = Some(self.checkpoint_with_best(val_loss, self.epochs_completed));
        }
        Ok(metrics)
    }

    fn checkpoint_with_best(&self, best_val_loss: f64, best_epoch: usize) -> Checkpoint {
        Checkpoint {
            manifest: CheckpointManifest {
                format_version: CHECKPOINT_VERSION,
                model: self.cfg.model.clone(),
                param_shapes: self.model.param_shapes(),
                system: self.data.system().clone(),
                grid: self.data.grid(),
                dt: self.data.manifest.dt,
                train: self.cfg.clone(),
                epochs_completed: self.epochs_completed,
                adam_t: self.adam.t,
                best_val_loss,
                best_epoch,
                skipped_steps: self.skipped_steps,
            },
            params: self.model.to_store().values,
            adam_m: self.adam.m.clone(),
            adam_v: self.adam.v.clone(),
        }
    }

    /// Current state, resumable with [`Trainer::resume`].
    pub fn checkpoint(&self) -> Checkpoint {
        let (val, epoch) = self
            .best
            .as_ref()
            .map_or((f64::MAX, 0), |b| (b.manifest.best_val_loss, b.manifest.best_epoch));
        self.checkpoint_with_best(val, epoch)
    }
}

/// Result of a complete training run.
pub struct TrainOutcome {
    pub model: Model,
    pub last: Checkpoint,
    pub best: Checkpoint,
    pub metrics: Vec<EpochMetrics>,
    pub initial_val_loss: f64,
    pub skipped_steps: usize,
}

impl TrainOutcome {
    /// Whether the exponential moving average (weight 0.5) of the training
    /// loss never increases.
    pub fn ema_non_increasing(&self) -> bool {
        let mut ema: Option<f64> = None;
        for m in &self.metrics {
            let next = ema.map_or(m.train_loss, |e| 0.5 * e + 0.5 * m.train_loss);
            if ema.is_some_and(|e| next > e) {
                return false;
            }
            ema = Some(next);
        }
        true
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for m in &self.metrics {
            out.push_str(&m.csv_row());
            out.push('\n');
        }
        out
    }
}

/// Trains for `cfg.epochs` epochs from the seeded initialization.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone(), data)?;
    run_to_end(&mut trainer, |_, _| Ok(()))
}

/// Drives `trainer` to its final epoch, calling `on_epoch` after each one.
pub fn run_to_end(
    trainer: &mut Trainer<'_>,
    mut on_epoch: impl FnMut(&EpochMetrics, &Trainer<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    let initial_val_loss = trainer.validation_loss()?;
    let mut metrics = Vec::new();
    while !trainer.is_finished() {
        let m = trainer.run_epoch()?;
        on_epoch(&m, trainer)?;
        metrics.push(m);
    }
    let last = trainer.checkpoint();
    let best = trainer.best().cloned().unwrap_or_else(|| last.clone());
    Ok(TrainOutcome {
        model: trainer.model().clone(),
        last,
        best,
        metrics,
        initial_val_loss,
        skipped_steps: trainer.skipped_steps(),
    })
}
