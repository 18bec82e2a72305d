//! Phase-space states, symplectic neural operators built from shear blocks,
//! and the non-symplectic Fourier baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, NodeId, Tape, Value};
use crate::error::{Error, Result};
use crate::functional::{as_mat, GradientFunctional, KernelMode};
use crate::params::{ParamCursor, ParamRef, Parametric};
use crate::safno::record_layer;
use crate::spectral::{inner_product, Grid, GridFunction, Multiplier};
use crate::tensor::{self, Mat};

/// Point `(q, p)` of the canonical phase space.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub q: GridFunction,
    pub p: GridFunction,
}

impl PhaseState {
    pub fn new(q: GridFunction, p: GridFunction) -> Result<Self> {
        q.check_same_shape(&p, "PhaseState")?;
        Ok(Self { q, p })
    }

    pub fn zeros(grid: Grid, channels: usize) -> Self {
        Self {
            q: GridFunction::zeros(grid, channels),
            p: GridFunction::zeros(grid, channels),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.q.grid()
    }

    pub fn channels(&self) -> usize {
        self.q.channels()
    }

    pub fn is_finite(&self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }

    /// `sqrt(‖q‖² + ‖p‖²)`
    pub fn norm(&self) -> f64 {
        self.q.norm().hypot(self.p.norm())
    }

    pub fn axpy(&self, alpha: f64, other: &PhaseState) -> Result<PhaseState> {
        Ok(Self {
            q: self.q.axpy(alpha, &other.q)?,
            p: self.p.axpy(alpha, &other.p)?,
        })
    }

    pub fn scaled(&self, alpha: f64) -> PhaseState {
        Self {
            q: self.q.scaled(alpha),
            p: self.p.scaled(alpha),
        }
    }

    /// `J(q, p) = (-p, q)`
    pub fn apply_j(&self) -> PhaseState {
        Self {
            q: self.p.scaled(-1.0),
            p: self.q.clone(),
        }
    }

    /// `ω((q,p),(q',p')) = ⟨q,p'⟩ - ⟨p,q'⟩`
    pub fn omega(&self, other: &PhaseState) -> Result<f64> {
        Ok(inner_product(&self.q, &other.p)? - inner_product(&self.p, &other.q)?)
    }

    pub fn inner(&self, other: &PhaseState) -> Result<f64> {
        Ok(inner_product(&self.q, &other.q)? + inner_product(&self.p, &other.p)?)
    }

    pub fn to_mats(&self) -> (Mat, Mat) {
        (as_mat(&self.q), as_mat(&self.p))
    }

    pub fn from_mats(grid: Grid, q: Mat, p: Mat) -> Result<Self> {
        if q.shape() != p.shape() || q.cols != grid.n_points() {
            return Err(Error::shape(
                "PhaseState::from_mats",
                format!("{:?}", q.shape()),
                format!("{:?}", p.shape()),
            ));
        }
        Self::new(
            GridFunction::from_values(grid, q.rows, q.data)?,
            GridFunction::from_values(grid, p.rows, p.data)?,
        )
    }

    /// Random state with i.i.d. `U(-scale, scale)` nodal values.
    pub fn random(grid: Grid, channels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let n = grid.n_points() * channels;
        let mut draw = || {
            GridFunction::from_raw(
                grid,
                channels,
                (0..n).map(|_| rng.gen_range(-scale..scale)).collect(),
            )
        };
        let q = draw();
        let p = draw();
        Self { q, p }
    }
}

fn check_block(f: &GradientFunctional, s: &PhaseState) -> Result<()> {
    if f.channels() != s.channels() {
        return Err(Error::shape("shear block", format!("{} channels", f.channels()), s.q.shape_string()));
    }
    Ok(())
}

fn add_field(u: &GridFunction, alpha: f64, m: &Mat) -> GridFunction {
    let values = u.values().iter().zip(&m.data).map(|(a, b)| a + alpha * b).collect();
    GridFunction::from_raw(*u.grid(), u.channels(), values)
}

/// `(q, p) ↦ (q + F(p), p)`
pub fn shear_up(f: &GradientFunctional, s: &PhaseState) -> Result<PhaseState> {
    check_block(f, s)?;
    let g = f.gradient_mat(&as_mat(&s.p))?;
    Ok(PhaseState { q: add_field(&s.q, 1.0, &g), p: s.p.clone() })
}

/// `(q, p) ↦ (q, p + F(q))`
pub fn shear_low(f: &GradientFunctional, s: &PhaseState) -> Result<PhaseState> {
    check_block(f, s)?;
    let g = f.gradient_mat(&as_mat(&s.q))?;
    Ok(PhaseState { q: s.q.clone(), p: add_field(&s.p, 1.0, &g) })
}

/// `(q, p) ↦ (q - F(p), p)`
pub fn shear_up_inverse(f: &GradientFunctional, s: &PhaseState) -> Result<PhaseState> {
    check_block(f, s)?;
    let g = f.gradient_mat(&as_mat(&s.p))?;
    Ok(PhaseState { q: add_field(&s.q, -1.0, &g), p: s.p.clone() })
}

/// `(q, p) ↦ (q, p - F(q))`
pub fn shear_low_inverse(f: &GradientFunctional, s: &PhaseState) -> Result<PhaseState> {
    check_block(f, s)?;
    let g = f.gradient_mat(&as_mat(&s.q))?;
    Ok(PhaseState { q: s.q.clone(), p: add_field(&s.p, -1.0, &g) })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    /// Each stage applies the `p`-update first.
    #[default]
    LowUp,
    UpLow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnoConfig {
    /// Field channels `d` of each of `q` and `p`.
    pub channels: usize,
    pub stages: usize,
    /// Lifted width `m` of each inner operator.
    pub width: usize,
    /// Layers `L` of each inner operator.
    pub depth: usize,
    pub k_max: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub kernel: KernelMode,
    #[serde(default)]
    pub order: BlockOrder,
}

impl Default for SnoConfig {
    fn default() -> Self {
        Self {
            channels: 1,
            stages: 3,
            width: 32,
            depth: 2,
            k_max: 16,
            hidden: vec![64, 64],
            kernel: KernelMode::SelfAdjoint,
            order: BlockOrder::LowUp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shear {
    Up,
    Low,
}

/// Alternating composition of `2·stages` shear blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct SnoModel {
    pub config: Option<SnoConfig>,
    order: BlockOrder,
    pub blocks: Vec<GradientFunctional>,
}

impl SnoModel {
    /// Zero output layers make the initial model the identity map.
    pub fn init(config: &SnoConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.stages == 0 {
            return Err(Error::InvalidConfig("an SNO needs at least one stage".into()));
        }
        let blocks = (0..2 * config.stages)
            .map(|_| {
                GradientFunctional::init(
                    config.channels,
                    config.width,
                    config.depth,
                    config.k_max,
                    &config.hidden,
                    config.kernel,
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self { config: Some(config.clone()), order: config.order, blocks })
    }

    /// Blocks listed in application order.
    pub fn from_blocks(blocks: Vec<GradientFunctional>, order: BlockOrder) -> Result<Self> {
        if blocks.is_empty() || !blocks.len().is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "an SNO needs an even, nonzero number of blocks, got {}",
                blocks.len()
            )));
        }
        let d = blocks[0].channels();
        if blocks.iter().any(|b| b.channels() != d) {
            return Err(Error::InvalidConfig("all blocks must act on the same channel count".into()));
        }
        Ok(Self { config: None, order, blocks })
    }

    pub fn stages(&self) -> usize {
        self.blocks.len() / 2
    }

    pub fn channels(&self) -> usize {
        self.blocks[0].channels()
    }

    fn kind(&self, i: usize) -> Shear {
        match (self.order, i % 2) {
            (BlockOrder::LowUp, 0) | (BlockOrder::UpLow, 1) => Shear::Low,
            _ => Shear::Up,
        }
    }

    pub fn forward_mats(&self, q: &Mat, p: &Mat) -> Result<(Mat, Mat)> {
        let (mut q, mut p) = (q.clone(), p.clone());
        for (i, f) in self.blocks.iter().enumerate() {
            match self.kind(i) {
                Shear::Low => p.add_assign(&f.gradient_mat(&q)?),
                Shear::Up => q.add_assign(&f.gradient_mat(&p)?),
            }
        }
        Ok((q, p))
    }

    pub fn inverse_mats(&self, q: &Mat, p: &Mat) -> Result<(Mat, Mat)> {
        let (mut q, mut p) = (q.clone(), p.clone());
        for (i, f) in self.blocks.iter().enumerate().rev() {
            match self.kind(i) {
                Shear::Low => p.add_assign(&f.gradient_mat(&q)?.scale(-1.0)),
                Shear::Up => q.add_assign(&f.gradient_mat(&p)?.scale(-1.0)),
            }
        }
        Ok((q, p))
    }

    fn check(&self, s: &PhaseState) -> Result<()> {
        if s.channels() != self.channels() {
            return Err(Error::shape("sno", format!("{} channels", self.channels()), s.q.shape_string()));
        }
        Ok(())
    }

    pub fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        self.check(s)?;
        let (q, p) = s.to_mats();
        let (q, p) = self.forward_mats(&q, &p)?;
        PhaseState::from_mats(*s.grid(), q, p)
    }

    pub fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        self.check(s)?;
        let (q, p) = s.to_mats();
        let (q, p) = self.inverse_mats(&q, &p)?;
        PhaseState::from_mats(*s.grid(), q, p)
    }

    /// `DΦ(s) t` by chaining each block's Hessian action.
    pub fn jvp(&self, s: &PhaseState, t: &PhaseState) -> Result<PhaseState> {
        self.check(s)?;
        s.q.check_same_shape(&t.q, "sno_jvp")?;
        let (mut q, mut p) = s.to_mats();
        let (mut dq, mut dp) = t.to_mats();
        for (i, f) in self.blocks.iter().enumerate() {
            match self.kind(i) {
                Shear::Low => {
                    dp.add_assign(&f.jacobian_vector_mat(&q, &dq)?);
                    p.add_assign(&f.gradient_mat(&q)?);
                }
                Shear::Up => {
                    dq.add_assign(&f.jacobian_vector_mat(&p, &dp)?);
                    q.add_assign(&f.gradient_mat(&p)?);
                }
            }
        }
        PhaseState::from_mats(*s.grid(), dq, dp)
    }

    /// Records the forward map; consumes every block's parameter nodes.
    pub fn record(&self, tape: &mut Tape, cursor: &mut ParamCursor<'_>, q: NodeId, p: NodeId) -> Result<(NodeId, NodeId)> {
        let (mut q, mut p) = (q, p);
        for (i, f) in self.blocks.iter().enumerate() {
            match self.kind(i) {
                Shear::Low => {
                    let g = f.record_gradient(tape, cursor, q)?;
                    p = tape.add(p, g)?;
                }
                Shear::Up => {
                    let g = f.record_gradient(tape, cursor, p)?;
                    q = tape.add(q, g)?;
                }
            }
        }
        Ok((q, p))
    }

    pub fn max_multiplier_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.kernel.max_multiplier_norm()).fold(0.0, f64::max)
    }
}

impl Parametric for SnoModel {
    fn params(&self) -> Vec<ParamRef<'_>> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnoConfig {
    pub channels: usize,
    pub width: usize,
    pub depth: usize,
    pub k_max: usize,
    /// Predict `s + F(s)` instead of `F(s)`.
    #[serde(default)]
    pub residual: bool,
}

impl FnoConfig {
    pub fn param_count(&self) -> usize {
        let (d, w) = (self.channels, self.width);
        let lift = 2 * d * w + w;
        let layer = w * w + w + Multiplier::param_len(w, self.k_max);
        let proj = 2 * d * w + 2 * d;
        lift + self.depth * layer + proj
    }

    /// Width whose parameter count is closest to `target`.
    pub fn matched(channels: usize, depth: usize, k_max: usize, target: usize, residual: bool) -> Self {
        let mut best = Self { channels, width: 1, depth, k_max, residual };
        let mut best_gap = usize::MAX;
        for width in 1..=4096 {
            let cfg = Self { width, ..best.clone() };
            let count = cfg.param_count();
            let gap = count.abs_diff(target);
            if gap < best_gap {
                best_gap = gap;
                best = cfg;
            }
            if count > target {
                break;
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
struct FnoLayer {
    w: Mat,
    b: Mat,
    r: Multiplier,
}

/// Nonlinear Fourier layers `v ↦ tanh(W v + b + F⁻¹(R F v))` on lifted `(q, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineFno {
    pub config: FnoConfig,
    lift_q: Mat,
    lift_p: Mat,
    lift_b: Mat,
    layers: Vec<FnoLayer>,
    proj_q: Mat,
    proj_p: Mat,
    bias_q: Mat,
    bias_p: Mat,
}

fn uniform(rows: usize, cols: usize, s: f64, rng: &mut impl Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-s..s)).collect())
}

fn add_col(mut a: Mat, b: &Mat) -> Mat {
    let cols = a.cols;
    for r in 0..a.rows {
        a.data[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v += b.data[r]);
    }
    a
}

impl BaselineFno {
    pub fn init(config: &FnoConfig, rng: &mut impl Rng) -> Result<Self> {
        let (d, w) = (config.channels, config.width);
        if d == 0 || w == 0 {
            return Err(Error::InvalidConfig("FNO sizes must be positive".into()));
        }
        let sd = 1.0 / (2.0 * d as f64).sqrt();
        let sw = 1.0 / (w as f64).sqrt();
        let lift_q = uniform(w, d, sd, rng);
        let lift_p = uniform(w, d, sd, rng);
        let lift_b = uniform(w, 1, sd, rng);
        let layers = (0..config.depth)
            .map(|_| {
                let l = crate::safno::LinearFourierLayer::random(w, config.k_max, rng);
                FnoLayer { w: l.w, b: uniform(w, 1, sw, rng), r: l.r }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            lift_q,
            lift_p,
            lift_b,
            layers,
            proj_q: uniform(d, w, sw, rng),
            proj_p: uniform(d, w, sw, rng),
            bias_q: uniform(d, 1, sw, rng),
            bias_p: uniform(d, 1, sw, rng),
        })
    }

    pub fn zero_projection(&mut self) {
        for m in [&mut self.proj_q, &mut self.proj_p, &mut self.bias_q, &mut self.bias_p] {
            m.data.fill(0.0);
        }
    }

    pub fn zero_biases(&mut self) {
        self.lift_b.data.fill(0.0);
        self.bias_q.data.fill(0.0);
        self.bias_p.data.fill(0.0);
        for l in &mut self.layers {
            l.b.data.fill(0.0);
        }
    }

    /// Bias-free Lipschitz bound `‖Q‖ Π(‖W‖ + sup‖R‖) ‖P‖` in Frobenius norms.
    pub fn lipschitz_bound(&self) -> f64 {
        let lift = (self.lift_q.frobenius().powi(2) + self.lift_p.frobenius().powi(2)).sqrt();
        let proj = (self.proj_q.frobenius().powi(2) + self.proj_p.frobenius().powi(2)).sqrt();
        let layers: f64 = self.layers.iter().map(|l| l.w.frobenius() + l.r.sup_frobenius()).product();
        let residual = if self.config.residual { 1.0 } else { 0.0 };
        proj * layers * lift + residual
    }

    pub fn forward_mats(&self, q: &Mat, p: &Mat) -> Result<(Mat, Mat)> {
        if q.rows != self.config.channels || p.shape() != q.shape() {
            return Err(Error::shape("fno_forward", self.config.channels, q.rows));
        }
        if 2 * self.config.k_max >= q.cols {
            return Err(Error::InvalidConfig(format!(
                "k_max = {} must be below n/2 for a {}-point grid",
                self.config.k_max, q.cols
            )));
        }
        let mut v = tensor::matmul(&self.lift_q, q, false);
        v.add_assign(&tensor::matmul(&self.lift_p, p, false));
        v = add_col(v, &self.lift_b);
        for l in &self.layers {
            let mut a = add_col(tensor::matmul(&l.w, &v, false), &l.b);
            let s = tensor::dft_truncated(&v, self.config.k_max + 1);
            let s = tensor::spectral_mul(l.r.data(), &s, false);
            a.add_assign(&tensor::idft_truncated(&s, v.cols));
            a.data.iter_mut().for_each(|x| *x = x.tanh());
            v = a;
        }
        let mut oq = add_col(tensor::matmul(&self.proj_q, &v, false), &self.bias_q);
        let mut op = add_col(tensor::matmul(&self.proj_p, &v, false), &self.bias_p);
        if self.config.residual {
            oq.add_assign(q);
            op.add_assign(p);
        }
        Ok((oq, op))
    }

    pub fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        let (q, p) = s.to_mats();
        let (q, p) = self.forward_mats(&q, &p)?;
        PhaseState::from_mats(*s.grid(), q, p)
    }

    pub fn record(&self, tape: &mut Tape, cursor: &mut ParamCursor<'_>, q: NodeId, p: NodeId) -> Result<(NodeId, NodeId)> {
        let modes = self.config.k_max + 1;
        let (lq, lp, lb) = (cursor.next_id()?, cursor.next_id()?, cursor.next_id()?);
        let a = tape.matmul(lq, q, false)?;
        let b = tape.matmul(lp, p, false)?;
        let v = tape.add(a, b)?;
        let mut v = tape.add(v, lb)?;
        for _ in &self.layers {
            let (w, b, r) = (cursor.next_id()?, cursor.next_id()?, cursor.next_id()?);
            let lin = record_layer(tape, (w, r), v, false, modes)?;
            let a = tape.add(lin, b)?;
            v = tape.activation(a, Activation::Tanh)?;
        }
        let (pq, pp, bq, bp) = (cursor.next_id()?, cursor.next_id()?, cursor.next_id()?, cursor.next_id()?);
        let oq = tape.matmul(pq, v, false)?;
        let mut oq = tape.add(oq, bq)?;
        let op = tape.matmul(pp, v, false)?;
        let mut op = tape.add(op, bp)?;
        if self.config.residual {
            oq = tape.add(oq, q)?;
            op = tape.add(op, p)?;
        }
        Ok((oq, op))
    }
}

impl Parametric for BaselineFno {
    fn params(&self) -> Vec<ParamRef<'_>> {
        fn r(m: &Mat) -> ParamRef<'_> {
            ParamRef { rows: m.rows, cols: m.cols, data: &m.data }
        }
        let mut out = vec![r(&self.lift_q), r(&self.lift_p), r(&self.lift_b)];
        for l in &self.layers {
            out.push(r(&l.w));
            out.push(r(&l.b));
            out.push(ParamRef { rows: 1, cols: l.r.data().len(), data: l.r.data() });
        }
        out.extend([r(&self.proj_q), r(&self.proj_p), r(&self.bias_q), r(&self.bias_p)]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.lift_q.data, &mut self.lift_p.data, &mut self.lift_b.data];
        for l in &mut self.layers {
            out.push(&mut l.w.data);
            out.push(&mut l.b.data);
            out.push(l.r.data_mut());
        }
        out.extend([
            &mut self.proj_q.data[..],
            &mut self.proj_p.data[..],
            &mut self.bias_q.data[..],
            &mut self.bias_p.data[..],
        ]);
        out
    }
}

/// Serializable description sufficient to rebuild a model's layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Sno(SnoConfig),
    Fno(FnoConfig),
}

impl ModelSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::Sno(_) => "sno",
            ModelSpec::Fno(_) => "fno",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            ModelSpec::Sno(c) => c.channels,
            ModelSpec::Fno(c) => c.channels,
        }
    }

    pub fn k_max(&self) -> usize {
        match self {
            ModelSpec::Sno(c) => c.k_max,
            ModelSpec::Fno(c) => c.k_max,
        }
    }
}

/// Either model behind one interface.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Sno(SnoModel),
    Fno(BaselineFno),
}

impl Model {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Sno(c) => Model::Sno(SnoModel::init(c, rng)?),
            ModelSpec::Fno(c) => Model::Fno(BaselineFno::init(c, rng)?),
        })
    }

    pub fn spec(&self) -> Option<ModelSpec> {
        match self {
            Model::Sno(m) => m.config.clone().map(ModelSpec::Sno),
            Model::Fno(m) => Some(ModelSpec::Fno(m.config.clone())),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Model::Sno(_) => "sno",
            Model::Fno(_) => "fno",
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Model::Sno(m) => m.channels(),
            Model::Fno(m) => m.config.channels,
        }
    }

    pub fn forward_mats(&self, q: &Mat, p: &Mat) -> Result<(Mat, Mat)> {
        let out = match self {
            Model::Sno(m) => m.forward_mats(q, p)?,
            Model::Fno(m) => m.forward_mats(q, p)?,
        };
        if !(out.0.is_finite() && out.1.is_finite()) {
            return Err(Error::NonFinite(format!("{} prediction", self.kind_name())));
        }
        Ok(out)
    }

    pub fn forward(&self, s: &PhaseState) -> Result<PhaseState> {
        let (q, p) = s.to_mats();
        let (q, p) = self.forward_mats(&q, &p)?;
        PhaseState::from_mats(*s.grid(), q, p)
    }

    pub fn inverse(&self, s: &PhaseState) -> Result<PhaseState> {
        match self {
            Model::Sno(m) => m.inverse(s),
            Model::Fno(_) => Err(Error::Unsupported(
                "the baseline FNO has no inverse; backward rollout needs an SNO".into(),
            )),
        }
    }

    pub fn record(&self, tape: &mut Tape, params: &[NodeId], q: NodeId, p: NodeId) -> Result<(NodeId, NodeId)> {
        let mut cursor = ParamCursor::new(params);
        let out = match self {
            Model::Sno(m) => m.record(tape, &mut cursor, q, p)?,
            Model::Fno(m) => m.record(tape, &mut cursor, q, p)?,
        };
        if cursor.remaining() != 0 {
            return Err(Error::shape("model record", params.len() - cursor.remaining(), params.len()));
        }
        Ok(out)
    }

    /// `DΦ(s) t`: analytic for the SNO, forward-mode tape sweep for the FNO.
    pub fn jvp(&self, s: &PhaseState, t: &PhaseState) -> Result<PhaseState> {
        match self {
            Model::Sno(m) => m.jvp(s, t),
            Model::Fno(_) => {
                s.q.check_same_shape(&t.q, "model jvp")?;
                let (q0, p0) = s.to_mats();
                let (dq, dp) = t.to_mats();
                let mut tape = Tape::new();
                let ids = self.register_constant(&mut tape);
                let q = tape.input_real(q0);
                let p = tape.input_real(p0);
                let (oq, op) = self.record(&mut tape, &ids, q, p)?;
                let tangents = tape.jvp(&[(q, Value::Real(dq)), (p, Value::Real(dp))])?;
                let (rows, cols) = (s.channels(), s.grid().n_points());
                PhaseState::from_mats(*s.grid(), tangents.real(oq, rows, cols), tangents.real(op, rows, cols))
            }
        }
    }

    /// `max |ω(DΦv, DΦw) - ω(v, w)| / (1 + |ω(v, w)|)` over random tangent pairs.
    pub fn symplectic_defect(&self, s: &PhaseState, trials: usize, rng: &mut impl Rng) -> Result<f64> {
        if trials == 0 {
            return Err(Error::InvalidConfig("symplectic_defect needs at least one trial".into()));
        }
        let mut worst = 0.0_f64;
        for _ in 0..trials {
            let v = PhaseState::random(*s.grid(), s.channels(), 1.0, rng);
            let w = PhaseState::random(*s.grid(), s.channels(), 1.0, rng);
            let before = v.omega(&w)?;
            let after = self.jvp(s, &v)?.omega(&self.jvp(s, &w)?)?;
            worst = worst.max((after - before).abs() / (1.0 + before.abs()));
        }
        Ok(worst)
    }

    pub fn max_multiplier_norm(&self) -> f64 {
        match self {
            Model::Sno(m) => m.max_multiplier_norm(),
            Model::Fno(m) => m.layers.iter().map(|l| l.r.sup_frobenius()).fold(0.0, f64::max),
        }
    }
}

impl Parametric for Model {
    fn params(&self) -> Vec<ParamRef<'_>> {
        match self {
            Model::Sno(m) => m.params(),
            Model::Fno(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Sno(m) => m.params_mut(),
            Model::Fno(m) => m.params_mut(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{Kernel, PhiHead};
    use crate::safno::SafnoOperator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> SnoConfig {
        SnoConfig { channels: 1, stages: 2, width: 3, depth: 2, k_max: 4, hidden: vec![6], ..Default::default() }
    }

    /// Model with nonzero output layers so that the map is not the identity.
    fn random_sno(cfg: &SnoConfig, rng: &mut ChaCha8Rng) -> SnoModel {
        let mut m = SnoModel::init(cfg, rng).unwrap();
        for b in &mut m.blocks {
            if let PhiHead::Mlp(mlp) = &mut b.phi {
                mlp.weights.last_mut().unwrap().data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            }
        }
        m
    }

    fn quadratic(scale: f64, d: usize) -> GradientFunctional {
        GradientFunctional::new(
            Kernel::SelfAdjoint(SafnoOperator::identity(d, 2, 3).unwrap()),
            PhiHead::Quadratic { scale },
        )
        .unwrap()
    }

    #[test]
    fn shears_with_quadratic_heads() {
        let grid = Grid::periodic(16).unwrap();
        let sin = GridFunction::from_fn(grid, |x| (std::f64::consts::TAU * x).sin());
        let s = PhaseState::new(sin.clone(), GridFunction::zeros(grid, 1)).unwrap();
        let low = shear_low(&quadratic(1.0, 1), &s).unwrap();
        assert_eq!(low.q, sin);
        assert_eq!(low.p, sin);
        let up = shear_up(&quadratic(1.0, 1), &low).unwrap();
        assert_eq!(up.q, sin.scaled(2.0));
        assert_eq!(shear_low_inverse(&quadratic(1.0, 1), &low).unwrap(), s);
        assert_eq!(shear_up_inverse(&quadratic(1.0, 1), &up).unwrap(), low);
    }

    #[test]
    fn one_stage_block_algebra() {
        let (a, b) = (0.7, -1.3);
        let m = SnoModel::from_blocks(vec![quadratic(a, 1), quadratic(b, 1)], BlockOrder::LowUp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = PhaseState::random(Grid::periodic(16).unwrap(), 1, 1.0, &mut rng);
        let out = Model::Sno(m).forward(&s).unwrap();
        let p1 = s.p.axpy(a, &s.q).unwrap();
        let q1 = s.q.axpy(b, &p1).unwrap();
        for (x, y) in out.q.values().iter().zip(q1.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert_eq!(out.p, p1);
    }

    #[test]
    fn initial_model_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Model::Sno(SnoModel::init(&small_config(), &mut rng).unwrap());
        let s = PhaseState::random(Grid::periodic(16).unwrap(), 1, 1.0, &mut rng);
        assert_eq!(m.forward(&s).unwrap(), s);
        assert_eq!(m.inverse(&s).unwrap(), s);
        let t = PhaseState::random(*s.grid(), 1, 1.0, &mut rng);
        assert_eq!(m.jvp(&s, &t).unwrap(), t);
        assert_eq!(m.symplectic_defect(&s, 5, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_sno(&small_config(), &mut rng);
        let grid = Grid::periodic(16).unwrap();
        for _ in 0..20 {
            let s = PhaseState::random(grid, 1, 1.0, &mut rng);
            let back = m.inverse(&m.forward(&s).unwrap()).unwrap();
            assert!(back.axpy(-1.0, &s).unwrap().norm() <= 1e-12 * s.norm());
            let fwd = m.forward(&m.inverse(&s).unwrap()).unwrap();
            assert!(fwd.axpy(-1.0, &s).unwrap().norm() <= 1e-12 * s.norm());
        }
    }

    #[test]
    fn sno_is_symplectic_and_jvp_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for order in [BlockOrder::LowUp, BlockOrder::UpLow] {
            let cfg = SnoConfig { order, channels: 2, ..small_config() };
            let m = Model::Sno(random_sno(&cfg, &mut rng));
            let grid = Grid::periodic(16).unwrap();
            let s = PhaseState::random(grid, 2, 1.0, &mut rng);
            assert!(m.symplectic_defect(&s, 20, &mut rng).unwrap() <= 1e-9);
            let t = PhaseState::random(grid, 2, 1.0, &mut rng);
            let eps = 1e-5;
            let fp = m.forward(&s.axpy(eps, &t).unwrap()).unwrap();
            let fm = m.forward(&s.axpy(-eps, &t).unwrap()).unwrap();
            let fd = fp.axpy(-1.0, &fm).unwrap().scaled(0.5 / eps);
            let j = m.jvp(&s, &t).unwrap();
            assert!(fd.axpy(-1.0, &j).unwrap().norm() <= 1e-6 * j.norm());
        }
    }

    #[test]
    fn tape_forward_matches_eager() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fno = FnoConfig { channels: 1, width: 4, depth: 2, k_max: 4, residual: true };
        let models = [
            Model::Sno(random_sno(&small_config(), &mut rng)),
            Model::Fno(BaselineFno::init(&fno, &mut rng).unwrap()),
        ];
        for m in models {
            let s = PhaseState::random(Grid::periodic(16).unwrap(), 1, 1.0, &mut rng);
            let (q0, p0) = s.to_mats();
            let mut tape = Tape::new();
            let ids = m.register(&mut tape);
            let q = tape.input_real(q0.clone());
            let p = tape.input_real(p0.clone());
            let (oq, op) = m.record(&mut tape, &ids, q, p).unwrap();
            let (eq, ep) = m.forward_mats(&q0, &p0).unwrap();
            for (a, b) in tape.real(oq).data.iter().chain(&tape.real(op).data).zip(eq.data.iter().chain(&ep.data)) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fno_degenerate_cases_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cfg = FnoConfig { channels: 1, width: 5, depth: 2, k_max: 4, residual: false };
        let grid = Grid::periodic(16).unwrap();
        let s = PhaseState::random(grid, 1, 1.0, &mut rng);

        let mut zp = BaselineFno::init(&cfg, &mut rng).unwrap();
        zp.zero_projection();
        assert_eq!(zp.forward(&s).unwrap(), PhaseState::zeros(grid, 1));

        let mut zb = BaselineFno::init(&cfg, &mut rng).unwrap();
        zb.zero_biases();
        assert_eq!(zb.forward(&PhaseState::zeros(grid, 1)).unwrap(), PhaseState::zeros(grid, 1));
        let out = zb.forward(&s).unwrap();
        assert!(out.is_finite());
        assert!(out.norm() <= zb.lipschitz_bound() * s.norm());

        let m = Model::Fno(BaselineFno::init(&cfg, &mut rng).unwrap());
        let t = PhaseState::random(grid, 1, 1.0, &mut rng);
        let eps = 1e-5;
        let fd = m
            .forward(&s.axpy(eps, &t).unwrap())
            .unwrap()
            .axpy(-1.0, &m.forward(&s.axpy(-eps, &t).unwrap()).unwrap())
            .unwrap()
            .scaled(0.5 / eps);
        let j = m.jvp(&s, &t).unwrap();
        assert!(fd.axpy(-1.0, &j).unwrap().norm() <= 1e-6 * j.norm());
        assert!(m.inverse(&s).unwrap_err().is_validation());
    }

    #[test]
    fn matched_width_is_within_ten_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sno = SnoModel::init(&SnoConfig::default(), &mut rng).unwrap();
        let target = sno.param_count();
        let cfg = FnoConfig::matched(1, 4, 16, target, false);
        let fno = BaselineFno::init(&cfg, &mut rng).unwrap();
        assert_eq!(fno.param_count(), cfg.param_count());
        let ratio = fno.param_count() as f64 / target as f64;
        assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    }
}
