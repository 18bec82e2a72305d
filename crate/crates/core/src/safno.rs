//! Linear Fourier operators `T v = W v + F⁻¹(R · F v)` and their self-adjoint
//! composition `G = P* T_{L-1} ⋯ T_0 P`.

use rand::Rng;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::params::{ParamCursor, ParamRef, Parametric};
use crate::spectral::{GridFunction, Multiplier};
use crate::tensor::{self, Mat};

/// One linear Fourier layer acting on `m` channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFourierLayer {
    pub w: Mat,
    pub r: Multiplier,
}

impl LinearFourierLayer {
    pub fn new(w: Mat, r: Multiplier) -> Result<Self> {
        if w.rows != w.cols || w.rows != r.channels() {
            return Err(Error::shape(
                "LinearFourierLayer",
                format!("{}x{} W", w.rows, w.cols),
                format!("{} multiplier channels", r.channels()),
            ));
        }
        Ok(Self { w, r })
    }

    pub fn zeros(channels: usize, k_max: usize) -> Self {
        Self {
            w: Mat::zeros(channels, channels),
            r: Multiplier::zeros(channels, k_max),
        }
    }

    pub fn identity(channels: usize, k_max: usize) -> Self {
        Self {
            w: Mat::identity(channels),
            r: Multiplier::zeros(channels, k_max),
        }
    }

    /// `W ~ U(±1/√m)`, `R(ξ)` entries `U(±s_ξ)` with `s_ξ = (1/√m)/(1+ξ)`.
    pub fn random(channels: usize, k_max: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / (channels as f64).sqrt();
        let w = Mat::from_vec(
            channels,
            channels,
            (0..channels * channels)
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
        );
        let mut r = Multiplier::zeros(channels, k_max);
        let m2 = channels * channels;
        for xi in 0..=k_max {
            let s = scale / (1.0 + xi as f64);
            let re = Multiplier::re_offset(channels, xi);
            for v in &mut r.data_mut()[re..re + m2] {
                *v = rng.gen_range(-s..s);
            }
            if xi > 0 {
                let im = Multiplier::im_offset(channels, xi);
                for v in &mut r.data_mut()[im..im + m2] {
                    *v = rng.gen_range(-s..s);
                }
            }
        }
        Self { w, r }
    }

    pub fn channels(&self) -> usize {
        self.w.rows
    }

    pub fn k_max(&self) -> usize {
        self.r.k_max()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            w: self.w.transpose(),
            r: self.r.adjoint(),
        }
    }

    /// `(T + T*)/2`
    pub fn symmetrized(&self) -> Self {
        let wt = self.w.transpose();
        let w = Mat::from_vec(
            self.w.rows,
            self.w.cols,
            self.w.data.iter().zip(&wt.data).map(|(a, b)| 0.5 * (a + b)).collect(),
        );
        let ra = self.r.adjoint();
        let data = self
            .r
            .data()
            .iter()
            .zip(ra.data())
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        Self {
            w,
            r: Multiplier::from_data(self.channels(), self.k_max(), data)
                .expect("same layout"),
        }
    }

    /// Upper bound on the operator norm: `‖W‖_F + sup_ξ ‖R(ξ)‖_F`.
    pub fn norm_bound(&self) -> f64 {
        self.w.frobenius() + self.r.sup_frobenius()
    }

    /// `T v` (or `T* v`) on a `channels × n` array.
    pub fn apply_mat(&self, v: &Mat, adjoint: bool) -> Mat {
        let mut out = tensor::matmul(&self.w, v, adjoint);
        let s = tensor::dft_truncated(v, self.k_max() + 1);
        let s = tensor::spectral_mul(self.r.data(), &s, adjoint);
        out.add_assign(&tensor::idft_truncated(&s, v.cols));
        out
    }

    fn params_into<'a>(&'a self, out: &mut Vec<ParamRef<'a>>) {
        out.push(ParamRef { rows: self.w.rows, cols: self.w.cols, data: &self.w.data });
        out.push(ParamRef { rows: 1, cols: self.r.data().len(), data: self.r.data() });
    }

    fn params_mut_into<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(&mut self.w.data);
        out.push(self.r.data_mut());
    }
}

/// Records `T v` (or `T* v`) given the layer's parameter nodes.
pub fn record_layer(
    tape: &mut Tape,
    (w, r): (NodeId, NodeId),
    v: NodeId,
    adjoint: bool,
    modes: usize,
) -> Result<NodeId> {
    let n = tape.value(v).shape().1;
    let lin = tape.matmul(w, v, adjoint)?;
    let s = tape.dft(v, modes)?;
    let s = tape.spectral_multiply(r, s, adjoint)?;
    let spec = tape.idft(s, n)?;
    tape.add(lin, spec)
}

fn check_modes(k_max: usize, n: usize) -> Result<()> {
    if 2 * k_max >= n {
        return Err(Error::InvalidConfig(format!(
            "k_max = {k_max} must be below n/2 for a {n}-point grid"
        )));
    }
    Ok(())
}

fn to_mat(u: &GridFunction, channels: usize, context: &'static str) -> Result<Mat> {
    if u.channels() != channels {
        return Err(Error::shape(
            context,
            format!("{channels} channels"),
            u.shape_string(),
        ));
    }
    Ok(Mat::from_vec(u.channels(), u.n_points(), u.values().to_vec()))
}

fn from_mat(template: &GridFunction, m: Mat) -> GridFunction {
    GridFunction::from_raw(*template.grid(), m.rows, m.data)
}

/// General linear Fourier operator `K = T_{L-1} ⋯ T_0 P : H_d → H_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFourierOperator {
    pub lift: Mat,
    pub layers: Vec<LinearFourierLayer>,
}

impl LinearFourierOperator {
    pub fn new(lift: Mat, layers: Vec<LinearFourierLayer>) -> Result<Self> {
        if let Some(bad) = layers.iter().find(|l| l.channels() != lift.rows) {
            return Err(Error::shape("LinearFourierOperator", lift.rows, bad.channels()));
        }
        Ok(Self { lift, layers })
    }

    pub fn init(d: usize, m: usize, depth: usize, k_max: usize, rng: &mut impl Rng) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        let s = 1.0 / (d as f64).sqrt();
        let lift = Mat::from_vec(m, d, (0..m * d).map(|_| rng.gen_range(-s..s)).collect());
        let layers = (0..depth).map(|_| LinearFourierLayer::random(m, k_max, rng)).collect();
        Ok(Self { lift, layers })
    }

    pub fn in_channels(&self) -> usize {
        self.lift.cols
    }

    pub fn out_channels(&self) -> usize {
        self.lift.rows
    }

    pub fn k_max(&self) -> usize {
        self.layers.first().map_or(0, LinearFourierLayer::k_max)
    }

    pub fn apply_mat(&self, a: &Mat) -> Result<Mat> {
        if a.rows != self.in_channels() {
            return Err(Error::shape("linop_apply", self.in_channels(), a.rows));
        }
        check_modes(self.k_max(), a.cols)?;
        let mut v = tensor::matmul(&self.lift, a, false);
        for layer in &self.layers {
            v = layer.apply_mat(&v, false);
        }
        Ok(v)
    }

    /// `K* b = P* T_0* ⋯ T_{L-1}* b`
    pub fn adjoint_apply_mat(&self, b: &Mat) -> Result<Mat> {
        if b.rows != self.out_channels() {
            return Err(Error::shape("linop_adjoint_apply", self.out_channels(), b.rows));
        }
        check_modes(self.k_max(), b.cols)?;
        let mut v = b.clone();
        for layer in self.layers.iter().rev() {
            v = layer.apply_mat(&v, true);
        }
        Ok(tensor::matmul(&self.lift, &v, true))
    }

    pub fn apply(&self, a: &GridFunction) -> Result<GridFunction> {
        let v = self.apply_mat(&to_mat(a, self.in_channels(), "linop_apply")?)?;
        Ok(from_mat(a, v))
    }

    pub fn adjoint_apply(&self, b: &GridFunction) -> Result<GridFunction> {
        let v = self.adjoint_apply_mat(&to_mat(b, self.out_channels(), "linop_adjoint_apply")?)?;
        Ok(from_mat(b, v))
    }

    pub fn take_ids(&self, cursor: &mut ParamCursor<'_>) -> Result<OperatorNodes> {
        let lift = cursor.next_id()?;
        let layers = (0..self.layers.len())
            .map(|_| Ok((cursor.next_id()?, cursor.next_id()?)))
            .collect::<Result<_>>()?;
        Ok(OperatorNodes { lift, layers })
    }

    pub fn record_with(&self, tape: &mut Tape, nodes: &OperatorNodes, a: NodeId) -> Result<NodeId> {
        let modes = self.k_max() + 1;
        let mut v = tape.matmul(nodes.lift, a, false)?;
        for &ids in &nodes.layers {
            v = record_layer(tape, ids, v, false, modes)?;
        }
        Ok(v)
    }

    pub fn record_adjoint_with(&self, tape: &mut Tape, nodes: &OperatorNodes, b: NodeId) -> Result<NodeId> {
        let modes = self.k_max() + 1;
        let mut v = b;
        for &ids in nodes.layers.iter().rev() {
            v = record_layer(tape, ids, v, true, modes)?;
        }
        tape.matmul(nodes.lift, v, true)
    }
}

/// Parameter nodes of a recorded linear operator, for reuse by its adjoint.
#[derive(Clone, Debug)]
pub struct OperatorNodes {
    pub lift: NodeId,
    pub layers: Vec<(NodeId, NodeId)>,
}

impl Parametric for LinearFourierOperator {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = vec![ParamRef { rows: self.lift.rows, cols: self.lift.cols, data: &self.lift.data }];
        for l in &self.layers {
            l.params_into(&mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.lift.data];
        for l in &mut self.layers {
            l.params_mut_into(&mut out);
        }
        out
    }
}

/// Self-adjoint `G = P* T_{L-1} ⋯ T_0 P` with `T_{L-1-k} = T_k*`.
///
/// Only the first `⌈L/2⌉` layers are stored. For odd `L` the last stored
/// layer is the middle one and enters as `(M + M*)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SafnoOperator {
    pub lift: Mat,
    pub free: Vec<LinearFourierLayer>,
    depth: usize,
}

/// Which stored layer realizes depth index `k`, and how.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Realized {
    Direct(usize),
    Mirror(usize),
    Middle(usize),
}

impl SafnoOperator {
    pub fn new(lift: Mat, free: Vec<LinearFourierLayer>, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidConfig("SAFNO depth must be at least 1".into()));
        }
        if free.len() != depth.div_ceil(2) {
            return Err(Error::shape("SafnoOperator layers", depth.div_ceil(2), free.len()));
        }
        if let Some(bad) = free.iter().find(|l| l.channels() != lift.rows) {
            return Err(Error::shape("SafnoOperator", lift.rows, bad.channels()));
        }
        if free.windows(2).any(|w| w[0].k_max() != w[1].k_max()) {
            return Err(Error::InvalidConfig("all layers must share k_max".into()));
        }
        Ok(Self { lift, free, depth })
    }

    pub fn init(d: usize, m: usize, depth: usize, k_max: usize, rng: &mut impl Rng) -> Result<Self> {
        if d == 0 || m == 0 || depth == 0 {
            return Err(Error::InvalidConfig(format!(
                "SAFNO sizes must be positive (d = {d}, m = {m}, L = {depth})"
            )));
        }
        let s = 1.0 / (d as f64).sqrt();
        let lift = Mat::from_vec(m, d, (0..m * d).map(|_| rng.gen_range(-s..s)).collect());
        let free = (0..depth.div_ceil(2))
            .map(|_| LinearFourierLayer::random(m, k_max, rng))
            .collect();
        Self::new(lift, free, depth)
    }

    /// `P = I`, `W = I`, `R = 0`: the identity operator on `d` channels.
    pub fn identity(d: usize, depth: usize, k_max: usize) -> Result<Self> {
        let free = (0..depth.div_ceil(2))
            .map(|_| LinearFourierLayer::identity(d, k_max))
            .collect();
        Self::new(Mat::identity(d), free, depth)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn in_channels(&self) -> usize {
        self.lift.cols
    }

    pub fn width(&self) -> usize {
        self.lift.rows
    }

    pub fn k_max(&self) -> usize {
        self.free[0].k_max()
    }

    fn schedule(&self) -> impl Iterator<Item = Realized> + '_ {
        let l = self.depth;
        (0..l).map(move |k| {
            if l % 2 == 1 && k == l / 2 {
                Realized::Middle(k)
            } else if k < l / 2 {
                Realized::Direct(k)
            } else {
                Realized::Mirror(l - 1 - k)
            }
        })
    }

    /// Materialized `T_0, …, T_{L-1}`.
    pub fn realized_layers(&self) -> Vec<LinearFourierLayer> {
        self.schedule()
            .map(|r| match r {
                Realized::Direct(i) => self.free[i].clone(),
                Realized::Mirror(i) => self.free[i].adjoint(),
                Realized::Middle(i) => self.free[i].symmetrized(),
            })
            .collect()
    }

    pub fn apply_mat(&self, a: &Mat) -> Result<Mat> {
        if a.rows != self.in_channels() {
            return Err(Error::shape("safno_apply", self.in_channels(), a.rows));
        }
        check_modes(self.k_max(), a.cols)?;
        let mut v = tensor::matmul(&self.lift, a, false);
        for r in self.schedule() {
            v = match r {
                Realized::Direct(i) => self.free[i].apply_mat(&v, false),
                Realized::Mirror(i) => self.free[i].apply_mat(&v, true),
                Realized::Middle(i) => {
                    let mut s = self.free[i].apply_mat(&v, false);
                    s.add_assign(&self.free[i].apply_mat(&v, true));
                    s.scale(0.5)
                }
            };
        }
        Ok(tensor::matmul(&self.lift, &v, true))
    }

    pub fn apply(&self, a: &GridFunction) -> Result<GridFunction> {
        let v = self.apply_mat(&to_mat(a, self.in_channels(), "safno_apply")?)?;
        Ok(from_mat(a, v))
    }

    pub fn take_ids(&self, cursor: &mut ParamCursor<'_>) -> Result<OperatorNodes> {
        let lift = cursor.next_id()?;
        let layers = (0..self.free.len())
            .map(|_| Ok((cursor.next_id()?, cursor.next_id()?)))
            .collect::<Result<_>>()?;
        Ok(OperatorNodes { lift, layers })
    }

    /// Records `G a`; mirrored layers reuse the free layers' nodes.
    pub fn record_with(&self, tape: &mut Tape, nodes: &OperatorNodes, a: NodeId) -> Result<NodeId> {
        let modes = self.k_max() + 1;
        let mut v = tape.matmul(nodes.lift, a, false)?;
        for r in self.schedule() {
            v = match r {
                Realized::Direct(i) => record_layer(tape, nodes.layers[i], v, false, modes)?,
                Realized::Mirror(i) => record_layer(tape, nodes.layers[i], v, true, modes)?,
                Realized::Middle(i) => {
                    let f = record_layer(tape, nodes.layers[i], v, false, modes)?;
                    let b = record_layer(tape, nodes.layers[i], v, true, modes)?;
                    let s = tape.add(f, b)?;
                    tape.scale(s, 0.5)?
                }
            };
        }
        tape.matmul(nodes.lift, v, true)
    }

    /// `Π_k (‖W_k‖ + sup_ξ ‖R_k(ξ)‖) · ‖P‖²` with Frobenius norms.
    pub fn norm_bound(&self) -> f64 {
        let p = self.lift.frobenius();
        self.realized_layers()
            .iter()
            .map(LinearFourierLayer::norm_bound)
            .product::<f64>()
            * p
            * p
    }

    /// Largest per-frequency multiplier norm over the stored layers.
    pub fn max_multiplier_norm(&self) -> f64 {
        self.free.iter().map(|l| l.r.sup_frobenius()).fold(0.0, f64::max)
    }
}

impl Parametric for SafnoOperator {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = vec![ParamRef { rows: self.lift.rows, cols: self.lift.cols, data: &self.lift.data }];
        for l in &self.free {
            l.params_into(&mut out);
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![&mut self.lift.data];
        for l in &mut self.free {
            l.params_mut_into(&mut out);
        }
        out
    }
}

/// Power-iteration estimate of `‖A‖` for a self-adjoint positive map, or of
/// `‖A‖²` when `A = K*K`.
pub fn power_iteration(
    apply: impl Fn(&Mat) -> Result<Mat>,
    rows: usize,
    cols: usize,
    iterations: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    let mut v = Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let norm = v.frobenius();
        if norm == 0.0 {
            return Ok(0.0);
        }
        v = v.scale(1.0 / norm);
        let w = apply(&v)?;
        estimate = w.frobenius();
        v = w;
    }
    Ok(estimate)
}

/// `‖G‖` for a self-adjoint operator via power iteration on `G²`.
pub fn safno_norm_estimate(op: &SafnoOperator, n: usize, iterations: usize, rng: &mut impl Rng) -> Result<f64> {
    let sq = power_iteration(
        |v| op.apply_mat(&op.apply_mat(v)?),
        op.in_channels(),
        n,
        iterations,
        rng,
    )?;
    Ok(sq.sqrt())
}
