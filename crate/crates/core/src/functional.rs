//! Gradient neural functionals `u ↦ ∇ℰ(u)` with `ℰ(u) = ∫ Φ(K u) dx`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, NodeId, Tape};
use crate::error::{Error, Result};
use crate::params::{ParamCursor, ParamRef, Parametric};
use crate::safno::{LinearFourierOperator, OperatorNodes, SafnoOperator};
use crate::spectral::GridFunction;
use crate::tensor::{self, Mat};

/// Inner linear operator `K`.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `K = K*` on `d` channels.
    SelfAdjoint(SafnoOperator),
    /// `K : H_d → H_m` with structural adjoint.
    General(LinearFourierOperator),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMode {
    #[default]
    SelfAdjoint,
    General,
}

impl Kernel {
    pub fn in_channels(&self) -> usize {
        match self {
            Kernel::SelfAdjoint(k) => k.in_channels(),
            Kernel::General(k) => k.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            Kernel::SelfAdjoint(k) => k.in_channels(),
            Kernel::General(k) => k.out_channels(),
        }
    }

    pub fn apply_mat(&self, u: &Mat) -> Result<Mat> {
        match self {
            Kernel::SelfAdjoint(k) => k.apply_mat(u),
            Kernel::General(k) => k.apply_mat(u),
        }
    }

    pub fn adjoint_apply_mat(&self, v: &Mat) -> Result<Mat> {
        match self {
            Kernel::SelfAdjoint(k) => k.apply_mat(v),
            Kernel::General(k) => k.adjoint_apply_mat(v),
        }
    }

    fn take_ids(&self, cursor: &mut ParamCursor<'_>) -> Result<OperatorNodes> {
        match self {
            Kernel::SelfAdjoint(k) => k.take_ids(cursor),
            Kernel::General(k) => k.take_ids(cursor),
        }
    }

    fn record(&self, tape: &mut Tape, nodes: &OperatorNodes, u: NodeId) -> Result<NodeId> {
        match self {
            Kernel::SelfAdjoint(k) => k.record_with(tape, nodes, u),
            Kernel::General(k) => k.record_with(tape, nodes, u),
        }
    }

    fn record_adjoint(&self, tape: &mut Tape, nodes: &OperatorNodes, v: NodeId) -> Result<NodeId> {
        match self {
            Kernel::SelfAdjoint(k) => k.record_with(tape, nodes, v),
            Kernel::General(k) => k.record_adjoint_with(tape, nodes, v),
        }
    }

    pub fn max_multiplier_norm(&self) -> f64 {
        match self {
            Kernel::SelfAdjoint(k) => k.max_multiplier_norm(),
            Kernel::General(k) => k.layers.iter().map(|l| l.r.sup_frobenius()).fold(0.0, f64::max),
        }
    }
}

impl Parametric for Kernel {
    fn params(&self) -> Vec<ParamRef<'_>> {
        match self {
            Kernel::SelfAdjoint(k) => k.params(),
            Kernel::General(k) => k.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Kernel::SelfAdjoint(k) => k.params_mut(),
            Kernel::General(k) => k.params_mut(),
        }
    }
}

/// Pointwise network `R^m → R`: tanh hidden layers, linear scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseMlp {
    /// Hidden weights followed by the `1 × h` output row.
    pub weights: Vec<Mat>,
    /// Column biases, one per weight matrix.
    pub biases: Vec<Mat>,
}

fn add_bias(mut a: Mat, b: &Mat) -> Mat {
    let cols = a.cols;
    for r in 0..a.rows {
        let bias = b.data[r];
        a.data[r * cols..(r + 1) * cols].iter_mut().for_each(|v| *v += bias);
    }
    a
}

fn map(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    Mat::from_vec(a.rows, a.cols, a.data.iter().map(|&v| f(v)).collect())
}

fn hadamard(a: &Mat, b: &Mat) -> Mat {
    Mat::from_vec(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect())
}

impl PointwiseMlp {
    /// Hidden layers `U(±1/√fan_in)`; the output layer starts at zero.
    pub fn new(input: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if input == 0 || hidden.contains(&0) {
            return Err(Error::InvalidConfig("MLP widths must be positive".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut fan_in = input;
        for &h in hidden {
            let s = 1.0 / (fan_in as f64).sqrt();
            weights.push(Mat::from_vec(h, fan_in, (0..h * fan_in).map(|_| rng.gen_range(-s..s)).collect()));
            biases.push(Mat::from_vec(h, 1, (0..h).map(|_| rng.gen_range(-s..s)).collect()));
            fan_in = h;
        }
        weights.push(Mat::zeros(1, fan_in));
        biases.push(Mat::zeros(1, 1));
        Ok(Self { weights, biases })
    }

    pub fn input_width(&self) -> usize {
        self.weights[0].cols
    }

    fn hidden_count(&self) -> usize {
        self.weights.len() - 1
    }

    /// Pre-activations of every hidden layer.
    fn hidden_preactivations(&self, z: &Mat) -> Vec<Mat> {
        let mut pre = Vec::with_capacity(self.hidden_count());
        let mut h = z.clone();
        for l in 0..self.hidden_count() {
            let a = add_bias(tensor::matmul(&self.weights[l], &h, false), &self.biases[l]);
            h = map(&a, f64::tanh);
            pre.push(a);
        }
        pre
    }

    /// `Φ(z)` at every column, as a `1 × n` row.
    pub fn evaluate(&self, z: &Mat) -> Mat {
        let pre = self.hidden_preactivations(z);
        let h = pre.last().map_or_else(|| z.clone(), |a| map(a, f64::tanh));
        let l = self.hidden_count();
        add_bias(tensor::matmul(&self.weights[l], &h, false), &self.biases[l])
    }

    /// `∇Φ(z)` at every column.
    pub fn gradient(&self, z: &Mat) -> Mat {
        let pre = self.hidden_preactivations(z);
        let l = self.hidden_count();
        let mut g = tensor::matmul(&self.weights[l], &Mat::filled(1, z.cols, 1.0), true);
        for k in (0..l).rev() {
            let ga = hadamard(&g, &map(&pre[k], tensor::tanh_prime));
            g = tensor::matmul(&self.weights[k], &ga, true);
        }
        g
    }

    /// `D²Φ(z) ż` at every column.
    pub fn hessian_vector(&self, z: &Mat, zdot: &Mat) -> Mat {
        let pre = self.hidden_preactivations(z);
        let l = self.hidden_count();
        let mut adot = Vec::with_capacity(l);
        let mut hdot = zdot.clone();
        for k in 0..l {
            let a = tensor::matmul(&self.weights[k], &hdot, false);
            hdot = hadamard(&a, &map(&pre[k], tensor::tanh_prime));
            adot.push(a);
        }
        let mut g = tensor::matmul(&self.weights[l], &Mat::filled(1, z.cols, 1.0), true);
        let mut gdot = Mat::zeros(g.rows, g.cols);
        for k in (0..l).rev() {
            let tp = map(&pre[k], tensor::tanh_prime);
            let ts = map(&pre[k], tensor::tanh_second);
            let ga = hadamard(&g, &tp);
            let mut gadot = hadamard(&gdot, &tp);
            gadot.add_assign(&hadamard(&hadamard(&g, &ts), &adot[k]));
            g = tensor::matmul(&self.weights[k], &ga, true);
            gdot = tensor::matmul(&self.weights[k], &gadot, true);
        }
        gdot
    }

    /// Records `∇Φ(z)` columnwise.
    fn record_gradient(&self, tape: &mut Tape, cursor: &mut ParamCursor<'_>, z: NodeId) -> Result<NodeId> {
        let ids: Vec<(NodeId, NodeId)> = (0..self.weights.len())
            .map(|_| Ok((cursor.next_id()?, cursor.next_id()?)))
            .collect::<Result<_>>()?;
        let n = tape.value(z).shape().1;
        let l = self.hidden_count();
        let mut pre = Vec::with_capacity(l);
        let mut h = z;
        for &(w, b) in &ids[..l] {
            let a = tape.matmul(w, h, false)?;
            let a = tape.add(a, b)?;
            h = tape.activation(a, Activation::Tanh)?;
            pre.push(a);
        }
        let ones = tape.input_real(Mat::filled(1, n, 1.0));
        let mut g = tape.matmul(ids[l].0, ones, true)?;
        for k in (0..l).rev() {
            let tp = tape.activation(pre[k], Activation::TanhPrime)?;
            let ga = tape.mul(g, tp)?;
            g = tape.matmul(ids[k].0, ga, true)?;
        }
        Ok(g)
    }
}

impl Parametric for PointwiseMlp {
    fn params(&self) -> Vec<ParamRef<'_>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| {
                [
                    ParamRef { rows: w.rows, cols: w.cols, data: &w.data[..] },
                    ParamRef { rows: b.rows, cols: b.cols, data: &b.data[..] },
                ]
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [&mut w.data[..], &mut b.data[..]])
            .collect()
    }
}

/// Scalar density `Φ`.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiHead {
    Mlp(PointwiseMlp),
    /// `Φ(z) = (scale/2)|z|²`, no trainable parameters.
    Quadratic { scale: f64 },
}

impl PhiHead {
    fn evaluate(&self, z: &Mat) -> Mat {
        match self {
            PhiHead::Mlp(m) => m.evaluate(z),
            PhiHead::Quadratic { scale } => {
                let mut out = Mat::zeros(1, z.cols);
                for r in 0..z.rows {
                    for (o, v) in out.data.iter_mut().zip(z.row(r)) {
                        *o += 0.5 * scale * v * v;
                    }
                }
                out
            }
        }
    }

    fn gradient(&self, z: &Mat) -> Mat {
        match self {
            PhiHead::Mlp(m) => m.gradient(z),
            PhiHead::Quadratic { scale } => z.scale(*scale),
        }
    }

    fn hessian_vector(&self, z: &Mat, zdot: &Mat) -> Mat {
        match self {
            PhiHead::Mlp(m) => m.hessian_vector(z, zdot),
            PhiHead::Quadratic { scale } => zdot.scale(*scale),
        }
    }

    fn record_gradient(&self, tape: &mut Tape, cursor: &mut ParamCursor<'_>, z: NodeId) -> Result<NodeId> {
        match self {
            PhiHead::Mlp(m) => m.record_gradient(tape, cursor, z),
            PhiHead::Quadratic { scale } => tape.scale(z, *scale),
        }
    }
}

impl Parametric for PhiHead {
    fn params(&self) -> Vec<ParamRef<'_>> {
        match self {
            PhiHead::Mlp(m) => m.params(),
            PhiHead::Quadratic { .. } => Vec::new(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            PhiHead::Mlp(m) => m.params_mut(),
            PhiHead::Quadratic { .. } => Vec::new(),
        }
    }
}

/// `ℰ(u) = ∫ Φ(K u) dx` together with its exact gradient and Hessian action.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientFunctional {
    pub kernel: Kernel,
    pub phi: PhiHead,
}

impl GradientFunctional {
    pub fn new(kernel: Kernel, phi: PhiHead) -> Result<Self> {
        if let PhiHead::Mlp(m) = &phi {
            if m.input_width() != kernel.out_channels() {
                return Err(Error::shape("GradientFunctional", kernel.out_channels(), m.input_width()));
            }
        }
        Ok(Self { kernel, phi })
    }

    /// Default construction: self-adjoint `K` on `d` channels lifted to
    /// `width`, or a general `K : H_d → H_width`.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        d: usize,
        width: usize,
        depth: usize,
        k_max: usize,
        hidden: &[usize],
        mode: KernelMode,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let kernel = match mode {
            KernelMode::SelfAdjoint => Kernel::SelfAdjoint(SafnoOperator::init(d, width, depth, k_max, rng)?),
            KernelMode::General => Kernel::General(LinearFourierOperator::init(d, width, depth, k_max, rng)?),
        };
        let phi = PhiHead::Mlp(PointwiseMlp::new(kernel.out_channels(), hidden, rng)?);
        Self::new(kernel, phi)
    }

    pub fn channels(&self) -> usize {
        self.kernel.in_channels()
    }

    fn check(&self, u: &Mat) -> Result<()> {
        if u.rows != self.channels() {
            return Err(Error::shape("gradient functional", self.channels(), u.rows));
        }
        Ok(())
    }

    pub fn energy_mat(&self, u: &Mat, dx: f64) -> Result<f64> {
        self.check(u)?;
        let z = self.kernel.apply_mat(u)?;
        Ok(dx * self.phi.evaluate(&z).data.iter().sum::<f64>())
    }

    pub fn gradient_mat(&self, u: &Mat) -> Result<Mat> {
        self.check(u)?;
        let z = self.kernel.apply_mat(u)?;
        let g = self.kernel.adjoint_apply_mat(&self.phi.gradient(&z))?;
        if !g.is_finite() {
            return Err(Error::NonFinite("gradient functional output".into()));
        }
        Ok(g)
    }

    pub fn jacobian_vector_mat(&self, u: &Mat, h: &Mat) -> Result<Mat> {
        self.check(u)?;
        if h.shape() != u.shape() {
            return Err(Error::shape("jacobian_vector", format!("{:?}", u.shape()), format!("{:?}", h.shape())));
        }
        let z = self.kernel.apply_mat(u)?;
        let zdot = self.kernel.apply_mat(h)?;
        self.kernel.adjoint_apply_mat(&self.phi.hessian_vector(&z, &zdot))
    }

    pub fn energy(&self, u: &GridFunction) -> Result<f64> {
        self.energy_mat(&as_mat(u), u.grid().dx())
    }

    pub fn gradient(&self, u: &GridFunction) -> Result<GridFunction> {
        let g = self.gradient_mat(&as_mat(u))?;
        Ok(GridFunction::from_raw(*u.grid(), g.rows, g.data))
    }

    pub fn jacobian_vector(&self, u: &GridFunction, h: &GridFunction) -> Result<GridFunction> {
        u.check_same_shape(h, "jacobian_vector")?;
        let j = self.jacobian_vector_mat(&as_mat(u), &as_mat(h))?;
        Ok(GridFunction::from_raw(*u.grid(), j.rows, j.data))
    }

    /// Records `∇ℰ(u)`, consuming `K`'s then `Φ`'s parameter nodes.
    pub fn record_gradient(&self, tape: &mut Tape, cursor: &mut ParamCursor<'_>, u: NodeId) -> Result<NodeId> {
        let nodes = self.kernel.take_ids(cursor)?;
        let z = self.kernel.record(tape, &nodes, u)?;
        let g = self.phi.record_gradient(tape, cursor, z)?;
        self.kernel.record_adjoint(tape, &nodes, g)
    }
}

pub(crate) fn as_mat(u: &GridFunction) -> Mat {
    Mat::from_vec(u.channels(), u.n_points(), u.values().to_vec())
}

impl Parametric for GradientFunctional {
    fn params(&self) -> Vec<ParamRef<'_>> {
        let mut out = self.kernel.params();
        out.extend(self.phi.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.kernel.params_mut();
        out.extend(self.phi.params_mut());
        out
    }
}
