//! Reverse-mode differentiation over the closed set of array operations the
//! models are built from, plus forward-mode tangent propagation on the same
//! recording.
//!
//! Every op computes its value eagerly when recorded. Node ids are assigned
//! in recording order, so inputs always precede their consumers and the
//! reverse sweep is a single pass over descending ids.

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::{self, CMat, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(Mat),
    Complex(CMat),
}

impl Value {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Value::Real(m) => m.shape(),
            Value::Complex(m) => m.shape(),
        }
    }

    pub fn as_real(&self) -> Option<&Mat> {
        match self {
            Value::Real(m) => Some(m),
            Value::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&CMat> {
        match self {
            Value::Complex(m) => Some(m),
            Value::Real(_) => None,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Value::Real(m) => m.is_finite(),
            Value::Complex(m) => m.is_finite(),
        }
    }

    fn zeros_like(&self) -> Value {
        match self {
            Value::Real(m) => Value::Real(Mat::zeros(m.rows, m.cols)),
            Value::Complex(m) => Value::Complex(CMat::zeros(m.rows, m.cols)),
        }
    }

    fn accumulate(&mut self, other: &Value) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => a.add_assign(b),
            (Value::Complex(a), Value::Complex(b)) => a.add_assign(b),
            _ => unreachable!("adjoint kind mismatch"),
        }
    }

    fn describe(&self) -> String {
        let (r, c) = self.shape();
        match self {
            Value::Real(_) => format!("real {r}x{c}"),
            Value::Complex(_) => format!("complex {r}x{c}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// `1 - tanh²`
    TanhPrime,
    /// `-2 tanh (1 - tanh²)`
    TanhSecond,
}

impl Activation {
    fn eval(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::TanhPrime => tensor::tanh_prime(a),
            Activation::TanhSecond => tensor::tanh_second(a),
        }
    }

    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => tensor::tanh_prime(a),
            Activation::TanhPrime => tensor::tanh_second(a),
            Activation::TanhSecond => tensor::tanh_third(a),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `a + b`; `b` may be a single column broadcast across `a`'s columns.
    Add,
    Scale(f64),
    PointwiseMultiply,
    /// Inputs `[A, x]`: `A x`, or `Aᵀ x` when transposed.
    ChannelMatmul { transpose: bool },
    /// Inputs `[weights, x]`: packed multiplier applied per frequency.
    SpectralMultiply { adjoint: bool },
    /// Real field to its first `modes` Fourier coefficients.
    Dft { modes: usize },
    /// Truncated half spectrum to a real field of `n` points.
    Idft { n: usize },
    PointwiseNonlinearity(Activation),
    ReduceSum,
    /// `dx · Σ entries`
    QuadratureSum { dx: f64 },
}

impl OpKind {
    fn arity(&self) -> usize {
        match self {
            OpKind::Add
            | OpKind::PointwiseMultiply
            | OpKind::ChannelMatmul { .. }
            | OpKind::SpectralMultiply { .. } => 2,
            _ => 1,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Scale(_) => "scale",
            OpKind::PointwiseMultiply => "pointwise_multiply",
            OpKind::ChannelMatmul { .. } => "channel_matmul",
            OpKind::SpectralMultiply { .. } => "spectral_multiply",
            OpKind::Dft { .. } => "dft",
            OpKind::Idft { .. } => "idft",
            OpKind::PointwiseNonlinearity(_) => "pointwise_nonlinearity",
            OpKind::ReduceSum => "reduce_sum",
            OpKind::QuadratureSum { .. } => "quadrature_sum",
        }
    }
}

#[derive(Clone, Debug)]
enum NodeKind {
    Input,
    Parameter(usize),
    Op(OpKind, [NodeId; 2]),
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    value: Value,
}

/// Append-only recording of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

/// One gradient array per parameter slot, in slot order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub grads: Vec<Mat>,
}

impl GradientBundle {
    pub fn zeros_like(shapes: &[(usize, usize)]) -> Self {
        Self {
            grads: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale_in_place(&mut self, alpha: f64) {
        for g in &mut self.grads {
            g.data.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Mat::is_finite)
    }

    /// Flattened copy in slot order.
    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.data.iter().copied()).collect()
    }
}

/// Adjoint values for every node reached by a reverse sweep.
#[derive(Debug)]
pub struct Adjoints {
    grads: Vec<Option<Value>>,
    params: Vec<NodeId>,
    shapes: Vec<(usize, usize)>,
}

impl Adjoints {
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.grads[id.0].as_ref()
    }

    /// Adjoint of a real node, zero if it did not influence the seed.
    pub fn real(&self, id: NodeId, rows: usize, cols: usize) -> Mat {
        match self.get(id) {
            Some(Value::Real(m)) => m.clone(),
            _ => Mat::zeros(rows, cols),
        }
    }

    pub fn into_bundle(mut self) -> GradientBundle {
        let grads = self
            .params
            .iter()
            .zip(&self.shapes)
            .map(|(id, &(r, c))| match self.grads[id.0].take() {
                Some(Value::Real(m)) => m,
                _ => Mat::zeros(r, c),
            })
            .collect();
        GradientBundle { grads }
    }
}

/// Forward-mode tangents for every node (`None` = identically zero).
#[derive(Debug)]
pub struct Tangents {
    tangents: Vec<Option<Value>>,
}

impl Tangents {
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.tangents[id.0].as_ref()
    }

    pub fn real(&self, id: NodeId, rows: usize, cols: usize) -> Mat {
        match self.get(id) {
            Some(Value::Real(m)) => m.clone(),
            _ => Mat::zeros(rows, cols),
        }
    }
}

fn real<'a>(v: &'a Value, op: &OpKind) -> Result<&'a Mat> {
    v.as_real().ok_or_else(|| {
        Error::shape(op.name(), "real operand", v.describe())
    })
}

fn complex<'a>(v: &'a Value, op: &OpKind) -> Result<&'a CMat> {
    v.as_complex().ok_or_else(|| {
        Error::shape(op.name(), "complex operand", v.describe())
    })
}

fn forward(op: &OpKind, a: &Value, b: Option<&Value>) -> Result<Value> {
    let ctx = op.name();
    Ok(match op {
        OpKind::Add => {
            let (x, y) = (real(a, op)?, real(b.unwrap(), op)?);
            if x.shape() == y.shape() {
                let mut out = x.clone();
                out.add_assign(y);
                Value::Real(out)
            } else if y.cols == 1 && y.rows == x.rows {
                let mut out = x.clone();
                for r in 0..x.rows {
                    let bias = y.data[r];
                    out.data[r * x.cols..(r + 1) * x.cols]
                        .iter_mut()
                        .for_each(|v| *v += bias);
                }
                Value::Real(out)
            } else {
                return Err(Error::shape(ctx, a.describe(), b.unwrap().describe()));
            }
        }
        OpKind::Scale(alpha) => match a {
            Value::Real(x) => Value::Real(x.scale(*alpha)),
            Value::Complex(x) => Value::Complex(CMat {
                rows: x.rows,
                cols: x.cols,
                data: x.data.iter().map(|v| v * *alpha).collect(),
            }),
        },
        OpKind::PointwiseMultiply => {
            let (x, y) = (real(a, op)?, real(b.unwrap(), op)?);
            if x.shape() != y.shape() {
                return Err(Error::shape(ctx, a.describe(), b.unwrap().describe()));
            }
            Value::Real(Mat::from_vec(
                x.rows,
                x.cols,
                x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
            ))
        }
        OpKind::ChannelMatmul { transpose } => {
            let (w, x) = (real(a, op)?, real(b.unwrap(), op)?);
            let inner = if *transpose { w.rows } else { w.cols };
            if inner != x.rows {
                return Err(Error::shape(ctx, a.describe(), b.unwrap().describe()));
            }
            Value::Real(tensor::matmul(w, x, *transpose))
        }
        OpKind::SpectralMultiply { adjoint } => {
            let (w, x) = (real(a, op)?, complex(b.unwrap(), op)?);
            let expected = crate::spectral::Multiplier::param_len(x.rows, x.cols.max(1) - 1);
            if x.cols == 0 || w.data.len() != expected {
                return Err(Error::shape(ctx, a.describe(), b.unwrap().describe()));
            }
            Value::Complex(tensor::spectral_mul(&w.data, x, *adjoint))
        }
        OpKind::Dft { modes } => {
            let x = real(a, op)?;
            if *modes == 0 || *modes > x.cols / 2 + 1 {
                return Err(Error::shape(ctx, format!("{modes} modes"), a.describe()));
            }
            Value::Complex(tensor::dft_truncated(x, *modes))
        }
        OpKind::Idft { n } => {
            let y = complex(a, op)?;
            if y.cols == 0 || y.cols > n / 2 + 1 {
                return Err(Error::shape(ctx, format!("{n} points"), a.describe()));
            }
            Value::Real(tensor::idft_truncated(y, *n))
        }
        OpKind::PointwiseNonlinearity(act) => {
            let x = real(a, op)?;
            Value::Real(Mat::from_vec(
                x.rows,
                x.cols,
                x.data.iter().map(|&v| act.eval(v)).collect(),
            ))
        }
        OpKind::ReduceSum => {
            let x = real(a, op)?;
            Value::Real(Mat::filled(1, 1, x.data.iter().sum()))
        }
        OpKind::QuadratureSum { dx } => {
            let x = real(a, op)?;
            Value::Real(Mat::filled(1, 1, dx * x.data.iter().sum::<f64>()))
        }
    })
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameter_nodes(&self) -> &[NodeId] {
        &self.params
    }

    fn push(&mut self, kind: NodeKind, value: Value) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { kind, value });
        id
    }

    /// Constant leaf (not differentiated with respect to by `backward`).
    pub fn input(&mut self, value: Value) -> NodeId {
        self.push(NodeKind::Input, value)
    }

    pub fn input_real(&mut self, value: Mat) -> NodeId {
        self.input(Value::Real(value))
    }

    /// Trainable leaf; slots are numbered in creation order.
    pub fn parameter(&mut self, value: Mat) -> NodeId {
        let slot = self.params.len();
        let id = self.push(NodeKind::Parameter(slot), Value::Real(value));
        self.params.push(id);
        id
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    /// Value of a real node. Panics on a complex node.
    pub fn real(&self, id: NodeId) -> &Mat {
        self.nodes[id.0]
            .value
            .as_real()
            .expect("node holds a complex value")
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.real(id).data[0]
    }

    /// Records `op` applied to `inputs` and evaluates it.
    pub fn record(&mut self, op: OpKind, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != op.arity() {
            return Err(Error::shape(
                op.name(),
                format!("{} inputs", op.arity()),
                format!("{} inputs", inputs.len()),
            ));
        }
        if let Some(bad) = inputs.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(Error::InvalidConfig(format!("unknown node {bad}")));
        }
        let a = &self.nodes[inputs[0].0].value;
        let b = inputs.get(1).map(|id| &self.nodes[id.0].value);
        let value = forward(&op, a, b)?;
        let second = inputs.get(1).copied().unwrap_or(inputs[0]);
        Ok(self.push(NodeKind::Op(op, [inputs[0], second]), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::Add, &[a, b])
    }

    pub fn scale(&mut self, x: NodeId, alpha: f64) -> Result<NodeId> {
        self.record(OpKind::Scale(alpha), &[x])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(OpKind::PointwiseMultiply, &[a, b])
    }

    pub fn matmul(&mut self, w: NodeId, x: NodeId, transpose: bool) -> Result<NodeId> {
        self.record(OpKind::ChannelMatmul { transpose }, &[w, x])
    }

    pub fn spectral_multiply(&mut self, w: NodeId, x: NodeId, adjoint: bool) -> Result<NodeId> {
        self.record(OpKind::SpectralMultiply { adjoint }, &[w, x])
    }

    pub fn dft(&mut self, x: NodeId, modes: usize) -> Result<NodeId> {
        self.record(OpKind::Dft { modes }, &[x])
    }

    pub fn idft(&mut self, y: NodeId, n: usize) -> Result<NodeId> {
        self.record(OpKind::Idft { n }, &[y])
    }

    pub fn activation(&mut self, x: NodeId, act: Activation) -> Result<NodeId> {
        self.record(OpKind::PointwiseNonlinearity(act), &[x])
    }

    pub fn reduce_sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.record(OpKind::ReduceSum, &[x])
    }

    pub fn quadrature_sum(&mut self, x: NodeId, dx: f64) -> Result<NodeId> {
        self.record(OpKind::QuadratureSum { dx }, &[x])
    }

    /// Gradient of a scalar node with respect to every parameter slot.
    pub fn backward(&self, seed: NodeId) -> Result<GradientBundle> {
        let shape = self.value(seed).shape();
        if shape != (1, 1) || self.value(seed).as_real().is_none() {
            return Err(Error::shape(
                "backward seed",
                "real 1x1",
                self.value(seed).describe(),
            ));
        }
        Ok(self
            .vjp(seed, Value::Real(Mat::filled(1, 1, 1.0)))?
            .into_bundle())
    }

    /// Reverse sweep seeded with an arbitrary cotangent of `seed`'s shape.
    pub fn vjp(&self, seed: NodeId, seed_value: Value) -> Result<Adjoints> {
        let sv = self.value(seed);
        if std::mem::discriminant(sv) != std::mem::discriminant(&seed_value)
            || sv.shape() != seed_value.shape()
        {
            return Err(Error::shape("vjp seed", sv.describe(), seed_value.describe()));
        }
        let mut grads: Vec<Option<Value>> = vec![None; seed.0 + 1];
        grads[seed.0] = Some(seed_value);

        for idx in (0..=seed.0).rev() {
            let Some(ybar) = grads[idx].take() else {
                continue;
            };
            if !ybar.is_finite() {
                let node = &self.nodes[idx];
                let what = match &node.kind {
                    NodeKind::Op(op, _) => op.name().to_string(),
                    NodeKind::Input => "input".to_string(),
                    NodeKind::Parameter(slot) => format!("parameter slot {slot}"),
                };
                return Err(Error::NonFinite(format!(
                    "reverse sweep at node #{idx} ({what})"
                )));
            }
            if let NodeKind::Op(op, inputs) = &self.nodes[idx].kind {
                self.pullback(op, *inputs, &ybar, &mut grads);
            }
            grads[idx] = Some(ybar);
        }
        let shapes = self.params.iter().map(|id| self.value(*id).shape()).collect();
        Ok(Adjoints {
            grads,
            params: self.params.clone(),
            shapes,
        })
    }

    fn pullback(&self, op: &OpKind, inputs: [NodeId; 2], ybar: &Value, grads: &mut [Option<Value>]) {
        let acc = |grads: &mut [Option<Value>], id: NodeId, contrib: Value| {
            match &mut grads[id.0] {
                Some(g) => g.accumulate(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let [a, b] = inputs;
        let av = &self.nodes[a.0].value;
        let bv = &self.nodes[b.0].value;
        match op {
            OpKind::Add => {
                let yb = ybar.as_real().unwrap();
                acc(grads, a, ybar.clone());
                let bm = bv.as_real().unwrap();
                if bm.shape() == yb.shape() {
                    acc(grads, b, ybar.clone());
                } else {
                    let col = (0..yb.rows).map(|r| yb.row(r).iter().sum()).collect();
                    acc(grads, b, Value::Real(Mat::from_vec(yb.rows, 1, col)));
                }
            }
            OpKind::Scale(alpha) => {
                let contrib = match ybar {
                    Value::Real(m) => Value::Real(m.scale(*alpha)),
                    Value::Complex(m) => Value::Complex(CMat {
                        rows: m.rows,
                        cols: m.cols,
                        data: m.data.iter().map(|v| v * *alpha).collect(),
                    }),
                };
                acc(grads, a, contrib);
            }
            OpKind::PointwiseMultiply => {
                let yb = ybar.as_real().unwrap();
                let (x, y) = (av.as_real().unwrap(), bv.as_real().unwrap());
                let ga = yb.data.iter().zip(&y.data).map(|(g, v)| g * v).collect();
                let gb = yb.data.iter().zip(&x.data).map(|(g, v)| g * v).collect();
                acc(grads, a, Value::Real(Mat::from_vec(yb.rows, yb.cols, ga)));
                acc(grads, b, Value::Real(Mat::from_vec(yb.rows, yb.cols, gb)));
            }
            OpKind::ChannelMatmul { transpose } => {
                let yb = ybar.as_real().unwrap();
                let (w, x) = (av.as_real().unwrap(), bv.as_real().unwrap());
                acc(
                    grads,
                    a,
                    Value::Real(tensor::matmul_weight_grad(yb, x, *transpose, w.rows, w.cols)),
                );
                acc(grads, b, Value::Real(tensor::matmul(w, yb, !*transpose)));
            }
            OpKind::SpectralMultiply { adjoint } => {
                let yb = ybar.as_complex().unwrap();
                let (w, x) = (av.as_real().unwrap(), bv.as_complex().unwrap());
                let gw = tensor::spectral_mul_weight_grad(yb, x, *adjoint);
                acc(grads, a, Value::Real(Mat::from_vec(w.rows, w.cols, gw)));
                acc(
                    grads,
                    b,
                    Value::Complex(tensor::spectral_mul(&w.data, yb, !*adjoint)),
                );
            }
            OpKind::Dft { .. } => {
                let n = av.as_real().unwrap().cols;
                acc(
                    grads,
                    a,
                    Value::Real(tensor::dft_truncated_transpose(ybar.as_complex().unwrap(), n)),
                );
            }
            OpKind::Idft { .. } => {
                let modes = av.as_complex().unwrap().cols;
                acc(
                    grads,
                    a,
                    Value::Complex(tensor::idft_truncated_transpose(ybar.as_real().unwrap(), modes)),
                );
            }
            OpKind::PointwiseNonlinearity(act) => {
                let yb = ybar.as_real().unwrap();
                let x = av.as_real().unwrap();
                let g = yb
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(g, &v)| g * act.derivative(v))
                    .collect();
                acc(grads, a, Value::Real(Mat::from_vec(x.rows, x.cols, g)));
            }
            OpKind::ReduceSum | OpKind::QuadratureSum { .. } => {
                let s = ybar.as_real().unwrap().data[0];
                let w = match op {
                    OpKind::QuadratureSum { dx } => s * dx,
                    _ => s,
                };
                let x = av.as_real().unwrap();
                acc(grads, a, Value::Real(Mat::filled(x.rows, x.cols, w)));
            }
        }
    }

    /// Forward-mode sweep: tangents of every node given tangents of some leaves.
    pub fn jvp(&self, seeds: &[(NodeId, Value)]) -> Result<Tangents> {
        let mut tangents: Vec<Option<Value>> = vec![None; self.nodes.len()];
        for (id, t) in seeds {
            let v = self.value(*id);
            if std::mem::discriminant(v) != std::mem::discriminant(t) || v.shape() != t.shape() {
                return Err(Error::shape("jvp tangent", v.describe(), t.describe()));
            }
            tangents[id.0] = Some(t.clone());
        }
        for idx in 0..self.nodes.len() {
            let NodeKind::Op(op, [a, b]) = &self.nodes[idx].kind else {
                continue;
            };
            let (ta, tb) = (tangents[a.0].as_ref(), tangents[b.0].as_ref());
            if ta.is_none() && tb.is_none() {
                continue;
            }
            let av = &self.nodes[a.0].value;
            let bv = &self.nodes[b.0].value;
            let out = &self.nodes[idx].value;
            let t = match op {
                OpKind::Add => {
                    let mut t = out.zeros_like();
                    if let Some(ta) = ta {
                        t.accumulate(ta);
                    }
                    if let Some(tb) = tb {
                        let tbm = tb.as_real().unwrap();
                        if tbm.shape() == out.shape() {
                            t.accumulate(tb);
                        } else {
                            let rows = out.shape().0;
                            let cols = out.shape().1;
                            let mut m = Mat::zeros(rows, cols);
                            for r in 0..rows {
                                m.data[r * cols..(r + 1) * cols].fill(tbm.data[r]);
                            }
                            t.accumulate(&Value::Real(m));
                        }
                    }
                    t
                }
                OpKind::Scale(_) | OpKind::Dft { .. } | OpKind::Idft { .. } => {
                    forward(op, ta.unwrap(), None)?
                }
                OpKind::PointwiseMultiply => {
                    let mut t = out.zeros_like();
                    if let Some(ta) = ta {
                        t.accumulate(&forward(op, ta, Some(bv))?);
                    }
                    if let Some(tb) = tb {
                        t.accumulate(&forward(op, av, Some(tb))?);
                    }
                    t
                }
                OpKind::ChannelMatmul { .. } | OpKind::SpectralMultiply { .. } => {
                    let mut t = out.zeros_like();
                    if let Some(ta) = ta {
                        t.accumulate(&forward(op, ta, Some(bv))?);
                    }
                    if let Some(tb) = tb {
                        t.accumulate(&forward(op, av, Some(tb))?);
                    }
                    t
                }
                OpKind::PointwiseNonlinearity(act) => {
                    let x = av.as_real().unwrap();
                    let tx = ta.unwrap().as_real().unwrap();
                    Value::Real(Mat::from_vec(
                        x.rows,
                        x.cols,
                        x.data
                            .iter()
                            .zip(&tx.data)
                            .map(|(&v, dv)| act.derivative(v) * dv)
                            .collect(),
                    ))
                }
                OpKind::ReduceSum | OpKind::QuadratureSum { .. } => forward(op, ta.unwrap(), None)?,
            };
            tangents[idx] = Some(t);
        }
        Ok(Tangents { tangents })
    }
}

/// Directional derivative of a recorded real map `f` at `input` along `tangent`.
pub fn jvp<F>(f: F, input: &Mat, tangent: &Mat) -> Result<Mat>
where
    F: FnOnce(&mut Tape, NodeId) -> Result<NodeId>,
{
    if input.shape() != tangent.shape() {
        return Err(Error::shape(
            "jvp",
            format!("{:?}", input.shape()),
            format!("{:?}", tangent.shape()),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.input_real(input.clone());
    let y = f(&mut tape, x)?;
    let (rows, cols) = tape.value(y).shape();
    let t = tape.jvp(&[(x, Value::Real(tangent.clone()))])?;
    Ok(t.real(y, rows, cols))
}
