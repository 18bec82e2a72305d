#![allow(dead_code)]

use rand::Rng;
use sno::functional::{GradientFunctional, KernelMode, PhiHead};
use sno::model::{BlockOrder, Model, PhaseState, SnoConfig, SnoModel};
use sno::spectral::{Grid, GridFunction};
use sno::tensor::Mat;

/// Rectangle-rule inner product, summed here rather than through the library.
pub fn dot_dx(a: &[f64], b: &[f64], dx: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dx
}

pub fn norm_dx(a: &[f64], dx: f64) -> f64 {
    dot_dx(a, a, dx).sqrt()
}

/// `ω(v, w) = ⟨v_q, w_p⟩ - ⟨v_p, w_q⟩`
pub fn omega(v: &PhaseState, w: &PhaseState) -> f64 {
    let dx = v.grid().dx();
    dot_dx(v.q.values(), w.p.values(), dx) - dot_dx(v.p.values(), w.q.values(), dx)
}

pub fn state_norm(s: &PhaseState) -> f64 {
    let dx = s.grid().dx();
    (dot_dx(s.q.values(), s.q.values(), dx) + dot_dx(s.p.values(), s.p.values(), dx)).sqrt()
}

pub fn state_diff_norm(a: &PhaseState, b: &PhaseState) -> f64 {
    state_norm(&a.axpy(-1.0, b).unwrap())
}

pub fn random_mat(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

pub fn random_field(grid: Grid, channels: usize, scale: f64, rng: &mut impl Rng) -> GridFunction {
    let n = grid.n_points() * channels;
    GridFunction::from_values(grid, channels, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// Fresh heads have a zero output row; this makes the functional nontrivial.
pub fn randomize_head(f: &mut GradientFunctional, scale: f64, rng: &mut impl Rng) {
    if let PhiHead::Mlp(mlp) = &mut f.phi {
        for v in &mut mlp.weights.last_mut().unwrap().data {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

pub fn random_functional(d: usize, n: usize, rng: &mut impl Rng) -> GradientFunctional {
    let width = rng.gen_range(2..=6);
    let depth = rng.gen_range(1..=3);
    let k_max = rng.gen_range(1..(n / 2).min(8));
    let hidden: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(3..=8)).collect();
    let mode = if rng.gen_bool(0.5) { KernelMode::SelfAdjoint } else { KernelMode::General };
    let mut f = GradientFunctional::init(d, width, depth, k_max, &hidden, mode, rng).unwrap();
    randomize_head(&mut f, 0.5, rng);
    f
}

pub fn random_sno_config(d: usize, n: usize, rng: &mut impl Rng) -> SnoConfig {
    SnoConfig {
        channels: d,
        stages: rng.gen_range(1..=3),
        width: rng.gen_range(2..=6),
        depth: rng.gen_range(1..=3),
        k_max: rng.gen_range(1..(n / 2).min(8)),
        hidden: vec![rng.gen_range(3..=8)],
        kernel: if rng.gen_bool(0.5) { KernelMode::SelfAdjoint } else { KernelMode::General },
        order: if rng.gen_bool(0.5) { BlockOrder::LowUp } else { BlockOrder::UpLow },
    }
}

/// SNO with every shear block made non-identity.
pub fn random_sno(config: &SnoConfig, head_scale: f64, rng: &mut impl Rng) -> Model {
    let mut m = SnoModel::init(config, rng).unwrap();
    for b in &mut m.blocks {
        randomize_head(b, head_scale, rng);
    }
    Model::Sno(m)
}

pub fn random_state(grid: Grid, d: usize, scale: f64, rng: &mut impl Rng) -> PhaseState {
    PhaseState::new(random_field(grid, d, scale, rng), random_field(grid, d, scale, rng)).unwrap()
}

/// Relative mismatch `‖a - b‖ / ‖b‖` of two flat vectors.
pub fn rel_vec_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}
