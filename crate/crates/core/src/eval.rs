//! Long rollouts, error and energy series, backward reconstruction and
//! structure diagnostics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Kernel;
use crate::model::{Model, PhaseState};
use crate::pde::SystemSpec;
use crate::spectral::Grid;
use crate::tensor::Mat;

/// Floor of the energy normalization in relative energy errors.
pub const ENERGY_FLOOR: f64 = 1e-12;

/// States visited by repeated application of a map, possibly cut short.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PhaseState>,
    /// Step at which the map failed and the reason.
    pub failure: Option<(usize, String)>,
}

impl Trajectory {
    pub fn last(&self) -> &PhaseState {
        self.states.last().expect("a trajectory holds its initial state")
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

fn iterate(u0: &PhaseState, n_steps: usize, mut step: impl FnMut(&PhaseState) -> Result<PhaseState>) -> Trajectory {
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(u0.clone());
    for k in 1..=n_steps {
        match step(states.last().unwrap()) {
            Ok(s) if s.is_finite() => states.push(s),
            Ok(_) => {
                return Trajectory { states, failure: Some((k, "non-finite state".into())) };
            }
            Err(e) => return Trajectory { states, failure: Some((k, e.to_string())) },
        }
    }
    Trajectory { states, failure: None }
}

/// `u0, Φ(u0), …, Φⁿ(u0)`, truncated at the first non-finite state.
pub fn rollout(model: &Model, u0: &PhaseState, n_steps: usize) -> Trajectory {
    iterate(u0, n_steps, |s| model.forward(s))
}

/// `u_n, Φ⁻¹(u_n), …`; only SNO models have an inverse.
pub fn backward_rollout(model: &Model, u_n: &PhaseState, n_steps: usize) -> Result<Trajectory> {
    if let Model::Fno(_) = model {
        return Err(Error::Unsupported(
            "backward rollout needs an exactly invertible model; the baseline FNO has no inverse".into(),
        ));
    }
    Ok(iterate(u_n, n_steps, |s| model.inverse(s)))
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 && den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-step relative errors of `q`, `p` and the full state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelativeError {
    pub q: f64,
    pub p: f64,
    pub state: f64,
}

pub fn relative_error(pred: &PhaseState, truth: &PhaseState) -> Result<RelativeError> {
    let d = pred.axpy(-1.0, truth)?;
    Ok(RelativeError {
        q: ratio(d.q.norm(), truth.q.norm()),
        p: ratio(d.p.norm(), truth.p.norm()),
        state: ratio(d.norm(), truth.norm()),
    })
}

/// `‖û_n − u_n‖ / ‖u_n‖` per step, with `0/0 = 0`.
pub fn relative_l2_series(pred: &[PhaseState], truth: &[PhaseState]) -> Result<Vec<f64>> {
    relative_error_series(pred, truth).map(|v| v.into_iter().map(|e| e.state).collect())
}

pub fn relative_error_series(pred: &[PhaseState], truth: &[PhaseState]) -> Result<Vec<RelativeError>> {
    if pred.len() != truth.len() {
        return Err(Error::shape("relative_l2_series", format!("{} states", truth.len()), format!("{} states", pred.len())));
    }
    pred.iter().zip(truth).map(|(a, b)| relative_error(a, b)).collect()
}

/// `(H(u_n), |H(u_n) − H(u_0)| / max(|H(u_0)|, 1e-12))` per step.
pub fn energy_series(sys: &SystemSpec, traj: &[PhaseState]) -> Result<Vec<(f64, f64)>> {
    let first = traj
        .first()
        .ok_or_else(|| Error::InvalidConfig("energy series of an empty trajectory".into()))?;
    let h0 = sys.hamiltonian(first)?;
    let scale = h0.abs().max(ENERGY_FLOOR);
    traj.iter()
        .map(|s| {
            let h = sys.hamiltonian(s)?;
            Ok((h, (h - h0).abs() / scale))
        })
        .collect()
}

/// Step indices `1, 10, 20, …, 100, 200, …, 1000, 2000, …` up to `n_steps`.
pub fn summary_steps(n_steps: usize) -> Vec<usize> {
    let mut out = vec![1];
    let mut k = 10;
    let mut stride = 10;
    while k <= n_steps {
        out.push(k);
        if k == 10 * stride {
            stride *= 10;
        }
        k += stride;
    }
    out.retain(|&k| k <= n_steps);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub step: usize,
    pub rel_l2_q: f64,
    pub rel_l2_p: f64,
    pub rel_l2_state: f64,
    pub energy_pred: f64,
    pub energy_true: f64,
    pub rel_energy_err: f64,
}

pub const ROLLOUT_HEADER: &str = "step,rel_l2_q,rel_l2_p,rel_l2_state,energy_pred,energy_true,rel_energy_err";

impl RolloutRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step, self.rel_l2_q, self.rel_l2_p, self.rel_l2_state, self.energy_pred, self.energy_true, self.rel_energy_err
        )
    }
}

/// Model rollout scored against the reference trajectory from the same start.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutReport {
    pub records: Vec<RolloutRecord>,
    pub failure: Option<(usize, String)>,
}

impl RolloutReport {
    pub fn compare(sys: &SystemSpec, pred: &Trajectory, truth: &[PhaseState]) -> Result<Self> {
        let n = pred.states.len().min(truth.len());
        let errs = relative_error_series(&pred.states[..n], &truth[..n])?;
        let e_pred = energy_series(sys, &pred.states[..n])?;
        let e_true = energy_series(sys, &truth[..n])?;
        let records = (0..n)
            .map(|k| RolloutRecord {
                step: k,
                rel_l2_q: errs[k].q,
                rel_l2_p: errs[k].p,
                rel_l2_state: errs[k].state,
                energy_pred: e_pred[k].0,
                energy_true: e_true[k].0,
                rel_energy_err: e_pred[k].1,
            })
            .collect();
        Ok(Self { records, failure: pred.failure.clone() })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ROLLOUT_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn at(&self, step: usize) -> Option<&RolloutRecord> {
        self.records.get(step)
    }
}

/// Sample mean and standard deviation (divisor `n − 1`; zero for one sample).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub step: usize,
    pub samples: usize,
    pub rel_l2_mean: f64,
    pub rel_l2_std: f64,
    pub rel_energy_mean: f64,
    pub rel_energy_std: f64,
}

pub const SUMMARY_HEADER: &str = "step,samples,rel_l2_mean,rel_l2_std,rel_energy_mean,rel_energy_std";

/// Mean ± std across reports at each summary step reached by at least one report.
pub fn summarize(reports: &[RolloutReport], n_steps: usize) -> Vec<SummaryRow> {
    summary_steps(n_steps)
        .into_iter()
        .filter_map(|k| {
            let rows: Vec<_> = reports.iter().filter_map(|r| r.at(k)).collect();
            if rows.is_empty() {
                return None;
            }
            let (l2m, l2s) = mean_std(&rows.iter().map(|r| r.rel_l2_state).collect::<Vec<_>>());
            let (em, es) = mean_std(&rows.iter().map(|r| r.rel_energy_err).collect::<Vec<_>>());
            Some(SummaryRow {
                step: k,
                samples: rows.len(),
                rel_l2_mean: l2m,
                rel_l2_std: l2s,
                rel_energy_mean: em,
                rel_energy_std: es,
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e},{:e}\n",
            r.step, r.samples, r.rel_l2_mean, r.rel_l2_std, r.rel_energy_mean, r.rel_energy_std
        ));
    }
    out
}

/// Mean of the per-step series over reports, using every report that reached the step.
pub fn mean_series(reports: &[RolloutReport], f: impl Fn(&RolloutRecord) -> f64) -> Vec<f64> {
    let len = reports.iter().map(|r| r.records.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.at(k)).map(&f).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect()
}

/// Relative distance of each backward state from the forward state it should reproduce.
pub fn reconstruction_series(forward: &Trajectory, backward: &Trajectory) -> Result<Vec<f64>> {
    let n = forward.states.len();
    let pairs = backward.states.len().min(n);
    (0..pairs)
        .map(|k| {
            let target = &forward.states[n - 1 - k];
            let d = backward.states[k].axpy(-1.0, target)?;
            Ok(ratio(d.norm(), target.norm()))
        })
        .collect()
}

/// Worst-case structure defects over random probes. Entries are `None`
/// when the model has no such structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub model: String,
    pub samples: usize,
    pub symplectic_defect: f64,
    pub self_adjointness_defect: Option<f64>,
    pub inverse_residual: Option<f64>,
}

fn kernel_defect(k: &Kernel, grid: Grid, rng: &mut impl Rng) -> Result<f64> {
    let n = grid.n_points();
    let rand_mat = |rows: usize, rng: &mut dyn rand::RngCore| {
        Mat::from_vec(rows, n, (0..rows * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let a = rand_mat(k.in_channels(), rng);
    let b = rand_mat(k.out_channels(), rng);
    let ka = k.apply_mat(&a)?;
    let ktb = k.adjoint_apply_mat(&b)?;
    let lhs = ka.dot(&b);
    let rhs = a.dot(&ktb);
    let scale = ka.frobenius() * b.frobenius() + a.frobenius() * ktb.frobenius();
    Ok(ratio((lhs - rhs).abs(), scale))
}

/// Probes at random states of unit amplitude on `grid`.
pub fn structure_report(model: &Model, grid: Grid, n_samples: usize, rng: &mut impl Rng) -> Result<StructureReport> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("structure_report needs at least one sample".into()));
    }
    let d = model.channels();
    let mut symp = 0.0_f64;
    let mut inv = 0.0_f64;
    let mut adj = 0.0_f64;
    for _ in 0..n_samples {
        let s = PhaseState::random(grid, d, 1.0, rng);
        symp = symp.max(model.symplectic_defect(&s, 1, rng)?);
        if let Model::Sno(m) = model {
            let there = m.forward(&s)?;
            let back = m.inverse(&there)?;
            inv = inv.max(ratio(back.axpy(-1.0, &s)?.norm(), s.norm()));
            for block in &m.blocks {
                adj = adj.max(kernel_defect(&block.kernel, grid, rng)?);
            }
        }
    }
    let is_sno = matches!(model, Model::Sno(_));
    Ok(StructureReport {
        model: model.kind_name().to_string(),
        samples: n_samples,
        symplectic_defect: symp,
        self_adjointness_defect: is_sno.then_some(adj),
        inverse_residual: is_sno.then_some(inv),
    })
}
