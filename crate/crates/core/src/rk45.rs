//! Adaptive Dormand–Prince 5(4) integration of autonomous systems over a
//! fixed interval.

use crate::error::{Error, Result};
use crate::model::PhaseState;
use crate::pde::SystemSpec;
use crate::spectral::GridFunction;

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `y' = f(y)` from `0` to `dt`.
///
/// A sub-step is accepted when `max_i |err_i| ≤ tol·(1 + ‖y‖_∞)`.
pub fn integrate<F>(mut f: F, y0: &[f64], dt: f64, tol: f64) -> Result<(Vec<f64>, StepStats)>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidConfig(format!("integration interval must be positive, got {dt}")));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut stats = StepStats::default();
    let mut t = 0.0;
    let mut h = dt;
    f(&y, &mut k[0]);
    while t < dt {
        let last = t + h >= dt;
        if last {
            h = dt - t;
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += h * a * k[j][i];
                }
                stage[i] = acc;
            }
            f(&stage, &mut k[s]);
        }
        // the seventh stage is evaluated at the fifth-order solution
        y_new.copy_from_slice(&stage);
        let scale = tol * (1.0 + y.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
        let mut err = 0.0_f64;
        for i in 0..n {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("integrator error estimate at t = {t:.6e}")));
        }
        if err <= 1.0 {
            t = if last { dt } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };
        h *= factor;
        if t < dt && h < 1e-14 * dt {
            return Err(Error::StepUnderflow {
                time: t,
                step: h,
                state_norm: y.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
            });
        }
    }
    Ok((y, stats))
}

/// One reference step of `sys` from `s`.
pub fn integrate_system(sys: &SystemSpec, s: &PhaseState, dt: f64, tol: f64) -> Result<PhaseState> {
    sys.rhs(s)?;
    let n = sys.grid.n_points();
    let mut y0 = Vec::with_capacity(2 * n);
    y0.extend_from_slice(s.q.values());
    y0.extend_from_slice(s.p.values());
    let (y, _) = integrate(
        |y, dy| {
            let (q, p) = y.split_at(n);
            let (dq, dp) = dy.split_at_mut(n);
            sys.rhs_into(q, p, dq, dp);
        },
        &y0,
        dt,
        tol,
    )?;
    let (q, p) = y.split_at(n);
    PhaseState::new(
        GridFunction::from_values(sys.grid, 1, q.to_vec())?,
        GridFunction::from_values(sys.grid, 1, p.to_vec())?,
    )
}

/// `n_steps` reference steps, returning all `n_steps + 1` states.
pub fn reference_trajectory(
    sys: &SystemSpec,
    s0: &PhaseState,
    dt: f64,
    tol: f64,
    n_steps: usize,
) -> Result<Vec<PhaseState>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(s0.clone());
    for _ in 0..n_steps {
        let next = integrate_system(sys, out.last().unwrap(), dt, tol)?;
        out.push(next);
    }
    Ok(out)
}
