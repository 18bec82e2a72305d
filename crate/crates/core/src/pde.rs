//! Semi-discrete Hamiltonian PDEs on a uniform grid: right-hand sides and
//! discrete energies.
//!
//! Every system has one field channel per phase component. On Dirichlet
//! grids the endpoint rows of the right-hand side are zero, so boundary
//! values stay at their initial values. Gradient energies are summed over
//! grid edges with forward differences, which makes each energy an exact
//! invariant of its semi-discrete flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PhaseState;
use crate::spectral::{Boundary, Grid, GridFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    /// `q̇ = p`, `ṗ = c² q_xx`
    Wave,
    /// `Ė = c B_x`, `Ḃ = c E_x` with `(q, p) = (E, B)`
    Maxwell1d,
    /// `i ψ_t = -½ψ_xx + Vψ` with `ψ = q + i p`
    Schrodinger,
    /// `q̇ = p`, `ṗ = c² q_xx + q + q³`
    KleinGordon,
}

impl SystemKind {
    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Wave => "wave",
            SystemKind::Maxwell1d => "maxwell",
            SystemKind::Schrodinger => "schrodinger",
            SystemKind::KleinGordon => "klein-gordon",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "wave" => Ok(SystemKind::Wave),
            "maxwell" | "maxwell1d" | "electromagnetic" => Ok(SystemKind::Maxwell1d),
            "schrodinger" | "schroedinger" => Ok(SystemKind::Schrodinger),
            "klein-gordon" | "kleingordon" | "kg" => Ok(SystemKind::KleinGordon),
            other => Err(Error::Unsupported(format!("unknown system '{other}'"))),
        }
    }

    /// Whether the system has a characteristic wave speed (and a CFL limit).
    pub fn has_wave_speed(self) -> bool {
        self != SystemKind::Schrodinger
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub wave_speed: f64,
    /// Sampled `V(x_j)` for the Schrödinger system; `None` means `V ≡ 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<f64>>,
    pub grid: Grid,
}

impl SystemSpec {
    pub fn new(kind: SystemKind, wave_speed: f64, grid: Grid) -> Result<Self> {
        if kind.has_wave_speed() && !(wave_speed.is_finite() && wave_speed > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{} needs a positive wave speed, got {wave_speed}",
                kind.name()
            )));
        }
        Ok(Self { kind, wave_speed, potential: None, grid })
    }

    /// System on the unit interval with `n` Dirichlet nodes.
    pub fn dirichlet(kind: SystemKind, wave_speed: f64, n: usize) -> Result<Self> {
        Self::new(kind, wave_speed, Grid::dirichlet(n)?)
    }

    pub fn with_potential(mut self, v: Vec<f64>) -> Result<Self> {
        if self.kind != SystemKind::Schrodinger {
            return Err(Error::InvalidConfig("only the Schrödinger system takes a potential".into()));
        }
        if v.len() != self.grid.n_points() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "potential needs {} finite samples, got {}",
                self.grid.n_points(),
                v.len()
            )));
        }
        self.potential = Some(v);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.kind, self.wave_speed, self.grid)?;
        if let Some(v) = &self.potential {
            fresh.with_potential(v.clone())?;
        }
        Ok(())
    }

    /// `c·dt/dx`, or `None` when the system has no wave speed.
    pub fn cfl_ratio(&self, dt: f64) -> Option<f64> {
        self.kind
            .has_wave_speed()
            .then(|| self.wave_speed * dt / self.grid.dx())
    }

    fn check(&self, s: &PhaseState) -> Result<()> {
        if *s.grid() != self.grid || s.channels() != 1 {
            return Err(Error::shape(
                "pde system",
                format!("1x{} on the system grid", self.grid.n_points()),
                s.q.shape_string(),
            ));
        }
        Ok(())
    }

    fn periodic(&self) -> bool {
        self.grid.boundary() == Boundary::Periodic
    }

    /// `(q̇, ṗ)` written into `dq`, `dp`.
    pub fn rhs_into(&self, q: &[f64], p: &[f64], dq: &mut [f64], dp: &mut [f64]) {
        let n = q.len();
        let dx = self.grid.dx();
        let c = self.wave_speed;
        let periodic = self.periodic();
        let range = if periodic { 0..n } else { 1..n - 1 };
        let nb = |j: usize| ((j + n - 1) % n, (j + 1) % n);
        let d2 = |u: &[f64], j: usize| {
            let (l, r) = nb(j);
            (u[l] - 2.0 * u[j] + u[r]) / (dx * dx)
        };
        let d1 = |u: &[f64], j: usize| {
            let (l, r) = nb(j);
            (u[r] - u[l]) / (2.0 * dx)
        };
        if !periodic {
            for out in [&mut *dq, &mut *dp] {
                out[0] = 0.0;
                out[n - 1] = 0.0;
            }
        }
        match self.kind {
            SystemKind::Wave => {
                for j in range {
                    dq[j] = p[j];
                    dp[j] = c * c * d2(q, j);
                }
            }
            SystemKind::KleinGordon => {
                for j in range {
                    dq[j] = p[j];
                    dp[j] = c * c * d2(q, j) + q[j] + q[j] * q[j] * q[j];
                }
            }
            SystemKind::Maxwell1d => {
                for j in range {
                    dq[j] = c * d1(p, j);
                    dp[j] = c * d1(q, j);
                }
            }
            SystemKind::Schrodinger => {
                let v = |j: usize| self.potential.as_ref().map_or(0.0, |v| v[j]);
                for j in range {
                    dq[j] = -0.5 * d2(p, j) + v(j) * p[j];
                    dp[j] = 0.5 * d2(q, j) - v(j) * q[j];
                }
            }
        }
    }

    pub fn rhs(&self, s: &PhaseState) -> Result<PhaseState> {
        self.check(s)?;
        let n = self.grid.n_points();
        let mut dq = vec![0.0; n];
        let mut dp = vec![0.0; n];
        self.rhs_into(s.q.values(), s.p.values(), &mut dq, &mut dp);
        PhaseState::new(
            GridFunction::from_values(self.grid, 1, dq)?,
            GridFunction::from_values(self.grid, 1, dp)?,
        )
    }

    /// `Σ_edges ((u_{j+1} - u_j)/dx)² dx`
    fn edge_energy(&self, u: &[f64]) -> f64 {
        let n = u.len();
        let dx = self.grid.dx();
        let edges = if self.periodic() { n } else { n - 1 };
        (0..edges)
            .map(|j| {
                let d = (u[(j + 1) % n] - u[j]) / dx;
                d * d
            })
            .sum::<f64>()
            * dx
    }

    pub fn hamiltonian_values(&self, q: &[f64], p: &[f64]) -> f64 {
        let dx = self.grid.dx();
        let c = self.wave_speed;
        let sq = |u: &[f64]| u.iter().map(|v| v * v).sum::<f64>() * dx;
        match self.kind {
            SystemKind::Wave => 0.5 * sq(p) + 0.5 * c * c * self.edge_energy(q),
            SystemKind::KleinGordon => {
                let potential: f64 = q.iter().map(|v| 0.5 * v * v + 0.25 * v.powi(4)).sum::<f64>() * dx;
                0.5 * sq(p) + 0.5 * c * c * self.edge_energy(q) - potential
            }
            SystemKind::Maxwell1d => 0.5 * c * (sq(q) + sq(p)),
            SystemKind::Schrodinger => {
                let kinetic = 0.25 * (self.edge_energy(q) + self.edge_energy(p));
                let pot = self.potential.as_ref().map_or(0.0, |v| {
                    v.iter().zip(q.iter().zip(p)).map(|(v, (a, b))| v * (a * a + b * b)).sum::<f64>() * dx
                });
                kinetic + 0.5 * pot
            }
        }
    }

    pub fn hamiltonian(&self, s: &PhaseState) -> Result<f64> {
        self.check(s)?;
        Ok(self.hamiltonian_values(s.q.values(), s.p.values()))
    }

    /// Variational derivative `(δH/δq, δH/δp)`: the nodal gradient of the
    /// discrete energy divided by `dx`.
    pub fn hamiltonian_gradient(&self, s: &PhaseState) -> Result<PhaseState> {
        self.check(s)?;
        let (q, p) = (s.q.values(), s.p.values());
        let n = q.len();
        let dx = self.grid.dx();
        let c = self.wave_speed;
        let periodic = self.periodic();
        // derivative of ½ Σ_edges (Δu/dx)² dx with respect to u_j, divided by dx
        let edge_grad = |u: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let mut g = 0.0;
                    if periodic || j + 1 < n {
                        g -= u[(j + 1) % n] - u[j];
                    }
                    if periodic || j > 0 {
                        g += u[j] - u[(j + n - 1) % n];
                    }
                    g / (dx * dx)
                })
                .collect()
        };
        let (gq, gp): (Vec<f64>, Vec<f64>) = match self.kind {
            SystemKind::Wave => (edge_grad(q).iter().map(|g| c * c * g).collect(), p.to_vec()),
            SystemKind::KleinGordon => (
                edge_grad(q)
                    .iter()
                    .zip(q)
                    .map(|(g, v)| c * c * g - v - v * v * v)
                    .collect(),
                p.to_vec(),
            ),
            SystemKind::Maxwell1d => (q.iter().map(|v| c * v).collect(), p.iter().map(|v| c * v).collect()),
            SystemKind::Schrodinger => {
                let v = |j: usize| self.potential.as_ref().map_or(0.0, |v| v[j]);
                let (eq, ep) = (edge_grad(q), edge_grad(p));
                (
                    (0..n).map(|j| 0.5 * eq[j] + v(j) * q[j]).collect(),
                    (0..n).map(|j| 0.5 * ep[j] + v(j) * p[j]).collect(),
                )
            }
        };
        PhaseState::new(
            GridFunction::from_values(self.grid, 1, gq)?,
            GridFunction::from_values(self.grid, 1, gp)?,
        )
    }
}
