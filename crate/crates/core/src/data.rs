//! One-step training pairs: random initial conditions, reference stepping and
//! the on-disk dataset format.
//!
//! A dataset file is the magic `SNODATA1`, a `u32` little-endian length, a
//! UTF-8 JSON manifest of that length, then little-endian `f64` values laid
//! out pair-major (input, then target), component-major (`q`, then `p`) and
//! node-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PhaseState;
use crate::pde::SystemSpec;
use crate::rk45;
use crate::spectral::{Grid, GridFunction};

pub const MAGIC: &[u8; 8] = b"SNODATA1";
pub const GENERATOR_VERSION: &str = "sno-data/1";

/// Largest admissible `c·dt/dx`.
pub const CFL_LIMIT: f64 = 1.0;

fn default_cheb_degree() -> usize {
    12
}

fn default_rk_tolerance() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub system: SystemSpec,
    pub dt: f64,
    pub count: usize,
    #[serde(default = "default_cheb_degree")]
    pub cheb_degree: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rk_tolerance")]
    pub rk_tolerance: f64,
}

impl GenConfig {
    /// Validated config with the default degree and tolerance.
    pub fn new(system: SystemSpec, dt: f64, count: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            system,
            dt,
            count,
            cheb_degree: default_cheb_degree(),
            seed,
            rk_tolerance: default_rk_tolerance(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.count == 0 {
            return Err(Error::InvalidConfig("count must be at least 1".into()));
        }
        if !(self.rk_tolerance.is_finite() && self.rk_tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rk_tolerance must be positive, got {}",
                self.rk_tolerance
            )));
        }
        if let Some(ratio) = self.system.cfl_ratio(self.dt) {
            if ratio > CFL_LIMIT {
                return Err(Error::Cfl { ratio, limit: CFL_LIMIT });
            }
        }
        Ok(())
    }
}

/// Chebyshev polynomials `T_0..=T_k` at `y`.
fn chebyshev(y: f64, k: usize, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    if k >= 1 {
        out.push(y);
    }
    for j in 2..=k {
        let next = 2.0 * y * out[j - 1] - out[j - 2];
        out.push(next);
    }
}

/// `Σ a_k T_k(2x−1) · x(1−x)` with `a_k ~ U[-1, 1]`, scaled to `max|f| = 1`.
pub fn random_initial_field(rng: &mut impl Rng, grid: Grid, degree: usize) -> GridFunction {
    let a: Vec<f64> = (0..=degree).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let mut t = Vec::with_capacity(degree + 1);
    let mut values: Vec<f64> = grid
        .coordinates()
        .into_iter()
        .map(|x| {
            chebyshev(2.0 * x - 1.0, degree, &mut t);
            let series: f64 = a.iter().zip(&t).map(|(a, t)| a * t).sum();
            series * x * (1.0 - x)
        })
        .collect();
    let peak = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        values.iter_mut().for_each(|v| *v /= peak);
    }
    GridFunction::from_values(grid, 1, values).expect("one channel on the grid")
}

/// Generator for the `index`-th pair of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Independent random `q` and `p` drawn with [`random_initial_field`].
pub fn random_state(rng: &mut impl Rng, grid: Grid, degree: usize) -> PhaseState {
    let q = random_initial_field(rng, grid, degree);
    let p = random_initial_field(rng, grid, degree);
    PhaseState { q, p }
}

/// Initial state of pair `index`.
pub fn sample_input(cfg: &GenConfig, index: usize) -> PhaseState {
    random_state(&mut sample_rng(cfg.seed, index), cfg.system.grid, cfg.cheb_degree)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub system: SystemSpec,
    pub grid: Grid,
    pub dt: f64,
    pub count: usize,
    pub seed: u64,
    pub cheb_degree: usize,
    pub rk_tolerance: f64,
}

impl Manifest {
    fn pair_len(&self) -> usize {
        4 * self.grid.n_points()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    data: Vec<f64>,
}

/// Draws `cfg.count` inputs and steps each one with the reference integrator.
pub fn generate(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let chunks: Vec<Vec<f64>> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let input = sample_input(cfg, i);
            let target = rk45::integrate_system(&cfg.system, &input, cfg.dt, cfg.rk_tolerance)
                .map_err(|e| Error::Sample { index: i, source: Box::new(e) })?;
            let mut out = Vec::with_capacity(4 * cfg.system.grid.n_points());
            for s in [&input, &target] {
                out.extend_from_slice(s.q.values());
                out.extend_from_slice(s.p.values());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        generator: GENERATOR_VERSION.to_string(),
        system: cfg.system.clone(),
        grid: cfg.system.grid,
        dt: cfg.dt,
        count: cfg.count,
        seed: cfg.seed,
        cheb_degree: cfg.cheb_degree,
        rk_tolerance: cfg.rk_tolerance,
    };
    Ok(Dataset { manifest, data: chunks.concat() })
}

impl Dataset {
    pub fn from_parts(manifest: Manifest, data: Vec<f64>) -> Result<Self> {
        if manifest.system.grid != manifest.grid {
            return Err(Error::Format("manifest grid disagrees with the system grid".into()));
        }
        let expected = manifest.count * manifest.pair_len();
        if data.len() != expected {
            return Err(Error::Format(format!(
                "manifest declares {} pairs ({expected} values), payload holds {} values",
                manifest.count,
                data.len()
            )));
        }
        Ok(Self { manifest, data })
    }

    pub fn len(&self) -> usize {
        self.manifest.count
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.count == 0
    }

    pub fn grid(&self) -> Grid {
        self.manifest.grid
    }

    pub fn system(&self) -> &SystemSpec {
        &self.manifest.system
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }

    fn state_at(&self, offset: usize) -> PhaseState {
        let n = self.grid().n_points();
        let field = |k: usize| {
            GridFunction::from_values(self.grid(), 1, self.data[offset + k * n..offset + (k + 1) * n].to_vec())
                .expect("one channel on the grid")
        };
        PhaseState { q: field(0), p: field(1) }
    }

    pub fn input(&self, i: usize) -> PhaseState {
        self.state_at(i * self.manifest.pair_len())
    }

    pub fn target(&self, i: usize) -> PhaseState {
        self.state_at(i * self.manifest.pair_len() + 2 * self.grid().n_points())
    }

    pub fn pair(&self, i: usize) -> (PhaseState, PhaseState) {
        (self.input(i), self.target(i))
    }

    /// Largest max-norm gap between stored targets and fresh reference steps
    /// over the given pairs.
    pub fn consistency_residual(&self, indices: impl IntoIterator<Item = usize>) -> Result<f64> {
        let mut worst = 0.0_f64;
        for i in indices {
            let (input, target) = self.pair(i);
            let fresh = rk45::integrate_system(self.system(), &input, self.manifest.dt, self.manifest.rk_tolerance)
                .map_err(|e| Error::Sample { index: i, source: Box::new(e) })?;
            let gap = fresh.axpy(-1.0, &target)?;
            worst = worst.max(gap.q.max_abs()).max(gap.p.max_abs());
        }
        Ok(worst)
    }

    /// Every 100th pair, and at least one.
    pub fn spot_check_indices(&self) -> Vec<usize> {
        (0..self.len()).step_by(100).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let len = u32::try_from(manifest.len())
            .map_err(|_| Error::Format("manifest longer than 4 GiB".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&manifest)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dataset and re-integrates a 1% sample of its pairs.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ds = Self::load_unverified(path)?;
        let residual = ds.consistency_residual(ds.spot_check_indices())?;
        if residual > 10.0 * ds.manifest.rk_tolerance {
            return Err(Error::Format(format!(
                "stored targets differ from reference steps by {residual:.3e}"
            )));
        }
        Ok(ds)
    }

    pub fn load_unverified(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let mut len = [0u8; 4];
        read_exact(r, &mut len, "manifest length")?;
        let mut manifest = vec![0u8; u32::from_le_bytes(len) as usize];
        read_exact(r, &mut manifest, "manifest")?;
        let manifest: Manifest = serde_json::from_slice(&manifest)?;
        if manifest.generator != GENERATOR_VERSION {
            return Err(Error::Format(format!(
                "unsupported generator version '{}'",
                manifest.generator
            )));
        }
        manifest.system.validate()?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format("payload is not a whole number of f64 values".into()));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_parts(manifest, data)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}
