//! Uniform 1D grids, sampled fields, weighted inner products and the
//! normalized discrete Fourier transform.
//!
//! Fields are real and stored channel-major (`channels × n_points`). The
//! forward transform is normalized so that a constant field `c` has the
//! coefficient `c` at frequency zero; with the rectangle-rule inner product
//! this makes `u ↦ sqrt(L)·F u` unitary.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Imaginary residue above which an inverse transform is rejected.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Dirichlet,
}

/// Uniform grid on `[0, domain_length]`.
///
/// Periodic grids place `n` nodes at `j·L/n` (the right endpoint is the left
/// one); Dirichlet grids include both endpoints, `x_j = j·L/(n-1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
    domain_length: f64,
    boundary: Boundary,
}

impl Grid {
    pub fn new(n_points: usize, domain_length: f64, boundary: Boundary) -> Result<Self> {
        if n_points < 4 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 4 points, got {n_points}"
            )));
        }
        if boundary == Boundary::Periodic && !n_points.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "periodic grids need an even point count, got {n_points}"
            )));
        }
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "domain length must be positive, got {domain_length}"
            )));
        }
        Ok(Self {
            n_points,
            domain_length,
            boundary,
        })
    }

    pub fn periodic(n_points: usize) -> Result<Self> {
        Self::new(n_points, 1.0, Boundary::Periodic)
    }

    pub fn dirichlet(n_points: usize) -> Result<Self> {
        Self::new(n_points, 1.0, Boundary::Dirichlet)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dx(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.domain_length / self.n_points as f64,
            Boundary::Dirichlet => self.domain_length / (self.n_points - 1) as f64,
        }
    }

    /// Coordinate of node `j`. Dirichlet endpoints are exactly `0` and `L`.
    pub fn x(&self, j: usize) -> f64 {
        match self.boundary {
            Boundary::Periodic => j as f64 * self.domain_length / self.n_points as f64,
            Boundary::Dirichlet => j as f64 * self.domain_length / (self.n_points - 1) as f64,
        }
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.x(j)).collect()
    }
}

/// Real field with `channels` components sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    channels: usize,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(grid: Grid, channels: usize) -> Self {
        Self {
            grid,
            channels,
            values: vec![0.0; channels * grid.n_points()],
        }
    }

    pub fn constant(grid: Grid, channels: usize, value: f64) -> Self {
        Self {
            grid,
            channels,
            values: vec![value; channels * grid.n_points()],
        }
    }

    /// Single-channel field sampled from `f(x)`.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            channels: 1,
            values: grid.coordinates().into_iter().map(f).collect(),
        }
    }

    pub fn from_values(grid: Grid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || values.len() != channels * grid.n_points() {
            return Err(Error::shape(
                "GridFunction::from_values",
                format!("{channels}x{}", grid.n_points()),
                format!("{} values", values.len()),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid function value at index {i}")));
        }
        Ok(Self {
            grid,
            channels,
            values,
        })
    }

    pub(crate) fn from_raw(grid: Grid, channels: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), channels * grid.n_points());
        Self {
            grid,
            channels,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.n_points();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.channels, self.n_points())
    }

    pub fn same_shape(&self, other: &GridFunction) -> bool {
        self.channels == other.channels && self.grid == other.grid
    }

    pub(crate) fn check_same_shape(&self, other: &GridFunction, context: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(context, self.shape_string(), other.shape_string()))
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &GridFunction) -> Result<GridFunction> {
        self.check_same_shape(other, "GridFunction::axpy")?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self::from_raw(self.grid, self.channels, values))
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        Self::from_raw(
            self.grid,
            self.channels,
            self.values.iter().map(|v| alpha * v).collect(),
        )
    }

    /// Rectangle-rule `L²` norm.
    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.dx()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `Σ_c Σ_j u·v·dx`.
pub fn inner_product(u: &GridFunction, v: &GridFunction) -> Result<f64> {
    u.check_same_shape(v, "inner_product")?;
    let sum: f64 = u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum();
    Ok(sum * u.grid.dx())
}

/// Fourier coefficients of a field on a periodic grid, stored in FFT order
/// (index `k` holds frequency `k` for `k < n/2` and `k - n` otherwise).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoefficients {
    grid: Grid,
    channels: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralCoefficients {
    pub fn zeros(grid: Grid, channels: usize) -> Self {
        Self {
            grid,
            channels,
            coeffs: vec![Complex64::new(0.0, 0.0); channels * grid.n_points()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.coeffs
    }

    fn index(&self, xi: i64) -> usize {
        let n = self.grid.n_points() as i64;
        assert!(
            -n / 2 <= xi && xi < n / 2,
            "frequency {xi} outside [-{}, {})",
            n / 2,
            n / 2
        );
        xi.rem_euclid(n) as usize
    }

    pub fn coeff(&self, channel: usize, xi: i64) -> Complex64 {
        self.coeffs[channel * self.grid.n_points() + self.index(xi)]
    }

    pub fn set_coeff(&mut self, channel: usize, xi: i64, value: Complex64) {
        let idx = channel * self.grid.n_points() + self.index(xi);
        self.coeffs[idx] = value;
    }

    /// `Σ |coeff|²` over all channels and frequencies.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest violation of `coeff(-ξ) = conj(coeff(ξ))`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n_points();
        let mut worst = 0.0_f64;
        for c in 0..self.channels {
            let row = &self.coeffs[c * n..(c + 1) * n];
            for k in 0..n {
                let mirror = (n - k) % n;
                worst = worst.max((row[k] - row[mirror].conj()).norm());
            }
        }
        worst
    }
}

pub fn dft_forward(u: &GridFunction) -> Result<SpectralCoefficients> {
    if u.grid.boundary() != Boundary::Periodic {
        return Err(Error::NotPeriodic);
    }
    let n = u.n_points();
    let fft = FftPlanner::new().plan_fft_forward(n);
    let scale = 1.0 / n as f64;
    let mut coeffs: Vec<Complex64> = u.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for row in coeffs.chunks_mut(n) {
        fft.process(row);
        row.iter_mut().for_each(|c| *c *= scale);
    }
    let out = SpectralCoefficients {
        grid: u.grid,
        channels: u.channels,
        coeffs,
    };
    debug_assert!(out.hermitian_defect() <= 1e-12 * (1.0 + u.max_abs()));
    Ok(out)
}

pub fn dft_inverse(s: &SpectralCoefficients) -> Result<GridFunction> {
    let n = s.grid.n_points();
    let fft = FftPlanner::new().plan_fft_inverse(n);
    let mut buf = s.coeffs.clone();
    for row in buf.chunks_mut(n) {
        fft.process(row);
    }
    let scale = buf.iter().fold(1.0_f64, |m, c| m.max(c.re.abs()));
    let residue = buf.iter().fold(0.0_f64, |m, c| m.max(c.im.abs()));
    if residue > HERMITIAN_TOLERANCE * scale {
        return Err(Error::NotHermitian {
            residue,
            tolerance: HERMITIAN_TOLERANCE,
        });
    }
    GridFunction::from_values(s.grid, s.channels, buf.into_iter().map(|c| c.re).collect())
}

/// Per-frequency `m × m` complex matrices `R(ξ)` for `0 ≤ ξ ≤ k_max`,
/// extended to negative frequencies by `R(-ξ) = conj(R(ξ))`.
///
/// Storage is flat and real: for ascending `ξ`, the real part of `R(ξ)`
/// (row-major) followed by its imaginary part. `R(0)` is real, so only its
/// real block is stored, giving `(2·k_max + 1)·m²` numbers in total.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiplier {
    channels: usize,
    k_max: usize,
    data: Vec<f64>,
}

impl Multiplier {
    pub fn param_len(channels: usize, k_max: usize) -> usize {
        (2 * k_max + 1) * channels * channels
    }

    pub fn zeros(channels: usize, k_max: usize) -> Self {
        Self {
            channels,
            k_max,
            data: vec![0.0; Self::param_len(channels, k_max)],
        }
    }

    pub fn identity(channels: usize, k_max: usize) -> Self {
        let mut out = Self::zeros(channels, k_max);
        for xi in 0..=k_max {
            for a in 0..channels {
                out.set(xi, a, a, Complex64::new(1.0, 0.0));
            }
        }
        out
    }

    pub fn from_data(channels: usize, k_max: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::param_len(channels, k_max) {
            return Err(Error::shape(
                "Multiplier::from_data",
                Self::param_len(channels, k_max),
                data.len(),
            ));
        }
        Ok(Self {
            channels,
            k_max,
            data,
        })
    }

    /// Builds `R` from `f(ξ) -> row-major m×m matrix`. `R(0)` must be real.
    pub fn from_fn(
        channels: usize,
        k_max: usize,
        f: impl Fn(usize) -> Vec<Complex64>,
    ) -> Result<Self> {
        let mut out = Self::zeros(channels, k_max);
        for xi in 0..=k_max {
            let mat = f(xi);
            if mat.len() != channels * channels {
                return Err(Error::shape(
                    "Multiplier::from_fn",
                    channels * channels,
                    mat.len(),
                ));
            }
            for a in 0..channels {
                for b in 0..channels {
                    let v = mat[a * channels + b];
                    if xi == 0 && v.im != 0.0 {
                        return Err(Error::InvalidConfig(
                            "R(0) must be real for real-valued outputs".into(),
                        ));
                    }
                    out.set(xi, a, b, v);
                }
            }
        }
        Ok(out)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn re_offset(channels: usize, xi: usize) -> usize {
        if xi == 0 {
            0
        } else {
            (2 * xi - 1) * channels * channels
        }
    }

    pub(crate) fn im_offset(channels: usize, xi: usize) -> usize {
        debug_assert!(xi > 0);
        2 * xi * channels * channels
    }

    pub fn get(&self, xi: usize, a: usize, b: usize) -> Complex64 {
        let m = self.channels;
        let re = self.data[Self::re_offset(m, xi) + a * m + b];
        let im = if xi == 0 {
            0.0
        } else {
            self.data[Self::im_offset(m, xi) + a * m + b]
        };
        Complex64::new(re, im)
    }

    pub fn set(&mut self, xi: usize, a: usize, b: usize, value: Complex64) {
        let m = self.channels;
        self.data[Self::re_offset(m, xi) + a * m + b] = value.re;
        if xi > 0 {
            self.data[Self::im_offset(m, xi) + a * m + b] = value.im;
        }
    }

    /// Conjugate-transposed multiplier `R(ξ)*`.
    pub fn adjoint(&self) -> Multiplier {
        let m = self.channels;
        let mut out = Multiplier::zeros(m, self.k_max);
        for xi in 0..=self.k_max {
            for a in 0..m {
                for b in 0..m {
                    out.set(xi, b, a, self.get(xi, a, b).conj());
                }
            }
        }
        out
    }

    /// Frobenius norm of `R(ξ)`; an upper bound on its operator norm.
    pub fn frobenius_at(&self, xi: usize) -> f64 {
        let m = self.channels;
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                s += self.get(xi, a, b).norm_sqr();
            }
        }
        s.sqrt()
    }

    pub fn sup_frobenius(&self) -> f64 {
        (0..=self.k_max)
            .map(|xi| self.frobenius_at(xi))
            .fold(0.0, f64::max)
    }
}

/// Applies `R` frequency by frequency; modes with `|ξ| > k_max` are zeroed.
pub fn apply_multiplier(s: &SpectralCoefficients, r: &Multiplier) -> Result<SpectralCoefficients> {
    if r.channels != s.channels {
        return Err(Error::shape(
            "apply_multiplier",
            format!("{} spectral channels", s.channels),
            format!("{}x{} multiplier", r.channels, r.channels),
        ));
    }
    let n = s.grid.n_points();
    if 2 * r.k_max >= n {
        return Err(Error::InvalidConfig(format!(
            "k_max = {} must be below n/2 = {}",
            r.k_max,
            n / 2
        )));
    }
    let m = s.channels;
    let mut out = SpectralCoefficients::zeros(s.grid, m);
    let k = r.k_max as i64;
    for xi in -k..=k {
        let abs = xi.unsigned_abs() as usize;
        for a in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..m {
                let rab = if xi >= 0 {
                    r.get(abs, a, b)
                } else {
                    r.get(abs, a, b).conj()
                };
                acc += rab * s.coeff(b, xi);
            }
            out.set_coeff(a, xi, acc);
        }
    }
    Ok(out)
}

/// How a Dirichlet field is presented to a periodic spectral operator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embedding {
    /// Grid values are read as one period as-is.
    #[default]
    Periodic,
    /// Antisymmetric reflection onto a periodic grid of `2(n-1)` points.
    OddExtension,
}

/// Presents a field on a periodic grid with the same spacing.
pub fn embed(u: &GridFunction, embedding: Embedding) -> Result<GridFunction> {
    let grid = *u.grid();
    match embedding {
        Embedding::Periodic => {
            let n = grid.n_points();
            let g = Grid::new(n, grid.dx() * n as f64, Boundary::Periodic)?;
            Ok(GridFunction::from_raw(g, u.channels, u.values.clone()))
        }
        Embedding::OddExtension => {
            if grid.boundary() != Boundary::Dirichlet {
                return Err(Error::InvalidConfig(
                    "odd extension needs a Dirichlet field".into(),
                ));
            }
            let n = grid.n_points();
            let big = 2 * (n - 1);
            let g = Grid::new(big, 2.0 * grid.domain_length(), Boundary::Periodic)?;
            let mut values = vec![0.0; u.channels * big];
            for c in 0..u.channels {
                let src = u.channel(c);
                let dst = &mut values[c * big..(c + 1) * big];
                dst[..n].copy_from_slice(src);
                for j in 1..n - 1 {
                    dst[big - j] = -src[j];
                }
            }
            Ok(GridFunction::from_raw(g, u.channels, values))
        }
    }
}

/// Inverse of [`embed`] on its range: reads the original nodes back.
pub fn restrict(v: &GridFunction, target: Grid) -> Result<GridFunction> {
    let n = target.n_points();
    if v.n_points() < n {
        return Err(Error::shape("restrict", v.shape_string(), n));
    }
    let big = v.n_points();
    let mut values = Vec::with_capacity(v.channels * n);
    for c in 0..v.channels {
        values.extend_from_slice(&v.values[c * big..c * big + n]);
    }
    GridFunction::from_values(target, v.channels, values)
}
