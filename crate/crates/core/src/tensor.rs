//! Dense row-major arrays and the numeric kernels shared by the eager model
//! code and the differentiation tape.
//!
//! Fields are `channels × points`; truncated spectra are `channels × modes`
//! holding frequencies `0..modes` (negative frequencies are implied by
//! Hermitian symmetry).

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::TAU;
use std::rc::Rc;

use num_complex::Complex64;

use crate::spectral::Multiplier;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "Mat::from_vec length");
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn dot(&self, other: &Mat) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    pub fn scale(&self, alpha: f64) -> Mat {
        Mat::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|v| alpha * v).collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn add_assign(&mut self, other: &CMat) {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// `cos(2πk/n)`, `sin(2πk/n)` for `k < n`.
struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

thread_local! {
    static TWIDDLES: RefCell<HashMap<usize, Rc<Twiddles>>> = RefCell::new(HashMap::new());
}

fn twiddles(n: usize) -> Rc<Twiddles> {
    TWIDDLES.with(|cache| {
        cache
            .borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let (cos, sin) = (0..n)
                    .map(|k| {
                        let a = TAU * k as f64 / n as f64;
                        (a.cos(), a.sin())
                    })
                    .unzip();
                Rc::new(Twiddles { cos, sin })
            })
            .clone()
    })
}

/// Real-to-complex weight of mode `xi` when synthesizing a real field.
#[inline]
fn synthesis_weight(xi: usize, n: usize) -> f64 {
    if xi == 0 || 2 * xi == n {
        1.0
    } else {
        2.0
    }
}

/// `y[c, ξ] = (1/n) Σ_j x[c, j] e^{-2πiξj/n}` for `ξ < modes`.
pub fn dft_truncated(x: &Mat, modes: usize) -> CMat {
    let n = x.cols;
    let tw = twiddles(n);
    let inv = 1.0 / n as f64;
    let mut out = CMat::zeros(x.rows, modes);
    for c in 0..x.rows {
        let row = x.row(c);
        for xi in 0..modes {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0;
            for &v in row {
                re += v * tw.cos[idx];
                im -= v * tw.sin[idx];
                idx += xi;
                if idx >= n {
                    idx -= n;
                }
            }
            out.data[c * modes + xi] = Complex64::new(re * inv, im * inv);
        }
    }
    out
}

/// Transpose of [`dft_truncated`] in real coordinates:
/// `x̄[c, j] = (1/n) Σ_ξ Re(ȳ[c, ξ] e^{2πiξj/n})`.
pub fn dft_truncated_transpose(ybar: &CMat, n: usize) -> Mat {
    let tw = twiddles(n);
    let inv = 1.0 / n as f64;
    let modes = ybar.cols;
    let mut out = Mat::zeros(ybar.rows, n);
    for c in 0..ybar.rows {
        let dst = &mut out.data[c * n..(c + 1) * n];
        for xi in 0..modes {
            let g = ybar.data[c * modes + xi];
            let mut idx = 0;
            for d in dst.iter_mut() {
                *d += g.re * tw.cos[idx] - g.im * tw.sin[idx];
                idx += xi;
                if idx >= n {
                    idx -= n;
                }
            }
        }
        dst.iter_mut().for_each(|d| *d *= inv);
    }
    out
}

/// Real field from the truncated half spectrum:
/// `x[c, j] = Σ_ξ w_ξ Re(y[c, ξ] e^{2πiξj/n})` with `w_0 = w_{n/2} = 1`, else 2.
pub fn idft_truncated(y: &CMat, n: usize) -> Mat {
    let tw = twiddles(n);
    let modes = y.cols;
    let mut out = Mat::zeros(y.rows, n);
    for c in 0..y.rows {
        let dst = &mut out.data[c * n..(c + 1) * n];
        for xi in 0..modes {
            let w = synthesis_weight(xi, n);
            let g = y.data[c * modes + xi] * w;
            let mut idx = 0;
            for d in dst.iter_mut() {
                *d += g.re * tw.cos[idx] - g.im * tw.sin[idx];
                idx += xi;
                if idx >= n {
                    idx -= n;
                }
            }
        }
    }
    out
}

/// Transpose of [`idft_truncated`]: `ȳ[c, ξ] = w_ξ Σ_j x̄[c, j] e^{-2πiξj/n}`.
pub fn idft_truncated_transpose(xbar: &Mat, modes: usize) -> CMat {
    let n = xbar.cols;
    let mut out = dft_truncated(xbar, modes);
    for c in 0..out.rows {
        for xi in 0..modes {
            out.data[c * modes + xi] *= synthesis_weight(xi, n) * n as f64;
        }
    }
    out
}

/// `y = A x` or `y = Aᵀ x` for a channel matrix `A`.
pub fn matmul(a: &Mat, x: &Mat, transpose: bool) -> Mat {
    let (out_rows, inner) = if transpose {
        (a.cols, a.rows)
    } else {
        (a.rows, a.cols)
    };
    assert_eq!(inner, x.rows, "matmul inner dimension");
    let n = x.cols;
    let mut out = Mat::zeros(out_rows, n);
    for i in 0..out_rows {
        let dst = &mut out.data[i * n..(i + 1) * n];
        for k in 0..inner {
            let aik = if transpose {
                a.data[k * a.cols + i]
            } else {
                a.data[i * a.cols + k]
            };
            if aik == 0.0 {
                continue;
            }
            let src = &x.data[k * n..(k + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += aik * s;
            }
        }
    }
    out
}

/// Gradient of `⟨ȳ, A x⟩` (or `⟨ȳ, Aᵀx⟩`) with respect to `A`.
pub fn matmul_weight_grad(ybar: &Mat, x: &Mat, transpose: bool, a_rows: usize, a_cols: usize) -> Mat {
    let mut g = Mat::zeros(a_rows, a_cols);
    for r in 0..a_rows {
        for c in 0..a_cols {
            // non-transposed: dA[r,c] = Σ_j ȳ[r,j] x[c,j]; transposed: Σ_j x[r,j] ȳ[c,j]
            let (left, right) = if transpose {
                (x.row(r), ybar.row(c))
            } else {
                (ybar.row(r), x.row(c))
            };
            g.data[r * a_cols + c] = left.iter().zip(right).map(|(p, q)| p * q).sum();
        }
    }
    g
}

/// Per-frequency `y_ξ = R(ξ) x_ξ` (or `R(ξ)* x_ξ`) on a truncated spectrum.
///
/// `weights` uses the packed [`Multiplier`] layout for `modes - 1 = k_max`.
pub fn spectral_mul(weights: &[f64], x: &CMat, adjoint: bool) -> CMat {
    let m = x.rows;
    let modes = x.cols;
    let mut out = CMat::zeros(m, modes);
    for xi in 0..modes {
        let re = Multiplier::re_offset(m, xi);
        let im = if xi == 0 { None } else { Some(Multiplier::im_offset(m, xi)) };
        for a in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for b in 0..m {
                // entry of R(ξ) or R(ξ)* at (a, b)
                let (i, j) = if adjoint { (b, a) } else { (a, b) };
                let r_re = weights[re + i * m + j];
                let r_im = im.map_or(0.0, |o| weights[o + i * m + j]);
                let r = if adjoint {
                    Complex64::new(r_re, -r_im)
                } else {
                    Complex64::new(r_re, r_im)
                };
                acc += r * x.data[b * modes + xi];
            }
            out.data[a * modes + xi] = acc;
        }
    }
    out
}

/// Gradient of a real loss with respect to the packed multiplier weights,
/// given `ȳ` (as `∂L/∂Re + i ∂L/∂Im`) and the input spectrum `x`.
pub fn spectral_mul_weight_grad(ybar: &CMat, x: &CMat, adjoint: bool) -> Vec<f64> {
    let m = x.rows;
    let modes = x.cols;
    let mut g = vec![0.0; Multiplier::param_len(m, modes - 1)];
    for xi in 0..modes {
        let re = Multiplier::re_offset(m, xi);
        for a in 0..m {
            for b in 0..m {
                // y_a = Σ_b R_ab x_b      -> dR_ab = ȳ_a conj(x_b)
                // y_a = Σ_b conj(R_ba) x_b -> dR_ba = conj(ȳ_a) x_b
                let (i, j, d) = if adjoint {
                    (b, a, ybar.data[a * modes + xi].conj() * x.data[b * modes + xi])
                } else {
                    (a, b, ybar.data[a * modes + xi] * x.data[b * modes + xi].conj())
                };
                g[re + i * m + j] += d.re;
                if xi > 0 {
                    g[Multiplier::im_offset(m, xi) + i * m + j] += d.im;
                }
            }
        }
    }
    g
}

#[inline]
pub fn tanh_prime(a: f64) -> f64 {
    let t = a.tanh();
    1.0 - t * t
}

#[inline]
pub fn tanh_second(a: f64) -> f64 {
    let t = a.tanh();
    -2.0 * t * (1.0 - t * t)
}

#[inline]
pub fn tanh_third(a: f64) -> f64 {
    let t = a.tanh();
    let s = 1.0 - t * t;
    -2.0 * s * (s - 2.0 * t * t)
}
