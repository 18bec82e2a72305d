//! Spectral differentiation of sin(2πx) and a Parseval check.

use num_complex::Complex64;
use sno::spectral::{apply_multiplier, dft_forward, dft_inverse, Grid, GridFunction, Multiplier};
use std::f64::consts::PI;

fn main() -> sno::Result<()> {
    let grid = Grid::periodic(64)?;
    let u = GridFunction::from_fn(grid, |x| (2.0 * PI * x).sin());

    // R(ξ) = 2πiξ
    let deriv = Multiplier::from_fn(1, 8, |xi| vec![Complex64::new(0.0, 2.0 * PI * xi as f64)])?;
    let du = dft_inverse(&apply_multiplier(&dft_forward(&u)?, &deriv)?)?;

    let err = du
        .values()
        .iter()
        .zip(grid.coordinates())
        .map(|(d, x)| (d - 2.0 * PI * (2.0 * PI * x).cos()).abs())
        .fold(0.0, f64::max);
    println!("max |D sin - 2π cos| = {err:.2e}");

    let coeffs = dft_forward(&u)?;
    let physical = sno::spectral::inner_product(&u, &u)?;
    println!("∫u² = {physical:.15}, Σ|û|² = {:.15}", coeffs.energy());
    Ok(())
}
