//! A random self-adjoint Fourier operator: pairing defect and norm estimate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sno::safno::{safno_norm_estimate, SafnoOperator};
use sno::tensor::Mat;

fn main() -> sno::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (d, width, depth, k_max, n) = (1, 8, 3, 12, 128);
    let op = SafnoOperator::init(d, width, depth, k_max, &mut rng)?;

    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let a = Mat::from_vec(d, n, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let b = Mat::from_vec(d, n, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let lhs = op.apply_mat(&a)?.dot(&b);
        let rhs = a.dot(&op.apply_mat(&b)?);
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    println!("self-adjointness defect over 10 pairs: {worst:.2e}");

    let est = safno_norm_estimate(&op, n, 50, &mut rng)?;
    println!("‖G‖ ≈ {est:.6} (power iteration), structural bound {:.6}", op.norm_bound());
    Ok(())
}
