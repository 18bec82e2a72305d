//! Build an SNO, check exact invertibility and the symplectic defect.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sno::model::{Model, ModelSpec, PhaseState, SnoConfig};
use sno::params::Parametric;
use sno::spectral::Grid;

fn main() -> sno::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = SnoConfig { stages: 2, width: 8, k_max: 12, hidden: vec![16], ..Default::default() };
    let mut model = Model::init(&ModelSpec::Sno(cfg), &mut rng)?;

    // perturb every parameter so the shears are not the identity
    let noisy: Vec<f64> = model.to_store().values.iter().map(|v| v + 0.05 * (v * 7.0).sin() + 0.01).collect();
    model.load_flat(&noisy)?;
    println!("parameters: {}", model.param_count());

    let grid = Grid::dirichlet(128)?;
    let s = PhaseState::random(grid, 1, 1.0, &mut rng);
    let out = model.forward(&s)?;
    let back = model.inverse(&out)?;
    println!("‖Φ(s) - s‖ / ‖s‖       = {:.3e}", out.axpy(-1.0, &s)?.norm() / s.norm());
    println!("‖Φ⁻¹(Φ(s)) - s‖ / ‖s‖  = {:.3e}", back.axpy(-1.0, &s)?.norm() / s.norm());
    println!("symplectic defect       = {:.3e}", model.symplectic_defect(&s, 8, &mut rng)?);
    Ok(())
}
