//! Generate one-step wave pairs, save them and reload with a spot check.

use sno::data::{generate, Dataset, GenConfig};
use sno::pde::{SystemKind, SystemSpec};

fn main() -> sno::Result<()> {
    let sys = SystemSpec::dirichlet(SystemKind::Wave, 0.05, 128)?;
    let cfg = GenConfig::new(sys.clone(), 0.1, 500, 7)?;
    println!("CFL ratio {:.3}", sys.cfl_ratio(cfg.dt).unwrap());

    let data = generate(&cfg)?;
    let mut worst = 0.0_f64;
    for i in 0..data.len() {
        let (u, v) = data.pair(i);
        let h0 = sys.hamiltonian(&u)?;
        worst = worst.max((sys.hamiltonian(&v)? - h0).abs() / h0.abs());
    }
    println!("{} pairs, worst relative energy change per step {worst:.2e}", data.len());

    let path = std::env::temp_dir().join("sno_example_wave.bin");
    data.save(&path)?;
    let back = Dataset::load(&path)?;
    println!("reloaded {} pairs from {}, identical: {}", back.len(), path.display(), back.raw() == data.raw());
    std::fs::remove_file(path)?;
    Ok(())
}
