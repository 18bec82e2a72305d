//! Train a small SNO on wave pairs and print the metrics log.

use sno::data::{generate, GenConfig};
use sno::model::{ModelSpec, SnoConfig};
use sno::pde::{SystemKind, SystemSpec};
use sno::train::{one_step_relative_error, run_to_end, TrainConfig, Trainer, METRICS_HEADER};

fn main() -> sno::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let sys = SystemSpec::dirichlet(SystemKind::Wave, 0.05, 64)?;
    let data = generate(&GenConfig::new(sys, 0.1, 400, 7)?)?;

    let model = ModelSpec::Sno(SnoConfig { stages: 2, width: 8, depth: 2, k_max: 12, hidden: vec![16], ..Default::default() });
    let cfg = TrainConfig { model, epochs, batch_size: 16, learning_rate: 3e-3, seed: 1, ..Default::default() };
    let mut trainer = Trainer::new(cfg, &data)?;
    let val = trainer.validation_indices().to_vec();
    println!("identity one-step relative error {:.3e}", one_step_relative_error(trainer.model(), &data, &val)?);

    println!("{METRICS_HEADER}");
    let out = run_to_end(&mut trainer, |m, _| {
        println!("{}", m.csv_row());
        Ok(())
    })?;
    println!("trained one-step relative error {:.3e}", one_step_relative_error(&out.model, &data, &val)?);
    Ok(())
}
