//! Roll a trained SNO forward against the reference solver, then run it backward.

use sno::data::{generate, sample_input, GenConfig};
use sno::eval::{backward_rollout, rollout, summary_steps, RolloutReport};
use sno::model::{ModelSpec, SnoConfig};
use sno::pde::{SystemKind, SystemSpec};
use sno::rk45::reference_trajectory;
use sno::train::{train, TrainConfig};

fn main() -> sno::Result<()> {
    let sys = SystemSpec::dirichlet(SystemKind::Wave, 0.05, 64)?;
    let data = generate(&GenConfig::new(sys.clone(), 0.1, 400, 7)?)?;
    let model = ModelSpec::Sno(SnoConfig { stages: 2, width: 8, depth: 2, k_max: 12, hidden: vec![16], ..Default::default() });
    let cfg = TrainConfig { model, epochs: 5, batch_size: 16, learning_rate: 3e-3, seed: 1, ..Default::default() };
    let model = train(&cfg, &data)?.model;

    let steps = 300;
    let u0 = sample_input(&GenConfig::new(sys.clone(), 0.1, 1, 1000)?, 0);
    let truth = reference_trajectory(&sys, &u0, 0.1, 1e-8, steps)?;
    let pred = rollout(&model, &u0, steps);
    let report = RolloutReport::compare(&sys, &pred, &truth)?;
    println!("step  rel_l2    rel_energy");
    for k in summary_steps(steps) {
        let r = report.at(k).unwrap();
        println!("{k:>4}  {:.3e} {:.3e}", r.rel_l2_state, r.rel_energy_err);
    }

    let back = backward_rollout(&model, pred.last(), steps)?;
    let err = back.last().axpy(-1.0, &u0)?.norm() / u0.norm();
    println!("forward {steps} then backward {steps}: relative reconstruction error {err:.2e}");
    Ok(())
}
