// Federated training of a softmax-regression model with E3CS picking the
// clients each round.

use e3cs::harness::{build_environment, run_single, ExperimentConfig, Mode, PolicySpec};
use e3cs::volatility::PopulationSpec;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig {
        mode: Mode::Training,
        k: 5,
        rounds: Some(60),
        population: PopulationSpec {
            clients: 20,
            data_size: 100,
            ..PopulationSpec::default()
        },
        ..ExperimentConfig::default()
    };
    cfg.partition.per_client_size = 100;
    cfg.dataset.size = 4000;
    cfg.validate()?;

    let env = build_environment(&cfg, 1)?;
    println!("accuracy thresholds {:.3?}", env.thresholds);
    let spec = PolicySpec::e3cs(0.5);
    let kind = spec.resolve(cfg.k, cfg.clients(), cfg.rounds(), cfg.eta)?;
    let out = run_single(&cfg, "E3CS-0.5", &kind, &env)?;

    for row in out.rows.iter().filter(|r| r.round % 10 == 0) {
        println!(
            "round {:>3}: {} returned, accuracy {:.3}, loss {:.3}",
            row.round,
            row.effective_count,
            row.accuracy.unwrap_or(f64::NAN),
            row.loss.unwrap_or(f64::NAN)
        );
    }
    let s = &out.summary;
    println!("final accuracy {:.3}, rounds to thresholds {:?}", s.final_accuracy.unwrap_or(f64::NAN), s.rounds_to_threshold);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
