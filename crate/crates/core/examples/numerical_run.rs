// A numerical run: selection and dropouts only, no model.
//
// Builds the default 100-client population, runs E3CS with a quarter of the
// uniform quota, and reports participation and regret against the
// hindsight optimum.

use e3cs::flcore::Simulation;
use e3cs::metrics::summarize;
use e3cs::rng::{stream, Domain};
use e3cs::sampling::Sampler;
use e3cs::selection::{FairnessSchedule, PolicyKind};
use e3cs::volatility::{gen_population, success_rates, PopulationSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 3;
    let k = 20;
    let rounds = 300;
    let profiles = gen_population(&PopulationSpec::default(), &mut stream(seed, Domain::Population, 0, 0))?;
    let clients = profiles.len();
    let kind = PolicyKind::E3cs {
        eta: 0.5,
        schedule: FairnessSchedule::scaled(0.25, k, clients),
    };
    let policy = kind.build(k, clients, Sampler::ExactMarginal, &success_rates(&profiles))?;
    let classes: Vec<usize> = profiles.iter().map(|p| p.class).collect();
    let mut sim = Simulation::new(seed, k, profiles, None, policy)?;
    let records = sim.run(rounds)?;

    let successes: usize = records.iter().map(|r| r.effective_count).sum();
    println!("{} over {rounds} rounds", kind.label(k, clients));
    println!("success ratio {:.4}", successes as f64 / (k * rounds) as f64);
    println!("regret {:.2}", sim.ledger().regret());

    let summary = summarize(&records, k, &classes)?;
    for (c, q) in summary.class_quartiles.iter().enumerate() {
        println!("class {c}: selections per client, quartiles {:.0} / {:.0} / {:.0}", q.q1, q.median, q.q3);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
