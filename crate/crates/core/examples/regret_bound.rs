// Regret accounting: the hindsight oracle for one round, the closed-form
// bound for a few learning rates, and a measured run against its bound.

use e3cs::flcore::Simulation;
use e3cs::metrics::{bound_series, expected_increment, hindsight_optimal, regret_bound};
use e3cs::rng::{stream, Domain};
use e3cs::sampling::Sampler;
use e3cs::selection::{tuned_eta, FairnessSchedule, PolicyKind};
use e3cs::volatility::{gen_population, success_rates, PopulationSpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // One round: 6 clients, 2 seats, quota 0.1. The oracle puts as much mass
    // as it can on the clients that turned out to succeed.
    let outcomes = [false, true, false, true, true, false];
    let best = hindsight_optimal(&outcomes, 2, 0.1)?;
    println!("oracle allocation {best:?}, expected participants {:.2}", expected_increment(&best, &outcomes));

    let (k, clients, rounds) = (20, 100, 1000);
    let schedule = FairnessSchedule::scaled(0.5, k, clients);
    let tuned = tuned_eta(k, clients, &schedule, rounds).expect("positive residual budget");
    for eta in [0.05, tuned, 0.5] {
        println!("eta {eta:.4}: bound {:.1}", regret_bound(rounds, clients, k, &schedule, Some(eta))?);
    }
    println!("minimised bound {:.1}", regret_bound(rounds, clients, k, &schedule, None)?);

    let seed = 11;
    let profiles = gen_population(&PopulationSpec::default(), &mut stream(seed, Domain::Population, 0, 0))?;
    let kind = PolicyKind::E3cs { eta: tuned, schedule };
    let policy = kind.build(k, clients, Sampler::ExactMarginal, &success_rates(&profiles))?;
    let mut sim = Simulation::new(seed, k, profiles, None, policy)?;
    sim.run(rounds)?;
    let regret = sim.ledger().regret_series();
    let bound = bound_series(rounds, clients, k, &schedule, tuned)?;
    for t in [10, 100, 500, 1000] {
        println!("after {t:>4} rounds: regret {:>7.1}, bound {:>7.1}", regret[t - 1], bound[t - 1]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
