// How E3CS turns exponential weights into selection probabilities.
//
// A few heavy clients are capped at probability 1, everyone keeps the
// fairness quota, and the rest share the remaining mass in proportion to
// their weights.

use e3cs::selection::{prob_alloc_log, solve_alpha, ExpWeightState};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let k = 3;
    let sigma = 0.05;
    let weights = [40.0, 25.0, 1.0, 1.2, 0.8, 1.0, 0.5, 0.3, 2.0, 1.0];
    let state = ExpWeightState::from_weights(&weights)?;
    let alloc = prob_alloc_log(k, sigma, state.log_weights())?;

    println!("k = {k}, sigma = {sigma}");
    for (i, (w, p)) in weights.iter().zip(&alloc.probs).enumerate() {
        let capped = if alloc.overflow.contains(&i) { "  (capped)" } else { "" };
        println!("client {i}: weight {w:>5.1} -> p = {p:.4}{capped}");
    }
    let total: f64 = alloc.probs.iter().sum();
    println!("sum of probabilities = {total:.12}");
    assert!((total - k as f64).abs() < 1e-9);

    let alpha = solve_alpha(&weights, k, sigma)?;
    println!("threshold alpha = {alpha:.4}");

    // Scaling every weight leaves the allocation unchanged.
    let scaled = prob_alloc_log(k, sigma, state.scaled(1e6).log_weights())?;
    let drift = alloc.probs.iter().zip(&scaled.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max change after scaling weights by 1e6: {drift:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
