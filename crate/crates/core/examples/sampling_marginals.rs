// Drawing exactly `k` clients whose inclusion frequencies match the
// allocated probabilities.

use e3cs::rng::{stream, Domain};
use e3cs::sampling::Sampler;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let probs = [1.0, 0.9, 0.5, 0.25, 0.15, 0.1, 0.1];
    let k = 3;
    let draws = 20_000;
    let mut rng = stream(7, Domain::Selection, 0, 0);

    for sampler in [Sampler::ExactMarginal, Sampler::Sequential] {
        let mut counts = vec![0usize; probs.len()];
        for _ in 0..draws {
            let set = sampler.sample(&probs, k, &mut rng)?;
            assert_eq!(set.len(), k);
            for &i in set.members() {
                counts[i] += 1;
            }
        }
        println!("{sampler:?}");
        for (i, (&p, &c)) in probs.iter().zip(&counts).enumerate() {
            println!("  client {i}: target {p:.3}, observed {:.3}", c as f64 / draws as f64);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
