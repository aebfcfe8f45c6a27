// Synthetic data split across clients, with one client's shard written to
// CSV.

use e3cs::datagen::{gen_synthetic, partition, PartitionMode, PartitionSpec};
use e3cs::rng::{stream, Domain};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 5;
    let data = gen_synthetic(10, 32, 5000, 4.0, &mut stream(seed, Domain::Dataset, 0, 0))?;
    let spec = PartitionSpec {
        mode: PartitionMode::NonIid { primary_fraction: 0.8 },
        per_client_size: 200,
        test_fraction: 0.2,
    };
    let shards = partition(&data, 20, &spec, &mut stream(seed, Domain::Partition, 0, 0))?;

    for (i, shard) in shards.iter().take(5).enumerate() {
        let primary = shard.primary_label.expect("non-iid shards have a primary label");
        let share = shard.train.iter().filter(|&&r| data.label(r) == primary).count() as f64 / shard.train.len() as f64;
        println!(
            "client {i}: {} train / {} test rows, label {primary} makes up {:.0}% of training",
            shard.train.len(),
            shard.test.len(),
            100.0 * share
        );
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("client0_train.csv");
    data.write_csv(&shards[0].train, &path)?;
    let text = std::fs::read_to_string(&path)?;
    println!("wrote {} lines to {}", text.lines().count(), path.display());
    println!("{}", text.lines().next().unwrap_or_default().chars().take(80).collect::<String>());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
