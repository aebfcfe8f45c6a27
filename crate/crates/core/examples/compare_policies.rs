// A small multi-seed experiment written to disk, reloaded, and compared
// policy against policy with paired sign tests.

use e3cs::harness::{compare_policies, load_runs, run_experiment, ExperimentConfig, Mode, PolicySpec};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = ExperimentConfig {
        mode: Mode::Numerical,
        rounds: Some(400),
        seeds: vec![1, 2, 3, 4, 5, 6],
        out_dir: dir.path().to_path_buf(),
        policies: vec![PolicySpec::e3cs(0.0), PolicySpec::e3cs(0.8), PolicySpec::Random, PolicySpec::FedCs],
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&cfg)?;
    assert!(report.is_complete());
    for p in &report.summary.policies {
        println!("{:<10} success ratio {:.4}, regret {:>7.1}", p.policy, p.mean_success_ratio, p.mean_regret);
    }

    let runs = load_runs(dir.path())?;
    let cmp = compare_policies(&runs)?;
    for (a, b) in [("E3CS-0", "Random"), ("E3CS-0.8", "Random"), ("FedCS", "E3CS-0")] {
        let m = cmp.pair(a, b).and_then(|p| p.metric("success_ratio")).expect("pair present");
        println!(
            "{a} vs {b}: better on {} of {} seeds, sign-test p = {:.4}",
            m.sign.wins,
            m.differences.len(),
            m.sign.p_value
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
