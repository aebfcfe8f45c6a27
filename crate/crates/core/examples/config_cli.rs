// Driving experiments from a TOML file through the command-line front end,
// exactly as the `e3cs` binary does.

use clap::Parser;
use e3cs::harness::cli::{execute, Cli};
use e3cs::harness::ExperimentConfig;

const CONFIG: &str = r#"
mode = "numerical"
k = 10
rounds = 200
seeds = [1, 2, 3]
eta = "tuned"

[population]
clients = 40

[[policies]]
kind = "e3cs"
fairness = 0.5

[[policies]]
kind = "e3cs"
fairness = "inc"

[[policies]]
kind = "random"
"#;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    // Emitting and re-parsing gives the same configuration back.
    assert_eq!(ExperimentConfig::parse(&cfg.emit()?)?, cfg);

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("experiment.toml");
    std::fs::write(&path, CONFIG)?;
    let out = dir.path().join("results");

    let args = ["e3cs", "run", path.to_str().unwrap(), "--seed-override", "4,5", "--out", out.to_str().unwrap()];
    assert!(execute(Cli::try_parse_from(args)?)?);
    assert!(execute(Cli::try_parse_from(["e3cs", "compare", out.to_str().unwrap()])?)?);

    let mut files: Vec<_> = std::fs::read_dir(out.join("runs"))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("run files: {files:?}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
