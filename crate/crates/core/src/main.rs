use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use paircausal::simlab::{run_monte_carlo, write_outputs, ScenarioSpec};
use paircausal::validation::{dense_reference_suite, run_all, Mutation};
use paircausal::workflow::{read_dataset, run_estimates, write_estimates, AnalysisConfig};
use paircausal::{Error, Result};

#[derive(Parser)]
#[command(name = "paircausal", version, about = "Pairwise-contrast causal effect estimation")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the seed in the config or scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the configured estimators to a CSV dataset.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in equivalence, enumeration, dense-reference and proposition suites.
    Validate {
        /// Flip the sign of the CTW correction to check that the dense reference catches it.
        #[arg(long, hide = true)]
        mutate: bool,
    },
}

fn estimate(data: PathBuf, config: PathBuf, out: PathBuf, seed: Option<u64>) -> Result<bool> {
    let mut config = AnalysisConfig::from_path(&config)?;
    if seed.is_some() {
        config.seed = seed;
    }
    let ds = read_dataset(&data, &config)?;
    let report = run_estimates(&ds, &config)?;
    write_estimates(&report, &out)?;
    eprintln!("wrote {} rows to {}", report.rows.len(), out.join("estimates.csv").display());
    Ok(true)
}

fn simulate(scenario: PathBuf, out: PathBuf, seed: Option<u64>) -> Result<bool> {
    let text = std::fs::read_to_string(&scenario).map_err(|e| Error::Io(format!("{}: {e}", scenario.display())))?;
    let mut spec: ScenarioSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", scenario.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let run = run_monte_carlo(&spec)?;
    write_outputs(&run, &out)?;
    eprintln!(
        "study {} N={} replicates={}: {} failures, {} redraws, {:.1} s",
        spec.study,
        spec.n,
        spec.replicates,
        run.total_failures(),
        run.total_redraws(),
        run.seconds
    );
    Ok(true)
}

fn validate(seed: u64, mutate: bool) -> Result<bool> {
    let suites = if mutate {
        vec![dense_reference_suite(seed.wrapping_add(2), 50, Mutation::FlipCorrectionSign)?]
    } else {
        run_all(seed)?
    };
    let mut ok = true;
    for s in &suites {
        let status = if s.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<16} cases={:<5} skipped={:<4} max_error={:.3e} {:.2}s",
            s.name, s.cases, s.skipped, s.max_error, s.seconds
        );
        for f in s.failures.iter().take(5) {
            println!("    {f}");
        }
        ok &= s.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Estimate { data, config, out } => estimate(data, config, out, cli.seed),
        Command::Simulate { scenario, out } => simulate(scenario, out, cli.seed),
        Command::Validate { mutate } => validate(cli.seed.unwrap_or(0), mutate),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
