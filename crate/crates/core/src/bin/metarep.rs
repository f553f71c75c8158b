use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metarep::harness::{self, ExperimentConfig, RunOptions, SweepAxis};
use metarep::Error;

/// Meta-learning representation experiments.
#[derive(Parser)]
#[command(name = "metarep", version)]
struct Cli {
    /// Overrides `run.master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trial pool width.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides `run.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials and write trajectory.csv, mean.csv and summary.json.
    Run { config: PathBuf },
    /// Compare closed-form outer gradients with finite differences.
    Gradcheck { config: PathBuf },
    /// Record one trajectory and evaluate the hypothesis margins.
    Hypcheck { config: PathBuf },
    /// Repeat the experiment over values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Plot a trajectory CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

enum Failure {
    Validation(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Validation(e)
    }
}

fn load(cli: &Cli, path: &PathBuf) -> Result<ExperimentConfig, Error> {
    let mut config = harness::load_config(path)?;
    if let Some(seed) = cli.seed {
        config.run.master_seed = seed;
    }
    Ok(config)
}

fn print_gradcheck(config: &ExperimentConfig) -> Result<(), Failure> {
    let report = harness::gradcheck(config)?;
    println!(
        "gradcheck {} {:?}: max rel err rep {:.3e}, head {:.3e} over {} points -> {}",
        report.algo,
        report.mode,
        report.max_rel_err_rep,
        report.max_rel_err_head,
        report.points,
        if report.pass { "PASS" } else { "FAIL" }
    );
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed for {}",
            report.algo
        )))
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let opts = RunOptions {
        jobs: cli.jobs,
        output_dir: cli.out.clone(),
    };
    match &cli.command {
        Command::Run { config } => {
            let config = load(cli, config)?;
            let out = harness::run_experiment(&config, &opts)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&out.summary).map_err(Error::from)?
            );
            println!("wrote {}", out.output_dir.display());
            if config.checks.gradcheck {
                print_gradcheck(&config)?;
            }
        }
        Command::Gradcheck { config } => print_gradcheck(&load(cli, config)?)?,
        Command::Hypcheck { config } => {
            let config = load(cli, config)?;
            let report = harness::hypcheck(&config, &opts)?;
            println!("dist0 {:.6}, rho {:?}", report.dist0, report.report.constants.rho);
            for (name, s) in report.summary() {
                println!(
                    "{name}: first violation {:?}, min margin {:?}",
                    s.first_violation, s.min_margin
                );
            }
            if let Some(t) = report.run.diverged_at {
                println!("diverged at t = {t}");
            }
            println!("wrote {}", report.output_dir.join("hypotheses.csv").display());
        }
        Command::Sweep { config, axis, values } => {
            let config = load(cli, config)?;
            let out = harness::sweep(&config, *axis, values, &opts)?;
            for row in &out.rows {
                match &row.error {
                    Some(e) => println!("{} = {}: error: {e}", axis.name(), row.value),
                    None => println!(
                        "{} = {}: final {:?}, plateau {:?}, diverged {}",
                        axis.name(),
                        row.value,
                        row.final_dist_mean,
                        row.plateau,
                        row.diverged
                    ),
                }
            }
            println!("wrote {}", out.output_dir.join("sweep.csv").display());
        }
        Command::Plot { csv, output } => {
            harness::emit_plot(csv, output)?;
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(2)
        }
    }
}
