//! Run a shipped config end to end and plot it.
//!
//! `cargo run --release --example run_config [config.json] [out_dir]`

use std::path::PathBuf;

use metarep::harness::{emit_plot, load_config, run_experiment, RunOptions};

fn main() -> metarep::Result<()> {
    let mut args = std::env::args().skip(1);
    let path: PathBuf = args.next().map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/zero_mean_exact_anil.json"),
        PathBuf::from,
    );
    let config = load_config(&path)?;
    let opts = RunOptions {
        jobs: 1,
        output_dir: args.next().map(PathBuf::from),
    };
    let out = run_experiment(&config, &opts)?;
    let s = &out.summary;
    println!(
        "{}: {} trials, {} diverged",
        path.display(),
        config.run.trials,
        s.diverged
    );
    println!("final dist {:?} +- {:?}", s.final_dist_mean, s.final_dist_std);
    println!("tail slope {:?}, R^2 {:?}", s.log_slope, s.r_squared);

    let svg = out.output_dir.join("dist.svg");
    emit_plot(out.output_dir.join("trajectory.csv"), &svg)?;
    println!("wrote {} and {}", out.output_dir.display(), svg.display());
    Ok(())
}
