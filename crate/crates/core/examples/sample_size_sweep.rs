//! Sweep the outer sample size through the harness and write `sweep.csv`.
//!
//! `cargo run --release --example sample_size_sweep [out_dir]`

use std::path::{Path, PathBuf};

use metarep::harness::{parse_config, sweep, RunOptions, SweepAxis};

const CONFIG: &str = r#"{
  "env": {"d": 20, "k": 3, "noise_std": 0.1},
  "hp": {"algo": "FO_ANIL", "mode": "FINITE", "alpha": 0.1, "beta": 0.2, "n": 10,
         "m_in": 100, "m_out": 50, "iters": 400},
  "init": {"scheme": "NEAR_TRUTH"},
  "run": {"trials": 3, "master_seed": 4}
}"#;

fn main() -> metarep::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map_or_else(|| "out/sample_size_sweep".into(), PathBuf::from);
    let config = parse_config(CONFIG, Path::new("inline.json"))?;
    let opts = RunOptions {
        jobs: 1,
        output_dir: Some(out),
    };
    let result = sweep(&config, SweepAxis::MOut, &[25.0, 100.0, 400.0], &opts)?;
    for row in &result.rows {
        println!(
            "m_out {:>4}: plateau {:.3e}",
            row.value,
            row.plateau.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {}", result.output_dir.join("sweep.csv").display());
    Ok(())
}
