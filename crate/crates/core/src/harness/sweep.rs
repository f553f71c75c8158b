//! One-axis parameter sweeps.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::experiment::{mean_rows, record_grid, run_trials, summarize, write, RunOptions, TrialOutcome};
use crate::error::{Error, Result};
use crate::model::Mode;

pub const SWEEP_HEADER: &str = "value,final_dist_mean,plateau,diverged,error";

/// Trailing fraction of the horizon averaged into the plateau estimate.
pub const PLATEAU_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepAxis {
    MIn,
    MOut,
    N,
    Beta,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::MIn => "M_IN",
            SweepAxis::MOut => "M_OUT",
            SweepAxis::N => "N",
            SweepAxis::Beta => "BETA",
        }
    }

    fn is_sample_size(self) -> bool {
        matches!(self, SweepAxis::MIn | SweepAxis::MOut)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "M_IN" => Ok(SweepAxis::MIn),
            "M_OUT" => Ok(SweepAxis::MOut),
            "N" => Ok(SweepAxis::N),
            "BETA" => Ok(SweepAxis::Beta),
            _ => Err(Error::validation("axis", "expected one of M_IN, M_OUT, N, BETA")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub final_dist_mean: Option<f64>,
    pub plateau: Option<f64>,
    pub diverged: usize,
    /// Set when the cell failed; the sweep carries on.
    pub error: Option<String>,
}

/// Mean of `dist` over recorded iterations `t >= (1 - PLATEAU_FRACTION) T`
/// and over non-divergent trials.
pub fn plateau(trials: &[TrialOutcome], iters: usize) -> Option<f64> {
    let start = iters as f64 * (1.0 - PLATEAU_FRACTION);
    let values: Vec<f64> = trials
        .iter()
        .filter(|o| !o.run.diverged)
        .flat_map(|o| o.run.trajectory.iter())
        .filter(|r| r.iter as f64 >= start)
        .map(|r| r.dist)
        .collect();
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// The config with `axis` set to `value`.
pub fn apply_axis(config: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    let count = || -> Result<usize> {
        if value >= 1.0 && value.fract() == 0.0 && value < u32::MAX as f64 {
            Ok(value as usize)
        } else {
            Err(Error::validation(
                axis.name(),
                format!("{value} is not a positive integer"),
            ))
        }
    };
    match axis {
        SweepAxis::MIn => c.hp.m_in = Some(count()?),
        SweepAxis::MOut => c.hp.m_out = Some(count()?),
        SweepAxis::N => c.hp.n = count()?,
        SweepAxis::Beta => c.hp.beta = value,
    }
    c.validate()?;
    Ok(c)
}

fn run_cell(config: &ExperimentConfig, axis: SweepAxis, value: f64, jobs: usize) -> SweepRow {
    let outcome = apply_axis(config, axis, value).and_then(|c| {
        let trials = run_trials(&c, jobs)?;
        let means = mean_rows(&trials, &record_grid(c.hp.iters, c.run.record_every));
        Ok((summarize(&trials, &means), plateau(&trials, c.hp.iters)))
    });
    match outcome {
        Ok((summary, plateau)) => SweepRow {
            value,
            final_dist_mean: summary.final_dist_mean,
            plateau,
            diverged: summary.diverged,
            error: None,
        },
        Err(e) => SweepRow {
            value,
            final_dist_mean: None,
            plateau: None,
            diverged: 0,
            error: Some(e.to_string()),
        },
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let num = |v: Option<f64>| format!("{:.16e}", v.unwrap_or(f64::NAN));
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.value,
            num(r.final_dist_mean),
            num(r.plateau),
            r.diverged,
            error
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub output_dir: PathBuf,
}

/// Run the experiment once per value and write `sweep.csv`.
pub fn sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    opts: &RunOptions,
) -> Result<SweepOutput> {
    config.validate()?;
    if values.is_empty() {
        return Err(Error::validation("values", "need at least one value"));
    }
    if axis.is_sample_size() && config.hp.mode != Mode::Finite {
        return Err(Error::validation(
            "mode",
            format!("sweeping {} needs FINITE mode", axis.name()),
        ));
    }
    let rows: Vec<SweepRow> = values
        .iter()
        .map(|&v| run_cell(config, axis, v, opts.jobs))
        .collect();
    let dir = opts.output_dir(config);
    std::fs::create_dir_all(&dir)?;
    write(&dir, "sweep.csv", &sweep_csv(&rows))?;
    Ok(SweepOutput {
        axis,
        rows,
        output_dir: dir,
    })
}
