//! Seeded multi-trial runs and their CSV/JSON artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::algorithms::{run_trajectory, RunResult};
use crate::env::DiversityStats;
use crate::error::{Error, Result};
use crate::metrics::{
    check_hypotheses_with, fit_log_linear_rate_at, principal_angle_dist, Hypothesis, HypothesisReport,
    TrajectoryRecord,
};
use crate::model::{init_model, HyperParams};
use crate::rng::{NormalStream, StreamTag};

pub const TRAJECTORY_HEADER: &str = "t,trial,dist,delta_norm,w_norm,psi_min,psi_max,bperp_norm,loss";
pub const MEAN_HEADER: &str = "t,dist_mean,dist_std,count";

/// Fraction of the recorded mean curve used for the log-linear rate fit.
pub const RATE_TAIL_FRACTION: f64 = 0.5;

/// Execution settings that are not part of the experiment itself.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Width of the trial work pool.
    pub jobs: usize,
    /// Overrides `run.output_dir`.
    pub output_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            output_dir: None,
        }
    }
}

impl RunOptions {
    pub fn output_dir(&self, config: &ExperimentConfig) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| config.run.output_dir.clone())
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub dist0: f64,
    /// Worst-case head diversity seen over the run.
    pub task_stats: DiversityStats,
    pub run: RunResult,
    /// Present when `checks.hypcheck` is enabled.
    pub hypotheses: Option<HypothesisReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSummary {
    pub first_violation: Option<usize>,
    pub min_margin: Option<f64>,
}

/// Contents of `summary.json`. Statistics over an empty set are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_dist_mean: Option<f64>,
    pub final_dist_std: Option<f64>,
    pub diverged: usize,
    pub log_slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub hyp_first_violation: Option<BTreeMap<String, HypothesisSummary>>,
}

/// Per-iteration statistics of `dist` over non-divergent trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanRow {
    pub t: usize,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials: Vec<TrialOutcome>,
    pub means: Vec<MeanRow>,
    pub summary: Summary,
    pub output_dir: PathBuf,
}

/// Iterations recorded by a run of `iters` steps.
pub fn record_grid(iters: usize, record_every: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = (0..=iters).step_by(record_every.max(1)).collect();
    if ts.last() != Some(&iters) {
        ts.push(iters);
    }
    ts
}

/// One trial on its own substreams of `run.master_seed`.
pub fn run_trial(config: &ExperimentConfig, hp: &HyperParams, trial: usize) -> Result<TrialOutcome> {
    let seed = config.run.master_seed;
    let index = trial as u64;
    let env = config.environment(&mut NormalStream::substream(seed, index, StreamTag::Environment))?;
    let init = init_model(
        &env,
        hp.alpha,
        config.init.scheme(),
        &mut NormalStream::substream(seed, index, StreamTag::Init),
    )?;
    let dist0 = principal_angle_dist(&init.rep, env.complement())?;
    let mut tasks = NormalStream::substream(seed, index, StreamTag::Tasks);
    let run = run_trajectory(&env, hp, init, &mut tasks, config.run.record_every)?;
    let task_stats = run
        .trajectory
        .last()
        .map(|r| r.task_stats)
        .expect("a run records its initial state");
    let hypotheses = config.checks.hypcheck.then(|| {
        check_hypotheses_with(
            &run.trajectory,
            hp,
            &task_stats,
            dist0,
            config.checks.hyp_constant_c_a1,
        )
    });
    Ok(TrialOutcome {
        trial,
        dist0,
        task_stats,
        run,
        hypotheses,
    })
}

/// All trials, run on a pool of `jobs` threads and returned in trial order.
pub fn run_trials(config: &ExperimentConfig, jobs: usize) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    let hp = config.hyper_params();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::validation("jobs", e.to_string()))?;
    pool.install(|| {
        (0..config.run.trials)
            .into_par_iter()
            .map(|trial| run_trial(config, &hp, trial))
            .collect()
    })
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// `trajectory.csv`: every trial on the same grid, diverged trials padded
/// with `NaN` after their last record.
pub fn trajectory_csv(trials: &[TrialOutcome], grid: &[usize]) -> String {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for outcome in trials {
        let by_t: BTreeMap<usize, &TrajectoryRecord> =
            outcome.run.trajectory.iter().map(|r| (r.iter, r)).collect();
        for &t in grid {
            let _ = write!(out, "{t},{}", outcome.trial);
            match by_t.get(&t) {
                Some(r) => {
                    for v in [
                        r.dist,
                        r.delta_norm,
                        r.w_norm,
                        r.psi_min,
                        r.psi_max,
                        r.bperp_norm,
                        r.loss,
                    ] {
                        out.push(',');
                        out.push_str(&fmt_f(v));
                    }
                }
                None => out.push_str(&",NaN".repeat(7)),
            }
            out.push('\n');
        }
    }
    out
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Mean and population standard deviation of `dist` at each grid point over
/// the trials that never diverged.
pub fn mean_rows(trials: &[TrialOutcome], grid: &[usize]) -> Vec<MeanRow> {
    let healthy: Vec<BTreeMap<usize, f64>> = trials
        .iter()
        .filter(|o| !o.run.diverged)
        .map(|o| o.run.trajectory.iter().map(|r| (r.iter, r.dist)).collect())
        .collect();
    grid.iter()
        .map(|&t| {
            let values: Vec<f64> = healthy.iter().filter_map(|m| m.get(&t).copied()).collect();
            let (mean, std) = mean_std(&values).unwrap_or((f64::NAN, f64::NAN));
            MeanRow {
                t,
                mean,
                std,
                count: values.len(),
            }
        })
        .collect()
}

pub fn mean_csv(rows: &[MeanRow]) -> String {
    let mut out = String::new();
    out.push_str(MEAN_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, fmt_f(r.mean), fmt_f(r.std), r.count);
    }
    out
}

fn hypothesis_summary(trials: &[TrialOutcome]) -> Option<BTreeMap<String, HypothesisSummary>> {
    let reports: Vec<&HypothesisReport> = trials.iter().filter_map(|o| o.hypotheses.as_ref()).collect();
    if reports.is_empty() {
        return None;
    }
    let min_opt = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    };
    let mut out = BTreeMap::new();
    for h in Hypothesis::ALL {
        let first_violation = reports.iter().filter_map(|r| r.first_violation(h)).min();
        let min_margin = reports.iter().map(|r| r.min_margin(h)).fold(None, min_opt);
        out.insert(
            h.label().to_string(),
            HypothesisSummary {
                first_violation,
                min_margin,
            },
        );
    }
    Some(out)
}

pub fn summarize(trials: &[TrialOutcome], means: &[MeanRow]) -> Summary {
    let finals: Vec<f64> = trials
        .iter()
        .filter(|o| !o.run.diverged)
        .filter_map(|o| o.run.trajectory.last().map(|r| r.dist))
        .collect();
    let stats = mean_std(&finals);
    let ts: Vec<f64> = means.iter().map(|r| r.t as f64).collect();
    let values: Vec<f64> = means.iter().map(|r| r.mean).collect();
    let fit = fit_log_linear_rate_at(&ts, &values, RATE_TAIL_FRACTION).ok();
    Summary {
        final_dist_mean: stats.map(|s| s.0),
        final_dist_std: stats.map(|s| s.1),
        diverged: trials.iter().filter(|o| o.run.diverged).count(),
        log_slope: fit.map(|f| f.slope),
        r_squared: fit.map(|f| f.r_squared),
        hyp_first_violation: hypothesis_summary(trials),
    }
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary serializes");
    s.push('\n');
    s
}

/// Run every trial and write `trajectory.csv`, `mean.csv` and
/// `summary.json` into the output directory.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let trials = run_trials(config, opts.jobs)?;
    let grid = record_grid(config.hp.iters, config.run.record_every);
    let means = mean_rows(&trials, &grid);
    let summary = summarize(&trials, &means);

    let dir = opts.output_dir(config);
    std::fs::create_dir_all(&dir)?;
    write(&dir, "trajectory.csv", &trajectory_csv(&trials, &grid))?;
    write(&dir, "mean.csv", &mean_csv(&means))?;
    write(&dir, "summary.json", &summary_json(&summary))?;
    Ok(ExperimentOutput {
        trials,
        means,
        summary,
        output_dir: dir,
    })
}

pub(crate) fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::write(dir.join(name), contents)?;
    Ok(())
}
