//! Finite-difference gradient check and hypothesis-margin report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::{run_trial, write, HypothesisSummary, RunOptions};
use crate::algorithms::objective::{meta_objective, task_outer_loss};
use crate::algorithms::{outer_gradient, OuterGradient, RunResult};
use crate::env::{attach_datasets, sample_task_batch, TaskBatch, TaskEnvironment};
use crate::error::{Error, Result};
use crate::metrics::{qr_orthonormalize, Hypothesis, HypothesisReport};
use crate::model::{Algo, HyperParams, Mode, ModelParams};
use crate::rng::{NormalStream, StreamTag};

pub const GRADCHECK_POINTS: usize = 20;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_MAX_D: usize = 10;
pub const GRADCHECK_MAX_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub algo: Algo,
    pub mode: Mode,
    pub points: usize,
    pub max_rel_err_rep: f64,
    pub max_rel_err_head: f64,
    pub pass: bool,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_rep.max(self.max_rel_err_head)
    }
}

/// `||a - b|| / max(||a||, ||b||)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    // Non-finite gradients never pass.
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return f64::INFINITY;
    }
    // Scaled so that huge entries do not overflow the squares.
    let norm = |v: &[f64]| {
        let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if m == 0.0 {
            0.0
        } else {
            m * v.iter().map(|x| (x / m).powi(2)).sum::<f64>().sqrt()
        }
    };
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central differences of `f` in every entry of `(B, w)`.
pub fn finite_difference(
    params: &ModelParams,
    h: f64,
    f: impl Fn(&ModelParams) -> Result<f64>,
) -> Result<OuterGradient> {
    let mut grad = OuterGradient::zeros(params.d(), params.k());
    let mut probe = params.clone();
    for idx in 0..params.rep.len() {
        let x = params.rep[idx];
        probe.rep[idx] = x + h;
        let up = f(&probe)?;
        probe.rep[idx] = x - h;
        let down = f(&probe)?;
        probe.rep[idx] = x;
        grad.rep[idx] = (up - down) / (2.0 * h);
    }
    for idx in 0..params.k() {
        let x = params.head[idx];
        probe.head[idx] = x + h;
        let up = f(&probe)?;
        probe.head[idx] = x - h;
        let down = f(&probe)?;
        probe.head[idx] = x;
        grad.head[idx] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Finite-difference reference for the outer gradient of `algo`.
///
/// Exact variants and average risk minimization differentiate their scalar
/// objective. First-order variants have none, so the reference is the
/// task-averaged gradient of the outer loss taken at each adapted point.
pub fn reference_gradient(
    algo: Algo,
    mode: Mode,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<OuterGradient> {
    match algo {
        Algo::FoAnil | Algo::FoMaml => {
            let (_, adapted) = outer_gradient(algo, mode, params, env, batch, alpha)?;
            let mut acc = OuterGradient::zeros(params.d(), params.k());
            for (i, task) in adapted.iter().enumerate() {
                let at = ModelParams {
                    rep: task.rep_adapted.clone().unwrap_or_else(|| params.rep.clone()),
                    head: task.head_adapted.clone(),
                };
                acc += finite_difference(&at, FD_STEP, |q| task_outer_loss(mode, q, env, batch, i))?;
            }
            Ok(acc / batch.len() as f64)
        }
        _ => finite_difference(params, FD_STEP, |q| {
            meta_objective(algo, mode, q, env, batch, alpha)
        }),
    }
}

/// A perturbed version of the standard initialization with a nonzero head,
/// so every term of the gradients is exercised.
fn random_point(env: &TaskEnvironment, alpha: f64, rng: &mut NormalStream) -> Result<ModelParams> {
    let (d, k) = (env.d(), env.k());
    let (q, _) = qr_orthonormalize(&rng.normal_matrix(d, k))?;
    let rep = q / alpha.max(1e-2).sqrt() + rng.normal_matrix(d, k) * 0.3;
    ModelParams::new(rep, rng.normal_vector(k) * 0.5)
}

/// Compare closed-form and finite-difference gradients at
/// [`GRADCHECK_POINTS`] random points drawn from the config's seed.
pub fn gradcheck(config: &ExperimentConfig) -> Result<GradcheckReport> {
    config.validate()?;
    gradcheck_with(config, &config.hyper_params())
}

/// [`gradcheck`] with explicit hyperparameters; `alpha = 0` is allowed.
pub fn gradcheck_with(config: &ExperimentConfig, hp: &HyperParams) -> Result<GradcheckReport> {
    if config.env.d > GRADCHECK_MAX_D {
        return Err(Error::validation(
            "env.d",
            format!("gradcheck needs d <= {GRADCHECK_MAX_D}"),
        ));
    }
    if config.env.k > GRADCHECK_MAX_K {
        return Err(Error::validation(
            "env.k",
            format!("gradcheck needs k <= {GRADCHECK_MAX_K}"),
        ));
    }
    let seed = config.run.master_seed;
    let mut err_rep: f64 = 0.0;
    let mut err_head: f64 = 0.0;
    for point in 0..GRADCHECK_POINTS {
        let mut rng = NormalStream::substream(seed, point as u64, StreamTag::Check);
        let env = config.environment(&mut rng)?;
        let params = random_point(&env, hp.alpha, &mut rng)?;
        let mut batch = sample_task_batch(&env, hp.n, &mut rng)?;
        if hp.mode == Mode::Finite {
            batch = attach_datasets(&env, batch, hp.m_in, hp.m_out, &mut rng)?;
        }
        let (analytic, _) = outer_gradient(hp.algo, hp.mode, &params, &env, &batch, hp.alpha)?;
        let numeric = reference_gradient(hp.algo, hp.mode, &params, &env, &batch, hp.alpha)?;
        err_rep = err_rep.max(relative_error(analytic.rep.as_slice(), numeric.rep.as_slice()));
        err_head = err_head.max(relative_error(analytic.head.as_slice(), numeric.head.as_slice()));
    }
    Ok(GradcheckReport {
        algo: hp.algo,
        mode: hp.mode,
        points: GRADCHECK_POINTS,
        max_rel_err_rep: err_rep,
        max_rel_err_head: err_head,
        pass: err_rep <= GRADCHECK_TOLERANCE && err_head <= GRADCHECK_TOLERANCE,
    })
}

#[derive(Debug, Clone)]
pub struct HypcheckReport {
    pub dist0: f64,
    pub report: HypothesisReport,
    pub run: RunResult,
    pub output_dir: PathBuf,
}

impl HypcheckReport {
    pub fn summary(&self) -> BTreeMap<String, HypothesisSummary> {
        Hypothesis::ALL
            .iter()
            .map(|&h| {
                (
                    h.label().to_string(),
                    HypothesisSummary {
                        first_violation: self.report.first_violation(h),
                        min_margin: self.report.min_margin(h),
                    },
                )
            })
            .collect()
    }
}

#[derive(Serialize)]
struct HypcheckJson {
    dist0: f64,
    rho: Option<f64>,
    e0: f64,
    mu_sq: f64,
    l_sq: f64,
    eta: f64,
    c_a1: f64,
    diverged_at: Option<usize>,
    hypotheses: BTreeMap<String, HypothesisSummary>,
}

pub const HYPOTHESES_HEADER: &str = "t,A1,A2,A3,A4_lower,A4_upper,A5,A6";

/// `hypotheses.csv`; margins that were not evaluated are left empty.
pub fn hypotheses_csv(report: &HypothesisReport) -> String {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
    let mut out = String::new();
    out.push_str(HYPOTHESES_HEADER);
    out.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t,
            cell(r.a1),
            cell(r.a2),
            cell(Some(r.a3)),
            cell(Some(r.a4_lower)),
            cell(Some(r.a4_upper)),
            cell(r.a5),
            cell(r.a6)
        );
    }
    out
}

/// Run trial 0 with every iteration recorded, evaluate the hypothesis
/// margins and write `hypotheses.csv` plus `hypotheses.json`.
pub fn hypcheck(config: &ExperimentConfig, opts: &RunOptions) -> Result<HypcheckReport> {
    let mut config = config.clone();
    config.validate()?;
    config.run.record_every = 1;
    config.checks.hypcheck = true;
    let hp = config.hyper_params();
    let outcome = run_trial(&config, &hp, 0)?;
    let report = outcome.hypotheses.expect("hypotheses enabled above");
    let dir = opts.output_dir(&config);
    std::fs::create_dir_all(&dir)?;

    let result = HypcheckReport {
        dist0: outcome.dist0,
        report,
        run: outcome.run,
        output_dir: dir.clone(),
    };
    let c = result.report.constants;
    let json = HypcheckJson {
        dist0: result.dist0,
        rho: c.rho,
        e0: c.e0,
        mu_sq: c.mu_sq,
        l_sq: c.l_sq,
        eta: c.eta,
        c_a1: c.c_a1,
        diverged_at: result.run.diverged_at,
        hypotheses: result.summary(),
    };
    write(&dir, "hypotheses.csv", &hypotheses_csv(&result.report))?;
    write(
        &dir,
        "hypotheses.json",
        &(serde_json::to_string_pretty(&json)? + "\n"),
    )?;
    Ok(result)
}

/// Analytic outer gradient at `params` next to its finite-difference
/// reference, for callers that want to inspect a single point.
pub fn compare_at(
    hp: &HyperParams,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
) -> Result<(OuterGradient, OuterGradient)> {
    let (analytic, _) = outer_gradient(hp.algo, hp.mode, params, env, batch, hp.alpha)?;
    let numeric = reference_gradient(hp.algo, hp.mode, params, env, batch, hp.alpha)?;
    Ok((analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use std::path::Path;

    fn config(algo: &str, mode: &str, mean: f64) -> ExperimentConfig {
        let text = format!(
            r#"{{"env": {{"d": 6, "k": 2, "head_mean": {mean}, "noise_std": 0.2}},
                "hp": {{"algo": "{algo}", "mode": "{mode}", "alpha": 0.1, "beta": 0.1, "n": 3,
                        "m_in": 7, "m_out": 9, "iters": 10}},
                "run": {{"master_seed": 11}}}}"#
        );
        parse_config(&text, Path::new("t.json")).unwrap()
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1e200, -1e200], &[1e200, -1e200]), 0.0);
        assert!((relative_error(&[3e200, 0.0], &[0.0, 4e200]) - 5.0 / 4.0).abs() < 1e-15);
        assert_eq!(relative_error(&[f64::NAN], &[1.0]), f64::INFINITY);
        assert_eq!(relative_error(&[1.0], &[f64::INFINITY]), f64::INFINITY);
    }

    #[test]
    fn exact_maml_population_passes_tightly() {
        let r = gradcheck(&config("EXACT_MAML", "POPULATION", 0.0)).unwrap();
        assert!(r.pass);
        assert!(r.max_rel_err() <= 1e-6, "{r:?}");
    }

    #[test]
    fn exact_anil_finite_with_shared_data() {
        // D_in = D_out through a batch built by hand.
        let c = config("EXACT_ANIL", "FINITE", 1.0);
        let hp = c.hyper_params();
        let mut rng = NormalStream::from_seed(3);
        let env = c.environment(&mut rng).unwrap();
        for _ in 0..5 {
            let params = random_point(&env, hp.alpha, &mut rng).unwrap();
            let mut batch = attach_datasets(
                &env,
                sample_task_batch(&env, 3, &mut rng).unwrap(),
                7,
                7,
                &mut rng,
            )
            .unwrap();
            batch.outer_sets = batch.inner_sets.clone();
            let (a, b) = compare_at(&hp, &params, &env, &batch).unwrap();
            assert!(relative_error(&a.flatten(), &b.flatten()) <= 1e-5);
        }
    }

    #[test]
    fn zero_inner_step_gives_plain_gradient() {
        let c = config("EXACT_MAML", "POPULATION", 0.5);
        let hp = HyperParams {
            alpha: 0.0,
            ..c.hyper_params()
        };
        assert!(gradcheck_with(&c, &hp).unwrap().pass);

        let mut rng = NormalStream::from_seed(5);
        let env = c.environment(&mut rng).unwrap();
        let params = random_point(&env, 0.1, &mut rng).unwrap();
        let batch = sample_task_batch(&env, 3, &mut rng).unwrap();
        for algo in Algo::ALL {
            let hp = HyperParams { algo, ..hp.clone() };
            let (a, b) = compare_at(&hp, &params, &env, &batch).unwrap();
            let plain = outer_gradient(Algo::AvgRiskMin, Mode::Population, &params, &env, &batch, 0.0)
                .unwrap()
                .0;
            assert!(relative_error(&a.flatten(), &plain.flatten()) < 1e-14, "{algo}");
            assert!(relative_error(&b.flatten(), &plain.flatten()) < 1e-8, "{algo}");
        }
    }

    #[test]
    fn dimension_limits() {
        let mut c = config("FO_ANIL", "POPULATION", 0.0);
        c.env.d = 11;
        match gradcheck(&c) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "env.d"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hypcheck_writes_margins() {
        let dir = tempfile::tempdir().unwrap();
        // A near-truth start keeps E0 > 0, so the lower A4 bound is positive
        // and a rank-one Psi falls below it.
        let mut c = config("AVG_RISK_MIN", "POPULATION", 0.0);
        c.init.scheme = crate::harness::config::SchemeName::NearTruth;
        let opts = RunOptions {
            jobs: 1,
            output_dir: Some(dir.path().to_path_buf()),
        };
        let r = hypcheck(&c, &opts).unwrap();
        assert_eq!(r.report.first_violation(Hypothesis::A4), Some(1));
        let csv = std::fs::read_to_string(dir.path().join("hypotheses.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), HYPOTHESES_HEADER);
        assert_eq!(csv.lines().count(), 1 + 10);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("hypotheses.json")).unwrap())
                .unwrap();
        assert_eq!(json["hypotheses"]["A4"]["first_violation"], 1);
    }
}
