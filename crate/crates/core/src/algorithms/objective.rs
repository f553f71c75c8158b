//! Scalar objectives behind each outer update, used as finite-difference
//! references for the closed-form gradients.

use super::finite::{adapt_full_finite, adapt_head_finite};
use super::population::{adapt_full_population, adapt_head_population};
use crate::env::{TaskBatch, TaskEnvironment};
use crate::error::{Error, Result};
use crate::model::{finite_task_loss, population_task_loss, Algo, Mode, ModelParams};

/// Post-adaptation loss of task `i` as a function of the meta-parameters.
///
/// For the exact variants this is the function whose gradient the outer
/// update follows; for average risk minimization it is the plain task loss.
/// First-order variants have no such objective; for them this returns the
/// loss at the adapted point, which is still a well-defined function of
/// `params`.
pub fn task_meta_objective(
    algo: Algo,
    mode: Mode,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    i: usize,
    alpha: f64,
) -> Result<f64> {
    let head_true = batch.head(i);
    match mode {
        Mode::Population => {
            let adapted = match algo {
                Algo::AvgRiskMin => params.clone(),
                Algo::FoAnil | Algo::ExactAnil => ModelParams {
                    rep: params.rep.clone(),
                    head: adapt_head_population(params, env, &head_true, alpha),
                },
                Algo::FoMaml | Algo::ExactMaml => {
                    let task = adapt_full_population(params, env, &head_true, alpha);
                    ModelParams {
                        rep: task.rep_adapted.expect("full adaptation sets the representation"),
                        head: task.head_adapted,
                    }
                }
            };
            Ok(population_task_loss(&adapted, env, &head_true))
        }
        Mode::Finite => {
            let (data_in, data_out) = batch
                .data(i)
                .ok_or_else(|| Error::validation("batch", "finite objective needs datasets"))?;
            let adapted = match algo {
                Algo::AvgRiskMin => params.clone(),
                Algo::FoAnil | Algo::ExactAnil => ModelParams {
                    rep: params.rep.clone(),
                    head: adapt_head_finite(params, data_in, alpha),
                },
                Algo::FoMaml | Algo::ExactMaml => {
                    let task = adapt_full_finite(params, data_in, alpha);
                    ModelParams {
                        rep: task.rep_adapted.expect("full adaptation sets the representation"),
                        head: task.head_adapted,
                    }
                }
            };
            Ok(finite_task_loss(&adapted, data_out))
        }
    }
}

/// Task-averaged [`task_meta_objective`].
pub fn meta_objective(
    algo: Algo,
    mode: Mode,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..batch.len() {
        total += task_meta_objective(algo, mode, params, env, batch, i, alpha)?;
    }
    Ok(total / batch.len() as f64)
}

/// Outer-set loss of task `i` evaluated at arbitrary parameters, with no
/// adaptation. First-order updates are gradients of this function taken at
/// the adapted parameters.
pub fn task_outer_loss(
    mode: Mode,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    i: usize,
) -> Result<f64> {
    match mode {
        Mode::Population => Ok(population_task_loss(params, env, &batch.head(i))),
        Mode::Finite => {
            let (_, data_out) = batch
                .data(i)
                .ok_or_else(|| Error::validation("batch", "finite objective needs datasets"))?;
            Ok(finite_task_loss(params, data_out))
        }
    }
}
