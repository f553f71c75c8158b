//! Inner-loop adaptation, outer-loop steps and full training trajectories for
//! the five algorithms in both modes.
//!
//! Every outer step has the shape `theta_{t+1} = theta_t - beta G_t`, where
//! `G_t` is the task-averaged outer gradient returned by [`outer_gradient`].
//! The per-algorithm gradients live in [`population`] and [`finite`].

pub mod finite;
pub mod objective;
pub mod population;

use std::ops::{AddAssign, Div, Mul, Sub};

use nalgebra::{DMatrix, DVector};

pub use finite::{adapt_full_finite, adapt_head_finite};
pub use population::{adapt_full_population, adapt_head_population};

use crate::env::{attach_datasets, diversity_stats, sample_task_batch, TaskBatch, TaskEnvironment};
use crate::error::{Error, Result};
use crate::metrics::{second_moment_extremes, spectral_norm, TrajectoryRecord};
use crate::model::{AdaptedTask, Algo, HyperParams, Mode, ModelParams};
use crate::rng::NormalStream;

/// Parameter norms beyond which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Gradient with respect to `(B, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterGradient {
    pub rep: DMatrix<f64>,
    pub head: DVector<f64>,
}

impl OuterGradient {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self {
            rep: DMatrix::zeros(d, k),
            head: DVector::zeros(k),
        }
    }

    /// Entries of the representation block followed by the head block.
    pub fn flatten(&self) -> Vec<f64> {
        self.rep.iter().chain(self.head.iter()).copied().collect()
    }
}

impl AddAssign for OuterGradient {
    fn add_assign(&mut self, rhs: Self) {
        self.rep += rhs.rep;
        self.head += rhs.head;
    }
}

impl Sub for OuterGradient {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self {
            rep: self.rep - rhs.rep,
            head: self.head - rhs.head,
        }
    }
}

impl Mul<f64> for OuterGradient {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self {
            rep: self.rep * s,
            head: self.head * s,
        }
    }
}

impl Div<f64> for OuterGradient {
    type Output = Self;
    fn div(self, s: f64) -> Self {
        Self {
            rep: self.rep / s,
            head: self.head / s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub params_next: ModelParams,
    /// Adapted parameters of every task in the round.
    pub adapted: Vec<AdaptedTask>,
    /// Extreme eigenvalues of `Psi_t = (1/n) sum_i w_{t,i} w_{t,i}^T`.
    pub psi_min: f64,
    pub psi_max: f64,
}

impl StepOutcome {
    /// `Psi_t` itself.
    pub fn psi(&self) -> DMatrix<f64> {
        let k = self.params_next.k();
        let mut psi = DMatrix::zeros(k, k);
        for task in &self.adapted {
            psi += &task.head_adapted * task.head_adapted.transpose();
        }
        psi / self.adapted.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Vec<TrajectoryRecord>,
    pub final_params: ModelParams,
    pub diverged: bool,
    /// Iteration whose parameters first crossed the divergence threshold.
    pub diverged_at: Option<usize>,
}

/// Averaged outer gradient and the round's adapted tasks.
pub fn outer_gradient(
    algo: Algo,
    mode: Mode,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    params.check_env(env)?;
    if batch.heads.ncols() != env.k() {
        return Err(Error::Dimension(format!(
            "batch heads have length {}, expected {}",
            batch.heads.ncols(),
            env.k()
        )));
    }
    match mode {
        Mode::Population => Ok(match algo {
            Algo::FoAnil => population::fo_anil(params, env, batch, alpha),
            Algo::ExactAnil => population::exact_anil(params, env, batch, alpha),
            Algo::FoMaml => population::fo_maml(params, env, batch, alpha),
            Algo::ExactMaml => population::exact_maml(params, env, batch, alpha),
            Algo::AvgRiskMin => population::avg_risk_min(params, env, batch),
        }),
        Mode::Finite => match algo {
            Algo::FoAnil => finite::fo_anil(params, batch, alpha),
            Algo::ExactAnil => finite::exact_anil(params, batch, alpha),
            Algo::FoMaml => finite::fo_maml(params, batch, alpha),
            Algo::ExactMaml => finite::exact_maml(params, batch, alpha),
            Algo::AvgRiskMin => finite::avg_risk_min(params, batch),
        },
    }
}

/// One outer iteration of `hp.algo` in `hp.mode`.
pub fn step(
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    hp: &HyperParams,
) -> Result<StepOutcome> {
    let (grad, adapted) = outer_gradient(hp.algo, hp.mode, params, env, batch, hp.alpha)?;
    let (psi_min, psi_max) = second_moment_extremes(adapted.iter().map(|t| &t.head_adapted));
    Ok(StepOutcome {
        params_next: ModelParams {
            rep: &params.rep - grad.rep * hp.beta,
            head: &params.head - grad.head * hp.beta,
        },
        adapted,
        psi_min,
        psi_max,
    })
}

fn step_as(
    algo: Algo,
    mode: Mode,
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    hp: &HyperParams,
) -> Result<StepOutcome> {
    let hp = HyperParams {
        algo,
        mode,
        ..hp.clone()
    };
    step(params, env, batch, &hp)
}

macro_rules! named_steps {
    ($($(#[$doc:meta])* $name:ident => ($algo:expr, $mode:expr);)*) => {
        $(
            $(#[$doc])*
            pub fn $name(
                params: &ModelParams,
                env: &TaskEnvironment,
                batch: &TaskBatch,
                hp: &HyperParams,
            ) -> Result<StepOutcome> {
                step_as($algo, $mode, params, env, batch, hp)
            }
        )*
    };
}

named_steps! {
    /// `B_{t+1} = B_t (I - beta Psi_t) + B* (beta/n) sum_i w*_i w_{t,i}^T`.
    step_fo_anil_pop => (Algo::FoAnil, Mode::Population);
    step_exact_anil_pop => (Algo::ExactAnil, Mode::Population);
    step_fo_maml_pop => (Algo::FoMaml, Mode::Population);
    step_exact_maml_pop => (Algo::ExactMaml, Mode::Population);
    /// `B_{t+1} = B_t (I - beta w w^T) + beta B* wbar* w^T`, no inner loop.
    step_avg_risk_min_pop => (Algo::AvgRiskMin, Mode::Population);
    step_fo_anil_fs => (Algo::FoAnil, Mode::Finite);
    step_exact_anil_fs => (Algo::ExactAnil, Mode::Finite);
    step_fo_maml_fs => (Algo::FoMaml, Mode::Finite);
    step_exact_maml_fs => (Algo::ExactMaml, Mode::Finite);
    step_avg_risk_min_fs => (Algo::AvgRiskMin, Mode::Finite);
}

/// What an observer sees after each executed outer step.
pub struct StepView<'a> {
    pub t: usize,
    pub params: &'a ModelParams,
    pub batch: &'a TaskBatch,
    pub outcome: &'a StepOutcome,
}

fn diverged(params: &ModelParams, alpha: f64) -> bool {
    if !params.is_finite() {
        return true;
    }
    if params.head.norm() > DIVERGENCE_THRESHOLD {
        return true;
    }
    let rep_limit = DIVERGENCE_THRESHOLD / alpha.sqrt();
    // Frobenius norm bounds the spectral norm from above.
    if params.rep.norm() <= rep_limit {
        return false;
    }
    spectral_norm(&params.rep).map_or(true, |s| s > rep_limit)
}

/// Run `hp.iters` outer iterations from `init`.
pub fn run_trajectory(
    env: &TaskEnvironment,
    hp: &HyperParams,
    init: ModelParams,
    rng: &mut NormalStream,
    record_every: usize,
) -> Result<RunResult> {
    run_trajectory_observed(env, hp, init, rng, record_every, |_| {})
}

/// [`run_trajectory`] with a callback after every executed step.
///
/// A fresh task batch (and, in finite mode, fresh datasets) is drawn each
/// round unless `hp.fixed_batch` is set. Iteration `t` is recorded when
/// `t % record_every == 0` and at `t = T`; the round-`T` batch is drawn only
/// to measure `Psi_T` and the loss. The run stops early once the parameters
/// stop being finite or exceed [`DIVERGENCE_THRESHOLD`].
pub fn run_trajectory_observed<F>(
    env: &TaskEnvironment,
    hp: &HyperParams,
    init: ModelParams,
    rng: &mut NormalStream,
    record_every: usize,
    mut observer: F,
) -> Result<RunResult>
where
    F: FnMut(&StepView<'_>),
{
    hp.validate()?;
    init.check_env(env)?;
    if record_every < 1 {
        return Err(Error::validation("record_every", "must be >= 1"));
    }

    let mut params = init;
    let mut trajectory = Vec::with_capacity(hp.iters / record_every + 2);
    let mut running_stats = None;
    let mut fixed: Option<TaskBatch> = None;

    for t in 0..=hp.iters {
        let batch = match &fixed {
            Some(b) => b.clone(),
            None => {
                let mut b = sample_task_batch(env, hp.n, rng)?;
                if hp.mode == Mode::Finite {
                    b = attach_datasets(env, b, hp.m_in, hp.m_out, rng)?;
                }
                if hp.fixed_batch {
                    fixed = Some(b.clone());
                }
                b
            }
        };
        let round_stats = diversity_stats(&batch);
        let stats = running_stats.get_or_insert(round_stats);
        stats.absorb(&round_stats);
        let stats = *stats;

        let outcome = step(&params, env, &batch, hp)?;
        if t % record_every == 0 || t == hp.iters {
            trajectory.push(TrajectoryRecord::measure(
                t,
                &params,
                env,
                hp.alpha,
                (outcome.psi_min, outcome.psi_max),
                &batch,
                stats,
            )?);
        }
        if t == hp.iters {
            break;
        }
        observer(&StepView {
            t,
            params: &params,
            batch: &batch,
            outcome: &outcome,
        });
        params = outcome.params_next;
        if diverged(&params, hp.alpha) {
            return Ok(RunResult {
                trajectory,
                final_params: params,
                diverged: true,
                diverged_at: Some(t + 1),
            });
        }
    }
    Ok(RunResult {
        trajectory,
        final_params: params,
        diverged: false,
        diverged_at: None,
    })
}

#[cfg(test)]
mod tests;
