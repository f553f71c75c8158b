//! Distances, spectra and convergence diagnostics.

mod hypotheses;
pub mod linalg;
mod rate;

pub use hypotheses::{
    check_hypotheses, check_hypotheses_with, Hypothesis, HypothesisConstants, HypothesisMargins,
    HypothesisReport,
};
pub use linalg::{
    delta_norm, orth_complement, principal_angle_dist, qr_orthonormalize, spectral_norm, sym_extreme_eigs,
};
pub use rate::{fit_log_linear_rate, fit_log_linear_rate_at, LogLinearFit};

use nalgebra::DMatrix;

use crate::env::{DiversityStats, TaskBatch, TaskEnvironment};
use crate::error::Result;
use crate::model::{population_task_loss, ModelParams};

/// Diagnostics for one outer iteration `t`, measured at `(B_t, w_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub iter: usize,
    pub dist: f64,
    /// `||I_k - alpha B_t^T B_t||_2`.
    pub delta_norm: f64,
    pub w_norm: f64,
    /// Extreme eigenvalues of `Psi_t`, the second moment of the round's
    /// adapted heads.
    pub psi_min: f64,
    pub psi_max: f64,
    /// `||B*_perp^T B_t||_2`, the unnormalized distance.
    pub bperp_norm: f64,
    /// Mean population loss over the round's ground-truth heads.
    pub loss: f64,
    /// Worst-case head diversity over rounds `0..=t`.
    pub task_stats: DiversityStats,
}

impl TrajectoryRecord {
    pub fn measure(
        iter: usize,
        params: &ModelParams,
        env: &TaskEnvironment,
        alpha: f64,
        psi: (f64, f64),
        batch: &TaskBatch,
        task_stats: DiversityStats,
    ) -> Result<Self> {
        let dist = principal_angle_dist(&params.rep, env.complement())?;
        let bperp_norm = spectral_norm(&(env.complement().transpose() * &params.rep))?;
        let loss = (0..batch.len())
            .map(|i| population_task_loss(params, env, &batch.head(i)))
            .sum::<f64>()
            / batch.len() as f64;
        Ok(Self {
            iter,
            dist,
            delta_norm: delta_norm(&params.rep, alpha),
            w_norm: params.head.norm(),
            psi_min: psi.0,
            psi_max: psi.1,
            bperp_norm,
            loss,
            task_stats,
        })
    }
}

/// Extreme eigenvalues of `(1/n) sum_i h_i h_i^T` for the given heads.
pub fn second_moment_extremes<'a, I>(heads: I) -> (f64, f64)
where
    I: IntoIterator<Item = &'a nalgebra::DVector<f64>>,
{
    let mut acc: Option<DMatrix<f64>> = None;
    let mut n = 0usize;
    for h in heads {
        let outer = h * h.transpose();
        acc = Some(match acc {
            Some(a) => a + outer,
            None => outer,
        });
        n += 1;
    }
    match acc {
        Some(a) => sym_extreme_eigs(&(a / n as f64)),
        None => (0.0, 0.0),
    }
}
