//! Runtime check of the six inductive hypotheses behind the linear
//! convergence guarantee for ANIL-type methods.
//!
//! Each hypothesis becomes a signed margin per recorded iteration; a
//! nonnegative margin means the hypothesis holds there. The task-diversity
//! constants are worst-case values observed over the run.

use crate::env::DiversityStats;
use crate::metrics::TrajectoryRecord;
use crate::model::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    /// Head norm stays `O(sqrt(alpha) min(1, mu^2/eta^2) eta)`.
    A1,
    /// One-step recursion bound on `||Delta_t||`.
    A2,
    /// `||Delta_t|| <= 1/10`.
    A3,
    /// Adapted-head second moment inside `[0.9 alpha E0 mu^2, 1.2 alpha L^2]`.
    A4,
    /// Unnormalized distance contracts by `rho`.
    A5,
    /// `dist_t <= rho^(t-1)`.
    A6,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 6] = [
        Hypothesis::A1,
        Hypothesis::A2,
        Hypothesis::A3,
        Hypothesis::A4,
        Hypothesis::A5,
        Hypothesis::A6,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Hypothesis::A1 => "A1",
            Hypothesis::A2 => "A2",
            Hypothesis::A3 => "A3",
            Hypothesis::A4 => "A4",
            Hypothesis::A5 => "A5",
            Hypothesis::A6 => "A6",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisConstants {
    /// Contraction factor `1 - 0.5 beta alpha E0 mu^2`; `None` when it falls
    /// outside `(0, 1)`, in which case A2, A5 and A6 are not evaluated.
    pub rho: Option<f64>,
    /// `0.9 - dist_0^2`.
    pub e0: f64,
    pub mu_sq: f64,
    pub l_sq: f64,
    pub eta: f64,
    /// Multiplier for the hidden constant in A1.
    pub c_a1: f64,
}

/// Margins at one recorded iteration. `None` means "not evaluated".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisMargins {
    pub t: usize,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: f64,
    pub a4_lower: f64,
    pub a4_upper: f64,
    pub a5: Option<f64>,
    pub a6: Option<f64>,
}

impl HypothesisMargins {
    /// Smallest margin belonging to `h`.
    pub fn margin(&self, h: Hypothesis) -> Option<f64> {
        match h {
            Hypothesis::A1 => self.a1,
            Hypothesis::A2 => self.a2,
            Hypothesis::A3 => Some(self.a3),
            Hypothesis::A4 => Some(self.a4_lower.min(self.a4_upper)),
            Hypothesis::A5 => self.a5,
            Hypothesis::A6 => self.a6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub constants: HypothesisConstants,
    pub rows: Vec<HypothesisMargins>,
}

impl HypothesisReport {
    /// First recorded iteration with a negative margin for `h`.
    pub fn first_violation(&self, h: Hypothesis) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.margin(h).is_some_and(|m| m < 0.0))
            .map(|r| r.t)
    }

    /// Smallest evaluated margin for `h`, if any row evaluated it.
    pub fn min_margin(&self, h: Hypothesis) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.margin(h))
            .fold(None, |acc: Option<f64>, m| Some(acc.map_or(m, |a| a.min(m))))
    }
}

/// [`check_hypotheses_with`] using a unit constant in A1.
pub fn check_hypotheses(
    trajectory: &[TrajectoryRecord],
    hp: &HyperParams,
    env_stats: &DiversityStats,
    dist0: f64,
) -> HypothesisReport {
    check_hypotheses_with(trajectory, hp, env_stats, dist0, 1.0)
}

pub fn check_hypotheses_with(
    trajectory: &[TrajectoryRecord],
    hp: &HyperParams,
    env_stats: &DiversityStats,
    dist0: f64,
    c_a1: f64,
) -> HypothesisReport {
    let (alpha, beta) = (hp.alpha, hp.beta);
    let e0 = 0.9 - dist0 * dist0;
    let mu_sq = env_stats.mu_sq;
    let l_sq = env_stats.l_sq;
    let eta = env_stats.eta;

    let rate = beta * alpha * e0 * mu_sq;
    let rho = (rate > 0.0 && rate < 2.0).then_some(1.0 - 0.5 * rate);

    let a1_bound = if eta.is_finite() && mu_sq.is_finite() {
        // min(1, mu^2/eta^2) * eta, which tends to 0 with eta.
        let scaled = if eta * eta <= mu_sq { eta } else { mu_sq / eta };
        Some(c_a1 * alpha.sqrt() * scaled)
    } else {
        None
    };
    let a2_slack = 1.25 * alpha.powi(2) * beta.powi(2) * l_sq.powi(2);

    // Hypotheses are indexed from t = 1; a record at t = 0 only serves as
    // the predecessor of the next one. The one-step recursions A2 and A5 are
    // evaluated only between consecutive iterations.
    let mut rows = Vec::with_capacity(trajectory.len());
    for (idx, rec) in trajectory.iter().enumerate() {
        let t = rec.iter;
        if t == 0 {
            continue;
        }
        let prev = idx
            .checked_sub(1)
            .map(|p| &trajectory[p])
            .filter(|p| p.iter + 1 == t);
        let one_step = |f: &dyn Fn(f64, &TrajectoryRecord) -> f64| rho.zip(prev).map(|(r, p)| f(r, p));
        rows.push(HypothesisMargins {
            t,
            a1: a1_bound.map(|b| b - rec.w_norm),
            a2: one_step(&|r, p| r * p.delta_norm + a2_slack * p.dist.powi(2) - rec.delta_norm),
            a3: 0.1 - rec.delta_norm,
            a4_lower: rec.psi_min - 0.9 * alpha * e0 * mu_sq,
            a4_upper: 1.2 * alpha * l_sq - rec.psi_max,
            a5: one_step(&|r, p| r * p.bperp_norm - rec.bperp_norm),
            a6: rho.map(|r| r.powf(t as f64 - 1.0) - rec.dist),
        });
    }
    HypothesisReport {
        constants: HypothesisConstants {
            rho,
            e0,
            mu_sq,
            l_sq,
            eta,
            c_a1,
        },
        rows,
    }
}
