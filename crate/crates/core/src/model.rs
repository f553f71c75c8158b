//! Learner parameters, hyperparameters and the per-task losses with their
//! first derivatives.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::env::{DataSet, TaskEnvironment};
use crate::error::{Error, Result};
use crate::metrics::linalg::{principal_angle_dist, qr_orthonormalize};
use crate::rng::NormalStream;

/// Two-layer linear model `x -> <B w, x>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Representation `B`, d x k.
    pub rep: DMatrix<f64>,
    /// Head `w`, length k.
    pub head: DVector<f64>,
}

impl ModelParams {
    pub fn new(rep: DMatrix<f64>, head: DVector<f64>) -> Result<Self> {
        if rep.ncols() != head.len() {
            return Err(Error::Dimension(format!(
                "representation has {} columns but head has length {}",
                rep.ncols(),
                head.len()
            )));
        }
        Ok(Self { rep, head })
    }

    pub fn d(&self) -> usize {
        self.rep.nrows()
    }

    pub fn k(&self) -> usize {
        self.rep.ncols()
    }

    /// Regressor `theta = B w`.
    pub fn regressor(&self) -> DVector<f64> {
        &self.rep * &self.head
    }

    pub fn is_finite(&self) -> bool {
        self.rep.iter().chain(self.head.iter()).all(|x| x.is_finite())
    }

    pub(crate) fn check_env(&self, env: &TaskEnvironment) -> Result<()> {
        if self.d() != env.d() || self.k() != env.k() {
            return Err(Error::Dimension(format!(
                "parameters are {}x{} but environment is {}x{}",
                self.d(),
                self.k(),
                env.d(),
                env.k()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algo {
    FoAnil,
    ExactAnil,
    FoMaml,
    ExactMaml,
    AvgRiskMin,
}

impl Algo {
    pub const ALL: [Algo; 5] = [
        Algo::FoAnil,
        Algo::ExactAnil,
        Algo::FoMaml,
        Algo::ExactMaml,
        Algo::AvgRiskMin,
    ];

    /// The four gradient-based meta-learning variants (everything except the
    /// no-adaptation baseline).
    pub const META: [Algo; 4] = [Algo::FoAnil, Algo::ExactAnil, Algo::FoMaml, Algo::ExactMaml];

    /// Whether the inner loop also updates the representation.
    pub fn adapts_rep(self) -> bool {
        matches!(self, Algo::FoMaml | Algo::ExactMaml)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::FoAnil => "FO_ANIL",
            Algo::ExactAnil => "EXACT_ANIL",
            Algo::FoMaml => "FO_MAML",
            Algo::ExactMaml => "EXACT_MAML",
            Algo::AvgRiskMin => "AVG_RISK_MIN",
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    #[default]
    Population,
    Finite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub algo: Algo,
    pub mode: Mode,
    /// Inner step size.
    pub alpha: f64,
    /// Outer step size.
    pub beta: f64,
    /// Tasks per outer iteration.
    pub n: usize,
    /// Inner-loop samples per task (finite mode only).
    pub m_in: usize,
    /// Outer-loop samples per task (finite mode only).
    pub m_out: usize,
    /// Number of outer iterations `T`.
    pub iters: usize,
    /// Reuse the first task batch on every iteration instead of resampling.
    pub fixed_batch: bool,
}

impl HyperParams {
    pub fn population(algo: Algo, alpha: f64, beta: f64, n: usize, iters: usize) -> Self {
        Self {
            algo,
            mode: Mode::Population,
            alpha,
            beta,
            n,
            m_in: 1,
            m_out: 1,
            iters,
            fixed_batch: false,
        }
    }

    pub fn finite(
        algo: Algo,
        alpha: f64,
        beta: f64,
        n: usize,
        m_in: usize,
        m_out: usize,
        iters: usize,
    ) -> Self {
        Self {
            mode: Mode::Finite,
            m_in,
            m_out,
            ..Self::population(algo, alpha, beta, n, iters)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("alpha", "must be a positive finite number"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::validation("beta", "must be a positive finite number"));
        }
        if self.n < 1 {
            return Err(Error::validation("n", "must be >= 1"));
        }
        if self.mode == Mode::Finite {
            if self.m_in < 1 {
                return Err(Error::validation("m_in", "must be >= 1 in FINITE mode"));
            }
            if self.m_out < 1 {
                return Err(Error::validation("m_out", "must be >= 1 in FINITE mode"));
            }
        }
        Ok(())
    }
}

/// Result of the inner loop on one task.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedTask {
    /// Adapted head `w_{t,i}`.
    pub head_adapted: DVector<f64>,
    /// Adapted representation `B_{t,i}`; only MAML variants adapt it.
    pub rep_adapted: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitScheme {
    /// Random orthonormal basis scaled by `1/sqrt(alpha)`, zero head.
    #[default]
    Spec,
    /// I.i.d. standard normal entries scaled by `1/sqrt(alpha)`, zero head.
    Random,
    /// Orthonormalized `B* + c G` scaled by `1/sqrt(alpha)`, with `c` tuned so
    /// the initial distance lands in `[lo, hi]`.
    NearTruth { lo: f64, hi: f64 },
}

const NEAR_TRUTH_MAX_BISECTIONS: usize = 60;

pub fn init_model(
    env: &TaskEnvironment,
    alpha: f64,
    scheme: InitScheme,
    rng: &mut NormalStream,
) -> Result<ModelParams> {
    if !(alpha > 0.0) {
        return Err(Error::validation("alpha", "must be > 0"));
    }
    let (d, k) = (env.d(), env.k());
    let scale = 1.0 / alpha.sqrt();
    let rep = match scheme {
        InitScheme::Spec => qr_orthonormalize(&rng.normal_matrix(d, k))?.0 * scale,
        InitScheme::Random => rng.normal_matrix(d, k) * scale,
        InitScheme::NearTruth { lo, hi } => near_truth_basis(env, lo, hi, rng)? * scale,
    };
    ModelParams::new(rep, DVector::zeros(k))
}

fn near_truth_basis(env: &TaskEnvironment, lo: f64, hi: f64, rng: &mut NormalStream) -> Result<DMatrix<f64>> {
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::validation("init.target", "need 0 <= lo <= hi <= 1"));
    }
    let noise = rng.normal_matrix(env.d(), env.k());
    let basis = |c: f64| -> Result<(DMatrix<f64>, f64)> {
        let (q, _) = qr_orthonormalize(&(env.ground_truth_rep() + &noise * c))?;
        let dist = principal_angle_dist(&q, env.complement())?;
        Ok((q, dist))
    };

    let mut best = basis(0.0)?;
    let in_band = |dist: f64| lo <= dist && dist <= hi;
    if in_band(best.1) {
        return Ok(best.0);
    }

    // Grow the bracket until the mixture is far enough from B*.
    let mut c_lo = 0.0;
    let mut c_hi = 1.0;
    let mut upper = basis(c_hi)?;
    let mut steps = 0;
    while upper.1 < lo && steps < NEAR_TRUTH_MAX_BISECTIONS {
        c_lo = c_hi;
        c_hi *= 2.0;
        upper = basis(c_hi)?;
        steps += 1;
    }
    if in_band(upper.1) {
        return Ok(upper.0);
    }
    let target = 0.5 * (lo + hi);
    let closer =
        |a: &(DMatrix<f64>, f64), b: &(DMatrix<f64>, f64)| (a.1 - target).abs() < (b.1 - target).abs();
    if closer(&upper, &best) {
        best = upper;
    }

    for _ in 0..NEAR_TRUTH_MAX_BISECTIONS {
        let mid = 0.5 * (c_lo + c_hi);
        let candidate = basis(mid)?;
        if in_band(candidate.1) {
            return Ok(candidate.0);
        }
        if candidate.1 < lo {
            c_lo = mid;
        } else {
            c_hi = mid;
        }
        if closer(&candidate, &best) {
            best = candidate;
        }
    }
    Err(Error::InitBand { lo, hi, best: best.1 })
}

/// `1/2 ||B w - B* w*||^2 + sigma^2 / 2`, the expected squared-error loss
/// under `x ~ N(0, I_d)`.
pub fn population_task_loss(params: &ModelParams, env: &TaskEnvironment, head_true: &DVector<f64>) -> f64 {
    let residual = params.regressor() - env.regressor(head_true);
    0.5 * residual.norm_squared() + 0.5 * env.noise_std().powi(2)
}

/// `1/(2m) ||X B w - y||^2`.
pub fn finite_task_loss(params: &ModelParams, data: &DataSet) -> f64 {
    let residual = data.inputs() * params.regressor() - data.labels();
    0.5 * residual.norm_squared() / data.len() as f64
}

/// `B^T B w - B^T B* w*`.
pub fn pop_grad_w(params: &ModelParams, env: &TaskEnvironment, head_true: &DVector<f64>) -> DVector<f64> {
    params
        .rep
        .tr_mul(&(params.regressor() - env.regressor(head_true)))
}

/// `(B w - B* w*) w^T`.
pub fn pop_grad_b(params: &ModelParams, env: &TaskEnvironment, head_true: &DVector<f64>) -> DMatrix<f64> {
    (params.regressor() - env.regressor(head_true)) * params.head.transpose()
}

/// `X^T (X B w - y) / m`, the gradient of the finite loss with respect to the
/// regressor. Both finite-sample parameter gradients factor through it.
pub(crate) fn fs_regressor_grad(params: &ModelParams, data: &DataSet) -> DVector<f64> {
    let residual = data.inputs() * params.regressor() - data.labels();
    data.inputs().tr_mul(&residual) / data.len() as f64
}

/// `B^T X^T (X B w - y) / m`.
pub fn fs_grad_w(params: &ModelParams, data: &DataSet) -> DVector<f64> {
    params.rep.tr_mul(&fs_regressor_grad(params, data))
}

/// `X^T (X B w - y) w^T / m`.
pub fn fs_grad_b(params: &ModelParams, data: &DataSet) -> DMatrix<f64> {
    fs_regressor_grad(params, data) * params.head.transpose()
}
