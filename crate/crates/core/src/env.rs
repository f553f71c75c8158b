//! Task environments: the shared ground-truth subspace, the head distribution
//! and the regression data drawn from them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::linalg::{orth_complement, qr_orthonormalize, sym_extreme_eigs};
use crate::rng::NormalStream;

const ORTHONORMAL_TOLERANCE: f64 = 1e-12;

/// Ground truth shared by every task.
///
/// Task heads are drawn from `N(head_mean, head_scale^2 I_k)` and labels carry
/// `N(0, noise_std^2)` noise. The complement basis of `col(B*)` is computed
/// once at construction since every distance evaluation needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEnvironment {
    d: usize,
    k: usize,
    ground_truth_rep: DMatrix<f64>,
    complement: DMatrix<f64>,
    head_mean: DVector<f64>,
    head_scale: f64,
    noise_std: f64,
}

impl TaskEnvironment {
    /// Build an environment around an explicit `B*`.
    pub fn new(
        ground_truth_rep: DMatrix<f64>,
        head_mean: DVector<f64>,
        head_scale: f64,
        noise_std: f64,
    ) -> Result<Self> {
        let (d, k) = ground_truth_rep.shape();
        if k < 1 || k >= d {
            return Err(Error::Dimension(format!("need 1 <= k < d, got d={d}, k={k}")));
        }
        if head_mean.len() != k {
            return Err(Error::Dimension(format!(
                "head mean has length {}, expected k={k}",
                head_mean.len()
            )));
        }
        if !(head_scale >= 0.0) {
            return Err(Error::validation("head_scale", "must be >= 0"));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::validation("noise_std", "must be >= 0"));
        }
        let gram_err =
            (ground_truth_rep.transpose() * &ground_truth_rep - DMatrix::<f64>::identity(k, k)).amax();
        if !(gram_err <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::validation(
                "ground_truth_rep",
                format!("columns not orthonormal (max Gram error {gram_err:e})"),
            ));
        }
        let complement = orth_complement(&ground_truth_rep)?;
        Ok(Self {
            d,
            k,
            ground_truth_rep,
            complement,
            head_mean,
            head_scale,
            noise_std,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `B*`, d x k with orthonormal columns.
    pub fn ground_truth_rep(&self) -> &DMatrix<f64> {
        &self.ground_truth_rep
    }

    /// `B*_perp`, d x (d - k).
    pub fn complement(&self) -> &DMatrix<f64> {
        &self.complement
    }

    pub fn head_mean(&self) -> &DVector<f64> {
        &self.head_mean
    }

    pub fn head_scale(&self) -> f64 {
        self.head_scale
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Ground-truth regressor `B* w*` for a task head.
    pub fn regressor(&self, head: &DVector<f64>) -> DVector<f64> {
        &self.ground_truth_rep * head
    }

    /// Population second moment of the head distribution,
    /// `mean mean^T + scale^2 I`.
    pub fn head_second_moment(&self) -> DMatrix<f64> {
        &self.head_mean * self.head_mean.transpose()
            + DMatrix::<f64>::identity(self.k, self.k) * self.head_scale.powi(2)
    }
}

/// One regression dataset: `inputs` is m x d, `labels` has length m.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    inputs: DMatrix<f64>,
    labels: DVector<f64>,
}

impl DataSet {
    pub fn new(inputs: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        if inputs.nrows() == 0 {
            return Err(Error::Dimension("dataset needs at least one sample".into()));
        }
        Ok(Self { inputs, labels })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Empirical covariance `X^T X / m`.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.inputs.tr_mul(&self.inputs) / self.len() as f64
    }

    /// Input-label correlation `X^T y / m`.
    pub fn correlation(&self) -> DVector<f64> {
        self.inputs.tr_mul(&self.labels) / self.len() as f64
    }
}

/// The tasks sampled on one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskBatch {
    /// Row `i` is the head `w*_i` of task `i`.
    pub heads: DMatrix<f64>,
    pub inner_sets: Option<Vec<DataSet>>,
    pub outer_sets: Option<Vec<DataSet>>,
}

impl TaskBatch {
    pub fn from_heads(heads: DMatrix<f64>) -> Result<Self> {
        if heads.nrows() == 0 {
            return Err(Error::Dimension("a batch needs at least one task".into()));
        }
        Ok(Self {
            heads,
            inner_sets: None,
            outer_sets: None,
        })
    }

    pub fn with_data(mut self, inner: Vec<DataSet>, outer: Vec<DataSet>) -> Result<Self> {
        let n = self.len();
        if inner.len() != n || outer.len() != n {
            return Err(Error::Dimension(format!(
                "batch has {n} tasks but {} inner and {} outer datasets",
                inner.len(),
                outer.len()
            )));
        }
        self.inner_sets = Some(inner);
        self.outer_sets = Some(outer);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.heads.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.nrows() == 0
    }

    pub fn head(&self, i: usize) -> DVector<f64> {
        self.heads.row(i).transpose()
    }

    /// Task-averaged head.
    pub fn mean_head(&self) -> DVector<f64> {
        self.heads.row_mean().transpose()
    }

    /// `(inner, outer)` datasets of task `i`, when the batch carries data.
    pub fn data(&self, i: usize) -> Option<(&DataSet, &DataSet)> {
        match (&self.inner_sets, &self.outer_sets) {
            (Some(inner), Some(outer)) => Some((&inner[i], &outer[i])),
            _ => None,
        }
    }
}

/// Diversity of a batch of ground-truth heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityStats {
    /// Smallest eigenvalue of `(1/n) sum w*_i w*_i^T`.
    pub mu_sq: f64,
    /// Largest eigenvalue of the same matrix.
    pub l_sq: f64,
    /// Norm of the mean head.
    pub eta: f64,
    /// Largest individual head norm.
    pub l_max: f64,
}

impl DiversityStats {
    /// Condition number `L / mu`.
    pub fn kappa(&self) -> f64 {
        (self.l_sq / self.mu_sq).sqrt()
    }

    /// Fold another round into running worst-case bounds: minimum `mu_sq`,
    /// maximum everything else.
    pub fn absorb(&mut self, other: &DiversityStats) {
        self.mu_sq = self.mu_sq.min(other.mu_sq);
        self.l_sq = self.l_sq.max(other.l_sq);
        self.eta = self.eta.max(other.eta);
        self.l_max = self.l_max.max(other.l_max);
    }
}

/// Draw `B*` as the orthonormal QR factor of a d x k Gaussian matrix.
pub fn sample_environment(
    d: usize,
    k: usize,
    head_mean: DVector<f64>,
    head_scale: f64,
    noise_std: f64,
    rng: &mut NormalStream,
) -> Result<TaskEnvironment> {
    if k < 1 || k >= d {
        return Err(Error::Dimension(format!("need 1 <= k < d, got d={d}, k={k}")));
    }
    let (b_star, _) = qr_orthonormalize(&rng.normal_matrix(d, k))?;
    TaskEnvironment::new(b_star, head_mean, head_scale, noise_std)
}

/// Draw `n` heads i.i.d. from the environment's head distribution.
pub fn sample_task_batch(env: &TaskEnvironment, n: usize, rng: &mut NormalStream) -> Result<TaskBatch> {
    if n < 1 {
        return Err(Error::Dimension("a batch needs at least one task".into()));
    }
    let k = env.k();
    let mut heads = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            heads[(i, j)] = env.head_mean[j] + env.head_scale * rng.normal();
        }
    }
    TaskBatch::from_heads(heads)
}

/// Draw `m` samples `x ~ N(0, I_d)`, `y = <B* head, x> + z`.
pub fn sample_dataset(
    env: &TaskEnvironment,
    head: &DVector<f64>,
    m: usize,
    rng: &mut NormalStream,
) -> Result<DataSet> {
    if m < 1 {
        return Err(Error::Dimension("dataset needs at least one sample".into()));
    }
    if head.len() != env.k() {
        return Err(Error::Dimension(format!(
            "head has length {}, expected {}",
            head.len(),
            env.k()
        )));
    }
    let inputs = rng.normal_matrix(m, env.d());
    let mut labels = &inputs * env.regressor(head);
    if env.noise_std > 0.0 {
        for y in labels.iter_mut() {
            *y += env.noise_std * rng.normal();
        }
    }
    DataSet::new(inputs, labels)
}

/// Attach fresh inner and outer datasets to every task of a batch.
pub fn attach_datasets(
    env: &TaskEnvironment,
    batch: TaskBatch,
    m_in: usize,
    m_out: usize,
    rng: &mut NormalStream,
) -> Result<TaskBatch> {
    let n = batch.len();
    let mut inner = Vec::with_capacity(n);
    let mut outer = Vec::with_capacity(n);
    for i in 0..n {
        let head = batch.head(i);
        inner.push(sample_dataset(env, &head, m_in, rng)?);
        outer.push(sample_dataset(env, &head, m_out, rng)?);
    }
    batch.with_data(inner, outer)
}

pub fn diversity_stats(batch: &TaskBatch) -> DiversityStats {
    let n = batch.len() as f64;
    let second_moment = batch.heads.tr_mul(&batch.heads) / n;
    let (mu_sq, l_sq) = sym_extreme_eigs(&second_moment);
    let l_max = batch.heads.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    DiversityStats {
        mu_sq: mu_sq.max(0.0),
        l_sq,
        eta: batch.mean_head().norm(),
        l_max,
    }
}
