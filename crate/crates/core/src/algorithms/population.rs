//! Closed-form inner and outer updates in the infinite-sample limit, where
//! every task loss is `1/2 ||B w - B* w*||^2` up to a constant.

use nalgebra::{DMatrix, DVector};

use super::OuterGradient;
use crate::env::{TaskBatch, TaskEnvironment};
use crate::model::{pop_grad_b, pop_grad_w, AdaptedTask, ModelParams};

/// `w_{t,i} = (I - alpha B^T B) w + alpha B^T B* w*`.
pub fn adapt_head_population(
    params: &ModelParams,
    env: &TaskEnvironment,
    head_true: &DVector<f64>,
    alpha: f64,
) -> DVector<f64> {
    &params.head - pop_grad_w(params, env, head_true) * alpha
}

/// Head rule above plus `B_{t,i} = B (I - alpha w w^T) + alpha B* w* w^T`.
pub fn adapt_full_population(
    params: &ModelParams,
    env: &TaskEnvironment,
    head_true: &DVector<f64>,
    alpha: f64,
) -> AdaptedTask {
    AdaptedTask {
        head_adapted: adapt_head_population(params, env, head_true, alpha),
        rep_adapted: Some(&params.rep - pop_grad_b(params, env, head_true) * alpha),
    }
}

/// First-order ANIL: outer gradient of the post-adaptation loss with the
/// adapted head held fixed.
pub(crate) fn fo_anil(
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> (OuterGradient, Vec<AdaptedTask>) {
    let mut grad = OuterGradient::zeros(params.d(), params.k());
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let head_true = batch.head(i);
        let w_i = adapt_head_population(params, env, &head_true, alpha);
        let residual = &params.rep * &w_i - env.regressor(&head_true);
        grad.rep += &residual * w_i.transpose();
        grad.head += params.rep.tr_mul(&residual);
        adapted.push(AdaptedTask {
            head_adapted: w_i,
            rep_adapted: None,
        });
    }
    (grad / batch.len() as f64, adapted)
}

/// Exact ANIL: gradient of `F(B, w) = 1/2 ||v||^2` with
/// `v = (I_d - alpha B B^T)(B w - B* w*)`.
pub(crate) fn exact_anil(
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> (OuterGradient, Vec<AdaptedTask>) {
    let (d, k) = (params.d(), params.k());
    let b = &params.rep;
    let w = &params.head;
    let gram = b.tr_mul(b);
    let delta = DMatrix::identity(k, k) - &gram * alpha;
    let delta_bar = DMatrix::identity(d, d) - b * b.transpose() * alpha;
    let bw = b * w;

    let mut grad = OuterGradient::zeros(d, k);
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let head_true = batch.head(i);
        let target = env.regressor(&head_true);
        let v = &delta_bar * (&bw - &target);

        grad.head += b.tr_mul(&(&delta_bar * &v));

        let vt_b = v.tr_mul(b); // 1 x k
        grad.rep += &v * (w.transpose() * &delta);
        grad.rep += (&v * target.tr_mul(b)) * alpha;
        grad.rep -= (&bw * &vt_b) * alpha;
        grad.rep -= (b * b.tr_mul(&v) * w.transpose()) * alpha;
        grad.rep += (&target * &vt_b) * alpha;

        adapted.push(AdaptedTask {
            head_adapted: adapt_head_population(params, env, &head_true, alpha),
            rep_adapted: None,
        });
    }
    (grad / batch.len() as f64, adapted)
}

/// First-order MAML: gradient of the task loss at the adapted `(B_{t,i}, w_{t,i})`.
pub(crate) fn fo_maml(
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> (OuterGradient, Vec<AdaptedTask>) {
    let mut grad = OuterGradient::zeros(params.d(), params.k());
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let head_true = batch.head(i);
        let task = adapt_full_population(params, env, &head_true, alpha);
        let b_i = task
            .rep_adapted
            .as_ref()
            .expect("full adaptation sets the representation");
        let w_i = &task.head_adapted;
        let residual = b_i * w_i - env.regressor(&head_true);
        grad.rep += &residual * w_i.transpose();
        grad.head += b_i.tr_mul(&residual);
        adapted.push(task);
    }
    (grad / batch.len() as f64, adapted)
}

/// Exact MAML: gradient of `F(B, w) = 1/2 ||v||^2` through both adapted
/// parameters, where
/// `v = (I_d - alpha B B^T - (alpha omega + alpha^2 a_i) I_d)(B w - B* w*)`,
/// `omega = w^T Delta w` and `a_i = w*^T B*^T B w`.
pub(crate) fn exact_maml(
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
    alpha: f64,
) -> (OuterGradient, Vec<AdaptedTask>) {
    let (d, k) = (params.d(), params.k());
    let b = &params.rep;
    let w = &params.head;
    let a2 = alpha * alpha;
    let delta = DMatrix::identity(k, k) - b.tr_mul(b) * alpha;
    let delta_bar = DMatrix::identity(d, d) - b * b.transpose() * alpha;
    let lambda = DMatrix::identity(k, k) - w * w.transpose() * alpha;
    let omega = w.dot(&(&delta * w));
    let bw = b * w;
    let delta_w = &delta * w;
    let ww_t = w * w.transpose();

    let mut grad = OuterGradient::zeros(d, k);
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let head_true = batch.head(i);
        let target = env.regressor(&head_true);
        let a_i = target.dot(&bw);
        let shift = alpha * omega + a2 * a_i;
        let residual = &bw - &target;
        // (Delta_bar - shift I) applied to a vector.
        let apply = |x: &DVector<f64>| &delta_bar * x - x * shift;
        let v = apply(&residual);
        let r_dot_v = residual.dot(&v);

        // B^T (Delta_bar - shift I)^2 B w  ==  M^T M w with M = B Delta - shift B.
        grad.head += b.tr_mul(&apply(&apply(&bw)));
        grad.head -= b.tr_mul(&apply(&apply(&target)));
        grad.head -= &delta_w * (2.0 * alpha * r_dot_v);
        grad.head -= b.tr_mul(&target) * (a2 * r_dot_v);

        let b_lambda = b * &lambda;
        let vt_b = v.tr_mul(b);
        grad.rep += &v * (w.transpose() * &delta * &lambda);
        grad.rep -= (&bw * (&vt_b * &lambda)) * alpha;
        grad.rep -= (b * (&lambda * b.tr_mul(&v)) * w.transpose()) * alpha;
        grad.rep += (&v * target.tr_mul(&b_lambda)) * alpha;
        grad.rep += (&target * v.tr_mul(&b_lambda)) * alpha;
        grad.rep -= (b * &ww_t) * (2.0 * a2 * target.dot(&v));
        grad.rep += (&target * w.transpose()) * (a2 * v.dot(&target));

        adapted.push(adapt_full_population(params, env, &head_true, alpha));
    }
    (grad / batch.len() as f64, adapted)
}

/// Average risk minimization: plain gradient of the task-averaged loss, no
/// inner loop. Every task "adapts" to the global head itself.
pub(crate) fn avg_risk_min(
    params: &ModelParams,
    env: &TaskEnvironment,
    batch: &TaskBatch,
) -> (OuterGradient, Vec<AdaptedTask>) {
    let mean_head = batch.mean_head();
    let grad = OuterGradient {
        rep: pop_grad_b(params, env, &mean_head),
        head: pop_grad_w(params, env, &mean_head),
    };
    let adapted = (0..batch.len())
        .map(|_| AdaptedTask {
            head_adapted: params.head.clone(),
            rep_adapted: None,
        })
        .collect();
    (grad, adapted)
}
