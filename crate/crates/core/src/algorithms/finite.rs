//! Finite-sample inner and outer updates. Every task carries an inner dataset
//! for adaptation and an outer dataset for the meta-update.

use nalgebra::{DMatrix, DVector};

use super::OuterGradient;
use crate::env::{DataSet, TaskBatch};
use crate::error::{Error, Result};
use crate::model::{fs_grad_w, fs_regressor_grad, AdaptedTask, ModelParams};

/// `w_{t,i} = w - alpha grad_w L_in(B, w)`.
pub fn adapt_head_finite(params: &ModelParams, data_in: &DataSet, alpha: f64) -> DVector<f64> {
    &params.head - fs_grad_w(params, data_in) * alpha
}

/// One gradient step on both blocks, evaluated at the same point.
pub fn adapt_full_finite(params: &ModelParams, data_in: &DataSet, alpha: f64) -> AdaptedTask {
    let g = fs_regressor_grad(params, data_in);
    AdaptedTask {
        head_adapted: &params.head - params.rep.tr_mul(&g) * alpha,
        rep_adapted: Some(&params.rep - (&g * params.head.transpose()) * alpha),
    }
}

/// Gradient of `1/(2m) ||X B w - y||^2` in both blocks.
fn loss_gradient(params: &ModelParams, data: &DataSet) -> OuterGradient {
    let g = fs_regressor_grad(params, data);
    OuterGradient {
        head: params.rep.tr_mul(&g),
        rep: &g * params.head.transpose(),
    }
}

/// Hessian-vector product of the finite loss at `params` along `dir`.
///
/// With residual `e = X B w - y` and `de = X (dB w + B dw)`:
/// `H_w = (dB^T X^T e + B^T X^T de) / m`, `H_B = (X^T de w^T + X^T e dw^T) / m`.
fn loss_hessian_apply(params: &ModelParams, data: &DataSet, dir: &OuterGradient) -> OuterGradient {
    let x = data.inputs();
    let m = data.len() as f64;
    let xt_e = x.tr_mul(&(x * params.regressor() - data.labels())) / m;
    let xt_de = x.tr_mul(&(x * (&dir.rep * &params.head + &params.rep * &dir.head))) / m;
    OuterGradient {
        head: dir.rep.tr_mul(&xt_e) + params.rep.tr_mul(&xt_de),
        rep: &xt_de * params.head.transpose() + &xt_e * dir.head.transpose(),
    }
}

fn task_data(batch: &TaskBatch, i: usize) -> Result<(&DataSet, &DataSet)> {
    batch
        .data(i)
        .ok_or_else(|| Error::validation("batch", "finite-sample steps need inner and outer datasets"))
}

pub(crate) fn fo_anil(
    params: &ModelParams,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    let mut grad = OuterGradient::zeros(params.d(), params.k());
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (data_in, data_out) = task_data(batch, i)?;
        let w_i = adapt_head_finite(params, data_in, alpha);
        let at_adapted = ModelParams {
            rep: params.rep.clone(),
            head: w_i,
        };
        grad += loss_gradient(&at_adapted, data_out);
        adapted.push(AdaptedTask {
            head_adapted: at_adapted.head,
            rep_adapted: None,
        });
    }
    Ok((grad / batch.len() as f64, adapted))
}

/// Exact ANIL on samples: gradient of
/// `F(B, w) = L_out(B, w - alpha grad_w L_in(B, w))`.
///
/// With `r = X_out^T v / m_out` (v the outer residual at the adapted head),
/// `u = B^T r`, `S = X_in^T X_in / m_in` and `c = X_in^T y_in / m_in`:
/// `grad_w = (I - alpha B^T S B) u` and
/// `grad_B = r w_i^T - alpha (S B w u^T + S B u w^T) + alpha c u^T`.
pub(crate) fn exact_anil(
    params: &ModelParams,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    let b = &params.rep;
    let w = &params.head;
    let k = params.k();
    let mut grad = OuterGradient::zeros(params.d(), k);
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (data_in, data_out) = task_data(batch, i)?;
        let w_i = adapt_head_finite(params, data_in, alpha);
        let at_adapted = ModelParams {
            rep: b.clone(),
            head: w_i,
        };
        let r = fs_regressor_grad(&at_adapted, data_out);
        let u = b.tr_mul(&r);

        let cov_in = data_in.covariance();
        let corr_in = data_in.correlation();
        let sb = &cov_in * b;
        let delta_in = DMatrix::identity(k, k) - b.tr_mul(&sb) * alpha;

        grad.head += &delta_in * &u;
        grad.rep += &r * at_adapted.head.transpose();
        grad.rep -= (&sb * w * u.transpose() + &sb * &u * w.transpose()) * alpha;
        grad.rep += (&corr_in * u.transpose()) * alpha;

        adapted.push(AdaptedTask {
            head_adapted: at_adapted.head,
            rep_adapted: None,
        });
    }
    Ok((grad / batch.len() as f64, adapted))
}

pub(crate) fn fo_maml(
    params: &ModelParams,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    maml(params, batch, alpha, false)
}

/// Exact MAML on samples: the first-order gradient premultiplied by
/// `I - alpha H_in`, with `H_in` the Hessian of the inner loss at `theta_t`.
pub(crate) fn exact_maml(
    params: &ModelParams,
    batch: &TaskBatch,
    alpha: f64,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    maml(params, batch, alpha, true)
}

fn maml(
    params: &ModelParams,
    batch: &TaskBatch,
    alpha: f64,
    second_order: bool,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    let mut grad = OuterGradient::zeros(params.d(), params.k());
    let mut adapted = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let (data_in, data_out) = task_data(batch, i)?;
        let task = adapt_full_finite(params, data_in, alpha);
        let at_adapted = ModelParams {
            rep: task
                .rep_adapted
                .clone()
                .expect("full adaptation sets the representation"),
            head: task.head_adapted.clone(),
        };
        let first_order = loss_gradient(&at_adapted, data_out);
        grad += if second_order {
            let correction = loss_hessian_apply(params, data_in, &first_order);
            first_order - correction * alpha
        } else {
            first_order
        };
        adapted.push(task);
    }
    Ok((grad / batch.len() as f64, adapted))
}

/// Averaged gradient of the outer-set losses at `theta_t`; there is no inner
/// loop, so the inner sets are unused.
pub(crate) fn avg_risk_min(
    params: &ModelParams,
    batch: &TaskBatch,
) -> Result<(OuterGradient, Vec<AdaptedTask>)> {
    let mut grad = OuterGradient::zeros(params.d(), params.k());
    for i in 0..batch.len() {
        let (_, data_out) = task_data(batch, i)?;
        grad += loss_gradient(params, data_out);
    }
    let adapted = (0..batch.len())
        .map(|_| AdaptedTask {
            head_adapted: params.head.clone(),
            rep_adapted: None,
        })
        .collect();
    Ok((grad / batch.len() as f64, adapted))
}
