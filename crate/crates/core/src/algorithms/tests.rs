use nalgebra::{DMatrix, DVector};

use super::objective::{meta_objective, task_outer_loss};
use super::*;
use crate::env::{attach_datasets, sample_dataset, sample_environment, DataSet};
use crate::metrics::{principal_angle_dist, qr_orthonormalize};
use crate::model::{fs_grad_w, init_model, pop_grad_b, pop_grad_w, InitScheme};

fn env_with(d: usize, k: usize, mean: f64, sigma: f64, rng: &mut NormalStream) -> TaskEnvironment {
    sample_environment(d, k, DVector::from_element(k, mean), 1.0, sigma, rng).unwrap()
}

fn random_params(d: usize, k: usize, scale: f64, rng: &mut NormalStream) -> ModelParams {
    ModelParams::new(rng.normal_matrix(d, k) * scale, rng.normal_vector(k) * scale).unwrap()
}

fn batch_with_data(
    env: &TaskEnvironment,
    n: usize,
    m_in: usize,
    m_out: usize,
    rng: &mut NormalStream,
) -> TaskBatch {
    let b = sample_task_batch(env, n, rng).unwrap();
    attach_datasets(env, b, m_in, m_out, rng).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Central differences of a scalar function of `(B, w)`.
fn central_diff(p: &ModelParams, h: f64, f: impl Fn(&ModelParams) -> f64) -> OuterGradient {
    let mut g = OuterGradient::zeros(p.d(), p.k());
    for i in 0..p.d() {
        for j in 0..p.k() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.rep[(i, j)] += h;
            minus.rep[(i, j)] -= h;
            g.rep[(i, j)] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
    }
    for j in 0..p.k() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus.head[j] += h;
        minus.head[j] -= h;
        g.head[j] = (f(&plus) - f(&minus)) / (2.0 * h);
    }
    g
}

fn hp(algo: Algo, mode: Mode, alpha: f64, beta: f64, n: usize) -> HyperParams {
    HyperParams {
        mode,
        m_in: 20,
        m_out: 30,
        ..HyperParams::population(algo, alpha, beta, n, 10)
    }
}

fn scaled_orthonormal(d: usize, k: usize, alpha: f64, rng: &mut NormalStream) -> DMatrix<f64> {
    qr_orthonormalize(&rng.normal_matrix(d, k)).unwrap().0 / alpha.sqrt()
}

// ---- inner loop -----------------------------------------------------------

#[test]
fn head_fully_replaced_when_gram_is_identity() {
    let mut rng = NormalStream::from_seed(1);
    let env = env_with(8, 3, 0.0, 0.0, &mut rng);
    let alpha = 0.2;
    let p = ModelParams::new(scaled_orthonormal(8, 3, alpha, &mut rng), rng.normal_vector(3)).unwrap();
    let head = rng.normal_vector(3);
    let w_i = adapt_head_population(&p, &env, &head, alpha);
    let expected = p.rep.tr_mul(&env.regressor(&head)) * alpha;
    assert!((w_i - expected).amax() < 1e-12);
}

#[test]
fn head_adaptation_with_zero_task() {
    let mut rng = NormalStream::from_seed(2);
    let env = env_with(6, 2, 0.0, 0.0, &mut rng);
    let p = random_params(6, 2, 1.0, &mut rng);
    let alpha = 0.3;
    let w_i = adapt_head_population(&p, &env, &DVector::zeros(2), alpha);
    let expected = (DMatrix::<f64>::identity(2, 2) - p.rep.tr_mul(&p.rep) * alpha) * &p.head;
    assert!((w_i - expected).amax() < 1e-12);
}

#[test]
fn head_adaptation_is_a_gradient_step() {
    let mut rng = NormalStream::from_seed(3);
    let env = env_with(7, 3, 0.0, 0.0, &mut rng);
    for _ in 0..10 {
        let p = random_params(7, 3, 1.0, &mut rng);
        let head = rng.normal_vector(3);
        let w_i = adapt_head_population(&p, &env, &head, 0.1);
        assert!((w_i - (&p.head - pop_grad_w(&p, &env, &head) * 0.1)).amax() < 1e-13);
    }
}

#[test]
fn full_adaptation_cases() {
    let mut rng = NormalStream::from_seed(4);
    let env = env_with(7, 2, 0.0, 0.0, &mut rng);
    let alpha = 0.1;
    let head = rng.normal_vector(2);

    let p = ModelParams::new(rng.normal_matrix(7, 2), DVector::zeros(2)).unwrap();
    let task = adapt_full_population(&p, &env, &head, alpha);
    assert_eq!(task.rep_adapted.unwrap(), p.rep);

    // col(B) = col(B*) stays invariant.
    let r = rng.normal_matrix(2, 2);
    let p = ModelParams::new(env.ground_truth_rep() * r, rng.normal_vector(2)).unwrap();
    let b_i = adapt_full_population(&p, &env, &head, alpha).rep_adapted.unwrap();
    assert!((env.complement().transpose() * &b_i).amax() < 1e-12);

    let p = random_params(7, 2, 1.0, &mut rng);
    let b_i = adapt_full_population(&p, &env, &head, alpha).rep_adapted.unwrap();
    assert!((b_i - (&p.rep - pop_grad_b(&p, &env, &head) * alpha)).amax() < 1e-13);
}

#[test]
fn finite_adaptation_stationary_on_exact_fit() {
    let mut rng = NormalStream::from_seed(5);
    let p = random_params(5, 2, 1.0, &mut rng);
    let x = rng.normal_matrix(12, 5);
    let y = &x * p.regressor();
    let data = DataSet::new(x, y).unwrap();
    assert!((adapt_head_finite(&p, &data, 0.3) - &p.head).amax() < 1e-12);
    let task = adapt_full_finite(&p, &data, 0.3);
    assert!((task.rep_adapted.unwrap() - &p.rep).amax() < 1e-12);
    assert!((task.head_adapted - &p.head).amax() < 1e-12);
}

#[test]
fn finite_adaptation_matches_gradient_formula() {
    let mut rng = NormalStream::from_seed(6);
    let env = env_with(5, 2, 0.0, 0.1, &mut rng);
    let p = random_params(5, 2, 1.0, &mut rng);
    let data = sample_dataset(&env, &rng.normal_vector(2), 15, &mut rng).unwrap();
    let alpha = 0.2;
    let w_i = adapt_head_finite(&p, &data, alpha);
    // (I - alpha B^T S B) w + alpha B^T X^T y / m
    let s = data.covariance();
    let expected = (DMatrix::<f64>::identity(2, 2) - p.rep.tr_mul(&(&s * &p.rep)) * alpha) * &p.head
        + p.rep.tr_mul(&data.correlation()) * alpha;
    assert!((&w_i - expected).amax() < 1e-12);
    assert!((w_i - (&p.head - fs_grad_w(&p, &data) * alpha)).amax() < 1e-13);
}

#[test]
fn finite_adaptation_converges_to_population() {
    let mut rng = NormalStream::from_seed(7);
    let env = env_with(4, 2, 0.0, 0.0, &mut rng);
    let alpha = 0.5;
    let p = ModelParams::new(rng.normal_matrix(4, 2) * 0.3, rng.normal_vector(2) * 0.5).unwrap();
    let head = rng.normal_vector(2) * 0.5;
    let m = 100_000;
    let data = sample_dataset(&env, &head, m, &mut rng).unwrap();
    let tol = 5.0 / (m as f64).sqrt();

    let fs = adapt_head_finite(&p, &data, alpha);
    let pop = adapt_head_population(&p, &env, &head, alpha);
    assert!((fs - pop).amax() <= tol);

    let fs = adapt_full_finite(&p, &data, alpha);
    let pop = adapt_full_population(&p, &env, &head, alpha);
    assert!((fs.rep_adapted.unwrap() - pop.rep_adapted.unwrap()).amax() <= tol);
    assert!((fs.head_adapted - pop.head_adapted).amax() <= tol);
}

#[test]
fn finite_adaptation_is_deterministic() {
    let run = || {
        let mut rng = NormalStream::from_seed(8);
        let env = env_with(5, 2, 0.0, 0.2, &mut rng);
        let p = random_params(5, 2, 1.0, &mut rng);
        let data = sample_dataset(&env, &rng.normal_vector(2), 10, &mut rng).unwrap();
        (
            adapt_head_finite(&p, &data, 0.1),
            adapt_full_finite(&p, &data, 0.1),
        )
    };
    assert_eq!(run(), run());
}

// ---- FO-ANIL population -----------------------------------------------------

#[test]
fn fo_anil_frozen_when_all_adapted_heads_vanish() {
    let mut rng = NormalStream::from_seed(10);
    let env = env_with(6, 2, 0.0, 0.0, &mut rng);
    let p = ModelParams::new(rng.normal_matrix(6, 2), DVector::zeros(2)).unwrap();
    let batch = TaskBatch::from_heads(DMatrix::zeros(3, 2)).unwrap();
    let out = step_fo_anil_pop(&p, &env, &batch, &hp(Algo::FoAnil, Mode::Population, 0.1, 0.1, 3)).unwrap();
    assert_eq!(out.params_next.rep, p.rep);
    assert_eq!(out.psi_max, 0.0);
}

#[test]
fn fo_anil_contraction_identity_and_prior_weight_form() {
    let mut rng = NormalStream::from_seed(11);
    let env = env_with(10, 3, 0.0, 0.0, &mut rng);
    let h = hp(Algo::FoAnil, Mode::Population, 0.1, 0.1, 4);
    let mut p = init_model(&env, h.alpha, InitScheme::Spec, &mut rng).unwrap();
    let perp_t = env.complement().transpose();
    for _ in 0..200 {
        let batch = sample_task_batch(&env, 4, &mut rng).unwrap();
        let out = step_fo_anil_pop(&p, &env, &batch, &h).unwrap();
        let psi = out.psi();
        let contracted = &perp_t * &p.rep * (DMatrix::<f64>::identity(3, 3) - &psi * h.beta);
        assert!((&perp_t * &out.params_next.rep - contracted).amax() <= 1e-12);

        let mut signal = DMatrix::zeros(3, 3);
        for (i, task) in out.adapted.iter().enumerate() {
            signal += batch.head(i) * task.head_adapted.transpose();
        }
        let expanded = &p.rep * (DMatrix::<f64>::identity(3, 3) - &psi * h.beta)
            + env.ground_truth_rep() * signal * (h.beta / 4.0);
        assert!((&out.params_next.rep - expanded).amax() <= 1e-12);
        p = out.params_next;
    }
}

#[test]
fn fo_anil_matches_scalar_recursion() {
    // d = 2, k = 1, B* = e1: every quantity is a scalar.
    let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
    let env = TaskEnvironment::new(e1, DVector::zeros(1), 1.0, 0.0).unwrap();
    let (alpha, beta, n) = (0.3, 0.2, 3);
    let h = hp(Algo::FoAnil, Mode::Population, alpha, beta, n);
    let mut rng = NormalStream::from_seed(12);
    let mut p = ModelParams::new(
        DMatrix::from_column_slice(2, 1, &[0.4, 1.2]),
        DVector::from_element(1, 0.1),
    )
    .unwrap();
    let (mut b1, mut b2, mut w) = (0.4f64, 1.2f64, 0.1f64);
    for _ in 0..100 {
        let batch = sample_task_batch(&env, n, &mut rng).unwrap();
        let stars: Vec<f64> = (0..n).map(|i| batch.heads[(i, 0)]).collect();
        let (mut g1, mut g2, mut gw) = (0.0, 0.0, 0.0);
        for &s in &stars {
            let wi = (1.0 - alpha * (b1 * b1 + b2 * b2)) * w + alpha * b1 * s;
            g1 += (b1 * wi - s) * wi;
            g2 += b2 * wi * wi;
            gw += b1 * (b1 * wi - s) + b2 * (b2 * wi);
        }
        b1 -= beta * g1 / n as f64;
        b2 -= beta * g2 / n as f64;
        w -= beta * gw / n as f64;

        p = step_fo_anil_pop(&p, &env, &batch, &h).unwrap().params_next;
        assert!((p.rep[(0, 0)] - b1).abs() <= 1e-12);
        assert!((p.rep[(1, 0)] - b2).abs() <= 1e-12);
        assert!((p.head[0] - w).abs() <= 1e-12);
    }
}

// ---- gradient oracles -------------------------------------------------------

fn check_population_oracle(algo: Algo, tol: f64) {
    let mut rng = NormalStream::from_seed(20 + algo as u64);
    for trial in 0..50 {
        let d = 3 + trial % 6;
        let k = 1 + trial % 3;
        let n = 1 + trial % 4;
        let env = env_with(d, k, 0.5, 0.0, &mut rng);
        let p = random_params(d, k, 0.7, &mut rng);
        let batch = sample_task_batch(&env, n, &mut rng).unwrap();
        let alpha = 0.2;
        let (g, adapted) = outer_gradient(algo, Mode::Population, &p, &env, &batch, alpha).unwrap();
        let reference = match algo {
            Algo::FoAnil | Algo::FoMaml => {
                let mut acc = OuterGradient::zeros(d, k);
                for (i, task) in adapted.iter().enumerate() {
                    let at = ModelParams {
                        rep: task.rep_adapted.clone().unwrap_or_else(|| p.rep.clone()),
                        head: task.head_adapted.clone(),
                    };
                    acc += central_diff(&at, 1e-5, |q| {
                        task_outer_loss(Mode::Population, q, &env, &batch, i).unwrap()
                    });
                }
                acc / n as f64
            }
            _ => central_diff(&p, 1e-5, |q| {
                meta_objective(algo, Mode::Population, q, &env, &batch, alpha).unwrap()
            }),
        };
        let err_b = rel_err(g.rep.as_slice(), reference.rep.as_slice());
        let err_w = rel_err(g.head.as_slice(), reference.head.as_slice());
        assert!(
            err_b <= tol && err_w <= tol,
            "{algo} trial {trial}: rep {err_b:e} head {err_w:e}"
        );
    }
}

#[test]
fn population_gradients_match_finite_differences() {
    for algo in Algo::ALL {
        check_population_oracle(algo, 1e-6);
    }
}

fn check_finite_oracle(algo: Algo, share_data: bool, tol: f64) {
    let mut rng = NormalStream::from_seed(40 + algo as u64 + share_data as u64 * 10);
    for trial in 0..50 {
        let d = 3 + trial % 6;
        let k = 1 + trial % 3;
        let n = 1 + trial % 4;
        let env = env_with(d, k, 0.5, 0.3, &mut rng);
        let p = random_params(d, k, 0.7, &mut rng);
        let mut batch = batch_with_data(&env, n, 6 + trial % 5, 8 + trial % 7, &mut rng);
        if share_data {
            batch.outer_sets = batch.inner_sets.clone();
        }
        let alpha = 0.2;
        let (g, adapted) = outer_gradient(algo, Mode::Finite, &p, &env, &batch, alpha).unwrap();
        let reference = match algo {
            Algo::FoAnil | Algo::FoMaml => {
                let mut acc = OuterGradient::zeros(d, k);
                for (i, task) in adapted.iter().enumerate() {
                    let at = ModelParams {
                        rep: task.rep_adapted.clone().unwrap_or_else(|| p.rep.clone()),
                        head: task.head_adapted.clone(),
                    };
                    acc += central_diff(&at, 1e-5, |q| {
                        task_outer_loss(Mode::Finite, q, &env, &batch, i).unwrap()
                    });
                }
                acc / n as f64
            }
            _ => central_diff(&p, 1e-5, |q| {
                meta_objective(algo, Mode::Finite, q, &env, &batch, alpha).unwrap()
            }),
        };
        let err_b = rel_err(g.rep.as_slice(), reference.rep.as_slice());
        let err_w = rel_err(g.head.as_slice(), reference.head.as_slice());
        assert!(
            err_b <= tol && err_w <= tol,
            "{algo} trial {trial}: rep {err_b:e} head {err_w:e}"
        );
    }
}

#[test]
fn finite_gradients_match_finite_differences() {
    for algo in Algo::ALL {
        check_finite_oracle(algo, false, 1e-5);
        check_finite_oracle(algo, true, 1e-5);
    }
}

#[test]
fn exact_anil_head_gradient_annihilated_at_spec_init() {
    let mut rng = NormalStream::from_seed(60);
    let env = env_with(8, 3, 0.0, 0.0, &mut rng);
    let alpha = 0.25;
    let p = init_model(&env, alpha, InitScheme::Spec, &mut rng).unwrap();
    let batch = sample_task_batch(&env, 5, &mut rng).unwrap();
    let (g, _) = outer_gradient(Algo::ExactAnil, Mode::Population, &p, &env, &batch, alpha).unwrap();
    assert!(g.head.amax() < 1e-12);
}

#[test]
fn exact_maml_residual_at_zero_head() {
    // With w = 0: omega = a = 0 and v = -Delta_bar B* w*. The adapted regressor
    // gives v directly.
    let mut rng = NormalStream::from_seed(61);
    let env = env_with(7, 2, 0.0, 0.0, &mut rng);
    let alpha = 0.3;
    let p = ModelParams::new(rng.normal_matrix(7, 2), DVector::zeros(2)).unwrap();
    let head = rng.normal_vector(2);
    let task = adapt_full_population(&p, &env, &head, alpha);
    let v = task.rep_adapted.unwrap() * task.head_adapted - env.regressor(&head);
    let delta_bar = DMatrix::<f64>::identity(7, 7) - &p.rep * p.rep.transpose() * alpha;
    assert!((v + delta_bar * env.regressor(&head)).amax() < 1e-12);
}

#[test]
fn fo_maml_collapses_to_fo_anil_at_zero_head() {
    let mut rng = NormalStream::from_seed(62);
    let env = env_with(9, 3, 1.0, 0.0, &mut rng);
    let p = ModelParams::new(rng.normal_matrix(9, 3), DVector::zeros(3)).unwrap();
    let batch = sample_task_batch(&env, 4, &mut rng).unwrap();
    let h = hp(Algo::FoMaml, Mode::Population, 0.1, 0.1, 4);
    let maml = step_fo_maml_pop(&p, &env, &batch, &h).unwrap();
    let anil = step_fo_anil_pop(&p, &env, &batch, &h).unwrap();
    assert!((maml.params_next.rep - anil.params_next.rep).amax() < 1e-13);
    for task in &maml.adapted {
        assert_eq!(task.rep_adapted.as_ref().unwrap(), &p.rep);
    }
}

#[test]
fn fo_maml_prior_weight_form() {
    let mut rng = NormalStream::from_seed(63);
    let env = env_with(9, 3, 2.0, 0.0, &mut rng);
    let (alpha, beta) = (0.1, 0.05);
    let h = hp(Algo::FoMaml, Mode::Population, alpha, beta, 4);
    for _ in 0..20 {
        let p = random_params(9, 3, 0.8, &mut rng);
        let batch = sample_task_batch(&env, 4, &mut rng).unwrap();
        let out = step_fo_maml_pop(&p, &env, &batch, &h).unwrap();
        let lambda = DMatrix::<f64>::identity(3, 3) - &p.head * p.head.transpose() * alpha;
        let prior = DMatrix::<f64>::identity(3, 3) - lambda * out.psi() * beta;
        let mut signal = DMatrix::zeros(3, 3);
        for (i, task) in out.adapted.iter().enumerate() {
            let weight = 1.0 - alpha * task.head_adapted.dot(&p.head);
            signal += batch.head(i) * task.head_adapted.transpose() * weight;
        }
        let expanded = &p.rep * prior + env.ground_truth_rep() * signal * (beta / 4.0);
        assert!((out.params_next.rep - expanded).amax() <= 1e-12);
    }
}

// ---- average risk minimization ---------------------------------------------

#[test]
fn avg_risk_min_rank_one_motion() {
    let mut rng = NormalStream::from_seed(70);
    let env = env_with(8, 3, 0.0, 0.0, &mut rng);
    let beta = 0.1;
    let h = hp(Algo::AvgRiskMin, Mode::Population, 0.1, beta, 3);
    let p = random_params(8, 3, 1.0, &mut rng);
    let batch = sample_task_batch(&env, 3, &mut rng).unwrap();
    let out = step_avg_risk_min_pop(&p, &env, &batch, &h).unwrap();

    // Closed form B(I - beta w w^T) + beta B* wbar w^T.
    let w = &p.head;
    let mean = batch.mean_head();
    let expected = &p.rep * (DMatrix::<f64>::identity(3, 3) - w * w.transpose() * beta)
        + env.ground_truth_rep() * &mean * w.transpose() * beta;
    assert!((&out.params_next.rep - expected).amax() < 1e-12);

    // Directions orthogonal to w are untouched.
    let mut u = rng.normal_vector(3);
    u -= w * (u.dot(w) / w.norm_squared());
    assert!(((&out.params_next.rep - &p.rep) * u).amax() < 1e-12);

    let (lo, hi) = (out.psi_min, out.psi_max);
    assert!(lo.abs() < 1e-12);
    assert!((hi - w.norm_squared()).abs() < 1e-12);
}

#[test]
fn avg_risk_min_zero_head() {
    let mut rng = NormalStream::from_seed(71);
    let env = env_with(8, 3, 1.0, 0.0, &mut rng);
    let beta = 0.1;
    let h = hp(Algo::AvgRiskMin, Mode::Population, 0.1, beta, 3);
    let p = ModelParams::new(rng.normal_matrix(8, 3), DVector::zeros(3)).unwrap();
    let batch = sample_task_batch(&env, 3, &mut rng).unwrap();
    let out = step_avg_risk_min_pop(&p, &env, &batch, &h).unwrap();
    assert_eq!(out.params_next.rep, p.rep);
    let expected = p.rep.tr_mul(&env.regressor(&batch.mean_head())) * beta;
    assert!((out.params_next.head - expected).amax() < 1e-12);
}

// ---- finite-sample steps ----------------------------------------------------

#[test]
fn finite_steps_approach_population_steps() {
    let mut rng = NormalStream::from_seed(80);
    let env = env_with(6, 2, 0.0, 0.0, &mut rng);
    let alpha = 0.5;
    let m = 100_000;
    let p = ModelParams::new(
        qr_orthonormalize(&rng.normal_matrix(6, 2)).unwrap().0,
        rng.normal_vector(2) * 0.2,
    )
    .unwrap();
    let batch = batch_with_data(&env, 2, m, m, &mut rng);
    let tol = 10.0 / (m as f64).sqrt();
    for algo in Algo::ALL {
        let pop = step(&p, &env, &batch, &hp(algo, Mode::Population, alpha, 1.0, 2)).unwrap();
        let fs = step(&p, &env, &batch, &hp(algo, Mode::Finite, alpha, 1.0, 2)).unwrap();
        let err_b = (&pop.params_next.rep - &fs.params_next.rep).amax();
        let err_w = (&pop.params_next.head - &fs.params_next.head).amax();
        assert!(
            err_b <= tol && err_w <= tol,
            "{algo}: {err_b:e} {err_w:e} (tol {tol:e})"
        );
    }
}

#[test]
fn fo_anil_finite_zero_gradient_at_truth() {
    let mut rng = NormalStream::from_seed(81);
    let env = env_with(6, 2, 0.0, 0.0, &mut rng);
    // Identity empirical covariance, B = B*, w = 0 and alpha = 1: the adapted
    // head is exactly w*.
    let x = DMatrix::<f64>::identity(6, 6) * 6f64.sqrt();
    let p = ModelParams::new(env.ground_truth_rep().clone(), DVector::zeros(2)).unwrap();
    let batch = sample_task_batch(&env, 3, &mut rng).unwrap();
    let sets: Vec<DataSet> = (0..3)
        .map(|i| DataSet::new(x.clone(), &x * env.regressor(&batch.head(i))).unwrap())
        .collect();
    let batch = batch.with_data(sets.clone(), sets).unwrap();
    let (g, adapted) = outer_gradient(Algo::FoAnil, Mode::Finite, &p, &env, &batch, 1.0).unwrap();
    for (i, task) in adapted.iter().enumerate() {
        assert!((&task.head_adapted - batch.head(i)).amax() < 1e-12);
    }
    assert!(g.rep.amax() < 1e-12 && g.head.amax() < 1e-12);
}

#[test]
fn exact_anil_finite_zero_gradient_on_interpolating_outer_set() {
    let mut rng = NormalStream::from_seed(82);
    let env = env_with(5, 2, 0.0, 0.2, &mut rng);
    let p = random_params(5, 2, 1.0, &mut rng);
    let alpha = 0.1;
    let batch = batch_with_data(&env, 3, 10, 10, &mut rng);
    // Relabel each outer set so that y_out = X_out B w_{t,i}.
    let inner = batch.inner_sets.clone().unwrap();
    let outer: Vec<DataSet> = (0..3)
        .map(|i| {
            let x = batch.data(i).unwrap().1.inputs().clone();
            let w_i = adapt_head_finite(&p, &inner[i], alpha);
            let y = &x * (&p.rep * w_i);
            DataSet::new(x, y).unwrap()
        })
        .collect();
    let batch = batch.with_data(inner, outer).unwrap();
    let (g, _) = outer_gradient(Algo::ExactAnil, Mode::Finite, &p, &env, &batch, alpha).unwrap();
    assert!(g.rep.amax() < 1e-12 && g.head.amax() < 1e-12);
}

#[test]
fn maml_finite_with_zero_inner_step_is_plain_gradient() {
    let mut rng = NormalStream::from_seed(83);
    let env = env_with(6, 2, 0.5, 0.2, &mut rng);
    let p = random_params(6, 2, 1.0, &mut rng);
    let batch = batch_with_data(&env, 3, 10, 12, &mut rng);
    let (plain, _) = outer_gradient(Algo::AvgRiskMin, Mode::Finite, &p, &env, &batch, 0.0).unwrap();
    for algo in [Algo::FoMaml, Algo::ExactMaml, Algo::FoAnil, Algo::ExactAnil] {
        let (g, _) = outer_gradient(algo, Mode::Finite, &p, &env, &batch, 0.0).unwrap();
        assert!(
            (g - plain.clone()).flatten().iter().all(|x| x.abs() < 1e-12),
            "{algo}"
        );
    }
}

// ---- invariants -------------------------------------------------------------

#[test]
fn ground_truth_subspace_is_invariant() {
    let mut rng = NormalStream::from_seed(90);
    let env = env_with(8, 3, 1.0, 0.0, &mut rng);
    for algo in Algo::ALL {
        let h = hp(algo, Mode::Population, 0.1, 0.1, 4);
        let r = rng.normal_matrix(3, 3) + DMatrix::<f64>::identity(3, 3) * 3.0;
        let mut p = ModelParams::new(env.ground_truth_rep() * r, rng.normal_vector(3)).unwrap();
        for _ in 0..5 {
            let batch = sample_task_batch(&env, 4, &mut rng).unwrap();
            p = step(&p, &env, &batch, &h).unwrap().params_next;
            let leak = (env.complement().transpose() * &p.rep).amax() / p.rep.amax();
            assert!(leak <= 1e-10, "{algo}: {leak:e} {}", p.rep.amax());
        }
    }
}

#[test]
fn zero_outer_step_freezes_parameters() {
    let mut rng = NormalStream::from_seed(91);
    let env = env_with(6, 2, 0.5, 0.1, &mut rng);
    let p = random_params(6, 2, 1.0, &mut rng);
    let batch = batch_with_data(&env, 3, 8, 8, &mut rng);
    for algo in Algo::ALL {
        for mode in [Mode::Population, Mode::Finite] {
            let h = HyperParams {
                beta: 0.0,
                ..hp(algo, mode, 0.1, 0.1, 3)
            };
            let out = step(&p, &env, &batch, &h).unwrap();
            assert_eq!(out.params_next, p, "{algo} {mode:?}");
            assert_eq!(out.adapted.len(), 3);
            assert!(out.psi_min <= out.psi_max);
        }
    }
}

#[test]
fn finite_step_without_data_is_an_error() {
    let mut rng = NormalStream::from_seed(92);
    let env = env_with(6, 2, 0.5, 0.1, &mut rng);
    let p = random_params(6, 2, 1.0, &mut rng);
    let batch = sample_task_batch(&env, 3, &mut rng).unwrap();
    assert!(step(&p, &env, &batch, &hp(Algo::FoAnil, Mode::Finite, 0.1, 0.1, 3)).is_err());
}

// ---- trajectories -----------------------------------------------------------

#[test]
fn zero_iterations_records_initial_state() {
    let mut rng = NormalStream::from_seed(100);
    let env = env_with(10, 2, 0.0, 0.0, &mut rng);
    let h = HyperParams::population(Algo::FoAnil, 0.1, 0.1, 3, 0);
    let init = init_model(&env, 0.1, InitScheme::Spec, &mut rng).unwrap();
    let dist0 = principal_angle_dist(&init.rep, env.complement()).unwrap();
    let run = run_trajectory(&env, &h, init.clone(), &mut rng, 10).unwrap();
    assert_eq!(run.trajectory.len(), 1);
    assert_eq!(run.trajectory[0].iter, 0);
    assert_eq!(run.trajectory[0].dist, dist0);
    assert_eq!(run.final_params, init);
    assert!(!run.diverged);
}

#[test]
fn trajectories_are_deterministic() {
    let go = |mode: Mode| {
        let mut rng = NormalStream::from_seed(101);
        let env = env_with(8, 2, 0.0, 0.1, &mut rng);
        let h = HyperParams {
            mode,
            m_in: 10,
            m_out: 10,
            ..HyperParams::population(Algo::ExactMaml, 0.1, 0.1, 3, 50)
        };
        let init = init_model(&env, 0.1, InitScheme::Spec, &mut rng).unwrap();
        run_trajectory(&env, &h, init, &mut rng, 7).unwrap()
    };
    for mode in [Mode::Population, Mode::Finite] {
        let (a, b) = (go(mode), go(mode));
        assert_eq!(a, b);
        let ts: Vec<usize> = a.trajectory.iter().map(|r| r.iter).collect();
        assert_eq!(ts, vec![0, 7, 14, 21, 28, 35, 42, 49, 50]);
    }
}

#[test]
fn fixed_batch_reuses_tasks() {
    let mut rng = NormalStream::from_seed(102);
    let env = env_with(8, 2, 0.0, 0.0, &mut rng);
    let h = HyperParams {
        fixed_batch: true,
        ..HyperParams::population(Algo::FoAnil, 0.1, 0.1, 3, 20)
    };
    let init = init_model(&env, 0.1, InitScheme::Spec, &mut rng).unwrap();
    let mut seen = Vec::new();
    run_trajectory_observed(&env, &h, init, &mut rng, 5, |view| {
        seen.push(view.batch.heads.clone())
    })
    .unwrap();
    assert_eq!(seen.len(), 20);
    assert!(seen.iter().all(|b| b == &seen[0]));
}

#[test]
fn divergence_stops_the_run() {
    let mut rng = NormalStream::from_seed(103);
    let env = env_with(10, 3, 10.0, 0.0, &mut rng);
    // A wildly large outer step blows up immediately.
    let h = HyperParams::population(Algo::FoMaml, 0.5, 50.0, 3, 1_000);
    let init = init_model(&env, 0.5, InitScheme::Spec, &mut rng).unwrap();
    let run = run_trajectory(&env, &h, init, &mut rng, 1).unwrap();
    assert!(run.diverged);
    let at = run.diverged_at.unwrap();
    assert!(at < 1_000);
    assert_eq!(run.trajectory.len(), at);
}

#[test]
fn records_stay_in_range() {
    let mut rng = NormalStream::from_seed(104);
    let env = env_with(12, 3, 0.0, 0.0, &mut rng);
    for algo in Algo::ALL {
        let h = HyperParams::population(algo, 0.1, 0.1, 3, 200);
        let init = init_model(&env, 0.1, InitScheme::Spec, &mut rng).unwrap();
        let run = run_trajectory(&env, &h, init, &mut rng, 10).unwrap();
        for r in &run.trajectory {
            assert!((0.0..=1.0).contains(&r.dist));
            assert!(r.psi_min <= r.psi_max + 1e-15);
            assert!(r.bperp_norm >= 0.0);
            assert!(r.task_stats.mu_sq <= r.task_stats.l_sq);
        }
    }
}
