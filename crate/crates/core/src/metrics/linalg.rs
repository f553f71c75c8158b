//! Dense linear-algebra primitives used by the distance and spectrum metrics.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Columns whose singular values fall below this fraction of the largest are
/// treated as linearly dependent.
pub const RANK_TOLERANCE: f64 = 1e-12;

const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 10_000;
/// The iteration runs on `(M^T M)^(2^s)`, which turns an eigenvalue ratio `r`
/// into `r^(2^s)`; the Rayleigh quotient is still taken with `M^T M`.
const POWER_SQUARINGS: usize = 40;

/// Thin QR factorization `M = Q R` with `Q` d x k orthonormal and the diagonal
/// of `R` nonnegative, which makes the factorization unique.
pub fn qr_orthonormalize(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (rows, cols) = m.shape();
    if cols == 0 || cols > rows {
        return Err(Error::Dimension(format!(
            "QR needs 1 <= cols <= rows, got {rows}x{cols}"
        )));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();

    let sv = r.singular_values();
    let s_max = sv.max();
    let s_min = sv.min();
    let ratio = if s_max > 0.0 { s_min / s_max } else { 0.0 };
    if !(ratio > RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio });
    }

    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok((q, r))
}

/// Orthonormal basis of the orthogonal complement of `col(b_star)`, as a
/// d x (d - k) matrix. `b_star` must have orthonormal columns.
pub fn orth_complement(b_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, k) = b_star.shape();
    if k == 0 || k >= d {
        return Err(Error::Dimension(format!(
            "orthogonal complement needs 1 <= k < d, got d={d}, k={k}"
        )));
    }
    let projector = DMatrix::identity(d, d) - b_star * b_star.transpose();
    let eig = SymmetricEigen::new(projector);

    // Projector eigenvalues are 0 (k times) and 1 (d - k times).
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut basis = DMatrix::zeros(d, d - k);
    for (col, &idx) in order.iter().take(d - k).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        // Deterministic sign: largest-magnitude entry positive.
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(col, &v);
    }
    // One QR pass squeezes out residual non-orthogonality from the eigensolver.
    let (q, _) = qr_orthonormalize(&basis)?;
    Ok(q)
}

/// Largest singular value by power iteration on the smaller Gram matrix.
///
/// Stops once the extrapolated error of the Rayleigh quotient drops below a
/// relative `1e-12`; restarts once from a rotated start vector if the first
/// attempt stalls.
pub fn spectral_norm(m: &DMatrix<f64>) -> Result<f64> {
    let gram = if m.ncols() <= m.nrows() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    let p = gram.nrows();
    if p == 0 || gram.amax() == 0.0 {
        return Ok(0.0);
    }
    let mut accel = &gram / gram.amax();
    for _ in 0..POWER_SQUARINGS {
        accel = &accel * &accel;
        let scale = accel.amax();
        if scale == 0.0 {
            break;
        }
        accel /= scale;
    }

    let first = DVector::from_element(p, 1.0);
    let rotated = DVector::from_fn(p, |i, _| ((i + 1) as f64 * 0.7).cos() + 0.5);
    let mut last_residual = f64::INFINITY;
    for start in [first, rotated] {
        match power_iterate(&gram, &accel, start) {
            Ok(lambda) => return Ok(lambda.max(0.0).sqrt()),
            Err(residual) => last_residual = residual,
        }
    }
    Err(Error::Convergence {
        residual: last_residual,
    })
}

/// Returns the dominant eigenvalue of `gram`, or the final relative residual
/// on failure. `accel` shares its dominant eigenvector.
fn power_iterate(
    gram: &DMatrix<f64>,
    accel: &DMatrix<f64>,
    start: DVector<f64>,
) -> std::result::Result<f64, f64> {
    let mut v = start.normalize();
    let mut lambda = f64::NAN;
    let mut prev_change = f64::NAN;
    for _ in 0..POWER_MAX_ITERS {
        let av = accel * &v;
        let norm = av.norm();
        if norm == 0.0 {
            // Start vector in the null space; let the caller rotate it.
            return Err(f64::INFINITY);
        }
        v = av / norm;
        let next = v.dot(&(gram * &v));
        let change = (next - lambda).abs();
        lambda = next;

        if change <= 4.0 * f64::EPSILON * lambda {
            return Ok(lambda);
        }
        // Comparisons with NaN are false, so the rate test needs two changes.
        let ratio = change / prev_change;
        if ratio < 1.0 && change * ratio / (1.0 - ratio) <= POWER_TOLERANCE * lambda {
            return Ok(lambda);
        }
        prev_change = change;
    }
    let residual = (gram * &v - &v * lambda).norm() / lambda.abs().max(f64::MIN_POSITIVE);
    Err(residual)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn sym_extreme_eigs(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(m.clone());
    (eig.eigenvalues.min(), eig.eigenvalues.max())
}

/// Sine of the largest principal angle between `col(b)` and `col(B*)`, given
/// the complement basis `b_star_perp` of `col(B*)`.
pub fn principal_angle_dist(b: &DMatrix<f64>, b_star_perp: &DMatrix<f64>) -> Result<f64> {
    if b.nrows() != b_star_perp.nrows() {
        return Err(Error::Dimension(format!(
            "representation has {} rows but complement basis has {}",
            b.nrows(),
            b_star_perp.nrows()
        )));
    }
    let (q, _) = qr_orthonormalize(b)?;
    let s = spectral_norm(&(b_star_perp.transpose() * q))?;
    Ok(s.clamp(0.0, 1.0))
}

/// `||I_k - alpha B^T B||_2`, the departure of `sqrt(alpha) B` from having
/// orthonormal columns.
pub fn delta_norm(b: &DMatrix<f64>, alpha: f64) -> f64 {
    let k = b.ncols();
    let delta = DMatrix::identity(k, k) - (b.transpose() * b) * alpha;
    let (lo, hi) = sym_extreme_eigs(&delta);
    lo.abs().max(hi.abs())
}
