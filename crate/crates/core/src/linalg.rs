//! Complex linear-algebra and power-allocation helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RVec = DVector<f64>;

/// Squared Frobenius norm of a complex matrix.
pub fn frob_norm_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// SVD with singular values sorted in descending order.
///
/// Returns `(u, s, v)` such that `m = u * diag(s) * v.adjoint()`, with `u`
/// and `v` holding `min(nrows, ncols)` orthonormal columns.
pub fn svd(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    (u, s, v_t.adjoint())
}

/// Moore-Penrose pseudo-inverse via SVD.
///
/// Singular values below `rel_cutoff` times the largest are treated as zero,
/// which yields the minimum-norm least-squares solution for rank-deficient
/// inputs.
pub fn pinv(m: &CMat, rel_cutoff: f64) -> CMat {
    let (u, s, v) = svd(m);
    let smax = s.iter().cloned().fold(0.0_f64, f64::max);
    let cut = rel_cutoff * smax;
    let r = s.len();
    let mut inv_s = DMatrix::<Complex64>::zeros(r, r);
    for i in 0..r {
        if s[i] > cut && s[i] > 0.0 {
            inv_s[(i, i)] = Complex64::new(1.0 / s[i], 0.0);
        }
    }
    v * inv_s * u.adjoint()
}

/// Inverse square root of a Hermitian positive-definite matrix.
///
/// Fails with [`Error::IllConditioned`] when the eigenvalue spread exceeds
/// `max_cond` or the matrix is not positive definite.
pub fn herm_inv_sqrt(q: &CMat, max_cond: f64) -> Result<CMat> {
    let eig = nalgebra::SymmetricEigen::new(q.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if !(lmin > 0.0) || lmax / lmin > max_cond {
        let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        return Err(Error::IllConditioned { cond });
    }
    let n = q.nrows();
    let mut d = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = Complex64::new(1.0 / eig.eigenvalues[i].sqrt(), 0.0);
    }
    let e = eig.eigenvectors;
    Ok(&e * d * e.adjoint())
}

/// Water-filling power allocation.
///
/// Given per-stream noise-to-gain levels `n_i` (use `f64::INFINITY` for dead
/// streams), returns powers `p_i = max(0, mu - n_i)` with the water level
/// `mu` chosen so that the powers sum to `budget`. This maximizes
/// `sum log(1 + p_i / n_i)` subject to the sum-power budget.
pub fn waterfill(noise_levels: &[f64], budget: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..noise_levels.len())
        .filter(|&i| noise_levels[i].is_finite())
        .collect();
    order.sort_by(|&a, &b| noise_levels[a].partial_cmp(&noise_levels[b]).unwrap());

    let mut powers = vec![0.0; noise_levels.len()];
    if order.is_empty() || budget <= 0.0 {
        return powers;
    }
    // Largest active set r for which the implied water level clears the
    // highest included noise floor.
    let mut active = order.len();
    let mut level = 0.0;
    for r in (1..=order.len()).rev() {
        let sum_n: f64 = order[..r].iter().map(|&i| noise_levels[i]).sum();
        let mu = (budget + sum_n) / r as f64;
        if mu > noise_levels[order[r - 1]] {
            active = r;
            level = mu;
            break;
        }
    }
    for &i in &order[..active] {
        powers[i] = level - noise_levels[i];
    }
    powers
}

/// `log2 det(I + c * a * a^H)` for a complex matrix `a` and real `c >= 0`.
pub fn log2_det_i_plus_gram(a: &CMat, c: f64) -> f64 {
    let n = a.nrows();
    let gram = a * a.adjoint();
    let mut m = CMat::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] += gram[(i, j)] * Complex64::new(c, 0.0);
        }
    }
    let det = m.determinant();
    det.re.max(f64::MIN_POSITIVE).log2()
}
