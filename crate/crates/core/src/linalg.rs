//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

/// Thin SVD with singular values sorted in descending order.
pub(crate) struct SortedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

pub(crate) fn svd_sorted(a: &DMatrix<f64>) -> SortedSvd {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]));
    let singular_values = order.iter().map(|&i| sv[i]).collect();
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_t = DMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
    SortedSvd {
        u,
        singular_values,
        v_t,
    }
}

/// Count of singular values above `tau * σ_max`.
pub(crate) fn numerical_rank(singular_values: &[f64], tau: f64) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > tau * smax).count()
}

/// Moore-Penrose pseudo-inverse with relative cutoff `rcond`.
pub(crate) fn pinv(a: &DMatrix<f64>, rcond: f64) -> DMatrix<f64> {
    let s = svd_sorted(a);
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    let k = s.singular_values.len();
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for i in 0..k {
        let si = s.singular_values[i];
        if si <= rcond * smax || si == 0.0 {
            continue;
        }
        let vi = s.v_t.row(i).transpose();
        let ui = s.u.column(i).transpose();
        out += (vi * ui) / si;
    }
    out
}

/// Least-squares solution of `a x ≈ b`. Returns the solution and the
/// condition number `σ_max / σ_min` of `a` (infinite when rank deficient).
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let s = svd_sorted(a);
    let smax = s.singular_values.first().copied().unwrap_or(0.0);
    let smin = s.singular_values.last().copied().unwrap_or(0.0);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let utb = s.u.transpose() * b;
    let mut y = DVector::zeros(s.singular_values.len());
    for (i, &si) in s.singular_values.iter().enumerate() {
        if si > f64::EPSILON * smax * (a.nrows().max(a.ncols()) as f64) {
            y[i] = utb[i] / si;
        }
    }
    (s.v_t.transpose() * y, cond)
}

/// Eigenpairs of a symmetric matrix, eigenvalues ascending. Eigenvectors are
/// sign-normalised so their largest-magnitude entry is positive.
pub(crate) fn symmetric_eigen_ascending(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    for mut col in vecs.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    (values, vecs)
}

/// Eigen-decomposition of a general real square matrix.
///
/// Eigenvalues come from the real Schur form; each eigenvector is the right
/// singular vector of `A - λI` with smallest singular value.
pub(crate) fn general_eigen(a: &DMatrix<f64>) -> Option<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    if n == 0 || !a.iter().all(|x| x.is_finite()) {
        return None;
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000)?;
    let values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    let ac: DMatrix<Complex64> = a.map(|x| Complex64::new(x, 0.0));
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    for (j, &lambda) in values.iter().enumerate() {
        let shifted = &ac - DMatrix::<Complex64>::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t?;
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))?;
        for i in 0..n {
            vectors[(i, j)] = v_t[(imin, i)].conj();
        }
    }
    Some((values, vectors))
}
