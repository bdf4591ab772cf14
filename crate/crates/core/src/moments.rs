//! Moment forms of a spherical Gaussian mixture and parameter recovery.
//!
//! With `σ̃²` the smallest eigenvalue of the covariance and `v` a unit
//! eigenvector,
//!
//! ```text
//! M1(X) = E[(x·X) (v·(x − E x))²]       = Σ ω_i σ_i² (μ_i·X)
//! M2(X) = E[(x·X)²] − σ̃² ‖X‖²           = Σ ω_i (μ_i·X)²
//! M3(X) = E[(x·X)³] − 3 ‖X‖² M1(X)      = Σ ω_i (μ_i·X)³
//! ```
//!
//! [`recover_parameters`] decomposes `M3`, fixes the per-component scales
//! with `M2` and reads the variances from `M1`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gmm::GmmParams;
use crate::linalg;
use crate::symtensor::{monomials, SymmetricTensor, WaringDecomposition};
use crate::waring::{decompose, DecompositionOptions};

/// Rows per chunk in the fixed-order parallel reduction.
const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    /// Coefficients of the linear form `M1`.
    pub m1: Vec<f64>,
    /// Symmetric matrix of the quadratic form `M2(X) = Xᵗ m2 X`.
    pub m2: DMatrix<f64>,
    pub m3: SymmetricTensor,
    pub sigma_bar_sq: f64,
    pub v: Vec<f64>,
    /// `None` when built from exact parameters.
    pub n_samples: Option<usize>,
    /// The smallest covariance eigenvalue is (numerically) repeated.
    pub multiplicity_warning: bool,
}

impl MomentSet {
    pub fn dim(&self) -> usize {
        self.m1.len()
    }

    /// `M2` as an order-2 symmetric tensor.
    pub fn m2_tensor(&self) -> SymmetricTensor {
        let m = self.dim();
        SymmetricTensor::from_fn(m, 2, |alpha| {
            let idx: Vec<usize> = expand(&alpha.0);
            self.m2[(idx[0], idx[1])]
        })
        .expect("dimension checked at construction")
    }
}

/// Exponent vector to the sorted list of variable indices it contains.
fn expand(alpha: &[usize]) -> Vec<usize> {
    alpha
        .iter()
        .enumerate()
        .flat_map(|(j, &a)| std::iter::repeat_n(j, a))
        .collect()
}

/// Per-chunk partial sums: Σx, Σxxᵗ, Σ x^α over cubic monomials.
struct RawSums {
    first: DVector<f64>,
    second: DMatrix<f64>,
    third: Vec<f64>,
}

fn chunk_sums(data: &DMatrix<f64>, rows: std::ops::Range<usize>, cubic: &[Vec<usize>]) -> RawSums {
    let m = data.ncols();
    let mut first = DVector::zeros(m);
    let mut second = DMatrix::zeros(m, m);
    let mut third = vec![0.0; cubic.len()];
    let mut x = vec![0.0; m];
    for i in rows {
        for j in 0..m {
            x[j] = data[(i, j)];
            first[j] += x[j];
        }
        for a in 0..m {
            for b in a..m {
                second[(a, b)] += x[a] * x[b];
            }
        }
        for (t, idx) in third.iter_mut().zip(cubic) {
            *t += x[idx[0]] * x[idx[1]] * x[idx[2]];
        }
    }
    RawSums { first, second, third }
}

fn validate_data(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() < 2 {
        return Err(Error::input(format!("need at least 2 samples, got {}", data.nrows())));
    }
    if data.ncols() == 0 {
        return Err(Error::input("data has no columns"));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("data contains non-finite entries"));
    }
    Ok(())
}

/// Smallest covariance eigenvalue (clamped at 0), its eigenvector, and the
/// multiplicity warning.
fn smallest_eigenpair(cov: &DMatrix<f64>) -> (f64, Vec<f64>, bool) {
    let (values, vectors) = linalg::symmetric_eigen_ascending(cov);
    let lmax = values.last().copied().unwrap_or(0.0).abs();
    let repeated = values.len() > 1 && (values[1] - values[0]) <= 1e-10 * lmax;
    let v = vectors.column(0).iter().copied().collect();
    (values[0].max(0.0), v, repeated)
}

/// Empirical moment forms of an `n × m` data matrix.
pub fn empirical_moments(data: &DMatrix<f64>) -> Result<MomentSet> {
    validate_data(data)?;
    let n = data.nrows();
    let m = data.ncols();
    let nf = n as f64;
    let cubic: Vec<Vec<usize>> = monomials(m, 3).iter().map(|a| expand(&a.0)).collect();

    // fixed chunking and in-order combination: identical for any thread count
    let ranges: Vec<_> = (0..n).step_by(CHUNK_ROWS).map(|s| s..(s + CHUNK_ROWS).min(n)).collect();
    let partials: Vec<RawSums> = ranges
        .into_par_iter()
        .map(|r| chunk_sums(data, r, &cubic))
        .collect();
    let mut sums = RawSums {
        first: DVector::zeros(m),
        second: DMatrix::zeros(m, m),
        third: vec![0.0; cubic.len()],
    };
    for p in &partials {
        sums.first += &p.first;
        sums.second += &p.second;
        for (a, b) in sums.third.iter_mut().zip(&p.third) {
            *a += b;
        }
    }

    let mean = &sums.first / nf;
    // covariance from centred data for accuracy
    let mut cov = DMatrix::zeros(m, m);
    for i in 0..n {
        let c = data.row(i).transpose() - &mean;
        cov += &c * c.transpose();
    }
    cov /= nf;
    let (sigma_bar_sq, v, multiplicity_warning) = smallest_eigenpair(&cov);

    let vvec = DVector::from_vec(v.clone());
    let mut m1 = vec![0.0; m];
    for i in 0..n {
        let x = data.row(i).transpose();
        let proj = vvec.dot(&(&x - &mean));
        let p2 = proj * proj;
        for j in 0..m {
            m1[j] += x[j] * p2;
        }
    }
    for v in &mut m1 {
        *v /= nf;
    }

    let mut m2 = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let val = sums.second[(a, b)] / nf - if a == b { sigma_bar_sq } else { 0.0 };
            m2[(a, b)] = val;
            m2[(b, a)] = val;
        }
    }

    let third: Vec<f64> = sums
        .third
        .iter()
        .zip(&cubic)
        .map(|(s, idx)| s / nf - cubic_correction(idx, &m1))
        .collect();
    let m3 = SymmetricTensor::from_coeffs(m, 3, third)?;

    Ok(MomentSet {
        m1,
        m2,
        m3,
        sigma_bar_sq,
        v,
        n_samples: Some(n),
        multiplicity_warning,
    })
}

/// Entry `(a,b,c)` of the symmetric tensor of `3 ‖X‖² M1(X)`.
fn cubic_correction(idx: &[usize], m1: &[f64]) -> f64 {
    let (a, b, c) = (idx[0], idx[1], idx[2]);
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    delta(a, b) * m1[c] + delta(a, c) * m1[b] + delta(b, c) * m1[a]
}

/// Population moment forms of a spherical mixture.
pub fn exact_moments(theta: &GmmParams) -> Result<MomentSet> {
    theta.validate()?;
    let m = theta.dim();
    let sigma_bar_sq: f64 = theta
        .weights
        .iter()
        .zip(&theta.variances)
        .map(|(w, s)| w * s)
        .sum();
    let mut m1 = vec![0.0; m];
    let mut m2 = DMatrix::zeros(m, m);
    let mut mean = DVector::zeros(m);
    let mut cov = DMatrix::zeros(m, m);
    for ((w, mu), s2) in theta.weights.iter().zip(&theta.means).zip(&theta.variances) {
        let muv = DVector::from_column_slice(mu);
        for j in 0..m {
            m1[j] += w * s2 * mu[j];
        }
        m2 += &muv * muv.transpose() * *w;
        mean += &muv * *w;
        cov += DMatrix::identity(m, m) * (w * s2);
    }
    cov += &m2 - &mean * mean.transpose();
    let (_, v, multiplicity_warning) = smallest_eigenpair(&cov);
    let m3 = WaringDecomposition::new(theta.weights.clone(), theta.means.clone(), 3)?.reconstruct()?;
    Ok(MomentSet {
        m1,
        m2,
        m3,
        sigma_bar_sq,
        v,
        n_samples: None,
        multiplicity_warning,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOptions {
    pub decomposition: DecompositionOptions,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            decomposition: DecompositionOptions {
                k: Some(2),
                strict: false,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredParams {
    pub params: GmmParams,
    /// Relative residual of the `M3` decomposition.
    pub m3_residual: f64,
    /// Relative residual of the `M2` scale system.
    pub m2_residual: f64,
    /// Relative residual of the `M1` variance system.
    pub m1_residual: f64,
    /// Scale factors `λ_i` found from `M2`.
    pub scales: Vec<f64>,
    /// Components whose weight or variance had to be clamped.
    pub clamped: Vec<usize>,
    pub complex_warning: bool,
}

/// Recovers weights, means and spherical variances from the moment forms.
pub fn recover_parameters(moments: &MomentSet, r: usize, opts: &RecoveryOptions) -> Result<RecoveredParams> {
    let m = moments.dim();
    if r == 0 {
        return Err(Error::input("number of components must be positive"));
    }
    if r > m {
        return Err(Error::input(format!(
            "the moment method needs r <= m (got r={r}, m={m})"
        )));
    }
    let mut dopts = opts.decomposition.clone();
    dopts.rank = Some(r);
    dopts.k = Some(2);
    let dec = decompose(&moments.m3, &dopts)?;
    let raw_w = &dec.waring.weights;
    let raw_mu = &dec.waring.points;

    // Σ λ_i ω̃_i (μ̃_i·X)² = M2(X), Frobenius (= apolar) least squares
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).collect();
    let design = DMatrix::from_fn(pairs.len(), r, |p, i| {
        let (a, b) = pairs[p];
        raw_w[i] * raw_mu[i][a] * raw_mu[i][b]
    });
    let rhs = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(a, b)| moments.m2[(a, b)]));
    let (lambda, _) = linalg::lstsq(&design, &rhs);
    let m2_residual = relative(&(&design * &lambda - &rhs), &rhs);
    for (i, &l) in lambda.iter().enumerate() {
        if !(l.abs() >= 1e-10) {
            return Err(Error::DegenerateScale { component: i, lambda: l });
        }
    }
    let mut weights: Vec<f64> = (0..r).map(|i| lambda[i].powi(3) * raw_w[i]).collect();
    let means: Vec<Vec<f64>> = (0..r)
        .map(|i| raw_mu[i].iter().map(|x| x / lambda[i]).collect())
        .collect();

    // Σ ω_i σ_i² μ_i = m1
    let design = DMatrix::from_fn(m, r, |j, i| weights[i] * means[i][j]);
    let rhs = DVector::from_column_slice(&moments.m1);
    let (var, _) = linalg::lstsq(&design, &rhs);
    let m1_residual = relative(&(&design * &var - &rhs), &rhs);
    let mut variances: Vec<f64> = var.iter().copied().collect();

    if weights.iter().all(|&w| w <= 0.0) {
        return Err(Error::RecoveryFailure("all recovered weights are non-positive".into()));
    }
    let mut clamped = Vec::new();
    let var_fallback = (0.01 * moments.sigma_bar_sq).max(1e-6);
    for i in 0..r {
        let mut hit = false;
        if !(weights[i] > 0.0) {
            weights[i] = 1e-6;
            hit = true;
        }
        if !(variances[i] > 0.0) {
            variances[i] = var_fallback;
            hit = true;
        }
        if hit {
            clamped.push(i);
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(RecoveredParams {
        params: GmmParams {
            weights,
            means,
            variances,
        },
        m3_residual: dec.residual,
        m2_residual,
        m1_residual,
        scales: lambda.iter().copied().collect(),
        clamped,
        complex_warning: dec.complex_warning,
    })
}

fn relative(resid: &DVector<f64>, rhs: &DVector<f64>) -> f64 {
    let n = rhs.norm();
    if n > 0.0 {
        resid.norm() / n
    } else {
        resid.norm()
    }
}
