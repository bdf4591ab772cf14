//! Waring decomposition of identifiable symmetric tensors.
//!
//! For `T = Σ ω_i (ξ_i·X)^d` with `rank H_T^{k,d-k} = r` and `k` above the
//! interpolation degree of the points, the column space of the Hankel
//! matrix is spanned by the Veronese vectors `ξ_i^{(k)}`. Taking an
//! orthonormal basis `U` of that space, the row blocks `U_i` (rows
//! `X_i X^β`, `|β| = k-1`) satisfy `U_i F = U_0 F Δ_i` for a common `F`,
//! with `Δ_i = diag(ξ_{1,i}, …, ξ_{r,i})` up to a per-column factor. The
//! points are read off those diagonals, then the weights come from a linear
//! least-squares solve in the apolar metric.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hankel::{hankel, unit_line, HankelMatrix, DEFAULT_RANK_TOLERANCE};
use crate::linalg;
use crate::symtensor::{monomial_rank, monomials, num_monomials, SymmetricTensor, WaringDecomposition};

/// Retries of the random pencil combination before giving up.
pub const PENCIL_ATTEMPTS: usize = 5;
/// Relative gap below which two pencil eigenvalues count as clustered.
pub const EIGEN_GAP: f64 = 1e-10;
/// Largest imaginary/real ratio accepted when realifying points.
pub const IMAGINARY_TOLERANCE: f64 = 1e-6;
/// Condition number above which the weight system is treated as singular.
const WEIGHT_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionOptions {
    /// Known rank; when `None` it is detected from the Hankel spectrum.
    pub rank: Option<usize>,
    pub rank_tolerance: f64,
    /// Row degree of the Hankel matrix; defaults to `⌊d/2⌋ + 1`.
    pub k: Option<usize>,
    pub refine_iterations: usize,
    pub rng_seed: u64,
    /// Fail (rather than warn) on complex points or a large final residual.
    pub strict: bool,
    /// Relative residual above which a strict decomposition is rejected.
    pub failure_tolerance: f64,
}

impl Default for DecompositionOptions {
    fn default() -> Self {
        Self {
            rank: None,
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            k: None,
            refine_iterations: 5,
            rng_seed: 0,
            strict: true,
            failure_tolerance: 1e-6,
        }
    }
}

impl DecompositionOptions {
    fn validate(&self, order: usize) -> Result<()> {
        if let Some(k) = self.k {
            if k == 0 || k >= order {
                return Err(Error::input(format!(
                    "row degree k={k} must satisfy 1 <= k <= {}",
                    order.saturating_sub(1)
                )));
            }
        }
        if self.refine_iterations > 50 {
            return Err(Error::input("refine_iterations must be at most 50"));
        }
        if self.rank == Some(0) {
            return Err(Error::input("rank must be positive"));
        }
        Ok(())
    }
}

/// Default Hankel row degree for order `d`.
pub fn default_row_degree(order: usize) -> usize {
    (order / 2 + 1).min(order.saturating_sub(1)).max(1)
}

/// Orthonormal basis of the Hankel image and its row blocks.
#[derive(Debug, Clone)]
pub struct PencilSlices {
    pub k: usize,
    /// `s_k × r`, orthonormal columns.
    pub basis: DMatrix<f64>,
    /// One `s_{k-1} × r` block per variable; row `β` of block `i` is row
    /// `e_i + β` of `basis`.
    pub slices: Vec<DMatrix<f64>>,
}

impl PencilSlices {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    fn from_basis(basis: DMatrix<f64>, dim: usize, k: usize) -> Self {
        let lower = monomials(dim, k - 1);
        let slices = (0..dim)
            .map(|i| {
                let rows: Vec<usize> = lower
                    .iter()
                    .map(|beta| {
                        let mut alpha = beta.0.clone();
                        alpha[i] += 1;
                        monomial_rank(&alpha)
                    })
                    .collect();
                DMatrix::from_fn(rows.len(), basis.ncols(), |r, c| basis[(rows[r], c)])
            })
            .collect();
        Self { k, basis, slices }
    }
}

/// Result of [`decompose`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub waring: WaringDecomposition,
    /// Relative apolar residual `‖reconstruct − T‖ / ‖T‖`.
    pub residual: f64,
    pub k: usize,
    /// Largest `|Im| / |Re|` ratio seen among the recovered points.
    pub imaginary_ratio: f64,
    /// Points carried non-negligible imaginary parts and were truncated.
    pub complex_warning: bool,
}

pub fn decompose(t: &SymmetricTensor, opts: &DecompositionOptions) -> Result<Decomposition> {
    opts.validate(t.order())?;
    if t.order() < 2 {
        return Err(Error::input("decomposition needs order at least 2"));
    }
    if t.apolar_norm() == 0.0 {
        return Err(Error::ZeroTensor);
    }
    let k = opts.k.unwrap_or_else(|| default_row_degree(t.order()));
    let h = hankel(t, k)?;
    let (slices, _) = truncated_svd_basis(&h, opts)?;
    // A random pencil can have nearly repeated eigenvalues; try several and
    // keep the best fit. Strict mode stops at the first acceptable one.
    let mut best: Option<(WaringDecomposition, f64, f64)> = None;
    let mut last_err = None;
    for i in 0..PENCIL_ATTEMPTS as u64 {
        match attempt(t, &slices, opts, opts.rng_seed.wrapping_add(i), opts.strict) {
            Ok(c) => {
                if best.as_ref().is_none_or(|b| c.1 < b.1) {
                    best = Some(c);
                }
            }
            Err(e) => last_err = Some(e),
        }
        if opts.strict && best.as_ref().is_some_and(|b| b.1 <= opts.failure_tolerance) {
            break;
        }
    }
    match best {
        Some((waring, residual, imaginary_ratio)) => finish(waring, residual, k, imaginary_ratio, opts),
        None => Err(last_err.expect("at least one attempt ran")),
    }
}

fn attempt(
    t: &SymmetricTensor,
    slices: &PencilSlices,
    opts: &DecompositionOptions,
    seed: u64,
    strict: bool,
) -> Result<(WaringDecomposition, f64, f64)> {
    let complex_points = simultaneous_diagonalize(slices, seed)?;
    let (points, imaginary_ratio) = realify(&complex_points);
    if imaginary_ratio > IMAGINARY_TOLERANCE && strict {
        return Err(Error::NumericalFailure {
            message: format!("recovered points are complex (Im/Re ratio {imaginary_ratio:.3e})"),
            residual: f64::NAN,
        });
    }
    let points: Vec<Vec<f64>> = points.iter().map(|p| unit_line(p)).collect();
    let (weights, residual) = solve_weights(t, &points)?;
    let mut waring = WaringDecomposition::new(weights, points, t.order())?;
    let mut residual = residual;
    if opts.refine_iterations > 0 {
        let refined = refine(t, &waring, opts.refine_iterations)?;
        residual = refined.final_residual();
        waring = refined.waring;
    }
    Ok((waring, residual, imaginary_ratio))
}

fn finish(
    mut waring: WaringDecomposition,
    residual: f64,
    k: usize,
    imaginary_ratio: f64,
    opts: &DecompositionOptions,
) -> Result<Decomposition> {
    let complex_warning = imaginary_ratio > IMAGINARY_TOLERANCE;
    sort_by_weight(&mut waring);
    if opts.strict && !(residual <= opts.failure_tolerance) {
        return Err(Error::NumericalFailure {
            message: "decomposition does not reproduce the tensor".into(),
            residual,
        });
    }
    Ok(Decomposition {
        waring,
        residual,
        k,
        imaginary_ratio,
        complex_warning,
    })
}

fn sort_by_weight(w: &mut WaringDecomposition) {
    let mut order: Vec<usize> = (0..w.rank()).collect();
    order.sort_by(|&a, &b| w.weights[b].abs().total_cmp(&w.weights[a].abs()));
    w.weights = order.iter().map(|&i| w.weights[i]).collect();
    w.points = order.iter().map(|&i| w.points[i].clone()).collect();
}

/// Leading left singular vectors of `H` and the detected (or given) rank.
pub fn truncated_svd_basis(
    h: &HankelMatrix,
    opts: &DecompositionOptions,
) -> Result<(PencilSlices, usize)> {
    let svd = linalg::svd_sorted(&h.matrix);
    let detected = linalg::numerical_rank(&svd.singular_values, opts.rank_tolerance);
    if detected == 0 {
        return Err(Error::ZeroTensor);
    }
    let r = opts.rank.unwrap_or(detected);
    let bound = h.matrix.nrows().min(h.matrix.ncols());
    if r > bound {
        return Err(Error::RankDeficiency { rank: r, bound, k: h.k });
    }
    let lower = num_monomials(h.dim, h.k - 1);
    if r > lower {
        return Err(Error::RankDeficiency {
            rank: r,
            bound: lower,
            k: h.k,
        });
    }
    let basis = svd.u.columns(0, r).into_owned();
    Ok((PencilSlices::from_basis(basis, h.dim, h.k), r))
}

fn random_unit(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn combine(slices: &[DMatrix<f64>], coeffs: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(slices[0].nrows(), slices[0].ncols());
    for (s, &c) in slices.iter().zip(coeffs) {
        out += s * c;
    }
    out
}

/// Recovers the points (up to scale, possibly complex) from the pencil.
pub fn simultaneous_diagonalize(slices: &PencilSlices, rng_seed: u64) -> Result<Vec<Vec<Complex64>>> {
    let m = slices.slices.len();
    let r = slices.rank();
    if r > slices.slices[0].nrows() {
        return Err(Error::RankDeficiency {
            rank: r,
            bound: slices.slices[0].nrows(),
            k: slices.k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut last_reason = String::new();
    for _ in 0..PENCIL_ATTEMPTS {
        let a = random_unit(&mut rng, m);
        let b = random_unit(&mut rng, m);
        let ma = combine(&slices.slices, &a);
        let mb = combine(&slices.slices, &b);

        let sv = linalg::svd_sorted(&ma).singular_values;
        let smin = sv.get(r - 1).copied().unwrap_or(0.0);
        if smin <= 1e-10 * sv[0] {
            last_reason = format!("pencil combination is singular (σ_min/σ_max = {:.3e})", smin / sv[0]);
            continue;
        }
        let ma_pinv = linalg::pinv(&ma, 1e-14);
        let pencil = &ma_pinv * &mb;
        let Some((values, vectors)) = linalg::general_eigen(&pencil) else {
            last_reason = "eigen-solver did not converge".into();
            continue;
        };
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut clustered = false;
        for i in 0..r {
            for j in 0..i {
                if (values[i] - values[j]).norm() < EIGEN_GAP * scale {
                    clustered = true;
                }
            }
        }
        if clustered {
            last_reason = "pencil eigenvalues are clustered".into();
            continue;
        }
        let Some(f_inv) = vectors.clone().try_inverse() else {
            last_reason = "eigenvector matrix is singular".into();
            continue;
        };
        let ma_pinv_c = ma_pinv.map(|x| Complex64::new(x, 0.0));
        let mut points = vec![vec![Complex64::new(0.0, 0.0); m]; r];
        for (i, ui) in slices.slices.iter().enumerate() {
            let ui_c = ui.map(|x| Complex64::new(x, 0.0));
            let delta = &f_inv * (&ma_pinv_c * ui_c) * &vectors;
            for (j, p) in points.iter_mut().enumerate() {
                p[i] = delta[(j, j)];
            }
        }
        if points.iter().any(|p| p.iter().all(|z| z.norm() == 0.0)) {
            last_reason = "recovered a zero point".into();
            continue;
        }
        return Ok(points);
    }
    Err(Error::NumericalFailure {
        message: format!("simultaneous diagonalisation failed after {PENCIL_ATTEMPTS} attempts: {last_reason}"),
        residual: f64::NAN,
    })
}

/// Removes the arbitrary complex phase of each point and drops the
/// imaginary parts. Returns the real points and the largest Im/Re ratio.
pub fn realify(points: &[Vec<Complex64>]) -> (Vec<Vec<f64>>, f64) {
    let mut worst = 0.0_f64;
    let real = points
        .iter()
        .map(|p| {
            let pivot = p
                .iter()
                .copied()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(Complex64::new(1.0, 0.0));
            let phase = if pivot.norm() > 0.0 { pivot / pivot.norm() } else { Complex64::new(1.0, 0.0) };
            let rotated: Vec<Complex64> = p.iter().map(|z| z / phase).collect();
            let max_re = rotated.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
            let max_im = rotated.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            let ratio = if max_re > 0.0 { max_im / max_re } else { f64::INFINITY };
            worst = worst.max(ratio);
            rotated.iter().map(|z| z.re).collect()
        })
        .collect();
    (real, worst)
}

/// Apolar-weighted least squares for `T ≈ Σ ω_i (ξ_i·X)^d`. Returns the
/// weights and the relative residual.
pub fn solve_weights(t: &SymmetricTensor, points: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    if points.is_empty() {
        return Err(Error::input("no points given"));
    }
    if points.iter().any(|p| p.len() != t.dim()) {
        return Err(Error::input("point dimension does not match the tensor"));
    }
    let basis = t.monomials();
    let sqrt_w: Vec<f64> = t.multinomials().iter().map(|w| w.sqrt()).collect();
    let design = DMatrix::from_fn(basis.len(), points.len(), |a, i| {
        sqrt_w[a] * basis[a].monomial(&points[i])
    });
    let rhs = DVector::from_iterator(
        basis.len(),
        t.coeffs().iter().zip(&sqrt_w).map(|(c, w)| c * w),
    );
    let (weights, cond) = linalg::lstsq(&design, &rhs);
    if !(cond < WEIGHT_CONDITION_LIMIT) {
        return Err(Error::CollinearPoints { condition: cond });
    }
    let resid = (&design * &weights - &rhs).norm();
    let norm = rhs.norm();
    let rel = if norm > 0.0 { resid / norm } else { resid };
    Ok((weights.iter().copied().collect(), rel))
}

/// Relative apolar residual of `w` against `t`.
pub fn relative_residual(t: &SymmetricTensor, w: &WaringDecomposition) -> Result<f64> {
    let diff = w.reconstruct()?.sub(t)?;
    let norm = t.apolar_norm();
    Ok(if norm > 0.0 { diff.apolar_norm() / norm } else { diff.apolar_norm() })
}

/// Output of [`refine`].
#[derive(Debug, Clone)]
pub struct Refinement {
    pub waring: WaringDecomposition,
    /// Relative residual before refinement and after each accepted step.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
}

impl Refinement {
    pub fn final_residual(&self) -> f64 {
        *self.residual_trace.last().expect("trace holds the initial residual")
    }
}

/// Damped Gauss-Newton (Levenberg) polish of `‖reconstruct(w) − T‖²` over
/// all weights and point coordinates. Steps that do not lower the residual
/// are rejected, so the residual trace is non-increasing.
pub fn refine(t: &SymmetricTensor, w: &WaringDecomposition, iters: usize) -> Result<Refinement> {
    if w.dim() != t.dim() || w.order != t.order() {
        return Err(Error::input("decomposition shape does not match the tensor"));
    }
    let r = w.rank();
    let m = t.dim();
    let basis = t.monomials();
    let sqrt_w: Vec<f64> = t.multinomials().iter().map(|x| x.sqrt()).collect();
    let target_norm = t.apolar_norm().max(f64::MIN_POSITIVE);

    let pack = |w: &WaringDecomposition| -> DVector<f64> {
        let mut v = DVector::zeros(r * (m + 1));
        for i in 0..r {
            v[i] = w.weights[i];
            for j in 0..m {
                v[r + i * m + j] = w.points[i][j];
            }
        }
        v
    };
    let residual_vec = |p: &DVector<f64>| -> DVector<f64> {
        DVector::from_fn(basis.len(), |a, _| {
            let alpha = &basis[a];
            let mut s = 0.0;
            for i in 0..r {
                let xi = &p.as_slice()[r + i * m..r + (i + 1) * m];
                s += p[i] * alpha.monomial(xi);
            }
            sqrt_w[a] * (s - t.coeffs()[a])
        })
    };
    let jacobian = |p: &DVector<f64>| -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(basis.len(), r * (m + 1));
        for (a, alpha) in basis.iter().enumerate() {
            for i in 0..r {
                let xi = &p.as_slice()[r + i * m..r + (i + 1) * m];
                jac[(a, i)] = sqrt_w[a] * alpha.monomial(xi);
                for j in 0..m {
                    if alpha.0[j] == 0 {
                        continue;
                    }
                    let mut lowered = alpha.0.clone();
                    lowered[j] -= 1;
                    let mono = crate::symtensor::MultiIndex(lowered).monomial(xi);
                    jac[(a, r + i * m + j)] = sqrt_w[a] * p[i] * alpha.0[j] as f64 * mono;
                }
            }
        }
        jac
    };

    let mut params = pack(w);
    let mut f = residual_vec(&params);
    let mut cost = f.norm_squared();
    let mut trace = vec![cost.sqrt() / target_norm];
    let mut damping = 1e-6;
    let mut iterations = 0;
    for _ in 0..iters {
        if cost.sqrt() <= 1e-15 * target_norm {
            break;
        }
        iterations += 1;
        let jac = jacobian(&params);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &f;
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        for _ in 0..12 {
            let mut lhs = jtj.clone();
            for d in 0..lhs.nrows() {
                lhs[(d, d)] += damping * scale;
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => {
                    damping *= 10.0;
                    continue;
                }
            };
            let candidate = &params + step;
            let fc = residual_vec(&candidate);
            let cc = fc.norm_squared();
            if cc.is_finite() && cc < cost {
                params = candidate;
                f = fc;
                cost = cc;
                damping = (damping / 10.0).max(1e-15);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
        trace.push(cost.sqrt() / target_norm);
    }

    let mut weights = Vec::with_capacity(r);
    let mut points = Vec::with_capacity(r);
    let d = t.order() as i32;
    for i in 0..r {
        let xi: Vec<f64> = params.as_slice()[r + i * m..r + (i + 1) * m].to_vec();
        let unit = unit_line(&xi);
        // xi = s * unit, so ω (xi·X)^d = ω s^d (unit·X)^d
        let pivot = unit.iter().zip(&xi).find(|(u, _)| u.abs() > 0.0);
        let s = pivot.map_or(1.0, |(u, x)| x / u);
        weights.push(params[i] * s.powi(d));
        points.push(unit);
    }
    let waring = if points.iter().all(|p| p.iter().all(|x| x.is_finite())) {
        WaringDecomposition::new(weights, points, t.order())?
    } else {
        w.clone()
    };
    Ok(Refinement {
        waring,
        residual_trace: trace,
        iterations,
    })
}
