//! Symmetric tensors as homogeneous polynomials.
//!
//! An order-`d` symmetric tensor over `m` variables is stored as the
//! coefficient vector `(T_α)_{|α|=d}` of
//!
//! ```text
//! T(X) = Σ_{|α|=d} T_α · (d choose α) · X^α
//! ```
//!
//! with monomials enumerated in graded-lexicographic order (`X1^d` first,
//! `Xm^d` last). With this normalisation `T_α` is the tensor entry at any
//! index tuple whose multiplicities are `α`, so `(v·X)^d` has `T_α = v^α`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest order accepted for a tensor.
pub const MAX_ORDER: usize = 6;

const FACTORIALS: [u64; 21] = {
    let mut f = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        f[i] = f[i - 1] * i as u64;
        i += 1;
    }
    f
};

/// Exact binomial coefficient `C(n, k)` (saturating past `u64`).
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).unwrap_or(u64::MAX)
}

/// Number of monomials of degree `d` in `m` variables, `C(m+d-1, d)`.
pub fn num_monomials(m: usize, d: usize) -> usize {
    if m == 0 {
        return usize::from(d == 0);
    }
    binomial(m + d - 1, d) as usize
}

/// Exponent vector `α` of a monomial `X^α`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Multinomial coefficient `|α|! / Π α_j!`.
    pub fn multinomial(&self) -> u64 {
        let d = self.degree();
        debug_assert!(d <= 20);
        self.0.iter().fold(FACTORIALS[d], |acc, &a| acc / FACTORIALS[a])
    }

    /// `x^α`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .fold(1.0, |acc, (&a, &xi)| acc * xi.powi(a as i32))
    }

    /// Position of this exponent in the graded-lex enumeration of its degree.
    pub fn rank(&self) -> usize {
        monomial_rank(&self.0)
    }

    pub fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// All exponents of degree `d` in `m` variables, graded-lex order.
pub fn monomials(m: usize, d: usize) -> Vec<MultiIndex> {
    fn rec(pos: usize, rem: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        let m = cur.len();
        if pos == m - 1 {
            cur[pos] = rem;
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for a in (0..=rem).rev() {
            cur[pos] = a;
            rec(pos + 1, rem - a, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::with_capacity(num_monomials(m, d));
    if m == 0 {
        return out;
    }
    let mut cur = vec![0; m];
    rec(0, d, &mut cur, &mut out);
    out
}

/// Rank of an exponent vector among monomials of the same degree.
pub fn monomial_rank(alpha: &[usize]) -> usize {
    let m = alpha.len();
    let mut rem: usize = alpha.iter().sum();
    let mut pos = 0;
    for (j, &a) in alpha.iter().enumerate().take(m.saturating_sub(1)) {
        let tail = m - j - 1;
        // monomials whose j-th exponent exceeds `a` come first
        for v in (a + 1)..=rem {
            pos += num_monomials(tail, rem - v);
        }
        rem -= a;
    }
    pos
}

/// Symmetric tensor of order `order` over `dim` variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricTensor {
    dim: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl SymmetricTensor {
    pub fn zeros(dim: usize, order: usize) -> Result<Self> {
        Self::check_shape(dim, order)?;
        Ok(Self {
            dim,
            order,
            coeffs: vec![0.0; num_monomials(dim, order)],
        })
    }

    pub fn from_coeffs(dim: usize, order: usize, coeffs: Vec<f64>) -> Result<Self> {
        Self::check_shape(dim, order)?;
        let expected = num_monomials(dim, order);
        if coeffs.len() != expected {
            return Err(Error::input(format!(
                "tensor of dim {dim} and order {order} needs {expected} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { dim, order, coeffs })
    }

    fn check_shape(dim: usize, order: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::input("tensor dimension must be at least 1"));
        }
        if order == 0 || order > MAX_ORDER {
            return Err(Error::input(format!(
                "tensor order must lie in 1..={MAX_ORDER}, got {order}"
            )));
        }
        Ok(())
    }

    /// Builds a tensor by evaluating `f` on each exponent.
    pub fn from_fn(dim: usize, order: usize, mut f: impl FnMut(&MultiIndex) -> f64) -> Result<Self> {
        Self::check_shape(dim, order)?;
        let coeffs = monomials(dim, order).iter().map(&mut f).collect();
        Ok(Self { dim, order, coeffs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Coefficient `T_α`.
    pub fn get(&self, alpha: &[usize]) -> f64 {
        debug_assert_eq!(alpha.len(), self.dim);
        debug_assert_eq!(alpha.iter().sum::<usize>(), self.order);
        self.coeffs[monomial_rank(alpha)]
    }

    pub fn set(&mut self, alpha: &[usize], value: f64) {
        let idx = monomial_rank(alpha);
        self.coeffs[idx] = value;
    }

    pub fn monomials(&self) -> Vec<MultiIndex> {
        monomials(self.dim, self.order)
    }

    /// Multinomial weights `(d choose α)` as floats, aligned with `coeffs`.
    pub fn multinomials(&self) -> Vec<f64> {
        multinomial_weights(self.dim, self.order)
    }

    /// Polynomial value `Σ T_α (d choose α) x^α`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "point has length {}, tensor dimension is {}",
                x.len(),
                self.dim
            )));
        }
        Ok(self
            .monomials()
            .iter()
            .zip(&self.coeffs)
            .map(|(alpha, &c)| c * alpha.multinomial() as f64 * alpha.monomial(x))
            .sum())
    }

    /// Tensor of `(v·X)^d`, i.e. `T_α = v^α`.
    pub fn pow_linear(v: &[f64], order: usize) -> Result<Self> {
        if v.iter().all(|&x| x == 0.0) {
            return Err(Error::input("cannot take a power of the zero linear form"));
        }
        Self::from_fn(v.len(), order, |alpha| alpha.monomial(v))
    }

    /// Apolar product `Σ (d choose α) p_α q_α`.
    pub fn apolar(&self, other: &SymmetricTensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .multinomials()
            .iter()
            .zip(self.coeffs.iter().zip(&other.coeffs))
            .map(|(w, (p, q))| w * p * q)
            .sum())
    }

    pub fn apolar_norm(&self) -> f64 {
        self.multinomials()
            .iter()
            .zip(&self.coeffs)
            .map(|(w, c)| w * c * c)
            .sum::<f64>()
            .sqrt()
    }

    fn check_same_shape(&self, other: &SymmetricTensor) -> Result<()> {
        if self.dim != other.dim || self.order != other.order {
            return Err(Error::input(format!(
                "shape mismatch: (dim {}, order {}) vs (dim {}, order {})",
                self.dim, self.order, other.dim, other.order
            )));
        }
        Ok(())
    }

    /// `self + scale * other`, coefficientwise.
    pub fn axpy(&mut self, scale: f64, other: &SymmetricTensor) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> SymmetricTensor {
        SymmetricTensor {
            dim: self.dim,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    pub fn sub(&self, other: &SymmetricTensor) -> Result<SymmetricTensor> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// `∂T/∂X_i` as an order `d-1` tensor: `(∂_i T)_β = d · T_{β+e_i}`.
    pub fn derivative(&self, var: usize) -> Result<SymmetricTensor> {
        if var >= self.dim {
            return Err(Error::input(format!("variable index {var} out of range")));
        }
        if self.order < 2 {
            return Err(Error::input("derivative of an order-1 tensor is a constant"));
        }
        let d = self.order as f64;
        SymmetricTensor::from_fn(self.dim, self.order - 1, |beta| {
            let mut alpha = beta.0.clone();
            alpha[var] += 1;
            d * self.get(&alpha)
        })
    }

    /// `X_i · q` as an order `d+1` tensor: `(X_i q)_α = (α_i / (d+1)) q_{α-e_i}`.
    pub fn mul_var(&self, var: usize) -> Result<SymmetricTensor> {
        if var >= self.dim {
            return Err(Error::input(format!("variable index {var} out of range")));
        }
        let d1 = (self.order + 1) as f64;
        SymmetricTensor::from_fn(self.dim, self.order + 1, |alpha| {
            if alpha.0[var] == 0 {
                return 0.0;
            }
            let mut beta = alpha.0.clone();
            beta[var] -= 1;
            alpha.0[var] as f64 / d1 * self.get(&beta)
        })
    }

    /// Linear change of variables, returns the tensor of `X ↦ T(u X)`.
    pub fn compose_linear(&self, u: &DMatrix<f64>) -> Result<SymmetricTensor> {
        if u.nrows() != self.dim || u.ncols() != self.dim {
            return Err(Error::input("change of variables must be a dim x dim matrix"));
        }
        // T(uX) = Σ_α T_α C(d,α) Π_j (u_j · X)^{α_j}; expand the product as a
        // polynomial, then divide by the multinomials of the result basis.
        let m = self.dim;
        let d = self.order;
        let basis = monomials(m, d);
        let mut poly = vec![0.0; basis.len()];
        for (alpha, &c) in basis.iter().zip(&self.coeffs) {
            if c == 0.0 {
                continue;
            }
            let mut acc = Polynomial::constant(m, c * alpha.multinomial() as f64);
            for (j, &a) in alpha.0.iter().enumerate() {
                let row: Vec<f64> = u.row(j).iter().copied().collect();
                for _ in 0..a {
                    acc = acc.mul_linear(&row);
                }
            }
            for (p, v) in poly.iter_mut().zip(&acc.coeffs) {
                *p += v;
            }
        }
        let weights = multinomial_weights(m, d);
        let coeffs = poly.iter().zip(&weights).map(|(p, w)| p / w).collect();
        SymmetricTensor::from_coeffs(m, d, coeffs)
    }
}

/// Plain (unnormalised) homogeneous polynomial used for expansion.
struct Polynomial {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl Polynomial {
    fn constant(dim: usize, c: f64) -> Self {
        Self {
            dim,
            degree: 0,
            coeffs: vec![c],
        }
    }

    fn mul_linear(&self, l: &[f64]) -> Self {
        let src = monomials(self.dim, self.degree);
        let mut coeffs = vec![0.0; num_monomials(self.dim, self.degree + 1)];
        for (alpha, &c) in src.iter().zip(&self.coeffs) {
            for (j, &lj) in l.iter().enumerate() {
                let mut beta = alpha.0.clone();
                beta[j] += 1;
                coeffs[monomial_rank(&beta)] += c * lj;
            }
        }
        Self {
            dim: self.dim,
            degree: self.degree + 1,
            coeffs,
        }
    }
}

/// `(d choose α)` for every degree-`d` exponent, in basis order.
pub fn multinomial_weights(m: usize, d: usize) -> Vec<f64> {
    monomials(m, d)
        .iter()
        .map(|a| a.multinomial() as f64)
        .collect()
}

/// `T = Σ ω_i (ξ_i · X)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaringDecomposition {
    pub weights: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub order: usize,
}

impl WaringDecomposition {
    pub fn new(weights: Vec<f64>, points: Vec<Vec<f64>>, order: usize) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::input(format!(
                "{} weights for {} points",
                weights.len(),
                points.len()
            )));
        }
        if let Some(first) = points.first() {
            let m = first.len();
            if points.iter().any(|p| p.len() != m) {
                return Err(Error::input("points have inconsistent dimensions"));
            }
        }
        if points.iter().any(|p| p.iter().all(|&x| x == 0.0)) {
            return Err(Error::input("decomposition points must be nonzero"));
        }
        Ok(Self {
            weights,
            points,
            order,
        })
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Sums `ω_i (ξ_i·X)^d` coefficientwise.
    pub fn reconstruct(&self) -> Result<SymmetricTensor> {
        let basis = monomials(self.dim(), self.order);
        let mut out = SymmetricTensor::zeros(self.dim(), self.order)?;
        for (w, p) in self.weights.iter().zip(&self.points) {
            for (c, alpha) in out.coeffs.iter_mut().zip(&basis) {
                *c += w * alpha.monomial(p);
            }
        }
        Ok(out)
    }
}
