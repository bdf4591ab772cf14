//! Spherical Gaussian mixtures: density, sampling and EM.

mod init;

pub use init::{
    condition_for_em, init_emem, init_kmeans, init_moments, init_random, kmeans, InitOutcome, Initializer,
    KMeansResult, EMEM_SHORT_ITERS, EMEM_SHORT_RUNS, KMEANS_RUNS, MOMENT_VARIANCE_FLOOR, MOMENT_WEIGHT_FLOOR,
};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mixture `Σ ω_j N(μ_j, σ_j² I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl GmmParams {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.weights.len();
        if r == 0 {
            return Err(Error::input("mixture has no components"));
        }
        if self.means.len() != r || self.variances.len() != r {
            return Err(Error::input(format!(
                "{} weights, {} means and {} variances",
                r,
                self.means.len(),
                self.variances.len()
            )));
        }
        let m = self.dim();
        if m == 0 || self.means.iter().any(|mu| mu.len() != m) {
            return Err(Error::input("means must share a positive dimension"));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::input("weights must be finite and non-negative"));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("weights sum to {total}, expected 1")));
        }
        if self.variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::input("variances must be finite and positive"));
        }
        if self.means.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::input("means must be finite"));
        }
        Ok(())
    }

    /// Number of free parameters of the spherical model with varying
    /// variances: `(r-1) + r·m + r`.
    pub fn n_free_params(&self) -> usize {
        crate::metrics::spherical_param_count(self.n_components(), self.dim())
    }

    fn log_component(&self, j: usize, x: &[f64]) -> f64 {
        let m = x.len() as f64;
        let var = self.variances[j];
        let sq: f64 = x.iter().zip(&self.means[j]).map(|(a, b)| (a - b).powi(2)).sum();
        self.weights[j].ln() - 0.5 * m * (2.0 * PI * var).ln() - sq / (2.0 * var)
    }

    /// `log p_θ(x)` with log-sum-exp stabilisation.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "point has length {}, mixture dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        let logs: Vec<f64> = (0..self.n_components()).map(|j| self.log_component(j, x)).collect();
        Ok(log_sum_exp(&logs))
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Observations plus optional ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

/// Draws `n` labelled samples; deterministic for a given seed.
pub fn sample(theta: &GmmParams, n: usize, seed: u64) -> Result<Dataset> {
    theta.validate()?;
    if n == 0 {
        return Err(Error::input("sample size must be positive"));
    }
    let m = theta.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picker = WeightedIndex::new(&theta.weights).map_err(|e| Error::input(e.to_string()))?;
    let mut data = DMatrix::zeros(n, m);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = picker.sample(&mut rng);
        let sd = theta.variances[k].sqrt();
        for j in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            data[(i, j)] = theta.means[k][j] + sd * z;
        }
        labels.push(k);
    }
    Ok(Dataset {
        data,
        labels: Some(labels),
    })
}

/// Row-stochastic `n × r` posterior membership matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities(pub DMatrix<f64>);

impl Responsibilities {
    /// Argmax per row, ties to the lowest index.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.0
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn from_labels(labels: &[usize], r: usize) -> Self {
        Responsibilities(DMatrix::from_fn(labels.len(), r, |i, j| {
            if labels[i] == j {
                1.0
            } else {
                0.0
            }
        }))
    }
}

fn check_dims(theta: &GmmParams, data: &DMatrix<f64>) -> Result<()> {
    if data.ncols() != theta.dim() {
        return Err(Error::input(format!(
            "data has {} columns, mixture dimension is {}",
            data.ncols(),
            theta.dim()
        )));
    }
    Ok(())
}

/// Posterior responsibilities and the log-likelihood `Σ_i log p_θ(x_i)`.
pub fn e_step(theta: &GmmParams, data: &DMatrix<f64>) -> Result<(Responsibilities, f64)> {
    check_dims(theta, data)?;
    let n = data.nrows();
    let r = theta.n_components();
    let m = theta.dim();
    let log_norm: Vec<f64> = (0..r)
        .map(|j| theta.weights[j].ln() - 0.5 * m as f64 * (2.0 * PI * theta.variances[j]).ln())
        .collect();
    let inv2v: Vec<f64> = theta.variances.iter().map(|v| 0.5 / v).collect();
    let mut resp = DMatrix::zeros(n, r);
    let mut loglik = 0.0;
    let mut logs = vec![0.0; r];
    for i in 0..n {
        for j in 0..r {
            let mu = &theta.means[j];
            let mut sq = 0.0;
            for c in 0..m {
                let d = data[(i, c)] - mu[c];
                sq += d * d;
            }
            logs[j] = log_norm[j] - sq * inv2v[j];
        }
        let lse = log_sum_exp(&logs);
        loglik += lse;
        for j in 0..r {
            resp[(i, j)] = (logs[j] - lse).exp();
        }
    }
    Ok((Responsibilities(resp), loglik))
}

/// `(1/(n·m)) Σ ‖x_i − x̄‖²`.
pub fn pooled_variance(data: &DMatrix<f64>) -> f64 {
    let n = data.nrows();
    let m = data.ncols();
    if n == 0 || m == 0 {
        return 0.0;
    }
    let mean = data.row_mean();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..m {
            acc += (data[(i, j)] - mean[j]).powi(2);
        }
    }
    acc / (n * m) as f64
}

/// Result of [`m_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct MStep {
    pub params: GmmParams,
    /// Components that were empty and got reseeded.
    pub reseeded: Vec<usize>,
}

/// Weighted-statistics update. Components whose mass falls below
/// `1e-10·n` are reseeded at a random data point with the pooled variance.
pub fn m_step(
    data: &DMatrix<f64>,
    resp: &Responsibilities,
    variance_floor: f64,
    rng: &mut impl Rng,
) -> Result<MStep> {
    let n = data.nrows();
    let m = data.ncols();
    let r = resp.0.ncols();
    if resp.0.nrows() != n {
        return Err(Error::input("responsibility rows do not match data rows"));
    }
    if n == 0 || r == 0 {
        return Err(Error::input("empty data or zero components"));
    }
    let mut weights = vec![0.0; r];
    let mut means = vec![vec![0.0; m]; r];
    let mut variances = vec![0.0; r];
    let mut reseeded = Vec::new();
    let pooled = pooled_variance(data);
    let rows: Vec<usize> = (0..n).collect();
    for j in 0..r {
        let col = resp.0.column(j);
        let nj: f64 = col.iter().sum();
        if !(nj >= 1e-10 * n as f64) {
            let &pick = rows.choose(rng).expect("n > 0");
            means[j] = data.row(pick).iter().copied().collect();
            variances[j] = pooled.max(variance_floor);
            weights[j] = 1.0 / n as f64;
            reseeded.push(j);
            continue;
        }
        for i in 0..n {
            let w = col[i];
            if w == 0.0 {
                continue;
            }
            for c in 0..m {
                means[j][c] += w * data[(i, c)];
            }
        }
        for c in 0..m {
            means[j][c] /= nj;
        }
        let mut ss = 0.0;
        for i in 0..n {
            let w = col[i];
            if w == 0.0 {
                continue;
            }
            let mut sq = 0.0;
            for c in 0..m {
                let d = data[(i, c)] - means[j][c];
                sq += d * d;
            }
            ss += w * sq;
        }
        variances[j] = (ss / (m as f64 * nj)).max(variance_floor);
        weights[j] = nj / n as f64;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(MStep {
        params: GmmParams {
            weights,
            means,
            variances,
        },
        reseeded,
    })
}

/// Variance floor relative to the pooled variance of the data.
pub const VARIANCE_FLOOR_FACTOR: f64 = 1e-8;

pub fn variance_floor(data: &DMatrix<f64>) -> f64 {
    (VARIANCE_FLOOR_FACTOR * pooled_variance(data)).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Stop when the relative log-likelihood gain drops below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub params: GmmParams,
    /// Log-likelihood of the initial parameters followed by one entry per
    /// iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub hard_labels: Vec<usize>,
    /// Total number of component reseeds across iterations.
    pub reseeds: usize,
}

impl EmResult {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }

    /// Most negative relative step `(ℓ_{t+1} − ℓ_t)/|ℓ_t|`, or 0.
    pub fn worst_relative_decrease(&self) -> f64 {
        self.loglik_trace
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::min)
    }
}

/// Runs EM from `init` until the relative gain falls below `opts.tol` or
/// `opts.max_iter` iterations have been made.
pub fn em_fit(data: &DMatrix<f64>, init: &GmmParams, opts: &EmOptions) -> Result<EmResult> {
    init.validate()?;
    check_dims(init, data)?;
    let floor = variance_floor(data);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = init.clone();
    let (mut resp, mut ll) = e_step(&params, data)?;
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let mut reseeds = 0;
    while iterations < opts.max_iter {
        let step = m_step(data, &resp, floor, &mut rng)?;
        reseeds += step.reseeded.len();
        params = step.params;
        let (new_resp, new_ll) = e_step(&params, data)?;
        iterations += 1;
        let gain = (new_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        resp = new_resp;
        ll = new_ll;
        trace.push(ll);
        if gain < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(EmResult {
        hard_labels: resp.hard_labels(),
        params,
        loglik_trace: trace,
        iterations,
        converged,
        reseeds,
    })
}
