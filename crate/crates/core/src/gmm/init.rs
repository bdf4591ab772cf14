//! EM initialisers: k-means, method of moments, emEM and random.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{em_fit, m_step, pooled_variance, variance_floor, EmOptions, GmmParams, Responsibilities};
use crate::error::{Error, Result};
use crate::moments::{empirical_moments, recover_parameters, RecoveryOptions};

pub const KMEANS_RUNS: usize = 50;
pub const EMEM_SHORT_RUNS: usize = 50;
pub const EMEM_SHORT_ITERS: usize = 5;
const LLOYD_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Initializer {
    Kmeans,
    Moments,
    Emem,
    Random,
}

impl Initializer {
    pub const ALL: [Initializer; 4] = [
        Initializer::Kmeans,
        Initializer::Moments,
        Initializer::Emem,
        Initializer::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Initializer::Kmeans => "kmeans",
            Initializer::Moments => "moments",
            Initializer::Emem => "emem",
            Initializer::Random => "random",
        }
    }

    /// Runs the initialiser with its default restart counts.
    pub fn run(self, data: &DMatrix<f64>, r: usize, seed: u64) -> Result<InitOutcome> {
        match self {
            Initializer::Kmeans => init_kmeans(data, r, KMEANS_RUNS, seed),
            Initializer::Moments => init_moments(data, r, &RecoveryOptions::default(), seed),
            Initializer::Emem => init_emem(data, r, EMEM_SHORT_RUNS, EMEM_SHORT_ITERS, seed),
            Initializer::Random => init_random(data, r, seed),
        }
    }
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Initializer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "km" => Ok(Initializer::Kmeans),
            "moments" | "mom" => Ok(Initializer::Moments),
            "emem" => Ok(Initializer::Emem),
            "random" => Ok(Initializer::Random),
            other => Err(Error::input(format!("unknown initializer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitOutcome {
    pub params: GmmParams,
    /// The method failed and random initialisation was used instead.
    pub fallback: bool,
    pub note: Option<String>,
}

impl InitOutcome {
    fn ok(params: GmmParams) -> Self {
        Self {
            params,
            fallback: false,
            note: None,
        }
    }
}

fn check_sizes(data: &DMatrix<f64>, r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::input("number of components must be positive"));
    }
    if data.nrows() < r {
        return Err(Error::input(format!(
            "need at least r={r} observations, got {}",
            data.nrows()
        )));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("data contains non-finite entries"));
    }
    Ok(())
}

/// `r` distinct rows as means, uniform weights, pooled variance.
pub fn init_random(data: &DMatrix<f64>, r: usize, seed: u64) -> Result<InitOutcome> {
    check_sizes(data, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = index::sample(&mut rng, data.nrows(), r).into_vec();
    let means = rows.iter().map(|&i| data.row(i).iter().copied().collect()).collect();
    let var = pooled_variance(data).max(variance_floor(data));
    Ok(InitOutcome::ok(GmmParams {
        weights: vec![1.0 / r as f64; r],
        means,
        variances: vec![var; r],
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
}

fn sq_dist(data: &DMatrix<f64>, i: usize, c: &[f64]) -> f64 {
    c.iter().enumerate().map(|(j, &cj)| (data[(i, j)] - cj).powi(2)).sum()
}

fn nearest(data: &DMatrix<f64>, i: usize, centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(data, i, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn plus_plus_seeds(data: &DMatrix<f64>, r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.nrows();
    let row = |i: usize| -> Vec<f64> { data.row(i).iter().copied().collect() };
    let mut centers = vec![row(rng.random_range(0..n))];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centers[0])).collect();
    while centers.len() < r {
        let pick = match WeightedIndex::new(&dist) {
            Ok(w) => w.sample(rng),
            // all points coincide with a center
            Err(_) => rng.random_range(0..n),
        };
        let c = row(pick);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(data, i, &c));
        }
        centers.push(c);
    }
    centers
}

/// One Lloyd run with k-means++ seeding.
pub fn kmeans(data: &DMatrix<f64>, r: usize, seed: u64) -> Result<KMeansResult> {
    check_sizes(data, r)?;
    let n = data.nrows();
    let m = data.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(data, r, &mut rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..LLOYD_MAX_ITER {
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (k, d) = nearest(data, i, &centers);
            if labels[i] != k {
                labels[i] = k;
                changed = true;
            }
            dists[i] = d;
        }
        let mut counts = vec![0usize; r];
        for &l in &labels {
            counts[l] += 1;
        }
        // empty clusters take the point farthest from its current center
        for k in 0..r {
            if counts[k] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = k;
                counts[k] = 1;
                dists[i] = 0.0;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; m]; r];
        for i in 0..n {
            for j in 0..m {
                sums[labels[i]][j] += data[(i, j)];
            }
        }
        for k in 0..r {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let wcss = (0..n).map(|i| sq_dist(data, i, &centers[labels[i]])).sum();
    Ok(KMeansResult {
        centers,
        labels,
        wcss,
    })
}

/// Best of `runs` k-means partitions (lowest WCSS), turned into mixture
/// parameters by a hard-assignment M-step.
pub fn init_kmeans(data: &DMatrix<f64>, r: usize, runs: usize, seed: u64) -> Result<InitOutcome> {
    check_sizes(data, r)?;
    if runs == 0 {
        return Err(Error::input("k-means needs at least one run"));
    }
    let results: Vec<KMeansResult> = (0..runs)
        .into_par_iter()
        .map(|i| kmeans(data, r, seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.wcss.total_cmp(&b.1.wcss).then(a.0.cmp(&b.0)))
        .map(|(_, res)| res)
        .expect("runs > 0");
    let resp = Responsibilities::from_labels(&best.labels, r);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = m_step(data, &resp, variance_floor(data), &mut rng)?;
    Ok(InitOutcome::ok(step.params))
}

/// emEM: `short_runs` random starts, `short_iters` EM iterations each; the
/// run with the highest log-likelihood wins.
pub fn init_emem(
    data: &DMatrix<f64>,
    r: usize,
    short_runs: usize,
    short_iters: usize,
    seed: u64,
) -> Result<InitOutcome> {
    check_sizes(data, r)?;
    if short_runs == 0 {
        return Err(Error::input("emEM needs at least one short run"));
    }
    let runs: Vec<(f64, GmmParams)> = (0..short_runs)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i as u64);
            let start = init_random(data, r, s)?.params;
            let opts = EmOptions {
                max_iter: short_iters,
                tol: f64::NEG_INFINITY,
                seed: s,
            };
            let fit = em_fit(data, &start, &opts)?;
            Ok((fit.loglik(), fit.params))
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.0 > runs[best].0 {
            best = i;
        }
    }
    Ok(InitOutcome::ok(runs[best].1.clone()))
}

/// Lower bound on each starting weight, as a fraction of `1/r`.
pub const MOMENT_WEIGHT_FLOOR: f64 = 0.2;
/// Lower bound on each starting variance, as a fraction of `σ̄²`.
pub const MOMENT_VARIANCE_FLOOR: f64 = 0.25;

/// Keeps every recovered component alive for EM: a component whose weight
/// came out near zero (or was clamped) would never regain mass, and a tiny
/// variance pins it to a handful of points.
pub fn condition_for_em(mut params: GmmParams, sigma_bar_sq: f64, floor: f64) -> GmmParams {
    let r = params.n_components() as f64;
    for w in &mut params.weights {
        *w = w.max(MOMENT_WEIGHT_FLOOR / r);
    }
    let total: f64 = params.weights.iter().sum();
    params.weights.iter_mut().for_each(|w| *w /= total);
    for v in &mut params.variances {
        *v = v.max(MOMENT_VARIANCE_FLOOR * sigma_bar_sq).max(floor);
    }
    params
}

/// Method of moments: empirical moment forms, tensor decomposition and the
/// scale/variance solves. Falls back to [`init_random`] if recovery fails.
pub fn init_moments(
    data: &DMatrix<f64>,
    r: usize,
    opts: &RecoveryOptions,
    seed: u64,
) -> Result<InitOutcome> {
    check_sizes(data, r)?;
    let m = data.ncols();
    if r > m {
        return Err(Error::input(format!(
            "moment initialisation requires r <= m (r={r}, m={m})"
        )));
    }
    if r == 1 {
        // a single spherical component is fitted exactly by the sample mean
        // and pooled variance
        let mean = data.row_mean().iter().copied().collect();
        let var = pooled_variance(data).max(variance_floor(data));
        return Ok(InitOutcome::ok(GmmParams {
            weights: vec![1.0],
            means: vec![mean],
            variances: vec![var],
        }));
    }
    let attempt = || -> Result<GmmParams> {
        let moments = empirical_moments(data)?;
        let mut ropts = opts.clone();
        ropts.decomposition.rng_seed = seed;
        let rec = recover_parameters(&moments, r, &ropts)?;
        let params = condition_for_em(rec.params, moments.sigma_bar_sq, variance_floor(data));
        params.validate()?;
        Ok(params)
    };
    match attempt() {
        Ok(params) => Ok(InitOutcome::ok(params)),
        Err(e) => {
            let mut out = init_random(data, r, seed)?;
            out.fallback = true;
            out.note = Some(format!("moment recovery failed ({e}); used random initialisation"));
            Ok(out)
        }
    }
}
