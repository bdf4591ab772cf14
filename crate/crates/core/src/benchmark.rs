//! Fitting pipeline and the simulation benchmark comparing EM initialisers.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{em_fit, sample, EmOptions, GmmParams, Initializer};
use crate::metrics;

/// Four-component mixture in six dimensions with one small cluster.
pub fn example1() -> GmmParams {
    normalized(GmmParams {
        weights: vec![0.2782, 0.0139, 0.3324, 0.3756],
        means: vec![
            vec![-5.0, -9.0, 8.0, 8.0, 2.0, 5.0],
            vec![-7.0, 6.0, -1.0, 6.0, -8.0, -10.0],
            vec![-4.0, -10.0, -5.0, 1.0, 5.0, 4.0],
            vec![-6.0, 6.0, 5.0, 4.0, -1.0, -1.0],
        ],
        variances: vec![1.5, 2.5, 5.0, 15.0],
    })
}

/// Three overlapping components in five dimensions.
pub fn example2() -> GmmParams {
    normalized(GmmParams {
        weights: vec![0.0930, 0.2151, 0.6918],
        means: vec![
            vec![7.0, -4.0, -4.0, -6.0, -4.0],
            vec![2.0, -4.0, -6.0, -10.0, -3.0],
            vec![4.0, -4.0, -5.0, 6.0, 1.0],
        ],
        variances: vec![5.0, 10.0, 15.0],
    })
}

// The published weights are rounded to four decimals and sum to 1 ± 1e-4.
fn normalized(mut p: GmmParams) -> GmmParams {
    let total: f64 = p.weights.iter().sum();
    p.weights.iter_mut().for_each(|w| *w /= total);
    p
}

/// Seed of stream `stream` under `base` (splitmix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initializer: Initializer,
    pub params: GmmParams,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `2ℓ − ν log n`.
    pub bic: f64,
    pub nu: usize,
    pub ari: Option<f64>,
    pub error_rate: Option<f64>,
    pub wall_time_s: f64,
    pub fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip)]
    pub hard_labels: Vec<usize>,
}

/// Initialiser followed by EM; the timing covers both. `em.seed` also
/// seeds the initialiser.
pub fn fit(
    data: &DMatrix<f64>,
    r: usize,
    init: Initializer,
    em: &EmOptions,
    truth: Option<&[usize]>,
) -> Result<FitReport> {
    if let Some(t) = truth {
        if t.len() != data.nrows() {
            return Err(Error::input(format!(
                "{} labels for {} observations",
                t.len(),
                data.nrows()
            )));
        }
    }
    let start = Instant::now();
    let outcome = init.run(data, r, em.seed)?;
    let em = em_fit(data, &outcome.params, em)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let n = data.nrows();
    let nu = metrics::spherical_param_count(r, data.ncols());
    let loglik = em.loglik();
    let (ari, error_rate) = match truth {
        Some(t) => {
            let k = r.max(t.iter().copied().max().map_or(0, |x| x + 1));
            (
                Some(metrics::ari(&em.hard_labels, t)?),
                Some(metrics::error_rate(&em.hard_labels, t, k)?),
            )
        }
        None => (None, None),
    };
    Ok(FitReport {
        initializer: init,
        params: em.params,
        loglik,
        loglik_trace: em.loglik_trace,
        iterations: em.iterations,
        converged: em.converged,
        bic: metrics::bic(loglik, n, nu),
        nu,
        ari,
        error_rate,
        wall_time_s,
        fallback: outcome.fallback,
        note: outcome.note,
        hard_labels: em.hard_labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: GmmParams,
    pub n: usize,
    pub replicates: usize,
    pub initializers: Vec<Initializer>,
    pub master_seed: u64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Relative log-likelihood gain below which EM stops.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Outer repetitions of the whole study (mean/variance of the shares).
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    EmOptions::default().tol
}

fn default_repeats() -> usize {
    1
}

impl ExperimentConfig {
    pub fn new(model: GmmParams, n: usize, replicates: usize, master_seed: u64) -> Self {
        Self {
            model,
            n,
            replicates,
            initializers: Initializer::ALL.to_vec(),
            master_seed,
            max_iter: default_max_iter(),
            tol: default_tol(),
            repeats: default_repeats(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.replicates == 0 || self.repeats == 0 {
            return Err(Error::input("replicates and repeats must be at least 1"));
        }
        if !(self.tol >= 0.0) || self.max_iter == 0 {
            return Err(Error::input("tol must be non-negative and max_iter positive"));
        }
        if self.initializers.is_empty() {
            return Err(Error::input("at least one initializer is required"));
        }
        if self.n < self.model.n_components() {
            return Err(Error::input("sample size is smaller than the number of components"));
        }
        Ok(())
    }
}

/// One fit inside the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub repeat: usize,
    pub replicate: usize,
    pub initializer: Initializer,
    pub failed: bool,
    pub fallback: bool,
    pub bic: f64,
    pub ari: f64,
    pub error_rate: f64,
    pub loglik: f64,
    pub iterations: usize,
    /// Most negative relative log-likelihood step of the EM run.
    pub worst_step: f64,
    pub time_s: f64,
    pub message: String,
}

/// Percentages of replicates in which an initialiser achieved each "best".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub best_bic: f64,
    pub best_ari: f64,
    pub ari_ge_099: f64,
    pub best_error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub repeat: usize,
    pub shares: BTreeMap<Initializer, Shares>,
    pub median_ari: BTreeMap<Initializer, f64>,
    pub failures: BTreeMap<Initializer, usize>,
    pub fallbacks: BTreeMap<Initializer, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub replicates: usize,
    pub repeats: usize,
    pub n: usize,
    pub master_seed: u64,
    pub per_repeat: Vec<RepeatSummary>,
    pub mean: BTreeMap<Initializer, Shares>,
    pub variance: BTreeMap<Initializer, Shares>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub rows: Vec<ReplicateRow>,
    pub summary: BenchmarkSummary,
    /// Mean wall time per fit, seconds. Not part of the summary so that the
    /// summary stays reproducible byte for byte.
    pub mean_time_s: BTreeMap<Initializer, f64>,
}

/// BIC values closer than this count as tied.
pub const BIC_TIE: f64 = 1e-9;
pub const ARI_ACCURATE: f64 = 0.99;

fn run_one(cfg: &ExperimentConfig, repeat: usize, replicate: usize, data_seed: u64) -> Vec<ReplicateRow> {
    let r = cfg.model.n_components();
    let failure = |init: Initializer, msg: String| ReplicateRow {
        repeat,
        replicate,
        initializer: init,
        failed: true,
        fallback: false,
        bic: f64::NAN,
        ari: f64::NAN,
        error_rate: f64::NAN,
        loglik: f64::NAN,
        iterations: 0,
        worst_step: 0.0,
        time_s: 0.0,
        message: msg,
    };
    let ds = match sample(&cfg.model, cfg.n, data_seed) {
        Ok(ds) => ds,
        Err(e) => return cfg.initializers.iter().map(|&i| failure(i, e.to_string())).collect(),
    };
    let truth = ds.labels.expect("sample returns labels");
    cfg.initializers
        .iter()
        .enumerate()
        .map(|(k, &init)| {
            let seed = derive_seed(data_seed, k as u64);
            let em = EmOptions {
                max_iter: cfg.max_iter,
                tol: cfg.tol,
                seed,
            };
            match fit(&ds.data, r, init, &em, Some(&truth)) {
                Ok(rep) => {
                    let worst_step = rep
                        .loglik_trace
                        .windows(2)
                        .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::min);
                    ReplicateRow {
                        repeat,
                        replicate,
                        initializer: init,
                        failed: false,
                        fallback: rep.fallback,
                        bic: rep.bic,
                        ari: rep.ari.unwrap_or(f64::NAN),
                        error_rate: rep.error_rate.unwrap_or(f64::NAN),
                        loglik: rep.loglik,
                        iterations: rep.iterations,
                        worst_step,
                        time_s: rep.wall_time_s,
                        message: rep.note.unwrap_or_default(),
                    }
                }
                Err(e) => failure(init, e.to_string()),
            }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Tie-inclusive "best" shares for one repeat.
pub fn summarize_repeat(rows: &[ReplicateRow], repeat: usize, inits: &[Initializer], replicates: usize) -> RepeatSummary {
    let mut counts: BTreeMap<Initializer, [usize; 4]> = inits.iter().map(|&i| (i, [0; 4])).collect();
    for rep in 0..replicates {
        let group: Vec<&ReplicateRow> = rows
            .iter()
            .filter(|r| r.repeat == repeat && r.replicate == rep && !r.failed)
            .collect();
        if group.is_empty() {
            continue;
        }
        let best_bic = group.iter().map(|r| r.bic).fold(f64::NEG_INFINITY, f64::max);
        let best_ari = group.iter().map(|r| r.ari).fold(f64::NEG_INFINITY, f64::max);
        let best_err = group.iter().map(|r| r.error_rate).fold(f64::INFINITY, f64::min);
        for r in &group {
            let c = counts.get_mut(&r.initializer).expect("known initializer");
            if (r.bic - best_bic).abs() <= BIC_TIE {
                c[0] += 1;
            }
            if r.ari == best_ari {
                c[1] += 1;
            }
            if r.ari >= ARI_ACCURATE {
                c[2] += 1;
            }
            if r.error_rate == best_err {
                c[3] += 1;
            }
        }
    }
    let pct = |c: usize| 100.0 * c as f64 / replicates as f64;
    let shares = counts
        .iter()
        .map(|(&i, c)| {
            (
                i,
                Shares {
                    best_bic: pct(c[0]),
                    best_ari: pct(c[1]),
                    ari_ge_099: pct(c[2]),
                    best_error_rate: pct(c[3]),
                },
            )
        })
        .collect();
    let of = |init: Initializer| rows.iter().filter(move |r| r.repeat == repeat && r.initializer == init);
    RepeatSummary {
        repeat,
        shares,
        median_ari: inits.iter().map(|&i| (i, median(of(i).map(|r| r.ari).collect()))).collect(),
        failures: inits.iter().map(|&i| (i, of(i).filter(|r| r.failed).count())).collect(),
        fallbacks: inits.iter().map(|&i| (i, of(i).filter(|r| r.fallback).count())).collect(),
    }
}

fn mean_and_variance(per_repeat: &[RepeatSummary], inits: &[Initializer]) -> (BTreeMap<Initializer, Shares>, BTreeMap<Initializer, Shares>) {
    let k = per_repeat.len() as f64;
    let mut mean = BTreeMap::new();
    let mut var = BTreeMap::new();
    for &init in inits {
        let get = |f: fn(&Shares) -> f64| -> Vec<f64> { per_repeat.iter().map(|s| f(&s.shares[&init])).collect() };
        let stats = |v: Vec<f64>| -> (f64, f64) {
            let mu = v.iter().sum::<f64>() / k;
            // sample variance across repeats (0 for a single repeat)
            let s2 = if v.len() > 1 {
                v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            (mu, s2)
        };
        let (a, av) = stats(get(|s| s.best_bic));
        let (b, bv) = stats(get(|s| s.best_ari));
        let (c, cv) = stats(get(|s| s.ari_ge_099));
        let (d, dv) = stats(get(|s| s.best_error_rate));
        mean.insert(init, Shares { best_bic: a, best_ari: b, ari_ge_099: c, best_error_rate: d });
        var.insert(init, Shares { best_bic: av, best_ari: bv, ari_ge_099: cv, best_error_rate: dv });
    }
    (mean, var)
}

/// Simulates `replicates` datasets per repeat and fits each with every
/// configured initialiser. Replicates run in parallel on the current rayon
/// pool; results are ordered by (repeat, replicate, initializer).
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|p| (0..cfg.replicates).map(move |i| (p, i)))
        .collect();
    let rows: Vec<ReplicateRow> = jobs
        .par_iter()
        .map(|&(p, i)| {
            let data_seed = cfg.master_seed.wrapping_add((p * cfg.replicates + i) as u64);
            run_one(cfg, p, i, data_seed)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let per_repeat: Vec<RepeatSummary> = (0..cfg.repeats)
        .map(|p| summarize_repeat(&rows, p, &cfg.initializers, cfg.replicates))
        .collect();
    let (mean, variance) = mean_and_variance(&per_repeat, &cfg.initializers);
    let mean_time_s = cfg
        .initializers
        .iter()
        .map(|&i| {
            let t: Vec<f64> = rows.iter().filter(|r| r.initializer == i && !r.failed).map(|r| r.time_s).collect();
            (i, if t.is_empty() { f64::NAN } else { t.iter().sum::<f64>() / t.len() as f64 })
        })
        .collect();
    Ok(BenchmarkOutput {
        summary: BenchmarkSummary {
            replicates: cfg.replicates,
            repeats: cfg.repeats,
            n: cfg.n,
            master_seed: cfg.master_seed,
            per_repeat,
            mean,
            variance,
        },
        rows,
        mean_time_s,
    })
}

pub fn summary_to_json(s: &BenchmarkSummary) -> String {
    serde_json::to_string_pretty(s).expect("plain data serialises")
}

pub const ROW_HEADER: &str = "repeat,replicate,initializer,failed,fallback,bic,ari,error_rate,loglik,iterations,worst_step,time_s,message";

pub fn rows_to_csv(rows: &[ReplicateRow]) -> String {
    let mut out = String::from(ROW_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.6},\"{}\"\n",
            r.repeat,
            r.replicate,
            r.initializer,
            r.failed,
            r.fallback,
            r.bic,
            r.ari,
            r.error_rate,
            r.loglik,
            r.iterations,
            r.worst_step,
            r.time_s,
            r.message.replace('"', "'")
        ));
    }
    out
}

/// Aligned plain-text table of the mean shares.
pub fn summary_table(s: &BenchmarkSummary, times: Option<&BTreeMap<Initializer, f64>>) -> String {
    let mut out = format!(
        "{:<10} {:>9} {:>9} {:>11} {:>11} {:>10}\n",
        "method", "BIC", "ARI", "ARI>=0.99", "errorRate", "time(s)"
    );
    for (init, sh) in &s.mean {
        let t = times.and_then(|t| t.get(init)).map_or("-".to_string(), |x| format!("{x:.3}"));
        out.push_str(&format!(
            "em_{:<7} {:>8.2}% {:>8.2}% {:>10.2}% {:>10.2}% {:>10}\n",
            init.name(),
            sh.best_bic,
            sh.best_ari,
            sh.ari_ge_099,
            sh.best_error_rate,
            t
        ));
    }
    out
}
