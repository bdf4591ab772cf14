//! Model-selection and partition-agreement criteria.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bic: f64,
    pub ari: Option<f64>,
    pub error_rate: Option<f64>,
    pub loglik: f64,
    pub nu: usize,
}

/// Free parameters of the spherical mixture with per-component variances.
pub fn spherical_param_count(r: usize, m: usize) -> usize {
    (r - 1) + r * m + r
}

/// `2ℓ − ν log n`; larger is better.
pub fn bic(loglik: f64, n: usize, nu: usize) -> f64 {
    2.0 * loglik - (n as f64).ln() * nu as f64
}

/// The same criterion with the opposite sign, `−2ℓ + ν log n`.
pub fn bic_lower_is_better(loglik: f64, n: usize, nu: usize) -> f64 {
    -bic(loglik, n, nu)
}

fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

/// Adjusted Rand index from pair counts: `index` pairs together in both
/// partitions, `sum_a`/`sum_b` pairs together in each, `total` all pairs.
pub(crate) fn ari_from_pair_counts(index: u64, sum_a: u64, sum_b: u64, total: u64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let expected = sum_a as f64 * sum_b as f64 / total as f64;
    let max = 0.5 * (sum_a + sum_b) as f64;
    let denom = max - expected;
    if denom == 0.0 {
        // only reachable when both partitions are all-singletons or a single block
        return 1.0;
    }
    (index as f64 - expected) / denom
}

fn compact_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Adjusted Rand index via the contingency table.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    if labels_a.len() != labels_b.len() {
        return Err(Error::input(format!(
            "label vectors differ in length ({} vs {})",
            labels_a.len(),
            labels_b.len()
        )));
    }
    let (a, ka) = compact_labels(labels_a);
    let (b, kb) = compact_labels(labels_b);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(&b) {
        table[x * kb + y] += 1;
    }
    let index = table.iter().map(|&c| choose2(c)).sum();
    let sum_a = (0..ka)
        .map(|i| choose2(table[i * kb..(i + 1) * kb].iter().sum()))
        .sum();
    let sum_b = (0..kb)
        .map(|j| choose2((0..ka).map(|i| table[i * kb + j]).sum()))
        .sum();
    let total = choose2(a.len() as u64);
    Ok(ari_from_pair_counts(index, sum_a, sum_b, total))
}

/// Minimum misclassification rate over relabelings of `pred`.
pub fn error_rate(pred: &[usize], truth: &[usize], r: usize) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::input(format!(
            "label vectors differ in length ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let size = pred
        .iter()
        .chain(truth)
        .copied()
        .max()
        .map_or(r, |mx| r.max(mx + 1));
    let mut confusion = DMatrix::<f64>::zeros(size, size);
    for (&p, &t) in pred.iter().zip(truth) {
        confusion[(p, t)] += 1.0;
    }
    let cost = confusion.map(|c| -c);
    let assignment = min_cost_assignment(&cost);
    let matched: f64 = assignment.iter().enumerate().map(|(p, &t)| confusion[(p, t)]).sum();
    Ok(1.0 - matched / pred.len() as f64)
}

/// Hungarian algorithm on a square cost matrix. Returns `col[row]`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "assignment needs a square matrix");
    if n == 0 {
        return Vec::new();
    }
    // potentials, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
