//! Principal component projection.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `m × q`, orthonormal columns ordered by decreasing singular value.
    pub components: DMatrix<f64>,
    /// All `m` singular values of the centred data, descending.
    pub singular_values: Vec<f64>,
    /// `n × q` projected data.
    pub scores: DMatrix<f64>,
}

/// Centres the data and projects it on the top `q` right singular vectors.
/// Each direction is signed so its largest-magnitude loading is positive.
pub fn pca(data: &DMatrix<f64>, q: usize) -> Result<Pca> {
    let (n, m) = data.shape();
    if n == 0 || m == 0 {
        return Err(Error::input("empty data"));
    }
    if q == 0 || q > m {
        return Err(Error::input(format!("q must lie in 1..={m}, got {q}")));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::input("data contains non-finite entries"));
    }
    let mean = data.row_mean();
    let mut centred = data.clone();
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    // right singular vectors = eigenvectors of the scatter matrix
    let scatter = centred.transpose() * &centred;
    let (values, vectors) = linalg::symmetric_eigen_ascending(&scatter);
    let singular_values = values.iter().rev().map(|v| v.max(0.0).sqrt()).collect();
    let components = DMatrix::from_fn(m, q, |i, j| vectors[(i, m - 1 - j)]);
    let scores = &centred * &components;
    Ok(Pca {
        mean: mean.iter().copied().collect(),
        components,
        singular_values,
        scores,
    })
}
