//! Catalecticant (Hankel) matrices and interpolation degree.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::symtensor::{monomial_rank, monomials, SymmetricTensor};

/// Default relative threshold for numerical rank.
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;

/// `H_T^{k,d-k}`: rows indexed by degree-`k` monomials, columns by degree
/// `d-k` monomials, entry `(α, β) = T_{α+β}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub k: usize,
    pub order: usize,
    pub dim: usize,
    pub matrix: DMatrix<f64>,
}

impl HankelMatrix {
    pub fn rank(&self, tau: f64) -> usize {
        let s = linalg::svd_sorted(&self.matrix);
        linalg::numerical_rank(&s.singular_values, tau)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        linalg::svd_sorted(&self.matrix).singular_values
    }
}

pub fn hankel(t: &SymmetricTensor, k: usize) -> Result<HankelMatrix> {
    let d = t.order();
    if k == 0 || k >= d {
        return Err(Error::input(format!(
            "row degree k={k} must satisfy 1 <= k <= d-1 = {}",
            d.saturating_sub(1)
        )));
    }
    let m = t.dim();
    let rows = monomials(m, k);
    let cols = monomials(m, d - k);
    let coeffs = t.coeffs();
    let matrix = DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let sum = rows[i].plus(&cols[j]);
        coeffs[monomial_rank(&sum.0)]
    });
    Ok(HankelMatrix {
        k,
        order: d,
        dim: m,
        matrix,
    })
}

/// Finite set of nonzero points, pairwise distinct up to scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<Vec<f64>>,
}

impl PointSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::input("point set is empty"));
        };
        let m = first.len();
        if m == 0 || points.iter().any(|p| p.len() != m) {
            return Err(Error::input("points must share a positive dimension"));
        }
        if points.iter().any(|p| p.iter().all(|&x| x == 0.0)) {
            return Err(Error::input("point set contains the zero vector"));
        }
        let normed: Vec<Vec<f64>> = points.iter().map(|p| unit_line(p)).collect();
        for i in 0..normed.len() {
            for j in 0..i {
                let dist: f64 = normed[i]
                    .iter()
                    .zip(&normed[j])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if dist < 1e-12 {
                    return Err(Error::input(format!("points {j} and {i} span the same line")));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Unit vector on the line through `p`, largest-magnitude entry positive.
pub(crate) fn unit_line(p: &[f64]) -> Vec<f64> {
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    let pivot = p
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    let s = if pivot < 0.0 { -norm } else { norm };
    p.iter().map(|x| x / s).collect()
}

/// Row `i` holds `(ξ_i^α)_{|α|=k}` in graded-lex order.
pub fn evaluation_matrix(points: &PointSet, k: usize) -> DMatrix<f64> {
    let basis = monomials(points.dim(), k);
    DMatrix::from_fn(points.len(), basis.len(), |i, j| basis[j].monomial(&points.points[i]))
}

/// Smallest degree `k` at which the evaluation map onto the points is
/// surjective. The search is capped at `k = r`.
pub fn interpolation_degree(points: &PointSet) -> Result<usize> {
    // the degree is scale invariant, so work on unit representatives
    let unit = PointSet {
        points: points.points.iter().map(|p| unit_line(p)).collect(),
    };
    let r = unit.len();
    for k in 1..=r.max(1) {
        let e = evaluation_matrix(&unit, k);
        let s = linalg::svd_sorted(&e);
        if linalg::numerical_rank(&s.singular_values, DEFAULT_RANK_TOLERANCE) == r {
            return Ok(k);
        }
    }
    Err(Error::NumericalFailure {
        message: format!("evaluation map never reached rank {r} up to degree {r}"),
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symtensor::WaringDecomposition;

    fn canonical(m: usize, r: usize) -> SymmetricTensor {
        let points = (0..r)
            .map(|i| {
                let mut e = vec![0.0; m];
                e[i] = 1.0;
                e
            })
            .collect();
        WaringDecomposition::new(vec![1.0; r], points, 3)
            .unwrap()
            .reconstruct()
            .unwrap()
    }

    #[test]
    fn canonical_sum_of_cubes_has_rank_r() {
        let h = hankel(&canonical(2, 2), 1).unwrap();
        assert_eq!(h.matrix.shape(), (2, 3));
        assert_eq!(h.rank(DEFAULT_RANK_TOLERANCE), 2);
        let h = hankel(&canonical(5, 3), 1).unwrap();
        assert_eq!(h.rank(DEFAULT_RANK_TOLERANCE), 3);
    }

    #[test]
    fn rank_one_column_space() {
        let xi = [0.5, -1.0, 2.0];
        let t = SymmetricTensor::pow_linear(&xi, 3).unwrap();
        let h = hankel(&t, 2).unwrap();
        assert_eq!(h.rank(DEFAULT_RANK_TOLERANCE), 1);
        let xi2: Vec<f64> = monomials(3, 2).iter().map(|a| a.monomial(&xi)).collect();
        let xi1 = &xi;
        for i in 0..h.matrix.nrows() {
            for j in 0..h.matrix.ncols() {
                assert!((h.matrix[(i, j)] - xi2[i] * xi1[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hankel_structure_depends_on_sum_only() {
        let t = SymmetricTensor::from_fn(3, 4, |a| a.rank() as f64).unwrap();
        let h = hankel(&t, 2).unwrap();
        let rows = monomials(3, 2);
        let cols = monomials(3, 2);
        for (i, a) in rows.iter().enumerate() {
            for (j, b) in cols.iter().enumerate() {
                for (i2, a2) in rows.iter().enumerate() {
                    for (j2, b2) in cols.iter().enumerate() {
                        if a.plus(b) == a2.plus(b2) {
                            assert_eq!(h.matrix[(i, j)], h.matrix[(i2, j2)]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn k_out_of_range() {
        let t = canonical(2, 2);
        assert!(hankel(&t, 0).is_err());
        assert!(hankel(&t, 3).is_err());
    }

    #[test]
    fn evaluation_matrix_examples() {
        let ps = PointSet::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let e = evaluation_matrix(&ps, 1);
        assert_eq!(e, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]));

        let ps = PointSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let e = evaluation_matrix(&ps, 2);
        assert_eq!(e, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn interpolation_degree_examples() {
        let ps = PointSet::new(vec![vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 3.0]]).unwrap();
        assert_eq!(interpolation_degree(&ps).unwrap(), 1);

        let ps = PointSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(interpolation_degree(&ps).unwrap(), 2);

        let ps = PointSet::new(vec![vec![3.0, -1.0]]).unwrap();
        assert_eq!(interpolation_degree(&ps).unwrap(), 1);
        assert_eq!(evaluation_matrix(&ps, 1).rank(1e-12), 1);
    }

    #[test]
    fn point_set_rejects_degenerate_input() {
        assert!(PointSet::new(vec![]).is_err());
        assert!(PointSet::new(vec![vec![0.0, 0.0]]).is_err());
        assert!(PointSet::new(vec![vec![1.0, 1.0], vec![-2.0, -2.0]]).is_err());
        assert!(PointSet::new(vec![vec![1.0, 1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn interpolation_degree_scale_invariant() {
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, -2.0]];
        let base = interpolation_degree(&PointSet::new(pts.clone()).unwrap()).unwrap();
        let scaled: Vec<Vec<f64>> = pts
            .iter()
            .zip([3.0, -0.01, 100.0, -7.0])
            .map(|(p, s)| p.iter().map(|x| x * s).collect())
            .collect();
        assert_eq!(interpolation_degree(&PointSet::new(scaled).unwrap()).unwrap(), base);
        assert_eq!(base, 3);
    }
}
