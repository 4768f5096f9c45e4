//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Builds a matrix whose columns are the given vectors.
pub fn columns(vectors: &[Vec<f64>]) -> DMatrix<f64> {
    let rows = vectors.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows, vectors.len(), |r, c| vectors[c][r])
}

/// Numerical rank with a relative singular-value threshold.
///
/// Nonzero columns are normalized first (the span is invariant under
/// column scaling, and bracket generators vary over many orders of
/// magnitude), then singular values above `tol × σ_max` are counted.
pub fn svd_rank(vectors: &[Vec<f64>], tol: f64) -> usize {
    let kept: Vec<Vec<f64>> = vectors
        .iter()
        .filter_map(|v| {
            let norm = crate::math::norm(v);
            if norm > 0.0 && norm.is_finite() {
                Some(v.iter().map(|x| x / norm).collect())
            } else {
                None
            }
        })
        .collect();
    if kept.is_empty() {
        return 0;
    }
    let m = columns(&kept);
    let sv = m.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Smallest and largest singular values of a square matrix.
pub fn singular_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let sv = m.clone().singular_values();
    (sv.min(), sv.max())
}

/// Least-squares solve `A x ≈ b` via SVD; returns the residual norm along
/// with the minimizer.
pub fn least_squares(a: &DMatrix<f64>, b: &[f64]) -> (Vec<f64>, f64) {
    let bv = DVector::from_column_slice(b);
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&bv, 1e-13)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()));
    let res = (a * &x - &bv).norm();
    (x.as_slice().to_vec(), res)
}

/// Solves the square system `A x = b` by LU with partial pivoting.
pub fn lu_solve(a: &DMatrix<f64>, b: &[f64]) -> Option<Vec<f64>> {
    let bv = DVector::from_column_slice(b);
    a.clone().lu().solve(&bv).map(|x| x.as_slice().to_vec())
}

/// Orthonormal basis of the (numerical) nullspace of `A`, using right
/// singular vectors whose singular values fall below `tol × σ_max`
/// (absolute `tol` when `A = 0`).
pub fn nullspace(a: &DMatrix<f64>, tol: f64) -> Vec<Vec<f64>> {
    let ncols = a.ncols();
    if a.nrows() == 0 {
        // trivial system: the whole space
        return (0..ncols)
            .map(|i| {
                let mut e = alloc::vec![0.0; ncols];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    // pad with zero rows: the thin SVD then carries a full square V
    let work = if a.nrows() < ncols {
        let mut padded = DMatrix::zeros(ncols, ncols);
        padded.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.max().max(0.0);
    let thresh = if smax > 0.0 { tol * smax } else { tol };
    let mut basis = Vec::new();
    for i in 0..vt.nrows() {
        let s = if i < sv.len() { sv[i] } else { 0.0 };
        if s <= thresh {
            basis.push(vt.row(i).iter().copied().collect());
        }
    }
    basis
}

/// Unit right singular vector of the smallest singular value: the best
/// least-squares annihilator of the rows of `A`.
pub fn smallest_right_singular_vector(a: &DMatrix<f64>) -> Vec<f64> {
    let ncols = a.ncols();
    let work = if a.nrows() < ncols {
        let mut padded = DMatrix::zeros(ncols, ncols);
        padded.view_mut((0, 0), (a.nrows(), ncols)).copy_from(a);
        padded
    } else {
        a.clone()
    };
    let svd = work.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let mut best = 0usize;
    for i in 1..sv.len().min(vt.nrows()) {
        if sv[i] < sv[best] {
            best = i;
        }
    }
    vt.row(best).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_singular_direction_annihilates() {
        let a = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let v = smallest_right_singular_vector(&a);
        assert!((3.0 * v[0] + 4.0 * v[1]).abs() < 1e-12);
    }

    #[test]
    fn rank_of_duplicated_columns() {
        let v1 = alloc::vec![1.0, 0.0, 0.0];
        let v2 = alloc::vec![0.0, 2.0, 0.0];
        assert_eq!(svd_rank(&[v1.clone(), v2.clone()], 1e-8), 2);
        assert_eq!(svd_rank(&[v1.clone(), v1.clone(), v2], 1e-8), 2);
        assert_eq!(svd_rank(&[alloc::vec![0.0, 0.0, 0.0]], 1e-8), 0);
    }

    #[test]
    fn scaling_does_not_change_rank() {
        // wildly scaled but orthogonal vectors: without per-column
        // normalization the relative threshold would collapse this to 1
        let v1 = alloc::vec![1e-9, 0.0, 0.0];
        let v2 = alloc::vec![0.0, 1e9, 0.0];
        assert_eq!(svd_rank(&[v1, v2], 1e-8), 2);
    }

    #[test]
    fn lstsq_and_lu() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let (x, r) = least_squares(&a, &[2.0, 8.0]);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        assert!(r < 1e-12);
        let y = lu_solve(&a, &[4.0, 4.0]).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nullspace_of_rank_one_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
        let ns = nullspace(&a, 1e-10);
        assert_eq!(ns.len(), 2);
        for v in ns {
            assert!(v[0].abs() < 1e-12);
        }
    }
}
