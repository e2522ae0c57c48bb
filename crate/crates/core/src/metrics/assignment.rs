use ndarray::{Array2, ArrayView2};

use super::sinkhorn::sq_dist_matrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// paths with dual potentials, `O(n^3)`). Returns `col[row]` and the total cost.
/// Ties resolve towards the lowest column index.
pub fn linear_assignment(c: &Array2<f64>) -> (Vec<usize>, f64) {
    let (col, total, _, _) = assignment_with_duals(c);
    (col, total)
}

/// Assignment plus dual potentials `(u, v)` with `u_i + v_j <= C_ij`, tight on the matching.
pub(crate) fn assignment_with_duals(c: &Array2<f64>) -> (Vec<usize>, f64, Vec<f64>, Vec<f64>) {
    let n = c.nrows();
    assert_eq!(n, c.ncols(), "square cost matrix");
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    // p[j]: row (1-based) matched to column j; column 0 is the virtual root
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = c.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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
    let mut col = vec![0usize; n];
    for j in 1..=n {
        col[p[j] - 1] = j - 1;
    }
    let total = col.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum();
    (col, total, u[1..].to_vec(), v[1..].to_vec())
}

/// Exact W2 between equal-size empirical measures: `sqrt(min_perm mean |a_i - b_perm(i)|^2)`.
pub fn w2_exact<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::SizeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    w2_from_costs(&sq_dist_matrix(a, b))
}

/// W2 from a square matrix of squared ground distances.
pub fn w2_from_costs(c: &Array2<f64>) -> Result<f64> {
    if c.nrows() != c.ncols() {
        return Err(Error::SizeMismatch(format!("cost matrix {:?}", c.dim())));
    }
    if c.nrows() == 0 {
        return Ok(0.0);
    }
    let (_, total) = linear_assignment(c);
    Ok((total / c.nrows() as f64).max(0.0).sqrt())
}
