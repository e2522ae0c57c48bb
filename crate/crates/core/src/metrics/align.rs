use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assignment::{linear_assignment, w2_from_costs};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub max_alternations: usize,
    pub tol: f64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            max_alternations: 10,
            tol: 1e-8,
        }
    }
}

fn as_points<T: Scalar>(x: &[T], n: usize, k: usize) -> DMatrix<f64> {
    assert_eq!(x.len(), n * k, "flattened particle layout");
    DMatrix::from_fn(n, k, |i, a| x[i * k + a].as_f64())
}

/// Orthogonal `R` minimizing `|x - y R|_F` (reflections allowed).
fn procrustes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let m = y.transpose() * x;
    let svd = m.svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v_t requested")
}

fn permute_rows(y: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(y.nrows(), y.ncols(), |i, a| y[(perm[i], a)])
}

/// Particle `j` of `yr` assigned to particle `i` of `x`.
fn best_permutation(x: &DMatrix<f64>, yr: &DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows();
    let c = Array2::from_shape_fn((n, n), |(i, j)| (x.row(i) - yr.row(j)).norm_squared());
    linear_assignment(&c).0
}

/// Greedy matching on the distance to the centroid, smallest gaps first.
fn radial_greedy(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<usize> {
    let n = x.nrows();
    let rx: Vec<f64> = (0..n).map(|i| x.row(i).norm()).collect();
    let ry: Vec<f64> = (0..n).map(|j| y.row(j).norm()).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push(((rx[i] - ry[j]).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !taken[j] {
            perm[i] = j;
            taken[j] = true;
        }
    }
    perm
}

/// Rotations mapping the principal axes of `y` onto those of `x`, one per sign pattern.
fn principal_axis_rotations(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    let k = x.ncols();
    let axes = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let eig = SymmetricEigen::new(m.transpose() * m);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])])
    };
    let (ex, ey) = (axes(x), axes(y));
    (0..1usize << k)
        .map(|mask| {
            let d = DMatrix::from_fn(k, k, |r, c| match (r == c, mask >> r & 1) {
                (false, _) => 0.0,
                (true, 0) => 1.0,
                (true, _) => -1.0,
            });
            &ey * d * ex.transpose()
        })
        .collect()
}

fn sq_dist(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).norm_squared()
}

/// Alternates rotation fitting and assignment from a starting permutation.
fn alternate(x: &DMatrix<f64>, y: &DMatrix<f64>, mut perm: Vec<usize>, cfg: &AlignConfig) -> f64 {
    let mut best = f64::INFINITY;
    for _ in 0..cfg.max_alternations.max(1) {
        let yp = permute_rows(y, &perm);
        let r = procrustes(x, &yp);
        let d = sq_dist(x, &(&yp * &r));
        let improved = best - d;
        best = best.min(d);
        let next = best_permutation(x, &(y * &r));
        if next == perm || improved < cfg.tol {
            break;
        }
        perm = next;
    }
    best
}

fn one_direction(x: &DMatrix<f64>, y: &DMatrix<f64>, cfg: &AlignConfig) -> f64 {
    let n = x.nrows();
    let mut starts = vec![(0..n).collect::<Vec<_>>(), radial_greedy(x, y)];
    for r in principal_axis_rotations(x, y) {
        starts.push(best_permutation(x, &(y * r)));
    }
    starts.sort();
    starts.dedup();
    starts
        .into_iter()
        .map(|p| alternate(x, y, p, cfg))
        .fold(f64::INFINITY, f64::min)
}

/// Approximate `min_{R in O(k), P in S(n)} |x - (R ⊗ P) y|`, searched from both sides.
pub fn geometric_distance<T: Scalar>(x: &[T], y: &[T], n: usize, k: usize, cfg: &AlignConfig) -> f64 {
    let (px, py) = (as_points(x, n, k), as_points(y, n, k));
    let d = one_direction(&px, &py, cfg).min(one_direction(&py, &px, cfg));
    d.max(0.0).sqrt()
}

/// W2 under the geometric ground distance.
pub fn geometric_w2<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>, n: usize, k: usize, cfg: &AlignConfig) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::SizeMismatch(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.ncols() != n * k {
        return Err(Error::SizeMismatch(format!("{} columns for {n} particles in {k}D", a.ncols())));
    }
    let m = a.nrows();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let ai = a.row(i).to_vec();
            (0..m)
                .map(|j| geometric_distance(&ai, &b.row(j).to_vec(), n, k, cfg).powi(2))
                .collect()
        })
        .collect();
    let c = Array2::from_shape_fn((m, m), |(i, j)| rows[i][j]);
    w2_from_costs(&c)
}
