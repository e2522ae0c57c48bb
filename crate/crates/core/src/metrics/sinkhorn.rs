use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::assignment::assignment_with_duals;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Square problems up to this size start from exact assignment potentials.
const WARM_START_MAX_N: usize = 5000;

const WARM_START_ANNEAL: f64 = 64.0;

/// Exponents further than this below the running maximum are dropped from log-sum-exp.
const LSE_CUTOFF: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SinkhornConfig {
    pub reg: f64,
    pub max_iters: usize,
    /// Stop once no dual potential moves by more than this (cost units).
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            reg: 1e-3,
            max_iters: 10_000,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornResult {
    /// Entropic transport cost `<pi, C>` under squared Euclidean cost.
    pub cost: f64,
    pub sqrt_cost: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Squared Euclidean distances between the rows of `a` and `b`.
pub fn sq_dist_matrix<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Array2<f64> {
    Array2::from_shape_fn((a.nrows(), b.nrows()), |(i, j)| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(&x, &y)| {
                let d = (x - y).as_f64();
                d * d
            })
            .sum()
    })
}

/// Compressed rows of the entries that matter at the current temperature.
struct Support {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    cost: Vec<f64>,
}

impl Support {
    /// Keeps, per row of `c`, the entries with `C_ij - g_j` within `margin` of the row minimum.
    fn build(c: &Array2<f64>, g: &[f64], margin: f64) -> Self {
        let (n, m) = c.dim();
        let mut ptr = Vec::with_capacity(n + 1);
        let mut idx = Vec::new();
        let mut cost = Vec::new();
        ptr.push(0);
        for i in 0..n {
            let row = c.row(i);
            let row = row.as_slice().expect("contiguous");
            let mut lo = f64::INFINITY;
            for j in 0..m {
                lo = lo.min(row[j] - g[j]);
            }
            for j in 0..m {
                if row[j] - g[j] - lo <= margin {
                    idx.push(j);
                    cost.push(row[j]);
                }
            }
            ptr.push(idx.len());
        }
        Self { ptr, idx, cost }
    }

    /// `out_i = -eps log sum_j exp((g_j - C_ij)/eps) + eps log_w`.
    fn soft_min(&self, g: &[f64], eps: f64, log_w: f64, out: &mut [f64]) -> f64 {
        let inv = 1.0 / eps;
        let mut change: f64 = 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            let (a, b) = (self.ptr[i], self.ptr[i + 1]);
            let mut mx = f64::NEG_INFINITY;
            for k in a..b {
                mx = mx.max((g[self.idx[k]] - self.cost[k]) * inv);
            }
            let mut s = 0.0;
            for k in a..b {
                let z = (g[self.idx[k]] - self.cost[k]) * inv - mx;
                if z > -LSE_CUTOFF {
                    s += z.exp();
                }
            }
            let v = -eps * (mx + s.ln()) + eps * log_w;
            change = change.max((v - *o).abs());
            *o = v;
        }
        change
    }
}

/// Transport cost of the Gibbs plan `exp((f_i + g_j - C_ij)/eps)` after
/// projecting it onto the coupling polytope: rows and columns are scaled down to
/// their marginals, then the missing mass is added as a rank-one correction.
/// The result is always a feasible coupling, so the cost is never below the
/// unregularized optimum.
fn rounded_plan_cost(c: &Array2<f64>, f: &[f64], g: &[f64], eps: f64) -> f64 {
    let (n, m) = c.dim();
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let inv = 1.0 / eps;
    let mut plan = Array2::from_shape_fn((n, m), |(i, j)| {
        let z = (f[i] + g[j] - c[[i, j]]) * inv;
        if z > -LSE_CUTOFF - 20.0 {
            z.exp()
        } else {
            0.0
        }
    });
    for mut row in plan.rows_mut() {
        let s: f64 = row.sum();
        if s > a {
            row *= a / s;
        }
    }
    for mut col in plan.columns_mut() {
        let s: f64 = col.sum();
        if s > b {
            col *= b / s;
        }
    }
    let err_r: Vec<f64> = plan.rows().into_iter().map(|r| a - r.sum()).collect();
    let err_c: Vec<f64> = plan.columns().into_iter().map(|c| b - c.sum()).collect();
    let mass: f64 = err_r.iter().sum();
    let mut cost: f64 = (&plan * c).sum();
    if mass > 0.0 {
        for i in 0..n {
            if err_r[i] > 0.0 {
                for j in 0..m {
                    cost += err_r[i] * err_c[j] * c[[i, j]] / mass;
                }
            }
        }
    }
    cost
}

/// Entropic optimal transport between uniform empirical measures, log-domain
/// iterations with geometric annealing of the regularization down to `cfg.reg`.
pub fn sinkhorn_distance<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>, cfg: &SinkhornConfig) -> Result<SinkhornResult> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::SizeMismatch("sinkhorn needs non-empty point clouds".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::SizeMismatch(format!("dimensions {} vs {}", a.ncols(), b.ncols())));
    }
    if !(cfg.reg > 0.0) {
        return Err(Error::InvalidConfig("sinkhorn reg must be positive".into()));
    }
    let c = sq_dist_matrix(a, b);
    Ok(sinkhorn_cost_matrix(&c, cfg))
}

/// Same as [`sinkhorn_distance`] on a precomputed cost matrix.
///
/// Each log-sum-exp only visits entries whose reduced cost lies within
/// `LSE_CUTOFF + SLACK` temperatures of the minimum; the supports are rebuilt
/// whenever the potentials have drifted enough to invalidate that margin.
pub fn sinkhorn_cost_matrix(c: &Array2<f64>, cfg: &SinkhornConfig) -> SinkhornResult {
    solve(c, cfg, true)
}

fn solve(c: &Array2<f64>, cfg: &SinkhornConfig, allow_warm: bool) -> SinkhornResult {
    const SLACK: f64 = 30.0;
    const STAGE_ITERS: usize = 200;
    let (n, m) = c.dim();
    let ct = c.t().as_standard_layout().to_owned();
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];

    let c_max = c.iter().cloned().fold(0.0, f64::max);
    let mut eps = c_max.max(cfg.reg);
    if allow_warm && n == m && n <= WARM_START_MAX_N && cfg.reg <= 1e-4 * c_max {
        // the unregularized optimal potentials are the small-temperature limit
        let (_, _, u, v) = assignment_with_duals(c);
        f = u;
        g = v;
        // a short anneal moves the potentials off the tied vertex the assignment returns
        eps = (cfg.reg * WARM_START_ANNEAL).min(eps);
    }
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let last = eps <= cfg.reg;
        // intermediate temperatures only need potentials settled at their own scale
        let tol = if last { cfg.tol } else { (0.1 * eps).max(cfg.tol) };
        let stage_start = iterations;
        let margin = (LSE_CUTOFF + SLACK) * eps;
        let mut rows = Support::build(c, &g, margin);
        let mut cols = Support::build(&ct, &f, margin);
        let mut drift = 0.0;
        loop {
            let df = rows.soft_min(&g, eps, log_a, &mut f);
            let dg = cols.soft_min(&f, eps, log_b, &mut g);
            iterations += 1;
            if df.max(dg) < tol {
                converged = last;
                break;
            }
            if iterations >= cfg.max_iters || (!last && iterations - stage_start >= STAGE_ITERS) {
                break;
            }
            // a reduced cost moves by at most |df| + |dg| per sweep
            drift += df + dg;
            if drift > 0.5 * SLACK * eps {
                rows = Support::build(c, &g, margin);
                cols = Support::build(&ct, &f, margin);
                drift = 0.0;
            }
        }
        if last || iterations >= cfg.max_iters {
            break;
        }
        eps = (eps * 0.5).max(cfg.reg);
    }

    let cost = rounded_plan_cost(c, &f, &g, eps);
    SinkhornResult {
        cost,
        sqrt_cost: cost.max(0.0).sqrt(),
        converged,
        iterations,
    }
}
