//! Analytic energy landscapes with exact gradients.
//!
//! Particle systems (double well, Lennard-Jones) live on the zero
//! center-of-mass subspace: their gradients are returned already projected.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{norm2, Scalar};

/// Pairwise distances below this are rejected rather than clamped.
pub const MIN_PAIR_DISTANCE: f64 = 1e-6;

/// Seed for the 40-mode benchmark mixture when none is configured.
pub const GMM40_DEFAULT_SEED: u64 = 40;
pub const GMM40_MODES: usize = 40;
pub const GMM40_BOX: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyFamily {
    ManyWell,
    DoubleWell4,
    LennardJones,
    Gmm40,
    /// Isotropic Gaussian mixture with explicit centers; used for toy targets.
    GaussianMixture,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnergyParams<T> {
    ManyWell {
        delta: T,
    },
    DoubleWell {
        a: T,
        b: T,
        c: T,
        d0: T,
        tau: T,
        exponentiated: bool,
    },
    LennardJones {
        r_m: T,
        eps: T,
        c_osc: T,
        tau: T,
        flip_sign: bool,
    },
    Mixture {
        /// Row-major `modes x dim` centers.
        centers: Vec<T>,
        log_weights: Vec<T>,
        stdev: T,
        seed: Option<u64>,
    },
}

/// Maximum gradient norm applied per sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradClipRule<T> {
    pub alpha_max: T,
}

impl<T: Scalar> GradClipRule<T> {
    pub fn new(alpha_max: T) -> Self {
        assert!(alpha_max > T::zero(), "alpha_max must be positive");
        Self { alpha_max }
    }

    pub fn unbounded() -> Self {
        Self {
            alpha_max: T::infinity(),
        }
    }

    pub fn apply(&self, g: &mut [T]) {
        let n = norm2(g);
        if n > self.alpha_max {
            let s = self.alpha_max / n;
            g.iter_mut().for_each(|v| *v *= s);
        }
    }
}

pub fn clip_grad<T: Scalar>(g: &[T], rule: &GradClipRule<T>) -> Vec<T> {
    let mut out = g.to_vec();
    rule.apply(&mut out);
    out
}

/// Removes the per-coordinate particle mean: `((I_n - 11^T/n) ⊗ I_k) x`.
pub fn zcom_project<T: Scalar>(x: &[T], n: usize, k: usize) -> Vec<T> {
    let mut out = x.to_vec();
    zcom_project_in_place(&mut out, n, k);
    out
}

pub fn zcom_project_in_place<T: Scalar>(x: &mut [T], n: usize, k: usize) {
    assert_eq!(x.len(), n * k, "vector length must equal n * k");
    let inv_n = T::one() / T::from_usize_lossy(n);
    for c in 0..k {
        let mut mean = T::zero();
        for i in 0..n {
            mean += x[i * k + c];
        }
        mean *= inv_n;
        for i in 0..n {
            x[i * k + c] -= mean;
        }
    }
}

pub fn zcom_project_rows<T: Scalar>(x: &mut Array2<T>, n: usize, k: usize) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        zcom_project_in_place(row.as_slice_mut().expect("rows are contiguous"), n, k);
    }
}

#[derive(Debug)]
pub struct EnergyModel<T> {
    family: EnergyFamily,
    dim: usize,
    n_particles: usize,
    space_dim: usize,
    params: EnergyParams<T>,
    zcom: bool,
    evals: AtomicU64,
}

impl<T: Clone> Clone for EnergyModel<T> {
    fn clone(&self) -> Self {
        Self {
            family: self.family,
            dim: self.dim,
            n_particles: self.n_particles,
            space_dim: self.space_dim,
            params: self.params.clone(),
            zcom: self.zcom,
            evals: AtomicU64::new(self.evals.load(Ordering::Relaxed)),
        }
    }
}

impl<T: Scalar> EnergyModel<T> {
    /// Many-well: `sum_i (x_i^2 - delta)^2`.
    pub fn many_well(dim: usize, delta: T) -> Self {
        assert!(dim > 0);
        Self::build(EnergyFamily::ManyWell, dim, 0, 0, EnergyParams::ManyWell { delta }, false)
    }

    /// Five-dimensional many-well with `delta = 4`.
    pub fn mw5() -> Self {
        Self::many_well(5, T::lit(4.0))
    }

    /// Four particles in 2D with the standard double-well parameters.
    pub fn dw4() -> Self {
        Self::double_well(4, 2, [0.0, -4.0, 0.9, 1.0, 1.0].map(T::lit), false)
    }

    /// `params` is `[a, b, c, d0, tau]`.
    pub fn double_well(n: usize, k: usize, params: [T; 5], exponentiated: bool) -> Self {
        let [a, b, c, d0, tau] = params;
        Self::build(
            EnergyFamily::DoubleWell4,
            n * k,
            n,
            k,
            EnergyParams::DoubleWell {
                a,
                b,
                c,
                d0,
                tau,
                exponentiated,
            },
            true,
        )
    }

    /// `n` particles in 3D with `r_m = eps = tau = 1`, `c = 0.5`.
    pub fn lj(n: usize) -> Self {
        Self::lennard_jones(n, 3, [1.0, 1.0, 0.5, 1.0].map(T::lit), false)
    }

    /// `params` is `[r_m, eps, c_osc, tau]`.
    pub fn lennard_jones(n: usize, k: usize, params: [T; 4], flip_sign: bool) -> Self {
        let [r_m, eps, c_osc, tau] = params;
        Self::build(
            EnergyFamily::LennardJones,
            n * k,
            n,
            k,
            EnergyParams::LennardJones {
                r_m,
                eps,
                c_osc,
                tau,
                flip_sign,
            },
            true,
        )
    }

    /// 40 equally weighted 2D modes drawn uniformly in `[-40, 40]^2`.
    pub fn gmm40(seed: u64, stdev: T) -> Self {
        let mut rng = rng::stream(seed, rng::stream_id(&[0x6d6d_3430]));
        let lo = -GMM40_BOX;
        let centers = (0..GMM40_MODES * 2)
            .map(|_| T::lit(lo + 2.0 * GMM40_BOX * rng.random::<f64>()))
            .collect::<Vec<_>>();
        let mut m = Self::mixture(2, centers, None, stdev);
        m.family = EnergyFamily::Gmm40;
        if let EnergyParams::Mixture { seed: s, .. } = &mut m.params {
            *s = Some(seed);
        }
        m
    }

    /// Isotropic mixture; `weights` default to uniform and are normalized.
    pub fn mixture(dim: usize, centers: Vec<T>, weights: Option<Vec<T>>, stdev: T) -> Self {
        assert!(dim > 0 && !centers.is_empty() && centers.len() % dim == 0);
        assert!(stdev > T::zero());
        let modes = centers.len() / dim;
        let w = weights.unwrap_or_else(|| vec![T::one(); modes]);
        assert_eq!(w.len(), modes, "one weight per mode");
        let total = w.iter().fold(T::zero(), |a, &b| a + b);
        let log_weights = w.iter().map(|&v| (v / total).ln()).collect();
        Self::build(
            EnergyFamily::GaussianMixture,
            dim,
            0,
            0,
            EnergyParams::Mixture {
                centers,
                log_weights,
                stdev,
                seed: None,
            },
            false,
        )
    }

    /// Single isotropic Gaussian `N(mean, var I)`.
    pub fn gaussian(mean: Vec<T>, var: T) -> Self {
        let dim = mean.len();
        Self::mixture(dim, mean, None, var.sqrt())
    }

    fn build(
        family: EnergyFamily,
        dim: usize,
        n_particles: usize,
        space_dim: usize,
        params: EnergyParams<T>,
        zcom: bool,
    ) -> Self {
        Self {
            family,
            dim,
            n_particles,
            space_dim,
            params,
            zcom,
            evals: AtomicU64::new(0),
        }
    }

    pub fn family(&self) -> EnergyFamily {
        self.family
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }
    pub fn space_dim(&self) -> usize {
        self.space_dim
    }
    pub fn zcom(&self) -> bool {
        self.zcom
    }
    pub fn params(&self) -> &EnergyParams<T> {
        &self.params
    }

    /// Number of energy or gradient evaluations made so far.
    pub fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    /// Mixture centers as a `modes x dim` matrix, if this is a mixture.
    pub fn centers(&self) -> Option<Array2<T>> {
        match &self.params {
            EnergyParams::Mixture { centers, .. } => {
                Some(Array2::from_shape_vec((centers.len() / self.dim, self.dim), centers.clone()).unwrap())
            }
            _ => None,
        }
    }

    pub fn mixture_stdev(&self) -> Option<T> {
        match &self.params {
            EnergyParams::Mixture { stdev, .. } => Some(*stdev),
            _ => None,
        }
    }

    pub fn energy(&self, x: &[T]) -> Result<T> {
        self.check_input(x)?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        let e = match &self.params {
            EnergyParams::ManyWell { delta } => x.iter().fold(T::zero(), |acc, &v| {
                let w = v * v - *delta;
                acc + w * w
            }),
            EnergyParams::DoubleWell {
                a,
                b,
                c,
                d0,
                tau,
                exponentiated,
            } => {
                let mut s = T::zero();
                self.for_each_pair(x, |_, _, d, _| {
                    let r = d - *d0;
                    let r2 = r * r;
                    s += *a * r + *b * r2 + *c * r2 * r2;
                })?;
                let s = s / (T::lit(2.0) * *tau);
                if *exponentiated {
                    s.exp()
                } else {
                    s
                }
            }
            EnergyParams::LennardJones {
                r_m,
                eps,
                c_osc,
                tau,
                flip_sign,
            } => {
                let mut s = T::zero();
                self.for_each_pair(x, |_, _, d, _| {
                    let q6 = (*r_m / d).powi(6);
                    s += q6 - q6 * q6;
                })?;
                let sign = if *flip_sign { -T::one() } else { T::one() };
                let pair = sign * *eps / (T::lit(2.0) * *tau) * s;
                pair + *c_osc / T::lit(2.0) * self.centered_sq_norm(x)
            }
            EnergyParams::Mixture {
                centers,
                log_weights,
                stdev,
                ..
            } => {
                let (lse, _) = mixture_log_terms(x, centers, log_weights, *stdev, false);
                let half_log = T::lit(0.5) * T::from_usize_lossy(self.dim) * (T::lit(2.0) * T::PI() * *stdev * *stdev).ln();
                -lse + half_log
            }
        };
        if !e.is_finite() {
            return Err(Error::NonFinite(format!("{:?} energy", self.family)));
        }
        Ok(e)
    }

    /// Exact gradient, projected onto the zero center-of-mass subspace for particle systems.
    pub fn grad(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        self.evals.fetch_add(1, Ordering::Relaxed);
        let mut g = vec![T::zero(); self.dim];
        match &self.params {
            EnergyParams::ManyWell { delta } => {
                for (gi, &v) in g.iter_mut().zip(x) {
                    *gi = T::lit(4.0) * v * (v * v - *delta);
                }
            }
            EnergyParams::DoubleWell {
                a,
                b,
                c,
                d0,
                tau,
                exponentiated,
            } => {
                let k = self.space_dim;
                let two_tau = T::lit(2.0) * *tau;
                let mut s = T::zero();
                self.for_each_pair(x, |i, j, d, diff| {
                    let r = d - *d0;
                    let r2 = r * r;
                    s += *a * r + *b * r2 + *c * r2 * r2;
                    let de_dd = (*a + T::lit(2.0) * *b * r + T::lit(4.0) * *c * r2 * r) / two_tau;
                    for (c_, &dv) in diff.iter().enumerate() {
                        let f = de_dd * dv / d;
                        g[i * k + c_] += f;
                        g[j * k + c_] -= f;
                    }
                })?;
                if *exponentiated {
                    let e = (s / two_tau).exp();
                    g.iter_mut().for_each(|v| *v *= e);
                }
            }
            EnergyParams::LennardJones {
                r_m,
                eps,
                c_osc,
                tau,
                flip_sign,
            } => {
                let k = self.space_dim;
                let sign = if *flip_sign { -T::one() } else { T::one() };
                let scale = sign * *eps / (T::lit(2.0) * *tau);
                self.for_each_pair(x, |i, j, d, diff| {
                    let q6 = (*r_m / d).powi(6);
                    // d/dd [q^6 - q^12] = (-6 q^6 + 12 q^12) / d
                    let de_dd = scale * (T::lit(12.0) * q6 * q6 - T::lit(6.0) * q6) / d;
                    for (c_, &dv) in diff.iter().enumerate() {
                        let f = de_dd * dv / d;
                        g[i * k + c_] += f;
                        g[j * k + c_] -= f;
                    }
                })?;
                let centered = zcom_project(x, self.n_particles, k);
                for (gi, ci) in g.iter_mut().zip(centered) {
                    *gi += *c_osc * ci;
                }
            }
            EnergyParams::Mixture {
                centers,
                log_weights,
                stdev,
                ..
            } => {
                let (_, resp) = mixture_log_terms(x, centers, log_weights, *stdev, true);
                let inv_var = T::one() / (*stdev * *stdev);
                for (m, &r) in resp.iter().enumerate() {
                    if r == T::zero() {
                        continue;
                    }
                    let mu = &centers[m * self.dim..(m + 1) * self.dim];
                    for ((gi, &xi), &mi) in g.iter_mut().zip(x).zip(mu) {
                        *gi += r * (xi - mi) * inv_var;
                    }
                }
            }
        }
        if self.zcom {
            zcom_project_in_place(&mut g, self.n_particles, self.space_dim);
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{:?} gradient", self.family)));
        }
        Ok(g)
    }

    pub fn energy_batch(&self, xs: ArrayView2<T>) -> Result<Vec<T>> {
        xs.axis_iter(Axis(0))
            .map(|row| self.energy(row.as_slice().expect("contiguous rows")))
            .collect()
    }

    pub fn grad_batch(&self, xs: ArrayView2<T>) -> Result<Array2<T>> {
        let mut out = Array2::zeros(xs.raw_dim());
        for (row, mut dst) in xs.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            let owned;
            let slice = match row.as_slice() {
                Some(s) => s,
                None => {
                    owned = row.to_vec();
                    &owned
                }
            };
            let g = self.grad(slice)?;
            dst.as_slice_mut().unwrap().copy_from_slice(&g);
        }
        Ok(out)
    }

    /// Exact draws from a mixture target: uniform-by-weight mode, then isotropic noise.
    pub fn sample_mixture<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Option<Array2<T>> {
        let EnergyParams::Mixture {
            centers,
            log_weights,
            stdev,
            ..
        } = &self.params
        else {
            return None;
        };
        let cum: Vec<f64> = log_weights
            .iter()
            .scan(0.0, |acc, lw| {
                *acc += lw.as_f64().exp();
                Some(*acc)
            })
            .collect();
        let mut out = Array2::zeros((count, self.dim));
        for mut row in out.axis_iter_mut(Axis(0)) {
            let u = rng.random::<f64>() * cum[cum.len() - 1];
            let m = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
            for (c, v) in row.iter_mut().enumerate() {
                *v = centers[m * self.dim + c] + *stdev * rng::normal::<T, _>(rng);
            }
        }
        Some(out)
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::SizeMismatch(format!("expected {} coordinates, got {}", self.dim, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("energy input".into()));
        }
        Ok(())
    }

    fn centered_sq_norm(&self, x: &[T]) -> T {
        zcom_project(x, self.n_particles, self.space_dim)
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
    }

    /// Visits every `i < j` pair with its distance and `x_i - x_j`.
    fn for_each_pair<F: FnMut(usize, usize, T, &[T])>(&self, x: &[T], mut f: F) -> Result<()> {
        let k = self.space_dim;
        let mut diff = vec![T::zero(); k];
        let guard = T::lit(MIN_PAIR_DISTANCE);
        for i in 0..self.n_particles {
            for j in (i + 1)..self.n_particles {
                for c in 0..k {
                    diff[c] = x[i * k + c] - x[j * k + c];
                }
                let d = norm2(&diff);
                if d <= guard {
                    return Err(Error::NonFinite(format!(
                        "particles {i} and {j} closer than {MIN_PAIR_DISTANCE:e}"
                    )));
                }
                f(i, j, d, &diff);
            }
        }
        Ok(())
    }
}

/// Log-sum-exp of component log densities (up to the shared normalizer) and,
/// optionally, the posterior responsibilities. Components more than 60 nats
/// below the best contribute exactly zero.
fn mixture_log_terms<T: Scalar>(x: &[T], centers: &[T], log_weights: &[T], stdev: T, want_resp: bool) -> (T, Vec<T>) {
    let dim = x.len();
    let inv_two_var = T::one() / (T::lit(2.0) * stdev * stdev);
    let logits: Vec<T> = log_weights
        .iter()
        .enumerate()
        .map(|(m, &lw)| {
            let mu = &centers[m * dim..(m + 1) * dim];
            let sq = x.iter().zip(mu).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            lw - sq * inv_two_var
        })
        .collect();
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let cutoff = max - T::lit(60.0);
    let mut total = T::zero();
    let mut w = if want_resp { vec![T::zero(); logits.len()] } else { Vec::new() };
    for (m, &l) in logits.iter().enumerate() {
        if l < cutoff {
            continue;
        }
        let e = (l - max).exp();
        total += e;
        if want_resp {
            w[m] = e;
        }
    }
    if want_resp {
        w.iter_mut().for_each(|v| *v /= total);
    }
    (max + total.ln(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_grad(m: &EnergyModel<f64>, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut q = x.to_vec();
                p[i] += h;
                q[i] -= h;
                (m.energy(&p).unwrap() - m.energy(&q).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
        num / den
    }

    /// Random configuration with every pair comfortably separated.
    fn spread_particles(rng: &mut ChaCha8Rng, n: usize, k: usize, scale: f64, min_d: f64) -> Vec<f64> {
        loop {
            let x: Vec<f64> = (0..n * k).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let ok = (0..n).all(|i| {
                ((i + 1)..n).all(|j| {
                    let d: f64 = (0..k).map(|c| (x[i * k + c] - x[j * k + c]).powi(2)).sum::<f64>().sqrt();
                    d > min_d
                })
            });
            if ok {
                return x;
            }
        }
    }

    #[test]
    fn many_well_reference_values() {
        let m = EnergyModel::<f64>::mw5();
        assert_eq!(m.energy(&[2.0; 5]).unwrap(), 0.0);
        assert_eq!(m.energy(&[0.0; 5]).unwrap(), 80.0);
        assert!(m.grad(&[2.0; 5]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn double_well_matches_scripted_pair_sum() {
        let m = EnergyModel::<f64>::dw4();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = spread_particles(&mut rng, 4, 2, 2.0, 0.1);
        // independent evaluation straight from the pairwise definition
        let mut s = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let d = ((x[2 * i] - x[2 * j]).powi(2) + (x[2 * i + 1] - x[2 * j + 1]).powi(2)).sqrt();
                let r = d - 1.0;
                s += -4.0 * r * r + 0.9 * r.powi(4);
            }
        }
        let expected = s / 2.0;
        let got = m.energy(&x).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-10, "{got} vs {expected}");

        let lit = EnergyModel::<f64>::double_well(4, 2, [0.0, -4.0, 0.9, 1.0, 1.0], true);
        assert!((lit.energy(&x).unwrap() - expected.exp()).abs() < 1e-10 * expected.exp().max(1.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let models: Vec<(EnergyModel<f64>, usize, usize)> = vec![
            (EnergyModel::mw5(), 0, 0),
            (EnergyModel::dw4(), 4, 2),
            (EnergyModel::double_well(4, 2, [0.0, -4.0, 0.9, 1.0, 1.0], true), 4, 2),
            (EnergyModel::lj(13), 13, 3),
            (EnergyModel::lennard_jones(13, 3, [1.0, 1.0, 0.5, 1.0], true), 13, 3),
            (EnergyModel::gmm40(GMM40_DEFAULT_SEED, 1.0), 0, 0),
        ];
        for (m, n, k) in &models {
            for _ in 0..100 {
                let x = if *n > 0 {
                    let raw = spread_particles(&mut rng, *n, *k, 1.6, 0.8);
                    zcom_project(&raw, *n, *k)
                } else if m.family() == EnergyFamily::Gmm40 {
                    (0..2).map(|_| 40.0 * (2.0 * rng.random::<f64>() - 1.0)).collect()
                } else {
                    (0..m.dim()).map(|_| 3.0 * (2.0 * rng.random::<f64>() - 1.0)).collect()
                };
                let mut fd = fd_grad(m, &x, 1e-5);
                if m.zcom() {
                    zcom_project_in_place(&mut fd, *n, *k);
                }
                let g = m.grad(&x).unwrap();
                let e = rel_err(&g, &fd);
                assert!(e < 1e-5, "{:?}: rel err {e}", m.family());
            }
        }
    }

    #[test]
    fn lj_single_pair_at_equilibrium_distance() {
        // one pair at r_m, the other 12 particles far away on a line
        let m = EnergyModel::<f64>::lj(13);
        let mut x = vec![0.0; 39];
        x[3] = 1.0;
        for i in 2..13 {
            x[3 * i + 1] = 50.0 * i as f64;
        }
        let x = zcom_project(&x, 13, 3);
        let mut fd = fd_grad(&m, &x, 1e-5);
        zcom_project_in_place(&mut fd, 13, 3);
        let g = m.grad(&x).unwrap();
        assert!(rel_err(&g, &fd) < 1e-5);
        // at d = r_m the printed pair term has slope (12 - 6) / 2 = 3 along the separation
        let pair_x = g[0] - 0.5 * x[0];
        assert!((pair_x + 3.0).abs() < 1e-6, "{pair_x}");
        assert!((fd[0] - 0.5 * x[0] + 3.0).abs() < 1e-5);
    }

    #[test]
    fn lj_oscillator_term_on_centered_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = zcom_project(&spread_particles(&mut rng, 5, 3, 2.0, 0.5), 5, 3);
        let m = EnergyModel::<f64>::lennard_jones(5, 3, [1.0, 0.0, 0.5, 1.0], false);
        let direct: f64 = 0.25 * x.iter().map(|v| v * v).sum::<f64>();
        assert!((m.energy(&x).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn coincident_particles_are_rejected() {
        let m = EnergyModel::<f64>::lj(3);
        let x = vec![0.0; 9];
        assert!(matches!(m.energy(&x), Err(Error::NonFinite(_))));
        assert!(matches!(m.grad(&x), Err(Error::NonFinite(_))));
    }

    #[test]
    fn clip_examples() {
        let unb = GradClipRule::new(10.0);
        assert_eq!(clip_grad(&[3.0, 4.0], &unb), vec![3.0, 4.0]);
        assert_eq!(clip_grad(&[3.0, 4.0], &GradClipRule::new(5.0)), vec![3.0, 4.0]);
        assert_eq!(clip_grad(&[6.0, 8.0], &GradClipRule::new(5.0)), vec![3.0, 4.0]);
    }

    #[test]
    fn zcom_examples() {
        assert_eq!(zcom_project(&[1.0, 3.0], 2, 1), vec![-1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        // dense (I_4 - 11^T/4) ⊗ I_2
        let mut a = [[0.0; 8]; 8];
        for i in 0..4 {
            for j in 0..4 {
                let cij = if i == j { 1.0 } else { 0.0 } - 0.25;
                for c in 0..2 {
                    a[i * 2 + c][j * 2 + c] = cij;
                }
            }
        }
        let dense: Vec<f64> = (0..8).map(|r| (0..8).map(|c| a[r][c] * x[c]).sum()).collect();
        let p = zcom_project(&x, 4, 2);
        for (u, v) in p.iter().zip(&dense) {
            assert!((u - v).abs() < 1e-14);
        }
        assert_eq!(zcom_project(&p, 4, 2).iter().zip(&p).filter(|(a, b)| (*a - *b).abs() > 1e-15).count(), 0);
    }

    #[test]
    fn gmm40_is_seeded_and_truth_sampler_balanced() {
        let a = EnergyModel::<f64>::gmm40(7, 1.0);
        let b = EnergyModel::<f64>::gmm40(7, 1.0);
        assert_eq!(a.centers(), b.centers());
        assert_ne!(a.centers(), EnergyModel::<f64>::gmm40(8, 1.0).centers());
        let c = a.centers().unwrap();
        assert_eq!(c.nrows(), 40);
        assert!(c.iter().all(|v| v.abs() <= 40.0));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(a.sample_mixture(&mut rng, 0).unwrap().nrows(), 0);
        let n = 100_000;
        let s = a.sample_mixture(&mut rng, n).unwrap();
        // assign each draw to its nearest center (modes may overlap slightly; use nearest)
        let mut counts = [0usize; 40];
        let mut sums = [[0.0f64; 2]; 40];
        for row in s.axis_iter(Axis(0)) {
            let (m, _) = (0..40)
                .map(|m| (m, (row[0] - c[[m, 0]]).powi(2) + (row[1] - c[[m, 1]]).powi(2)))
                .fold((0, f64::MAX), |best, cur| if cur.1 < best.1 { cur } else { best });
            counts[m] += 1;
            sums[m][0] += row[0];
            sums[m][1] += row[1];
        }
        let p: f64 = 1.0 / 40.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for m in 0..40 {
            assert!((counts[m] as f64 - 2500.0).abs() < 5.0 * sd + 50.0, "mode {m}: {}", counts[m]);
        }
        // well separated modes: nearest-center means sit at their centers
        let mut isolated = 0;
        for m in 0..40 {
            let nearest_other = (0..40)
                .filter(|&o| o != m)
                .map(|o| ((c[[m, 0]] - c[[o, 0]]).powi(2) + (c[[m, 1]] - c[[o, 1]]).powi(2)).sqrt())
                .fold(f64::MAX, f64::min);
            if nearest_other < 6.0 {
                continue;
            }
            isolated += 1;
            for d in 0..2 {
                let mean = sums[m][d] / counts[m] as f64;
                let se = 1.0 / (counts[m] as f64).sqrt();
                assert!((mean - c[[m, d]]).abs() < 5.0 * se, "mode {m} coord {d}");
            }
        }
        assert!(isolated >= 5, "{isolated}");
    }
}
