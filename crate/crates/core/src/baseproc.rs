//! Base processes: noise schedules, source priors, transition and bridge
//! kernels, controlled-SDE simulation and the unadjusted Langevin baseline.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{zcom_project_in_place, zcom_project_rows, EnergyModel};
use crate::error::{Error, Result};
use crate::rng::{self, fill_normal};
use crate::scalar::Scalar;

/// Paths per independently seeded shard.
pub const SHARD_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSchedule<T> {
    /// `sigma_t = b_min (b_max / b_min)^(1 - t) sqrt(2 ln(b_max / b_min))`.
    Geometric { beta_min: T, beta_max: T },
    Constant { sigma: T },
    /// `sigma_t = sqrt(beta_t)` with `beta_t = (1 - t) b_max + t b_min`; only valid with the VP drift.
    VpLinear { beta_min: T, beta_max: T },
}

impl<T: Scalar> NoiseSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSchedule::Geometric { beta_min, beta_max } | NoiseSchedule::VpLinear { beta_min, beta_max } => {
                beta_min > T::zero() && beta_max > beta_min
            }
            NoiseSchedule::Constant { sigma } => sigma > T::zero(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid noise schedule {self:?}")))
        }
    }

    pub fn sigma(&self, t: T) -> T {
        match *self {
            NoiseSchedule::Geometric { beta_min, beta_max } => {
                let r = beta_max / beta_min;
                beta_min * r.powf(T::one() - t) * (T::lit(2.0) * r.ln()).sqrt()
            }
            NoiseSchedule::Constant { sigma } => sigma,
            NoiseSchedule::VpLinear { .. } => self.vp_beta(t).sqrt(),
        }
    }

    /// Accumulated variance `kappa_{t|s} = ∫_s^t sigma_r^2 dr`.
    pub fn kappa(&self, s: T, t: T) -> T {
        match *self {
            NoiseSchedule::Geometric { beta_min, beta_max } => {
                let q = beta_min / beta_max;
                beta_max * beta_max * (q.powf(T::lit(2.0) * s) - q.powf(T::lit(2.0) * t))
            }
            NoiseSchedule::Constant { sigma } => sigma * sigma * (t - s),
            NoiseSchedule::VpLinear { .. } => (t - s) * (self.vp_beta(s) + self.vp_beta(t)) / T::lit(2.0),
        }
    }

    fn vp_beta(&self, t: T) -> T {
        match *self {
            NoiseSchedule::VpLinear { beta_min, beta_max } => (T::one() - t) * beta_max + t * beta_min,
            _ => panic!("beta_t is only defined for the VP schedule"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prior<T> {
    /// Isotropic `N(mean, stdev^2 I)`.
    Gaussian { mean: T, stdev: T },
    /// Every coordinate fixed to `point`.
    Dirac { point: T },
    Harmonic(HarmonicPrior<T>),
}

/// `N(0, (R + eps I)^-1)` for an `n`-particle, `k`-dimensional system.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicPrior<T> {
    pub n: usize,
    pub k: usize,
    pub alpha: T,
    pub eps: T,
    /// Lower Cholesky factor of `R + eps I`.
    chol: Array2<T>,
}

/// Quadratic-form matrix of the harmonic prior, `R = (alpha/2)(Lap_n + I_n) ⊗ I_k`,
/// where `Lap_n = n I - 11^T`: diagonal `alpha n / 2`, particle couplings `-alpha / 2`.
pub fn harmonic_precision<T: Scalar>(n: usize, k: usize, alpha: T) -> Array2<T> {
    let half = alpha / T::lit(2.0);
    let d = n * k;
    Array2::from_shape_fn((d, d), |(r, c)| {
        let (i, a) = (r / k, r % k);
        let (j, b) = (c / k, c % k);
        if a != b {
            T::zero()
        } else if i == j {
            half * T::from_usize_lossy(n)
        } else {
            -half
        }
    })
}

/// In-place Cholesky factorization; returns the lower factor.
pub fn cholesky<T: Scalar>(a: &Array2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= l[[j, p]] * l[[j, p]];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::FactorizationFailed(format!("pivot {j} is {d:e}")));
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

impl<T: Scalar> HarmonicPrior<T> {
    pub fn new(n: usize, k: usize, alpha: T, eps: T) -> Result<Self> {
        let mut p = harmonic_precision(n, k, alpha);
        for i in 0..n * k {
            p[[i, i]] += eps;
        }
        let chol = cholesky(&p)?;
        Ok(Self { n, k, alpha, eps, chol })
    }

    /// Solves `L^T x = z`, giving `x ~ N(0, (L L^T)^-1)` for standard normal `z`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [T]) {
        fill_normal(rng, out);
        let l = &self.chol;
        let d = out.len();
        for i in (0..d).rev() {
            let mut s = out[i];
            for j in (i + 1)..d {
                s -= l[[j, i]] * out[j];
            }
            out[i] = s / l[[i, i]];
        }
    }
}

impl<T: Scalar> Prior<T> {
    pub fn harmonic(n: usize, k: usize, alpha: T, eps: T) -> Result<Self> {
        Ok(Prior::Harmonic(HarmonicPrior::new(n, k, alpha, eps)?))
    }

    pub fn standard_normal() -> Self {
        Prior::Gaussian {
            mean: T::zero(),
            stdev: T::one(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize, dim: usize) -> Array2<T> {
        let mut out = Array2::zeros((count, dim));
        for mut row in out.axis_iter_mut(Axis(0)) {
            let r = row.as_slice_mut().expect("contiguous");
            match self {
                Prior::Gaussian { mean, stdev } => {
                    fill_normal(rng, r);
                    r.iter_mut().for_each(|v| *v = *mean + *stdev * *v);
                }
                Prior::Dirac { point } => r.iter_mut().for_each(|v| *v = *point),
                Prior::Harmonic(h) => {
                    assert_eq!(dim, h.n * h.k, "harmonic prior dimension");
                    h.draw(rng, r);
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseDrift {
    Zero,
    /// `f_t(x) = -beta_t x / 2`.
    Vp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaseProcess<T> {
    pub drift: BaseDrift,
    pub schedule: NoiseSchedule<T>,
    pub prior: Prior<T>,
    /// Particle structure `(n, k)` when the state lives on the zero center-of-mass subspace.
    pub zcom: Option<(usize, usize)>,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdeConfig {
    pub n_steps: usize,
    #[serde(default)]
    pub record_trajectory: bool,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            n_steps: 100,
            record_trajectory: false,
        }
    }
}

/// Control field `u_t(x)` evaluated on a batch of states.
pub trait Control<T>: Sync {
    fn control(&self, t: T, x: ArrayView2<'_, T>) -> Array2<T>;
}

impl<T, F> Control<T> for F
where
    F: Fn(T, ArrayView2<'_, T>) -> Array2<T> + Sync,
{
    fn control(&self, t: T, x: ArrayView2<'_, T>) -> Array2<T> {
        self(t, x)
    }
}

pub struct ZeroControl;

impl<T: Scalar> Control<T> for ZeroControl {
    fn control(&self, _t: T, x: ArrayView2<'_, T>) -> Array2<T> {
        Array2::zeros(x.raw_dim())
    }
}

#[derive(Clone, Debug)]
pub struct SimOutput<T> {
    pub x0: Array2<T>,
    pub x1: Array2<T>,
    /// States at every grid time `i / n_steps`, including both endpoints.
    pub trajectory: Option<Vec<Array2<T>>>,
}

impl<T: Scalar> BaseProcess<T> {
    /// Zero-drift base process.
    pub fn brownian(schedule: NoiseSchedule<T>, prior: Prior<T>, dim: usize) -> Result<Self> {
        schedule.validate()?;
        if matches!(schedule, NoiseSchedule::VpLinear { .. }) {
            return Err(Error::InvalidConfig("the VP schedule requires the VP drift".into()));
        }
        Ok(Self {
            drift: BaseDrift::Zero,
            schedule,
            prior,
            zcom: None,
            dim,
        })
    }

    /// Variance-preserving process with linear `beta_t` and matched `sigma_t = sqrt(beta_t)`.
    pub fn vp(beta_min: T, beta_max: T, prior: Prior<T>, dim: usize) -> Result<Self> {
        let schedule = NoiseSchedule::VpLinear { beta_min, beta_max };
        schedule.validate()?;
        Ok(Self {
            drift: BaseDrift::Vp,
            schedule,
            prior,
            zcom: None,
            dim,
        })
    }

    pub fn with_zcom(mut self, n: usize, k: usize) -> Self {
        assert_eq!(n * k, self.dim, "particle structure must match the dimension");
        self.zcom = Some((n, k));
        self
    }

    pub fn sigma(&self, t: T) -> T {
        self.schedule.sigma(t)
    }

    pub fn kappa(&self, s: T, t: T) -> T {
        self.schedule.kappa(s, t)
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Array2<T> {
        let mut x = self.prior.sample(rng, count, self.dim);
        if let Some((n, k)) = self.zcom {
            zcom_project_rows(&mut x, n, k);
        }
        x
    }

    /// Mean weight on `x1` and variance of the Brownian bridge at `t`.
    pub fn bridge_coeffs(&self, t: T) -> (T, T) {
        let total = self.kappa(T::zero(), T::one());
        let gamma = self.kappa(T::zero(), t) / total;
        (gamma, total * gamma * (T::one() - gamma))
    }

    /// One draw from `p_base(X_t | X_0 = x0, X_1 = x1)`; dispatches on the drift.
    pub fn bridge_sample<R: Rng + ?Sized>(&self, x0: &[T], x1: &[T], t: T, rng: &mut R) -> Vec<T> {
        let mut out = vec![T::zero(); x0.len()];
        self.bridge_sample_into(x0, x1, t, rng, &mut out);
        out
    }

    pub fn bridge_sample_into<R: Rng + ?Sized>(&self, x0: &[T], x1: &[T], t: T, rng: &mut R, out: &mut [T]) {
        let (c0, c1, var) = match self.drift {
            BaseDrift::Zero => {
                let (g, var) = self.bridge_coeffs(t);
                (T::one() - g, g, var)
            }
            BaseDrift::Vp => self.vp_bridge_coeffs(t),
        };
        let sd = var.max(T::zero()).sqrt();
        fill_normal(rng, out);
        for ((o, &a), &b) in out.iter_mut().zip(x0).zip(x1) {
            *o = c0 * a + c1 * b + sd * *o;
        }
        if let Some((n, k)) = self.zcom {
            zcom_project_in_place(out, n, k);
        }
    }

    /// `∇_{x1} log p_base(x1 | x0) = -(x1 - x0) / kappa_{1|0}`.
    pub fn base_score(&self, x0: &[T], x1: &[T]) -> Result<Vec<T>> {
        if self.drift != BaseDrift::Zero {
            return Err(Error::UnsupportedBase("corrector matching requires a zero base drift".into()));
        }
        let k = self.kappa(T::zero(), T::one());
        Ok(x0.iter().zip(x1).map(|(&a, &b)| -(b - a) / k).collect())
    }

    /// `(kappa_t, kappa_bar_t)` = `(exp(-½∫_t^1 β), exp(-½∫_0^t β))`.
    pub fn vp_coeffs(&self, t: T) -> (T, T) {
        let NoiseSchedule::VpLinear { .. } = self.schedule else {
            panic!("vp_coeffs requires the VP process");
        };
        let half = T::lit(0.5);
        ((-half * self.kappa(t, T::one())).exp(), (-half * self.kappa(T::zero(), t)).exp())
    }

    /// `(coef_x0, coef_x1, variance)` of the VP bridge at `t`.
    pub fn vp_bridge_coeffs(&self, t: T) -> (T, T, T) {
        let (k, kb) = self.vp_coeffs(t);
        let (_, kb1) = self.vp_coeffs(T::one());
        let denom = T::one() - kb1 * kb1;
        (
            kb * (T::one() - k * k) / denom,
            k * (T::one() - kb * kb) / denom,
            (T::one() - k * k) * (T::one() - kb * kb) / denom,
        )
    }

    pub fn vp_bridge_sample<R: Rng + ?Sized>(&self, x0: &[T], x1: &[T], t: T, rng: &mut R) -> Vec<T> {
        assert_eq!(self.drift, BaseDrift::Vp, "VP bridge on a non-VP process");
        self.bridge_sample(x0, x1, t, rng)
    }

    /// Simulates `dX = [f_t(X) + sigma_t u_t(X)] dt + sigma_t dW` on a uniform grid.
    ///
    /// The control enters through an explicit Euler step at the left endpoint.
    /// The base part is integrated exactly: Gaussian increments with variance
    /// `kappa_{t_{i+1}|t_i}`, and for the VP drift the exact linear decay.
    pub fn simulate<C, R>(&self, control: &C, sde: &SdeConfig, rng: &mut R, count: usize) -> Result<SimOutput<T>>
    where
        C: Control<T> + ?Sized,
        R: Rng + ?Sized,
    {
        assert!(sde.n_steps >= 1, "n_steps must be positive");
        let base_seed: u64 = rng.random();
        let shards: Vec<usize> = (0..count.div_ceil(SHARD_SIZE)).collect();
        let results: Vec<Result<SimOutput<T>>> = shards
            .par_iter()
            .map(|&s| {
                let rows = SHARD_SIZE.min(count - s * SHARD_SIZE);
                let mut shard_rng = rng::stream(base_seed, s as u64);
                self.simulate_shard(control, sde, &mut shard_rng, rows)
            })
            .collect();
        let mut parts = Vec::with_capacity(results.len());
        for r in results {
            parts.push(r?);
        }
        Ok(concat_outputs(parts, self.dim, sde))
    }

    fn simulate_shard<C, R>(&self, control: &C, sde: &SdeConfig, rng: &mut R, count: usize) -> Result<SimOutput<T>>
    where
        C: Control<T> + ?Sized,
        R: Rng + ?Sized,
    {
        let n = sde.n_steps;
        let dt = T::one() / T::from_usize_lossy(n);
        let x0 = self.sample_prior(rng, count);
        let mut x = x0.clone();
        let mut traj = sde.record_trajectory.then(|| vec![x.clone()]);
        let mut noise = Array2::<T>::zeros(x.raw_dim());
        for i in 0..n {
            let t = T::from_usize_lossy(i) * dt;
            let t_next = T::from_usize_lossy(i + 1) * dt;
            let sigma = self.sigma(t);
            let mut drift = control.control(t, x.view());
            drift.mapv_inplace(|u| sigma * u * dt);
            fill_normal(rng, noise.as_slice_mut().expect("contiguous"));
            let (decay, noise_sd) = match self.drift {
                BaseDrift::Zero => (T::one(), self.kappa(t, t_next).sqrt()),
                BaseDrift::Vp => {
                    let a = (-T::lit(0.5) * self.kappa(t, t_next)).exp();
                    (a, (T::one() - a * a).sqrt())
                }
            };
            noise.mapv_inplace(|z| noise_sd * z);
            if let Some((pn, pk)) = self.zcom {
                zcom_project_rows(&mut drift, pn, pk);
                zcom_project_rows(&mut noise, pn, pk);
            }
            if decay != T::one() {
                x.mapv_inplace(|v| decay * v);
            }
            x += &drift;
            x += &noise;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("SDE state diverged at t = {:.4}", t_next.as_f64())));
            }
            if let Some(tr) = traj.as_mut() {
                tr.push(x.clone());
            }
        }
        Ok(SimOutput {
            x0,
            x1: x,
            trajectory: traj,
        })
    }
}

fn concat_outputs<T: Scalar>(parts: Vec<SimOutput<T>>, dim: usize, sde: &SdeConfig) -> SimOutput<T> {
    let stack = |mats: Vec<&Array2<T>>| -> Array2<T> {
        if mats.is_empty() {
            return Array2::zeros((0, dim));
        }
        let views: Vec<_> = mats.iter().map(|m| m.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("shards share a width")
    };
    let x0 = stack(parts.iter().map(|p| &p.x0).collect());
    let x1 = stack(parts.iter().map(|p| &p.x1).collect());
    let trajectory = sde.record_trajectory.then(|| {
        (0..=sde.n_steps)
            .map(|i| stack(parts.iter().map(|p| &p.trajectory.as_ref().unwrap()[i]).collect()))
            .collect()
    });
    SimOutput { x0, x1, trajectory }
}

/// Unadjusted Langevin: `x <- x - h ∇E(x) + sqrt(2h) xi`, run independently per chain.
pub fn langevin_sample<T: Scalar, R: Rng + ?Sized>(
    energy: &EnergyModel<T>,
    step_size: T,
    n_steps: usize,
    init: &Prior<T>,
    rng: &mut R,
    count: usize,
) -> Result<Array2<T>> {
    Ok(langevin_chains(energy, step_size, n_steps, 0, 1, init, rng, count)?.remove(0))
}

/// Langevin chains that also record thinned states after `burn_in` steps.
/// Returns `snapshots` matrices: snapshot `j` holds every chain's state after
/// `burn_in + (j + 1) * (n_steps - burn_in) / snapshots` steps; the last one
/// is always the final state.
#[allow(clippy::too_many_arguments)]
pub fn langevin_chains<T: Scalar, R: Rng + ?Sized>(
    energy: &EnergyModel<T>,
    step_size: T,
    n_steps: usize,
    burn_in: usize,
    snapshots: usize,
    init: &Prior<T>,
    rng: &mut R,
    count: usize,
) -> Result<Vec<Array2<T>>> {
    assert!(step_size > T::zero(), "step size must be positive");
    assert!(snapshots >= 1 && burn_in <= n_steps);
    let dim = energy.dim();
    let zcom = energy.zcom().then(|| (energy.n_particles(), energy.space_dim()));
    let base_seed: u64 = rng.random();
    let noise_sd = (T::lit(2.0) * step_size).sqrt();
    let interval = ((n_steps - burn_in) / snapshots).max(1);
    let chains: Vec<usize> = (0..count).collect();
    let results: Vec<Result<Vec<Vec<T>>>> = chains
        .par_iter()
        .map(|&c| {
            let mut r = rng::stream(base_seed, c as u64);
            let mut x = init.sample(&mut r, 1, dim).into_raw_vec_and_offset().0;
            let mut xi = vec![T::zero(); dim];
            if let Some((n, k)) = zcom {
                zcom_project_in_place(&mut x, n, k);
            }
            let mut snaps = Vec::with_capacity(snapshots);
            for step in 1..=n_steps {
                let g = energy.grad(&x)?;
                fill_normal(&mut r, &mut xi);
                if let Some((n, k)) = zcom {
                    zcom_project_in_place(&mut xi, n, k);
                }
                for ((v, gv), z) in x.iter_mut().zip(&g).zip(&xi) {
                    *v = *v - step_size * *gv + noise_sd * *z;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("Langevin chain {c} diverged at step {step}")));
                }
                let past = step.saturating_sub(burn_in);
                if step > burn_in && past % interval == 0 && snaps.len() < snapshots - 1 {
                    snaps.push(x.clone());
                }
            }
            snaps.push(x);
            Ok(snaps)
        })
        .collect();
    let mut out = vec![Array2::zeros((count, dim)); snapshots];
    for (c, r) in results.into_iter().enumerate() {
        let snaps = r?;
        for (j, s) in snaps.into_iter().enumerate() {
            out[j].row_mut(c).assign(&ndarray::Array1::from(s));
        }
    }
    Ok(out)
}
