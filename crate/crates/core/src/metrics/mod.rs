//! Sample-quality metrics and ground-truth samplers.

mod align;
mod assignment;
mod sinkhorn;

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use align::{geometric_distance, geometric_w2, AlignConfig};
pub use assignment::{linear_assignment, w2_exact, w2_from_costs};
pub use sinkhorn::{sinkhorn_cost_matrix, sinkhorn_distance, sq_dist_matrix, SinkhornConfig, SinkhornResult};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::rng::normal;
use crate::scalar::Scalar;

/// 1D W2 between the energy values of two equal-size sample sets.
pub fn energy_w2<T: Scalar>(model: &EnergyModel<T>, a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::SizeMismatch(format!("{} vs {} samples", a.nrows(), b.nrows())));
    }
    let ea = sorted_energies(model, a)?;
    let eb = sorted_energies(model, b)?;
    Ok(w2_sorted_1d(&ea, &eb))
}

fn sorted_energies<T: Scalar>(model: &EnergyModel<T>, x: ArrayView2<'_, T>) -> Result<Vec<f64>> {
    let mut e: Vec<f64> = model.energy_batch(x)?.into_iter().map(|v| v.as_f64()).collect();
    if let Some(bad) = e.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("energy value {bad}")));
    }
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// RMS of the differences of two sorted equal-length sequences.
pub fn w2_sorted_1d(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (s / a.len() as f64).sqrt()
}

/// Found-mode count and per-mode mask: a mode is found when some sample lies within `radius` of its center.
pub fn mode_coverage<T: Scalar>(samples: ArrayView2<'_, T>, centers: ArrayView2<'_, T>, radius: f64) -> (usize, Vec<bool>) {
    assert!(radius > 0.0, "radius must be positive");
    let r2 = radius * radius;
    let mask: Vec<bool> = centers
        .rows()
        .into_iter()
        .map(|c| {
            samples.rows().into_iter().any(|s| {
                let d: f64 = s.iter().zip(c.iter()).map(|(&a, &b)| (a - b).as_f64().powi(2)).sum();
                d <= r2
            })
        })
        .collect();
    (mask.iter().filter(|&&m| m).count(), mask)
}

/// Exact draws from `exp(-sum_i (x_i^2 - delta)^2)` by per-coordinate rejection
/// sampling with an equal-weight Gaussian pair proposal centered at `±sqrt(delta)`.
pub fn many_well_truth_sample<R: Rng + ?Sized>(delta: f64, dim: usize, rng: &mut R, count: usize) -> Array2<f64> {
    let sampler = WellRejection::new(delta);
    Array2::from_shape_fn((count, dim), |_| sampler.draw(rng))
}

/// Ground truth for the five-dimensional many-well (`delta = 4`).
pub fn mw5_truth_sample<R: Rng + ?Sized>(rng: &mut R, count: usize) -> Array2<f64> {
    many_well_truth_sample(4.0, 5, rng, count)
}

struct WellRejection {
    delta: f64,
    mu: f64,
    sd: f64,
    log_bound: f64,
}

impl WellRejection {
    fn new(delta: f64) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        let mu = delta.sqrt();
        // wide enough that the proposal dominates the target between the wells
        let sd = 1.0 / delta.sqrt();
        let mut s = Self {
            delta,
            mu,
            sd,
            log_bound: 0.0,
        };
        let half = mu + 12.0 * sd + 2.0;
        let n = 400_000;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let x = -half + 2.0 * half * i as f64 / n as f64;
            best = best.max(s.log_target(x) - s.log_proposal(x));
        }
        // grid maximum plus a margin for the spacing
        s.log_bound = best + 1e-3;
        s
    }

    fn log_target(&self, x: f64) -> f64 {
        -(x * x - self.delta).powi(2)
    }

    fn log_proposal(&self, x: f64) -> f64 {
        let a = -0.5 * ((x - self.mu) / self.sd).powi(2);
        let b = -0.5 * ((x + self.mu) / self.sd).powi(2);
        let m = a.max(b);
        m + (0.5 * ((a - m).exp() + (b - m).exp())).ln() - (self.sd * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let x = sign * self.mu + self.sd * normal::<f64, _>(rng);
            let u: f64 = rng.random();
            if u.ln() < self.log_target(x) - self.log_proposal(x) - self.log_bound {
                return x;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn new(bins: usize, lo: f64, hi: f64) -> Self {
        assert!(bins >= 1, "at least one bin");
        assert!(hi > lo, "empty range");
        let edges = (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect();
        Self {
            edges,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        }
    }

    /// Bins are half-open `[left, right)`; the final bin also takes `hi`.
    pub fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let (lo, hi) = (self.edges[0], self.edges[bins]);
        if v < lo || v.is_nan() {
            self.underflow += 1;
        } else if v > hi {
            self.overflow += 1;
        } else {
            let i = (((v - lo) / (hi - lo)) * bins as f64) as usize;
            self.counts[i.min(bins - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// `bin_left,bin_right,count` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_left,bin_right,count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{:e},{:e},{}", self.edges[i], self.edges[i + 1], c)?;
        }
        Ok(())
    }
}

pub fn value_histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Histogram {
    let mut h = Histogram::new(bins, range.0, range.1);
    values.iter().for_each(|&v| h.add(v));
    h
}

pub fn energy_histogram<T: Scalar>(model: &EnergyModel<T>, samples: ArrayView2<'_, T>, bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let e: Vec<f64> = model.energy_batch(samples)?.into_iter().map(|v| v.as_f64()).collect();
    Ok(value_histogram(&e, bins, range))
}
