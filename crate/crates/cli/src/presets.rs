//! Shipped configurations. The synthetic-energy presets follow the published
//! hyperparameter table; controls are plain MLPs (with ZCOM for particle systems).

use crate::config::{Config, EnergyKind, Metric, PriorKind, ScheduleKind, TrainMode};
use crate::error::{CliError, Result};

pub const DEFAULT: &str = "mw5_asbs";

pub const NAMES: [&str; 8] = [
    "mw5_asbs",
    "mw5_as",
    "dw4_asbs",
    "lj13_asbs",
    "lj55_asbs",
    "gmm40_asbs",
    "sb1d",
    "demo_memoryless",
];

pub fn preset(name: &str) -> Result<Config> {
    Ok(match name {
        "mw5_asbs" => mw5_asbs(),
        "mw5_as" => mw5_as(),
        "dw4_asbs" => dw4_asbs(),
        "lj13_asbs" => lj_asbs(13, 2.0, 1.0),
        "lj55_asbs" => lj_asbs(55, 1.0, 2.0),
        "gmm40_asbs" => gmm40_asbs(),
        "sb1d" => sb1d(),
        "demo_memoryless" => demo_memoryless(),
        _ => return Err(CliError::Config(format!("unknown preset `{name}`; known: {}", NAMES.join(", ")))),
    })
}

/// MW-5: `N(0, 1)` prior, constant `sigma = 0.2`, K=5, 100/20 epochs, N=1000, L=200.
pub fn mw5_asbs() -> Config {
    Config::default()
}

/// Adjoint Sampling on MW-5 at the same budget, from a Dirac prior at the origin.
pub fn mw5_as() -> Config {
    let mut c = mw5_asbs();
    c.prior.kind = PriorKind::Dirac;
    c.prior.point = 0.0;
    c.train.mode = TrainMode::As;
    c.train.cm_epochs = 0;
    c
}

fn particle_defaults(c: &mut Config, alpha: f64, beta_max: f64) {
    c.prior.kind = PriorKind::Harmonic;
    c.prior.alpha = alpha;
    c.prior.eps = 1e-4;
    c.schedule.kind = ScheduleKind::Geometric;
    c.schedule.beta_min = 0.001;
    c.schedule.beta_max = beta_max;
    c.train.alpha_max = 100.0;
    c.train.lr_control = 3e-4;
    c.train.lr_corrector = 3e-4;
    c.eval.metrics = vec![Metric::GeometricW2, Metric::EnergyW2, Metric::EnergyHistogram];
}

/// DW-4: harmonic prior with alpha=2, geometric schedule 0.001..1, K=20, 200/20 epochs, L=100.
pub fn dw4_asbs() -> Config {
    let mut c = Config::default();
    c.energy.family = EnergyKind::DoubleWell;
    c.energy.n_particles = 4;
    c.energy.space_dim = 2;
    particle_defaults(&mut c, 2.0, 1.0);
    c.train.stages = 20;
    c.train.am_epochs = 200;
    c.train.cm_epochs = 20;
    c.train.grad_steps = 100;
    c.eval.truth = String::new();
    c.eval.hist_range = [-30.0, 10.0];
    c.eval.langevin_step = 1e-3;
    c.eval.langevin_chains = 10;
    c
}

/// LJ-n in 3D: harmonic prior, geometric schedule 0.001..beta_max, K=15, 300/20 epochs, L=100.
pub fn lj_asbs(n: usize, alpha: f64, beta_max: f64) -> Config {
    let mut c = Config::default();
    c.energy.family = EnergyKind::LennardJones;
    c.energy.n_particles = n;
    c.energy.space_dim = 3;
    particle_defaults(&mut c, alpha, beta_max);
    c.train.stages = 15;
    c.train.am_epochs = 300;
    c.train.cm_epochs = 20;
    c.train.grad_steps = 100;
    c.eval.truth = String::new();
    c.eval.hist_range = if n <= 13 { [-60.0, 0.0] } else { [-400.0, -100.0] };
    c
}

/// 40-mode 2D mixture from a `N(0, 1)` prior with MW-5 loop counts.
///
/// Constant `sigma = 20` so the base process reaches the outer modes, 1000 SDE
/// steps to keep the explicit control step stable, and a zero initial control.
pub fn gmm40_asbs() -> Config {
    let mut c = Config::default();
    c.energy.family = EnergyKind::Gmm40;
    c.energy.mode_stdev = 1.0;
    c.schedule.kind = ScheduleKind::Constant;
    c.schedule.sigma = 20.0;
    c.sde.n_steps = 1000;
    c.train.control_net.zero_init = true;
    c.train.alpha_max = 100.0;
    c.eval.truth = "analytic:gmm40".into();
    c.eval.n_samples = 10_000;
    c.eval.metrics = vec![Metric::ModeCoverage, Metric::EnergyW2, Metric::EnergyHistogram];
    c.eval.hist_range = [0.0, 20.0];
    c.eval.langevin_step = 1e-4;
    c.eval.langevin_steps = 1_000_000;
    c.eval.langevin_chains = 100;
    c.eval.langevin_snapshots = 100;
    c
}

/// 1D Gaussian-to-Gaussian bridge: `N(0, 1)` to `N(2, 0.25)` under Brownian noise `sigma = 0.5`.
pub fn sb1d() -> Config {
    let mut c = Config::default();
    c.energy.family = EnergyKind::Mixture;
    c.energy.dim = 1;
    c.energy.centers = vec![2.0];
    c.energy.mode_stdev = 0.5;
    c.schedule.kind = ScheduleKind::Constant;
    c.schedule.sigma = 0.5;
    c.eval.truth = "analytic:mixture".into();
    c.eval.metrics = vec![Metric::W2, Metric::EnergyW2];
    c.eval.hist_range = [0.0, 10.0];
    c
}

/// 1D bimodal target for the memoryless comparison. `schedule` holds the
/// non-memoryless Brownian noise; `beta_min`/`beta_max` parametrize the VP variant.
pub fn demo_memoryless() -> Config {
    let mut c = Config::default();
    c.energy.family = EnergyKind::Mixture;
    c.energy.dim = 1;
    c.energy.centers = vec![-1.5, 1.5];
    c.energy.mode_stdev = 0.3;
    c.schedule.kind = ScheduleKind::Constant;
    c.schedule.sigma = 0.2;
    c.schedule.beta_min = 0.1;
    c.schedule.beta_max = 20.0;
    c.train.stages = 5;
    c.train.am_epochs = 20;
    c.train.cm_epochs = 10;
    c.train.n_resample = 1000;
    c.train.grad_steps = 100;
    c.eval.truth = "analytic:mixture".into();
    c.eval.n_samples = 10_000;
    c.eval.hist_range = [-4.0, 4.0];
    c.eval.hist_bins = 80;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds_and_round_trips() {
        for name in NAMES {
            let c = preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c, "{name}");
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn mw5_matches_the_published_row() {
        let c = preset("mw5_asbs").unwrap();
        let t = &c.train;
        assert_eq!((t.stages, t.am_epochs, t.cm_epochs, t.n_resample, t.grad_steps, t.buffer_capacity), (5, 100, 20, 1000, 200, 10_000));
        assert_eq!(c.schedule.sigma, 0.2);
        assert_eq!((t.control_net.n_layers, t.control_net.hidden_dim), (4, 64));
    }
}
