//! Run configuration: a TOML document with the sections
//! `[energy]`, `[prior]`, `[schedule]`, `[sde]`, `[train]`, `[eval]`, `[seeds]`.
//!
//! Missing keys take the defaults of [`Config::default`] (the `mw5_asbs`
//! preset); unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use asbs::baseproc::SdeConfig;
use asbs::metrics::{AlignConfig, SinkhornConfig};
use asbs::trainer::{NetConfig, RunConfig};
use asbs::{BaseProcess, EnergyModel, NoiseSchedule, Prior};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::presets;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub energy: EnergyConfig,
    pub prior: PriorConfig,
    pub schedule: ScheduleConfig,
    pub sde: SdeSection,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seeds: SeedConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    ManyWell,
    DoubleWell,
    LennardJones,
    Gmm40,
    /// Isotropic mixture with explicit `centers`.
    Mixture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub family: EnergyKind,
    /// State dimension for `many_well` and `mixture`.
    pub dim: usize,
    pub delta: f64,
    /// Particle structure for `double_well` and `lennard_jones`.
    pub n_particles: usize,
    pub space_dim: usize,
    pub dw_a: f64,
    pub dw_b: f64,
    pub dw_c: f64,
    pub dw_d0: f64,
    pub dw_tau: f64,
    pub dw_exponentiated: bool,
    pub lj_r_m: f64,
    pub lj_eps: f64,
    pub lj_c_osc: f64,
    pub lj_tau: f64,
    pub gmm_seed: u64,
    /// Mode standard deviation for `gmm40` and `mixture`.
    pub mode_stdev: f64,
    /// Row-major `modes x dim` centers for `mixture`.
    pub centers: Vec<f64>,
    /// Mixture weights; empty means uniform.
    pub weights: Vec<f64>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            family: EnergyKind::ManyWell,
            dim: 5,
            delta: 4.0,
            n_particles: 0,
            space_dim: 0,
            dw_a: 0.0,
            dw_b: -4.0,
            dw_c: 0.9,
            dw_d0: 1.0,
            dw_tau: 1.0,
            dw_exponentiated: false,
            lj_r_m: 1.0,
            lj_eps: 1.0,
            lj_c_osc: 0.5,
            lj_tau: 1.0,
            gmm_seed: asbs::energy::GMM40_DEFAULT_SEED,
            mode_stdev: 1.0,
            centers: Vec::new(),
            weights: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Gaussian,
    Dirac,
    Harmonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub kind: PriorKind,
    pub mean: f64,
    pub stdev: f64,
    pub point: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            kind: PriorKind::Gaussian,
            mean: 0.0,
            stdev: 1.0,
            point: 0.0,
            alpha: 1.0,
            eps: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    Geometric,
    /// Variance-preserving drift with `beta_t` linear from `beta_max` to `beta_min`.
    Vp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    pub sigma: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            kind: ScheduleKind::Constant,
            sigma: 0.2,
            beta_min: 0.1,
            beta_max: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    pub n_steps: usize,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self { n_steps: 100 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Alternating adjoint and corrector matching.
    Asbs,
    /// Adjoint Sampling: Dirac prior, analytic corrector.
    As,
    /// Adjoint matching under the memoryless VP process.
    Memoryless,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub stages: usize,
    pub am_epochs: usize,
    pub cm_epochs: usize,
    pub n_resample: usize,
    pub grad_steps: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Energy-gradient norm cap; `inf` disables clipping.
    #[serde(deserialize_with = "null_as_inf")]
    pub alpha_max: f64,
    pub lr_control: f64,
    pub lr_corrector: f64,
    pub warm_start_steps: usize,
    /// CSV of reference samples for the warm start; empty for none.
    pub warm_start_reference: String,
    pub control_net: NetConfig,
    pub corrector_net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Asbs,
            stages: 5,
            am_epochs: 100,
            cm_epochs: 20,
            n_resample: 1000,
            grad_steps: 200,
            buffer_capacity: 10_000,
            batch_size: 512,
            alpha_max: f64::INFINITY,
            lr_control: 1e-3,
            lr_corrector: 1e-3,
            warm_start_steps: 0,
            warm_start_reference: String::new(),
            control_net: NetConfig::default(),
            corrector_net: NetConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Sinkhorn,
    W2,
    EnergyW2,
    GeometricW2,
    ModeCoverage,
    EnergyHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// `analytic:mw5`, `analytic:gmm40` or a CSV path.
    pub truth: String,
    pub n_samples: usize,
    pub metrics: Vec<Metric>,
    pub sinkhorn: SinkhornConfig,
    pub align: AlignConfig,
    pub hist_bins: usize,
    pub hist_range: [f64; 2],
    /// Mode-coverage radius in units of the mode standard deviation.
    pub mode_radius: f64,
    pub langevin_step: f64,
    pub langevin_steps: usize,
    pub langevin_burn_in: usize,
    pub langevin_chains: usize,
    /// Thinned states kept per chain.
    pub langevin_snapshots: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            truth: "analytic:mw5".into(),
            n_samples: 2000,
            metrics: vec![Metric::Sinkhorn, Metric::EnergyW2, Metric::EnergyHistogram],
            sinkhorn: SinkhornConfig::default(),
            align: AlignConfig::default(),
            hist_bins: 60,
            hist_range: [0.0, 30.0],
            mode_radius: 3.0,
            langevin_step: 1e-4,
            langevin_steps: 1_000_000,
            langevin_burn_in: 0,
            langevin_chains: 100,
            langevin_snapshots: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub train: u64,
    pub sample: u64,
    pub eval: u64,
    pub langevin: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self {
            train: 0,
            sample: 1,
            eval: 2,
            langevin: 3,
        }
    }
}

// JSON has no infinity and writes it as null.
fn null_as_inf<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolves a config from an optional file or preset plus `section.key=value` overrides.
    pub fn load(path: Option<&Path>, preset: Option<&str>, overrides: &[String]) -> Result<Self> {
        let text = match (path, preset) {
            (Some(_), Some(_)) => return Err(CliError::Config("give either a config file or a preset, not both".into())),
            (Some(p), None) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            (None, name) => presets::preset(name.unwrap_or(presets::DEFAULT))?.to_toml_string(),
        };
        Self::from_text_with_overrides(&text, overrides)
    }

    pub fn from_text_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Self::from_toml_str(text);
        }
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let merged = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_toml_str(&merged)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn from_json(v: serde_json::Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies overrides on top of an already resolved config.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        Self::from_text_with_overrides(&self.to_toml_string(), overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.build_base()?;
        self.run_config().validate()?;
        if self.eval.n_samples == 0 {
            return Err(CliError::Config("eval.n_samples must be positive".into()));
        }
        if self.eval.hist_bins == 0 || !(self.eval.hist_range[1] > self.eval.hist_range[0]) {
            return Err(CliError::Config("eval.hist_bins must be positive and eval.hist_range increasing".into()));
        }
        if !(self.eval.mode_radius > 0.0) {
            return Err(CliError::Config("eval.mode_radius must be positive".into()));
        }
        Ok(())
    }

    pub fn build_energy(&self) -> Result<EnergyModel> {
        let e = &self.energy;
        let bad = |msg: &str| Err(CliError::Config(format!("energy: {msg}")));
        Ok(match e.family {
            EnergyKind::ManyWell => {
                if e.dim == 0 {
                    return bad("dim must be positive");
                }
                EnergyModel::many_well(e.dim, e.delta)
            }
            EnergyKind::DoubleWell => {
                if e.n_particles < 2 || e.space_dim == 0 || !(e.dw_tau > 0.0) {
                    return bad("double_well needs n_particles >= 2, space_dim >= 1 and dw_tau > 0");
                }
                EnergyModel::double_well(e.n_particles, e.space_dim, [e.dw_a, e.dw_b, e.dw_c, e.dw_d0, e.dw_tau], e.dw_exponentiated)
            }
            EnergyKind::LennardJones => {
                if e.n_particles < 2 || e.space_dim == 0 || !(e.lj_tau > 0.0) {
                    return bad("lennard_jones needs n_particles >= 2, space_dim >= 1 and lj_tau > 0");
                }
                EnergyModel::lennard_jones(e.n_particles, e.space_dim, [e.lj_r_m, e.lj_eps, e.lj_c_osc, e.lj_tau], false)
            }
            EnergyKind::Gmm40 => {
                if !(e.mode_stdev > 0.0) {
                    return bad("mode_stdev must be positive");
                }
                EnergyModel::gmm40(e.gmm_seed, e.mode_stdev)
            }
            EnergyKind::Mixture => {
                if e.dim == 0 || e.centers.is_empty() || e.centers.len() % e.dim != 0 {
                    return bad("mixture centers must be a non-empty multiple of dim");
                }
                if !(e.mode_stdev > 0.0) {
                    return bad("mode_stdev must be positive");
                }
                let modes = e.centers.len() / e.dim;
                let weights = if e.weights.is_empty() {
                    None
                } else if e.weights.len() != modes || e.weights.iter().any(|w| !(*w > 0.0)) {
                    return bad("one positive weight per mode");
                } else {
                    Some(e.weights.clone())
                };
                EnergyModel::mixture(e.dim, e.centers.clone(), weights, e.mode_stdev)
            }
        })
    }

    pub fn build_prior(&self, energy: &EnergyModel) -> Result<Prior> {
        let p = &self.prior;
        Ok(match p.kind {
            PriorKind::Gaussian => {
                if !(p.stdev > 0.0) {
                    return Err(CliError::Config("prior: stdev must be positive".into()));
                }
                Prior::Gaussian { mean: p.mean, stdev: p.stdev }
            }
            PriorKind::Dirac => Prior::Dirac { point: p.point },
            PriorKind::Harmonic => {
                if !energy.zcom() {
                    return Err(CliError::Config("prior: harmonic prior needs a particle energy".into()));
                }
                Prior::harmonic(energy.n_particles(), energy.space_dim(), p.alpha, p.eps)
                    .map_err(|e| CliError::Config(format!("prior: {e}")))?
            }
        })
    }

    pub fn schedule(&self) -> NoiseSchedule {
        let s = &self.schedule;
        match s.kind {
            ScheduleKind::Constant => NoiseSchedule::Constant { sigma: s.sigma },
            ScheduleKind::Geometric => NoiseSchedule::Geometric {
                beta_min: s.beta_min,
                beta_max: s.beta_max,
            },
            ScheduleKind::Vp => NoiseSchedule::VpLinear {
                beta_min: s.beta_min,
                beta_max: s.beta_max,
            },
        }
    }

    pub fn build_base(&self) -> Result<BaseProcess> {
        let energy = self.build_energy()?;
        let prior = self.build_prior(&energy)?;
        let dim = energy.dim();
        let s = &self.schedule;
        let base = match s.kind {
            ScheduleKind::Vp => BaseProcess::vp(s.beta_min, s.beta_max, prior, dim),
            _ => BaseProcess::brownian(self.schedule(), prior, dim),
        }
        .map_err(|e| CliError::Config(format!("schedule: {e}")))?;
        Ok(if energy.zcom() {
            base.with_zcom(energy.n_particles(), energy.space_dim())
        } else {
            base
        })
    }

    pub fn run_config(&self) -> RunConfig {
        let t = &self.train;
        RunConfig {
            stages: t.stages,
            am_epochs: t.am_epochs,
            cm_epochs: t.cm_epochs,
            n_resample: t.n_resample,
            grad_steps: t.grad_steps,
            buffer_capacity: t.buffer_capacity,
            batch_size: t.batch_size,
            alpha_max: t.alpha_max.is_finite().then_some(t.alpha_max),
            lr_control: t.lr_control,
            lr_corrector: t.lr_corrector,
            warm_start_steps: t.warm_start_steps,
            sde: SdeConfig {
                n_steps: self.sde.n_steps,
                record_trajectory: false,
            },
            control_net: t.control_net.clone(),
            corrector_net: t.corrector_net.clone(),
            seed: self.seeds.train,
        }
    }
}

/// Sets `section.key[.subkey]` in a parsed document. The value is read as a
/// TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not of the form section.key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    let keys: Vec<&str> = path.split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key `{path}` must be section.key")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("override key `{path}`: `{k}` is not a table"))),
        };
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Every addressable key with its default, one `section.key = value` per line.
pub fn key_reference() -> String {
    let table = toml::Table::try_from(Config::default()).expect("config serializes");
    let mut out = String::new();
    flatten(&table, "", &mut out);
    out
}

fn flatten(table: &toml::Table, prefix: &str, out: &mut String) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(t, &key, out),
            _ => {
                let _ = writeln!(out, "  {key} = {v}");
            }
        }
    }
}
