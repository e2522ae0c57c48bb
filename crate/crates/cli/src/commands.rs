//! Subcommand implementations. Each takes a resolved [`Config`] and writes
//! its outputs under the given directory or file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use asbs::checkpoint::{load_stage, save_stage, META_FILE};
use asbs::metrics::{
    energy_w2, geometric_w2, mode_coverage, mw5_truth_sample, sinkhorn_distance, value_histogram, w2_exact, w2_sorted_1d, Histogram,
};
use asbs::rng::stream;
use asbs::trainer::{run_asbs, run_memoryless_demo, as_baseline_sampler, EpochRecord};
use asbs::{BaseProcess, Corrector, EnergyModel, NoiseSchedule, Prior, TrainedSampler};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Config, Metric, TrainMode};
use crate::error::{CliError, Result};
use crate::io::{read_samples, write_file, write_samples};
use crate::manifest::RunManifest;

pub const CONFIG_FILE: &str = "config.toml";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";

pub fn stage_dir_name(stage: usize) -> String {
    format!("stage_{stage:02}")
}

pub struct TrainOutcome {
    pub sampler: TrainedSampler,
    pub manifest: RunManifest,
}

pub fn train(cfg: &Config, out: &Path) -> Result<TrainOutcome> {
    train_with(cfg, out, |_| Ok(()))
}

/// Trains per `train.mode`, checkpointing every stage. `on_stage` runs after
/// each stage's checkpoint is written.
pub fn train_with<F>(cfg: &Config, out: &Path, mut on_stage: F) -> Result<TrainOutcome>
where
    F: FnMut(&TrainedSampler) -> asbs::Result<()>,
{
    let start = Instant::now();
    cfg.validate()?;
    let base = cfg.build_base()?;
    let energy = cfg.build_energy()?;
    let rc = cfg.run_config();
    let config_text = cfg.to_toml_string();
    let mut inputs = vec![(CONFIG_FILE.to_string(), config_text.clone().into_bytes())];

    let reference = if rc.warm_start_steps > 0 {
        let path = PathBuf::from(&cfg.train.warm_start_reference);
        if cfg.train.warm_start_reference.is_empty() {
            return Err(CliError::Config("train.warm_start_steps > 0 needs train.warm_start_reference".into()));
        }
        let x = read_samples(&path)?;
        inputs.push(("warm_start_reference".into(), fs::read(&path)?));
        Some(x)
    } else {
        None
    };

    fs::create_dir_all(out)?;
    write_file(&out.join(CONFIG_FILE), config_text.as_bytes())?;
    let mut manifest = RunManifest::new("train", cfg.to_json(), inputs);
    manifest.outputs.push(CONFIG_FILE.into());

    let snapshot = cfg.to_json();
    let mut checkpoints: Vec<String> = Vec::new();
    let mut hook = |s: &TrainedSampler| -> asbs::Result<()> {
        let name = stage_dir_name(s.stage);
        save_stage(&out.join(&name), s, snapshot.clone())?;
        checkpoints.push(name);
        on_stage(s)
    };

    let result = match cfg.train.mode {
        TrainMode::Memoryless => run_memoryless_demo(base, energy, rc, &mut hook),
        TrainMode::As => as_baseline_sampler(base, energy, rc).and_then(|mut s| {
            warm_start(&mut s, reference.as_ref())?;
            s.run_stages(&mut hook).map(|_| s)
        }),
        TrainMode::Asbs => match reference {
            None => run_asbs(base, energy, rc, &mut hook),
            Some(ref r) => TrainedSampler::new(base, energy, rc, None).and_then(|mut s| {
                warm_start(&mut s, Some(r))?;
                s.run_stages(&mut hook).map(|_| s)
            }),
        },
    };
    drop(hook);
    manifest.checkpoints = checkpoints;

    match result {
        Ok(sampler) => {
            write_file(&out.join(LOSS_TRACE_FILE), &loss_trace_csv(&sampler.trace))?;
            manifest.outputs.push(LOSS_TRACE_FILE.into());
            manifest.status = "ok".into();
            manifest.metrics = json!({
                "stages": sampler.stage,
                "control_steps": sampler.control_steps,
                "corrector_steps": sampler.corrector_steps,
                "final_mean_loss": sampler.trace.last().map(|r| r.mean_loss),
            });
            manifest.energy_evaluations = sampler.energy.evaluations();
            manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
            manifest.write(out)?;
            Ok(TrainOutcome { sampler, manifest })
        }
        Err(asbs::Error::NonFinite(reason)) => {
            manifest.status = "non_finite".into();
            manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
            manifest.write(out)?;
            Err(CliError::NonFinite {
                reason,
                last_good: manifest.checkpoints.last().map(|c| out.join(c)),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn warm_start(s: &mut TrainedSampler, reference: Option<&Array2<f64>>) -> asbs::Result<()> {
    if let Some(r) = reference {
        let mut rng = s.warm_start_rng();
        let steps = s.cfg.warm_start_steps;
        s.warm_start(r.view(), steps, &mut rng)?;
    }
    Ok(())
}

pub fn loss_trace_csv(trace: &[EpochRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in trace {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Restores a sampler and the config it was trained with from a stage directory.
pub fn load_sampler(dir: &Path) -> Result<(TrainedSampler, Config)> {
    let unreadable = |source: asbs::Error| CliError::Checkpoint {
        path: dir.to_path_buf(),
        source,
    };
    if !dir.join(META_FILE).is_file() {
        return Err(unreadable(asbs::Error::Format(format!("no {META_FILE} in the directory"))));
    }
    let ck = load_stage(dir).map_err(unreadable)?;
    let cfg = Config::from_json(ck.meta.config.clone()).map_err(|e| unreadable(asbs::Error::Format(e.to_string())))?;
    let base = cfg.build_base().map_err(|e| unreadable(asbs::Error::Format(e.to_string())))?;
    let energy = cfg.build_energy().map_err(|e| unreadable(asbs::Error::Format(e.to_string())))?;
    let mut s = TrainedSampler::from_parts(base, energy, cfg.run_config(), ck.control, ck.control_opt, ck.corrector).map_err(unreadable)?;
    s.stage = ck.meta.stage;
    s.control_steps = ck.meta.control_steps;
    s.corrector_steps = ck.meta.corrector_steps;
    s.trace = ck.meta.trace;
    Ok((s, cfg))
}

/// Draws `count` terminal samples from a checkpoint into a CSV.
pub fn sample(checkpoint: &Path, count: usize, seed: Option<u64>, out_csv: &Path) -> Result<Array2<f64>> {
    let (s, cfg) = load_sampler(checkpoint)?;
    let seed = seed.unwrap_or(cfg.seeds.sample);
    let x = s.sample(count, &mut stream(seed, 0))?;
    write_samples(out_csv, x.view())?;
    Ok(x)
}

/// Sample set with its provenance bytes for hashing.
struct Resolved {
    x: Array2<f64>,
    digest_bytes: Vec<u8>,
}

fn resolve(spec: &str, cfg: &Config, n: usize, seed: u64) -> Result<Resolved> {
    if let Some(name) = spec.strip_prefix("analytic:") {
        let mut rng = stream(seed, 0);
        let x = match name {
            "mw5" => mw5_truth_sample(&mut rng, n),
            "gmm40" => EnergyModel::gmm40(cfg.energy.gmm_seed, cfg.energy.mode_stdev)
                .sample_mixture(&mut rng, n)
                .expect("mixture"),
            "mixture" => cfg
                .build_energy()?
                .sample_mixture(&mut rng, n)
                .ok_or_else(|| CliError::Config("analytic:mixture needs a mixture energy".into()))?,
            _ => return Err(CliError::Config(format!("unknown analytic source `{spec}`"))),
        };
        return Ok(Resolved {
            x,
            digest_bytes: format!("{spec}:{n}:{seed}").into_bytes(),
        });
    }
    let path = Path::new(spec);
    if path.is_dir() {
        let (s, _) = load_sampler(path)?;
        let x = s.sample(n, &mut stream(seed, 0))?;
        let mut bytes = fs::read(path.join(asbs::checkpoint::CONTROL_FILE))?;
        bytes.extend(format!(":{n}:{seed}").into_bytes());
        return Ok(Resolved { x, digest_bytes: bytes });
    }
    if !path.exists() {
        return Err(CliError::MissingFile(path.to_path_buf()));
    }
    Ok(Resolved {
        x: read_samples(path)?,
        digest_bytes: fs::read(path)?,
    })
}

/// Result of `eval`: metric values plus the histogram files written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: String,
    pub truth: String,
    pub n_samples: usize,
    pub n_truth: usize,
    pub metrics: serde_json::Map<String, serde_json::Value>,
    pub histograms: Vec<String>,
    pub input_hash: String,
    pub energy_evaluations: u64,
}

fn metric_err(e: asbs::Error) -> CliError {
    match e {
        asbs::Error::SizeMismatch(m) => CliError::Metric(m),
        asbs::Error::NonFinite(m) => CliError::Metric(format!("non-finite input: {m}")),
        other => other.into(),
    }
}

/// Compares sample set `a` against `b` under `cfg.eval` and writes the report to `out_json`.
pub fn eval(a: &str, b: &str, cfg: &Config, out_json: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let ev = &cfg.eval;
    let sa = resolve(a, cfg, ev.n_samples, cfg.seeds.sample)?;
    let sb = resolve(b, cfg, ev.n_samples, cfg.seeds.eval)?;
    let (xa, xb) = (sa.x.view(), sb.x.view());
    let energy = cfg.build_energy()?;
    for (name, x) in [("samples", xa), ("truth", xb)] {
        if x.ncols() != energy.dim() {
            return Err(CliError::Metric(format!("{name} have {} columns, the energy expects {}", x.ncols(), energy.dim())));
        }
    }
    let manifest = RunManifest::new(
        "eval",
        cfg.to_json(),
        vec![
            ("config".into(), cfg.to_toml_string().into_bytes()),
            ("samples".into(), sa.digest_bytes),
            ("truth".into(), sb.digest_bytes),
        ],
    );

    let mut metrics = serde_json::Map::new();
    let mut histograms = Vec::new();
    let stem = out_json.file_stem().and_then(|s| s.to_str()).unwrap_or("eval").to_string();
    let dir = out_json.parent().map(Path::to_path_buf).unwrap_or_default();
    for m in &ev.metrics {
        let value = match m {
            Metric::Sinkhorn => {
                if xa.nrows() == 0 || xb.nrows() == 0 {
                    return Err(CliError::Metric("sinkhorn needs non-empty sample sets".into()));
                }
                serde_json::to_value(sinkhorn_distance(xa, xb, &ev.sinkhorn).map_err(metric_err)?).expect("serializable")
            }
            Metric::W2 => json!(w2_exact(xa, xb).map_err(metric_err)?),
            Metric::EnergyW2 => json!(energy_w2(&energy, xa, xb).map_err(metric_err)?),
            Metric::GeometricW2 => {
                if !energy.zcom() {
                    return Err(CliError::Metric("geometric_w2 needs a particle energy".into()));
                }
                json!(geometric_w2(xa, xb, energy.n_particles(), energy.space_dim(), &ev.align).map_err(metric_err)?)
            }
            Metric::ModeCoverage => {
                let (Some(centers), Some(sd)) = (energy.centers(), energy.mixture_stdev()) else {
                    return Err(CliError::Metric("mode_coverage needs a mixture energy".into()));
                };
                let radius = ev.mode_radius * sd;
                let (found, _) = mode_coverage(xa, centers.view(), radius);
                let (found_truth, _) = mode_coverage(xb, centers.view(), radius);
                json!({"modes": centers.nrows(), "found": found, "found_truth": found_truth, "radius": radius})
            }
            Metric::EnergyHistogram => {
                let mut files = Vec::new();
                for (tag, x) in [("samples", xa), ("truth", xb)] {
                    let e = energy.energy_batch(x)?;
                    let h = value_histogram(&e, ev.hist_bins, (ev.hist_range[0], ev.hist_range[1]));
                    let name = format!("{stem}_energy_hist_{tag}.csv");
                    write_histogram(&dir.join(&name), &h)?;
                    files.push(name.clone());
                    histograms.push(name);
                }
                json!({"files": files, "mean_energy_samples": mean_energy(&energy, xa)?, "mean_energy_truth": mean_energy(&energy, xb)?})
            }
        };
        let key = serde_json::to_value(m).expect("serializable");
        metrics.insert(key.as_str().expect("unit variant").to_string(), value);
    }
    let report = EvalReport {
        samples: a.into(),
        truth: b.into(),
        n_samples: xa.nrows(),
        n_truth: xb.nrows(),
        metrics,
        histograms,
        input_hash: manifest.input_hash,
        energy_evaluations: energy.evaluations(),
    };
    let mut bytes = serde_json::to_vec_pretty(&report).expect("serializable");
    bytes.push(b'\n');
    write_file(out_json, &bytes)?;
    Ok(report)
}

fn mean_energy(energy: &EnergyModel, x: ArrayView2<'_, f64>) -> Result<Option<f64>> {
    if x.nrows() == 0 {
        return Ok(None);
    }
    let e = energy.energy_batch(x)?;
    Ok(Some(e.iter().sum::<f64>() / e.len() as f64))
}

pub fn write_histogram(path: &Path, h: &Histogram) -> Result<()> {
    let mut buf = Vec::new();
    h.write_csv(&mut buf)?;
    write_file(path, &buf)
}

/// Unadjusted Langevin chains from the configured prior; pooled thinned states go to `samples.csv`.
pub fn langevin(cfg: &Config, out: &Path) -> Result<RunManifest> {
    let start = Instant::now();
    cfg.validate()?;
    let ev = &cfg.eval;
    if !(ev.langevin_step > 0.0) || ev.langevin_snapshots == 0 || ev.langevin_burn_in > ev.langevin_steps {
        return Err(CliError::Config("eval.langevin_step must be positive, langevin_snapshots >= 1, langevin_burn_in <= langevin_steps".into()));
    }
    let energy = cfg.build_energy()?;
    let prior = cfg.build_prior(&energy)?;
    let mut manifest = RunManifest::new("langevin", cfg.to_json(), vec![(CONFIG_FILE.into(), cfg.to_toml_string().into_bytes())]);
    let snaps = asbs::baseproc::langevin_chains(
        &energy,
        ev.langevin_step,
        ev.langevin_steps,
        ev.langevin_burn_in,
        ev.langevin_snapshots,
        &prior,
        &mut stream(cfg.seeds.langevin, 0),
        ev.langevin_chains,
    )?;
    let x = pool(&snaps, energy.dim());
    fs::create_dir_all(out)?;
    write_samples(&out.join("samples.csv"), x.view())?;
    let last = snaps.last().expect("at least one snapshot");
    let mut metrics = json!({
        "chains": ev.langevin_chains,
        "steps": ev.langevin_steps,
        "pooled_states": x.nrows(),
        "mean_energy": mean_energy(&energy, x.view())?,
    });
    if let (Some(centers), Some(sd)) = (energy.centers(), energy.mixture_stdev()) {
        let radius = ev.mode_radius * sd;
        metrics["modes_found_pooled"] = json!(mode_coverage(x.view(), centers.view(), radius).0);
        metrics["modes_found_final"] = json!(mode_coverage(last.view(), centers.view(), radius).0);
        metrics["modes"] = json!(centers.nrows());
    }
    manifest.metrics = metrics;
    manifest.outputs.push("samples.csv".into());
    manifest.status = "ok".into();
    manifest.energy_evaluations = energy.evaluations();
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(manifest)
}

fn pool(snaps: &[Array2<f64>], dim: usize) -> Array2<f64> {
    let rows: usize = snaps.iter().map(|s| s.nrows()).sum();
    let data: Vec<f64> = snaps.iter().flat_map(|s| s.iter().copied()).collect();
    Array2::from_shape_vec((rows, dim), data).expect("consistent snapshot shapes")
}

/// One trained variant of the memoryless comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoVariant {
    pub name: String,
    pub w2_to_target: f64,
    pub mean_loss_first: f64,
    pub mean_loss_last: f64,
    pub histogram: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub variants: Vec<DemoVariant>,
    pub target_histogram: String,
}

impl DemoReport {
    pub fn w2(&self, name: &str) -> Option<f64> {
        self.variants.iter().find(|v| v.name == name).map(|v| v.w2_to_target)
    }
}

pub const DEMO_VARIANTS: [&str; 3] = ["vp_memoryless", "naive", "asbs"];

/// Trains the three 1D variants: memoryless VP adjoint matching, adjoint
/// matching under the Brownian base with the base terminal score as the
/// corrector (ignoring the coupling of `X0` and `X1`), and ASBS on that
/// same base. Writes one terminal histogram per variant.
pub fn demo_memoryless(cfg: &Config, out: &Path) -> Result<DemoReport> {
    let start = Instant::now();
    cfg.validate()?;
    let energy = cfg.build_energy()?;
    if energy.dim() != 1 {
        return Err(CliError::Config("the memoryless demo is one-dimensional".into()));
    }
    let target = energy
        .sample_mixture(&mut stream(cfg.seeds.eval, 0), cfg.eval.n_samples)
        .ok_or_else(|| CliError::Config("the memoryless demo needs a mixture target".into()))?;
    let mut truth: Vec<f64> = target.iter().copied().collect();
    truth.sort_by(f64::total_cmp);
    let Prior::Gaussian { mean, stdev } = cfg.build_prior(&energy)? else {
        return Err(CliError::Config("the memoryless demo needs a Gaussian prior".into()));
    };
    let rc = cfg.run_config();
    let s = &cfg.schedule;
    let mut manifest = RunManifest::new("demo-memoryless", cfg.to_json(), vec![(CONFIG_FILE.into(), cfg.to_toml_string().into_bytes())]);
    fs::create_dir_all(out)?;
    let range = (cfg.eval.hist_range[0], cfg.eval.hist_range[1]);
    let bins = cfg.eval.hist_bins;

    let brownian = || BaseProcess::brownian(NoiseSchedule::Constant { sigma: s.sigma }, Prior::Gaussian { mean, stdev }, 1);
    let mut variants = Vec::new();
    let mut evals = 0;
    for name in DEMO_VARIANTS {
        let trained = match name {
            "vp_memoryless" => {
                let base = BaseProcess::vp(s.beta_min, s.beta_max, Prior::standard_normal(), 1)?;
                run_memoryless_demo(base, energy.clone(), rc.clone(), |_| Ok(()))?
            }
            "naive" => {
                let base = brownian()?;
                let var = stdev * stdev + base.kappa(0.0, 1.0);
                let mut t = TrainedSampler::new(base, energy.clone(), rc.clone(), Some(Corrector::Gaussian { mean, var }))?;
                t.run_stages(|_| Ok(()))?;
                t
            }
            _ => run_asbs(brownian()?, energy.clone(), rc.clone(), |_| Ok(()))?,
        };
        evals += trained.energy.evaluations();
        let x = trained.sample(cfg.eval.n_samples, &mut stream(cfg.seeds.sample, 0))?;
        let mut v: Vec<f64> = x.iter().copied().collect();
        if v.iter().any(|a| !a.is_finite()) {
            return Err(CliError::NonFinite {
                reason: format!("{name} samples"),
                last_good: None,
            });
        }
        v.sort_by(f64::total_cmp);
        let hist = format!("hist_{name}.csv");
        write_histogram(&out.join(&hist), &value_histogram(&v, bins, range))?;
        write_samples(&out.join(format!("samples_{name}.csv")), x.view())?;
        let trace = format!("loss_trace_{name}.csv");
        write_file(&out.join(&trace), &loss_trace_csv(&trained.trace))?;
        manifest.outputs.extend([hist.clone(), format!("samples_{name}.csv"), trace]);
        let adjoint: Vec<f64> = trained
            .trace
            .iter()
            .filter(|r| r.kind == asbs::trainer::EpochKind::Adjoint)
            .map(|r| r.mean_loss)
            .collect();
        variants.push(DemoVariant {
            name: name.into(),
            w2_to_target: w2_sorted_1d(&v, &truth),
            mean_loss_first: adjoint.first().copied().unwrap_or(f64::NAN),
            mean_loss_last: adjoint.last().copied().unwrap_or(f64::NAN),
            histogram: hist,
        });
    }
    let target_hist = "hist_target.csv".to_string();
    write_histogram(&out.join(&target_hist), &value_histogram(&truth, bins, range))?;
    manifest.outputs.push(target_hist.clone());
    let report = DemoReport {
        variants,
        target_histogram: target_hist,
    };
    let mut bytes = serde_json::to_vec_pretty(&report).expect("serializable");
    bytes.push(b'\n');
    write_file(&out.join("demo.json"), &bytes)?;
    manifest.outputs.push("demo.json".into());
    manifest.metrics = serde_json::to_value(&report).expect("serializable");
    manifest.status = "ok".into();
    manifest.energy_evaluations = evals;
    manifest.wall_clock_seconds = start.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(report)
}
