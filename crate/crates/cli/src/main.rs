use std::path::{Path, PathBuf};
use std::process::ExitCode;

use asbs_cli::commands;
use asbs_cli::config::key_reference;
use asbs_cli::{presets, CliError, Config, Result};
use clap::{Args, Parser, Subcommand};

/// Train, sample and evaluate adjoint Schrodinger bridge samplers.
///
/// Set RAYON_NUM_THREADS to bound the worker pool.
#[derive(Parser)]
#[command(name = "asbs", version, after_long_help = after_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Named preset (see `asbs presets`).
    #[arg(long)]
    preset: Option<String>,
    /// Override one key, e.g. `--set train.stages=3`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn explicit(&self) -> bool {
        self.config.is_some() || self.preset.is_some()
    }

    fn resolve(&self) -> Result<Config> {
        Config::load(self.config.as_deref(), self.preset.as_deref(), &self.overrides)
    }

    fn resolve_or(&self, preset: &str) -> Result<Config> {
        Config::load(self.config.as_deref(), self.preset.as_deref().or(Some(preset).filter(|_| self.config.is_none())), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a sampler, checkpointing after every stage.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw terminal samples from a stage checkpoint.
    Sample {
        /// Stage checkpoint directory.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: usize,
        /// Defaults to the checkpoint's `seeds.sample`.
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a sample set against a reference.
    ///
    /// Either side may be a CSV file, a checkpoint directory, or
    /// `analytic:mw5`, `analytic:gmm40`, `analytic:mixture`.
    Eval {
        #[arg(long)]
        samples: String,
        /// Defaults to `eval.truth`.
        #[arg(long)]
        truth: Option<String>,
        /// Config; defaults to the one stored in a checkpoint given as `--samples`.
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output JSON; histogram CSVs are written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run unadjusted Langevin chains on the configured energy.
    Langevin {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare memoryless, naive and ASBS training on a 1D target.
    DemoMemoryless {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved config as TOML.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// List the shipped presets.
    Presets,
}

fn after_help() -> String {
    format!("Config keys and defaults:\n{}", key_reference())
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn eval_config(cfg: &ConfigArgs, samples: &str) -> Result<Config> {
    let dir = Path::new(samples);
    if !cfg.explicit() && dir.join(asbs::checkpoint::META_FILE).is_file() {
        let (_, stored) = commands::load_sampler(dir)?;
        return stored.with_overrides(&cfg.overrides);
    }
    cfg.resolve()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { cfg, out } => {
            let outcome = commands::train(&cfg.resolve()?, &out)?;
            print_json(&outcome.manifest);
        }
        Command::Sample {
            checkpoint,
            count,
            seed,
            out,
        } => {
            let x = commands::sample(&checkpoint, count, seed, &out)?;
            println!("wrote {} samples to {}", x.nrows(), out.display());
        }
        Command::Eval { samples, truth, cfg, out } => {
            let c = eval_config(&cfg, &samples)?;
            let truth = truth.unwrap_or_else(|| c.eval.truth.clone());
            if truth.is_empty() {
                return Err(CliError::Config("no reference: pass --truth or set eval.truth".into()));
            }
            print_json(&commands::eval(&samples, &truth, &c, &out)?);
        }
        Command::Langevin { cfg, out } => print_json(&commands::langevin(&cfg.resolve()?, &out)?),
        Command::DemoMemoryless { cfg, out } => print_json(&commands::demo_memoryless(&cfg.resolve_or("demo_memoryless")?, &out)?),
        Command::Config { cfg } => print!("{}", cfg.resolve()?.to_toml_string()),
        Command::Presets => {
            for name in presets::NAMES {
                println!("{name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
