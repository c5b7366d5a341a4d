use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bon::experiment::{self, RunConfig, PRESETS};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bon", version, about = "Boundary optimizing network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file or a named preset.
    Run {
        /// Path to a TOML config, or one of the preset names.
        config: String,
        /// Run directory. Defaults to <output root>/<config name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root for default run directories.
        #[arg(long, env = "BON_OUTPUT_ROOT", default_value = "runs")]
        output_root: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Classifier dropout (baseline runs).
        #[arg(long)]
        dropout: Option<f64>,
    },
    /// Recompute boundary.csv from a run's final classifier.
    ExportBoundary {
        run_dir: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Write the synthetic cloud of a run, final or at a snapshot epoch.
    ExportCloud {
        run_dir: PathBuf,
        #[arg(long)]
        epoch: Option<usize>,
    },
    /// Summarize several runs side by side.
    Compare {
        #[arg(required = true, num_args = 2..)]
        run_dirs: Vec<PathBuf>,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a preset as TOML, or list presets.
    Preset { name: Option<String> },
}

fn load_config(spec: &str) -> Result<RunConfig> {
    if let Some(cfg) = RunConfig::preset(spec) {
        return Ok(cfg);
    }
    let path = Path::new(spec);
    if !path.exists() {
        bail!("{spec} is neither a config file nor a preset ({})", PRESETS.join(", "));
    }
    Ok(RunConfig::load(path)?)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            output_root,
            epochs,
            seed,
            dropout,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(e) = epochs {
                cfg.training.epochs = e;
                cfg.export.cloud_epochs.retain(|&c| c <= e);
            }
            if let Some(s) = seed {
                cfg.training.seed = s;
            }
            if let Some(p) = dropout {
                cfg.classifier.dropout = p;
            }
            cfg.validate()?;
            let dir = out.unwrap_or_else(|| output_root.join(&cfg.name));
            let outcome = experiment::run(&cfg, &dir)
                .with_context(|| format!("run {} failed", cfg.name))?;
            let last = outcome.session.state.last().expect("at least one epoch");
            println!(
                "{}: {} epochs in {:.1}s, acc_real {:.4}, mean_synth_mse {:.6}",
                dir.display(),
                last.epoch,
                outcome.wall_time.as_secs_f64(),
                last.acc_real,
                last.mean_synth_mse
            );
        }
        Command::ExportBoundary { run_dir, resolution } => {
            let path = experiment::export_boundary(&run_dir, resolution)?;
            println!("{}", path.display());
        }
        Command::ExportCloud { run_dir, epoch } => {
            let path = experiment::export_cloud(&run_dir, epoch)?;
            println!("{}", path.display());
        }
        Command::Compare { run_dirs, out } => {
            let csv = experiment::summary_csv(&experiment::compare_runs(&run_dirs)?);
            match out {
                Some(p) => fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Preset { name } => match name {
            Some(n) => match RunConfig::preset(&n) {
                Some(cfg) => print!("{}", cfg.to_toml()),
                None => bail!("unknown preset {n}; available: {}", PRESETS.join(", ")),
            },
            None => PRESETS.iter().for_each(|p| println!("{p}")),
        },
    }
    Ok(())
}
