//! Command-line front end: each subcommand reads files, runs one pipeline
//! stage and writes new files. Inputs are never modified.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::dataset::{generate_dataset, Dataset};
use crate::error::{Error, Result};
use crate::grid::NormStats;
use crate::metrics::{MetricReport, AGGREGATE};
use crate::pipeline::{self, Baseline, ForecastRequest};
use crate::report;
use crate::rollout::{BoundaryKind, ForecastFile};
use crate::synthetic::Split;
use crate::training::{load_model, EpochLog, Trainer};

#[derive(Debug, Parser)]
#[command(name = "lamdiff", version, about = "Limited-area diffusion forecasting on a synthetic world")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// Run configuration file (`key = value` lines); defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file to write.
        #[arg(long)]
        out: PathBuf,
        /// Overrides `data.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compute normalization statistics of the training split.
    Stats {
        /// Dataset file.
        #[arg(long)]
        data: PathBuf,
        /// Statistics JSON to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoiser, or resume from a checkpoint.
    Train {
        /// Run configuration file; with `--resume`, its hash must match the checkpoint's.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset file.
        #[arg(long)]
        data: PathBuf,
        /// Statistics JSON from `stats`.
        #[arg(long)]
        stats: PathBuf,
        /// Checkpoint to write.
        #[arg(long)]
        out_checkpoint: PathBuf,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop once this many epochs are complete.
        #[arg(long)]
        until_epoch: Option<usize>,
        /// Per-epoch CSV log (default: checkpoint path with `.log.csv`).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Roll out ensemble forecasts.
    Forecast {
        /// Trained checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file supplying initial states and boundaries.
        #[arg(long)]
        data: PathBuf,
        /// Run configuration file (`rollout.*` keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `rollout.split`: train, val or test.
        #[arg(long)]
        split: Option<Split>,
        /// Overrides `rollout.members`.
        #[arg(long)]
        n_ens: Option<usize>,
        /// Overrides `rollout.steps`.
        #[arg(long)]
        steps: Option<usize>,
        /// Overrides `rollout.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `rollout.boundary`: truth or no-future.
        #[arg(long)]
        boundary: Option<BoundaryKind>,
        /// Forecast file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score forecasts, or a baseline at the same initial conditions.
    Evaluate {
        /// Forecast file from `forecast`.
        #[arg(long)]
        forecasts: PathBuf,
        /// Dataset file with the verifying truth.
        #[arg(long)]
        data: PathBuf,
        /// Statistics JSON used to standardize the scores.
        #[arg(long)]
        stats: PathBuf,
        /// Metric CSV to write.
        #[arg(long)]
        out_csv: PathBuf,
        /// Score persistence or climatology instead of the forecasts.
        #[arg(long)]
        baseline: Option<Baseline>,
    },
    /// Plot metric tables as SVG and summarize them.
    Report {
        /// Metric CSVs; each file stem labels its curves.
        #[arg(long, num_args = 1.., required = true)]
        csv: Vec<PathBuf>,
        /// Directory for the SVG plots and `summary.md`.
        #[arg(long)]
        out_dir: PathBuf,
        /// Run configuration file (`report.*` keys).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

/// Writes via a temporary sibling and a rename, refusing to overwrite an input.
fn write_output(path: &Path, inputs: &[&Path], bytes: &[u8]) -> Result<()> {
    if inputs.iter().any(|i| same_file(i, path)) {
        return Err(Error::Config(format!("output {} is also an input", path.display())));
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn read_stats(path: &Path) -> Result<NormStats> {
    let stats: NormStats = serde_json::from_slice(&std::fs::read(path)?)?;
    stats.validate()?;
    Ok(stats)
}

fn read_report(path: &Path) -> Result<MetricReport> {
    MetricReport::from_csv(&std::fs::read_to_string(path)?)
}

/// Runs one subcommand and returns a one-line summary.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::GenData { config, out, seed } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.set("data.seed", &seed.to_string())?;
            }
            let ds = generate_dataset(&cfg.dataset()?, Some(cfg.hash()))?;
            write_output(out, &[], &ds.to_bytes()?)?;
            Ok(format!(
                "wrote {} trajectories of {} states to {}",
                ds.trajectories.len(),
                ds.header.steps,
                out.display()
            ))
        }
        Command::Stats { data, out } => {
            let ds = Dataset::read_file(data)?;
            let stats = ds.training_stats()?;
            write_output(out, &[data], &serde_json::to_vec_pretty(&stats)?)?;
            Ok(format!("wrote statistics of {} variables to {}", stats.var_names.len(), out.display()))
        }
        Command::Train { config, data, stats, out_checkpoint, resume, until_epoch, log } => {
            let ds = Dataset::read_file(data)?;
            let stats_v = read_stats(stats)?;
            stats_v.check_covers(&ds.grid().var_names)?;
            let mut trainer = match resume {
                Some(ckpt) => {
                    let t = Trainer::from_checkpoint(&std::fs::read(ckpt)?, None)?;
                    if let Some(c) = config {
                        let hash = RunConfig::load(c)?.hash();
                        if hash != t.config_hash {
                            return Err(Error::Incompatible(format!(
                                "configuration hash {hash} differs from the checkpoint's {}",
                                t.config_hash
                            )));
                        }
                    }
                    if t.stats != stats_v {
                        return Err(Error::Incompatible("statistics differ from the checkpoint's".into()));
                    }
                    if &t.grid != ds.grid() {
                        return Err(Error::Incompatible("checkpoint was trained on a different grid".into()));
                    }
                    t
                }
                None => {
                    let cfg = load_config(config.as_deref())?;
                    let net = cfg.apply_model(pipeline::net_config_for(&ds))?;
                    pipeline::new_trainer(&ds, &stats_v, net, cfg.train()?, cfg.inference_schedule()?, cfg.hash())?
                }
            };
            let log_path = log.clone().unwrap_or_else(|| {
                let mut p = out_checkpoint.as_os_str().to_owned();
                p.push(".log.csv");
                PathBuf::from(p)
            });
            let mut inputs: Vec<&Path> = vec![data, stats];
            if let Some(r) = resume {
                inputs.push(r);
            }
            let mut log_text = format!("{}\n", EpochLog::CSV_HEADER);
            let mut stderr = std::io::stderr();
            pipeline::train(&mut trainer, &ds, *until_epoch, |l| {
                log_text.push_str(&l.csv_row());
                log_text.push('\n');
                let val = l.val_loss.map_or("-".into(), |v| format!("{v:.4e}"));
                let _ = writeln!(stderr, "epoch {} train {:.4e} val {val}", l.epoch, l.train_loss);
            })?;
            write_output(&log_path, &inputs, log_text.as_bytes())?;
            write_output(out_checkpoint, &inputs, &trainer.checkpoint_bytes()?)?;
            Ok(format!(
                "trained to epoch {} of {}, checkpoint {}",
                trainer.progress.epoch,
                trainer.config.total_epochs(),
                out_checkpoint.display()
            ))
        }
        Command::Forecast { checkpoint, data, config, split, n_ens, steps, seed, boundary, out } => {
            let mut cfg = load_config(config.as_deref())?;
            let overrides = [
                ("rollout.split", split.map(|s| format!("{s:?}").to_lowercase())),
                ("rollout.members", n_ens.map(|v| v.to_string())),
                ("rollout.steps", steps.map(|v| v.to_string())),
                ("rollout.seed", seed.map(|v| v.to_string())),
                ("rollout.boundary", boundary.map(|b| b.name().to_string())),
            ];
            for (k, v) in overrides {
                if let Some(v) = v {
                    cfg.set(k, &v)?;
                }
            }
            cfg.validate()?;
            let model = load_model(&std::fs::read(checkpoint)?)?;
            let ds = Dataset::read_file(data)?;
            let settings = cfg.rollout()?;
            let (inits, stride) = cfg.inits()?;
            let split = cfg.split()?;
            let req = ForecastRequest {
                split,
                samples: pipeline::initial_conditions(&ds, split, settings.steps, inits, stride)?,
                settings,
                boundary: cfg.boundary()?,
                config_hash: cfg.hash(),
            };
            let file = pipeline::forecast(&model, &ds, &req)?;
            write_output(out, &[checkpoint, data], &file.to_bytes()?)?;
            Ok(format!(
                "wrote {} forecasts of {} members x {} steps to {}",
                req.samples.len(),
                settings.members,
                settings.steps,
                out.display()
            ))
        }
        Command::Evaluate { forecasts, data, stats, out_csv, baseline } => {
            let file = ForecastFile::from_bytes(&std::fs::read(forecasts)?)?;
            let ds = Dataset::read_file(data)?;
            let stats_v = read_stats(stats)?;
            let report = match baseline {
                None => pipeline::evaluate_file(&file, &ds, &stats_v)?,
                Some(b) => pipeline::baseline_report(&ds, *b, &file.header.samples, file.header.steps, &stats_v)?,
            };
            let mut text = format!("# config_hash={}\n", file.header.config_hash);
            text.push_str(&report.to_csv()?);
            write_output(out_csv, &[forecasts, data, stats], text.as_bytes())?;
            Ok(format!("wrote {} metric rows to {}", report.rows.len(), out_csv.display()))
        }
        Command::Report { csv, out_dir, config } => {
            let cfg = load_config(config.as_deref())?;
            let (w, h) = cfg.plot_size()?;
            let reports = csv
                .iter()
                .map(|p| {
                    let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    Ok((label, read_report(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let inputs: Vec<&Path> = csv.iter().map(PathBuf::as_path).collect();
            let plots = report::aggregate_plots(&reports, w, h)?;
            for (name, svg) in &plots {
                write_output(&out_dir.join(name), &inputs, svg.as_bytes())?;
            }
            write_output(&out_dir.join("summary.md"), &inputs, summary(&reports).as_bytes())?;
            Ok(format!("wrote {} plots and summary.md to {}", plots.len(), out_dir.display()))
        }
    }
}

/// Markdown table of aggregate scores at the first and last lead.
pub fn summary(reports: &[(String, MetricReport)]) -> String {
    let mut s = String::from("| run | members | lead | RMSE | spread | SSR | CRPS |\n|---|---|---|---|---|---|---|\n");
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for (label, r) in reports {
        let leads: Vec<usize> = r.rows.iter().filter(|x| x.variable == AGGREGATE).map(|x| x.lead).collect();
        let (Some(first), Some(last)) = (leads.iter().min(), leads.iter().max()) else { continue };
        let mut picks = vec![*first];
        if last != first {
            picks.push(*last);
        }
        for lead in picks {
            if let Some(row) = r.get(AGGREGATE, lead) {
                s.push_str(&format!(
                    "| {label} | {} | {lead} | {:.4} | {} | {} | {:.4} |\n",
                    row.n_ens,
                    row.rmse,
                    opt(row.spread),
                    opt(row.ssr),
                    row.crps
                ));
            }
        }
    }
    s
}
