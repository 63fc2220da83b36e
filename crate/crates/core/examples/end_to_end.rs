//! Runs the whole command-line pipeline in a temporary directory: data, stats,
//! training, forecasts with both boundary providers, evaluation against the
//! baselines and the report.

use clap::Parser;
use lam_diffusion::cli::{run, Cli};

const CONFIG: &str = "
world.width = 24
world.height = 24
world.boundary_width = 2
world.steps = 14
data.trajectories = 5
data.train_fraction = 0.6
data.val_fraction = 0.2
model.latent = 8
model.width1 = 8
model.width2 = 16
model.embed = 32
train.stage_epochs = 40,10
train.stage_lr = 2e-3,2e-4
rollout.members = 5
rollout.steps = 10
rollout.inits_per_trajectory = 2
";

fn lamdiff(args: &[&str]) -> lam_diffusion::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("lamdiff").chain(args.iter().copied()))
        .map_err(|e| lam_diffusion::Error::Config(e.to_string()))?;
    println!("$ lamdiff {}\n  {}", args.join(" "), run(&cli)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    std::fs::write(dir.path().join("run.cfg"), CONFIG)?;
    let cfg = p("run.cfg");

    lamdiff(&["gen-data", "--config", &cfg, "--out", &p("data.bin")])?;
    lamdiff(&["stats", "--data", &p("data.bin"), "--out", &p("stats.json")])?;
    lamdiff(&[
        "train",
        "--config",
        &cfg,
        "--data",
        &p("data.bin"),
        "--stats",
        &p("stats.json"),
        "--out-checkpoint",
        &p("model.ckpt"),
    ])?;
    for boundary in ["truth", "no-future"] {
        let fc = p(&format!("{boundary}.bin"));
        lamdiff(&[
            "forecast",
            "--checkpoint",
            &p("model.ckpt"),
            "--data",
            &p("data.bin"),
            "--config",
            &cfg,
            "--boundary",
            boundary,
            "--out",
            &fc,
        ])?;
        lamdiff(&[
            "evaluate",
            "--forecasts",
            &fc,
            "--data",
            &p("data.bin"),
            "--stats",
            &p("stats.json"),
            "--out-csv",
            &p(&format!("{boundary}.csv")),
        ])?;
    }
    for baseline in ["persistence", "climatology"] {
        lamdiff(&[
            "evaluate",
            "--forecasts",
            &p("truth.bin"),
            "--data",
            &p("data.bin"),
            "--stats",
            &p("stats.json"),
            "--baseline",
            baseline,
            "--out-csv",
            &p(&format!("{baseline}.csv")),
        ])?;
    }
    let csvs = ["truth", "no-future", "persistence", "climatology"].map(|n| p(&format!("{n}.csv")));
    let mut args = vec!["report", "--csv"];
    args.extend(csvs.iter().map(String::as_str));
    let out = p("report");
    args.extend(["--out-dir", &out]);
    lamdiff(&args)?;
    println!("\n{}", std::fs::read_to_string(dir.path().join("report/summary.md"))?);
    Ok(())
}
