//! Briefly trains a model, then runs ensemble rollouts with the true future
//! boundary and with the boundary frozen at initialization, and compares
//! their scores.

use std::sync::Arc;

use lam_diffusion::config::RunConfig;
use lam_diffusion::dataset::generate_dataset;
use lam_diffusion::pipeline::{
    evaluate_file, forecast, initial_conditions, net_config_for, new_trainer, train, ForecastRequest,
};
use lam_diffusion::rollout::{ensemble_forecast, BoundaryKind, Forecaster, RolloutSettings, TrajectoryBoundary};
use lam_diffusion::synthetic::Split;
use lam_diffusion::training::load_model;

const CONFIG: &str = "
world.width = 24
world.height = 24
world.boundary_width = 2
world.steps = 16
data.trajectories = 6
data.train_fraction = 0.67
data.val_fraction = 0.17
model.latent = 8
model.width1 = 8
model.width2 = 16
model.embed = 32
train.stage_epochs = 40,10
train.stage_lr = 2e-3,2e-4
rollout.members = 8
rollout.steps = 12
rollout.threads = true
rollout.chunk = 2
";

fn main() -> lam_diffusion::Result<()> {
    let cfg = RunConfig::parse(CONFIG)?;
    let ds = generate_dataset(&cfg.dataset()?, Some(cfg.hash()))?;
    let stats = ds.training_stats()?;
    let net = cfg.apply_model(net_config_for(&ds))?;
    let mut trainer = new_trainer(&ds, &stats, net, cfg.train()?, cfg.inference_schedule()?, cfg.hash())?;
    train(&mut trainer, &ds, None, |_| {})?;
    let model = load_model(&trainer.checkpoint_bytes()?)?;

    // one rollout by hand, to show the pieces
    let mask = Arc::new(ds.grid().region_mask());
    let f = Forecaster {
        model: &model.net,
        stats: &model.meta.stats,
        mask: &mask,
        schedule: model.meta.inference,
        pre: trainer.preconditioner(),
    };
    let traj = &ds.split(Split::Test)[0];
    let provider = TrajectoryBoundary::new(traj, 1, BoundaryKind::Truth, &mask)?;
    let (prev, curr) = provider.initial_states();
    let settings = RolloutSettings { steps: 3, members: 4, seed: 1, chunk: 4, threads: false };
    let ens = ensemble_forecast(&f, (&prev, &curr), &provider, &settings, None)?;
    for (m, member) in ens.members.iter().enumerate() {
        let theta: Vec<String> = member.iter().map(|s| format!("{:+.4}", s.values[[0, 12, 12]])).collect();
        println!("member {m}: theta at the centre over leads 1-3: {}", theta.join(" "));
    }

    let settings = cfg.rollout()?;
    let samples = initial_conditions(&ds, Split::Test, settings.steps, 2, 2)?;
    for boundary in [BoundaryKind::Truth, BoundaryKind::NoFuture] {
        let req = ForecastRequest {
            split: Split::Test,
            samples: samples.clone(),
            settings,
            boundary,
            config_hash: cfg.hash(),
        };
        let report = evaluate_file(&forecast(&model, &ds, &req)?, &ds, &stats)?;
        println!("{} boundary:", boundary.name());
        for lead in [1, 4, 8, 12] {
            let row = report.get("aggregate", lead).expect("lead is scored");
            println!(
                "  lead {lead:>2}: RMSE {:.4} CRPS {:.4} SSR {:.3}",
                row.rmse,
                row.crps,
                row.ssr.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
