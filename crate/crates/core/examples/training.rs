//! Trains a narrow network on a small toy world through the staged
//! learning-rate schedule, then round-trips the checkpoint and resumes.

use lam_diffusion::config::RunConfig;
use lam_diffusion::dataset::generate_dataset;
use lam_diffusion::pipeline::{net_config_for, new_trainer, split_samples, train};
use lam_diffusion::synthetic::Split;
use lam_diffusion::training::{sha256_hex, Trainer};

const CONFIG: &str = "
world.width = 24
world.height = 24
world.boundary_width = 2
world.steps = 16
data.trajectories = 6
data.blob_count = 3
data.train_fraction = 0.67
data.val_fraction = 0.17
model.latent = 8
model.width1 = 8
model.width2 = 16
model.embed = 32
train.stage_epochs = 8,4
train.stage_lr = 2e-3,2e-4
";

fn main() -> lam_diffusion::Result<()> {
    let cfg = RunConfig::parse(CONFIG)?;
    let ds = generate_dataset(&cfg.dataset()?, Some(cfg.hash()))?;
    let stats = ds.training_stats()?;
    let net = cfg.apply_model(net_config_for(&ds))?;
    let mut trainer = new_trainer(&ds, &stats, net, cfg.train()?, cfg.inference_schedule()?, cfg.hash())?;
    let val = split_samples(&ds, Split::Val, &stats)?;
    println!(
        "{} parameters, validation loss before training {:.4}",
        trainer.net.param_count(),
        trainer.validation_loss(&val)?
    );

    println!("{}", lam_diffusion::training::EpochLog::CSV_HEADER);
    train(&mut trainer, &ds, Some(6), |log| println!("{}", log.csv_row()))?;

    // stop, serialize, and carry on from the bytes
    let bytes = trainer.checkpoint_bytes()?;
    println!("checkpoint after 6 epochs: {} bytes, sha256 {}", bytes.len(), &sha256_hex(&bytes)[..16]);
    let mut resumed = Trainer::from_checkpoint(&bytes, None)?;
    train(&mut resumed, &ds, None, |log| println!("{}", log.csv_row()))?;
    println!("validation loss after {} epochs {:.4}", resumed.progress.epoch, resumed.validation_loss(&val)?);
    Ok(())
}
