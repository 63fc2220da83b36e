#![allow(dead_code)]

pub mod reference;

use lam_diffusion::dataset::{generate_dataset, Dataset};
use lam_diffusion::grid::{GridSpec, NormStats};
use lam_diffusion::net::NetConfig;
use lam_diffusion::pipeline::{net_config_for, split_samples};
use lam_diffusion::synthetic::{DatasetConfig, Split, ToyWorldConfig};
use lam_diffusion::training::TrainingSample;

/// 16×16 world with a 2-cell frame, three short trajectories split 1/1/1.
pub fn small_config() -> DatasetConfig {
    let grid =
        GridSpec::new(16, 16, 2, vec!["theta".into(), "u".into(), "v".into()], vec![1.0, 0.1, 0.1], 3.0).unwrap();
    DatasetConfig {
        world: ToyWorldConfig { grid, steps: 10, ..Default::default() },
        trajectories: 3,
        blob_count: 2,
        split_fractions: (1.0 / 3.0, 1.0 / 3.0),
        ..Default::default()
    }
}

pub fn small_dataset() -> (Dataset, NormStats) {
    let ds = generate_dataset(&small_config(), None).unwrap();
    let stats = ds.training_stats().unwrap();
    (ds, stats)
}

/// Narrow network for fast tests.
pub fn small_net(ds: &Dataset) -> NetConfig {
    let mut c = net_config_for(ds);
    c.latent = 8;
    c.widths = [8, 16];
    c.frequencies = 4;
    c.embed = 16;
    c.max_groups = 4;
    c
}

pub fn train_samples(ds: &Dataset, stats: &NormStats) -> Vec<TrainingSample> {
    split_samples(ds, Split::Train, stats).unwrap()
}
