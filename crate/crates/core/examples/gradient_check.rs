//! Checks reverse-mode gradients against central differences, first for each
//! primitive operation, then for the complete denoising loss of a small
//! network.

use std::sync::Arc;

use lam_diffusion::dataset::generate_dataset;
use lam_diffusion::edm::{NoiseSchedule, Preconditioner};
use lam_diffusion::grid::GridSpec;
use lam_diffusion::net::CondDenoiserNet;
use lam_diffusion::pipeline::net_config_for;
use lam_diffusion::rng::StreamTag;
use lam_diffusion::synthetic::{DatasetConfig, ToyWorldConfig};
use lam_diffusion::training::{build_samples, draw_noise, record_loss, LambdaMode, LossWeights, TrainingSample};
use lam_tensor::{grad_check, op_suite, Probe, TensorError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, report) in op_suite(1, 1e-6)? {
        println!("{name:<40} max rel error {:.2e} over {} probes", report.max_rel_error, report.probes);
    }

    let grid = GridSpec::new(12, 12, 2, vec!["theta".into(), "u".into(), "v".into()], vec![1.0, 0.1, 0.1], 3.0)?;
    let cfg = DatasetConfig {
        world: ToyWorldConfig { grid, steps: 6, ..Default::default() },
        trajectories: 3,
        split_fractions: (1.0 / 3.0, 1.0 / 3.0),
        ..Default::default()
    };
    let ds = generate_dataset(&cfg, None)?;
    let stats = ds.training_stats()?;
    let mut net_cfg = net_config_for(&ds);
    (net_cfg.latent, net_cfg.widths, net_cfg.frequencies, net_cfg.embed, net_cfg.max_groups) = (4, [4, 8], 4, 8, 2);
    let mut net = CondDenoiserNet::<f64>::new(net_cfg, 0)?;
    // the output layer starts at zero; give it weights so every path matters
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in net.params_mut().iter_mut().filter(|p| p.name.starts_with("out.dec.")) {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
    let mask = Arc::new(ds.grid().region_mask());
    let samples = build_samples(&ds.trajectories[0], &stats, &mask)?;
    let batch: Vec<&TrainingSample> = samples.iter().take(2).collect();
    let noisy = draw_noise(&batch, &NoiseSchedule::training(), 0, StreamTag::TrainStep, 0)?;
    let weights = LossWeights::new(ds.grid(), &stats, LambdaMode::InverseVariance)?;
    let pre = Preconditioner::default();
    let inputs: Vec<_> = net.params().iter().map(|p| p.value.clone()).collect();
    println!("network with {} parameters, sigmas {:.3?}", net.param_count(), noisy.sigma);
    let report = grad_check(&inputs, 1e-6, Probe::Sample { count: 200, seed: 1 }, |tape, vars| {
        record_loss(tape, vars, &net, &batch, &noisy, &pre, &weights)
            .map_err(|e| TensorError::Shape { op: "loss", detail: e.to_string() })
    })?;
    println!("full loss: max rel error {:.2e} over {} probes", report.max_rel_error, report.probes);
    Ok(())
}
