//! Scores synthetic ensembles whose calibration is known: a well-calibrated
//! ensemble, an under-dispersive one and an over-dispersive one.

use lam_diffusion::metrics::{crps, crps_cell, rmse, spread, ssr};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> lam_diffusion::Result<()> {
    let (samples, members, cells) = (500, 25, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    // truth and members share a predictable part plus unit noise
    let signal = Array2::from_shape_simple_fn((samples, cells), || unit.sample(&mut rng));
    let truth = &signal + &Array2::from_shape_simple_fn((samples, cells), || unit.sample(&mut rng));

    println!("{:>12} {:>8} {:>8} {:>8} {:>8}", "ensemble", "RMSE", "spread", "SSR", "CRPS");
    for (label, scale) in [("calibrated", 1.0), ("too narrow", 0.4), ("too wide", 2.0)] {
        let fc = Array3::from_shape_fn((samples, members, cells), |(s, _, c)| {
            signal[[s, c]] + scale * unit.sample(&mut rng)
        });
        println!(
            "{label:>12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            rmse(fc.view(), truth.view())?,
            spread(fc.view())?,
            ssr(fc.view(), truth.view())?,
            crps(fc.view(), truth.view())?
        );
    }

    println!("fair CRPS of {{0, 1}} against 0.5: {}", crps_cell(&mut [0.0, 1.0], 0.5));
    println!("fair CRPS of {{3}} against 1: {}", crps_cell(&mut [3.0], 1.0));
    Ok(())
}
