//! Samples a known Gaussian with the closed-form denoiser and shows how the
//! sampler's moment errors shrink as the number of steps grows.

use lam_diffusion::denoiser::AnalyticGaussianDenoiser;
use lam_diffusion::edm::{gaussian, integrate, NoiseSchedule, Preconditioner, Solver};
use lam_diffusion::rng::{substream, StreamTag};
use ndarray::Array3;

fn main() -> lam_diffusion::Result<()> {
    let shape = [1, 4, 4];
    let mean = Array3::from_shape_fn(shape, |(_, r, c)| (r as f64 - c as f64) * 0.5);
    let var = Array3::from_shape_fn(shape, |(_, r, c)| 0.25 * 16f64.powf((r * 4 + c) as f64 / 15.0));
    let oracle = AnalyticGaussianDenoiser::new(mean.clone(), var.clone())?;
    let pre = Preconditioner::default();
    let raw = oracle.as_raw(pre);
    let count = 4000;
    let conds = vec![&(); count];

    println!("{:>6} {:>6} {:>5} {:>14} {:>14}", "solver", "steps", "NFE", "mean |bias|", "var ratio");
    for solver in [Solver::Euler, Solver::Heun] {
        for steps in [10, 20, 50] {
            let schedule = NoiseSchedule::new(0.03, 80.0, 7.0, steps)?;
            let x0 = (0..count)
                .map(|i| gaussian(&mut substream(1, StreamTag::Member, i as u64, 0), shape, schedule.sigma_max))
                .collect();
            let out = integrate(&raw, &pre, &schedule, x0, &conds, solver)?;
            let n = count as f64;
            let m = out.samples.iter().fold(Array3::zeros(shape), |a, x| a + x) / n;
            let v = out.samples.iter().fold(Array3::zeros(shape), |a, x| a + (x - &m).mapv(|d| d * d)) / (n - 1.0);
            let bias = (&m - &mean).mapv(f64::abs).mean().unwrap_or(0.0);
            let ratio = (&v / &var).mean().unwrap_or(0.0);
            println!("{:>6} {steps:>6} {:>5} {bias:>14.5} {ratio:>14.4}", format!("{solver:?}"), out.nfe);
        }
    }
    Ok(())
}
