//! Generates the default toy dataset and prints its layout, the normalization
//! statistics and the two trivial baselines.

use lam_diffusion::dataset::generate_dataset;
use lam_diffusion::grid::state_moments;
use lam_diffusion::pipeline::{baseline_report, initial_conditions, Baseline};
use lam_diffusion::synthetic::{analytic_field, DatasetConfig, Split, ToyWorldConfig};

fn main() -> lam_diffusion::Result<()> {
    let world = ToyWorldConfig::default();
    let (theta, u, v) = analytic_field(&world, 24.0, 24.0, 0.0);
    println!("analytic field at the domain centre, t = 0: theta {theta:.4}, u {u:.4}, v {v:.4}");

    let cfg = DatasetConfig::default();
    let ds = generate_dataset(&cfg, None)?;
    let g = ds.grid();
    println!(
        "{} trajectories of {} states on a {}x{} grid with a {}-cell boundary frame",
        ds.trajectories.len(),
        ds.header.steps,
        g.height,
        g.width,
        g.boundary_width
    );
    for split in [Split::Train, Split::Val, Split::Test] {
        println!("  {split:?}: trajectories {:?}", ds.header.splits.range(split));
    }
    println!("forcings {:?}, statics {:?}", ds.header.forcing_names, ds.header.static_names);

    let stats = ds.training_stats()?;
    for (i, name) in stats.var_names.iter().enumerate() {
        println!(
            "  {name:>5}: mean {:+.4} std {:.4} | residual mean {:+.2e} std {:.4}",
            stats.mean[i], stats.std[i], stats.res_mean[i], stats.res_std[i]
        );
    }

    let first = &ds.trajectories[0];
    let (mean, std) = state_moments(3, first.states.iter().map(|s| s.values.view()));
    println!("trajectory 0 raw moments: mean {mean:.3?} std {std:.3?}");

    let samples = initial_conditions(&ds, Split::Test, 19, 1, 2)?;
    for b in [Baseline::Persistence, Baseline::Climatology] {
        let r = baseline_report(&ds, b, &samples, 19, &stats)?;
        let at = |lead| r.get("aggregate", lead).map_or(f64::NAN, |row| row.rmse);
        println!("{b:?}: aggregate RMSE lead 1 {:.4}, lead 10 {:.4}, lead 19 {:.4}", at(1), at(10), at(19));
    }
    Ok(())
}
