use lam_diffusion::dataset::{generate_dataset, Dataset};
use lam_diffusion::grid::state_moments;
use lam_diffusion::synthetic::{
    analytic_field, analytic_state, climatology_baseline, forcing_at, generate_trajectory, persistence_baseline, Blob,
    DatasetConfig, Split, ToyWorldConfig, FORCING_PAIRS,
};
use proptest::prelude::*;

fn world(blobs: Vec<Blob>) -> ToyWorldConfig {
    ToyWorldConfig { blobs, ..Default::default() }
}

/// `∂θ/∂t + u·∂θ/∂x + v·∂θ/∂y − κ∇²θ − A·(2π/P)·cos(2πt/P)` by central differences.
fn pde_residual(cfg: &ToyWorldConfig, x: f64, y: f64, t: f64) -> f64 {
    let h = 1e-3;
    let th = |x, y, t| analytic_field(cfg, x, y, t).0;
    let dt = (th(x, y, t + h) - th(x, y, t - h)) / (2.0 * h);
    let dx = (th(x + h, y, t) - th(x - h, y, t)) / (2.0 * h);
    let dy = (th(x, y + h, t) - th(x, y - h, t)) / (2.0 * h);
    let c = th(x, y, t);
    let lap = (th(x + h, y, t) + th(x - h, y, t) + th(x, y + h, t) + th(x, y - h, t) - 4.0 * c) / (h * h);
    let (_, u, v) = analytic_field(cfg, x, y, t);
    let p = cfg.diurnal_period;
    let source = cfg.diurnal_amplitude * std::f64::consts::TAU / p * (std::f64::consts::TAU * t / p).cos();
    dt + u * dx + v * dy - cfg.kappa * lap - source
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn theta_solves_the_forced_advection_diffusion_equation(
        x in 5.0f64..42.0, y in 5.0f64..42.0, t in 0.0f64..80.0,
        bx in 10.0f64..38.0, by in 10.0f64..38.0, width in 2.5f64..5.0, amp in -2.0f64..2.0,
    ) {
        let cfg = world(vec![Blob { x: bx, y: by, width, amplitude: amp }]);
        let r = pde_residual(&cfg, x, y, t);
        prop_assert!(r.abs() < 2e-4, "residual {r}");
    }

    #[test]
    fn winds_are_solid_body_rotation(x in 0.0f64..47.0, y in 0.0f64..47.0, t in 0.0f64..80.0) {
        let cfg = ToyWorldConfig::default();
        let (_, u, v) = analytic_field(&cfg, x, y, t);
        let rate = cfg.rotation_rate(t);
        prop_assert!((u + rate * (y - 23.5)).abs() < 1e-12);
        prop_assert!((v - rate * (x - 23.5)).abs() < 1e-12);
    }

    #[test]
    fn forcings_lie_on_the_unit_circle(t in 0.0f64..10_000.0) {
        let f = forcing_at(&ToyWorldConfig::default(), t);
        prop_assert!(f.unit_circle_error(&FORCING_PAIRS) < 1e-12);
    }
}

#[test]
fn blob_mass_is_conserved_under_diffusion() {
    let mut cfg = world(vec![Blob { x: 23.5, y: 23.5, width: 3.0, amplitude: 1.0 }]);
    cfg.diurnal_amplitude = 0.0;
    let mass = |t: f64| analytic_state(&cfg, t).index_axis(ndarray::Axis(0), 0).sum();
    let (m0, m1) = (mass(0.0), mass(40.0));
    assert!((m0 - 2.0 * std::f64::consts::PI * 9.0).abs() < 1e-6, "{m0}");
    assert!((m1 / m0 - 1.0).abs() < 1e-6, "{m0} {m1}");
}

#[test]
fn observation_noise_has_the_configured_relative_scale() {
    let mut cfg = world(vec![
        Blob { x: 12.0, y: 30.0, width: 4.0, amplitude: 1.5 },
        Blob { x: 30.0, y: 14.0, width: 3.0, amplitude: -1.0 },
    ]);
    cfg.noise_std = 0.05;
    cfg.seed = 17;
    let noisy = generate_trajectory(&cfg).unwrap();
    let clean: Vec<_> = (0..cfg.steps).map(|k| analytic_state(&cfg, k as f64)).collect();
    let (_, scale) = state_moments(3, clean.iter().map(|a| a.view()));
    let resid: Vec<_> = noisy.states.iter().zip(&clean).map(|(n, c)| &n.values - c).collect();
    let (mean, std) = state_moments(3, resid.iter().map(|a| a.view()));
    for v in 0..3 {
        assert!(mean[v].abs() < 0.01 * scale[v]);
        assert!((std[v] / (0.05 * scale[v]) - 1.0).abs() < 0.02, "variable {v}");
    }
}

#[test]
fn datasets_are_reproducible_and_seed_dependent() {
    let cfg = DatasetConfig { trajectories: 4, split_fractions: (0.5, 0.25), ..Default::default() };
    let a = generate_dataset(&cfg, None).unwrap().to_bytes().unwrap();
    let b = generate_dataset(&cfg, None).unwrap().to_bytes().unwrap();
    assert_eq!(a, b);
    let c = generate_dataset(&DatasetConfig { seed: 1, ..cfg.clone() }, None).unwrap().to_bytes().unwrap();
    assert_ne!(a, c);

    let ds = Dataset::from_bytes(&a).unwrap();
    let again = generate_dataset(&cfg, None).unwrap();
    assert_eq!(ds.trajectories, again.trajectories);
    for t in &ds.trajectories {
        for s in &t.states {
            assert!(s.values.iter().all(|v| f64::from(*v as f32) == *v));
        }
    }
    assert!(Dataset::from_bytes(&a[..a.len() - 4]).is_err());
}

#[test]
fn default_dataset_layout() {
    let cfg = DatasetConfig::default();
    let ds = generate_dataset(&cfg, Some("abc".into())).unwrap();
    assert_eq!(ds.trajectories.len(), 10);
    assert_eq!(ds.header.steps, 24);
    assert_eq!(ds.split(Split::Train).len(), 7);
    assert_eq!(ds.split(Split::Val).len(), 1);
    assert_eq!(ds.split(Split::Test).len(), 2);
    assert!(ds.header.start_times.iter().all(|&t| (0.0..64.0).contains(&t) && t.fract() == 0.0));
    let stats = ds.training_stats().unwrap();
    assert!(stats.std.iter().chain(&stats.res_std).all(|s| *s > 0.0));
}

#[test]
fn baselines() {
    let cfg = DatasetConfig { trajectories: 3, split_fractions: (0.34, 0.0), ..Default::default() };
    let ds = generate_dataset(&cfg, None).unwrap();
    let t = &ds.trajectories[0];
    let p = persistence_baseline(&t.states, 2, 3).unwrap();
    assert_eq!(p.len(), 4);
    assert!(p.iter().all(|s| s.values == t.states[2].values));
    let clim = climatology_baseline(&ds.trajectories[..2]).unwrap();
    let mut sum = t.states[0].values.clone() * 0.0;
    for s in ds.trajectories[..2].iter().flat_map(|t| &t.states) {
        sum += &s.values;
    }
    let want = sum / 48.0;
    assert!(clim.values.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
}
