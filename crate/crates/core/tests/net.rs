mod common;

use common::{small_dataset, small_net, train_samples};
use lam_diffusion::dataset::generate_dataset;
use lam_diffusion::denoiser::AnalyticGaussianDenoiser;
use lam_diffusion::edm::NoiseSchedule;
use lam_diffusion::edm::{apply_denoiser, Preconditioner};
use lam_diffusion::net::{fourier_features, CondDenoiserNet, NetConfig};
use lam_diffusion::pipeline::{net_config_for, split_samples};
use lam_diffusion::rng::StreamTag;
use lam_diffusion::synthetic::{DatasetConfig, Split};
use lam_diffusion::training::{draw_noise, record_loss, LambdaMode, LossWeights, TrainingSample};
use lam_diffusion::Error;
use lam_tensor::Tape;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn randomize(net: &mut CondDenoiserNet<f64>, prefix: &str, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut().iter_mut().filter(|p| p.name.starts_with(prefix)) {
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
    }
}

fn zero(net: &mut CondDenoiserNet<f64>, prefix: &str) {
    for p in net.params_mut().iter_mut().filter(|p| p.name.starts_with(prefix)) {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// `silu(W1·silu(W0·f + b0) + b1)` from the stored parameters.
fn embedding_oracle(net: &CondDenoiserNet<f64>, c_noise: f64) -> Vec<f64> {
    let get = |name: &str| {
        let p = net.params().get(net.params().index_of(name).unwrap());
        (p.value.shape().to_vec(), p.value.data().to_vec())
    };
    let dense = |x: &[f64], layer: &str| -> Vec<f64> {
        let (shape, w) = get(&format!("{layer}.w"));
        let (_, b) = get(&format!("{layer}.b"));
        (0..shape[0]).map(|o| silu(b[o] + (0..shape[1]).map(|i| w[o * shape[1] + i] * x[i]).sum::<f64>())).collect()
    };
    let f = fourier_features(net.config(), c_noise);
    dense(&dense(&f, "emb.l0"), "emb.l1")
}

#[test]
fn default_network_size_is_stable() {
    let ds = generate_dataset(
        &DatasetConfig { trajectories: 3, split_fractions: (1.0 / 3.0, 1.0 / 3.0), ..Default::default() },
        None,
    )
    .unwrap();
    let cfg = net_config_for(&ds);
    let a = CondDenoiserNet::<f32>::new(cfg.clone(), 0).unwrap();
    let b = CondDenoiserNet::<f32>::new(cfg, 0).unwrap();
    assert_eq!(a.param_count(), 244_099);
    assert_eq!(a.params(), b.params());
}

#[test]
fn fourier_features_use_geometric_periods() {
    let (ds, _) = small_dataset();
    let mut cfg = net_config_for(&ds);
    cfg.frequencies = 32;
    let periods = cfg.periods();
    assert_eq!(periods.len(), 32);
    assert_eq!(periods[0], 16.0);
    assert!((periods[31] - 1.0).abs() < 1e-12);
    let f = fourier_features(&cfg, 0.3);
    assert_eq!(f.len(), 64);
    for k in 0..32 {
        assert!((f[k].powi(2) + f[k + 32].powi(2) - 1.0).abs() < 1e-12);
        assert!((f[k] - (std::f64::consts::TAU * 0.3 / periods[k]).sin()).abs() < 1e-15);
    }
}

#[test]
fn noise_embedding_matches_oracle_is_injective_and_smooth() {
    let (ds, stats) = small_dataset();
    let cfg = small_net(&ds);
    let net = CondDenoiserNet::<f64>::new(cfg.clone(), 4).unwrap();
    let samples = train_samples(&ds, &stats);
    let shape = cfg.interior_shape();
    let z = Array3::zeros(shape);

    for &sigma in &[0.002, 0.5, 1.0, 80.0] {
        let cn = f64::ln(sigma) / 4.0;
        let inputs = net.inputs(std::slice::from_ref(&z), &[cn], &[&samples[0].cond]).unwrap();
        let mut tape = Tape::new();
        let p = net.params().register(&mut tape);
        let rec = net.record(&mut tape, &p, &inputs).unwrap();
        let emb = rec.stages.iter().find(|(n, _)| *n == "emb").unwrap().1;
        let want = embedding_oracle(&net, cn);
        for (a, b) in tape.value(emb).data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    let grid: Vec<f64> =
        (0..1000).map(|i| f64::ln(0.002) + i as f64 * (f64::ln(200.0) - f64::ln(0.002)) / 999.0).collect();
    let embs: Vec<Vec<f64>> = grid.iter().map(|ls| embedding_oracle(&net, ls / 4.0)).collect();
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            let d: f64 = embs[i].iter().zip(&embs[j]).map(|(a, b)| (a - b).abs()).sum();
            assert!(d > 0.0, "collision between {i} and {j}");
        }
    }
    let h = 1e-5;
    for &ls in &grid {
        let (a, b) = (embedding_oracle(&net, (ls + h) / 4.0), embedding_oracle(&net, (ls - h) / 4.0));
        let slope = a.iter().zip(&b).map(|(x, y)| ((x - y) / (2.0 * h)).abs()).fold(0.0, f64::max);
        assert!(slope.is_finite() && slope < 100.0, "slope {slope}");
    }
    assert_eq!(embedding_oracle(&net, 0.1), embedding_oracle(&net, 0.1));
}

#[test]
fn encoders_are_region_local_and_output_is_interior_shaped() {
    let ds = generate_dataset(
        &DatasetConfig { trajectories: 3, split_fractions: (1.0 / 3.0, 1.0 / 3.0), ..Default::default() },
        None,
    )
    .unwrap();
    let stats = ds.training_stats().unwrap();
    let cfg: NetConfig = net_config_for(&ds);
    let samples = split_samples(&ds, Split::Train, &stats).unwrap();
    let cond = &samples[3].cond;
    let mask = ds.grid().region_mask();
    let shape = cfg.interior_shape();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = Array3::from_shape_fn(shape, |_| rng.random_range(-1.0..1.0));

    let net = CondDenoiserNet::<f64>::new(cfg.clone(), 2).unwrap();
    let base = net.encode_grid(std::slice::from_ref(&z), 0.1, &[cond]).unwrap().remove(0);
    assert_eq!(base.shape(), &[cfg.latent, 48, 48]);

    let changed = |other: &Array3<f64>| -> (bool, bool) {
        let (mut inner, mut outer) = (false, false);
        for ((c, r, col), v) in base.indexed_iter() {
            if other[[c, r, col]] != *v {
                if mask.is_boundary(r, col) {
                    outer = true;
                } else {
                    inner = true;
                }
            }
        }
        (inner, outer)
    };

    let mut no_b = net.clone();
    zero(&mut no_b, "enc_b.");
    assert_eq!(changed(&no_b.encode_grid(std::slice::from_ref(&z), 0.1, &[cond]).unwrap()[0]), (false, true));

    let zero_z = Array3::zeros(shape);
    assert_eq!(changed(&net.encode_grid(&[zero_z], 0.1, &[cond]).unwrap()[0]), (true, false));

    let out = net.forward(std::slice::from_ref(&z), &[0.1], &[cond]).unwrap();
    assert_eq!(out[0].shape(), &[3, 40, 40]);
    assert!(out[0].iter().all(|&v| v == 0.0), "zero-initialized decoder must give F = 0");
}

#[test]
fn boundary_perturbation_reaches_nearby_interior_cells() {
    let (ds, stats) = small_dataset();
    let cfg = small_net(&ds);
    let mut net = CondDenoiserNet::<f64>::new(cfg.clone(), 5).unwrap();
    randomize(&mut net, "out.dec.", 1);
    let sample = train_samples(&ds, &stats).remove(0);
    let z = Array3::zeros(cfg.interior_shape());
    let run = |inputs: &lam_diffusion::net::NetInputs<f64>| {
        let mut tape = Tape::new();
        let p = net.params().register(&mut tape);
        let rec = net.record(&mut tape, &p, inputs).unwrap();
        tape.value(rec.output).data().to_vec()
    };
    let mut inputs = net.inputs(&[z], &[0.0], &[&sample.cond]).unwrap();
    let base = run(&inputs);
    // boundary cell slot 0 is the grid corner
    inputs.boundary.data_mut()[0] += 1.0;
    let moved = run(&inputs);
    let [d, h, w] = cfg.interior_shape();
    let near = (0..d).any(|c| (moved[c * h * w] - base[c * h * w]).abs() > 1e-9);
    assert!(near, "corner boundary input does not reach the adjacent interior cell");
}

#[test]
fn every_parameter_tensor_receives_gradient() {
    let (ds, stats) = small_dataset();
    let cfg = small_net(&ds);
    let mut net = CondDenoiserNet::<f64>::new(cfg, 6).unwrap();
    randomize(&mut net, "out.dec.", 2);
    let samples = train_samples(&ds, &stats);
    let refs: Vec<&TrainingSample> = samples.iter().take(2).collect();
    let noisy = draw_noise(&refs, &NoiseSchedule::training(), 0, StreamTag::TrainStep, 0).unwrap();
    let weights = LossWeights::new(ds.grid(), &stats, LambdaMode::InverseVariance).unwrap();
    let mut tape = Tape::new();
    let p = net.params().register(&mut tape);
    let loss = record_loss(&mut tape, &p, &net, &refs, &noisy, &Preconditioner::default(), &weights).unwrap();
    let mut grads = tape.backward(loss).unwrap();
    for (param, &v) in net.params().iter().zip(&p) {
        let g = grads.take(v).unwrap();
        assert!(g.data().iter().any(|x| *x != 0.0), "{} has zero gradient", param.name);
    }
}

#[test]
fn analytic_oracle_survives_preconditioning_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mean = Array3::from_shape_fn([2, 3, 3], |_| rng.random_range(-1.0..1.0));
    let var = Array3::from_shape_fn([2, 3, 3], |_| rng.random_range(0.1..3.0));
    let den = AnalyticGaussianDenoiser::new(mean, var).unwrap();
    let pre = Preconditioner::default();
    for sigma in [0.002, 0.1, 1.0, 17.0, 80.0] {
        let y = Array3::from_shape_fn([2, 3, 3], |_| rng.random_range(-sigma - 1.0..sigma + 1.0));
        let via_raw =
            apply_denoiser(&den.as_raw(pre), &pre, std::slice::from_ref(&y), sigma, &[&()]).unwrap().remove(0);
        let direct = den.denoise(&y, sigma).unwrap();
        for (a, b) in via_raw.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn mismatched_conditioning_is_rejected() {
    let (ds, stats) = small_dataset();
    let mut cfg = small_net(&ds);
    cfg.layout.d_f += 1;
    let net = CondDenoiserNet::<f64>::new(cfg.clone(), 0).unwrap();
    let s = &train_samples(&ds, &stats)[0];
    let err = net.forward(&[Array3::zeros(cfg.interior_shape())], &[0.0], &[&s.cond]).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}
