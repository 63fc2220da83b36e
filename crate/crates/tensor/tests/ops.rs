use std::sync::Arc;

use lam_tensor::{grad_check, Probe, RegionIndex, Tape, Tensor, TensorError, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.5..2.0)).collect()
}

/// Scalar loss that keeps every output element's gradient distinct.
fn sq_loss(tape: &mut Tape<f64>, y: Var, seed: u64) -> lam_tensor::Result<Var> {
    let shape = tape.value(y).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = weights(shape[0] * shape[1], &mut rng);
    tape.weighted_sq_mean(y, &w)
}

const TOL: f64 = 1e-4;
const EPS: f64 = 1e-5;

fn naive_conv(x: &Tensor<f64>, k: &Tensor<f64>, b: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = x.shape().try_into().unwrap();
    let o = k.shape()[0];
    let mut y = vec![0.0; n * o * h * w];
    for s in 0..n {
        for oc in 0..o {
            for yy in 0..h {
                for xx in 0..w {
                    let mut acc = b[oc];
                    for ic in 0..c {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let sy = yy as isize + ky as isize - 1;
                                let sx = xx as isize + kx as isize - 1;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += k.data()[((oc * c + ic) * 3 + ky) * 3 + kx]
                                    * x.data()[((s * c + ic) * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    y[((s * o + oc) * h + yy) * w + xx] = acc;
                }
            }
        }
    }
    y
}

#[test]
fn silu_of_zero_is_zero() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new(&[1, 3], vec![0.0, 1.0, -1.0]).unwrap());
    let y = tape.silu(x);
    let v = tape.value(y).data();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
}

#[test]
fn identity_kernel_reproduces_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 3, 5, 7], &mut rng);
    let mut k = vec![0.0; 3 * 3 * 9];
    for c in 0..3 {
        k[(c * 3 + c) * 9 + 4] = 1.0;
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let kv = tape.leaf(Tensor::new(&[3, 3, 3, 3], k).unwrap());
    let y = tape.conv2d_3x3(xv, kv, None).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
}

#[test]
fn conv_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (h, w) in [(1, 1), (1, 4), (5, 3), (6, 6)] {
        let x = random(&[2, 3, h, w], &mut rng);
        let k = random(&[4, 3, 3, 3], &mut rng);
        let b = random(&[4], &mut rng);
        let mut tape = Tape::new();
        let (xv, kv, bv) = (tape.leaf(x.clone()), tape.leaf(k.clone()), tape.leaf(b.clone()));
        let y = tape.conv2d_3x3(xv, kv, Some(bv)).unwrap();
        let want = naive_conv(&x, &k, b.data());
        for (a, e) in tape.value(y).data().iter().zip(&want) {
            assert!((a - e).abs() < 1e-12, "{h}x{w}: {a} vs {e}");
        }
    }
}

#[test]
fn linear_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[2, 3, 5], &mut rng);
    let w = random(&[4, 3], &mut rng);
    let b = random(&[4], &mut rng);
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.leaf(x.clone()), tape.leaf(w.clone()), tape.leaf(b.clone()));
    let y = tape.linear(xv, wv, Some(bv)).unwrap();
    assert_eq!(tape.value(y).shape(), &[2, 4, 5]);
    for s in 0..2 {
        for o in 0..4 {
            for p in 0..5 {
                let mut e = b.data()[o];
                for c in 0..3 {
                    e += w.data()[o * 3 + c] * x.data()[(s * 3 + c) * 5 + p];
                }
                let a = tape.value(y).data()[(s * 4 + o) * 5 + p];
                assert!((a - e).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn group_norm_output_has_shift_mean_and_scale_std() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n, c, h, w, groups) = (2, 8, 6, 5, 4);
    let x =
        Tensor::new(&[n, c, h, w], (0..n * c * h * w).map(|_| rng.random_range(-3.0..3.0) + 0.7).collect()).unwrap();
    // uniform modulation within each group
    let mut scale = vec![0.0; n * c];
    let mut shift = vec![0.0; n * c];
    let group_scale: Vec<f64> = (0..n * groups).map(|_| rng.random_range(-2.0..2.0)).collect();
    let group_shift: Vec<f64> = (0..n * groups).map(|_| rng.random_range(-2.0..2.0)).collect();
    for s in 0..n {
        for ch in 0..c {
            scale[s * c + ch] = group_scale[s * groups + ch / 2];
            shift[s * c + ch] = group_shift[s * groups + ch / 2];
        }
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let sv = tape.leaf(Tensor::new(&[n, c], scale).unwrap());
    let tv = tape.leaf(Tensor::new(&[n, c], shift).unwrap());
    let y = tape.group_norm_modulated(xv, groups, sv, tv).unwrap();
    let yd = tape.value(y).data();
    let m = 2 * h * w;
    for s in 0..n {
        for g in 0..groups {
            let block = &yd[(s * c + 2 * g) * h * w..][..m];
            let mean = block.iter().sum::<f64>() / m as f64;
            let std = (block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt();
            assert!((mean - group_shift[s * groups + g]).abs() < 1e-6);
            assert!((std - group_scale[s * groups + g].abs()).abs() < 1e-6);
        }
    }
}

#[test]
fn layer_norm_normalizes_each_position_across_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[2, 6, 4], &mut rng);
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let sv = tape.leaf(Tensor::filled(&[2, 6], 1.0));
    let tv = tape.leaf(Tensor::zeros(&[2, 6]));
    let y = tape.layer_norm_modulated(xv, sv, tv).unwrap();
    let yd = tape.value(y).data();
    for s in 0..2 {
        for p in 0..4 {
            let col: Vec<f64> = (0..6).map(|c| yd[(s * 6 + c) * 4 + p]).collect();
            let mean = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var.sqrt() - 1.0).abs() < 1e-5);
        }
    }
}

#[test]
fn downsample_averages_partial_windows() {
    let x = Tensor::new(&[1, 1, 3, 3], (1..=9).map(f64::from).collect()).unwrap();
    let mut tape = Tape::new();
    let xv = tape.leaf(x);
    let y = tape.downsample_avg2(xv).unwrap();
    assert_eq!(tape.value(y).shape(), &[1, 1, 2, 2]);
    assert_eq!(tape.value(y).data(), &[3.0, 4.5, 7.5, 9.0]);
    let u = tape.upsample_nearest2(y, 3, 3).unwrap();
    assert_eq!(tape.value(u).data(), &[3.0, 3.0, 4.5, 3.0, 3.0, 4.5, 7.5, 7.5, 9.0]);
    assert!(tape.upsample_nearest2(y, 5, 3).is_err());
}

#[test]
fn region_scatter_then_gather_round_trips_interior() {
    // 3x3 grid, centre is interior
    let index = Arc::new(RegionIndex::new(3, 3, vec![4], vec![0, 1, 2, 3, 5, 6, 7, 8]).unwrap());
    let mut tape = Tape::<f64>::new();
    let i = tape.leaf(Tensor::new(&[1, 2, 1], vec![10.0, 20.0]).unwrap());
    let b = tape.leaf(Tensor::new(&[1, 2, 8], (0..16).map(f64::from).collect()).unwrap());
    let grid = tape.assemble_regions(i, b, &index).unwrap();
    assert_eq!(tape.value(grid).data()[4], 10.0);
    assert_eq!(tape.value(grid).data()[9 + 4], 20.0);
    assert_eq!(tape.value(grid).data()[5], 4.0);
    let back = tape.gather_interior(grid, &index).unwrap();
    assert_eq!(tape.value(back).data(), &[10.0, 20.0]);

    assert!(RegionIndex::new(3, 3, vec![4], vec![0, 1]).is_err());
    assert!(RegionIndex::new(1, 2, vec![0], vec![0]).is_err());
}

#[test]
fn shape_errors_name_the_op() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::zeros(&[1, 3, 4, 4]));
    let w = tape.leaf(Tensor::zeros(&[2, 5, 3, 3]));
    match tape.conv2d_3x3(x, w, None) {
        Err(TensorError::Shape { op, .. }) => assert_eq!(op, "conv2d_3x3"),
        other => panic!("expected shape error, got {other:?}"),
    }
    let s = tape.leaf(Tensor::zeros(&[1, 3]));
    assert!(matches!(
        tape.group_norm_modulated(x, 2, s, s),
        Err(TensorError::Shape { op: "group_norm_modulated", .. })
    ));
}

#[test]
fn silu_dense_gradient_check() {
    // f(x) = Σ silu(Wx + b)
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = vec![random(&[3, 4], &mut rng), random(&[5, 4], &mut rng), random(&[5], &mut rng)];
    let r = grad_check(&inputs, EPS, Probe::All, |t, v| {
        let y = t.linear(v[0], v[1], Some(v[2]))?;
        let s = t.silu(y);
        Ok(t.sum(s))
    })
    .unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

#[test]
fn backward_is_linear_in_the_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&[2, 3, 4, 4], &mut rng);
    let k = random(&[3, 3, 3, 3], &mut rng);
    let grads = |a: f64, b: f64| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let kv = tape.leaf(k.clone());
        let y = tape.conv2d_3x3(xv, kv, None).unwrap();
        let f = tape.weighted_sq_mean(y, &[1.0; 6]).unwrap();
        let s = tape.silu(y);
        let g = tape.sum(s);
        let fa = tape.scale(f, a);
        let gb = tape.scale(g, b);
        let out = tape.add(fa, gb).unwrap();
        tape.backward(out).unwrap().take(kv).unwrap().into_data()
    };
    let (a, b) = (0.7, -1.3);
    let combined = grads(a, b);
    let gf = grads(1.0, 0.0);
    let gg = grads(0.0, 1.0);
    for i in 0..combined.len() {
        let want = a * gf[i] + b * gg[i];
        assert!((combined[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn backward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random(&[2, 4, 6, 6], &mut rng);
    let k = random(&[4, 4, 3, 3], &mut rng);
    let run = || {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let kv = tape.leaf(k.clone());
        let y = tape.conv2d_3x3(xv, kv, None).unwrap();
        let d = tape.downsample_avg2(y).unwrap();
        let u = tape.upsample_nearest2(d, 6, 6).unwrap();
        let c = tape.concat_channels(u, xv).unwrap();
        let l = tape.weighted_sq_mean(c, &[1.0; 16]).unwrap();
        let g = tape.backward(l).unwrap();
        (g.get(xv).unwrap().clone(), g.get(kv).unwrap().clone())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_op_matches_finite_differences(
        n in 1usize..3, c in 1usize..4, h in 1usize..6, w in 1usize..6, seed in 0u64..1000
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[n, c, h, w], &mut rng);

        let o = c + 1;
        let conv_in = vec![x.clone(), random(&[o, c, 3, 3], &mut rng), random(&[o], &mut rng)];
        let r = grad_check(&conv_in, EPS, Probe::All, |t, v| {
            let y = t.conv2d_3x3(v[0], v[1], Some(v[2]))?;
            sq_loss(t, y, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error < TOL, "conv {:?}", r);

        let lin_in = vec![x.clone(), random(&[o, c], &mut rng), random(&[o], &mut rng)];
        let r = grad_check(&lin_in, EPS, Probe::All, |t, v| {
            let y = t.linear(v[0], v[1], Some(v[2]))?;
            sq_loss(t, y, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error < TOL, "linear {:?}", r);

        let r = grad_check(std::slice::from_ref(&x), EPS, Probe::All, |t, v| {
            let y = t.silu(v[0]);
            sq_loss(t, y, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error < TOL, "silu {:?}", r);

        if h * w >= 2 {
            let cc = 2 * c;
            let xg = random(&[n, cc, h, w], &mut rng);
            let norm_in = vec![xg.clone(), random(&[n, cc], &mut rng), random(&[n, cc], &mut rng)];
            let r = grad_check(&norm_in, EPS, Probe::All, |t, v| {
                let y = t.group_norm_modulated(v[0], c, v[1], v[2])?;
                sq_loss(t, y, seed)
            }).unwrap();
            prop_assert!(r.max_rel_error < TOL, "group_norm {:?}", r);

            let r = grad_check(&norm_in, EPS, Probe::All, |t, v| {
                let y = t.layer_norm_modulated(v[0], v[1], v[2])?;
                sq_loss(t, y, seed)
            }).unwrap();
            prop_assert!(r.max_rel_error < TOL, "layer_norm {:?}", r);
        }

        let r = grad_check(std::slice::from_ref(&x), EPS, Probe::All, |t, v| {
            let d = t.downsample_avg2(v[0])?;
            let u = t.upsample_nearest2(d, h, w)?;
            let y = t.concat_channels(u, v[0])?;
            sq_loss(t, y, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error < TOL, "resample/concat {:?}", r);

        let y_other = random(&[n, c, h, w], &mut rng);
        let factors: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = grad_check(&[x.clone(), y_other], EPS, Probe::All, |t, v| {
            let a = t.add(v[0], v[1])?;
            let s = t.sub(a, v[1])?;
            let s = t.sub(s, v[1])?;
            let k = t.scale_samples(s, &factors)?;
            let k = t.add_scalar(k, 0.3);
            sq_loss(t, k, seed)
        }).unwrap();
        prop_assert!(r.max_rel_error < TOL, "elementwise {:?}", r);

        // frame of width 1 around the grid when it has an interior
        if h > 2 && w > 2 {
            let (mut inner, mut frame) = (vec![], vec![]);
            for r in 0..h { for q in 0..w {
                if r == 0 || q == 0 || r == h - 1 || q == w - 1 { frame.push(r * w + q) } else { inner.push(r * w + q) }
            }}
            let index = Arc::new(RegionIndex::new(h, w, inner.clone(), frame.clone()).unwrap());
            let ins = vec![random(&[n, c, inner.len()], &mut rng), random(&[n, c, frame.len()], &mut rng)];
            let r = grad_check(&ins, EPS, Probe::All, |t, v| {
                let g = t.assemble_regions(v[0], v[1], &index)?;
                let s = t.silu(g);
                let back = t.gather_interior(s, &index)?;
                let all = sq_loss(t, s, seed)?;
                let part = sq_loss(t, back, seed + 1)?;
                t.add(all, part)
            }).unwrap();
            prop_assert!(r.max_rel_error < TOL, "regions {:?}", r);
        }
    }
}
