//! Scalar-loop ensemble scores over `[sample][member][cell]` nests.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn ref_rmse(fc: &[Vec<Vec<f64>>], y: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0.0;
    for (s, ens) in fc.iter().enumerate() {
        for p in 0..y[s].len() {
            let mut mean = 0.0;
            for m in ens {
                mean += m[p];
            }
            mean /= ens.len() as f64;
            acc += (mean - y[s][p]) * (mean - y[s][p]);
            count += 1.0;
        }
    }
    (acc / count).sqrt()
}

pub fn ref_spread(fc: &[Vec<Vec<f64>>]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0.0;
    for ens in fc {
        for p in 0..ens[0].len() {
            let n = ens.len() as f64;
            let mean: f64 = ens.iter().map(|m| m[p]).sum::<f64>() / n;
            acc += ens.iter().map(|m| (m[p] - mean).powi(2)).sum::<f64>() / n;
            count += 1.0;
        }
    }
    (acc / count).sqrt()
}

/// Direct double-sum fair CRPS.
pub fn ref_crps(fc: &[Vec<Vec<f64>>], y: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut count = 0.0;
    for (s, ens) in fc.iter().enumerate() {
        let n = ens.len() as f64;
        for p in 0..y[s].len() {
            let mut skill = 0.0;
            for a in ens {
                skill += (a[p] - y[s][p]).abs();
            }
            let mut pair = 0.0;
            for a in ens {
                for b in ens {
                    pair += (a[p] - b[p]).abs();
                }
            }
            let pair_term = if ens.len() > 1 { pair / (2.0 * (n - 1.0)) } else { 0.0 };
            acc += (skill - pair_term) / n;
            count += 1.0;
        }
    }
    acc / count
}

/// Random `(samples, members, cells)` instance with a random scale.
pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let (s, n, p) = (rng.random_range(1..5), rng.random_range(2..9), rng.random_range(1..20));
    let scale = rng.random_range(0.1..10.0);
    let fc = (0..s)
        .map(|_| (0..n).map(|_| (0..p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect())
        .collect();
    let y = (0..s).map(|_| (0..p).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
    (fc, y)
}

pub fn arrays(fc: &[Vec<Vec<f64>>], y: &[Vec<f64>]) -> (Array3<f64>, Array2<f64>) {
    let (s, n, p) = (fc.len(), fc[0].len(), y[0].len());
    (Array3::from_shape_fn((s, n, p), |(i, e, c)| fc[i][e][c]), Array2::from_shape_fn((s, p), |(i, c)| y[i][c]))
}
