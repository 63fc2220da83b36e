//! Central finite-difference verification of reverse-mode gradients.

use crate::error::{Result, TensorError};
use crate::region::RegionIndex;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

/// Which input elements to perturb.
#[derive(Debug, Clone, Copy)]
pub enum Probe {
    All,
    /// `count` elements drawn uniformly (with a fixed seed) across all inputs.
    Sample {
        count: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub probes: usize,
    /// `(input, element)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Compares the reverse-mode gradient of `f` at `inputs` with central
/// differences `(f(x+ε) − f(x−ε)) / 2ε`, returning the worst relative error
/// `|a − n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check<F>(inputs: &[Tensor<f64>], eps: f64, probe: Probe, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(TensorError::StepSize { eps });
    }
    let eval = |xs: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };

    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.get(v).map_or_else(|| vec![0.0; t.len()], |g| g.data().to_vec()))
        .collect();

    let total: usize = inputs.iter().map(Tensor::len).sum();
    let locate = |mut flat: usize| {
        for (i, t) in inputs.iter().enumerate() {
            if flat < t.len() {
                return (i, flat);
            }
            flat -= t.len();
        }
        unreachable!("flat index within total")
    };
    let targets: Vec<(usize, usize)> = match probe {
        Probe::All => (0..total).map(locate).collect(),
        Probe::Sample { count, seed } => {
            let mut state = seed;
            (0..count.min(total)).map(|_| locate((splitmix(&mut state) % total as u64) as usize)).collect()
        }
    };

    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, probes: targets.len(), worst: None };
    let mut work = inputs.to_vec();
    for (i, e) in targets {
        let orig = work[i].data()[e];
        work[i].data_mut()[e] = orig + eps;
        let (t, _, o) = eval(&work)?;
        let plus = t.value(o).data()[0];
        work[i].data_mut()[e] = orig - eps;
        let (t, _, o) = eval(&work)?;
        let minus = t.value(o).data()[0];
        work[i].data_mut()[e] = orig;

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i][e];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((i, e));
        }
    }
    Ok(report)
}

fn uniform(shape: &[usize], lo: f64, hi: f64, state: &mut u64) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| lo + (hi - lo) * (splitmix(state) >> 11) as f64 / (1u64 << 53) as f64).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// Gradient checks of every differentiable tape operation on random inputs
/// of shape `[2, 3, 5, 6]` (odd height exercises partial pooling windows).
/// Each op feeds a weighted squared mean so that output gradients differ
/// per element.
pub fn op_suite(seed: u64, eps: f64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut st = seed;
    let (n, c, h, w) = (2, 3, 5, 6);
    let x = uniform(&[n, c, h, w], -1.5, 1.5, &mut st);
    let lw: Vec<f64> = uniform(&[n * 8], 0.5, 2.0, &mut st).data().to_vec();
    let loss = move |t: &mut Tape<f64>, y: Var| {
        let s = t.value(y).shape();
        t.weighted_sq_mean(y, &lw[..s[0] * s[1]])
    };
    let mut out = Vec::new();

    let ins = [x.clone(), uniform(&[4, c, 3, 3], -1.0, 1.0, &mut st), uniform(&[4], -1.0, 1.0, &mut st)];
    out.push((
        "conv2d_3x3",
        grad_check(&ins, eps, Probe::All, |t, v| {
            let y = t.conv2d_3x3(v[0], v[1], Some(v[2]))?;
            loss(t, y)
        })?,
    ));

    let ins = [x.clone(), uniform(&[4, c], -1.0, 1.0, &mut st), uniform(&[4], -1.0, 1.0, &mut st)];
    out.push((
        "linear",
        grad_check(&ins, eps, Probe::All, |t, v| {
            let y = t.linear(v[0], v[1], Some(v[2]))?;
            loss(t, y)
        })?,
    ));

    out.push((
        "silu",
        grad_check(std::slice::from_ref(&x), eps, Probe::All, |t, v| {
            let y = t.silu(v[0]);
            loss(t, y)
        })?,
    ));

    let xg = uniform(&[n, 4, h, w], -1.5, 1.5, &mut st);
    let ins = [xg, uniform(&[n, 4], -1.0, 1.0, &mut st), uniform(&[n, 4], -1.0, 1.0, &mut st)];
    out.push((
        "group_norm_modulated",
        grad_check(&ins, eps, Probe::All, |t, v| {
            let y = t.group_norm_modulated(v[0], 2, v[1], v[2])?;
            loss(t, y)
        })?,
    ));
    out.push((
        "layer_norm_modulated",
        grad_check(&ins, eps, Probe::All, |t, v| {
            let y = t.layer_norm_modulated(v[0], v[1], v[2])?;
            loss(t, y)
        })?,
    ));

    out.push((
        "downsample_avg2",
        grad_check(std::slice::from_ref(&x), eps, Probe::All, |t, v| {
            let y = t.downsample_avg2(v[0])?;
            loss(t, y)
        })?,
    ));

    let small = uniform(&[n, c, 3, 3], -1.5, 1.5, &mut st);
    out.push((
        "upsample_nearest2",
        grad_check(&[small], eps, Probe::All, |t, v| {
            let y = t.upsample_nearest2(v[0], h, w)?;
            loss(t, y)
        })?,
    ));

    let other = uniform(&[n, 2, h, w], -1.5, 1.5, &mut st);
    out.push((
        "concat_channels",
        grad_check(&[x.clone(), other], eps, Probe::All, |t, v| {
            let y = t.concat_channels(v[0], v[1])?;
            loss(t, y)
        })?,
    ));

    let y2 = uniform(&[n, c, h, w], -1.5, 1.5, &mut st);
    let factors: Vec<f64> = uniform(&[n], -2.0, 2.0, &mut st).data().to_vec();
    out.push((
        "add/sub/scale/add_scalar",
        grad_check(&[x.clone(), y2], eps, Probe::All, |t, v| {
            let a = t.add(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            let b = t.sub(b, v[1])?;
            let b = t.scale_samples(b, &factors)?;
            let b = t.scale(b, 0.7);
            let b = t.add_scalar(b, 0.3);
            loss(t, b)
        })?,
    ));

    let (mut inner, mut frame) = (Vec::new(), Vec::new());
    for r in 0..h {
        for q in 0..w {
            if r == 0 || q == 0 || r == h - 1 || q == w - 1 {
                frame.push(r * w + q);
            } else {
                inner.push(r * w + q);
            }
        }
    }
    let index = std::sync::Arc::new(RegionIndex::new(h, w, inner.clone(), frame.clone())?);
    let ins = [uniform(&[n, c, inner.len()], -1.5, 1.5, &mut st), uniform(&[n, c, frame.len()], -1.5, 1.5, &mut st)];
    out.push((
        "assemble_regions/gather_interior",
        grad_check(&ins, eps, Probe::All, |t, v| {
            let g = t.assemble_regions(v[0], v[1], &index)?;
            let s = t.silu(g);
            let back = t.gather_interior(s, &index)?;
            let all = loss(t, s)?;
            let part = loss(t, back)?;
            t.add(all, part)
        })?,
    ));

    out.push((
        "sum",
        grad_check(&[x], eps, Probe::All, |t, v| {
            let s = t.silu(v[0]);
            Ok(t.sum(s))
        })?,
    ));
    Ok(out)
}
