//! Forward/backward kernels on raw slices. Shapes are validated by the tape.

use crate::real::{gemm, Real};

pub(crate) const NORM_EPS: f64 = 1e-6;

// ---------------------------------------------------------------- dense ---

/// `y[n] (o×p) = w (o×c) · x[n] (c×p) + b`.
pub(crate) fn linear_fwd<T: Real>(
    x: &[T],
    (n, c, p): (usize, usize, usize),
    w: &[T],
    o: usize,
    b: Option<&[T]>,
) -> Vec<T> {
    let mut y = vec![T::zero(); n * o * p];
    for s in 0..n {
        let ys = &mut y[s * o * p..(s + 1) * o * p];
        if let Some(b) = b {
            for (row, &bias) in ys.chunks_mut(p).zip(b) {
                row.fill(bias);
            }
        }
        gemm(false, false, o, c, p, w, &x[s * c * p..(s + 1) * c * p], ys, b.is_some());
    }
    y
}

pub(crate) struct DenseGrads<T> {
    pub dx: Vec<T>,
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

pub(crate) fn linear_bwd<T: Real>(
    x: &[T],
    (n, c, p): (usize, usize, usize),
    w: &[T],
    o: usize,
    dy: &[T],
) -> DenseGrads<T> {
    let mut dx = vec![T::zero(); n * c * p];
    let mut dw = vec![T::zero(); o * c];
    let mut db = vec![T::zero(); o];
    for s in 0..n {
        let dys = &dy[s * o * p..(s + 1) * o * p];
        gemm(true, false, c, o, p, w, dys, &mut dx[s * c * p..(s + 1) * c * p], false);
        gemm(false, true, o, p, c, dys, &x[s * c * p..(s + 1) * c * p], &mut dw, true);
        for (acc, row) in db.iter_mut().zip(dys.chunks(p)) {
            *acc = *acc + row.iter().copied().sum::<T>();
        }
    }
    DenseGrads { dx, dw, db }
}

// ----------------------------------------------------------------- conv ---

/// Zero-padded 3×3 patch matrix: row `ci*9 + ky*3 + kx`, column `y*w + x`.
pub(crate) fn im2col<T: Real>(x: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[(ci * 9 + ky * 3 + kx) * hw..(ci * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`], accumulating into `dx`.
pub(crate) fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[(ci * 9 + ky * 3 + kx) * hw..(ci * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (d, &s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d = *d + s;
                            }
                        }
                        1 => {
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + s;
                            }
                        }
                        _ => {
                            for (d, &s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv3x3_fwd<T: Real>(
    x: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[T],
    o: usize,
    b: Option<&[T]>,
) -> Vec<T> {
    let hw = h * w;
    let mut col = vec![T::zero(); c * 9 * hw];
    let mut y = vec![T::zero(); n * o * hw];
    for s in 0..n {
        im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, &mut col);
        let ys = &mut y[s * o * hw..(s + 1) * o * hw];
        if let Some(b) = b {
            for (row, &bias) in ys.chunks_mut(hw).zip(b) {
                row.fill(bias);
            }
        }
        gemm(false, false, o, c * 9, hw, k, &col, ys, b.is_some());
    }
    y
}

pub(crate) fn conv3x3_bwd<T: Real>(
    x: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[T],
    o: usize,
    dy: &[T],
) -> DenseGrads<T> {
    let hw = h * w;
    let mut col = vec![T::zero(); c * 9 * hw];
    let mut dcol = vec![T::zero(); c * 9 * hw];
    let mut dx = vec![T::zero(); n * c * hw];
    let mut dw = vec![T::zero(); o * c * 9];
    let mut db = vec![T::zero(); o];
    for s in 0..n {
        let dys = &dy[s * o * hw..(s + 1) * o * hw];
        im2col(&x[s * c * hw..(s + 1) * c * hw], c, h, w, &mut col);
        gemm(false, true, o, hw, c * 9, dys, &col, &mut dw, true);
        gemm(true, false, c * 9, o, hw, k, dys, &mut dcol, false);
        col2im(&dcol, c, h, w, &mut dx[s * c * hw..(s + 1) * c * hw]);
        for (acc, row) in db.iter_mut().zip(dys.chunks(hw)) {
            *acc = *acc + row.iter().copied().sum::<T>();
        }
    }
    DenseGrads { dx, dw, db }
}

// ----------------------------------------------------------------- silu ---

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn silu_fwd<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

pub(crate) fn silu_bwd<T: Real>(x: &[T], dy: &[T]) -> Vec<T> {
    x.iter()
        .zip(dy)
        .map(|(&v, &g)| {
            let s = sigmoid(v);
            g * s * (T::one() + v * (T::one() - s))
        })
        .collect()
}

// ---------------------------------------------------------------- norms ---

/// Mean and reciprocal std of one normalization group.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Moments<T> {
    pub mean: T,
    pub rstd: T,
}

fn moments<T: Real>(values: impl Iterator<Item = T> + Clone) -> Moments<T> {
    let mut count = 0usize;
    let mut sum = 0.0f64;
    for v in values.clone() {
        sum += v.f64();
        count += 1;
    }
    let mean = sum / count as f64;
    let var = values.map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / count as f64;
    Moments { mean: T::of(mean), rstd: T::of(1.0 / (var + NORM_EPS).sqrt()) }
}

/// Group norm over `[n, c, p]`: groups of `c / groups` consecutive channels
/// across all `p` positions, then `y = x̂ · scale[n,c] + shift[n,c]`.
pub(crate) fn group_norm_fwd<T: Real>(
    x: &[T],
    (n, c, p): (usize, usize, usize),
    groups: usize,
    scale: &[T],
    shift: &[T],
) -> (Vec<T>, Vec<Moments<T>>) {
    let cg = c / groups;
    let mut y = vec![T::zero(); x.len()];
    let mut stats = Vec::with_capacity(n * groups);
    for s in 0..n {
        for g in 0..groups {
            let lo = (s * c + g * cg) * p;
            let hi = lo + cg * p;
            let m = moments(x[lo..hi].iter().copied());
            stats.push(m);
            for ci in 0..cg {
                let ch = g * cg + ci;
                let (a, b) = (scale[s * c + ch], shift[s * c + ch]);
                let off = lo + ci * p;
                for (yv, &xv) in y[off..off + p].iter_mut().zip(&x[off..off + p]) {
                    *yv = (xv - m.mean) * m.rstd * a + b;
                }
            }
        }
    }
    (y, stats)
}

pub(crate) struct NormGrads<T> {
    pub dx: Vec<T>,
    pub dscale: Vec<T>,
    pub dshift: Vec<T>,
}

pub(crate) fn group_norm_bwd<T: Real>(
    x: &[T],
    (n, c, p): (usize, usize, usize),
    groups: usize,
    scale: &[T],
    stats: &[Moments<T>],
    dy: &[T],
) -> NormGrads<T> {
    let cg = c / groups;
    let mut dx = vec![T::zero(); x.len()];
    let mut dscale = vec![T::zero(); n * c];
    let mut dshift = vec![T::zero(); n * c];
    let count = T::of((cg * p) as f64);
    for s in 0..n {
        for g in 0..groups {
            let m = stats[s * groups + g];
            let lo = (s * c + g * cg) * p;
            let mut sum_dxhat = T::zero();
            let mut sum_dxhat_xhat = T::zero();
            for ci in 0..cg {
                let ch = s * c + g * cg + ci;
                let off = lo + ci * p;
                let mut ds = T::zero();
                let mut dh = T::zero();
                for (&xv, &gv) in x[off..off + p].iter().zip(&dy[off..off + p]) {
                    let xhat = (xv - m.mean) * m.rstd;
                    ds = ds + gv * xhat;
                    dh = dh + gv;
                    let dxhat = gv * scale[ch];
                    sum_dxhat = sum_dxhat + dxhat;
                    sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                }
                dscale[ch] = ds;
                dshift[ch] = dh;
            }
            let a = sum_dxhat / count;
            let b = sum_dxhat_xhat / count;
            for ci in 0..cg {
                let ch = s * c + g * cg + ci;
                let off = lo + ci * p;
                for i in off..off + p {
                    let xhat = (x[i] - m.mean) * m.rstd;
                    dx[i] = m.rstd * (dy[i] * scale[ch] - a - xhat * b);
                }
            }
        }
    }
    NormGrads { dx, dscale, dshift }
}

/// Per-position normalization across channels of `[n, c, p]`.
pub(crate) fn layer_norm_fwd<T: Real>(
    x: &[T],
    (n, c, p): (usize, usize, usize),
    scale: &[T],
    shift: &[T],
) -> (Vec<T>, Vec<Moments<T>>) {
    let mut y = vec![T::zero(); x.len()];
    let mut stats = Vec::with_capacity(n * p);
    for s in 0..n {
        let xs = &x[s * c * p..(s + 1) * c * p];
        for q in 0..p {
            let m = moments((0..c).map(|ch| xs[ch * p + q]));
            stats.push(m);
            for ch in 0..c {
                let i = s * c * p + ch * p + q;
                y[i] = (x[i] - m.mean) * m.rstd * scale[s * c + ch] + shift[s * c + ch];
            }
        }
    }
    (y, stats)
}

pub(crate) fn layer_norm_bwd<T: Real>(
    x: &[T],
    (n, c, p): (usize, usize, usize),
    scale: &[T],
    stats: &[Moments<T>],
    dy: &[T],
) -> NormGrads<T> {
    let mut dx = vec![T::zero(); x.len()];
    let mut dscale = vec![T::zero(); n * c];
    let mut dshift = vec![T::zero(); n * c];
    let count = T::of(c as f64);
    for s in 0..n {
        for q in 0..p {
            let m = stats[s * p + q];
            let mut sum_dxhat = T::zero();
            let mut sum_dxhat_xhat = T::zero();
            for ch in 0..c {
                let i = s * c * p + ch * p + q;
                let xhat = (x[i] - m.mean) * m.rstd;
                dscale[s * c + ch] = dscale[s * c + ch] + dy[i] * xhat;
                dshift[s * c + ch] = dshift[s * c + ch] + dy[i];
                let dxhat = dy[i] * scale[s * c + ch];
                sum_dxhat = sum_dxhat + dxhat;
                sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
            }
            let a = sum_dxhat / count;
            let b = sum_dxhat_xhat / count;
            for ch in 0..c {
                let i = s * c * p + ch * p + q;
                let xhat = (x[i] - m.mean) * m.rstd;
                dx[i] = m.rstd * (dy[i] * scale[s * c + ch] - a - xhat * b);
            }
        }
    }
    NormGrads { dx, dscale, dshift }
}

// ------------------------------------------------------------- resample ---

/// Output extent of a 2× average pool; odd edges keep a partial window.
pub(crate) fn half(extent: usize) -> usize {
    extent.div_ceil(2)
}

fn window(extent: usize, i: usize) -> usize {
    if 2 * i + 1 < extent {
        2
    } else {
        1
    }
}

pub(crate) fn downsample_fwd<T: Real>(x: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (half(h), half(w));
    let mut y = vec![T::zero(); planes * ho * wo];
    for pl in 0..planes {
        let xp = &x[pl * h * w..(pl + 1) * h * w];
        let yp = &mut y[pl * ho * wo..(pl + 1) * ho * wo];
        for oy in 0..ho {
            let wy = window(h, oy);
            for ox in 0..wo {
                let wx = window(w, ox);
                let mut acc = T::zero();
                for dy in 0..wy {
                    for dx in 0..wx {
                        acc = acc + xp[(2 * oy + dy) * w + 2 * ox + dx];
                    }
                }
                yp[oy * wo + ox] = acc / T::of((wy * wx) as f64);
            }
        }
    }
    y
}

pub(crate) fn downsample_bwd<T: Real>(dy: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let (ho, wo) = (half(h), half(w));
    let mut dx = vec![T::zero(); planes * h * w];
    for pl in 0..planes {
        let gp = &dy[pl * ho * wo..(pl + 1) * ho * wo];
        let dp = &mut dx[pl * h * w..(pl + 1) * h * w];
        for oy in 0..ho {
            let wy = window(h, oy);
            for ox in 0..wo {
                let wx = window(w, ox);
                let g = gp[oy * wo + ox] / T::of((wy * wx) as f64);
                for dy in 0..wy {
                    for dx in 0..wx {
                        dp[(2 * oy + dy) * w + 2 * ox + dx] = g;
                    }
                }
            }
        }
    }
    dx
}

/// Nearest-neighbour 2× upsampling cropped to `(h, w)`.
pub(crate) fn upsample_fwd<T: Real>(
    x: &[T],
    planes: usize,
    (hi, wi): (usize, usize),
    (h, w): (usize, usize),
) -> Vec<T> {
    let mut y = vec![T::zero(); planes * h * w];
    for pl in 0..planes {
        let xp = &x[pl * hi * wi..(pl + 1) * hi * wi];
        let yp = &mut y[pl * h * w..(pl + 1) * h * w];
        for oy in 0..h {
            for ox in 0..w {
                yp[oy * w + ox] = xp[(oy / 2) * wi + ox / 2];
            }
        }
    }
    y
}

pub(crate) fn upsample_bwd<T: Real>(
    dy: &[T],
    planes: usize,
    (hi, wi): (usize, usize),
    (h, w): (usize, usize),
) -> Vec<T> {
    let mut dx = vec![T::zero(); planes * hi * wi];
    for pl in 0..planes {
        let gp = &dy[pl * h * w..(pl + 1) * h * w];
        let dp = &mut dx[pl * hi * wi..(pl + 1) * hi * wi];
        for oy in 0..h {
            for ox in 0..w {
                let t = &mut dp[(oy / 2) * wi + ox / 2];
                *t = *t + gp[oy * w + ox];
            }
        }
    }
    dx
}
