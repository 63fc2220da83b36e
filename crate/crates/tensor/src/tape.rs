//! Operation tape and reverse-mode backward pass.

use std::sync::Arc;

use crate::error::{shape_err, Result, TensorError};
use crate::kernels::{self, Moments};
use crate::real::Real;
use crate::region::RegionIndex;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Conv3x3 { x: Var, w: Var, b: Option<Var> },
    Silu { x: Var },
    GroupNorm { x: Var, scale: Var, shift: Var, groups: usize, stats: Vec<Moments<T>> },
    LayerNorm { x: Var, scale: Var, shift: Var, stats: Vec<Moments<T>> },
    Down { x: Var },
    Up { x: Var },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    ScaleSamples { x: Var, factors: Vec<T> },
    AddScalar { x: Var },
    Assemble { interior: Var, boundary: Var, index: Arc<RegionIndex> },
    Gather { x: Var, index: Arc<RegionIndex> },
    WeightedSqMean { x: Var, weights: Vec<T> },
    Sum { x: Var },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a forward computation so it can be differentiated.
///
/// Values are appended in evaluation order; `backward` walks the tape in
/// reverse and accumulates gradients in that fixed order, so an identical
/// tape always yields bit-identical gradients.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one backward pass, indexed by [`Var`]. Only leaves keep
/// their gradient.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// `(batch, channels, positions)` view of a tensor with rank ≥ 2.
fn ncp<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize)> {
    if t.shape().len() < 2 {
        return Err(shape_err(op, format!("need [N, C, ...], got {:?}", t.shape())));
    }
    Ok((t.batch(), t.channels(), t.spatial().max(1)))
}

fn nchw<T: Real>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(shape_err(op, format!("need [N, C, H, W], got {s:?}"))),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Channel-axis affine map: `y[n,o,…] = Σ_c w[o,c]·x[n,c,…] + b[o]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, c, p) = ncp(self.value(x), "linear")?;
        let o = match *self.shape(w) {
            [o, wc] if wc == c => o,
            ref s => return Err(shape_err("linear", format!("weights {s:?} vs {c} input channels"))),
        };
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return Err(shape_err("linear", format!("bias {:?} vs {o} outputs", self.shape(b))));
            }
        }
        let y = kernels::linear_fwd(
            self.value(x).data(),
            (n, c, p),
            self.value(w).data(),
            o,
            b.map(|b| self.value(b).data()),
        );
        let mut shape = self.shape(x).to_vec();
        shape[1] = o;
        Ok(self.push(Tensor::new(&shape, y)?, Op::Linear { x, w, b }))
    }

    /// 3×3 convolution with zero padding of one cell (output keeps H×W).
    pub fn conv2d_3x3(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, c, h, wd) = nchw(self.value(x), "conv2d_3x3")?;
        let o = match *self.shape(w) {
            [o, kc, 3, 3] if kc == c => o,
            ref s => return Err(shape_err("conv2d_3x3", format!("kernels {s:?} vs {c} input channels"))),
        };
        if let Some(b) = b {
            if self.shape(b) != [o] {
                return Err(shape_err("conv2d_3x3", format!("bias {:?} vs {o} outputs", self.shape(b))));
            }
        }
        let y = kernels::conv3x3_fwd(
            self.value(x).data(),
            (n, c, h, wd),
            self.value(w).data(),
            o,
            b.map(|b| self.value(b).data()),
        );
        Ok(self.push(Tensor::new(&[n, o, h, wd], y)?, Op::Conv3x3 { x, w, b }))
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let y = Tensor::new(xv.shape(), kernels::silu_fwd(xv.data())).expect("same shape");
        self.push(y, Op::Silu { x })
    }

    fn check_modulation(&self, op: &'static str, x: Var, scale: Var, shift: Var) -> Result<(usize, usize, usize)> {
        let (n, c, p) = ncp(self.value(x), op)?;
        for v in [scale, shift] {
            if self.shape(v) != [n, c] {
                return Err(shape_err(op, format!("modulation {:?} vs [{n}, {c}]", self.shape(v))));
            }
        }
        Ok((n, c, p))
    }

    /// Group normalization followed by a per-sample, per-channel affine map.
    pub fn group_norm_modulated(&mut self, x: Var, groups: usize, scale: Var, shift: Var) -> Result<Var> {
        let (n, c, p) = self.check_modulation("group_norm_modulated", x, scale, shift)?;
        if groups == 0 || c % groups != 0 {
            return Err(shape_err("group_norm_modulated", format!("{groups} groups do not divide {c} channels")));
        }
        let (y, stats) = kernels::group_norm_fwd(
            self.value(x).data(),
            (n, c, p),
            groups,
            self.value(scale).data(),
            self.value(shift).data(),
        );
        let y = Tensor::new(self.shape(x), y)?;
        Ok(self.push(y, Op::GroupNorm { x, scale, shift, groups, stats }))
    }

    /// Normalization across channels at every position, then modulation.
    pub fn layer_norm_modulated(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let (n, c, p) = self.check_modulation("layer_norm_modulated", x, scale, shift)?;
        let (y, stats) = kernels::layer_norm_fwd(
            self.value(x).data(),
            (n, c, p),
            self.value(scale).data(),
            self.value(shift).data(),
        );
        let y = Tensor::new(self.shape(x), y)?;
        Ok(self.push(y, Op::LayerNorm { x, scale, shift, stats }))
    }

    /// 2×2 average pooling; odd extents keep a partial last window.
    pub fn downsample_avg2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = nchw(self.value(x), "downsample_avg2")?;
        let y = kernels::downsample_fwd(self.value(x).data(), n * c, h, w);
        Ok(self.push(Tensor::new(&[n, c, kernels::half(h), kernels::half(w)], y)?, Op::Down { x }))
    }

    /// Nearest-neighbour 2× upsampling to an explicit `(height, width)`,
    /// which must be what [`Tape::downsample_avg2`] halved.
    pub fn upsample_nearest2(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        let (n, c, hi, wi) = nchw(self.value(x), "upsample_nearest2")?;
        if kernels::half(height) != hi || kernels::half(width) != wi {
            return Err(shape_err("upsample_nearest2", format!("{hi}×{wi} cannot upsample to {height}×{width}")));
        }
        let y = kernels::upsample_fwd(self.value(x).data(), n * c, (hi, wi), (height, width));
        Ok(self.push(Tensor::new(&[n, c, height, width], y)?, Op::Up { x }))
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sa.len() != sb.len() || sa[0] != sb[0] || sa[2..] != sb[2..] {
            return Err(shape_err("concat_channels", format!("{sa:?} vs {sb:?}")));
        }
        let (n, ca, p) = ncp(self.value(a), "concat_channels")?;
        let cb = sb[1];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut y = Vec::with_capacity(da.len() + db.len());
        for s in 0..n {
            y.extend_from_slice(&da[s * ca * p..(s + 1) * ca * p]);
            y.extend_from_slice(&db[s * cb * p..(s + 1) * cb * p]);
        }
        let mut shape = sa.to_vec();
        shape[1] = ca + cb;
        Ok(self.push(Tensor::new(&shape, y)?, Op::Concat { a, b }))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let y = self.value(a).data().iter().zip(self.value(b).data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(self.shape(a), y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.binary(a, b, "add", |p, q| p + q)?;
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.binary(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(y, Op::Sub { a, b }))
    }

    /// Multiplies sample `n` (leading axis) by the constant `factors[n]`.
    pub fn scale_samples(&mut self, x: Var, factors: &[T]) -> Result<Var> {
        let xv = self.value(x);
        if factors.len() != xv.batch() {
            return Err(shape_err("scale_samples", format!("{} factors for batch {}", factors.len(), xv.batch())));
        }
        let per = xv.len() / xv.batch().max(1);
        let y: Vec<T> = xv
            .data()
            .chunks(per.max(1))
            .zip(factors)
            .flat_map(|(chunk, &f)| chunk.iter().map(move |&v| v * f))
            .collect();
        let y = Tensor::new(xv.shape(), y)?;
        Ok(self.push(y, Op::ScaleSamples { x, factors: factors.to_vec() }))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let n = self.value(x).batch();
        self.scale_samples(x, &vec![k; n]).expect("factor per sample")
    }

    pub fn add_scalar(&mut self, x: Var, k: T) -> Var {
        let xv = self.value(x);
        let y = Tensor::new(xv.shape(), xv.data().iter().map(|&v| v + k).collect()).expect("same shape");
        self.push(y, Op::AddScalar { x })
    }

    /// Scatters `[N, C, |interior|]` and `[N, C, |boundary|]` onto a full
    /// `[N, C, H, W]` grid.
    pub fn assemble_regions(&mut self, interior: Var, boundary: Var, index: &Arc<RegionIndex>) -> Result<Var> {
        let (si, sb) = (self.shape(interior), self.shape(boundary));
        let ok = si.len() == 3
            && sb.len() == 3
            && si[0] == sb[0]
            && si[1] == sb[1]
            && si[2] == index.interior().len()
            && sb[2] == index.boundary().len();
        if !ok {
            return Err(shape_err("assemble_regions", format!("interior {si:?}, boundary {sb:?}")));
        }
        let (n, c) = (si[0], si[1]);
        let (pi, pb, cells) = (si[2], sb[2], index.cells());
        let mut y = vec![T::zero(); n * c * cells];
        let (di, db) = (self.value(interior).data(), self.value(boundary).data());
        for plane in 0..n * c {
            let out = &mut y[plane * cells..(plane + 1) * cells];
            for (&cell, &v) in index.interior().iter().zip(&di[plane * pi..(plane + 1) * pi]) {
                out[cell] = v;
            }
            for (&cell, &v) in index.boundary().iter().zip(&db[plane * pb..(plane + 1) * pb]) {
                out[cell] = v;
            }
        }
        let y = Tensor::new(&[n, c, index.height(), index.width()], y)?;
        Ok(self.push(y, Op::Assemble { interior, boundary, index: Arc::clone(index) }))
    }

    /// Reads the interior cells of `[N, C, H, W]` into `[N, C, |interior|]`.
    pub fn gather_interior(&mut self, x: Var, index: &Arc<RegionIndex>) -> Result<Var> {
        let (n, c, h, w) = nchw(self.value(x), "gather_interior")?;
        if h != index.height() || w != index.width() {
            return Err(shape_err(
                "gather_interior",
                format!("grid {h}×{w} vs index {}×{}", index.height(), index.width()),
            ));
        }
        let cells = h * w;
        let xv = self.value(x).data();
        let mut y = Vec::with_capacity(n * c * index.interior().len());
        for plane in 0..n * c {
            let src = &xv[plane * cells..(plane + 1) * cells];
            y.extend(index.interior().iter().map(|&cell| src[cell]));
        }
        let y = Tensor::new(&[n, c, index.interior().len()], y)?;
        Ok(self.push(y, Op::Gather { x, index: Arc::clone(index) }))
    }

    /// `Σ_{n,c,p} w[n,c]·x[n,c,p]² / (N·P)`; weights are constants.
    pub fn weighted_sq_mean(&mut self, x: Var, weights: &[T]) -> Result<Var> {
        let (n, c, p) = ncp(self.value(x), "weighted_sq_mean")?;
        if weights.len() != n * c {
            return Err(shape_err("weighted_sq_mean", format!("{} weights for [{n}, {c}]", weights.len())));
        }
        let xv = self.value(x).data();
        let mut total = T::zero();
        for (plane, &wt) in weights.iter().enumerate() {
            let s: T = xv[plane * p..(plane + 1) * p].iter().map(|&v| v * v).sum();
            total = total + wt * s;
        }
        let y = Tensor::scalar(total / T::of((n * p) as f64));
        Ok(self.push(y, Op::WeightedSqMean { x, weights: weights.to_vec() }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(TensorError::NonScalar { shape: out.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out.shape(), T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let mut acc = |v: Var, shape: &[usize], data: Vec<T>| -> Result<()> {
            let t = Tensor::new(shape, data)?;
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
            Ok(())
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let dims = ncp(xv, "linear")?;
                let o = self.shape(*w)[0];
                let d = kernels::linear_bwd(xv.data(), dims, self.value(*w).data(), o, gd);
                acc(*x, xv.shape(), d.dx)?;
                acc(*w, self.shape(*w), d.dw)?;
                if let Some(b) = b {
                    acc(*b, &[o], d.db)?;
                }
            }
            Op::Conv3x3 { x, w, b } => {
                let xv = self.value(*x);
                let dims = nchw(xv, "conv2d_3x3")?;
                let o = self.shape(*w)[0];
                let d = kernels::conv3x3_bwd(xv.data(), dims, self.value(*w).data(), o, gd);
                acc(*x, xv.shape(), d.dx)?;
                acc(*w, self.shape(*w), d.dw)?;
                if let Some(b) = b {
                    acc(*b, &[o], d.db)?;
                }
            }
            Op::Silu { x } => {
                let xv = self.value(*x);
                acc(*x, xv.shape(), kernels::silu_bwd(xv.data(), gd))?;
            }
            Op::GroupNorm { x, scale, shift, groups, stats } => {
                let xv = self.value(*x);
                let dims = ncp(xv, "group_norm_modulated")?;
                let d = kernels::group_norm_bwd(xv.data(), dims, *groups, self.value(*scale).data(), stats, gd);
                acc(*x, xv.shape(), d.dx)?;
                acc(*scale, self.shape(*scale), d.dscale)?;
                acc(*shift, self.shape(*shift), d.dshift)?;
            }
            Op::LayerNorm { x, scale, shift, stats } => {
                let xv = self.value(*x);
                let dims = ncp(xv, "layer_norm_modulated")?;
                let d = kernels::layer_norm_bwd(xv.data(), dims, self.value(*scale).data(), stats, gd);
                acc(*x, xv.shape(), d.dx)?;
                acc(*scale, self.shape(*scale), d.dscale)?;
                acc(*shift, self.shape(*shift), d.dshift)?;
            }
            Op::Down { x } => {
                let (n, c, h, w) = nchw(self.value(*x), "downsample_avg2")?;
                acc(*x, &[n, c, h, w], kernels::downsample_bwd(gd, n * c, h, w))?;
            }
            Op::Up { x } => {
                let (n, c, hi, wi) = nchw(self.value(*x), "upsample_nearest2")?;
                let (h, w) = (g.shape()[2], g.shape()[3]);
                acc(*x, &[n, c, hi, wi], kernels::upsample_bwd(gd, n * c, (hi, wi), (h, w)))?;
            }
            Op::Concat { a, b } => {
                let (n, ca, p) = ncp(self.value(*a), "concat_channels")?;
                let cb = self.shape(*b)[1];
                let mut da = Vec::with_capacity(n * ca * p);
                let mut db = Vec::with_capacity(n * cb * p);
                for s in 0..n {
                    let base = s * (ca + cb) * p;
                    da.extend_from_slice(&gd[base..base + ca * p]);
                    db.extend_from_slice(&gd[base + ca * p..base + (ca + cb) * p]);
                }
                acc(*a, self.shape(*a), da)?;
                acc(*b, self.shape(*b), db)?;
            }
            Op::Add { a, b } => {
                acc(*a, g.shape(), gd.to_vec())?;
                acc(*b, g.shape(), gd.to_vec())?;
            }
            Op::Sub { a, b } => {
                acc(*a, g.shape(), gd.to_vec())?;
                acc(*b, g.shape(), gd.iter().map(|&v| -v).collect())?;
            }
            Op::ScaleSamples { x, factors } => {
                let per = (g.len() / factors.len().max(1)).max(1);
                let dx =
                    gd.chunks(per).zip(factors).flat_map(|(chunk, &f)| chunk.iter().map(move |&v| v * f)).collect();
                acc(*x, g.shape(), dx)?;
            }
            Op::AddScalar { x } => acc(*x, g.shape(), gd.to_vec())?,
            Op::Assemble { interior, boundary, index } => {
                let cells = index.cells();
                let planes = g.len() / cells;
                let mut di = Vec::with_capacity(planes * index.interior().len());
                let mut db = Vec::with_capacity(planes * index.boundary().len());
                for plane in 0..planes {
                    let src = &gd[plane * cells..(plane + 1) * cells];
                    di.extend(index.interior().iter().map(|&c| src[c]));
                    db.extend(index.boundary().iter().map(|&c| src[c]));
                }
                acc(*interior, self.shape(*interior), di)?;
                acc(*boundary, self.shape(*boundary), db)?;
            }
            Op::Gather { x, index } => {
                let cells = index.cells();
                let pi = index.interior().len();
                let planes = g.len() / pi.max(1);
                let mut dx = vec![T::zero(); planes * cells];
                for plane in 0..planes {
                    let dst = &mut dx[plane * cells..(plane + 1) * cells];
                    for (&cell, &v) in index.interior().iter().zip(&gd[plane * pi..(plane + 1) * pi]) {
                        dst[cell] = v;
                    }
                }
                acc(*x, self.shape(*x), dx)?;
            }
            Op::WeightedSqMean { x, weights } => {
                let xv = self.value(*x);
                let (n, _, p) = ncp(xv, "weighted_sq_mean")?;
                let k = gd[0] * T::of(2.0) / T::of((n * p) as f64);
                let dx = xv
                    .data()
                    .chunks(p)
                    .zip(weights)
                    .flat_map(|(chunk, &wt)| chunk.iter().map(move |&v| k * wt * v))
                    .collect();
                acc(*x, xv.shape(), dx)?;
            }
            Op::Sum { x } => {
                let xv = self.value(*x);
                acc(*x, xv.shape(), vec![gd[0]; xv.len()])?;
            }
        }
        Ok(())
    }
}
