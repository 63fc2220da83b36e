//! Trainable conditional denoiser network.
//!
//! ```text
//! I ⊕ c_in·z ─ MLP_I ─┐
//!                     ├─ assemble ─ U-Net ─ norm ─ SiLU ─ interior cells ─ linear ─ F
//! B ───────── MLP_B ──┘                (modulated by the noise embedding)
//! ```
//!
//! Both encoders are pixel-wise: `linear → layer norm → SiLU → linear` over
//! channels, applied to their own region's cells only. The noise embedding
//! maps `c_noise` to sin/cos features at geometrically spaced periods and
//! then through two dense layers with SiLU. Every normalization gets a
//! per-channel `scale = 1 + head(e)` and `shift = head(e)` from the embedding
//! `e`. The trunk is a two-level U-Net of residual blocks:
//!
//! ```text
//! h1 = Res(L → W1)                  full resolution
//! h2 = Res(W1 → W2)(avgpool(h1))    half resolution
//! h3 = Res(W1 + W2 → W1)(h1 ⊕ up(h2))
//! Res(x) = conv(SiLU(GN(conv(SiLU(GN(x)))))) + skip(x)
//! ```

use std::f64::consts::TAU;
use std::sync::Arc;

use lam_tensor::{ParamStore, Real, RegionIndex, Tape, Tensor, Var};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::edm::RawDenoiser;
use crate::error::{Error, Result};
use crate::grid::{ChannelLayout, ConditioningPair, RegionMask};
use crate::rng::{stream_id, StreamTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub height: usize,
    pub width: usize,
    pub boundary_width: usize,
    pub layout: ChannelLayout,
    pub latent: usize,
    pub widths: [usize; 2],
    pub frequencies: usize,
    pub base_period: f64,
    pub embed: usize,
    pub max_groups: usize,
}

impl NetConfig {
    /// Default widths for a grid and channel layout.
    pub fn new(height: usize, width: usize, boundary_width: usize, layout: ChannelLayout) -> Self {
        NetConfig {
            height,
            width,
            boundary_width,
            layout,
            latent: 32,
            widths: [32, 64],
            frequencies: 32,
            base_period: 16.0,
            embed: 128,
            max_groups: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b2 = 2 * self.boundary_width;
        if self.height <= b2 || self.width <= b2 {
            return Err(Error::Config("network grid has no interior".into()));
        }
        let dims = [self.latent, self.widths[0], self.widths[1], self.frequencies, self.embed, self.max_groups];
        if dims.contains(&0) || self.layout.d_x == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if !(self.base_period > 0.0 && self.base_period.is_finite()) {
            return Err(Error::Config("embedding base period must be positive".into()));
        }
        Ok(())
    }

    pub fn interior_shape(&self) -> [usize; 3] {
        let b2 = 2 * self.boundary_width;
        [self.layout.d_x, self.height - b2, self.width - b2]
    }

    /// Periods of the noise embedding, geometric from `base_period` down to 1.
    pub fn periods(&self) -> Vec<f64> {
        let k = self.frequencies;
        (0..k)
            .map(|i| {
                let frac = if k > 1 { i as f64 / (k - 1) as f64 } else { 0.0 };
                self.base_period.powf(1.0 - frac)
            })
            .collect()
    }

    fn groups(&self, channels: usize) -> usize {
        (1..=self.max_groups.min(channels)).rev().find(|g| channels.is_multiple_of(*g)).unwrap_or(1)
    }
}

/// Sin/cos features of `c_noise` at the configured periods.
pub fn fourier_features(config: &NetConfig, c_noise: f64) -> Vec<f64> {
    let periods = config.periods();
    let mut out = Vec::with_capacity(2 * periods.len());
    for p in &periods {
        out.push((TAU * c_noise / p).sin());
    }
    for p in &periods {
        out.push((TAU * c_noise / p).cos());
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Modulation {
    scale: Dense,
    shift: Dense,
}

#[derive(Debug, Clone, Copy)]
struct Encoder {
    l0: Dense,
    norm: Modulation,
    l1: Dense,
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    n1: Modulation,
    c1: Dense,
    n2: Modulation,
    c2: Dense,
    skip: Option<Dense>,
    groups_in: usize,
    groups_out: usize,
}

#[derive(Debug, Clone, Copy)]
struct Slots {
    emb0: Dense,
    emb1: Dense,
    enc_i: Encoder,
    enc_b: Encoder,
    blocks: [ResBlock; 3],
    out_norm: Modulation,
    out_groups: usize,
    dec: Dense,
}

struct Init<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> Init<'_, T> {
    fn dense(&mut self, name: &str, out: usize, inp: usize, kernel: bool, zero: bool) -> Dense {
        let (shape, fan_in) = if kernel { (vec![out, inp, 3, 3], inp * 9) } else { (vec![out, inp], inp) };
        let bound = 1.0 / (fan_in as f64).sqrt();
        let count = shape.iter().product();
        let data: Vec<T> = (0..count)
            .map(|_| if zero { T::zero() } else { T::of(bound * (2.0 * self.rng.random::<f64>() - 1.0)) })
            .collect();
        let w = self.store.insert(format!("{name}.w"), Tensor::new(&shape, data).expect("sized"));
        let b = self.store.insert(format!("{name}.b"), Tensor::zeros(&[out]));
        Dense { w, b }
    }

    fn modulation(&mut self, name: &str, channels: usize, embed: usize) -> Modulation {
        Modulation {
            scale: self.dense(&format!("{name}.scale"), channels, embed, false, false),
            shift: self.dense(&format!("{name}.shift"), channels, embed, false, false),
        }
    }

    fn encoder(&mut self, name: &str, inp: usize, latent: usize, embed: usize) -> Encoder {
        Encoder {
            l0: self.dense(&format!("{name}.l0"), latent, inp, false, false),
            norm: self.modulation(&format!("{name}.norm"), latent, embed),
            l1: self.dense(&format!("{name}.l1"), latent, latent, false, false),
        }
    }

    fn res_block(&mut self, name: &str, cin: usize, cout: usize, cfg: &NetConfig) -> ResBlock {
        let e = cfg.embed;
        ResBlock {
            n1: self.modulation(&format!("{name}.n1"), cin, e),
            c1: self.dense(&format!("{name}.c1"), cout, cin, true, false),
            n2: self.modulation(&format!("{name}.n2"), cout, e),
            c2: self.dense(&format!("{name}.c2"), cout, cout, true, false),
            skip: (cin != cout).then(|| self.dense(&format!("{name}.skip"), cout, cin, false, false)),
            groups_in: cfg.groups(cin),
            groups_out: cfg.groups(cout),
        }
    }
}

/// Host-side inputs of one batched network evaluation.
#[derive(Debug, Clone)]
pub struct NetInputs<T> {
    /// `[N, C_I + d_x, |interior|]`: interior conditioning then the scaled latent.
    pub interior: Tensor<T>,
    /// `[N, C_B, |boundary|]`.
    pub boundary: Tensor<T>,
    /// `[N, 2K]` Fourier features of each sample's `c_noise`.
    pub features: Tensor<T>,
}

/// Tape handles of one recorded forward pass.
#[derive(Debug, Clone)]
pub struct Recorded {
    /// `[N, L, H, W]` encoder outputs on the assembled grid.
    pub grid: Var,
    /// `[N, d_x, |interior|]` raw network output.
    pub output: Var,
    /// Named intermediate activations in evaluation order.
    pub stages: Vec<(&'static str, Var)>,
}

#[derive(Debug, Clone)]
pub struct CondDenoiserNet<T: Real> {
    config: NetConfig,
    params: ParamStore<T>,
    slots: Slots,
    mask: Arc<RegionMask>,
    index: Arc<RegionIndex>,
}

impl<T: Real> CondDenoiserNet<T> {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(StreamTag::Init, 0, 0));
        let mut init = Init { store: &mut params, rng };
        let (l, [w1, w2], e) = (config.latent, config.widths, config.embed);
        let lay = config.layout;
        let d_x = lay.d_x;
        let slots = Slots {
            emb0: init.dense("emb.l0", e, 2 * config.frequencies, false, false),
            emb1: init.dense("emb.l1", e, e, false, false),
            enc_i: init.encoder("enc_i", lay.interior_channels() + d_x, l, e),
            enc_b: init.encoder("enc_b", lay.boundary_channels(), l, e),
            blocks: [
                init.res_block("down", l, w1, &config),
                init.res_block("mid", w1, w2, &config),
                init.res_block("up", w1 + w2, w1, &config),
            ],
            out_norm: init.modulation("out.norm", w1, e),
            out_groups: config.groups(w1),
            dec: init.dense("out.dec", d_x, w1, false, true),
        };
        let mask = Arc::new(RegionMask::new(config.height, config.width, config.boundary_width));
        let index = mask.to_index();
        Ok(CondDenoiserNet { config, params, slots, mask, index })
    }

    /// Network with the given parameters; names and shapes must match.
    pub fn with_params(config: NetConfig, params: ParamStore<T>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        if !net.params.same_layout(&params) {
            return Err(Error::Incompatible(
                "parameter names or shapes differ from the configured architecture".into(),
            ));
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn mask(&self) -> &Arc<RegionMask> {
        &self.mask
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Converts host arrays into network inputs.
    pub fn inputs(&self, scaled: &[Array3<f64>], c_noise: &[f64], cond: &[&ConditioningPair]) -> Result<NetInputs<T>> {
        let n = scaled.len();
        if c_noise.len() != n || cond.len() != n || n == 0 {
            return Err(Error::dim(
                "network inputs",
                format!("{n} latents, {} noise levels, {} conditioning inputs", c_noise.len(), cond.len()),
            ));
        }
        let lay = self.config.layout;
        let shape = self.config.interior_shape();
        let (pi, pb) = (self.index.interior().len(), self.index.boundary().len());
        let (ci, cb) = (lay.interior_channels(), lay.boundary_channels());
        let mut interior = Vec::with_capacity(n * (ci + shape[0]) * pi);
        let mut boundary = Vec::with_capacity(n * cb * pb);
        let mut features = Vec::with_capacity(n * 2 * self.config.frequencies);
        for ((z, c), &cn) in scaled.iter().zip(cond).zip(c_noise) {
            if c.layout() != lay || c.interior_input().ncols() != pi || c.boundary_input().ncols() != pb {
                return Err(Error::Config(format!(
                    "conditioning layout {:?} on {}+{} cells does not match the network ({:?}, {pi}+{pb})",
                    c.layout(),
                    c.interior_input().ncols(),
                    c.boundary_input().ncols(),
                    lay
                )));
            }
            if z.shape() != shape {
                return Err(Error::dim("network inputs", format!("latent {:?}, expected {shape:?}", z.shape())));
            }
            interior.extend(c.interior_input().iter().map(|&v| T::of(v)));
            interior.extend(z.iter().map(|&v| T::of(v)));
            boundary.extend(c.boundary_input().iter().map(|&v| T::of(v)));
            features.extend(fourier_features(&self.config, cn).into_iter().map(T::of));
        }
        Ok(NetInputs {
            interior: Tensor::new(&[n, ci + shape[0], pi], interior)?,
            boundary: Tensor::new(&[n, cb, pb], boundary)?,
            features: Tensor::new(&[n, 2 * self.config.frequencies], features)?,
        })
    }

    /// Records a forward pass with parameter handles `p` (in slot order).
    pub fn record(&self, tape: &mut Tape<T>, p: &[Var], inputs: &NetInputs<T>) -> Result<Recorded> {
        if p.len() != self.params.len() {
            return Err(Error::dim(
                "network parameters",
                format!("{} handles for {} tensors", p.len(), self.params.len()),
            ));
        }
        let s = &self.slots;
        let dense = |tape: &mut Tape<T>, x: Var, d: Dense| tape.linear(x, p[d.w], Some(p[d.b]));
        let conv = |tape: &mut Tape<T>, x: Var, d: Dense| tape.conv2d_3x3(x, p[d.w], Some(p[d.b]));
        let modulate = |tape: &mut Tape<T>, e: Var, m: Modulation| -> Result<(Var, Var)> {
            let head = dense(tape, e, m.scale)?;
            let scale = tape.add_scalar(head, T::one());
            let shift = dense(tape, e, m.shift)?;
            Ok((scale, shift))
        };

        let feats = tape.leaf(inputs.features.clone());
        let e = dense(tape, feats, s.emb0)?;
        let e = tape.silu(e);
        let e = dense(tape, e, s.emb1)?;
        let e = tape.silu(e);

        let encode = |tape: &mut Tape<T>, x: Var, enc: Encoder| -> Result<Var> {
            let h = dense(tape, x, enc.l0)?;
            let (sc, sh) = modulate(tape, e, enc.norm)?;
            let h = tape.layer_norm_modulated(h, sc, sh)?;
            let h = tape.silu(h);
            Ok(dense(tape, h, enc.l1)?)
        };
        let xi = tape.leaf(inputs.interior.clone());
        let xb = tape.leaf(inputs.boundary.clone());
        let hi = encode(tape, xi, s.enc_i)?;
        let hb = encode(tape, xb, s.enc_b)?;
        let grid = tape.assemble_regions(hi, hb, &self.index)?;

        let res = |tape: &mut Tape<T>, x: Var, blk: ResBlock| -> Result<Var> {
            let (sc, sh) = modulate(tape, e, blk.n1)?;
            let h = tape.group_norm_modulated(x, blk.groups_in, sc, sh)?;
            let h = tape.silu(h);
            let h = conv(tape, h, blk.c1)?;
            let (sc, sh) = modulate(tape, e, blk.n2)?;
            let h = tape.group_norm_modulated(h, blk.groups_out, sc, sh)?;
            let h = tape.silu(h);
            let h = conv(tape, h, blk.c2)?;
            let skip = match blk.skip {
                Some(d) => dense(tape, x, d)?,
                None => x,
            };
            Ok(tape.add(h, skip)?)
        };
        let h1 = res(tape, grid, s.blocks[0])?;
        let pooled = tape.downsample_avg2(h1)?;
        let h2 = res(tape, pooled, s.blocks[1])?;
        let up = tape.upsample_nearest2(h2, self.config.height, self.config.width)?;
        let cat = tape.concat_channels(h1, up)?;
        let h3 = res(tape, cat, s.blocks[2])?;

        let (sc, sh) = modulate(tape, e, s.out_norm)?;
        let h = tape.group_norm_modulated(h3, s.out_groups, sc, sh)?;
        let h = tape.silu(h);
        let h = tape.gather_interior(h, &self.index)?;
        let output = dense(tape, h, s.dec)?;
        let stages =
            vec![("emb", e), ("enc_i", hi), ("enc_b", hb), ("down", h1), ("mid", h2), ("up", h3), ("out.norm", h)];
        Ok(Recorded { grid, output, stages })
    }

    fn run(&self, inputs: &NetInputs<T>) -> Result<(Tape<T>, Recorded)> {
        let mut tape = Tape::new();
        let p = self.params.register(&mut tape);
        let rec = self.record(&mut tape, &p, inputs)?;
        Ok((tape, rec))
    }

    /// Full-grid encoder features, one `[L, H, W]` array per sample.
    pub fn encode_grid(
        &self,
        scaled: &[Array3<f64>],
        c_noise: f64,
        cond: &[&ConditioningPair],
    ) -> Result<Vec<Array3<f64>>> {
        let inputs = self.inputs(scaled, &vec![c_noise; scaled.len()], cond)?;
        let (tape, rec) = self.run(&inputs)?;
        let (l, h, w) = (self.config.latent, self.config.height, self.config.width);
        Ok(split_samples(tape.value(rec.grid), (l, h, w)))
    }

    /// Raw network output `F`, one interior-shaped array per sample.
    pub fn forward(
        &self,
        scaled: &[Array3<f64>],
        c_noise: &[f64],
        cond: &[&ConditioningPair],
    ) -> Result<Vec<Array3<f64>>> {
        let inputs = self.inputs(scaled, c_noise, cond)?;
        let (tape, rec) = self.run(&inputs)?;
        let out = tape.value(rec.output);
        if !out.is_finite() {
            let layer =
                rec.stages.iter().find(|(_, v)| !tape.value(*v).is_finite()).map_or("out.dec", |(name, _)| name);
            return Err(Error::Numerical {
                location: format!("network layer {layer}"),
                detail: "non-finite activation".into(),
            });
        }
        let [d, hi, wi] = self.config.interior_shape();
        Ok(split_samples(out, (d, hi, wi)))
    }
}

fn split_samples<T: Real>(t: &Tensor<T>, shape: (usize, usize, usize)) -> Vec<Array3<f64>> {
    let per = shape.0 * shape.1 * shape.2;
    t.data()
        .chunks(per)
        .map(|c| Array3::from_shape_vec(shape, c.iter().map(|v| v.f64()).collect()).expect("sized"))
        .collect()
}

impl<T: Real> RawDenoiser<ConditioningPair> for CondDenoiserNet<T> {
    fn evaluate(&self, scaled: &[Array3<f64>], c_noise: f64, cond: &[&ConditioningPair]) -> Result<Vec<Array3<f64>>> {
        self.forward(scaled, &vec![c_noise; scaled.len()], cond)
    }
}
