//! Single-step denoising training.
//!
//! Each sample is a conditioning pair and its standardized interior residual
//! target `r`. A step draws a noise level per sample, denoises `z = r + ε`
//! once, and minimizes the weighted squared error of the decoded next state
//!
//! ```text
//! L = (1/|G_I|) Σ_g Σ_d h_d · λ_d · ω(σ) · (X̂ − X)²,   X̂ − X = σ_res,d · (D(z; σ) − r)
//! ```
//!
//! averaged over the batch, followed by a clipped AdamW update.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use lam_tensor::{read_checkpoint, write_checkpoint, ParamStore, Real, Tape, Tensor, Var};
use ndarray::{Array3, ArrayView3, Zip};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edm::{sample_training_noise, NoiseSchedule, Preconditioner};
use crate::error::{Error, Result};
use crate::grid::{
    assemble_conditioning, residual_encode, standardize, BoundaryState, ConditioningPair, FutureBoundaryMode, GridSpec,
    NormStats, RegionMask, StepInputs,
};
use crate::net::{CondDenoiserNet, NetConfig};
use crate::rng::{substream, StreamTag};
use crate::synthetic::Trajectory;

/// How `λ_d` relates to the residual standard deviation `σ_res,d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// `λ_d = 1/σ_res,d²`: every variable's residual counts equally.
    InverseVariance,
    /// `λ_d = 1`.
    Unit,
}

impl std::str::FromStr for LambdaMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse-variance" => Ok(LambdaMode::InverseVariance),
            "unit" => Ok(LambdaMode::Unit),
            _ => Err(Error::Config(format!("unknown lambda mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub level: Vec<f64>,
    pub lambda: Vec<f64>,
    pub res_std: Vec<f64>,
}

impl LossWeights {
    pub fn new(grid: &GridSpec, stats: &NormStats, mode: LambdaMode) -> Result<Self> {
        stats.check_covers(&grid.var_names)?;
        stats.validate()?;
        let lambda = match mode {
            LambdaMode::InverseVariance => stats.res_std.iter().map(|s| 1.0 / (s * s)).collect(),
            LambdaMode::Unit => vec![1.0; stats.num_vars()],
        };
        Ok(LossWeights { level: grid.level_weights.clone(), lambda, res_std: stats.res_std.clone() })
    }

    /// Weight of variable `d` on squared residual-space errors `(D − r)²`.
    pub fn residual_weight(&self, d: usize, omega: f64) -> f64 {
        self.level[d] * self.lambda[d] * omega * self.res_std[d] * self.res_std[d]
    }
}

/// Weighted squared error between standardized interior states `[d, h, w]`.
pub fn wmse_loss(
    prediction: ArrayView3<f64>,
    target: ArrayView3<f64>,
    weights: &LossWeights,
    omega: f64,
) -> Result<f64> {
    if prediction.shape() != target.shape() {
        return Err(Error::dim("wmse_loss", format!("{:?} vs {:?}", prediction.shape(), target.shape())));
    }
    let d = prediction.shape()[0];
    if weights.level.len() != d || weights.lambda.len() != d {
        return Err(Error::dim("wmse_loss", format!("weights for {} variables, data has {d}", weights.level.len())));
    }
    let cells = (prediction.len() / d.max(1)) as f64;
    let mut total = 0.0;
    for v in 0..d {
        let mut s = 0.0;
        Zip::from(prediction.index_axis(ndarray::Axis(0), v))
            .and(target.index_axis(ndarray::Axis(0), v))
            .for_each(|&p, &t| s += (p - t) * (p - t));
        total += weights.level[v] * weights.lambda[v] * omega * s;
    }
    Ok(total / cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub cond: ConditioningPair,
    /// Encoded interior residual `[d, H − 2b, W − 2b]`.
    pub target: Array3<f64>,
}

/// All one-step samples `(X^{t−1}, X^t) → X^{t+1}` of a trajectory.
pub fn build_samples(traj: &Trajectory, stats: &NormStats, mask: &Arc<RegionMask>) -> Result<Vec<TrainingSample>> {
    let std_states = traj.states.iter().map(|s| standardize(s, stats)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for t in 1..std_states.len().saturating_sub(1) {
        let future = BoundaryState::from_state(&std_states[t + 1], mask);
        let inputs = StepInputs {
            prev: &std_states[t - 1],
            curr: &std_states[t],
            future_boundary: Some(&future),
            forcings: [&traj.forcings[t - 1], &traj.forcings[t], &traj.forcings[t + 1]],
            statics: &traj.statics,
        };
        let cond = assemble_conditioning(&inputs, mask, FutureBoundaryMode::Require)?;
        let curr = mask.interior_block(std_states[t].values.view());
        let next = mask.interior_block(std_states[t + 1].values.view());
        out.push(TrainingSample { cond, target: residual_encode(curr.view(), next.view(), stats)? });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stages: Vec<Stage>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub lambda: LambdaMode,
    pub schedule: NoiseSchedule,
    pub sigma_data: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stages: vec![
                Stage { epochs: 60, lr: 1e-3 },
                Stage { epochs: 40, lr: 1e-4 },
                Stage { epochs: 20, lr: 1e-5 },
            ],
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
            batch_size: 8,
            clip_norm: 1.0,
            lambda: LambdaMode::InverseVariance,
            schedule: NoiseSchedule::training(),
            sigma_data: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() || self.stages.iter().any(|s| s.epochs == 0 || !(s.lr > 0.0 && s.lr.is_finite())) {
            return Err(Error::Config("every training stage needs epochs > 0 and a positive rate".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("eps and clip norm must be positive, weight decay non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.schedule.validate()?;
        Preconditioner::new(self.sigma_data)?;
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    /// Stage index and learning rate of 0-based `epoch`.
    pub fn stage_of(&self, epoch: usize) -> (usize, f64) {
        let mut start = 0;
        for (i, s) in self.stages.iter().enumerate() {
            if epoch < start + s.epochs {
                return (i, s.lr);
            }
            start += s.epochs;
        }
        let last = self.stages.len() - 1;
        (last, self.stages[last].lr)
    }
}

/// First and second moment estimates of AdamW.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: ParamStore<f32>,
    pub v: ParamStore<f32>,
}

impl AdamState {
    pub fn new(params: &ParamStore<f32>) -> Self {
        let zeros = || {
            let mut s = ParamStore::new();
            for p in params.iter() {
                s.insert(p.name.clone(), Tensor::zeros(p.value.shape()));
            }
            s
        };
        AdamState { step: 0, m: zeros(), v: zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

/// One AdamW update with bias correction; decay is `p ← p − lr·wd·p`.
pub fn optimizer_update(
    params: &mut ParamStore<f32>,
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    h: AdamHyper,
) -> Result<()> {
    if grads.len() != params.len() || !params.same_layout(&state.m) {
        return Err(Error::dim("optimizer_update", "gradients or moments do not match the parameters"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (bc1, bc2) = (1.0 - h.beta1.powi(t), 1.0 - h.beta2.powi(t));
    let (b1, b2) = (h.beta1 as f32, h.beta2 as f32);
    let decay = (1.0 - h.lr * h.weight_decay) as f32;
    let step_size = (h.lr / bc1) as f32;
    let bc2_sqrt = bc2.sqrt() as f32;
    let eps = h.eps as f32;
    for (slot, g) in grads.iter().enumerate() {
        let p = &mut params.get_mut(slot).value;
        if g.shape() != p.shape() {
            return Err(Error::dim(
                "optimizer_update",
                format!("gradient {:?} for parameter {:?}", g.shape(), p.shape()),
            ));
        }
        let m = state.m.get_mut(slot).value.data_mut();
        let v = state.v.get_mut(slot).value.data_mut();
        for (((pi, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            *pi = *pi * decay - step_size * *mi / (vi.sqrt() / bc2_sqrt + eps);
        }
    }
    Ok(())
}

/// Scales gradients so their global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor<f32>], max_norm: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.data().iter()).map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = (max_norm / norm) as f32;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }
    norm
}

/// Noisy inputs of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyBatch {
    pub sigma: Vec<f64>,
    pub z: Vec<Array3<f64>>,
}

/// Draws noise for every sample; sample `i` uses substream `(seed, tag, key, i)`.
pub fn draw_noise(
    samples: &[&TrainingSample],
    schedule: &NoiseSchedule,
    seed: u64,
    tag: StreamTag,
    key: u64,
) -> Result<NoisyBatch> {
    let mut sigma = Vec::with_capacity(samples.len());
    let mut z = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let mut rng = substream(seed, tag, key, i as u64);
        let shape = [s.target.shape()[0], s.target.shape()[1], s.target.shape()[2]];
        let noise = sample_training_noise(schedule, shape, &mut rng)?;
        sigma.push(noise.sigma);
        z.push(&s.target + &noise.eps);
    }
    Ok(NoisyBatch { sigma, z })
}

/// Records the weighted denoising loss of `net` on `tape`, with `p` the
/// registered parameter handles.
pub fn record_loss<T: Real>(
    tape: &mut Tape<T>,
    p: &[Var],
    net: &CondDenoiserNet<T>,
    samples: &[&TrainingSample],
    noisy: &NoisyBatch,
    pre: &Preconditioner,
    weights: &LossWeights,
) -> Result<Var> {
    let n = samples.len();
    let mut scaled = Vec::with_capacity(n);
    let mut c_noise = Vec::with_capacity(n);
    let mut c_out = Vec::with_capacity(n);
    let mut offset = Vec::new();
    let mut wts = Vec::new();
    for ((s, z), &sigma) in samples.iter().zip(&noisy.z).zip(&noisy.sigma) {
        let c = pre.coeffs(sigma)?;
        let omega = pre.loss_weight(sigma)?;
        scaled.push(z * c.input);
        c_noise.push(c.noise);
        c_out.push(T::of(c.out));
        Zip::from(z).and(&s.target).for_each(|&z, &r| offset.push(T::of(c.skip * z - r)));
        wts.extend((0..s.target.shape()[0]).map(|d| T::of(weights.residual_weight(d, omega))));
    }
    let conds: Vec<&ConditioningPair> = samples.iter().map(|s| &s.cond).collect();
    let inputs = net.inputs(&scaled, &c_noise, &conds)?;
    let rec = net.record(tape, p, &inputs)?;
    let shape = tape.value(rec.output).shape().to_vec();
    let f = tape.scale_samples(rec.output, &c_out)?;
    let off = tape.leaf(Tensor::new(&shape, offset)?);
    let diff = tape.add(f, off)?;
    Ok(tape.weighted_sq_mean(diff, &wts)?)
}

/// Batch loss and parameter gradients of `net` at the given noise draws.
pub fn loss_and_grads(
    net: &CondDenoiserNet<f32>,
    samples: &[&TrainingSample],
    noisy: &NoisyBatch,
    pre: &Preconditioner,
    weights: &LossWeights,
    with_grads: bool,
) -> Result<(f64, Vec<Tensor<f32>>)> {
    let mut tape = Tape::new();
    let p = net.params().register(&mut tape);
    let loss = record_loss(&mut tape, &p, net, samples, noisy, pre, weights)?;
    let value = f64::from(tape.value(loss).data()[0]);
    if !value.is_finite() {
        return Err(Error::Numerical {
            location: "training loss".into(),
            detail: format!("non-finite loss at noise levels {:?}", noisy.sigma),
        });
    }
    if !with_grads {
        return Ok((value, Vec::new()));
    }
    let mut grads = tape.backward(loss)?;
    let g = p.iter().map(|&v| grads.take(v).expect("every parameter feeds the loss")).collect();
    Ok((value, g))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Progress {
    pub epoch: usize,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub wall_secs: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,stage,lr,train_loss,val_loss,wall_time_s";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:.6e},{},{:.3}",
            self.epoch,
            self.stage,
            self.lr,
            self.train_loss,
            self.val_loss.map(|v| format!("{v:.6e}")).unwrap_or_default(),
            self.wall_secs
        )
    }
}

/// Network, optimizer state and everything needed to continue training.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: CondDenoiserNet<f32>,
    pub adam: AdamState,
    pub config: TrainConfig,
    pub stats: NormStats,
    pub grid: GridSpec,
    pub inference: NoiseSchedule,
    pub progress: Progress,
    pub config_hash: String,
    weights: LossWeights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub grad_norm: f64,
}

impl Trainer {
    pub fn new(
        net_config: NetConfig,
        config: TrainConfig,
        grid: GridSpec,
        stats: NormStats,
        inference: NoiseSchedule,
        config_hash: String,
    ) -> Result<Self> {
        config.validate()?;
        inference.validate()?;
        let net = CondDenoiserNet::new(net_config, crate::rng::stream_id(StreamTag::Init, config.seed, 0))?;
        let weights = LossWeights::new(&grid, &stats, config.lambda)?;
        Ok(Trainer {
            adam: AdamState::new(net.params()),
            net,
            config,
            stats,
            grid,
            inference,
            progress: Progress::default(),
            config_hash,
            weights,
        })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn preconditioner(&self) -> Preconditioner {
        Preconditioner { sigma_data: self.config.sigma_data }
    }

    /// One optimizer step on `batch` with noise from substream `step`.
    pub fn train_step(&mut self, batch: &[&TrainingSample], lr: f64) -> Result<StepOutcome> {
        let key = self.progress.step;
        let noisy = draw_noise(batch, &self.config.schedule, self.config.seed, StreamTag::TrainStep, key)?;
        let pre = self.preconditioner();
        let (loss, mut grads) =
            loss_and_grads(&self.net, batch, &noisy, &pre, &self.weights, true).map_err(|e| match e {
                Error::Numerical { location, detail } => {
                    Error::Numerical { location: format!("{location}, step {key}"), detail }
                }
                e => e,
            })?;
        let grad_norm = clip_global_norm(&mut grads, self.config.clip_norm);
        let hyper = AdamHyper {
            lr,
            beta1: self.config.beta1,
            beta2: self.config.beta2,
            eps: self.config.eps,
            weight_decay: self.config.weight_decay,
        };
        optimizer_update(self.net.params_mut(), &grads, &mut self.adam, hyper)?;
        self.progress.step += 1;
        Ok(StepOutcome { loss, grad_norm })
    }

    /// Mean loss over `samples` at fixed noise draws (substream per sample index).
    pub fn validation_loss(&self, samples: &[TrainingSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Empty("validation samples"));
        }
        let pre = self.preconditioner();
        let mut total = 0.0;
        for (i, chunk) in samples.chunks(self.config.batch_size).enumerate() {
            let refs: Vec<&TrainingSample> = chunk.iter().collect();
            let noisy = draw_noise(&refs, &self.config.schedule, self.config.seed, StreamTag::Validation, i as u64)?;
            let (loss, _) = loss_and_grads(&self.net, &refs, &noisy, &pre, &self.weights, false)?;
            total += loss * chunk.len() as f64;
        }
        Ok(total / samples.len() as f64)
    }

    /// Runs one epoch: shuffles with substream `(seed, Shuffle, epoch)`, then
    /// steps through the batches.
    pub fn run_epoch(&mut self, train: &[TrainingSample], val: &[TrainingSample]) -> Result<EpochLog> {
        if train.is_empty() {
            return Err(Error::Empty("training samples"));
        }
        let start = Instant::now();
        let epoch = self.progress.epoch;
        let (stage, lr) = self.config.stage_of(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut substream(self.config.seed, StreamTag::Shuffle, epoch as u64, 0));
        let mut total = 0.0;
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &train[i]).collect();
            total += self.train_step(&batch, lr)?.loss * batch.len() as f64;
        }
        self.progress.epoch += 1;
        let val_loss = if val.is_empty() { None } else { Some(self.validation_loss(val)?) };
        Ok(EpochLog {
            epoch,
            stage,
            lr,
            train_loss: total / train.len() as f64,
            val_loss,
            wall_secs: start.elapsed().as_secs_f64(),
        })
    }

    /// Trains until `until` epochs are complete (default: the full schedule).
    pub fn fit(
        &mut self,
        train: &[TrainingSample],
        val: &[TrainingSample],
        until: Option<usize>,
        mut on_epoch: impl FnMut(&EpochLog),
    ) -> Result<()> {
        let end = until.unwrap_or(self.config.total_epochs()).min(self.config.total_epochs());
        while self.progress.epoch < end {
            let log = self.run_epoch(train, val)?;
            on_epoch(&log);
        }
        Ok(())
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            kind: CHECKPOINT_KIND.into(),
            net: self.net.config().clone(),
            grid: self.grid.clone(),
            stats: self.stats.clone(),
            train: self.config.clone(),
            inference: self.inference,
            progress: self.progress,
            adam_step: self.adam.step,
            config_hash: self.config_hash.clone(),
        }
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>> {
        let mut store = ParamStore::new();
        for (prefix, s) in [("param", self.net.params()), ("adam_m", &self.adam.m), ("adam_v", &self.adam.v)] {
            for p in s.iter() {
                store.insert(format!("{prefix}/{}", p.name), p.value.clone());
            }
        }
        let mut out = Vec::new();
        write_checkpoint(&mut out, &serde_json::to_value(self.meta())?, &store)?;
        Ok(out)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.checkpoint_bytes()?)?;
        Ok(())
    }

    /// Restores a trainer; `expected`, when given, must match the stored architecture.
    pub fn from_checkpoint(bytes: &[u8], expected: Option<&NetConfig>) -> Result<Self> {
        let (meta, store) = read_checkpoint::<f32>(bytes)?;
        let meta: CheckpointMeta = serde_json::from_value(meta)?;
        meta.check(expected)?;
        let split = |prefix: &str| {
            let mut s = ParamStore::new();
            for p in store.iter() {
                if let Some(name) = p.name.strip_prefix(prefix).and_then(|n| n.strip_prefix('/')) {
                    s.insert(name, p.value.clone());
                }
            }
            s
        };
        let net = CondDenoiserNet::with_params(meta.net.clone(), split("param"))?;
        let (m, v) = (split("adam_m"), split("adam_v"));
        if !net.params().same_layout(&m) || !net.params().same_layout(&v) {
            return Err(Error::Incompatible("optimizer moments do not match the parameters".into()));
        }
        let weights = LossWeights::new(&meta.grid, &meta.stats, meta.train.lambda)?;
        Ok(Trainer {
            net,
            adam: AdamState { step: meta.adam_step, m, v },
            config: meta.train,
            stats: meta.stats,
            grid: meta.grid,
            inference: meta.inference,
            progress: meta.progress,
            config_hash: meta.config_hash,
            weights,
        })
    }
}

pub const CHECKPOINT_KIND: &str = "lam-denoiser/1";

/// Checkpoint metadata stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub net: NetConfig,
    pub grid: GridSpec,
    pub stats: NormStats,
    pub train: TrainConfig,
    pub inference: NoiseSchedule,
    pub progress: Progress,
    pub adam_step: u64,
    pub config_hash: String,
}

impl CheckpointMeta {
    fn check(&self, expected: Option<&NetConfig>) -> Result<()> {
        if self.kind != CHECKPOINT_KIND {
            return Err(Error::Incompatible(format!("checkpoint kind {:?}", self.kind)));
        }
        if let Some(e) = expected {
            if e != &self.net {
                return Err(Error::Incompatible(format!(
                    "checkpoint architecture {:?} differs from the requested {:?}",
                    self.net, e
                )));
            }
        }
        Ok(())
    }
}

/// Trained network plus what inference needs from its checkpoint.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub net: CondDenoiserNet<f32>,
    pub meta: CheckpointMeta,
    pub sha256: String,
}

pub fn load_model(bytes: &[u8]) -> Result<LoadedModel> {
    let trainer = Trainer::from_checkpoint(bytes, None)?;
    let meta = trainer.meta();
    Ok(LoadedModel { net: trainer.net, meta, sha256: sha256_hex(bytes) })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_log_header<W: Write>(w: &mut W) -> Result<()> {
    writeln!(w, "{}", EpochLog::CSV_HEADER)?;
    Ok(())
}
