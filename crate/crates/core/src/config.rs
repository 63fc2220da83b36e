//! Flat `key = value` run configuration.
//!
//! Every key is listed in [`REGISTRY`] with its default; unknown or repeated
//! keys are rejected. The configuration hash is the SHA-256 of the canonical
//! rendering (every registry key in order, with its effective value), so two
//! files that differ only in comments, ordering or explicitly restated
//! defaults hash the same.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::edm::NoiseSchedule;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::net::NetConfig;
use crate::rollout::{BoundaryKind, RolloutSettings};
use crate::synthetic::{DatasetConfig, ToyWorldConfig, VAR_NAMES};
use crate::training::{LambdaMode, Stage, TrainConfig};

pub struct Entry {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

macro_rules! registry {
    ($($key:literal = $default:literal : $doc:literal,)*) => {
        pub const REGISTRY: &[Entry] = &[$(Entry { key: $key, default: $default, doc: $doc },)*];
    };
}

registry! {
    "world.width" = "48" : "grid columns",
    "world.height" = "48" : "grid rows",
    "world.boundary_width" = "4" : "boundary frame width in cells",
    "world.dt_hours" = "3" : "simulated hours per step",
    "world.level_weights" = "1.0,0.1,0.1" : "loss weight per variable (theta, u, v)",
    "world.omega_rot" = "0.1308996938995747" : "mean rotation rate, radians per step",
    "world.kappa" = "0.05" : "diffusion coefficient, cells^2 per step",
    "world.diurnal_amplitude" = "0.5" : "amplitude of the diurnal theta term",
    "world.diurnal_period" = "8" : "diurnal period in steps",
    "world.wind_modulation" = "0.3" : "relative diurnal modulation of the rotation rate",
    "world.theta_base" = "0" : "constant theta offset",
    "world.steps" = "24" : "states per trajectory",
    "world.noise_std" = "0.01" : "observation noise std relative to each variable's std",
    "data.trajectories" = "10" : "number of trajectories",
    "data.blob_count" = "5" : "Gaussian blobs per trajectory",
    "data.width_min" = "2.5" : "smallest blob width in cells",
    "data.width_max" = "5" : "largest blob width in cells",
    "data.amplitude_min" = "1" : "smallest blob amplitude magnitude",
    "data.amplitude_max" = "2" : "largest blob amplitude magnitude",
    "data.start_span" = "64" : "start times are drawn from [0, start_span) steps",
    "data.train_fraction" = "0.7" : "fraction of trajectories used for training",
    "data.val_fraction" = "0.1" : "fraction of trajectories used for validation",
    "data.seed" = "0" : "master seed of the generator",
    "schedule.train.sigma_min" = "0.02" : "smallest training noise level",
    "schedule.train.sigma_max" = "88" : "largest training noise level",
    "schedule.train.rho" = "7" : "training schedule curvature",
    "schedule.train.steps" = "20" : "noise levels in the training ladder",
    "schedule.infer.sigma_min" = "0.03" : "smallest sampling noise level",
    "schedule.infer.sigma_max" = "80" : "largest sampling noise level",
    "schedule.infer.rho" = "7" : "sampling schedule curvature",
    "schedule.infer.steps" = "20" : "sampler steps",
    "model.sigma_data" = "1" : "data scale of the preconditioner",
    "model.latent" = "32" : "encoder output channels",
    "model.width1" = "32" : "U-Net channels at full resolution",
    "model.width2" = "64" : "U-Net channels at half resolution",
    "model.frequencies" = "32" : "noise embedding frequencies",
    "model.base_period" = "16" : "longest noise embedding period",
    "model.embed" = "128" : "noise embedding width",
    "model.max_groups" = "8" : "largest group count of group normalization",
    "train.stage_epochs" = "60,40,20" : "epochs of each learning-rate stage",
    "train.stage_lr" = "1e-3,1e-4,1e-5" : "learning rate of each stage",
    "train.beta1" = "0.9" : "AdamW first-moment decay",
    "train.beta2" = "0.95" : "AdamW second-moment decay",
    "train.eps" = "1e-8" : "AdamW denominator offset",
    "train.weight_decay" = "0.1" : "decoupled weight decay",
    "train.batch_size" = "8" : "samples per optimizer step",
    "train.clip_norm" = "1" : "global gradient norm limit",
    "train.lambda" = "inverse-variance" : "per-variable residual weighting: inverse-variance or unit",
    "train.seed" = "0" : "seed for initialization, shuffling and training noise",
    "rollout.members" = "5" : "ensemble members",
    "rollout.steps" = "19" : "autoregressive steps",
    "rollout.seed" = "0" : "seed of the member noise streams",
    "rollout.boundary" = "truth" : "boundary provider: truth or no-future",
    "rollout.split" = "test" : "split whose trajectories are forecast",
    "rollout.inits_per_trajectory" = "1" : "initial conditions per trajectory",
    "rollout.init_stride" = "2" : "steps between initial conditions of one trajectory",
    "rollout.chunk" = "5" : "members evaluated per batched network call",
    "rollout.threads" = "false" : "evaluate member chunks on separate threads",
    "report.width" = "640" : "plot width in pixels",
    "report.height" = "400" : "plot height in pixels",
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: REGISTRY.iter().map(|e| (e.key, e.default.to_string())).collect() }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key} = {value:?} is not a valid value")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse(key, v)).collect()
}

impl RunConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: {k} given twice", i + 1)));
            }
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let entry =
            REGISTRY.iter().find(|e| e.key == key).ok_or_else(|| Error::Config(format!("unknown key {key:?}")))?;
        self.values.insert(entry.key, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("{key} is not registered"))
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T> {
        parse(key, self.get(key))
    }

    /// Builds every typed section once so that bad values fail early.
    pub fn validate(&self) -> Result<()> {
        self.dataset()?.validate()?;
        self.train()?.validate()?;
        self.inference_schedule()?.validate()?;
        self.rollout()?;
        self.boundary()?;
        self.split()?;
        let _: (usize, usize) = (self.num("report.width")?, self.num("report.height")?);
        let _: (usize, usize, usize, usize, usize, usize) = (
            self.num("model.latent")?,
            self.num("model.width1")?,
            self.num("model.width2")?,
            self.num("model.frequencies")?,
            self.num("model.embed")?,
            self.num("model.max_groups")?,
        );
        let _: f64 = self.num("model.base_period")?;
        Ok(())
    }

    /// Canonical text: every key in registry order.
    pub fn canonical(&self) -> String {
        REGISTRY.iter().map(|e| format!("{} = {}\n", e.key, self.get(e.key))).collect()
    }

    pub fn hash(&self) -> String {
        crate::training::sha256_hex(self.canonical().as_bytes())
    }

    /// Documented template with every key at its default.
    pub fn template() -> String {
        REGISTRY.iter().map(|e| format!("# {}\n{} = {}\n", e.doc, e.key, e.default)).collect()
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.num("world.width")?,
            self.num("world.height")?,
            self.num("world.boundary_width")?,
            VAR_NAMES.iter().map(|s| s.to_string()).collect(),
            parse_list("world.level_weights", self.get("world.level_weights"))?,
            self.num("world.dt_hours")?,
        )
    }

    pub fn world(&self) -> Result<ToyWorldConfig> {
        Ok(ToyWorldConfig {
            grid: self.grid()?,
            omega_rot: self.num("world.omega_rot")?,
            kappa: self.num("world.kappa")?,
            diurnal_amplitude: self.num("world.diurnal_amplitude")?,
            diurnal_period: self.num("world.diurnal_period")?,
            wind_modulation: self.num("world.wind_modulation")?,
            theta_base: self.num("world.theta_base")?,
            blobs: Vec::new(),
            start_time: 0.0,
            steps: self.num("world.steps")?,
            noise_std: self.num("world.noise_std")?,
            seed: 0,
        })
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        Ok(DatasetConfig {
            world: self.world()?,
            trajectories: self.num("data.trajectories")?,
            blob_count: self.num("data.blob_count")?,
            width_range: (self.num("data.width_min")?, self.num("data.width_max")?),
            amplitude_range: (self.num("data.amplitude_min")?, self.num("data.amplitude_max")?),
            start_span: self.num("data.start_span")?,
            split_fractions: (self.num("data.train_fraction")?, self.num("data.val_fraction")?),
            seed: self.num("data.seed")?,
        })
    }

    fn schedule(&self, prefix: &str) -> Result<NoiseSchedule> {
        NoiseSchedule::new(
            self.num(&format!("{prefix}.sigma_min"))?,
            self.num(&format!("{prefix}.sigma_max"))?,
            self.num(&format!("{prefix}.rho"))?,
            self.num(&format!("{prefix}.steps"))?,
        )
    }

    pub fn training_schedule(&self) -> Result<NoiseSchedule> {
        self.schedule("schedule.train")
    }

    pub fn inference_schedule(&self) -> Result<NoiseSchedule> {
        self.schedule("schedule.infer")
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let epochs: Vec<usize> = parse_list("train.stage_epochs", self.get("train.stage_epochs"))?;
        let lrs: Vec<f64> = parse_list("train.stage_lr", self.get("train.stage_lr"))?;
        if epochs.len() != lrs.len() {
            return Err(Error::Config(format!("{} stage epoch counts but {} learning rates", epochs.len(), lrs.len())));
        }
        Ok(TrainConfig {
            stages: epochs.into_iter().zip(lrs).map(|(epochs, lr)| Stage { epochs, lr }).collect(),
            beta1: self.num("train.beta1")?,
            beta2: self.num("train.beta2")?,
            eps: self.num("train.eps")?,
            weight_decay: self.num("train.weight_decay")?,
            batch_size: self.num("train.batch_size")?,
            clip_norm: self.num("train.clip_norm")?,
            lambda: self.num::<LambdaMode>("train.lambda")?,
            schedule: self.training_schedule()?,
            sigma_data: self.num("model.sigma_data")?,
            seed: self.num("train.seed")?,
        })
    }

    /// Applies the `model.*` widths to a network configuration.
    pub fn apply_model(&self, mut net: NetConfig) -> Result<NetConfig> {
        net.latent = self.num("model.latent")?;
        net.widths = [self.num("model.width1")?, self.num("model.width2")?];
        net.frequencies = self.num("model.frequencies")?;
        net.base_period = self.num("model.base_period")?;
        net.embed = self.num("model.embed")?;
        net.max_groups = self.num("model.max_groups")?;
        net.validate()?;
        Ok(net)
    }

    pub fn rollout(&self) -> Result<RolloutSettings> {
        let s = RolloutSettings {
            steps: self.num("rollout.steps")?,
            members: self.num("rollout.members")?,
            seed: self.num("rollout.seed")?,
            chunk: self.num("rollout.chunk")?,
            threads: self.num("rollout.threads")?,
        };
        if s.steps == 0 || s.members == 0 || s.chunk == 0 {
            return Err(Error::Config("rollout steps, members and chunk must be positive".into()));
        }
        let _: (usize, usize) = (self.num("rollout.inits_per_trajectory")?, self.num("rollout.init_stride")?);
        Ok(s)
    }

    pub fn boundary(&self) -> Result<BoundaryKind> {
        self.num("rollout.boundary")
    }

    pub fn split(&self) -> Result<crate::synthetic::Split> {
        self.num("rollout.split")
    }

    pub fn inits(&self) -> Result<(usize, usize)> {
        Ok((self.num("rollout.inits_per_trajectory")?, self.num("rollout.init_stride")?))
    }

    pub fn plot_size(&self) -> Result<(usize, usize)> {
        Ok((self.num("report.width")?, self.num("report.height")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_template() {
        let cfg = RunConfig::parse(&RunConfig::template()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.hash(), RunConfig::default().hash());
    }

    #[test]
    fn unknown_and_repeated_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("world.colour = red"), Err(Error::Config(_))));
        assert!(RunConfig::parse("train.seed = 1\ntrain.seed = 2").is_err());
        assert!(RunConfig::parse("train.seed = minus one").is_err());
    }

    #[test]
    fn overrides_change_the_hash() {
        let a = RunConfig::parse("train.seed = 3 # comment").unwrap();
        assert_eq!(a.train().unwrap().seed, 3);
        assert_ne!(a.hash(), RunConfig::default().hash());
    }

    #[test]
    fn default_sections_match_library_defaults() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train().unwrap(), TrainConfig::default());
        assert_eq!(cfg.inference_schedule().unwrap(), NoiseSchedule::inference());
        let ds = cfg.dataset().unwrap();
        let lib = DatasetConfig::default();
        assert_eq!(ds.world.grid, lib.world.grid);
        assert_eq!(ds.world.omega_rot, lib.world.omega_rot);
        assert_eq!((ds.trajectories, ds.blob_count, ds.seed), (lib.trajectories, lib.blob_count, lib.seed));
    }
}
