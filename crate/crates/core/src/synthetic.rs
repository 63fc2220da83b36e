//! Closed-form toy atmosphere.
//!
//! A scalar field θ is carried by a solid-body rotation about the grid centre.
//! It is a sum of Gaussian blobs whose widths grow diffusively, plus a
//! spatially uniform diurnal oscillation. Winds are the rotation itself. The
//! rotation rate can oscillate with the diurnal cycle so that the wind fields
//! also evolve in time:
//!
//! ```text
//! ω(t) = ω_rot · (1 + m · sin(2πt/P))
//! φ(t) = ∫₀ᵗ ω = ω_rot · (t + m·P/(2π) · (1 − cos(2πt/P)))
//! (u, v) = ω(t) · (−(y − y_c), x − x_c)
//! θ = θ₀ + A·sin(2πt/P) + Σᵢ aᵢ · wᵢ²/sᵢ² · exp(−|p − Rφ pᵢ|² / (2sᵢ²)),   sᵢ² = wᵢ² + 2κt
//! ```
//!
//! With `m = 0` this is exactly the advection–diffusion solution for a
//! constant solid-body wind. Coordinates are cell indices: `x` is the column,
//! `y` the row.

use std::f64::consts::TAU;
use std::sync::Arc;

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ForcingFrame, GridSpec, StaticFields, WeatherState};
use crate::rng::{substream, StreamTag};

pub const VAR_NAMES: [&str; 3] = ["theta", "u", "v"];
pub const FORCING_NAMES: [&str; 5] = ["sin_day", "cos_day", "sin_year", "cos_year", "flux"];
/// `(sin, cos)` channel pairs of the forcing frames.
pub const FORCING_PAIRS: [(usize, usize); 2] = [(0, 1), (2, 3)];
/// Length of the slow annual cycle in diurnal periods.
pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyWorldConfig {
    pub grid: GridSpec,
    /// Mean rotation rate, radians per step.
    pub omega_rot: f64,
    /// Diffusion coefficient, cells² per step.
    pub kappa: f64,
    pub diurnal_amplitude: f64,
    /// Diurnal period in steps.
    pub diurnal_period: f64,
    /// Relative diurnal modulation `m` of the rotation rate.
    pub wind_modulation: f64,
    pub theta_base: f64,
    pub blobs: Vec<Blob>,
    /// Absolute time of the first state, in steps.
    pub start_time: f64,
    /// Number of states generated.
    pub steps: usize,
    /// Observation noise std in units of each variable's trajectory std.
    pub noise_std: f64,
    pub seed: u64,
}

pub fn toy_grid() -> GridSpec {
    GridSpec::new(48, 48, 4, VAR_NAMES.iter().map(|s| s.to_string()).collect(), vec![1.0, 0.1, 0.1], 3.0)
        .expect("toy grid is valid")
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        ToyWorldConfig {
            grid: toy_grid(),
            omega_rot: TAU / 48.0,
            kappa: 0.05,
            diurnal_amplitude: 0.5,
            diurnal_period: 8.0,
            wind_modulation: 0.3,
            theta_base: 0.0,
            blobs: vec![
                Blob { x: 14.0, y: 20.0, width: 4.0, amplitude: 2.0 },
                Blob { x: 32.0, y: 12.0, width: 3.0, amplitude: -1.5 },
                Blob { x: 30.0, y: 34.0, width: 5.0, amplitude: 1.0 },
            ],
            start_time: 0.0,
            steps: 24,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl ToyWorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.grid.num_vars() != 3 {
            return Err(Error::Config("the toy world has exactly 3 variables".into()));
        }
        let finite = [
            self.omega_rot,
            self.kappa,
            self.diurnal_amplitude,
            self.diurnal_period,
            self.wind_modulation,
            self.theta_base,
            self.start_time,
            self.noise_std,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("toy world parameters must be finite".into()));
        }
        if self.kappa < 0.0 {
            return Err(Error::Config("diffusion coefficient must be non-negative".into()));
        }
        if self.diurnal_period < 2.0 {
            return Err(Error::Config("diurnal period must be at least 2 steps".into()));
        }
        if self.start_time < 0.0 || self.noise_std < 0.0 {
            return Err(Error::Config("start time and noise std must be non-negative".into()));
        }
        if self.blobs.iter().any(|b| !(b.width > 0.0) || !b.amplitude.is_finite()) {
            return Err(Error::Config("blob widths must be positive".into()));
        }
        if self.steps < 2 {
            return Err(Error::Config("a trajectory needs at least 2 states".into()));
        }
        Ok(())
    }

    fn centre(&self) -> (f64, f64) {
        ((self.grid.width as f64 - 1.0) / 2.0, (self.grid.height as f64 - 1.0) / 2.0)
    }

    /// Rotation angle accumulated since `t = 0`.
    pub fn rotation_angle(&self, t: f64) -> f64 {
        let p = self.diurnal_period;
        self.omega_rot * (t + self.wind_modulation * p / TAU * (1.0 - (TAU * t / p).cos()))
    }

    /// Instantaneous rotation rate.
    pub fn rotation_rate(&self, t: f64) -> f64 {
        self.omega_rot * (1.0 + self.wind_modulation * (TAU * t / self.diurnal_period).sin())
    }
}

/// `(θ, u, v)` at position `(x, y)` and absolute time `t`.
pub fn analytic_field(config: &ToyWorldConfig, x: f64, y: f64, t: f64) -> (f64, f64, f64) {
    let (xc, yc) = config.centre();
    let phi = config.rotation_angle(t);
    let (sin, cos) = phi.sin_cos();
    let mut theta = config.theta_base + config.diurnal_amplitude * (TAU * t / config.diurnal_period).sin();
    for b in &config.blobs {
        let (dx, dy) = (b.x - xc, b.y - yc);
        let bx = xc + cos * dx - sin * dy;
        let by = yc + sin * dx + cos * dy;
        let w2 = b.width * b.width;
        let s2 = w2 + 2.0 * config.kappa * t;
        let r2 = (x - bx).powi(2) + (y - by).powi(2);
        theta += b.amplitude * (w2 / s2) * (-r2 / (2.0 * s2)).exp();
    }
    let rate = config.rotation_rate(t);
    (theta, -rate * (y - yc), rate * (x - xc))
}

/// Forcing frame at absolute time `t`, channels as in [`FORCING_NAMES`].
pub fn forcing_at(config: &ToyWorldConfig, t: f64) -> ForcingFrame {
    let (h, w) = (config.grid.height, config.grid.width);
    let day = TAU * t / config.diurnal_period;
    let year = day / DAYS_PER_YEAR;
    let channels = [day.sin(), day.cos(), year.sin(), year.cos(), day.sin().max(0.0)];
    ForcingFrame { values: Array3::from_shape_fn((channels.len(), h, w), |(c, _, _)| channels[c]) }
}

pub fn toy_statics(grid: &GridSpec) -> StaticFields {
    let (h, w) = (grid.height, grid.width);
    let topography = Array2::from_shape_fn((h, w), |(r, c)| {
        let (x, y) = (c as f64 / w as f64, r as f64 / h as f64);
        0.5 * (TAU * x).sin() * (TAU * y).cos() + 0.25 * (2.0 * TAU * (x + y)).cos()
    });
    StaticFields::new(&grid.region_mask(), topography).expect("topography matches grid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<WeatherState>,
    pub forcings: Vec<ForcingFrame>,
    pub statics: Arc<StaticFields>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl AsRef<[WeatherState]> for Trajectory {
    fn as_ref(&self) -> &[WeatherState] {
        &self.states
    }
}

/// Noise-free field samples at cell centres for absolute time `t`.
pub fn analytic_state(config: &ToyWorldConfig, t: f64) -> Array3<f64> {
    let (h, w) = (config.grid.height, config.grid.width);
    let mut values = Array3::zeros((3, h, w));
    for r in 0..h {
        for c in 0..w {
            let (th, u, v) = analytic_field(config, c as f64, r as f64, t);
            values[[0, r, c]] = th;
            values[[1, r, c]] = u;
            values[[2, r, c]] = v;
        }
    }
    values
}

/// Samples the analytic field for `steps` consecutive steps and adds
/// observation noise scaled by each variable's noise-free trajectory std.
pub fn generate_trajectory(config: &ToyWorldConfig) -> Result<Trajectory> {
    config.validate()?;
    let times: Vec<f64> = (0..config.steps).map(|k| config.start_time + k as f64).collect();
    let mut fields: Vec<Array3<f64>> = times.iter().map(|&t| analytic_state(config, t)).collect();
    if config.noise_std > 0.0 {
        let (_, std) = crate::grid::state_moments(3, fields.iter().map(|f| f.view()));
        let scale: Vec<f64> = std.iter().map(|&s| config.noise_std * if s > 0.0 { s } else { 1.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(crate::rng::stream_id(StreamTag::Observation, 0, 0));
        for f in &mut fields {
            for (v, mut lane) in f.axis_iter_mut(Axis(0)).enumerate() {
                for x in lane.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += scale[v] * z;
                }
            }
        }
    }
    let states = fields
        .into_iter()
        .enumerate()
        .map(|(k, values)| WeatherState::new(values, k as i64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        states,
        forcings: times.iter().map(|&t| forcing_at(config, t)).collect(),
        statics: Arc::new(toy_statics(&config.grid)),
    })
}

/// Randomized family of toy worlds, one per trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub world: ToyWorldConfig,
    pub trajectories: usize,
    pub blob_count: usize,
    pub width_range: (f64, f64),
    pub amplitude_range: (f64, f64),
    /// Start times are drawn uniformly from `[0, start_span)` steps.
    pub start_span: f64,
    /// Trajectory fractions of the train and validation splits; the rest is test.
    pub split_fractions: (f64, f64),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            world: ToyWorldConfig::default(),
            trajectories: 10,
            blob_count: 5,
            width_range: (2.5, 5.0),
            amplitude_range: (1.0, 2.0),
            start_span: 64.0,
            split_fractions: (0.7, 0.1),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        let (w0, w1) = self.width_range;
        let (a0, a1) = self.amplitude_range;
        if !(w0 > 0.0 && w1 >= w0 && a1 >= a0 && a0 >= 0.0) {
            return Err(Error::Config("blob width/amplitude ranges are invalid".into()));
        }
        if self.trajectories < 3 || self.blob_count == 0 {
            return Err(Error::Config("need at least 3 trajectories and 1 blob".into()));
        }
        if !(self.start_span >= 0.0) {
            return Err(Error::Config("start span must be non-negative".into()));
        }
        let (tr, va) = self.split_fractions;
        if !(tr > 0.0 && va >= 0.0 && tr + va < 1.0) {
            return Err(Error::Config("split fractions must leave a test split".into()));
        }
        let s = self.splits();
        if s.train.0 == s.train.1 || s.test.0 == s.test.1 {
            return Err(Error::Config("train and test splits must be nonempty".into()));
        }
        Ok(())
    }

    /// Trajectory index ranges `[start, end)`.
    pub fn splits(&self) -> Splits {
        let n = self.trajectories;
        let train = ((n as f64 * self.split_fractions.0).round() as usize).clamp(1, n);
        let val = ((n as f64 * self.split_fractions.1).round() as usize).min(n - train);
        Splits { train: (0, train), val: (train, train + val), test: (train + val, n) }
    }

    /// World of trajectory `k`: blobs, start time and noise seed are drawn
    /// from substream `(seed, Trajectory, k)`.
    pub fn trajectory_world(&self, k: usize) -> ToyWorldConfig {
        let mut rng = substream(self.seed, StreamTag::Trajectory, k as u64, 0);
        let g = &self.world.grid;
        let uniform = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        let blobs = (0..self.blob_count)
            .map(|_| {
                let x = uniform(&mut rng, 0.0, g.width as f64 - 1.0);
                let y = uniform(&mut rng, 0.0, g.height as f64 - 1.0);
                let width = uniform(&mut rng, self.width_range.0, self.width_range.1);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let amplitude = sign * uniform(&mut rng, self.amplitude_range.0, self.amplitude_range.1);
                Blob { x, y, width, amplitude }
            })
            .collect();
        let start_time = uniform(&mut rng, 0.0, self.start_span).floor();
        ToyWorldConfig { blobs, start_time, seed: rng.next_u64(), ..self.world.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: (usize, usize),
    pub val: (usize, usize),
    pub test: (usize, usize),
}

impl Splits {
    pub fn range(&self, split: Split) -> std::ops::Range<usize> {
        let (a, b) = match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        };
        a..b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// States `X⁰` repeated for leads `0..=lead`.
pub fn persistence_baseline(states: &[WeatherState], init: usize, lead: usize) -> Result<Vec<WeatherState>> {
    let x0 = states.get(init).ok_or(Error::Empty("persistence initial state"))?;
    Ok((0..=lead).map(|t| WeatherState { values: x0.values.clone(), lead_time: t as i64 }).collect())
}

/// Per-variable, per-cell time mean over every state of the training set.
pub fn climatology_baseline<S: AsRef<[WeatherState]>>(training: &[S]) -> Result<WeatherState> {
    let mut states = training.iter().flat_map(|t| t.as_ref().iter());
    let first = states.next().ok_or(Error::Empty("climatology training set"))?;
    let mut sum = first.values.clone();
    let mut n = 1.0;
    for s in states {
        if s.values.shape() != sum.shape() {
            return Err(Error::dim("climatology_baseline", "states of different shapes"));
        }
        sum += &s.values;
        n += 1.0;
    }
    WeatherState::new(sum / n, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_centre_at_time_zero_is_its_amplitude() {
        let cfg = ToyWorldConfig {
            blobs: vec![Blob { x: 10.0, y: 30.0, width: 3.0, amplitude: 1.7 }],
            diurnal_amplitude: 0.0,
            ..Default::default()
        };
        assert_eq!(analytic_field(&cfg, 10.0, 30.0, 0.0).0, 1.7);
    }

    #[test]
    fn winds_match_rotation_rate() {
        let cfg = ToyWorldConfig { wind_modulation: 0.0, ..Default::default() };
        let (_, u, v) = analytic_field(&cfg, 33.5, 23.5, 5.0);
        assert!((u - 0.0).abs() < 1e-15);
        assert!((v - cfg.omega_rot * 10.0).abs() < 1e-15);
    }

    #[test]
    fn rotation_angle_is_integral_of_rate() {
        let cfg = ToyWorldConfig::default();
        let (t, h) = (3.3, 1e-5);
        let num = (cfg.rotation_angle(t + h) - cfg.rotation_angle(t - h)) / (2.0 * h);
        assert!((num - cfg.rotation_rate(t)).abs() < 1e-9);
    }

    #[test]
    fn default_splits_are_seventy_ten_twenty() {
        let s = DatasetConfig::default().splits();
        assert_eq!((s.train, s.val, s.test), ((0, 7), (7, 8), (8, 10)));
    }
}
