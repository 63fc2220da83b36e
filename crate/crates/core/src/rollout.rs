//! Autoregressive ensemble forecasting.
//!
//! Each step standardizes `(X^{t−1}, X^t)`, assembles the conditioning with
//! the provider's `X_B^{t+1}`, samples an interior residual with the Heun
//! solver, decodes it and splices the provider's boundary at `t + 1` into the
//! result. Member `k` draws the initial latent of the step producing lead `t`
//! from [`member_rng`]`(seed, k, t)`, so members are independent of each other,
//! of ensemble size and of how the batch is split into chunks.

use std::sync::Arc;

use lam_tensor::container;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::edm::{heun_sample, NoiseSchedule, Preconditioner, RawDenoiser};
use crate::error::{Error, Result};
use crate::grid::{
    assemble_conditioning, residual_decode, splice, BoundaryState, ConditioningPair, ForcingFrame, FutureBoundaryMode,
    GridSpec, NormStats, RegionMask, StaticFields, StepInputs, WeatherState,
};
use crate::rng::member_rng;
use crate::synthetic::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    /// The true boundary at every lead, including `X_B^{t+1}`.
    Truth,
    /// `X_B^{t+1}` replaced by `X_B^t` at input assembly.
    NoFuture,
}

impl std::str::FromStr for BoundaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truth" => Ok(BoundaryKind::Truth),
            "no-future" => Ok(BoundaryKind::NoFuture),
            _ => Err(Error::Config(format!("unknown boundary provider {s:?}"))),
        }
    }
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::Truth => "truth",
            BoundaryKind::NoFuture => "no-future",
        }
    }
}

/// Source of boundary values and forcings by lead time.
pub trait BoundaryProvider: Sync {
    fn kind(&self) -> BoundaryKind;

    /// Boundary of the state at `lead`; spliced into forecasts at that lead.
    fn boundary(&self, lead: i64) -> Result<&BoundaryState>;

    /// Future boundary fed to the step that produces `lead`.
    fn future_boundary(&self, lead: i64) -> Result<&BoundaryState> {
        match self.kind() {
            BoundaryKind::Truth => self.boundary(lead),
            BoundaryKind::NoFuture => self.boundary(lead - 1),
        }
    }

    fn forcing(&self, lead: i64) -> Result<&ForcingFrame>;

    fn statics(&self) -> &StaticFields;
}

/// Boundary provider reading a stored trajectory; lead 0 is state `init`.
#[derive(Debug, Clone)]
pub struct TrajectoryBoundary<'a> {
    traj: &'a Trajectory,
    init: usize,
    kind: BoundaryKind,
    boundaries: Vec<BoundaryState>,
}

impl<'a> TrajectoryBoundary<'a> {
    pub fn new(traj: &'a Trajectory, init: usize, kind: BoundaryKind, mask: &RegionMask) -> Result<Self> {
        if init == 0 || init >= traj.len() {
            return Err(Error::Index { index: init, max: traj.len().saturating_sub(1) });
        }
        let boundaries = traj
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut b = BoundaryState::from_state(s, mask);
                b.lead_time = i as i64 - init as i64;
                b
            })
            .collect();
        Ok(TrajectoryBoundary { traj, init, kind, boundaries })
    }

    fn index(&self, lead: i64) -> Result<usize> {
        let i = self.init as i64 + lead;
        if i < 0 || i >= self.traj.len() as i64 {
            return Err(Error::MissingBoundary { lead });
        }
        Ok(i as usize)
    }

    /// Truth states `X^{-1}, X^0`.
    pub fn initial_states(&self) -> (WeatherState, WeatherState) {
        let at = |lead: i64| {
            let s = &self.traj.states[(self.init as i64 + lead) as usize];
            WeatherState { values: s.values.clone(), lead_time: lead }
        };
        (at(-1), at(0))
    }

    /// Truth states for leads `−1..=steps`, when available.
    pub fn truth(&self, steps: usize) -> Result<Vec<WeatherState>> {
        (-1..=steps as i64)
            .map(|lead| {
                let i = self.index(lead)?;
                Ok(WeatherState { values: self.traj.states[i].values.clone(), lead_time: lead })
            })
            .collect()
    }
}

impl BoundaryProvider for TrajectoryBoundary<'_> {
    fn kind(&self) -> BoundaryKind {
        self.kind
    }

    fn boundary(&self, lead: i64) -> Result<&BoundaryState> {
        Ok(&self.boundaries[self.index(lead)?])
    }

    fn forcing(&self, lead: i64) -> Result<&ForcingFrame> {
        Ok(&self.traj.forcings[self.index(lead)?])
    }

    fn statics(&self) -> &StaticFields {
        &self.traj.statics
    }
}

/// Model, statistics and sampler settings shared by every forecast step.
#[derive(Clone, Copy)]
pub struct Forecaster<'a, M: ?Sized> {
    pub model: &'a M,
    pub stats: &'a NormStats,
    pub mask: &'a Arc<RegionMask>,
    pub schedule: NoiseSchedule,
    pub pre: Preconditioner,
}

fn standardize_array(values: &Array3<f64>, stats: &NormStats) -> Array3<f64> {
    let mut out = values.clone();
    for (v, mut lane) in out.outer_iter_mut().enumerate() {
        lane.mapv_inplace(|x| (x - stats.mean[v]) / stats.std[v]);
    }
    out
}

fn with_context(e: Error, lead: i64) -> Error {
    match e {
        Error::Numerical { location, detail } => {
            Error::Numerical { location: format!("{location} (forecast lead {lead})"), detail }
        }
        e => e,
    }
}

impl<M: RawDenoiser<ConditioningPair> + Sync + ?Sized> Forecaster<'_, M> {
    /// Conditioning for the step producing `lead` from standardized inputs.
    fn conditioning(
        &self,
        prev: &WeatherState,
        curr: &WeatherState,
        provider: &dyn BoundaryProvider,
        lead: i64,
    ) -> Result<ConditioningPair> {
        let fb = provider.future_boundary(lead)?;
        let future = BoundaryState { values: standardize_array(&fb.values, self.stats), lead_time: lead };
        let inputs = StepInputs {
            prev,
            curr,
            future_boundary: Some(&future),
            forcings: [provider.forcing(lead - 2)?, provider.forcing(lead - 1)?, provider.forcing(lead)?],
            statics: provider.statics(),
        };
        assemble_conditioning(&inputs, self.mask, FutureBoundaryMode::Require)
    }

    /// One step for a batch of members: `states[k] = (X_k^{t−1}, X_k^t)` in
    /// physical units. Returns `X̂_k^{t+1}` per member.
    pub fn step_batch(
        &self,
        states: &[(&WeatherState, &WeatherState)],
        members: &[usize],
        provider: &dyn BoundaryProvider,
        seed: u64,
    ) -> Result<Vec<WeatherState>> {
        let Some((_, first)) = states.first() else {
            return Ok(Vec::new());
        };
        let lead = first.lead_time + 1;
        let mut curr_std = Vec::with_capacity(states.len());
        let mut conds = Vec::with_capacity(states.len());
        for (prev, curr) in states {
            let p = crate::grid::standardize(prev, self.stats)?;
            let c = crate::grid::standardize(curr, self.stats)?;
            conds.push(self.conditioning(&p, &c, provider, lead)?);
            curr_std.push(c);
        }
        let shape = {
            let b = self.mask.boundary_width();
            [self.stats.num_vars(), self.mask.height() - 2 * b, self.mask.width() - 2 * b]
        };
        let mut rngs: Vec<_> = members.iter().map(|&k| member_rng(seed, k, lead)).collect();
        let cond_refs: Vec<&ConditioningPair> = conds.iter().collect();
        let out = heun_sample(self.model, &self.pre, &self.schedule, shape, &cond_refs, &mut rngs)
            .map_err(|e| with_context(e, lead))?;
        let boundary = &provider.boundary(lead)?.values;
        out.samples
            .iter()
            .zip(&curr_std)
            .map(|(r, c)| {
                let curr_i = self.mask.interior_block(c.values.view());
                let mut next = residual_decode(r.view(), curr_i.view(), self.stats)?;
                for (v, mut lane) in next.outer_iter_mut().enumerate() {
                    lane.mapv_inplace(|x| x * self.stats.std[v] + self.stats.mean[v]);
                }
                let full = splice(next.view(), boundary, self.mask)?;
                WeatherState::new(full, lead).map_err(|e| with_context(e, lead))
            })
            .collect()
    }

    /// Single-member step `X̂^{t+1}` using member stream `member`.
    pub fn forecast_step(
        &self,
        prev: &WeatherState,
        curr: &WeatherState,
        provider: &dyn BoundaryProvider,
        seed: u64,
        member: usize,
    ) -> Result<WeatherState> {
        Ok(self.step_batch(&[(prev, curr)], &[member], provider, seed)?.remove(0))
    }
}

/// Settings of an ensemble rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutSettings {
    pub steps: usize,
    pub members: usize,
    pub seed: u64,
    /// Members evaluated together in one batched network call.
    pub chunk: usize,
    /// Run chunks on separate threads.
    pub threads: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleForecast {
    /// `members[k][t]` is member `k` at lead `t + 1`.
    pub members: Vec<Vec<WeatherState>>,
    pub seed: u64,
    pub schedule: NoiseSchedule,
    pub provider: BoundaryKind,
    pub wall_secs: f64,
}

/// Rolls out `settings.members` members for `settings.steps` steps.
///
/// With `teacher` set (truth states for leads `−1..=steps`), each step
/// consumes the true `X^{t−1}, X^t` instead of the member's own forecasts.
pub fn ensemble_forecast<M: RawDenoiser<ConditioningPair> + Sync + ?Sized>(
    forecaster: &Forecaster<'_, M>,
    init: (&WeatherState, &WeatherState),
    provider: &dyn BoundaryProvider,
    settings: &RolloutSettings,
    teacher: Option<&[WeatherState]>,
) -> Result<EnsembleForecast> {
    if settings.steps == 0 || settings.members == 0 || settings.chunk == 0 {
        return Err(Error::Config("rollout needs steps, members and chunk size ≥ 1".into()));
    }
    if let Some(t) = teacher {
        if t.len() < settings.steps + 1 {
            return Err(Error::dim(
                "teacher-forced rollout",
                format!("{} truth states for {} steps", t.len(), settings.steps),
            ));
        }
    }
    let start = std::time::Instant::now();
    let ids: Vec<usize> = (0..settings.members).collect();
    let run_chunk = |chunk: &[usize]| -> Result<Vec<Vec<WeatherState>>> {
        let n = chunk.len();
        let mut hist: Vec<(WeatherState, WeatherState)> = (0..n)
            .map(|_| {
                let mut p = init.0.clone();
                let mut c = init.1.clone();
                p.lead_time = -1;
                c.lead_time = 0;
                (p, c)
            })
            .collect();
        let mut out: Vec<Vec<WeatherState>> = vec![Vec::with_capacity(settings.steps); n];
        for t in 0..settings.steps {
            let inputs: Vec<(&WeatherState, &WeatherState)> = match teacher {
                Some(truth) => vec![(&truth[t], &truth[t + 1]); n],
                None => hist.iter().map(|(p, c)| (p, c)).collect(),
            };
            let next = forecaster.step_batch(&inputs, chunk, provider, settings.seed)?;
            for (k, x) in next.into_iter().enumerate() {
                out[k].push(x.clone());
                let (p, c) = &mut hist[k];
                *p = std::mem::replace(c, x);
            }
        }
        Ok(out)
    };
    let chunks: Vec<&[usize]> = ids.chunks(settings.chunk).collect();
    let results: Vec<Result<Vec<Vec<WeatherState>>>> = if settings.threads && chunks.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunks.iter().map(|c| s.spawn(|| run_chunk(c))).collect();
            handles.into_iter().map(|h| h.join().expect("rollout thread panicked")).collect()
        })
    } else {
        chunks.iter().map(|c| run_chunk(c)).collect()
    };
    let mut members = Vec::with_capacity(settings.members);
    for r in results {
        members.extend(r?);
    }
    Ok(EnsembleForecast {
        members,
        seed: settings.seed,
        schedule: forecaster.schedule,
        provider: provider.kind(),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Single-trajectory rollout of `steps` steps (member stream 0).
pub fn rollout<M: RawDenoiser<ConditioningPair> + Sync + ?Sized>(
    forecaster: &Forecaster<'_, M>,
    init: (&WeatherState, &WeatherState),
    provider: &dyn BoundaryProvider,
    steps: usize,
    seed: u64,
) -> Result<Vec<WeatherState>> {
    let settings = RolloutSettings { steps, members: 1, seed, chunk: 1, threads: false };
    Ok(ensemble_forecast(forecaster, init, provider, &settings, None)?.members.remove(0))
}

pub const FORECAST_FORMAT: &str = "lam-forecast/1";

/// One initial condition of a forecast file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastSample {
    pub trajectory: usize,
    pub init: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastHeader {
    pub format: String,
    pub grid: GridSpec,
    pub samples: Vec<ForecastSample>,
    pub members: usize,
    pub steps: usize,
    pub seed: u64,
    /// Stream rule for member `k`, lead `t`: `member_rng(seed, k, t)`.
    pub member_streams: String,
    pub schedule: NoiseSchedule,
    pub provider: BoundaryKind,
    pub split: String,
    pub checkpoint_sha256: String,
    pub config_hash: String,
    /// Payload layout, outermost first.
    pub layout: Vec<String>,
}

/// Forecasts for several initial conditions; `forecasts[s]` belongs to `header.samples[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastFile {
    pub header: ForecastHeader,
    pub forecasts: Vec<Vec<Vec<Array3<f64>>>>,
}

impl ForecastFile {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        let shape = [h.grid.num_vars(), h.grid.height, h.grid.width];
        let mut out = Vec::new();
        container::write_header(&mut out, h)?;
        let mut values = Vec::new();
        for members in &self.forecasts {
            if members.len() != h.members || members.iter().any(|m| m.len() != h.steps) {
                return Err(Error::dim("forecast file", "member or step count differs from the header"));
            }
            for state in members.iter().flatten() {
                if state.shape() != shape {
                    return Err(Error::dim("forecast file", format!("state {:?}, grid {shape:?}", state.shape())));
                }
                values.extend(state.iter().map(|&v| v as f32));
            }
        }
        container::write_f32s(&mut out, values)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload): (ForecastHeader, _) = container::split(bytes)?;
        if header.format != FORECAST_FORMAT {
            return Err(Error::Format(format!("unsupported forecast format {:?}", header.format)));
        }
        header.grid.validate()?;
        let g = &header.grid;
        let per = g.num_vars() * g.height * g.width;
        let total = header.samples.len() * header.members * header.steps * per;
        if payload.len() != 4 * total {
            return Err(Error::Format(format!("payload has {} bytes, expected {}", payload.len(), 4 * total)));
        }
        let values = container::read_f32s(payload, 0, total)?;
        let mut chunks = values.chunks_exact(per);
        let mut forecasts = Vec::with_capacity(header.samples.len());
        for _ in 0..header.samples.len() {
            let mut members = Vec::with_capacity(header.members);
            for _ in 0..header.members {
                let states = (0..header.steps)
                    .map(|_| {
                        let c = chunks.next().expect("sized payload");
                        Array3::from_shape_vec(
                            (g.num_vars(), g.height, g.width),
                            c.iter().map(|&v| f64::from(v)).collect(),
                        )
                        .expect("sized chunk")
                    })
                    .collect();
                members.push(states);
            }
            forecasts.push(members);
        }
        Ok(ForecastFile { header, forecasts })
    }
}
