//! End-to-end stages shared by the command-line tool, the examples and the
//! acceptance tests.

use std::sync::Arc;

use ndarray::Array3;

use crate::dataset::Dataset;
use crate::edm::Preconditioner;
use crate::error::{Error, Result};
use crate::grid::{ChannelLayout, NormStats, RegionMask};
use crate::metrics::{evaluate, MetricReport, Verification};
use crate::net::NetConfig;
use crate::rollout::{
    ensemble_forecast, BoundaryKind, ForecastFile, ForecastHeader, ForecastSample, Forecaster, RolloutSettings,
    TrajectoryBoundary, FORECAST_FORMAT,
};
use crate::synthetic::{climatology_baseline, persistence_baseline, Split};
use crate::training::{build_samples, EpochLog, LoadedModel, TrainConfig, Trainer, TrainingSample};

/// Network configuration matching a dataset's grid and channels.
pub fn net_config_for(dataset: &Dataset) -> NetConfig {
    let g = dataset.grid();
    let layout = ChannelLayout {
        d_x: g.num_vars(),
        d_f: dataset.header.forcing_names.len(),
        d_s: dataset.header.static_names.len(),
    };
    NetConfig::new(g.height, g.width, g.boundary_width, layout)
}

/// Training samples of every trajectory in `split`.
pub fn split_samples(dataset: &Dataset, split: Split, stats: &NormStats) -> Result<Vec<TrainingSample>> {
    let mask = Arc::new(dataset.grid().region_mask());
    let mut out = Vec::new();
    for t in dataset.split(split) {
        out.extend(build_samples(t, stats, &mask)?);
    }
    Ok(out)
}

/// Trains (or resumes) `trainer` on the dataset's train split, validating on
/// the validation split after every epoch.
pub fn train(
    trainer: &mut Trainer,
    dataset: &Dataset,
    until: Option<usize>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<()> {
    let train = split_samples(dataset, Split::Train, &trainer.stats)?;
    let val = split_samples(dataset, Split::Val, &trainer.stats)?;
    trainer.fit(&train, &val, until, on_epoch)
}

pub fn new_trainer(
    dataset: &Dataset,
    stats: &NormStats,
    net: NetConfig,
    config: TrainConfig,
    inference: crate::edm::NoiseSchedule,
    config_hash: String,
) -> Result<Trainer> {
    Trainer::new(net, config, dataset.grid().clone(), stats.clone(), inference, config_hash)
}

/// Initial conditions of a split: `inits_per_trajectory` starts per
/// trajectory at indices `1, 1 + stride, …`, each leaving room for `steps`
/// verifying states.
pub fn initial_conditions(
    dataset: &Dataset,
    split: Split,
    steps: usize,
    inits_per_trajectory: usize,
    stride: usize,
) -> Result<Vec<ForecastSample>> {
    let len = dataset.header.steps;
    let mut out = Vec::new();
    for trajectory in dataset.header.splits.range(split) {
        for k in 0..inits_per_trajectory {
            let init = 1 + k * stride.max(1);
            if init + steps < len {
                out.push(ForecastSample { trajectory, init });
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Config(format!("trajectories of {len} states cannot verify {steps} steps")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    pub split: Split,
    pub samples: Vec<ForecastSample>,
    pub settings: RolloutSettings,
    pub boundary: BoundaryKind,
    pub config_hash: String,
}

/// Ensemble forecasts from every requested initial condition.
pub fn forecast(model: &LoadedModel, dataset: &Dataset, req: &ForecastRequest) -> Result<ForecastFile> {
    let grid = dataset.grid();
    if grid != &model.meta.grid {
        return Err(Error::Incompatible("checkpoint was trained on a different grid".into()));
    }
    let mask = Arc::new(grid.region_mask());
    let forecaster = Forecaster {
        model: &model.net,
        stats: &model.meta.stats,
        mask: &mask,
        schedule: model.meta.inference,
        pre: Preconditioner { sigma_data: model.meta.train.sigma_data },
    };
    let mut forecasts = Vec::with_capacity(req.samples.len());
    for s in &req.samples {
        let traj = dataset
            .trajectories
            .get(s.trajectory)
            .ok_or(Error::Index { index: s.trajectory, max: dataset.trajectories.len().saturating_sub(1) })?;
        let provider = TrajectoryBoundary::new(traj, s.init, req.boundary, &mask)?;
        let (prev, curr) = provider.initial_states();
        let ens = ensemble_forecast(&forecaster, (&prev, &curr), &provider, &req.settings, None)?;
        forecasts.push(ens.members.into_iter().map(|m| m.into_iter().map(|x| x.values).collect()).collect());
    }
    Ok(ForecastFile {
        header: ForecastHeader {
            format: FORECAST_FORMAT.into(),
            grid: grid.clone(),
            samples: req.samples.clone(),
            members: req.settings.members,
            steps: req.settings.steps,
            seed: req.settings.seed,
            member_streams: "chacha8(seed), stream = 2<<56 | member<<24 | lead".into(),
            schedule: model.meta.inference,
            provider: req.boundary,
            split: format!("{:?}", req.split).to_lowercase(),
            checkpoint_sha256: model.sha256.clone(),
            config_hash: req.config_hash.clone(),
            layout: ["sample", "member", "lead", "variable", "row", "col"].map(String::from).to_vec(),
        },
        forecasts,
    })
}

fn truths(dataset: &Dataset, samples: &[ForecastSample], steps: usize) -> Result<Vec<Vec<Array3<f64>>>> {
    samples
        .iter()
        .map(|s| {
            let traj = dataset
                .trajectories
                .get(s.trajectory)
                .ok_or(Error::Index { index: s.trajectory, max: dataset.trajectories.len().saturating_sub(1) })?;
            (1..=steps)
                .map(|lead| {
                    traj.states
                        .get(s.init + lead)
                        .map(|x| x.values.clone())
                        .ok_or(Error::MissingBoundary { lead: lead as i64 })
                })
                .collect()
        })
        .collect()
}

/// Scores of a forecast file against the dataset's truth.
pub fn evaluate_file(file: &ForecastFile, dataset: &Dataset, stats: &NormStats) -> Result<MetricReport> {
    if &file.header.grid != dataset.grid() {
        return Err(Error::Incompatible("forecasts and dataset use different grids".into()));
    }
    let steps = file.header.steps;
    let truth = truths(dataset, &file.header.samples, steps)?;
    let leads: Vec<usize> = (1..=steps).collect();
    let v = Verification {
        var_names: &dataset.grid().var_names,
        leads: &leads,
        forecasts: &file.forecasts,
        truths: &truth,
    };
    evaluate(&v, stats, &RegionMask::new(dataset.grid().height, dataset.grid().width, dataset.grid().boundary_width))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Persistence,
    Climatology,
}

impl std::str::FromStr for Baseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persistence" => Ok(Baseline::Persistence),
            "climatology" => Ok(Baseline::Climatology),
            _ => Err(Error::Config(format!("unknown baseline {s:?}"))),
        }
    }
}

/// One-member baseline forecasts from the given initial conditions, scored
/// like a model forecast.
pub fn baseline_report(
    dataset: &Dataset,
    baseline: Baseline,
    samples: &[ForecastSample],
    steps: usize,
    stats: &NormStats,
) -> Result<MetricReport> {
    let clim = climatology_baseline(dataset.split(Split::Train))?;
    let forecasts = samples
        .iter()
        .map(|s| {
            let traj = &dataset.trajectories[s.trajectory];
            let states = match baseline {
                Baseline::Persistence => {
                    persistence_baseline(&traj.states, s.init, steps)?.into_iter().skip(1).map(|x| x.values).collect()
                }
                Baseline::Climatology => vec![clim.values.clone(); steps],
            };
            Ok(vec![states])
        })
        .collect::<Result<Vec<_>>>()?;
    let file = ForecastFile {
        header: ForecastHeader {
            format: FORECAST_FORMAT.into(),
            grid: dataset.grid().clone(),
            samples: samples.to_vec(),
            members: 1,
            steps,
            seed: 0,
            member_streams: String::new(),
            schedule: crate::edm::NoiseSchedule::inference(),
            provider: BoundaryKind::Truth,
            split: String::new(),
            checkpoint_sha256: String::new(),
            config_hash: String::new(),
            layout: Vec::new(),
        },
        forecasts,
    };
    evaluate_file(&file, dataset, stats)
}

/// Mean over `leads` of one score of `variable`.
pub fn mean_over_leads(
    report: &MetricReport,
    variable: &str,
    leads: std::ops::RangeInclusive<usize>,
    f: impl Fn(&crate::metrics::MetricRow) -> f64,
) -> Option<f64> {
    let vals: Vec<f64> = leads.map(|l| report.get(variable, l).map(&f)).collect::<Option<_>>()?;
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}
