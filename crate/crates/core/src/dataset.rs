//! Dataset files.
//!
//! One JSON header line, a zero byte, then little-endian `f32` sections:
//! states `[trajectory, time, variable, row, col]`, forcings
//! `[trajectory, time, forcing, row, col]` and statics `[static, row, col]`.
//! Generated values are rounded to `f32` before they are used anywhere, so a
//! dataset in memory equals the same dataset read back from disk.

use std::path::Path;
use std::sync::Arc;

use lam_tensor::container;
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{compute_norm_stats, ForcingFrame, GridSpec, NormStats, StaticFields, WeatherState, STATIC_NAMES};
use crate::synthetic::{generate_trajectory, DatasetConfig, Split, Splits, Trajectory, FORCING_NAMES};

pub const DATASET_FORMAT: &str = "lam-dataset/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset within the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub grid: GridSpec,
    pub forcing_names: Vec<String>,
    pub static_names: Vec<String>,
    pub stats: Option<NormStats>,
    pub trajectories: usize,
    pub steps: usize,
    pub start_times: Vec<f64>,
    pub splits: Splits,
    pub generator: Option<DatasetConfig>,
    pub config_hash: Option<String>,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub trajectories: Vec<Trajectory>,
}

fn round_f32(mut a: Array3<f64>) -> Array3<f64> {
    a.mapv_inplace(|v| v as f32 as f64);
    a
}

fn sections(grid: &GridSpec, n_traj: usize, steps: usize, d_f: usize, d_s: usize) -> Vec<Section> {
    let (h, w) = (grid.height, grid.width);
    let states = vec![n_traj, steps, grid.num_vars(), h, w];
    let forcings = vec![n_traj, steps, d_f, h, w];
    let statics = vec![d_s, h, w];
    let mut offset = 0;
    let mut out = Vec::new();
    for (name, shape) in [("states", states), ("forcings", forcings), ("statics", statics)] {
        let bytes = 4 * shape.iter().product::<usize>();
        out.push(Section { name: name.into(), shape, offset });
        offset += bytes;
    }
    out
}

/// Generates every trajectory of `config`; trajectory `k` uses
/// [`DatasetConfig::trajectory_world`]`(k)`.
pub fn generate_dataset(config: &DatasetConfig, config_hash: Option<String>) -> Result<Dataset> {
    config.validate()?;
    let mut trajectories = Vec::with_capacity(config.trajectories);
    let mut start_times = Vec::with_capacity(config.trajectories);
    let mut statics: Option<Arc<StaticFields>> = None;
    for k in 0..config.trajectories {
        let world = config.trajectory_world(k);
        start_times.push(world.start_time);
        let t = generate_trajectory(&world)?;
        let shared = statics
            .get_or_insert_with(|| Arc::new(StaticFields { values: round_f32(t.statics.values.clone()) }))
            .clone();
        trajectories.push(Trajectory {
            states: t
                .states
                .into_iter()
                .map(|s| WeatherState { values: round_f32(s.values), lead_time: s.lead_time })
                .collect(),
            forcings: t.forcings.into_iter().map(|f| ForcingFrame { values: round_f32(f.values) }).collect(),
            statics: shared,
        });
    }
    let grid = config.world.grid.clone();
    let header = DatasetHeader {
        format: DATASET_FORMAT.into(),
        sections: sections(&grid, config.trajectories, config.world.steps, FORCING_NAMES.len(), STATIC_NAMES.len()),
        grid,
        forcing_names: FORCING_NAMES.iter().map(|s| s.to_string()).collect(),
        static_names: STATIC_NAMES.iter().map(|s| s.to_string()).collect(),
        stats: None,
        trajectories: config.trajectories,
        steps: config.world.steps,
        start_times,
        splits: config.splits(),
        generator: Some(config.clone()),
        config_hash,
    };
    Ok(Dataset { header, trajectories })
}

impl Dataset {
    pub fn grid(&self) -> &GridSpec {
        &self.header.grid
    }

    pub fn split(&self, split: Split) -> &[Trajectory] {
        &self.trajectories[self.header.splits.range(split)]
    }

    /// Statistics of the training split.
    pub fn training_stats(&self) -> Result<NormStats> {
        compute_norm_stats(self.split(Split::Train), &self.header.grid.var_names)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        container::write_header(&mut out, &self.header)?;
        let t = &self.trajectories;
        let states = t.iter().flat_map(|t| t.states.iter().flat_map(|s| s.values.iter()));
        container::write_f32s(&mut out, states.map(|&v| v as f32))?;
        let forcings = t.iter().flat_map(|t| t.forcings.iter().flat_map(|f| f.values.iter()));
        container::write_f32s(&mut out, forcings.map(|&v| v as f32))?;
        if let Some(first) = t.first() {
            container::write_f32s(&mut out, first.statics.values.iter().map(|&v| v as f32))?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, payload): (DatasetHeader, _) = container::split(bytes)?;
        if header.format != DATASET_FORMAT {
            return Err(Error::Format(format!("unsupported dataset format {:?}", header.format)));
        }
        header.grid.validate()?;
        let (n, steps) = (header.trajectories, header.steps);
        let (h, w, d) = (header.grid.height, header.grid.width, header.grid.num_vars());
        let (d_f, d_s) = (header.forcing_names.len(), header.static_names.len());
        let expected = sections(&header.grid, n, steps, d_f, d_s);
        if header.sections != expected {
            return Err(Error::Format("section table does not match header dimensions".into()));
        }
        let total: usize = expected.iter().map(|s| 4 * s.shape.iter().product::<usize>()).sum();
        if payload.len() != total {
            return Err(Error::Format(format!("payload has {} bytes, expected {total}", payload.len())));
        }
        let splits = header.splits;
        if [splits.train, splits.val, splits.test].iter().any(|&(a, b)| a > b || b > n) {
            return Err(Error::Format("split ranges exceed the trajectory count".into()));
        }
        let read = |section: &Section, offset: usize, shape: (usize, usize, usize)| -> Result<Array3<f64>> {
            let count = shape.0 * shape.1 * shape.2;
            let v = container::read_f32s(payload, section.offset + 4 * offset, count)?;
            Ok(Array3::from_shape_vec(shape, v.into_iter().map(f64::from).collect()).expect("count matches shape"))
        };
        let statics = Arc::new(StaticFields { values: read(&expected[2], 0, (d_s, h, w))? });
        let mut trajectories = Vec::with_capacity(n);
        for k in 0..n {
            let mut states = Vec::with_capacity(steps);
            let mut forcings = Vec::with_capacity(steps);
            for t in 0..steps {
                let slot = k * steps + t;
                states.push(WeatherState::new(read(&expected[0], slot * d * h * w, (d, h, w))?, t as i64)?);
                forcings.push(ForcingFrame { values: read(&expected[1], slot * d_f * h * w, (d_f, h, w))? });
            }
            trajectories.push(Trajectory { states, forcings, statics: statics.clone() });
        }
        Ok(Dataset { header, trajectories })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
