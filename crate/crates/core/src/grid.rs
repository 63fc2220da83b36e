//! Gridded data model and conditioning assembly.
//!
//! A state is a `[variable, row, col]` array over an `H × W` grid. The outer
//! `b`-cell frame is the boundary, prescribed by a driving model; the enclosed
//! block is the interior, which is forecast. Cell lists for both regions are
//! kept in row-major order, so interior data laid out as `[channel, cell]`
//! reshapes directly to `[channel, H − 2b, W − 2b]`.

use std::collections::HashSet;
use std::sync::Arc;

use lam_tensor::RegionIndex;
use ndarray::{s, Array2, Array3, ArrayView3, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub boundary_width: usize,
    pub var_names: Vec<String>,
    pub level_weights: Vec<f64>,
    pub dt_hours: f64,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        boundary_width: usize,
        var_names: Vec<String>,
        level_weights: Vec<f64>,
        dt_hours: f64,
    ) -> Result<Self> {
        let spec = GridSpec { width, height, boundary_width, var_names, level_weights, dt_hours };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.boundary_width == 0 {
            return Err(Error::Config("boundary width must be at least one cell".into()));
        }
        let b2 = 2 * self.boundary_width;
        if self.width <= b2 || self.height <= b2 {
            return Err(Error::Config(format!(
                "grid {}x{} with boundary width {} leaves no interior",
                self.height, self.width, self.boundary_width
            )));
        }
        if self.var_names.is_empty() {
            return Err(Error::Config("grid needs at least one variable".into()));
        }
        let unique: HashSet<&String> = self.var_names.iter().collect();
        if unique.len() != self.var_names.len() {
            return Err(Error::Config("variable names must be unique".into()));
        }
        if self.level_weights.len() != self.var_names.len() {
            return Err(Error::Config(format!(
                "{} level weights for {} variables",
                self.level_weights.len(),
                self.var_names.len()
            )));
        }
        if let Some(w) = self.level_weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("level weight {w} must be positive")));
        }
        if !(self.dt_hours > 0.0 && self.dt_hours.is_finite()) {
            return Err(Error::Config("timestep must be positive".into()));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn interior_height(&self) -> usize {
        self.height - 2 * self.boundary_width
    }

    pub fn interior_width(&self) -> usize {
        self.width - 2 * self.boundary_width
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Shape of one interior-only field: `[d_x, H − 2b, W − 2b]`.
    pub fn interior_shape(&self) -> [usize; 3] {
        [self.num_vars(), self.interior_height(), self.interior_width()]
    }

    pub fn region_mask(&self) -> RegionMask {
        RegionMask::new(self.height, self.width, self.boundary_width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeatherState {
    pub values: Array3<f64>,
    pub lead_time: i64,
}

impl WeatherState {
    pub fn new(values: Array3<f64>, lead_time: i64) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                location: format!("state at lead {lead_time}"),
                detail: format!("non-finite value {bad}"),
            });
        }
        Ok(WeatherState { values, lead_time })
    }

    pub fn check_shape(&self, spec: &GridSpec, context: &'static str) -> Result<()> {
        let want = [spec.num_vars(), spec.height, spec.width];
        if self.values.shape() != want {
            return Err(Error::dim(context, format!("state shape {:?}, grid wants {:?}", self.values.shape(), want)));
        }
        Ok(())
    }
}

/// Boundary-only state used for the future boundary `X_B^{t+1}`. Interior
/// cells carry a NaN sentinel and are never read.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryState {
    pub values: Array3<f64>,
    pub lead_time: i64,
}

impl BoundaryState {
    pub fn new(values: Array3<f64>, lead_time: i64, mask: &RegionMask) -> Result<Self> {
        let (h, w) = (mask.height(), mask.width());
        if values.shape()[1..] != [h, w] {
            return Err(Error::dim("boundary state", format!("shape {:?} on a {h}x{w} grid", values.shape())));
        }
        for &cell in mask.boundary_cells() {
            let (r, c) = (cell / w, cell % w);
            if values.slice(s![.., r, c]).iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical {
                    location: format!("boundary state at lead {lead_time}"),
                    detail: format!("non-finite boundary value at ({r}, {c})"),
                });
            }
        }
        Ok(BoundaryState { values, lead_time })
    }

    /// Boundary cells of `state`; interior cells set to NaN.
    pub fn from_state(state: &WeatherState, mask: &RegionMask) -> Self {
        let mut values = state.values.clone();
        let w = mask.width();
        for &cell in mask.interior_cells() {
            values.slice_mut(s![.., cell / w, cell % w]).fill(f64::NAN);
        }
        BoundaryState { values, lead_time: state.lead_time }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    height: usize,
    width: usize,
    boundary_width: usize,
    is_boundary: Vec<bool>,
    slot: Vec<usize>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
}

impl RegionMask {
    /// Panics if the frame leaves no interior; use [`GridSpec::new`] to validate first.
    pub fn new(height: usize, width: usize, boundary_width: usize) -> Self {
        assert!(height > 2 * boundary_width && width > 2 * boundary_width, "empty interior");
        let b = boundary_width;
        let mut is_boundary = vec![false; height * width];
        let mut slot = vec![0; height * width];
        let (mut interior, mut boundary) = (Vec::new(), Vec::new());
        for r in 0..height {
            for c in 0..width {
                let cell = r * width + c;
                let edge = r < b || c < b || r >= height - b || c >= width - b;
                is_boundary[cell] = edge;
                if edge {
                    slot[cell] = boundary.len();
                    boundary.push(cell);
                } else {
                    slot[cell] = interior.len();
                    interior.push(cell);
                }
            }
        }
        RegionMask { height, width, boundary_width, is_boundary, slot, interior, boundary }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn boundary_width(&self) -> usize {
        self.boundary_width
    }

    pub fn is_boundary(&self, row: usize, col: usize) -> bool {
        self.is_boundary[row * self.width + col]
    }

    pub fn interior_cells(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_cells(&self) -> &[usize] {
        &self.boundary
    }

    /// Position of `(row, col)` within its own region's cell list.
    pub fn slot(&self, row: usize, col: usize) -> usize {
        self.slot[row * self.width + col]
    }

    pub fn to_index(&self) -> Arc<RegionIndex> {
        Arc::new(
            RegionIndex::new(self.height, self.width, self.interior.clone(), self.boundary.clone())
                .expect("region mask is a valid partition"),
        )
    }

    /// Interior block of a full-grid `[c, H, W]` array as `[c, H − 2b, W − 2b]`.
    pub fn interior_block(&self, values: ArrayView3<f64>) -> Array3<f64> {
        let b = self.boundary_width;
        values.slice(s![.., b..self.height - b, b..self.width - b]).to_owned()
    }
}

/// Values of one state split by region, each `[d, cells]` in row-major cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionValues {
    pub interior: Array2<f64>,
    pub boundary: Array2<f64>,
}

pub fn split_interior_boundary(state: &WeatherState, spec: &GridSpec) -> Result<RegionValues> {
    state.check_shape(spec, "split_interior_boundary")?;
    let mask = spec.region_mask();
    Ok(RegionValues {
        interior: gather_cells(state.values.view(), mask.interior_cells(), spec.width),
        boundary: gather_cells(state.values.view(), mask.boundary_cells(), spec.width),
    })
}

fn gather_cells(values: ArrayView3<f64>, cells: &[usize], width: usize) -> Array2<f64> {
    let c = values.shape()[0];
    Array2::from_shape_fn((c, cells.len()), |(ch, p)| {
        let cell = cells[p];
        values[[ch, cell / width, cell % width]]
    })
}

/// Known exogenous inputs at one time: `[d_f, H, W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingFrame {
    pub values: Array3<f64>,
}

impl ForcingFrame {
    /// Largest `|s² + c² − 1|` over the given `(sin, cos)` channel pairs.
    pub fn unit_circle_error(&self, pairs: &[(usize, usize)]) -> f64 {
        let mut worst = 0.0f64;
        for &(si, ci) in pairs {
            Zip::from(self.values.index_axis(Axis(0), si))
                .and(self.values.index_axis(Axis(0), ci))
                .for_each(|s, c| worst = worst.max((s * s + c * c - 1.0).abs()));
        }
        worst
    }
}

pub const STATIC_NAMES: [&str; 5] = ["topography", "x", "y", "boundary_mask", "interior_mask"];

/// Time-invariant inputs `[d_s, H, W]`: topography, normalized x and y,
/// boundary mask, interior mask.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticFields {
    pub values: Array3<f64>,
}

impl StaticFields {
    pub fn new(mask: &RegionMask, topography: Array2<f64>) -> Result<Self> {
        let (h, w) = (mask.height(), mask.width());
        if topography.shape() != [h, w] {
            return Err(Error::dim("static fields", format!("topography {:?} on a {h}x{w} grid", topography.shape())));
        }
        let norm = |i: usize, n: usize| if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        let values = Array3::from_shape_fn((STATIC_NAMES.len(), h, w), |(ch, r, c)| match ch {
            0 => topography[[r, c]],
            1 => norm(c, w),
            2 => norm(r, h),
            3 => f64::from(u8::from(mask.is_boundary(r, c))),
            _ => f64::from(u8::from(!mask.is_boundary(r, c))),
        });
        Ok(StaticFields { values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub var_names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub res_mean: Vec<f64>,
    pub res_std: Vec<f64>,
}

impl NormStats {
    pub fn validate(&self) -> Result<()> {
        let d = self.var_names.len();
        if [&self.mean, &self.std, &self.res_mean, &self.res_std].iter().any(|v| v.len() != d) {
            return Err(Error::Config("normalization statistics have ragged lengths".into()));
        }
        for (i, name) in self.var_names.iter().enumerate() {
            for (what, s) in [("std", self.std[i]), ("residual std", self.res_std[i])] {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::DegenerateStats { variable: name.clone(), what });
                }
            }
        }
        Ok(())
    }

    /// Confirms that the statistics cover `names` in the same order.
    pub fn check_covers(&self, names: &[String]) -> Result<()> {
        for (i, name) in names.iter().enumerate() {
            if self.var_names.get(i) != Some(name) {
                return Err(Error::MissingVariable(name.clone()));
            }
        }
        if self.var_names.len() != names.len() {
            return Err(Error::MissingVariable(format!(
                "{} variables, statistics for {}",
                names.len(),
                self.var_names.len()
            )));
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }
}

/// Population mean and standard deviation per variable over all cells of all
/// given arrays (`[d, ...]`-shaped), accumulated in two passes.
pub fn state_moments<'a>(d: usize, arrays: impl Iterator<Item = ArrayView3<'a, f64>> + Clone) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; d];
    let mut count = vec![0usize; d];
    for a in arrays.clone() {
        for (v, lane) in a.outer_iter().enumerate() {
            sum[v] += lane.sum();
            count[v] += lane.len();
        }
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &n)| s / n.max(1) as f64).collect();
    let mut sq = vec![0.0; d];
    for a in arrays {
        for (v, lane) in a.outer_iter().enumerate() {
            sq[v] += lane.iter().map(|x| (x - mean[v]).powi(2)).sum::<f64>();
        }
    }
    let std = sq.iter().zip(&count).map(|(s, &n)| (s / n.max(1) as f64).sqrt()).collect();
    (mean, std)
}

/// Normalization and residual statistics of a training set.
///
/// Residual statistics are moments of one-step differences of the
/// standardized states over the full grid.
pub fn compute_norm_stats<S: AsRef<[WeatherState]>>(trajectories: &[S], var_names: &[String]) -> Result<NormStats> {
    if trajectories.is_empty() {
        return Err(Error::Empty("training trajectories"));
    }
    let d = var_names.len();
    for t in trajectories {
        let t = t.as_ref();
        if t.len() < 2 {
            return Err(Error::Config("each trajectory needs at least 2 time steps".into()));
        }
        if let Some(bad) = t.iter().find(|s| s.values.shape()[0] != d) {
            return Err(Error::dim(
                "compute_norm_stats",
                format!("state with {} variables, expected {d}", bad.values.shape()[0]),
            ));
        }
    }
    let all = || trajectories.iter().flat_map(|t| t.as_ref().iter().map(|s| s.values.view()));
    let (mean, std) = state_moments(d, all());
    for (name, s) in var_names.iter().zip(&std) {
        if !(*s > 0.0) {
            return Err(Error::DegenerateStats { variable: name.clone(), what: "std" });
        }
    }
    let scale = |a: ArrayView3<f64>| standardize_values(a, &mean, &std);
    let diffs: Vec<Array3<f64>> = trajectories
        .iter()
        .flat_map(|t| t.as_ref().windows(2).map(|w| scale(w[1].values.view()) - scale(w[0].values.view())))
        .collect();
    let (res_mean, res_std) = state_moments(d, diffs.iter().map(|a| a.view()));
    let stats = NormStats { var_names: var_names.to_vec(), mean, std, res_mean, res_std };
    stats.validate()?;
    Ok(stats)
}

fn standardize_values(a: ArrayView3<f64>, mean: &[f64], std: &[f64]) -> Array3<f64> {
    let mut out = a.to_owned();
    for (v, mut lane) in out.outer_iter_mut().enumerate() {
        lane.mapv_inplace(|x| (x - mean[v]) / std[v]);
    }
    out
}

fn check_vars(stats: &NormStats, d: usize) -> Result<()> {
    if d > stats.num_vars() {
        return Err(Error::MissingVariable(format!(
            "variable index {} (statistics cover {})",
            d - 1,
            stats.num_vars()
        )));
    }
    if d < stats.num_vars() {
        return Err(Error::dim("standardize", format!("{d} variables, statistics for {}", stats.num_vars())));
    }
    Ok(())
}

pub fn standardize(state: &WeatherState, stats: &NormStats) -> Result<WeatherState> {
    check_vars(stats, state.values.shape()[0])?;
    Ok(WeatherState {
        values: standardize_values(state.values.view(), &stats.mean, &stats.std),
        lead_time: state.lead_time,
    })
}

pub fn unstandardize(state: &WeatherState, stats: &NormStats) -> Result<WeatherState> {
    check_vars(stats, state.values.shape()[0])?;
    let mut values = state.values.clone();
    for (v, mut lane) in values.outer_iter_mut().enumerate() {
        lane.mapv_inplace(|x| x * stats.std[v] + stats.mean[v]);
    }
    Ok(WeatherState { values, lead_time: state.lead_time })
}

fn check_same(a: &ArrayView3<f64>, b: &ArrayView3<f64>, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(context, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `r = (x_next − x_curr − μ_res) / σ_res` per variable, on standardized arrays.
pub fn residual_encode(x_curr: ArrayView3<f64>, x_next: ArrayView3<f64>, stats: &NormStats) -> Result<Array3<f64>> {
    check_same(&x_curr, &x_next, "residual_encode")?;
    check_vars(stats, x_curr.shape()[0])?;
    let mut r = &x_next - &x_curr;
    for (v, mut lane) in r.outer_iter_mut().enumerate() {
        lane.mapv_inplace(|x| (x - stats.res_mean[v]) / stats.res_std[v]);
    }
    Ok(r)
}

/// Inverse of [`residual_encode`]: standardized next state from `r` and `x_curr`.
pub fn residual_decode(r: ArrayView3<f64>, x_curr: ArrayView3<f64>, stats: &NormStats) -> Result<Array3<f64>> {
    check_same(&r, &x_curr, "residual_decode")?;
    check_vars(stats, r.shape()[0])?;
    let mut out = x_curr.to_owned();
    for (v, (mut lane, rl)) in out.outer_iter_mut().zip(r.outer_iter()).enumerate() {
        Zip::from(&mut lane).and(&rl).for_each(|x, &r| *x += r * stats.res_std[v] + stats.res_mean[v]);
    }
    Ok(out)
}

/// Channel counts of the conditioning inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub d_x: usize,
    pub d_f: usize,
    pub d_s: usize,
}

impl ChannelLayout {
    /// `X_I^{t−1}, X_I^t, F_I^{t−1}, F_I^t, F_I^{t+1}, S_I`.
    pub fn interior_channels(&self) -> usize {
        2 * self.d_x + 3 * self.d_f + self.d_s
    }

    /// `X_B^{t−1}, X_B^t, X_B^{t+1}, F_B^{t−1}, F_B^t, F_B^{t+1}, S_B`.
    pub fn boundary_channels(&self) -> usize {
        3 * self.d_x + 3 * self.d_f + self.d_s
    }
}

/// How to fill `X_B^{t+1}` when assembling the boundary input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FutureBoundaryMode {
    /// A future boundary must be supplied.
    Require,
    /// Missing future boundaries are replaced by the current boundary.
    Persist,
}

/// Interior input `I^t` and boundary input `B^t` of one forecast step.
///
/// Both are `[channel, cell]` matrices over their region's cells in
/// row-major order. Channel blocks are ordered states (oldest first), then
/// forcings (oldest first), then statics; each block is variable-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningPair {
    interior: Array2<f64>,
    boundary: Array2<f64>,
    layout: ChannelLayout,
    mask: Arc<RegionMask>,
}

impl ConditioningPair {
    pub fn layout(&self) -> ChannelLayout {
        self.layout
    }

    pub fn mask(&self) -> &Arc<RegionMask> {
        &self.mask
    }

    pub fn interior_input(&self) -> &Array2<f64> {
        &self.interior
    }

    pub fn boundary_input(&self) -> &Array2<f64> {
        &self.boundary
    }

    /// Number of state slices carried by `I^t` and `B^t`.
    pub fn state_slices(&self) -> (usize, usize) {
        (2, 3)
    }

    pub fn interior_value(&self, channel: usize, row: usize, col: usize) -> Result<f64> {
        self.read(channel, row, col, false)
    }

    pub fn boundary_value(&self, channel: usize, row: usize, col: usize) -> Result<f64> {
        self.read(channel, row, col, true)
    }

    fn read(&self, channel: usize, row: usize, col: usize, boundary: bool) -> Result<f64> {
        let m = &self.mask;
        if row >= m.height() || col >= m.width() {
            return Err(Error::Index { index: row * m.width() + col, max: m.height() * m.width() - 1 });
        }
        if m.is_boundary(row, col) != boundary {
            return Err(Error::MaskedAccess { region: if boundary { "boundary" } else { "interior" }, row, col });
        }
        let data = if boundary { &self.boundary } else { &self.interior };
        if channel >= data.nrows() {
            return Err(Error::Index { index: channel, max: data.nrows() - 1 });
        }
        Ok(data[[channel, m.slot(row, col)]])
    }
}

/// Standardized inputs of one forecast step.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub prev: &'a WeatherState,
    pub curr: &'a WeatherState,
    pub future_boundary: Option<&'a BoundaryState>,
    pub forcings: [&'a ForcingFrame; 3],
    pub statics: &'a StaticFields,
}

pub fn assemble_conditioning(
    inputs: &StepInputs,
    mask: &Arc<RegionMask>,
    mode: FutureBoundaryMode,
) -> Result<ConditioningPair> {
    let (h, w) = (mask.height(), mask.width());
    let d_x = inputs.prev.values.shape()[0];
    let d_f = inputs.forcings[0].values.shape()[0];
    let d_s = inputs.statics.values.shape()[0];
    let grid_ok = |a: &Array3<f64>, c: usize| a.shape() == [c, h, w];
    let all_ok = grid_ok(&inputs.prev.values, d_x)
        && grid_ok(&inputs.curr.values, d_x)
        && inputs.forcings.iter().all(|f| grid_ok(&f.values, d_f))
        && grid_ok(&inputs.statics.values, d_s)
        && inputs.future_boundary.is_none_or(|b| grid_ok(&b.values, d_x));
    if !all_ok {
        return Err(Error::dim(
            "assemble_conditioning",
            format!("inputs do not share the {d_x}-variable {h}x{w} grid"),
        ));
    }
    let future = match (inputs.future_boundary, mode) {
        (Some(b), _) => b.values.view(),
        (None, FutureBoundaryMode::Persist) => inputs.curr.values.view(),
        (None, FutureBoundaryMode::Require) => return Err(Error::MissingBoundary { lead: inputs.curr.lead_time + 1 }),
    };
    let layout = ChannelLayout { d_x, d_f, d_s };
    let f = &inputs.forcings;
    let interior_blocks = [
        inputs.prev.values.view(),
        inputs.curr.values.view(),
        f[0].values.view(),
        f[1].values.view(),
        f[2].values.view(),
        inputs.statics.values.view(),
    ];
    let boundary_blocks = [
        inputs.prev.values.view(),
        inputs.curr.values.view(),
        future,
        f[0].values.view(),
        f[1].values.view(),
        f[2].values.view(),
        inputs.statics.values.view(),
    ];
    let stack = |blocks: &[ArrayView3<f64>], cells: &[usize]| {
        let rows: usize = blocks.iter().map(|b| b.shape()[0]).sum();
        let mut out = Array2::zeros((rows, cells.len()));
        let mut row = 0;
        for b in blocks {
            for lane in b.outer_iter() {
                let mut dst = out.row_mut(row);
                for (p, &cell) in cells.iter().enumerate() {
                    dst[p] = lane[[cell / w, cell % w]];
                }
                row += 1;
            }
        }
        out
    };
    let interior = stack(&interior_blocks, mask.interior_cells());
    let boundary = stack(&boundary_blocks, mask.boundary_cells());
    if let Some(bad) = boundary.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            location: "boundary input".into(),
            detail: format!("non-finite value in channel {}", bad / boundary.ncols()),
        });
    }
    Ok(ConditioningPair { interior, boundary, layout, mask: Arc::clone(mask) })
}

/// Full-grid state with interior cells from `interior` (`[d, H − 2b, W − 2b]`)
/// and boundary cells copied from `boundary`.
pub fn splice(interior: ArrayView3<f64>, boundary: &Array3<f64>, mask: &RegionMask) -> Result<Array3<f64>> {
    let b = mask.boundary_width();
    let (h, w) = (mask.height(), mask.width());
    let d = boundary.shape()[0];
    if interior.shape() != [d, h - 2 * b, w - 2 * b] || boundary.shape() != [d, h, w] {
        return Err(Error::dim("splice", format!("interior {:?}, boundary {:?}", interior.shape(), boundary.shape())));
    }
    let mut out = boundary.clone();
    out.slice_mut(s![.., b..h - b, b..w - b]).assign(&interior);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(h: usize, w: usize, b: usize) -> GridSpec {
        GridSpec::new(w, h, b, vec!["a".into()], vec![1.0], 3.0).unwrap()
    }

    #[test]
    fn eight_by_eight_with_frame_two() {
        let m = spec(8, 8, 2).region_mask();
        assert_eq!(m.interior_cells().len(), 16);
        assert_eq!(m.boundary_cells().len(), 48);
        assert_eq!(m.interior_cells()[0], 2 * 8 + 2);
    }

    #[test]
    fn large_domain_interior() {
        let s = spec(238, 268, 10);
        assert_eq!((s.interior_height(), s.interior_width()), (218, 248));
    }

    #[test]
    fn frame_covering_grid_is_rejected() {
        assert!(GridSpec::new(8, 8, 4, vec!["a".into()], vec![1.0], 1.0).is_err());
        assert!(GridSpec::new(8, 9, 4, vec!["a".into(), "a".into()], vec![1.0, 1.0], 1.0).is_err());
        assert!(GridSpec::new(9, 9, 4, vec!["a".into()], vec![0.0], 1.0).is_err());
    }

    #[test]
    fn two_value_moments_use_population_convention() {
        let a = Array3::from_shape_vec((1, 1, 1), vec![1.0]).unwrap();
        let b = Array3::from_shape_vec((1, 1, 1), vec![3.0]).unwrap();
        let (m, s) = state_moments(1, [a.view(), b.view()].into_iter());
        assert_eq!((m[0], s[0]), (2.0, 1.0));
    }

    #[test]
    fn splice_keeps_boundary_bits() {
        let m = spec(6, 7, 1).region_mask();
        let boundary = Array3::from_shape_fn((1, 6, 7), |(_, r, c)| (r * 7 + c) as f64 + 0.1);
        let interior = Array3::from_elem((1, 4, 5), -1.0);
        let out = splice(interior.view(), &boundary, &m).unwrap();
        for &cell in m.boundary_cells() {
            assert_eq!(out[[0, cell / 7, cell % 7]].to_bits(), boundary[[0, cell / 7, cell % 7]].to_bits());
        }
        assert_eq!(out[[0, 1, 1]], -1.0);
    }
}
