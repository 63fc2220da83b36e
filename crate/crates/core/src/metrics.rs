//! Ensemble verification scores over interior cells.
//!
//! For one variable and lead, forecasts are `[S, N, P]` (samples, members,
//! interior cells) and truths `[S, P]`:
//!
//! ```text
//! RMSE   = √( mean_{s,p} (x̄ − y)² )
//! Spread = √( mean_{s,p} (1/N) Σ_e (x_e − x̄)² )
//! SSR    = √((N+1)/N) · Spread / RMSE
//! CRPS   = mean_{s,p} (1/N) [ Σ_e |x_e − y| − 1/(2(N−1)) Σ_e Σ_e' |x_e − x_e'| ]
//! ```
//!
//! With `N = 1` the CRPS pairwise term is taken as zero, so CRPS is the MAE.

use std::io::Write;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{NormStats, RegionMask};

fn check(fc: &ArrayView3<f64>, truth: &ArrayView2<f64>, context: &'static str) -> Result<()> {
    let (s, n, p) = fc.dim();
    if s == 0 || p == 0 {
        return Err(Error::Empty("forecast samples"));
    }
    if n == 0 {
        return Err(Error::Empty("ensemble members"));
    }
    if truth.dim() != (s, p) {
        return Err(Error::dim(context, format!("forecasts {:?}, truths {:?}", fc.shape(), truth.shape())));
    }
    Ok(())
}

pub fn rmse(fc: ArrayView3<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    check(&fc, &truth, "rmse")?;
    let (s, n, p) = fc.dim();
    let mut sq = 0.0;
    for i in 0..s {
        for c in 0..p {
            let mean = fc.slice(ndarray::s![i, .., c]).sum() / n as f64;
            sq += (mean - truth[[i, c]]).powi(2);
        }
    }
    Ok((sq / (s * p) as f64).sqrt())
}

pub fn spread(fc: ArrayView3<f64>) -> Result<f64> {
    let (s, n, p) = fc.dim();
    if n < 2 {
        return Err(Error::InsufficientEnsemble(n));
    }
    if s == 0 || p == 0 {
        return Err(Error::Empty("forecast samples"));
    }
    let mut var = 0.0;
    for i in 0..s {
        for c in 0..p {
            let lane = fc.slice(ndarray::s![i, .., c]);
            let mean = lane.sum() / n as f64;
            var += lane.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        }
    }
    Ok((var / (s * p) as f64).sqrt())
}

/// Bias-corrected spread–skill ratio from precomputed spread and RMSE.
pub fn ssr_from(spread: f64, rmse: f64, members: usize) -> Result<f64> {
    if members < 2 {
        return Err(Error::InsufficientEnsemble(members));
    }
    if spread == 0.0 {
        return Ok(0.0);
    }
    if rmse == 0.0 {
        return Err(Error::Numerical {
            location: "spread-skill ratio".into(),
            detail: "nonzero spread with zero RMSE".into(),
        });
    }
    Ok(((members as f64 + 1.0) / members as f64).sqrt() * spread / rmse)
}

pub fn ssr(fc: ArrayView3<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    let r = rmse(fc, truth)?;
    ssr_from(spread(fc)?, r, fc.dim().1)
}

/// Fair CRPS of one ensemble `x` against `y`, using the sorted-order identity
/// `Σ_e Σ_e' |x_e − x_e'| = 2 Σ_i (2i − N + 1) x_(i)`.
pub fn crps_cell(members: &mut [f64], y: f64) -> f64 {
    let n = members.len();
    let abs: f64 = members.iter().map(|x| (x - y).abs()).sum();
    if n < 2 {
        return abs / n as f64;
    }
    members.sort_by(f64::total_cmp);
    let pairs: f64 = members.iter().enumerate().map(|(i, &x)| (2.0 * i as f64 - n as f64 + 1.0) * x).sum::<f64>() * 2.0;
    (abs - pairs / (2.0 * (n as f64 - 1.0))) / n as f64
}

pub fn crps(fc: ArrayView3<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    check(&fc, &truth, "crps")?;
    let (s, n, p) = fc.dim();
    let mut buf = vec![0.0; n];
    let mut total = 0.0;
    for i in 0..s {
        for c in 0..p {
            for (e, b) in buf.iter_mut().enumerate() {
                *b = fc[[i, e, c]];
            }
            total += crps_cell(&mut buf, truth[[i, c]]);
        }
    }
    Ok(total / (s * p) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub variable: String,
    pub lead: usize,
    pub rmse: f64,
    pub spread: Option<f64>,
    pub ssr: Option<f64>,
    pub crps: f64,
    pub n_samples: usize,
    pub n_ens: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

pub const AGGREGATE: &str = "aggregate";

impl MetricReport {
    pub fn get(&self, variable: &str, lead: usize) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.variable == variable && r.lead == lead)
    }

    pub const CSV_HEADER: &'static str = "variable,lead_steps,rmse,spread,ssr,crps,n_samples,n_ens";

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.9e}")).unwrap_or_default();
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{:.9e},{},{},{:.9e},{},{}",
                r.variable,
                r.lead,
                r.rmse,
                opt(r.spread),
                opt(r.ssr),
                r.crps,
                r.n_samples,
                r.n_ens
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = Vec::new();
        self.write_csv(&mut out)?;
        Ok(String::from_utf8(out).expect("ascii csv"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(Error::Format("metric CSV header does not match".into()));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number {s:?}"))) };
        let int = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::Format(format!("bad integer {s:?}"))) };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(Error::Format(format!("expected 8 fields in {line:?}")));
            }
            rows.push(MetricRow {
                variable: f[0].to_string(),
                lead: int(f[1])?,
                rmse: num(f[2])?,
                spread: opt(f[3])?,
                ssr: opt(f[4])?,
                crps: num(f[5])?,
                n_samples: int(f[6])?,
                n_ens: int(f[7])?,
            });
        }
        Ok(MetricReport { rows })
    }
}

/// Scores of one variable at one lead.
pub fn score(variable: &str, lead: usize, fc: ArrayView3<f64>, truth: ArrayView2<f64>) -> Result<MetricRow> {
    let n = fc.dim().1;
    let r = rmse(fc, truth)?;
    let (spread, ssr) = if n >= 2 {
        let s = spread(fc)?;
        (Some(s), Some(ssr_from(s, r, n)?))
    } else {
        (None, None)
    };
    Ok(MetricRow {
        variable: variable.to_string(),
        lead,
        rmse: r,
        spread,
        ssr,
        crps: crps(fc, truth)?,
        n_samples: fc.dim().0,
        n_ens: n,
    })
}

/// Ensemble forecasts and matching truths for verification.
///
/// `forecasts[s][e][t]` and `truths[s][t]` are full-grid `[d, H, W]` states
/// of sample `s` at lead `leads[t]`.
#[derive(Debug, Clone, Copy)]
pub struct Verification<'a> {
    pub var_names: &'a [String],
    pub leads: &'a [usize],
    pub forecasts: &'a [Vec<Vec<Array3<f64>>>],
    pub truths: &'a [Vec<Array3<f64>>],
}

impl Verification<'_> {
    fn validate(&self, mask: &RegionMask) -> Result<usize> {
        let s = self.forecasts.len();
        if s == 0 || self.truths.len() != s {
            return Err(Error::Empty("verification samples"));
        }
        let n = self.forecasts[0].len();
        let t = self.leads.len();
        let shape = [self.var_names.len(), mask.height(), mask.width()];
        let ok = self
            .forecasts
            .iter()
            .all(|m| m.len() == n && m.iter().all(|tr| tr.len() == t && tr.iter().all(|x| x.shape() == shape)))
            && self.truths.iter().all(|tr| tr.len() == t && tr.iter().all(|x| x.shape() == shape));
        if !ok || n == 0 {
            return Err(Error::dim("verification", "ragged forecast or truth arrays"));
        }
        Ok(n)
    }

    /// Interior values of variable `d` at lead index `t`, optionally
    /// standardized: `([S, N, P], [S, P])`.
    fn gather(&self, mask: &RegionMask, d: usize, t: usize, norm: Option<(f64, f64)>) -> (Array3<f64>, Array2<f64>) {
        let cells = mask.interior_cells();
        let w = mask.width();
        let (mu, sd) = norm.unwrap_or((0.0, 1.0));
        let f = |x: f64| (x - mu) / sd;
        let (s, n, p) = (self.forecasts.len(), self.forecasts[0].len(), cells.len());
        let fc =
            Array3::from_shape_fn((s, n, p), |(i, e, c)| f(self.forecasts[i][e][t][[d, cells[c] / w, cells[c] % w]]));
        let tr = Array2::from_shape_fn((s, p), |(i, c)| f(self.truths[i][t][[d, cells[c] / w, cells[c] % w]]));
        (fc, tr)
    }
}

/// Per-variable scores in physical units plus one `aggregate` row per lead:
/// the mean over variables of scores computed on standardized values.
pub fn evaluate(v: &Verification, stats: &NormStats, mask: &RegionMask) -> Result<MetricReport> {
    v.validate(mask)?;
    stats.check_covers(v.var_names)?;
    let mut rows = Vec::new();
    for (t, &lead) in v.leads.iter().enumerate() {
        for (d, name) in v.var_names.iter().enumerate() {
            let (fc, tr) = v.gather(mask, d, t, None);
            rows.push(score(name, lead, fc.view(), tr.view())?);
        }
        let standardized = (0..v.var_names.len())
            .map(|d| {
                let (fc, tr) = v.gather(mask, d, t, Some((stats.mean[d], stats.std[d])));
                score(&v.var_names[d], lead, fc.view(), tr.view())
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(aggregate_normalized(&standardized, lead)?);
    }
    Ok(MetricReport { rows })
}

/// Unweighted mean over variables of standardized per-variable scores.
pub fn aggregate_normalized(standardized: &[MetricRow], lead: usize) -> Result<MetricRow> {
    let first = standardized.first().ok_or(Error::Empty("variables to aggregate"))?;
    let k = standardized.len() as f64;
    let mean = |f: &dyn Fn(&MetricRow) -> f64| standardized.iter().map(f).sum::<f64>() / k;
    let mean_opt = |f: &dyn Fn(&MetricRow) -> Option<f64>| -> Option<f64> {
        standardized.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / k)
    };
    Ok(MetricRow {
        variable: AGGREGATE.into(),
        lead,
        rmse: mean(&|r| r.rmse),
        spread: mean_opt(&|r| r.spread),
        ssr: mean_opt(&|r| r.ssr),
        crps: mean(&|r| r.crps),
        n_samples: first.n_samples,
        n_ens: first.n_ens,
    })
}

/// Ensemble mean over axis 1 of `[S, N, P]`.
pub fn ensemble_mean(fc: ArrayView3<f64>) -> Array2<f64> {
    fc.mean_axis(Axis(1)).expect("nonempty ensemble")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, arr3};

    #[test]
    fn two_member_hand_case() {
        let fc = arr3(&[[[0.0], [1.0]]]);
        let y = arr2(&[[0.5]]);
        assert_eq!(crps(fc.view(), y.view()).unwrap(), 0.0);
    }

    #[test]
    fn single_member_rmse() {
        let fc = arr3(&[[[2.0]]]);
        let y = arr2(&[[0.0]]);
        assert_eq!(rmse(fc.view(), y.view()).unwrap(), 2.0);
        assert!(matches!(spread(fc.view()), Err(Error::InsufficientEnsemble(1))));
        assert_eq!(crps(fc.view(), y.view()).unwrap(), 2.0);
    }

    #[test]
    fn collapsed_ensemble_has_zero_ssr() {
        let fc = arr3(&[[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]]);
        let y = arr2(&[[0.0, 0.0]]);
        assert_eq!(ssr(fc.view(), y.view()).unwrap(), 0.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        let fc = Array3::<f64>::zeros((0, 2, 1));
        let y = Array2::<f64>::zeros((0, 1));
        assert!(matches!(rmse(fc.view(), y.view()), Err(Error::Empty(_))));
    }

    #[test]
    fn csv_round_trip() {
        let report = MetricReport {
            rows: vec![MetricRow {
                variable: "theta".into(),
                lead: 3,
                rmse: 0.25,
                spread: None,
                ssr: None,
                crps: 0.125,
                n_samples: 2,
                n_ens: 1,
            }],
        };
        let csv = report.to_csv().unwrap();
        assert_eq!(MetricReport::from_csv(&csv).unwrap(), report);
    }
}
