use std::sync::Arc;

use lam_diffusion::grid::{
    assemble_conditioning, compute_norm_stats, residual_decode, residual_encode, splice, split_interior_boundary,
    standardize, unstandardize, BoundaryState, ForcingFrame, FutureBoundaryMode, GridSpec, NormStats, RegionMask,
    StaticFields, StepInputs, WeatherState,
};
use lam_diffusion::Error;
use ndarray::{s, Array2, Array3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(shape: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_fn(shape, |_| rng.random_range(-3.0..3.0))
}

fn stats(d: usize) -> NormStats {
    NormStats {
        var_names: (0..d).map(|i| format!("v{i}")).collect(),
        mean: (0..d).map(|i| i as f64 - 1.0).collect(),
        std: (0..d).map(|i| 0.5 + i as f64).collect(),
        res_mean: (0..d).map(|i| 0.1 * i as f64).collect(),
        res_std: (0..d).map(|i| 0.2 + 0.3 * i as f64).collect(),
    }
}

proptest! {
    #[test]
    fn mask_partitions_the_grid(h in 3usize..20, w in 3usize..20, b in 1usize..4) {
        prop_assume!(2 * b < h && 2 * b < w);
        let m = RegionMask::new(h, w, b);
        let (i, bd) = (m.interior_cells(), m.boundary_cells());
        prop_assert_eq!(i.len(), (h - 2 * b) * (w - 2 * b));
        prop_assert_eq!(i.len() + bd.len(), h * w);
        prop_assert!(i.windows(2).all(|x| x[0] < x[1]) && bd.windows(2).all(|x| x[0] < x[1]));
        for cell in 0..h * w {
            let (r, c) = (cell / w, cell % w);
            let edge = r < b || c < b || r >= h - b || c >= w - b;
            prop_assert_eq!(m.is_boundary(r, c), edge);
            let list = if edge { bd } else { i };
            prop_assert_eq!(list[m.slot(r, c)], cell);
        }
    }

    #[test]
    fn standardization_and_residuals_round_trip(seed in 0u64..1000, d in 1usize..4) {
        let st = stats(d);
        let x = WeatherState::new(field((d, 5, 6), seed), 0).unwrap();
        let back = unstandardize(&standardize(&x, &st).unwrap(), &st).unwrap();
        for (a, b) in back.values.iter().zip(&x.values) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let next = field((d, 5, 6), seed + 1);
        let r = residual_encode(x.values.view(), next.view(), &st).unwrap();
        let dec = residual_decode(r.view(), x.values.view(), &st).unwrap();
        for (a, b) in dec.iter().zip(&next) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn splice_preserves_boundary_bits(seed in 0u64..1000, b in 1usize..3) {
        let mask = RegionMask::new(8, 9, b);
        let bound = field((2, 8, 9), seed);
        let inner = field((2, 8 - 2 * b, 9 - 2 * b), seed + 7);
        let out = splice(inner.view(), &bound, &mask).unwrap();
        for r in 0..8 {
            for c in 0..9 {
                for v in 0..2 {
                    let want = if mask.is_boundary(r, c) { bound[[v, r, c]] } else { inner[[v, r - b, c - b]] };
                    prop_assert_eq!(out[[v, r, c]].to_bits(), want.to_bits());
                }
            }
        }
    }
}

#[test]
fn split_matches_region_lists() {
    let spec = GridSpec::new(7, 6, 2, vec!["a".into(), "b".into()], vec![1.0, 1.0], 3.0).unwrap();
    let x = WeatherState::new(field((2, 6, 7), 3), 0).unwrap();
    let parts = split_interior_boundary(&x, &spec).unwrap();
    assert_eq!(parts.interior.dim(), (2, 6));
    assert_eq!(parts.boundary.dim(), (2, 36));
    let m = spec.region_mask();
    for (p, &cell) in m.interior_cells().iter().enumerate() {
        assert_eq!(parts.interior[[1, p]], x.values[[1, cell / 7, cell % 7]]);
    }
    let bad = WeatherState::new(field((3, 6, 7), 3), 0).unwrap();
    assert!(matches!(split_interior_boundary(&bad, &spec), Err(Error::Dimension { .. })));
}

#[test]
fn norm_stats_match_direct_sums() {
    let trajs: Vec<Vec<WeatherState>> = (0..3)
        .map(|k| (0..4).map(|t| WeatherState::new(field((2, 4, 5), 10 * k + t), t as i64).unwrap()).collect())
        .collect();
    let names = vec!["a".to_string(), "b".to_string()];
    let st = compute_norm_stats(&trajs, &names).unwrap();
    for v in 0..2 {
        let xs: Vec<f64> = trajs
            .iter()
            .flatten()
            .flat_map(|x| x.values.slice(s![v, .., ..]).iter().copied().collect::<Vec<_>>())
            .collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt();
        assert!((st.mean[v] - m).abs() < 1e-12 && (st.std[v] - sd).abs() < 1e-12);

        let mut diffs = Vec::new();
        for t in &trajs {
            for w in t.windows(2) {
                for (a, b) in w[0].values.slice(s![v, .., ..]).iter().zip(w[1].values.slice(s![v, .., ..])) {
                    diffs.push((b - m) / sd - (a - m) / sd);
                }
            }
        }
        let rm = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let rs = (diffs.iter().map(|x| (x - rm) * (x - rm)).sum::<f64>() / diffs.len() as f64).sqrt();
        assert!((st.res_mean[v] - rm).abs() < 1e-12 && (st.res_std[v] - rs).abs() < 1e-12);
    }
}

#[test]
fn constant_variable_has_degenerate_stats() {
    let mut a = field((2, 4, 4), 1);
    a.slice_mut(s![1, .., ..]).fill(2.0);
    let mut b = field((2, 4, 4), 2);
    b.slice_mut(s![1, .., ..]).fill(2.0);
    let traj = vec![vec![WeatherState::new(a, 0).unwrap(), WeatherState::new(b, 1).unwrap()]];
    let err = compute_norm_stats(&traj, &["a".into(), "b".into()]).unwrap_err();
    assert!(matches!(err, Error::DegenerateStats { ref variable, .. } if variable == "b"));
}

#[test]
fn non_finite_states_and_boundaries_are_rejected() {
    let mut v = field((1, 4, 4), 0);
    v[[0, 1, 1]] = f64::NAN;
    assert!(matches!(WeatherState::new(v.clone(), 3), Err(Error::Numerical { .. })));
    let mask = RegionMask::new(4, 4, 1);
    // NaN in the interior is the sentinel and is accepted
    assert!(BoundaryState::new(v.clone(), 3, &mask).is_ok());
    v[[0, 0, 2]] = f64::INFINITY;
    assert!(matches!(BoundaryState::new(v, 3, &mask), Err(Error::Numerical { .. })));
}

struct Fixture {
    mask: Arc<RegionMask>,
    prev: WeatherState,
    curr: WeatherState,
    future: BoundaryState,
    forcings: Vec<ForcingFrame>,
    statics: StaticFields,
}

fn fixture(seed: u64) -> Fixture {
    let (h, w, b) = (8, 9, 2);
    let mask = Arc::new(RegionMask::new(h, w, b));
    let next = WeatherState::new(field((3, h, w), seed + 2), 2).unwrap();
    Fixture {
        prev: WeatherState::new(field((3, h, w), seed), 0).unwrap(),
        curr: WeatherState::new(field((3, h, w), seed + 1), 1).unwrap(),
        future: BoundaryState::from_state(&next, &mask),
        forcings: (0..3).map(|k| ForcingFrame { values: field((2, h, w), seed + 10 + k) }).collect(),
        statics: StaticFields::new(&mask, Array2::from_shape_fn((h, w), |(r, c)| (r * c) as f64)).unwrap(),
        mask,
    }
}

fn inputs(f: &Fixture) -> StepInputs<'_> {
    StepInputs {
        prev: &f.prev,
        curr: &f.curr,
        future_boundary: Some(&f.future),
        forcings: [&f.forcings[0], &f.forcings[1], &f.forcings[2]],
        statics: &f.statics,
    }
}

#[test]
fn conditioning_channels_carry_their_sources() {
    let f = fixture(1);
    let pair = assemble_conditioning(&inputs(&f), &f.mask, FutureBoundaryMode::Require).unwrap();
    let lay = pair.layout();
    assert_eq!(lay.interior_channels(), 2 * 3 + 3 * 2 + 5);
    assert_eq!(lay.boundary_channels(), 3 * 3 + 3 * 2 + 5);
    assert_eq!(pair.interior_input().dim(), (17, 4 * 5));
    assert_eq!(pair.boundary_input().dim(), (20, 72 - 20));
    assert_eq!(pair.state_slices(), (2, 3));

    // interior cell (3, 4), boundary cell (0, 5)
    assert_eq!(pair.interior_value(1, 3, 4).unwrap(), f.prev.values[[1, 3, 4]]);
    assert_eq!(pair.interior_value(3 + 2, 3, 4).unwrap(), f.curr.values[[2, 3, 4]]);
    assert_eq!(pair.interior_value(6 + 5, 3, 4).unwrap(), f.forcings[2].values[[1, 3, 4]]);
    assert_eq!(pair.interior_value(12, 3, 4).unwrap(), f.statics.values[[0, 3, 4]]);
    assert_eq!(pair.boundary_value(6, 0, 5).unwrap(), f.future.values[[0, 0, 5]]);
    assert_eq!(pair.boundary_value(9, 0, 5).unwrap(), f.forcings[0].values[[0, 0, 5]]);

    assert!(matches!(pair.interior_value(0, 0, 0), Err(Error::MaskedAccess { region: "interior", .. })));
    assert!(matches!(pair.boundary_value(0, 4, 4), Err(Error::MaskedAccess { region: "boundary", .. })));
    assert!(matches!(pair.interior_value(17, 4, 4), Err(Error::Index { .. })));
}

#[test]
fn regions_do_not_see_each_other() {
    let f = fixture(2);
    let base = assemble_conditioning(&inputs(&f), &f.mask, FutureBoundaryMode::Require).unwrap();

    let mut g = fixture(2);
    for &cell in g.mask.clone().boundary_cells() {
        let (r, c) = (cell / 9, cell % 9);
        g.prev.values.slice_mut(s![.., r, c]).fill(99.0);
        g.curr.values.slice_mut(s![.., r, c]).fill(-99.0);
    }
    let other = assemble_conditioning(&inputs(&g), &g.mask, FutureBoundaryMode::Require).unwrap();
    assert_eq!(base.interior_input(), other.interior_input());
    assert_ne!(base.boundary_input(), other.boundary_input());

    let mut g = fixture(2);
    for &cell in g.mask.clone().interior_cells() {
        let (r, c) = (cell / 9, cell % 9);
        g.prev.values.slice_mut(s![.., r, c]).fill(99.0);
        g.curr.values.slice_mut(s![.., r, c]).fill(-99.0);
    }
    let other = assemble_conditioning(&inputs(&g), &g.mask, FutureBoundaryMode::Require).unwrap();
    assert_eq!(base.boundary_input(), other.boundary_input());
}

#[test]
fn missing_future_boundary() {
    let f = fixture(3);
    let mut inp = inputs(&f);
    inp.future_boundary = None;
    assert!(matches!(
        assemble_conditioning(&inp, &f.mask, FutureBoundaryMode::Require),
        Err(Error::MissingBoundary { lead: 2 })
    ));
    let pair = assemble_conditioning(&inp, &f.mask, FutureBoundaryMode::Persist).unwrap();
    assert_eq!(pair.boundary_value(7, 1, 0).unwrap(), f.curr.values[[1, 1, 0]]);
}

#[test]
fn mismatched_grids_are_dimension_errors() {
    let f = fixture(4);
    let small = WeatherState::new(field((3, 8, 8), 0), 0).unwrap();
    let mut inp = inputs(&f);
    inp.prev = &small;
    assert!(matches!(assemble_conditioning(&inp, &f.mask, FutureBoundaryMode::Require), Err(Error::Dimension { .. })));
}

#[test]
fn grid_validation() {
    assert!(GridSpec::new(10, 10, 5, vec!["a".into()], vec![1.0], 3.0).is_err());
    assert!(GridSpec::new(10, 10, 0, vec!["a".into()], vec![1.0], 3.0).is_err());
    assert!(GridSpec::new(10, 10, 2, vec!["a".into()], vec![1.0, 2.0], 3.0).is_err());
    let g = GridSpec::new(268, 238, 10, vec!["a".into()], vec![1.0], 3.0).unwrap();
    assert_eq!((g.interior_height(), g.interior_width()), (218, 248));
}
