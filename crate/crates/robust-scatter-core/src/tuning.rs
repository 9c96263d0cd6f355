//! Choosing the initialization scale `a` from the active-ratio curve.
//!
//! For each `a` on a grid the solver is started at `(mu~, a V~)` and the
//! fraction of observations left with positive weight is recorded. When a
//! contaminating cluster sits away from the bulk, the curve rises, flattens
//! while the trimming ball covers the bulk but not the cluster, and rises
//! again once the cluster is absorbed. The selected scale is the first
//! interior local minimum of the slope of a smoothing spline through the curve.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::estimator::{
    check_grid, distances, fit_at_scale, initial_estimate, solution_set_from, FitOptions,
    FitResult, LocationScatter,
};
use crate::exec::ParMap;
use crate::spline::{smoothing_spline, Smoothing};
use crate::weights::WeightSpec;

/// Ratio between consecutive probes of the coarse scan over `[0.05 p, 50 p]`.
const SCAN_FACTOR: f64 = 1.25;
const SCAN_LOW: f64 = 0.05;
const SCAN_HIGH: f64 = 50.0;
/// Relative width at which the bisection on `a` stops.
const BISECT_REL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ArCurve {
    pub grid: Vec<f64>,
    pub ar_raw: Vec<f64>,
    pub ar_smooth: Vec<f64>,
    pub slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub a_star: f64,
    pub index: usize,
    pub candidates: Vec<f64>,
    pub fallback_used: bool,
    pub ar_at_a_star: f64,
}

/// Weighted fraction of rows with `d(x_i, mu, V) < ln(1/alpha)` at the fitted estimate.
pub fn active_ratio(fit: &FitResult, data: &DataSet, spec: &WeightSpec) -> f64 {
    active_ratio_at(&fit.ls, data, spec).unwrap_or(0.0)
}

pub fn active_ratio_at(ls: &LocationScatter, data: &DataSet, spec: &WeightSpec) -> Result<f64> {
    let d = distances(data, ls)?;
    let mask: Vec<bool> = d.iter().map(|d| spec.is_active(*d)).collect();
    Ok(crate::estimator::weighted_fraction(data, &mask))
}

/// Active ratio after a fit at scale `a`; a fit that breaks down counts as 0.
fn probe(data: &DataSet, a: f64, base: &LocationScatter, spec: &WeightSpec, opts: &FitOptions) -> f64 {
    fit_at_scale(data, a, base, spec, opts)
        .map(|f| f.active_ratio)
        .unwrap_or(0.0)
}

fn bisect<F: Fn(f64) -> bool>(mut lo: f64, mut hi: f64, reached: F) -> f64 {
    while hi / lo - 1.0 > BISECT_REL {
        let mid = (lo * hi).sqrt();
        if reached(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Equally spaced grid on `[a_min, a_max]`, where `a_min` is the smallest
/// scale whose active ratio reaches `ell` and `a_max` the smallest whose
/// active ratio is 1.
pub fn build_grid<E: ParMap>(
    data: &DataSet,
    ell: f64,
    m: usize,
    spec: &WeightSpec,
    opts: &FitOptions,
    exec: &E,
) -> Result<Vec<f64>> {
    if !(ell > 0.0 && ell < 1.0) {
        return Err(Error::Domain(alloc::format!("ell must lie in (0, 1), got {ell}")));
    }
    if m < 2 {
        return Err(Error::Domain(alloc::format!("grid needs at least 2 points, got {m}")));
    }
    let base = initial_estimate(data)?;
    let p = data.p() as f64;
    let mut scan = Vec::new();
    let mut a = SCAN_LOW * p;
    while a <= SCAN_HIGH * p * (1.0 + 1e-12) {
        scan.push(a);
        a *= SCAN_FACTOR;
    }
    let ar = exec.map(scan.len(), |i| probe(data, scan[i], &base, spec, opts));
    let full = |v: f64| v >= 1.0 - 1e-12;

    let locate = |hit: &dyn Fn(f64) -> bool, target: f64| -> Result<f64> {
        let first = ar
            .iter()
            .position(|v| hit(*v))
            .ok_or(Error::GridNotFound { target })?;
        if first == 0 {
            return Ok(scan[0]);
        }
        Ok(bisect(scan[first - 1], scan[first], |a| {
            hit(probe(data, a, &base, spec, opts))
        }))
    };
    let a_min = locate(&|v| v >= ell, ell)?;
    let a_max = locate(&full, 1.0)?;
    if !(a_max > a_min) {
        return Err(Error::GridNotFound { target: ell });
    }
    let step = (a_max - a_min) / (m - 1) as f64;
    Ok((0..m)
        .map(|i| if i + 1 == m { a_max } else { a_min + step * i as f64 })
        .collect())
}

/// Grid size used when none is given: `n / 5` rounded, at least 10.
pub fn default_grid_size(n: usize) -> usize {
    ((n as f64 / 5.0).round() as usize).max(10)
}

/// `m` equally spaced points on `[lo, hi]`.
pub fn linear_grid(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    let step = (hi - lo) / (m.max(2) - 1) as f64;
    (0..m).map(|i| lo + step * i as f64).collect()
}

/// Spline fit through the raw curve. Fitted values are clipped to `[0, 1]`;
/// slopes are left as the spline gives them.
pub fn smooth_curve(grid: &[f64], ar_raw: &[f64], smoothing: Smoothing) -> Result<ArCurve> {
    smooth_curve_checked(grid, ar_raw, smoothing).map(|(c, _)| c)
}

/// Same as [`smooth_curve`], also reporting whether GCV fell back to a fixed
/// number of degrees of freedom.
pub fn smooth_curve_checked(
    grid: &[f64],
    ar_raw: &[f64],
    smoothing: Smoothing,
) -> Result<(ArCurve, bool)> {
    let fit = smoothing_spline(grid, ar_raw, smoothing)?;
    let curve = ArCurve {
        grid: grid.to_vec(),
        ar_raw: ar_raw.to_vec(),
        ar_smooth: fit.fitted.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        slope: fit.slope,
    };
    Ok((curve, fit.gcv_fallback))
}

fn strict_local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&j| values[j] < values[j - 1] && values[j] < values[j + 1])
        .collect()
}

fn select_from(curve: &ArCurve, minima: Vec<usize>) -> TuningResult {
    let m = curve.grid.len();
    let (index, fallback_used) = match minima.first() {
        Some(&j) => (j, false),
        None => (m - 1, true),
    };
    TuningResult {
        a_star: curve.grid[index],
        index,
        candidates: minima.iter().map(|&j| curve.grid[j]).collect(),
        fallback_used,
        ar_at_a_star: curve.ar_raw[index],
    }
}

/// First interior strict local minimum of the slope, or the last grid point
/// (flagged) when there is none.
pub fn select_a_star(curve: &ArCurve) -> TuningResult {
    select_from(curve, strict_local_minima(&curve.slope))
}

/// Applies the local-minimum test to the smoothed curve itself instead of its slope.
#[doc(hidden)]
pub fn select_a_star_literal(curve: &ArCurve) -> TuningResult {
    select_from(curve, strict_local_minima(&curve.ar_smooth))
}

/// Output of a full tuning pass over a fixed grid.
#[derive(Debug, Clone)]
pub struct Tuned {
    pub fits: Vec<FitResult>,
    pub curve: ArCurve,
    pub result: TuningResult,
    pub gcv_fallback: bool,
}

/// Fits every grid point from `base`, smooths the curve and selects `a*`.
pub fn tune_on_grid<E: ParMap>(
    data: &DataSet,
    grid: &[f64],
    base: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
    smoothing: Smoothing,
    exec: &E,
) -> Result<Tuned> {
    check_grid(grid)?;
    let fits = solution_set_from(data, grid, base, spec, opts, exec);
    let ar: Vec<f64> = fits.iter().map(|f| f.active_ratio).collect();
    let (curve, gcv_fallback) = smooth_curve_checked(grid, &ar, smoothing)?;
    let result = select_a_star(&curve);
    Ok(Tuned {
        fits,
        curve,
        result,
        gcv_fallback,
    })
}
