//! Fixed-point solvers for the weighted location/scatter equations.
//!
//! Given a current `(mu, V)`, one step computes squared distances
//! `d_i = (x_i - mu)' V^{-1} (x_i - mu)`, weights `w_i = w(d_i)` and
//!
//! ```text
//! mu' = sum pi_i w_i x_i / sum pi_i w_i
//! V'  = p * sum pi_i w_i (x_i - mu)(x_i - mu)' / sum pi_i w_i d_i
//! ```
//!
//! where `pi_i` are the row weights of the [`DataSet`]. With the diagonal
//! approximation the distances use `diag(V)` only; the update of `V` is always
//! the full matrix.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::exec::ParMap;
use crate::linalg::{log_det_spd, median, sorted_eigen};
use crate::scale::tau_scale;
use crate::weights::WeightSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct LocationScatter {
    pub mu: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Distances use only the diagonal of `v` when set.
    pub diag_approx: bool,
}

impl LocationScatter {
    pub fn new(mu: DVector<f64>, v: DMatrix<f64>, diag_approx: bool) -> Result<Self> {
        let p = mu.len();
        if v.nrows() != p || v.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: v.nrows(),
            });
        }
        let asym = (&v - v.transpose()).amax();
        if asym > 1e-10 * v.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidData(format!(
                "scatter matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let ok = if diag_approx {
            v.diagonal().iter().all(|d| *d > 0.0)
        } else {
            v.clone().cholesky().is_some()
        };
        if !ok {
            return Err(Error::SingularScatter);
        }
        Ok(Self { mu, v, diag_approx })
    }

    pub fn identity(p: usize, diag_approx: bool) -> Self {
        Self {
            mu: DVector::zeros(p),
            v: DMatrix::identity(p, p),
            diag_approx,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Same location, scatter multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            mu: self.mu.clone(),
            v: &self.v * a,
            diag_approx: self.diag_approx,
        }
    }

    /// `|V|^{1/p}` of the full scatter matrix.
    pub fn det_root(&self) -> Result<f64> {
        Ok((log_det_spd(&self.v)? / self.dim() as f64).exp())
    }

    /// Copy with `V` rescaled to unit determinant.
    pub fn unit_determinant(&self) -> Result<Self> {
        let s = self.det_root()?;
        Ok(self.scaled(1.0 / s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub diag_approx: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            diag_approx: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub ls: LocationScatter,
    pub a: f64,
    pub active_mask: Vec<bool>,
    pub active_ratio: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// Set when the fit stopped on an error inside a solution set.
    pub failure: Option<Error>,
}

impl FitResult {
    fn failed(a: f64, init: LocationScatter, n: usize, err: Error) -> Self {
        Self {
            ls: init,
            a,
            active_mask: alloc::vec![false; n],
            active_ratio: 0.0,
            iterations: 0,
            converged: false,
            residual: f64::INFINITY,
            failure: Some(err),
        }
    }
}

/// Squared Mahalanobis distance of a single point.
pub fn mahalanobis(x: &DVector<f64>, ls: &LocationScatter) -> Result<f64> {
    if x.len() != ls.dim() {
        return Err(Error::DimensionMismatch {
            expected: ls.dim(),
            found: x.len(),
        });
    }
    let y = x - &ls.mu;
    if ls.diag_approx {
        let mut d = 0.0;
        for (yj, vj) in y.iter().zip(ls.v.diagonal().iter()) {
            if !(*vj > 0.0) {
                return Err(Error::SingularScatter);
            }
            d += yj * yj / vj;
        }
        Ok(d)
    } else {
        let chol = ls.v.clone().cholesky().ok_or(Error::SingularScatter)?;
        let z = chol.l_dirty().solve_lower_triangular(&y).ok_or(Error::SingularScatter)?;
        Ok(z.norm_squared())
    }
}

/// Centered observations `x_i - mu` (as rows) and their squared distances.
fn centered_distances(x: &DMatrix<f64>, ls: &LocationScatter) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (n, p) = x.shape();
    if p != ls.dim() {
        return Err(Error::DimensionMismatch {
            expected: ls.dim(),
            found: p,
        });
    }
    let mut y = x.clone();
    for j in 0..p {
        let m = ls.mu[j];
        y.column_mut(j).iter_mut().for_each(|v| *v -= m);
    }
    let mut d = alloc::vec![0.0; n];
    if ls.diag_approx {
        for j in 0..p {
            let vj = ls.v[(j, j)];
            if !(vj > 0.0) {
                return Err(Error::SingularScatter);
            }
            for (di, yij) in d.iter_mut().zip(y.column(j).iter()) {
                *di += yij * yij / vj;
            }
        }
    } else {
        let chol = ls.v.clone().cholesky().ok_or(Error::SingularScatter)?;
        let z = chol
            .l_dirty()
            .solve_lower_triangular(&y.transpose())
            .ok_or(Error::SingularScatter)?;
        for (i, di) in d.iter_mut().enumerate() {
            *di = z.column(i).norm_squared();
        }
    }
    Ok((y, d))
}

/// Weighted share of the flagged rows; an exact count ratio when weights are uniform.
pub fn weighted_fraction(data: &DataSet, mask: &[bool]) -> f64 {
    if data.has_uniform_weights() {
        let hits = mask.iter().filter(|m| **m).count();
        return hits as f64 / mask.len() as f64;
    }
    mask.iter()
        .zip(data.weights())
        .filter(|(m, _)| **m)
        .map(|(_, w)| *w)
        .sum::<f64>()
        .min(1.0)
}

/// Squared distances of every row of `data` under `ls`.
pub fn distances(data: &DataSet, ls: &LocationScatter) -> Result<Vec<f64>> {
    Ok(centered_distances(data.x(), ls)?.1)
}

/// `(sum pi w y, p * sum pi w y y', sum pi w, sum pi w d)` for the current state.
struct Moments {
    shift: DVector<f64>,
    outer: DMatrix<f64>,
    sw: f64,
    swd: f64,
}

fn weighted_moments(
    data: &DataSet,
    ls: &LocationScatter,
    spec: &WeightSpec,
) -> Result<Moments> {
    let (mut y, d) = centered_distances(data.x(), ls)?;
    let pi = data.weights();
    let w: Vec<f64> = pi
        .iter()
        .zip(&d)
        .map(|(pi, d)| pi * spec.weight_unchecked(*d))
        .collect();
    let sw: f64 = w.iter().sum();
    let swd: f64 = w.iter().zip(&d).map(|(w, d)| w * d).sum();
    let wv = DVector::from_column_slice(&w);
    let shift = y.tr_mul(&wv);
    for j in 0..y.ncols() {
        for (yij, wi) in y.column_mut(j).iter_mut().zip(&w) {
            *yij *= wi.sqrt();
        }
    }
    let mut outer = y.tr_mul(&y);
    outer *= data.p() as f64;
    Ok(Moments {
        shift,
        outer,
        sw,
        swd,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// One application of the fixed-point map.
pub fn fixed_point_step(
    data: &DataSet,
    current: &LocationScatter,
    spec: &WeightSpec,
) -> Result<LocationScatter> {
    step_at(data, current, spec, 1)
}

fn step_at(
    data: &DataSet,
    current: &LocationScatter,
    spec: &WeightSpec,
    iteration: usize,
) -> Result<LocationScatter> {
    let m = weighted_moments(data, current, spec)?;
    if !(m.sw > 0.0) {
        return Err(Error::EmptyActiveSet { iteration });
    }
    if !(m.swd > 0.0) {
        return Err(Error::DegenerateStep { iteration });
    }
    let mu = &current.mu + m.shift / m.sw;
    let mut v = m.outer / m.swd;
    symmetrize(&mut v);
    Ok(LocationScatter {
        mu,
        v,
        diag_approx: current.diag_approx,
    })
}

fn relative_change(old: &LocationScatter, new: &LocationScatter) -> f64 {
    let dm = (&new.mu - &old.mu).norm() / (1.0 + old.mu.norm());
    let dv = (&new.v - &old.v).norm() / (1.0 + old.v.norm());
    dm.max(dv)
}

#[derive(Debug, Clone, Copy)]
enum Variant {
    Plain,
    Regularized(f64),
    UnitDeterminant,
}

fn iterate(
    data: &DataSet,
    a: f64,
    init: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
    variant: Variant,
) -> Result<FitResult> {
    if init.dim() != data.p() {
        return Err(Error::DimensionMismatch {
            expected: data.p(),
            found: init.dim(),
        });
    }
    let p = data.p();
    let mut ls = LocationScatter {
        diag_approx: opts.diag_approx,
        ..init.clone()
    };
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for k in 1..=opts.max_iter {
        let mut next = step_at(data, &ls, spec, k)?;
        match variant {
            Variant::Plain => {}
            Variant::Regularized(tau) => {
                next.v /= 1.0 + tau;
                let shrink = tau / (1.0 + tau);
                for j in 0..p {
                    next.v[(j, j)] += shrink;
                }
            }
            Variant::UnitDeterminant => {
                next = next.unit_determinant()?;
            }
        }
        residual = relative_change(&ls, &next);
        ls = next;
        iterations = k;
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }
    let d = distances(data, &ls)?;
    let active_mask: Vec<bool> = d.iter().map(|d| spec.is_active(*d)).collect();
    let active_ratio = weighted_fraction(data, &active_mask);
    Ok(FitResult {
        ls,
        a,
        active_mask,
        active_ratio,
        iterations,
        converged,
        residual,
        failure: None,
    })
}

/// Iterates [`fixed_point_step`] from `init` until the relative change
/// `max(|dmu| / (1 + |mu|), |dV|_F / (1 + |V|_F))` drops to `opts.tol`.
///
/// `a` is recorded in the result; by convention `init = (mu~, a V~)`.
pub fn fit_sppca(
    data: &DataSet,
    a: f64,
    init: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_scale(a)?;
    iterate(data, a, init, spec, opts, Variant::Plain)
}

/// Fit started from `(base.mu, a * base.v)`.
pub fn fit_at_scale(
    data: &DataSet,
    a: f64,
    base: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    fit_sppca(data, a, &base.scaled(a), spec, opts)
}

/// Shrinks the scatter update towards the identity:
/// `V' = V_sppca / (1 + tau) + tau / (1 + tau) * I`.
pub fn fit_regularized(
    data: &DataSet,
    a: f64,
    tau: f64,
    init: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_scale(a)?;
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be finite and >= 0, got {tau}")));
    }
    let variant = if tau == 0.0 {
        Variant::Plain
    } else {
        Variant::Regularized(tau)
    };
    iterate(data, a, init, spec, opts, variant)
}

/// Solves the same equations under the constraint `|V| = 1`.
///
/// Each step is followed by a rescaling to unit determinant. Because the
/// scatter equation forces `tr(V^{-1} V') = p`, fixed points of this map are
/// exactly the solutions of the unconstrained equations that have unit
/// determinant. This is the scale-constrained functional whose influence
/// function and asymptotic variance the [`metrics`](crate::metrics) module describes.
pub fn fit_unit_determinant(
    data: &DataSet,
    init: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
) -> Result<FitResult> {
    let start = init.unit_determinant()?;
    iterate(data, 1.0, &start, spec, opts, Variant::UnitDeterminant)
}

fn check_scale(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("scale a must be positive, got {a}")))
    }
}

/// Relative residuals of the location and scatter equations at `ls`.
///
/// Location: `|sum pi w (x - mu)| / sum pi w |x - mu|`.
/// Scatter: `|p sum pi w (x - mu)(x - mu)' / sum pi w d - V|_F / |V|_F`.
pub fn estimating_residual(
    data: &DataSet,
    ls: &LocationScatter,
    spec: &WeightSpec,
) -> Result<(f64, f64)> {
    let (y, d) = centered_distances(data.x(), ls)?;
    let pi = data.weights();
    let mut num = DVector::zeros(data.p());
    let mut den = 0.0;
    let mut swd = 0.0;
    let mut outer = DMatrix::zeros(data.p(), data.p());
    for i in 0..data.n() {
        let w = pi[i] * spec.weight_unchecked(d[i]);
        if w == 0.0 {
            continue;
        }
        let yi = y.row(i).transpose();
        num.axpy(w, &yi, 1.0);
        den += w * yi.norm();
        swd += w * d[i];
        outer.ger(w, &yi, &yi, 1.0);
    }
    if !(swd > 0.0) {
        return Err(Error::EmptyActiveSet { iteration: 0 });
    }
    let loc = if den > 0.0 { num.norm() / den } else { 0.0 };
    let rhs = outer * (data.p() as f64 / swd);
    let scat = (rhs - &ls.v).norm() / ls.v.norm();
    Ok((loc, scat))
}

/// Column-wise median and the diagonal of squared tau-scales.
pub fn initial_estimate(data: &DataSet) -> Result<LocationScatter> {
    let p = data.p();
    let mut mu = DVector::zeros(p);
    let mut v = DMatrix::zeros(p, p);
    for j in 0..p {
        let col: Vec<f64> = data.x().column(j).iter().copied().collect();
        mu[j] = median(&col);
        match tau_scale(&col) {
            Some(s) if s >= 1e-12 => v[(j, j)] = s * s,
            _ => return Err(Error::DegenerateScale { column: j }),
        }
    }
    Ok(LocationScatter {
        mu,
        v,
        diag_approx: false,
    })
}

/// One fit per grid value, each started from `(mu~, a V~)`.
///
/// Fits that fail are kept in place with `converged = false` and the error in
/// [`FitResult::failure`].
pub fn solution_set<E: ParMap>(
    data: &DataSet,
    grid: &[f64],
    spec: &WeightSpec,
    opts: &FitOptions,
    exec: &E,
) -> Result<Vec<FitResult>> {
    check_grid(grid)?;
    let base = initial_estimate(data)?;
    Ok(solution_set_from(data, grid, &base, spec, opts, exec))
}

/// [`solution_set`] with a caller-supplied base estimate.
pub fn solution_set_from<E: ParMap>(
    data: &DataSet,
    grid: &[f64],
    base: &LocationScatter,
    spec: &WeightSpec,
    opts: &FitOptions,
    exec: &E,
) -> Vec<FitResult> {
    exec.map(grid.len(), |i| {
        let a = grid[i];
        let init = base.scaled(a);
        fit_sppca(data, a, &init, spec, opts)
            .unwrap_or_else(|e| FitResult::failed(a, init, data.n(), e))
    })
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("grid is empty".into()));
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "grid must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TmeFit {
    pub ls: LocationScatter,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    /// Rows sitting exactly at `mu`, left out of every update.
    pub dropped_zero: usize,
}

/// Tyler's shape estimate around a fixed location, normalized to `tr(V) = p`.
pub fn fit_tme(data: &DataSet, mu: &DVector<f64>, opts: &FitOptions) -> Result<TmeFit> {
    let p = data.p();
    if mu.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: mu.len(),
        });
    }
    let mut ls = LocationScatter {
        mu: mu.clone(),
        v: DMatrix::identity(p, p),
        diag_approx: opts.diag_approx,
    };
    let pi = data.weights();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut dropped_zero = 0;
    for k in 1..=opts.max_iter {
        let (mut y, d) = centered_distances(data.x(), &ls)?;
        dropped_zero = d.iter().filter(|d| **d == 0.0).count();
        if dropped_zero == data.n() {
            return Err(Error::EmptyActiveSet { iteration: k });
        }
        let scale: Vec<f64> = pi
            .iter()
            .zip(&d)
            .map(|(pi, d)| if *d > 0.0 { (pi / d).sqrt() } else { 0.0 })
            .collect();
        for j in 0..p {
            for (yij, s) in y.column_mut(j).iter_mut().zip(&scale) {
                *yij *= s;
            }
        }
        let mut v = y.tr_mul(&y);
        symmetrize(&mut v);
        let tr = v.trace();
        if !(tr > 0.0) {
            return Err(Error::DegenerateStep { iteration: k });
        }
        v *= p as f64 / tr;
        let next = LocationScatter {
            mu: mu.clone(),
            v,
            diag_approx: opts.diag_approx,
        };
        residual = relative_change(&ls, &next);
        ls = next;
        iterations = k;
        if residual <= opts.tol {
            converged = true;
            break;
        }
    }
    Ok(TmeFit {
        ls,
        iterations,
        converged,
        residual,
        dropped_zero,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub eigenvalues: Vec<f64>,
    /// `p x k`, orthonormal columns, largest-magnitude entry of each column positive.
    pub eigenvectors: DMatrix<f64>,
    pub k: usize,
}

impl PcaModel {
    /// Scores `Gamma_k' (x_i - mu)` for every row, as an `n x k` matrix.
    pub fn scores(&self, data: &DataSet, mu: &DVector<f64>) -> DMatrix<f64> {
        let mut y = data.x().clone();
        for j in 0..y.ncols() {
            let m = mu[j];
            y.column_mut(j).iter_mut().for_each(|v| *v -= m);
        }
        y * &self.eigenvectors
    }
}

/// Leading `k` eigenpairs of the scatter matrix.
pub fn pca(ls: &LocationScatter, k: usize) -> Result<PcaModel> {
    let p = ls.dim();
    if k == 0 || k > p {
        return Err(Error::Domain(format!("rank k must lie in 1..={p}, got {k}")));
    }
    let (values, vectors) = sorted_eigen(&ls.v);
    Ok(PcaModel {
        eigenvalues: values.iter().take(k).copied().collect(),
        eigenvectors: vectors.columns(0, k).into_owned(),
        k,
    })
}
