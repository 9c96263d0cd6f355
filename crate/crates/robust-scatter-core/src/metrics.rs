//! Subspace similarity, influence functions and asymptotic variances.
//!
//! Influence functions and variances refer to the scale-constrained estimator
//! whose scatter is normalized to `|V| = 1` (see
//! [`fit_unit_determinant`](crate::estimator::fit_unit_determinant)). For an
//! elliptical model with scatter `V_0` and radial generator `psi`, write
//! `sigma = |V_0|^{1/p}`, `V_s0 = V_0 / sigma` and
//! `psi_s(u) = sigma^{-p/2} psi(u / sigma)`. The constants `eta`, `phi` and `xi`
//! are radial integrals of `psi_s` and the weight function.

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::estimator::{fit_unit_determinant, FitOptions, LocationScatter};
use crate::linalg::{is_column_orthonormal, sorted_eigen};
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
use crate::weights::{WeightKind, WeightSpec};

/// Mean singular value of `Gamma_hat' Gamma`, each clamped to `[0, 1]`.
pub fn similarity_rho(gamma_hat: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<f64> {
    if gamma_hat.shape() != gamma.shape() {
        return Err(Error::DimensionMismatch {
            expected: gamma.ncols(),
            found: gamma_hat.ncols(),
        });
    }
    if gamma.ncols() == 0 || gamma.ncols() > gamma.nrows() {
        return Err(Error::Domain("subspace rank must lie in 1..=p".into()));
    }
    if !is_column_orthonormal(gamma_hat, 1e-8) || !is_column_orthonormal(gamma, 1e-8) {
        return Err(Error::Domain("bases must have orthonormal columns".into()));
    }
    let m = gamma_hat.tr_mul(gamma);
    let sv = m.singular_values();
    Ok(sv.iter().map(|s| s.clamp(0.0, 1.0)).sum::<f64>() / sv.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RadialKind {
    Gaussian,
    StudentT { nu: f64 },
}

/// Density generator of an elliptical law in dimension `p`, rescaled by `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSpec {
    pub kind: RadialKind,
    pub p: usize,
    pub scale: f64,
}

impl RadialSpec {
    pub fn gaussian(p: usize) -> Self {
        Self {
            kind: RadialKind::Gaussian,
            p,
            scale: 1.0,
        }
    }

    pub fn student_t(p: usize, nu: f64) -> Self {
        Self {
            kind: RadialKind::StudentT { nu },
            p,
            scale: 1.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || !(self.scale > 0.0) {
            return Err(Error::Domain("radial spec needs p >= 1 and scale > 0".into()));
        }
        if let RadialKind::StudentT { nu } = self.kind {
            if !(nu > 0.0) {
                return Err(Error::Domain("degrees of freedom must be positive".into()));
            }
        }
        Ok(())
    }

    fn base_psi(&self, u: f64) -> f64 {
        let p = self.p as f64;
        match self.kind {
            RadialKind::Gaussian => (2.0 * core::f64::consts::PI).powf(-p / 2.0) * (-u / 2.0).exp(),
            RadialKind::StudentT { nu } => {
                let log_c = libm::lgamma((nu + p) / 2.0)
                    - libm::lgamma(nu / 2.0)
                    - (p / 2.0) * (nu * core::f64::consts::PI).ln();
                (log_c - (nu + p) / 2.0 * (1.0 + u / nu).ln()).exp()
            }
        }
    }

    fn base_dpsi(&self, u: f64) -> f64 {
        let p = self.p as f64;
        match self.kind {
            RadialKind::Gaussian => -0.5 * self.base_psi(u),
            RadialKind::StudentT { nu } => -(nu + p) / (2.0 * (nu + u)) * self.base_psi(u),
        }
    }

    /// `psi_s(u) = scale^{-p/2} psi(u / scale)`.
    pub fn psi(&self, u: f64) -> f64 {
        self.scale.powf(-(self.p as f64) / 2.0) * self.base_psi(u / self.scale)
    }

    pub fn dpsi(&self, u: f64) -> f64 {
        self.scale.powf(-(self.p as f64) / 2.0 - 1.0) * self.base_dpsi(u / self.scale)
    }

    /// Surface area of the unit sphere in `R^p`.
    pub fn sphere_area(&self) -> f64 {
        let h = self.p as f64 / 2.0;
        2.0 * core::f64::consts::PI.powf(h) / libm::tgamma(h)
    }

    /// `int_{R^p} g(y'y) dy` via its radial form `S_{p-1} int_0^R r^{p-1} g(r^2) dr`.
    pub fn radial_integral<G: Fn(f64) -> f64>(&self, g: G, radius: f64, opts: &QuadOptions) -> Result<f64> {
        let p = self.p as i32;
        let f = |r: f64| r.powi(p - 1) * g(r * r);
        let v = if radius.is_finite() {
            integrate(f, 0.0, radius, opts)?
        } else {
            integrate_to_infinity(f, 0.0, opts)?
        };
        Ok(self.sphere_area() * v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticConstants {
    pub eta: f64,
    pub phi: f64,
    pub xi: f64,
}

/// Evaluates
///
/// ```text
/// eta = |(2/p)        int y'y     w(y'y) psi_s'(y'y) dy|^{-1}
/// phi = |(2/(p(p+2))) int (y'y)^2 w(y'y) psi_s'(y'y) dy|^{-1}
/// xi  = phi^2 / (p(p+2)) int (y'y)^2 w(y'y)^2 psi_s(y'y) dy
/// ```
///
/// The first two integrals are negative whenever `psi` decreases, so their
/// absolute values are used. With a Gaussian generator and unit weight this
/// gives `eta = phi = xi = 1`, matching the influence function `x - mu` of the mean.
pub fn asymptotic_constants(radial: &RadialSpec, spec: &WeightSpec) -> Result<AsymptoticConstants> {
    radial.validate()?;
    spec.validate()?;
    let opts = QuadOptions {
        rel_tol: 1e-10,
        ..Default::default()
    };
    let radius = match spec.kind {
        WeightKind::HardThresholdExponential => spec.cutoff().sqrt(),
        WeightKind::Unit => f64::INFINITY,
    };
    let w = |u: f64| spec.weight_unchecked(u);
    let p = radial.p as f64;
    let i1 = radial.radial_integral(|u| u * w(u) * radial.dpsi(u), radius, &opts)?;
    let i2 = radial.radial_integral(|u| u * u * w(u) * radial.dpsi(u), radius, &opts)?;
    let i3 = radial.radial_integral(|u| u * u * w(u) * w(u) * radial.psi(u), radius, &opts)?;
    let eta = 1.0 / (2.0 / p * i1).abs();
    let phi = 1.0 / (2.0 / (p * (p + 2.0)) * i2).abs();
    let xi = phi * phi / (p * (p + 2.0)) * i3;
    if !(eta.is_finite() && phi.is_finite() && xi.is_finite()) {
        return Err(Error::Quadrature("constants are not finite".into()));
    }
    Ok(AsymptoticConstants { eta, phi, xi })
}

/// Location and unit-determinant scatter of the model, with its spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct IfModel {
    pub mu0: DVector<f64>,
    pub vs0: DMatrix<f64>,
    /// Eigenvalues of `vs0`, descending.
    pub lambda: DVector<f64>,
    pub gamma: DMatrix<f64>,
}

impl IfModel {
    /// Normalizes `v0` to unit determinant and diagonalizes it.
    pub fn new(mu0: DVector<f64>, v0: &DMatrix<f64>) -> Result<Self> {
        let ls = LocationScatter::new(mu0, v0.clone(), false)?.unit_determinant()?;
        let (lambda, gamma) = sorted_eigen(&ls.v);
        Ok(Self {
            mu0: ls.mu,
            vs0: ls.v,
            lambda,
            gamma,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    fn coords(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.gamma.tr_mul(&(x - &self.mu0)))
    }

    /// Squared distance `d(x, mu_0, V_s0)`.
    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        let z = self.coords(x)?;
        Ok(z.iter().zip(self.lambda.iter()).map(|(z, l)| z * z / l).sum())
    }

    fn check_distinct(&self, j: usize) -> Result<()> {
        if j >= self.dim() {
            return Err(Error::Domain(alloc::format!("index {j} out of range")));
        }
        for k in 0..self.dim() {
            if k != j && (self.lambda[k] - self.lambda[j]).abs() <= 1e-10 {
                return Err(Error::DegenerateSpectrum { i: j.min(k), j: j.max(k) });
            }
        }
        Ok(())
    }

    /// Ratio `lambda_j / lambda_i` of the model eigenvalues (0-based indices).
    pub fn ratio(&self, i: usize, j: usize) -> f64 {
        self.lambda[j] / self.lambda[i]
    }
}

/// `eta w(d) (x - mu_0)`.
pub fn if_location(x: &DVector<f64>, model: &IfModel, consts: &AsymptoticConstants, spec: &WeightSpec) -> Result<DVector<f64>> {
    let d = model.distance(x)?;
    Ok((x - &model.mu0) * (consts.eta * spec.weight_unchecked(d)))
}

/// Influence function of the eigenvalue ratio `lambda_j / lambda_i` (0-based):
/// `phi w(d) lambda_ij [ (gamma_j' y)^2 / lambda_j - (gamma_i' y)^2 / lambda_i ]`.
pub fn if_eigenvalue_ratio(
    x: &DVector<f64>,
    i: usize,
    j: usize,
    model: &IfModel,
    consts: &AsymptoticConstants,
    spec: &WeightSpec,
) -> Result<f64> {
    if i == j {
        return Err(Error::Domain("ratio needs two distinct indices".into()));
    }
    model.check_distinct(i)?;
    model.check_distinct(j)?;
    let z = model.coords(x)?;
    let d: f64 = z.iter().zip(model.lambda.iter()).map(|(z, l)| z * z / l).sum();
    let (li, lj) = (model.lambda[i], model.lambda[j]);
    Ok(consts.phi * spec.weight_unchecked(d) * (lj / li) * (z[j] * z[j] / lj - z[i] * z[i] / li))
}

/// `phi w(d) (gamma_j' y) (lambda_j I - V_s0)^+ y`.
pub fn if_eigenvector(
    x: &DVector<f64>,
    j: usize,
    model: &IfModel,
    consts: &AsymptoticConstants,
    spec: &WeightSpec,
) -> Result<DVector<f64>> {
    model.check_distinct(j)?;
    let z = model.coords(x)?;
    let d: f64 = z.iter().zip(model.lambda.iter()).map(|(z, l)| z * z / l).sum();
    let lj = model.lambda[j];
    let mut coef = DVector::zeros(model.dim());
    for k in 0..model.dim() {
        if k != j {
            coef[k] = z[k] / (lj - model.lambda[k]);
        }
    }
    Ok(&model.gamma * coef * (consts.phi * spec.weight_unchecked(d) * z[j]))
}

/// Constant `C` with `|IF_gamma_j(x)| <= C h(d(x))` for every `x`:
/// `phi sqrt(lambda_j) max_{k != j} sqrt(lambda_k) / |lambda_j - lambda_k|`.
pub fn if_eigenvector_bound(j: usize, model: &IfModel, consts: &AsymptoticConstants) -> Result<f64> {
    model.check_distinct(j)?;
    let lj = model.lambda[j];
    let worst = (0..model.dim())
        .filter(|&k| k != j)
        .map(|k| model.lambda[k].sqrt() / (lj - model.lambda[k]).abs())
        .fold(0.0, f64::max);
    Ok(consts.phi * lj.sqrt() * worst)
}

/// Constant `C` with `|IF_lambda_ij(x)| <= C h(d(x))`, namely `phi lambda_ij`.
pub fn if_eigenvalue_ratio_bound(i: usize, j: usize, model: &IfModel, consts: &AsymptoticConstants) -> f64 {
    consts.phi * model.ratio(i, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Location,
    /// Eigenvector `j` (0-based, eigenvalues descending).
    Eigvec(usize),
    /// Ratio `lambda_j / lambda_i`.
    EigRatio(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum IfValue {
    Vector(DVector<f64>),
    Scalar(f64),
}

impl IfValue {
    pub fn as_vector(&self) -> DVector<f64> {
        match self {
            IfValue::Vector(v) => v.clone(),
            IfValue::Scalar(s) => DVector::from_element(1, *s),
        }
    }
}

/// Closed-form influence function matching a [`Functional`].
pub fn closed_form_if(
    functional: Functional,
    x: &DVector<f64>,
    model: &IfModel,
    consts: &AsymptoticConstants,
    spec: &WeightSpec,
) -> Result<IfValue> {
    Ok(match functional {
        Functional::Location => IfValue::Vector(if_location(x, model, consts, spec)?),
        Functional::Eigvec(j) => IfValue::Vector(if_eigenvector(x, j, model, consts, spec)?),
        Functional::EigRatio(i, j) => IfValue::Scalar(if_eigenvalue_ratio(x, i, j, model, consts, spec)?),
    })
}

struct Extracted {
    mu: DVector<f64>,
    lambda: DVector<f64>,
    gamma: DMatrix<f64>,
}

fn extract(ls: &LocationScatter, reference: Option<&DMatrix<f64>>) -> Extracted {
    let (lambda, mut gamma) = sorted_eigen(&ls.v);
    if let Some(r) = reference {
        for k in 0..gamma.ncols() {
            if gamma.column(k).dot(&r.column(k)) < 0.0 {
                gamma.column_mut(k).neg_mut();
            }
        }
    }
    Extracted {
        mu: ls.mu.clone(),
        lambda,
        gamma,
    }
}

/// Finite-perturbation influence function of the unit-determinant estimator.
///
/// The base fit on the reference sample is computed once; each evaluation
/// refits on `(1 - eps) F_n + eps delta_x`, warm-started from the base fit, and
/// returns the difference quotient. Eigenvector signs are aligned with the base fit.
pub struct EmpiricalIf<'a> {
    reference: &'a DataSet,
    spec: WeightSpec,
    opts: FitOptions,
    base_ls: LocationScatter,
    base: Extracted,
}

impl<'a> EmpiricalIf<'a> {
    pub fn new(reference: &'a DataSet, start: &LocationScatter, spec: &WeightSpec, opts: &FitOptions) -> Result<Self> {
        let fit = fit_unit_determinant(reference, start, spec, opts)?;
        if !fit.converged {
            return Err(Error::NoConvergence {
                iterations: fit.iterations,
                residual: fit.residual,
            });
        }
        let base = extract(&fit.ls, None);
        Ok(Self {
            reference,
            spec: *spec,
            opts: *opts,
            base_ls: fit.ls,
            base,
        })
    }

    pub fn base_fit(&self) -> &LocationScatter {
        &self.base_ls
    }

    pub fn evaluate(&self, functional: Functional, x: &DVector<f64>, eps: f64) -> Result<IfValue> {
        if !(eps > 0.0 && eps <= 0.01) {
            return Err(Error::Domain(alloc::format!("eps must lie in (0, 0.01], got {eps}")));
        }
        let p = self.base.mu.len();
        let check = |k: usize| {
            if k < p {
                Ok(())
            } else {
                Err(Error::Domain(alloc::format!("index {k} out of range")))
            }
        };
        // A point with zero weight leaves the base fit a solution of the
        // perturbed equations, so the difference quotient is exactly zero.
        if !self.spec.is_active(crate::estimator::mahalanobis(x, &self.base_ls)?) {
            return Ok(match functional {
                Functional::Location => IfValue::Vector(DVector::zeros(p)),
                Functional::Eigvec(j) => {
                    check(j)?;
                    IfValue::Vector(DVector::zeros(p))
                }
                Functional::EigRatio(i, j) => {
                    check(i)?;
                    check(j)?;
                    IfValue::Scalar(0.0)
                }
            });
        }
        let perturbed = self.reference.contaminate(x, eps)?;
        let fit = fit_unit_determinant(&perturbed, &self.base_ls, &self.spec, &self.opts)?;
        if !fit.converged {
            return Err(Error::NoConvergence {
                iterations: fit.iterations,
                residual: fit.residual,
            });
        }
        let new = extract(&fit.ls, Some(&self.base.gamma));
        Ok(match functional {
            Functional::Location => IfValue::Vector((new.mu - &self.base.mu) / eps),
            Functional::Eigvec(j) => {
                check(j)?;
                IfValue::Vector((new.gamma.column(j) - self.base.gamma.column(j)) / eps)
            }
            Functional::EigRatio(i, j) => {
                check(i)?;
                check(j)?;
                let r1 = new.lambda[j] / new.lambda[i];
                let r0 = self.base.lambda[j] / self.base.lambda[i];
                IfValue::Scalar((r1 - r0) / eps)
            }
        })
    }
}

/// One-shot [`EmpiricalIf`] evaluation started from the reference's robust initial estimate.
pub fn empirical_if(
    functional: Functional,
    x: &DVector<f64>,
    reference: &DataSet,
    eps: f64,
    spec: &WeightSpec,
    opts: &FitOptions,
) -> Result<IfValue> {
    let start = crate::estimator::initial_estimate(reference)?;
    EmpiricalIf::new(reference, &start, spec, opts)?.evaluate(functional, x, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceTarget {
    Eigvec(usize),
    EigRatio(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variance {
    Matrix(DMatrix<f64>),
    Scalar(f64),
}

/// Asymptotic covariance of `sqrt(n) (gamma_hat_j - gamma_j)`:
/// `xi lambda_j V_s0 (lambda_j I - V_s0)^{+2}`; and of
/// `sqrt(n) (lambda_hat_ij - lambda_ij)`: `4 xi lambda_ij^2`.
pub fn asymptotic_variance(target: VarianceTarget, model: &IfModel, consts: &AsymptoticConstants) -> Result<Variance> {
    match target {
        VarianceTarget::EigRatio(i, j) => {
            if i == j {
                return Err(Error::Domain("ratio needs two distinct indices".into()));
            }
            model.check_distinct(i)?;
            model.check_distinct(j)?;
            let r = model.ratio(i, j);
            Ok(Variance::Scalar(4.0 * consts.xi * r * r))
        }
        VarianceTarget::Eigvec(j) => {
            model.check_distinct(j)?;
            let lj = model.lambda[j];
            let p = model.dim();
            let mut diag = DVector::zeros(p);
            for k in 0..p {
                if k != j {
                    let gap = lj - model.lambda[k];
                    diag[k] = consts.xi * lj * model.lambda[k] / (gap * gap);
                }
            }
            let m = &model.gamma * DMatrix::from_diagonal(&diag) * model.gamma.transpose();
            Ok(Variance::Matrix(m))
        }
    }
}

/// Ratio variance `4 xi r^2` for a hypothetical eigenvalue ratio `r`.
pub fn ratio_variance(consts: &AsymptoticConstants, r: f64) -> f64 {
    4.0 * consts.xi * r * r
}
