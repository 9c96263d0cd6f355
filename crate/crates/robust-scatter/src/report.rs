//! Serialized forms of models, tuning curves and experiment tables.

use robust_scatter_core::estimator::{FitResult, PcaModel};
use robust_scatter_core::simgen::{Contaminant, ExperimentRow, ExperimentTable, ReplicateRecord};
use robust_scatter_core::tuning::{ArCurve, TuningResult};
use serde::{Deserialize, Serialize};

use crate::io::Standardization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCurveReport {
    pub a: Vec<f64>,
    pub ar_raw: Vec<f64>,
    pub ar_smooth: Vec<f64>,
    pub slope: Vec<f64>,
}

impl From<&ArCurve> for ArCurveReport {
    fn from(c: &ArCurve) -> Self {
        Self {
            a: c.grid.clone(),
            ar_raw: c.ar_raw.clone(),
            ar_smooth: c.ar_smooth.clone(),
            slope: c.slope.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub a_star: f64,
    pub ar_at_a_star: f64,
    pub fallback_used: bool,
    pub candidates: Vec<f64>,
    pub index: usize,
    pub gcv_fallback: bool,
}

impl TuningReport {
    pub fn new(r: &TuningResult, gcv_fallback: bool) -> Self {
        Self {
            a_star: r.a_star,
            ar_at_a_star: r.ar_at_a_star,
            fallback_used: r.fallback_used,
            candidates: r.candidates.clone(),
            index: r.index,
            gcv_fallback,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub mu: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[j]` is the `j`-th principal direction.
    pub eigenvectors: Vec<Vec<f64>>,
    pub a: f64,
    pub alpha: f64,
    pub k: usize,
    pub tau: f64,
    pub diag_approx: bool,
    pub converged: bool,
    pub iterations: usize,
    pub active_ratio: f64,
    pub scatter: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardization: Option<StandardizationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationReport {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl From<&Standardization> for StandardizationReport {
    fn from(s: &Standardization) -> Self {
        Self {
            center: s.center.clone(),
            scale: s.scale.clone(),
        }
    }
}

impl ModelReport {
    pub fn new(fit: &FitResult, model: &PcaModel, alpha: f64, tau: f64, standardization: Option<&Standardization>) -> Self {
        let v = &fit.ls.v;
        Self {
            mu: fit.ls.mu.iter().copied().collect(),
            eigenvalues: model.eigenvalues.clone(),
            eigenvectors: model
                .eigenvectors
                .column_iter()
                .map(|c| c.iter().copied().collect())
                .collect(),
            a: fit.a,
            alpha,
            k: model.k,
            tau,
            diag_approx: fit.ls.diag_approx,
            converged: fit.converged,
            iterations: fit.iterations,
            active_ratio: fit.active_ratio,
            scatter: v.row_iter().map(|r| r.iter().copied().collect()).collect(),
            standardization: standardization.map(Into::into),
        }
    }
}

/// One line of `experiment.csv`; `experiment.json` carries the same records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub nu: f64,
    pub pi: f64,
    pub c: f64,
    pub seed: u64,
    pub contaminant: String,
    pub radius_frac: Option<f64>,
    pub method: String,
    pub mean_rho: Option<f64>,
    pub se_rho: Option<f64>,
    pub n_ok: usize,
    pub n_fail: usize,
    pub invalid: bool,
}

impl From<&ExperimentRow> for ExperimentRecord {
    fn from(r: &ExperimentRow) -> Self {
        let (contaminant, radius_frac) = match r.config.contaminant {
            Contaminant::Mixture => ("mixture".to_owned(), None),
            Contaminant::Truncated { radius_frac } => ("truncated".to_owned(), Some(radius_frac)),
        };
        Self {
            n: r.config.n,
            p: r.config.p,
            k: r.config.k,
            nu: r.config.nu,
            pi: r.config.pi,
            c: r.config.c,
            seed: r.config.seed,
            contaminant,
            radius_frac,
            method: r.method.name().to_owned(),
            mean_rho: r.mean_rho,
            se_rho: r.se_rho,
            n_ok: r.n_ok,
            n_fail: r.n_fail,
            invalid: r.invalid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRho {
    pub method: String,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub config_index: usize,
    pub replicate: usize,
    pub seed: u64,
    pub contaminated: usize,
    pub a_star: Option<f64>,
    pub ar_at_a_star: Option<f64>,
    pub fallback_used: Option<bool>,
    pub rho: Vec<MethodRho>,
}

impl From<&ReplicateRecord> for ReplicateReport {
    fn from(r: &ReplicateRecord) -> Self {
        Self {
            config_index: r.config_index,
            replicate: r.replicate,
            seed: r.seed,
            contaminated: r.contaminated,
            a_star: r.a_star,
            ar_at_a_star: r.ar_at_a_star,
            fallback_used: r.fallback_used,
            rho: r
                .rho
                .iter()
                .map(|(m, v)| MethodRho {
                    method: m.name().to_owned(),
                    rho: *v,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ExperimentRecord>,
    pub replicates: Vec<ReplicateReport>,
}

impl From<&ExperimentTable> for ExperimentReport {
    fn from(t: &ExperimentTable) -> Self {
        Self {
            rows: t.rows.iter().map(Into::into).collect(),
            replicates: t.replicates.iter().map(Into::into).collect(),
        }
    }
}
