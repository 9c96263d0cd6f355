//! Contaminated elliptical samples and replicate experiments.
//!
//! A configuration draws a main component `t_nu(0, V_0)` and, with probability
//! `pi` per row, a contaminant `t_3(mu_out, V_out)` centered at
//! `mu_out = c sqrt(p) u` for a uniform unit vector `u`. Both scatter matrices
//! are `Gamma diag(lambda) Gamma'` with a Haar-random rotation, `k` signal
//! eigenvalues uniform on `[2(1 + sqrt(p/n)), 10(1 + sqrt(p/n))]` and `p - k`
//! noise eigenvalues uniform on `[0, 2]`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::estimator::{fit_tme, initial_estimate, pca, FitOptions};
use crate::exec::ParMap;
use crate::linalg::sorted_eigen;
use crate::metrics::similarity_rho;
use crate::spline::Smoothing;
use crate::tuning::{linear_grid, tune_on_grid};
use crate::weights::WeightSpec;

/// Smallest gap allowed between consecutive generated eigenvalues.
pub const EIGEN_GAP: f64 = 1e-6;

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// columns of `Q` flipped so that `R` has a positive diagonal.
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let a: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `k` signal and `p - k` noise eigenvalues, sorted descending.
pub fn gen_eigenvalues<R: Rng + ?Sized>(n: usize, p: usize, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k >= p || n == 0 {
        return Err(Error::Domain(alloc::format!("need k < p and n > 0, got k={k}, p={p}, n={n}")));
    }
    let s = 1.0 + (p as f64 / n as f64).sqrt();
    let (lo, hi) = (2.0 * s, 10.0 * s);
    loop {
        let mut v: Vec<f64> = Vec::with_capacity(p);
        for _ in 0..k {
            v.push(rng.random_range(lo..hi));
        }
        for _ in k..p {
            v.push(rng.random_range(0.0..2.0));
        }
        v.sort_by(|a, b| b.total_cmp(a));
        if v.windows(2).all(|w| w[0] - w[1] >= EIGEN_GAP) && v[p - 1] > 0.0 {
            return Ok(v);
        }
    }
}

/// Draws single rows `mu + Z / sqrt(s)` with `Z ~ N(0, V)` and `s ~ chi^2_nu / nu`.
/// An infinite `nu` gives Gaussian rows.
pub struct MvtSampler {
    nu: f64,
    mu: DVector<f64>,
    l: DMatrix<f64>,
    chi: Option<ChiSquared<f64>>,
}

impl MvtSampler {
    pub fn new(nu: f64, mu: &DVector<f64>, v: &DMatrix<f64>) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::Domain(alloc::format!("degrees of freedom must be positive, got {nu}")));
        }
        if v.nrows() != mu.len() || v.ncols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: v.nrows(),
            });
        }
        let l = v.clone().cholesky().ok_or(Error::SingularScatter)?.unpack();
        let chi = if nu.is_finite() {
            Some(ChiSquared::new(nu).map_err(|_| Error::Domain("invalid degrees of freedom".into()))?)
        } else {
            None
        };
        Ok(Self {
            nu,
            mu: mu.clone(),
            l,
            chi,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z: DVector<f64> = DVector::from_fn(self.mu.len(), |_, _| StandardNormal.sample(rng));
        let s = match &self.chi {
            Some(c) => c.sample(rng) / self.nu,
            None => 1.0,
        };
        &self.l * z / s.sqrt() + &self.mu
    }
}

/// `n` rows drawn with [`MvtSampler`].
pub fn sample_mvt<R: Rng + ?Sized>(
    nu: f64,
    mu: &DVector<f64>,
    v: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let sampler = MvtSampler::new(nu, mu, v)?;
    let mut out = DMatrix::zeros(n, mu.len());
    for i in 0..n {
        let x = sampler.draw(rng);
        out.row_mut(i).copy_from(&x.transpose());
    }
    Ok(out)
}

fn random_direction<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let u: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let norm = u.norm();
        if norm > 0.0 {
            return u / norm;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contaminant {
    /// Untruncated `t_3(mu_out, V_out)`.
    Mixture,
    /// `t_3(mu_out, V_out)` restricted by rejection to
    /// `|x - mu_out| <= radius_frac * c * sqrt(p)`, which keeps the contaminant
    /// away from a ball around the origin.
    Truncated { radius_frac: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub nu: f64,
    pub pi: f64,
    pub c: f64,
    pub seed: u64,
    pub contaminant: Contaminant,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 2 || self.k == 0 || self.k >= self.p {
            return Err(Error::Domain(alloc::format!(
                "need n >= 2 and 0 < k < p, got n={}, p={}, k={}",
                self.n,
                self.p,
                self.k
            )));
        }
        if !(self.nu > 2.0) {
            return Err(Error::Domain(alloc::format!("nu must exceed 2, got {}", self.nu)));
        }
        if !(self.pi >= 0.0 && self.pi < 1.0) {
            return Err(Error::Domain(alloc::format!("pi must lie in [0, 1), got {}", self.pi)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::Domain(alloc::format!("c must be finite and >= 0, got {}", self.c)));
        }
        if let Contaminant::Truncated { radius_frac } = self.contaminant {
            if !(radius_frac > 0.0) {
                return Err(Error::Domain("truncation radius must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub v0: DMatrix<f64>,
    /// Leading `k` eigenvectors of `v0`.
    pub gamma_k: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub mu_out: DVector<f64>,
    pub v_out: DMatrix<f64>,
    /// `true` for rows drawn from the contaminant.
    pub labels: Vec<bool>,
}

fn random_scatter<R: Rng + ?Sized>(n: usize, p: usize, k: usize, rng: &mut R) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let g = random_orthogonal(p, rng);
    let lambda = gen_eigenvalues(n, p, k, rng)?;
    let v = &g * DMatrix::from_diagonal(&DVector::from_column_slice(&lambda)) * g.transpose();
    Ok(((&v + v.transpose()) * 0.5, lambda))
}

/// Draws one sample from `cfg` using an RNG seeded with `cfg.seed`.
pub fn gen_mixture(cfg: &SimConfig) -> Result<(DataSet, GroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    gen_mixture_with(cfg, &mut rng)
}

pub fn gen_mixture_with<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<(DataSet, GroundTruth)> {
    cfg.validate()?;
    let (n, p, k) = (cfg.n, cfg.p, cfg.k);
    let (v0, eigenvalues) = random_scatter(n, p, k, rng)?;
    let (v_out, _) = random_scatter(n, p, k, rng)?;
    let mu_out = random_direction(p, rng) * (cfg.c * (p as f64).sqrt());
    let labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < cfg.pi).collect();

    let main = MvtSampler::new(cfg.nu, &DVector::zeros(p), &v0)?;
    let other = MvtSampler::new(3.0, &mu_out, &v_out)?;
    let mut x = DMatrix::zeros(n, p);
    for (i, &out) in labels.iter().enumerate() {
        let row = if !out {
            main.draw(rng)
        } else {
            match cfg.contaminant {
                Contaminant::Mixture => other.draw(rng),
                Contaminant::Truncated { radius_frac } => {
                    let r = radius_frac * cfg.c * (p as f64).sqrt();
                    loop {
                        let z = other.draw(rng);
                        if (&z - &mu_out).norm() <= r {
                            break z;
                        }
                    }
                }
            }
        };
        x.row_mut(i).copy_from(&row.transpose());
    }
    let (_, vectors) = sorted_eigen(&v0);
    let truth = GroundTruth {
        gamma_k: vectors.columns(0, k).into_owned(),
        v0,
        eigenvalues,
        mu_out,
        v_out,
        labels,
    };
    Ok((DataSet::new(x)?, truth))
}

/// Seed of replicate `index` derived from the configuration seed with two
/// rounds of the SplitMix64 finalizer.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(seed) ^ index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Fit at the scale selected from the active-ratio curve.
    SppcaAStar,
    /// Best similarity over the whole solution path; needs the ground truth.
    SppcaOpt,
    /// Tyler's estimate around the location of the selected fit.
    Tme,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SppcaAStar, Method::SppcaOpt, Method::Tme];

    pub fn name(&self) -> &'static str {
        match self {
            Method::SppcaAStar => "sppca_astar",
            Method::SppcaOpt => "sppca_opt",
            Method::Tme => "tme",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub spec: WeightSpec,
    pub fit: FitOptions,
    /// Grid `[lo * p, hi * p]` with `points` equally spaced values.
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    pub smoothing: Smoothing,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            replicates: 20,
            methods: Method::ALL.to_vec(),
            spec: WeightSpec::default(),
            fit: FitOptions::default(),
            grid_lo: 0.2,
            grid_hi: 3.0,
            grid_points: 50,
            smoothing: Smoothing::Gcv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub config_index: usize,
    pub replicate: usize,
    pub seed: u64,
    pub contaminated: usize,
    pub a_star: Option<f64>,
    pub ar_at_a_star: Option<f64>,
    pub fallback_used: Option<bool>,
    /// Similarity per requested method, `None` when that method failed.
    pub rho: Vec<(Method, Option<f64>)>,
}

impl ReplicateRecord {
    pub fn rho_of(&self, method: Method) -> Option<f64> {
        self.rho.iter().find(|(m, _)| *m == method).and_then(|(_, r)| *r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub config: SimConfig,
    pub method: Method,
    pub mean_rho: Option<f64>,
    pub se_rho: Option<f64>,
    pub n_ok: usize,
    pub n_fail: usize,
    /// More than 20% of the replicates failed.
    pub invalid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
    pub replicates: Vec<ReplicateRecord>,
}

/// Generates one replicate of `cfg` and scores every requested method.
pub fn run_replicate(cfg: &SimConfig, config_index: usize, replicate: usize, opts: &ExperimentOptions) -> Result<ReplicateRecord> {
    let seed = replicate_seed(cfg.seed, replicate as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, truth) = gen_mixture_with(cfg, &mut rng)?;
    let contaminated = truth.labels.iter().filter(|l| **l).count();
    let mut record = ReplicateRecord {
        config_index,
        replicate,
        seed,
        contaminated,
        a_star: None,
        ar_at_a_star: None,
        fallback_used: None,
        rho: opts.methods.iter().map(|m| (*m, None)).collect(),
    };
    let p = cfg.p as f64;
    let grid = linear_grid(opts.grid_lo * p, opts.grid_hi * p, opts.grid_points);
    let base = match initial_estimate(&data) {
        Ok(b) => b,
        Err(_) => return Ok(record),
    };
    let tuned = match tune_on_grid(&data, &grid, &base, &opts.spec, &opts.fit, opts.smoothing, &crate::exec::Sequential) {
        Ok(t) => t,
        Err(_) => return Ok(record),
    };
    let rho_of = |v: &DMatrix<f64>| -> Option<f64> {
        let ls = crate::estimator::LocationScatter {
            mu: DVector::zeros(cfg.p),
            v: v.clone(),
            diag_approx: false,
        };
        let model = pca(&ls, cfg.k).ok()?;
        similarity_rho(&model.eigenvectors, &truth.gamma_k).ok()
    };
    let chosen = &tuned.fits[tuned.result.index];
    record.a_star = Some(tuned.result.a_star);
    record.ar_at_a_star = Some(tuned.result.ar_at_a_star);
    record.fallback_used = Some(tuned.result.fallback_used);
    for (method, slot) in record.rho.iter_mut() {
        *slot = match method {
            Method::SppcaAStar => {
                if chosen.converged {
                    rho_of(&chosen.ls.v)
                } else {
                    None
                }
            }
            Method::SppcaOpt => tuned
                .fits
                .iter()
                .filter(|f| f.converged)
                .filter_map(|f| rho_of(&f.ls.v))
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r)))),
            Method::Tme => match fit_tme(&data, &chosen.ls.mu, &opts.fit) {
                Ok(t) if t.converged && chosen.converged => rho_of(&t.ls.v),
                _ => None,
            },
        };
    }
    Ok(record)
}

fn summarize(config: SimConfig, method: Method, records: &[&ReplicateRecord]) -> ExperimentRow {
    let vals: Vec<f64> = records.iter().filter_map(|r| r.rho_of(method)).collect();
    let n_ok = vals.len();
    let n_fail = records.len() - n_ok;
    let mean = if n_ok > 0 {
        Some(vals.iter().sum::<f64>() / n_ok as f64)
    } else {
        None
    };
    let se = mean.map(|m| {
        if n_ok < 2 {
            0.0
        } else {
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n_ok - 1) as f64;
            (var / n_ok as f64).sqrt()
        }
    });
    ExperimentRow {
        config,
        method,
        mean_rho: mean,
        se_rho: se,
        n_ok,
        n_fail,
        invalid: n_fail as f64 > 0.2 * records.len() as f64,
    }
}

/// Runs `opts.replicates` replicates of every configuration.
///
/// Replicates are independent tasks handed to `exec`; each draws from its own
/// stream seeded by [`replicate_seed`], so the table does not depend on how
/// the tasks are scheduled.
pub fn run_experiment<E: ParMap>(configs: &[SimConfig], opts: &ExperimentOptions, exec: &E) -> Result<ExperimentTable> {
    if opts.replicates == 0 {
        return Err(Error::Domain("at least one replicate is required".into()));
    }
    if opts.grid_points < 4 || !(opts.grid_lo > 0.0 && opts.grid_hi > opts.grid_lo) {
        return Err(Error::Domain("simulation grid needs >= 4 points on a positive range".into()));
    }
    for cfg in configs {
        cfg.validate()?;
    }
    let r = opts.replicates;
    let results = exec.map(configs.len() * r, |t| run_replicate(&configs[t / r], t / r, t % r, opts));
    let replicates = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (ci, cfg) in configs.iter().enumerate() {
        let recs: Vec<&ReplicateRecord> = replicates.iter().filter(|x| x.config_index == ci).collect();
        for m in &opts.methods {
            rows.push(summarize(*cfg, *m, &recs));
        }
    }
    Ok(ExperimentTable { rows, replicates })
}

/// Fraction of rows labelled as contaminant, averaged over `reps` draws.
pub fn mean_label_fraction(cfg: &SimConfig, reps: usize) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..reps {
        let c = SimConfig {
            seed: replicate_seed(cfg.seed, r as u64),
            ..*cfg
        };
        let (_, truth) = gen_mixture(&c)?;
        total += truth.labels.iter().filter(|l| **l).count() as f64 / cfg.n as f64;
    }
    Ok(total / reps as f64)
}
