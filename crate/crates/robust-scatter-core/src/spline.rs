//! Natural cubic smoothing spline on the knots `x_1 < ... < x_m`.
//!
//! The fit minimizes `sum (y_i - g(x_i))^2 + lambda * int g''(t)^2 dt`. With the
//! banded matrices `Q` (m x (m-2)) and `R` ((m-2) x (m-2)) of Green and
//! Silverman, the penalty is `g' K g` where `K = Q R^{-1} Q'`. Diagonalizing `K`
//! once gives the smoother matrix for every `lambda` at the cost of a vector
//! scaling, which makes the generalized cross-validation scan cheap.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Lower end of the effective degrees of freedom scanned by GCV.
pub const GCV_EDF_MIN: f64 = 2.05;
/// Number of log-spaced penalties tried by GCV.
pub const GCV_CANDIDATES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Penalty minimizing the GCV score over effective degrees of freedom in
    /// `[2.05, max(4, m/2)]`. A minimizer on either end of that range counts as
    /// a failed search and the fit falls back to `min(8, m - 2)` degrees of freedom.
    Gcv,
    Lambda(f64),
    /// Penalty chosen so that the trace of the smoother equals the given value.
    Edf(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    pub fitted: Vec<f64>,
    /// First derivative of the spline at each knot.
    pub slope: Vec<f64>,
    pub lambda: f64,
    pub edf: f64,
    pub gcv_fallback: bool,
}

struct Basis {
    q: DMatrix<f64>,
    r_chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    eigval: DVector<f64>,
    eigvec: DMatrix<f64>,
}

impl Basis {
    fn new(x: &[f64]) -> Result<Self> {
        let m = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut q = DMatrix::zeros(m, m - 2);
        let mut r = DMatrix::zeros(m - 2, m - 2);
        for j in 1..m - 1 {
            let c = j - 1;
            q[(j - 1, c)] = 1.0 / h[j - 1];
            q[(j, c)] = -1.0 / h[j - 1] - 1.0 / h[j];
            q[(j + 1, c)] = 1.0 / h[j];
            r[(c, c)] = (h[j - 1] + h[j]) / 3.0;
            if j < m - 2 {
                r[(c, c + 1)] = h[j] / 6.0;
                r[(c + 1, c)] = h[j] / 6.0;
            }
        }
        let r_chol = r
            .cholesky()
            .ok_or_else(|| Error::Domain("knot spacing produced a singular penalty".into()))?;
        let rq = r_chol.solve(&q.transpose());
        let mut k = &q * rq;
        let kt = k.transpose();
        k += kt;
        k *= 0.5;
        let eig = SymmetricEigen::new(k);
        let eigval = eig.eigenvalues.map(|v| v.max(0.0));
        Ok(Self {
            q,
            r_chol,
            eigval,
            eigvec: eig.eigenvectors,
        })
    }

    fn shrink(&self, lambda: f64) -> DVector<f64> {
        self.eigval.map(|d| 1.0 / (1.0 + lambda * d))
    }

    fn edf(&self, lambda: f64) -> f64 {
        self.shrink(lambda).sum()
    }

    /// Penalty giving `target` effective degrees of freedom, by bisection in `log10`.
    fn lambda_for_edf(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (-30.0f64, 30.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.edf(10f64.powf(mid)) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        10f64.powf(0.5 * (lo + hi))
    }
}

/// Fits the spline and returns fitted values and analytic slopes at the knots.
pub fn smoothing_spline(x: &[f64], y: &[f64], smoothing: Smoothing) -> Result<SplineFit> {
    let m = x.len();
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: y.len(),
        });
    }
    if m < 4 {
        return Err(Error::Domain(alloc::format!(
            "smoothing spline needs at least 4 points, got {m}"
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("knots must be strictly increasing".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite response".into()));
    }
    let basis = Basis::new(x)?;
    let uy = basis.eigvec.tr_mul(&DVector::from_column_slice(y));

    let mut gcv_fallback = false;
    let lambda = match smoothing {
        Smoothing::Lambda(l) if l >= 0.0 && l.is_finite() => l,
        Smoothing::Lambda(l) => return Err(Error::Domain(alloc::format!("invalid penalty {l}"))),
        Smoothing::Edf(t) if t > 2.0 && t <= m as f64 => basis.lambda_for_edf(t),
        Smoothing::Edf(t) => {
            return Err(Error::Domain(alloc::format!(
                "effective degrees of freedom must lie in (2, {m}], got {t}"
            )))
        }
        Smoothing::Gcv => {
            let edf_hi = (m as f64 / 2.0).max(4.0);
            let l_lo = basis.lambda_for_edf(edf_hi).ln();
            let l_hi = basis.lambda_for_edf(GCV_EDF_MIN).ln();
            let mut best = (0usize, f64::INFINITY, 0.0);
            for i in 0..GCV_CANDIDATES {
                let t = i as f64 / (GCV_CANDIDATES - 1) as f64;
                let l = (l_lo + t * (l_hi - l_lo)).exp();
                let s = basis.shrink(l);
                let rss: f64 = uy
                    .iter()
                    .zip(s.iter())
                    .map(|(u, s)| {
                        let r = u * (1.0 - s);
                        r * r
                    })
                    .sum();
                let denom = m as f64 - s.sum();
                let score = m as f64 * rss / (denom * denom);
                if score < best.1 {
                    best = (i, score, l);
                }
            }
            if best.0 == 0 || best.0 == GCV_CANDIDATES - 1 || !best.1.is_finite() {
                gcv_fallback = true;
                basis.lambda_for_edf((m as f64 - 2.0).min(8.0))
            } else {
                best.2
            }
        }
    };

    let s = basis.shrink(lambda);
    let edf = s.sum();
    let g = &basis.eigvec * uy.component_mul(&s);
    let inner = basis.r_chol.solve(&basis.q.tr_mul(&g));
    let mut gamma = vec![0.0; m];
    gamma[1..m - 1].copy_from_slice(inner.as_slice());

    let mut slope = vec![0.0; m];
    for i in 0..m - 1 {
        let h = x[i + 1] - x[i];
        slope[i] = (g[i + 1] - g[i]) / h - h * (2.0 * gamma[i] + gamma[i + 1]) / 6.0;
    }
    let h = x[m - 1] - x[m - 2];
    slope[m - 1] = (g[m - 1] - g[m - 2]) / h + h * (gamma[m - 2] + 2.0 * gamma[m - 1]) / 6.0;

    Ok(SplineFit {
        fitted: g.iter().copied().collect(),
        slope,
        lambda,
        edf,
        gcv_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knots(m: usize) -> Vec<f64> {
        (0..m).map(|i| 1.0 + 0.37 * i as f64 + 0.01 * (i * i) as f64).collect()
    }

    #[test]
    fn reproduces_constants() {
        let x = knots(30);
        let y = vec![0.7; 30];
        for s in [Smoothing::Gcv, Smoothing::Lambda(3.0), Smoothing::Edf(6.0)] {
            let fit = smoothing_spline(&x, &y, s).unwrap();
            assert!(fit.fitted.iter().all(|v| (v - 0.7).abs() < 1e-8));
            assert!(fit.slope.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn reproduces_lines() {
        let m = 40;
        let x: Vec<f64> = (1..=m).map(|j| j as f64).collect();
        let y: Vec<f64> = x.iter().map(|j| 0.1 + 0.01 * j).collect();
        for s in [Smoothing::Gcv, Smoothing::Lambda(100.0), Smoothing::Edf(5.0)] {
            let fit = smoothing_spline(&x, &y, s).unwrap();
            assert!(fit.slope.iter().all(|v| (v - 0.01).abs() < 1e-6), "{:?}", fit.slope);
        }
    }

    #[test]
    fn zero_penalty_interpolates() {
        let x = knots(8);
        let y = [0.1, 0.5, 0.2, 0.9, 0.4, 0.4, 0.8, 0.3];
        let fit = smoothing_spline(&x, &y, Smoothing::Lambda(0.0)).unwrap();
        for (a, b) in fit.fitted.iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((fit.edf - 8.0).abs() < 1e-9);
    }

    #[test]
    fn edf_target_is_met() {
        let x = knots(25);
        let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
        let fit = smoothing_spline(&x, &y, Smoothing::Edf(7.5)).unwrap();
        assert!((fit.edf - 7.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(smoothing_spline(&[1.0, 2.0, 3.0], &[0.0; 3], Smoothing::Gcv).is_err());
        assert!(smoothing_spline(&[1.0, 2.0, 2.0, 3.0], &[0.0; 4], Smoothing::Gcv).is_err());
        assert!(smoothing_spline(&[1.0, 2.0, 3.0, 4.0], &[0.0; 3], Smoothing::Gcv).is_err());
    }

    #[test]
    fn matches_frozen_reference_fit() {
        // scipy.interpolate.make_smoothing_spline with the same penalty convention.
        let x: Vec<f64> = (0..12).map(|i| 1.0 + 0.37 * i as f64 + 0.01 * (i * i) as f64).collect();
        let y = [0.10, 0.18, 0.21, 0.35, 0.33, 0.52, 0.61, 0.58, 0.77, 0.85, 0.92, 0.99];
        let cases: [(f64, [f64; 12], [f64; 12]); 2] = [
            (
                0.05,
                [
                    0.102700241289785, 0.167110847635097, 0.234403600639171, 0.309770599594199,
                    0.388739001190728, 0.488253529071988, 0.573361829671875, 0.642966191818648,
                    0.744564327487647, 0.843114000936273, 0.922314729676728, 0.992701100987862,
                ],
                [
                    0.170801311786376, 0.166902163363927, 0.174995687563171, 0.175536546187585,
                    0.200198893859845, 0.209391433700647, 0.144475520150244, 0.163658887526143,
                    0.202491508131015, 0.160689478735491, 0.127413481754184, 0.118326978031014,
                ],
            ),
            (
                1.0,
                [
                    0.099023234057555, 0.167158911282017, 0.239076566916091, 0.315262620265958,
                    0.395453955249235, 0.479923869142006, 0.565783189274292, 0.652231139090214,
                    0.741370987286467, 0.830505747172946, 0.918188601121347, 1.006021179141849,
                ],
                [
                    0.179280906248236, 0.17935142874928, 0.180605325545366, 0.181736798551783,
                    0.183397781224655, 0.182241318812587, 0.175279320779816, 0.172109047392741,
                    0.169208154856349, 0.160663760097341, 0.153231987566799, 0.15053722523514,
                ],
            ),
        ];
        for (lambda, fitted, slope) in cases {
            let fit = smoothing_spline(&x, &y, Smoothing::Lambda(lambda)).unwrap();
            for j in 0..12 {
                assert!((fit.fitted[j] - fitted[j]).abs() < 1e-8, "{lambda} {j}");
                assert!((fit.slope[j] - slope[j]).abs() < 1e-8, "{lambda} {j}");
            }
        }
    }

    #[test]
    fn noisy_sigmoid_is_recovered() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, Normal};
        let truth = |t: f64| 1.0 / (1.0 + (-1.5 * (t - 5.0)).exp());
        let noise = Normal::new(0.0, 0.01).unwrap();
        for seed in 0..5 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..50).map(|i| 10.0 * i as f64 / 49.0).collect();
            let y: Vec<f64> = x.iter().map(|t| truth(*t) + noise.sample(&mut rng)).collect();
            let fit = smoothing_spline(&x, &y, Smoothing::Gcv).unwrap();
            let err = x
                .iter()
                .zip(&fit.fitted)
                .map(|(t, g)| (g - truth(*t)).abs())
                .fold(0.0, f64::max);
            assert!(err <= 0.03, "seed {seed}: {err}");
        }
    }
}
