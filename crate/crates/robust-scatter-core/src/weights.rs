//! Observation weights as a function of Mahalanobis distance.

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Threshold used by every experiment unless overridden.
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightKind {
    /// `w(u) = exp(-u)` while `exp(-u) > alpha`, and 0 beyond. The test is
    /// carried out as `u < ln(1/alpha)` so that the boundary itself maps to 0.
    #[default]
    HardThresholdExponential,
    /// `w(u) = 1` everywhere. Turns the fixed point into the unweighted moment equations.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub alpha: f64,
    pub kind: WeightKind,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            kind: WeightKind::HardThresholdExponential,
        }
    }
}

impl WeightSpec {
    pub fn hard_threshold(alpha: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            kind: WeightKind::HardThresholdExponential,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unit() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            kind: WeightKind::Unit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(alloc::format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )))
        }
    }

    /// Radius `ln(1/alpha)` of the trimming ball in squared Mahalanobis units.
    pub fn cutoff(&self) -> f64 {
        match self.kind {
            WeightKind::HardThresholdExponential => (1.0 / self.alpha).ln(),
            WeightKind::Unit => f64::INFINITY,
        }
    }

    pub fn weight(&self, u: f64) -> Result<f64> {
        check_nonneg(u)?;
        Ok(self.weight_unchecked(u))
    }

    pub fn h(&self, u: f64) -> Result<f64> {
        check_nonneg(u)?;
        Ok(self.weight_unchecked(u) * u)
    }

    /// Same as [`weight`](Self::weight) without the sign check, for inner loops
    /// where `u` is a computed squared distance.
    #[inline]
    pub fn weight_unchecked(&self, u: f64) -> f64 {
        match self.kind {
            WeightKind::Unit => 1.0,
            WeightKind::HardThresholdExponential => {
                if u < self.cutoff() {
                    (-u).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// True when an observation at squared distance `d` keeps a positive weight.
    #[inline]
    pub fn is_active(&self, d: f64) -> bool {
        self.weight_unchecked(d) > 0.0
    }
}

fn check_nonneg(u: f64) -> Result<()> {
    if u >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(alloc::format!(
            "weight argument must be nonnegative, got {u}"
        )))
    }
}

/// Membership in the trimming ball `B(mu, V)`.
pub fn in_ball(
    x: &nalgebra::DVector<f64>,
    ls: &crate::estimator::LocationScatter,
    spec: &WeightSpec,
) -> Result<bool> {
    let d = crate::estimator::mahalanobis(x, ls)?;
    Ok(spec.is_active(d))
}
