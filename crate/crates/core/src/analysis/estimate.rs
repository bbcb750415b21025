//! Binomial estimates with Wilson intervals.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::num::Real;

/// 97.5% standard normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<S> {
    pub lower: S,
    pub upper: S,
    pub center: S,
    pub half_width: S,
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson<S: Real>(successes: u64, n: u64, z: S) -> Interval<S> {
    assert!(n > 0 && successes <= n);
    let nn = S::from_u64(n).expect("count representable");
    let p = S::from_u64(successes).expect("count representable") / nn;
    let z2 = z * z;
    let two = S::lit(2.0);
    let denom = S::one() + z2 / nn;
    let center = (p + z2 / (two * nn)) / denom;
    let half = z / denom * (p * (S::one() - p) / nn + z2 / (S::lit(4.0) * nn * nn)).sqrt();
    Interval {
        lower: (center - half).max(S::zero()),
        upper: (center + half).min(S::one()),
        center,
        half_width: half,
    }
}

/// Monte Carlo frequency with its 95% Wilson interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    pub successes: u64,
    pub n: u64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    /// Fraction of runs still alive at the horizon.
    pub censored: f64,
    /// Fraction of runs whose infection reached the truncation boundary.
    pub boundary_touched: f64,
    pub root_seed: u64,
}

impl Estimate {
    pub fn from_counts(
        successes: u64,
        n: u64,
        censored: u64,
        touched: u64,
        root_seed: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(param("reps", "at least one replica is required"));
        }
        let w = wilson(successes, n, Z95);
        Ok(Self {
            p_hat: successes as f64 / n as f64,
            successes,
            n,
            half_width: w.half_width,
            lower: w.lower,
            upper: w.upper,
            censored: censored as f64 / n as f64,
            boundary_touched: touched as f64 / n as f64,
            root_seed,
        })
    }

    /// Normal-approximation standard error taken from the Wilson width.
    pub fn sigma(&self) -> f64 {
        self.half_width / Z95
    }

    /// `|p_hat - target| <= k sigma`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.p_hat - target).abs() <= k * self.sigma()
    }

    pub fn interval(&self) -> Interval<f64> {
        Interval {
            lower: self.lower,
            upper: self.upper,
            center: (self.lower + self.upper) / 2.0,
            half_width: self.half_width,
        }
    }
}

/// Two-proportion z-score with pooled variance; 0 when the pooled
/// proportion is degenerate.
pub fn two_proportion_z(a: &Estimate, b: &Estimate) -> f64 {
    let pooled = (a.successes + b.successes) as f64 / (a.n + b.n) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / a.n as f64 + 1.0 / b.n as f64);
    if var <= 0.0 {
        return 0.0;
    }
    (a.p_hat - b.p_hat) / var.sqrt()
}

/// Sigma-scaled gap `(earlier - later) / sqrt(s1^2 + s2^2)`; positive when
/// `later` falls below `earlier`.
pub fn drop_in_sigmas(earlier: &Estimate, later: &Estimate) -> f64 {
    let s = (earlier.sigma().powi(2) + later.sigma().powi(2)).sqrt();
    if s == 0.0 {
        return if later.p_hat < earlier.p_hat {
            f64::INFINITY
        } else {
            0.0
        };
    }
    (earlier.p_hat - later.p_hat) / s
}
