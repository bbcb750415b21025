//! The growth constant `c1(lambda, rho)`: the root in `(0, 1/lambda]` of
//! `g_rho(c) = c*lambda - 1 - ln(c*lambda*deg) - rho`, equivalently
//! `c1 = -W0(-e^{-(1+rho)} / deg) / lambda` with `W0` the principal branch
//! of the Lambert W function.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::num::{solver_eps, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstant<S> {
    /// Lambert W value, the reported `c1`.
    pub c1: S,
    pub via_bisection: S,
    /// `|g_rho(c1)|`.
    pub residual: S,
}

pub fn g_rho<S: Real>(c: S, lambda: S, degree: usize, rho: S) -> S {
    let u = c * lambda;
    u - S::one() - (u * S::of_usize(degree)).ln() - rho
}

fn check<S: Real>(lambda: S, degree: usize, rho: S) -> Result<()> {
    if !(lambda.is_finite() && lambda > S::zero()) {
        return Err(param(
            "lambda",
            format!("must be finite and positive, got {lambda}"),
        ));
    }
    if degree == 0 {
        return Err(param("degree", "must be at least 1"));
    }
    if !(rho.is_finite() && rho >= S::zero()) {
        return Err(param(
            "rho",
            format!("must be finite and non-negative, got {rho}"),
        ));
    }
    Ok(())
}

/// Principal branch `W0(x)` for `x` in `[-1/e, 0]` by Halley iteration.
pub fn lambert_w0<S: Real>(x: S) -> Result<S> {
    lambert_w0_split(x, S::E() * x + S::one())
}

/// `W0(x)` given `1 + e x` separately, which callers can often compute
/// without the cancellation that dominates the error near the branch point.
fn lambert_w0_split<S: Real>(x: S, one_plus_ex: S) -> Result<S> {
    let e = S::E();
    let branch = -S::one() / e;
    if !(x >= branch - solver_eps::<S>()) || x > S::zero() {
        return Err(Error::Numerical(format!(
            "W0 argument {x} outside [-1/e, 0]"
        )));
    }
    if x == S::zero() {
        return Ok(S::zero());
    }
    let p2 = S::lit(2.0) * one_plus_ex;
    if p2 <= S::zero() {
        return Ok(-S::one());
    }
    // Branch-point series start, accurate near -1/e and adequate elsewhere.
    let p = p2.sqrt();
    let mut w = if x < S::lit(-0.25) {
        -S::one() + p - p * p / S::lit(3.0) + S::lit(11.0 / 72.0) * p * p * p
    } else {
        x * (S::one() - x)
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + S::one();
        if wp1 == S::zero() {
            break;
        }
        let step = f / (ew * wp1 - (w + S::lit(2.0)) * f / (S::lit(2.0) * wp1));
        let next = w - step;
        let done = (next - w).abs() <= solver_eps::<S>() * (S::one() + next.abs());
        w = next.max(-S::one());
        if done {
            break;
        }
    }
    Ok(w)
}

/// Bisection on `u = c*lambda` over `(0, 1]` until the bracket stops shrinking.
pub fn c1_bisection<S: Real>(lambda: S, degree: usize, rho: S) -> Result<S> {
    check(lambda, degree, rho)?;
    let h = |u: S| u - S::one() - (u * S::of_usize(degree)).ln() - rho;
    let mut hi = S::one();
    if h(hi) >= S::zero() {
        return Ok(hi / lambda);
    }
    let mut lo = S::min_positive_value();
    for _ in 0..4096 {
        let mid = lo + (hi - lo) / S::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = if h(lo).abs() < h(hi).abs() { lo } else { hi };
    Ok(u / lambda)
}

pub fn c1_lambert<S: Real>(lambda: S, degree: usize, rho: S) -> Result<S> {
    check(lambda, degree, rho)?;
    let arg = -(-(S::one() + rho)).exp() / S::of_usize(degree);
    // 1 + e*arg = 1 - e^{-rho}/deg
    let gap = if degree == 1 {
        -(-rho).exp_m1()
    } else {
        S::one() - (-rho).exp() / S::of_usize(degree)
    };
    Ok(-lambert_w0_split(arg, gap)? / lambda)
}

/// `c1` by both methods; fails if they disagree by more than `tol`.
pub fn solve_c1_with<S: Real>(
    lambda: S,
    degree: usize,
    rho: S,
    tol: S,
) -> Result<GrowthConstant<S>> {
    let w = c1_lambert(lambda, degree, rho)?;
    let b = c1_bisection(lambda, degree, rho)?;
    if (w - b).abs() > tol {
        return Err(Error::Numerical(format!(
            "c1 solvers disagree: Lambert W {w}, bisection {b}"
        )));
    }
    Ok(GrowthConstant {
        c1: w,
        via_bisection: b,
        residual: g_rho(w, lambda, degree, rho).abs(),
    })
}

/// [`solve_c1_with`] at tolerance `1e-10` (scaled up for low precision types).
pub fn solve_c1<S: Real>(lambda: S, degree: usize, rho: S) -> Result<GrowthConstant<S>> {
    let tol =
        S::lit(1e-10).max(solver_eps::<S>() * S::lit(64.0)) * (S::one() / lambda).max(S::one());
    solve_c1_with(lambda, degree, rho, tol)
}

/// `exp(-g0(c) d) / (1 - exp(-g0(c)))`, the bound on `P(tau_y < c d)` for
/// the Richardson model at graph distance `d`. Requires `g0(c) > 0`.
pub fn hitting_bound<S: Real>(lambda: S, c: S, degree: usize, distance: u32) -> Result<S> {
    let g0 = g_rho(c, lambda, degree, S::zero());
    if !(g0 > S::zero()) {
        return Err(param(
            "c",
            format!("g0(c) = {g0} is not positive; c must lie below c1(lambda, 0)"),
        ));
    }
    Ok(
        (-g0 * S::from_u32(distance).expect("distance representable")).exp()
            / (S::one() - (-g0).exp()),
    )
}
