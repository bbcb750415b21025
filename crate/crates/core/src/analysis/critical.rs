//! Bisection for the critical infection rate.
//!
//! Every probe uses the same root seed and the same arrow ceiling (the
//! initial upper end), so the per-replica survival indicators are
//! nondecreasing in lambda and the probes are mutually consistent.

use serde::{Deserialize, Serialize};

use crate::analysis::estimate::Estimate;
use crate::analysis::survival::{resolve_ceilings, survival_counts, Counts, StartMode};
use crate::background::BackgroundSpec;
use crate::engine::RunParams;
use crate::error::{param, Result};
use crate::graphical::Rates;
use crate::lattice::{GraphView, SiteSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub reps_per_probe: usize,
    /// Decision floor on `P(C_T != ∅)`.
    pub p0: f64,
    /// Batches of `reps_per_probe` a probe may use before the decision is
    /// forced on the point estimate.
    pub max_batches: usize,
    pub max_probes: usize,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        Self {
            lo: 0.0,
            hi: 4.0,
            tol: 0.05,
            reps_per_probe: 500,
            p0: 0.01,
            max_batches: 4,
            max_probes: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Subcritical,
    Supercritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub lambda: f64,
    pub estimate: Estimate,
    pub verdict: Verdict,
    /// The Wilson test stayed inconclusive and the verdict compares `p_hat`
    /// with `p0` instead.
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub lo_estimate: Estimate,
    pub hi_estimate: Estimate,
    pub probes: Vec<Probe>,
    /// Width reached `tol` and both ends carry unforced verdicts.
    pub complete: bool,
    pub statement: String,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.lambda_hi - self.lambda_lo
    }
}

/// Bisection over `[search.lo, search.hi]` for `P(C_T != ∅)` from `c0`,
/// where `T = horizon` and the box is `g`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_critical_lambda(
    g: &GraphView,
    r: f64,
    spec: BackgroundSpec,
    start: &StartMode,
    c0: &SiteSet,
    horizon: f64,
    search: &CriticalSearch,
    seed: u64,
) -> Result<Bracket> {
    let s = search;
    if !(s.tol > 0.0) {
        return Err(param("tol", "must be positive"));
    }
    if !(s.lo >= 0.0 && s.hi > s.lo && s.hi.is_finite()) {
        return Err(param(
            "bracket",
            format!("need 0 <= lo < hi, got [{}, {}]", s.lo, s.hi),
        ));
    }
    if !(s.p0 > 0.0 && s.p0 < 1.0) {
        return Err(param("p0", "must lie in (0, 1)"));
    }
    if s.reps_per_probe == 0 || s.max_batches == 0 || s.max_probes < 2 {
        return Err(param(
            "reps_per_probe",
            "reps, batches and probes must be positive (probes >= 2)",
        ));
    }
    g.check_sites(c0)?;
    let base = RunParams::new(g, s.hi, r, spec, horizon, seed)?;
    let ceilings = resolve_ceilings(&base, Some(Rates::new(s.hi, r, base.rates().q)?))?;

    let probe = |lambda: f64| -> Result<Probe> {
        let params = RunParams { lambda, ..base };
        let batch = s.reps_per_probe as u64;
        let mut c = Counts::default();
        for b in 0..s.max_batches as u64 {
            c = c.add(survival_counts(
                &params,
                c0,
                start,
                ceilings,
                b * batch..(b + 1) * batch,
            )?);
            let e = Estimate::from_counts(c.alive, c.n, c.alive, c.touched, seed)?;
            if e.upper < s.p0 {
                return Ok(Probe {
                    lambda,
                    estimate: e,
                    verdict: Verdict::Subcritical,
                    forced: false,
                });
            }
            if e.lower > s.p0 {
                return Ok(Probe {
                    lambda,
                    estimate: e,
                    verdict: Verdict::Supercritical,
                    forced: false,
                });
            }
        }
        let e = Estimate::from_counts(c.alive, c.n, c.alive, c.touched, seed)?;
        let verdict = if e.p_hat < s.p0 {
            Verdict::Subcritical
        } else {
            Verdict::Supercritical
        };
        Ok(Probe {
            lambda,
            estimate: e,
            verdict,
            forced: true,
        })
    };

    let mut probes = Vec::new();
    let top = probe(s.hi)?;
    let bottom = probe(s.lo)?;
    probes.push(top.clone());
    probes.push(bottom.clone());
    let mut lo = bottom;
    let mut hi = top;
    let ends_ok = lo.verdict == Verdict::Subcritical && hi.verdict == Verdict::Supercritical;
    if ends_ok {
        while hi.lambda - lo.lambda > s.tol && probes.len() < s.max_probes {
            let mid = lo.lambda + (hi.lambda - lo.lambda) / 2.0;
            let p = probe(mid)?;
            probes.push(p.clone());
            match p.verdict {
                Verdict::Subcritical => lo = p,
                Verdict::Supercritical => hi = p,
            }
        }
    }
    let width = hi.lambda - lo.lambda;
    let complete = ends_ok && width <= s.tol && !lo.forced && !hi.forced;
    let mut statement = format!(
        "P(C_T != empty) at T = {horizon}: Wilson 95% upper bound {:.4} at lambda = {} and lower bound {:.4} at lambda = {}, against p0 = {}",
        lo.estimate.upper, lo.lambda, hi.estimate.lower, hi.lambda, s.p0
    );
    if !ends_ok {
        statement.push_str("; initial bracket does not straddle the threshold");
    } else if width > s.tol {
        statement.push_str(&format!("; probe budget exhausted at width {width}"));
    }
    if lo.forced || hi.forced {
        statement.push_str("; an endpoint verdict was forced on the point estimate");
    }
    Ok(Bracket {
        lambda_lo: lo.lambda,
        lambda_hi: hi.lambda,
        lo_estimate: lo.estimate,
        hi_estimate: hi.estimate,
        probes,
        complete,
        statement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_box;

    #[test]
    fn rejects_bad_search() {
        let g = build_box(1, 5).unwrap();
        let c0: SiteSet = [g.origin()].into_iter().collect();
        let spec = BackgroundSpec::frozen(1);
        let bad = CriticalSearch {
            tol: 0.0,
            ..Default::default()
        };
        assert!(
            estimate_critical_lambda(&g, 1.0, spec, &StartMode::Full, &c0, 5.0, &bad, 1).is_err()
        );
    }

    #[test]
    fn coarse_bracket_is_ordered() {
        let g = build_box(1, 40).unwrap();
        let c0: SiteSet = [g.origin()].into_iter().collect();
        let search = CriticalSearch {
            tol: 1.0,
            reps_per_probe: 100,
            max_batches: 1,
            ..Default::default()
        };
        let b = estimate_critical_lambda(
            &g,
            1.0,
            BackgroundSpec::frozen(1),
            &StartMode::Full,
            &c0,
            10.0,
            &search,
            5,
        )
        .unwrap();
        assert!(b.lambda_lo < b.lambda_hi);
        assert!(b.width() <= 1.0);
        let again = estimate_critical_lambda(
            &g,
            1.0,
            BackgroundSpec::frozen(1),
            &StartMode::Full,
            &c0,
            10.0,
            &search,
            5,
        )
        .unwrap();
        assert_eq!(b, again);
    }
}
