//! Pathwise coupling checks on shared timelines: every comparison runs
//! both processes on one realisation and counts exact set violations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background::{ising_beta_bound, BackgroundKind, BackgroundSpec};
use crate::engine::{
    coupled_bounds_cpdp, delayed_variant, dual_evolve, evolve, evolve_truncated,
    first_containment_violation, pathwise_violation, richardson, DelayMode, Layer, RunParams,
    Trajectory,
};
use crate::error::{param, Result};
use crate::graphical::{build_timeline, Rates};
use crate::lattice::{build_box, EdgeSet, GraphView, SiteSet};
use crate::seed::{self, replica_seed, stream_seed};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub dim: usize,
    pub half_width: u32,
    pub horizon: f64,
    pub lambda: f64,
    pub r: f64,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub runs: usize,
    pub violations: usize,
}

pub const SUITE_CHECKS: [&str; 8] = [
    "initial-configuration monotonicity",
    "lambda-thinning nesting",
    "r-thinning nesting",
    "additivity",
    "richardson domination",
    "truncation containment",
    "cpdp sandwich (ising)",
    "delayed-variant containment",
];

/// Ising inverse temperature used by the suite: safely inside the
/// attractive and ergodic range for the dimension.
fn suite_ising(dim: usize) -> Result<BackgroundSpec> {
    let beta = (ising_beta_bound(4 * dim - 2) / 2.0).min(0.3);
    BackgroundSpec::new(BackgroundKind::Ising { beta }, dim)
}

fn suite_specs(dim: usize) -> Result<Vec<BackgroundSpec>> {
    let mut v = vec![
        BackgroundSpec::dynamical_percolation(1.0, 1.0, dim)?,
        suite_ising(dim)?,
    ];
    if dim == 1 {
        v.push(BackgroundSpec::new(
            BackgroundKind::NoisyVoter {
                alpha: 1.0,
                beta: 0.5,
            },
            1,
        )?);
    }
    Ok(v)
}

fn random_sites(g: &GraphView, rng: &mut seed::Rng, count: usize, radius: u32) -> SiteSet {
    let ball = g.site_ball(g.origin(), radius).members;
    let pool = ball.as_slice();
    (0..count)
        .map(|_| pool[seed::below(rng, pool.len() as u64) as usize])
        .collect()
}

fn random_edges(g: &GraphView, rng: &mut seed::Rng, p: f64) -> EdgeSet {
    (0..g.n_edges() as u32)
        .filter(|_| seed::unit(rng) < p)
        .collect()
}

fn nested(a: &Trajectory, b: &Trajectory) -> bool {
    first_containment_violation(a, b, Layer::Sites).is_none()
        && first_containment_violation(a, b, Layer::Edges).is_none()
}

fn sites_nested(a: &Trajectory, b: &Trajectory) -> bool {
    first_containment_violation(a, b, Layer::Sites).is_none()
}

fn one_run(
    cfg: &SuiteConfig,
    g: &GraphView,
    specs: &[BackgroundSpec],
    i: u64,
) -> Result<[bool; 8]> {
    let rs = replica_seed(cfg.seed, i);
    let dp = specs[0];
    let ising = specs[1];
    let q = ising.sandwich_rate().max(dp.candidate_rate());
    let tl = build_timeline(g, Rates::new(cfg.lambda, cfg.r, q)?, cfg.horizon, rs)?;
    let view = tl.view();
    let p = RunParams::new(g, cfg.lambda, cfg.r, dp, cfg.horizon, rs)?;
    let mut rng = seed::rng(stream_seed(rs, 7));
    let radius = (g.half_width() / 4).max(1);
    let c0 = random_sites(g, &mut rng, 4, radius);
    let b0 = random_edges(g, &mut rng, 0.5);
    let mut ok = [true; 8];

    let c_big = c0.union(&random_sites(g, &mut rng, 4, radius));
    let b_big = b0.union(&random_edges(g, &mut rng, 0.3));
    for spec in specs {
        let ps = p.with_spec(*spec);
        let lo = evolve(&ps, &c0, &b0, &view)?;
        let hi = evolve(&ps, &c_big, &b_big, &view)?;
        ok[0] &= nested(&lo, &hi);
    }

    let base = evolve(&p, &c0, &b0, &view)?;
    let slow = evolve(
        &RunParams {
            lambda: cfg.lambda / 2.0,
            ..p
        },
        &c0,
        &b0,
        &view,
    )?;
    ok[1] = sites_nested(&slow, &base);
    let resilient = evolve(
        &RunParams {
            r: cfg.r / 2.0,
            ..p
        },
        &c0,
        &b0,
        &view,
    )?;
    ok[2] = sites_nested(&base, &resilient);

    let other = random_sites(g, &mut rng, 3, g.half_width() / 2);
    let a = evolve(&p, &other, &b0, &view)?;
    let joint = evolve(&p, &c0.union(&other), &b0, &view)?;
    ok[3] = pathwise_violation(&[&base, &a, &joint], Layer::Sites, |b| {
        ((b & 1) | ((b >> 1) & 1)) == (b >> 2) & 1
    })
    .is_none();

    let rich = richardson(g, cfg.lambda, &c0, &view, cfg.horizon)?;
    ok[4] = sites_nested(&base, &rich);

    let trunc = evolve_truncated((g.half_width() / 2).max(1), &p, &c0, &b0, &view)?;
    ok[5] = nested(&trunc, &base);

    let [under, mid, over] = coupled_bounds_cpdp(&p.with_spec(ising), &c0, &b0, &view)?;
    ok[6] = nested(&under, &mid) && nested(&mid, &over);

    let s = cfg.horizon / 4.0;
    let lower = delayed_variant(DelayMode::SuppressArrows, s, &p, &c0, &b0, &view)?;
    let upper = delayed_variant(
        DelayMode::SuppressRecoveriesAndBackground,
        s,
        &p,
        &c0,
        &b0,
        &view,
    )?;
    ok[7] = sites_nested(&lower, &base) && sites_nested(&base, &upper);
    Ok(ok)
}

/// Runs the eight coupling comparisons on `cfg.runs` shared timelines.
pub fn coupling_suite(cfg: &SuiteConfig) -> Result<Vec<CheckOutcome>> {
    if cfg.runs == 0 {
        return Err(param("runs", "at least one run is required"));
    }
    let g = build_box(cfg.dim, cfg.half_width)?;
    let specs = suite_specs(cfg.dim)?;
    let per: Vec<[bool; 8]> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|i| one_run(cfg, &g, &specs, i))
        .collect::<Result<_>>()?;
    Ok(SUITE_CHECKS
        .iter()
        .enumerate()
        .map(|(k, name)| CheckOutcome {
            name: name.to_string(),
            runs: cfg.runs,
            violations: per.iter().filter(|r| !r[k]).count(),
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityConfig {
    pub dim: usize,
    pub half_width: u32,
    pub t_star: f64,
    pub lambda: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityOutcome {
    pub runs: usize,
    pub violations: usize,
    /// Realisations where both indicators are 1, to show the check is not vacuous.
    pub both_hit: usize,
}

/// `1{C_{t*} ∩ A != ∅} = 1{C ∩ dual_{t*}(A) != ∅}` on each realisation,
/// with random `C`, `A` and a stationary initial background.
pub fn duality_identity(cfg: &DualityConfig) -> Result<IdentityOutcome> {
    if cfg.runs == 0 {
        return Err(param("runs", "at least one run is required"));
    }
    let g = build_box(cfg.dim, cfg.half_width)?;
    let spec = BackgroundSpec::dynamical_percolation(cfg.alpha, cfg.beta, cfg.dim)?;
    let per: Vec<(bool, bool)> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|i| {
            let rs = replica_seed(cfg.seed, i);
            let p = RunParams::new(&g, cfg.lambda, cfg.r, spec, cfg.t_star, rs)?;
            let tl = p.timeline()?;
            let b0 = spec.sample_stationary(&g, stream_seed(rs, seed::STREAM_BACKGROUND))?;
            let mut rng = seed::rng(stream_seed(rs, 7));
            let radius = (g.half_width() / 3).max(1);
            let c = random_sites(&g, &mut rng, 3, radius);
            let a = random_sites(&g, &mut rng, 3, radius);
            let fwd = evolve(&p, &c, &b0, &tl.view())?
                .final_sites()
                .intersects(&a);
            let back = dual_evolve(&a, &p, &b0, &tl, cfg.t_star)?
                .final_sites()
                .intersects(&c);
            Ok((fwd == back, fwd && back))
        })
        .collect::<Result<_>>()?;
    Ok(IdentityOutcome {
        runs: cfg.runs,
        violations: per.iter().filter(|p| !p.0).count(),
        both_hit: per.iter().filter(|p| p.1).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_is_clean() {
        let cfg = SuiteConfig {
            dim: 1,
            half_width: 12,
            horizon: 5.0,
            lambda: 2.0,
            r: 1.0,
            runs: 20,
            seed: 3,
        };
        for c in coupling_suite(&cfg).unwrap() {
            assert_eq!(c.violations, 0, "{c:?}");
        }
    }

    #[test]
    fn small_duality_is_exact() {
        let cfg = DualityConfig {
            dim: 1,
            half_width: 10,
            t_star: 4.0,
            lambda: 2.0,
            r: 1.0,
            alpha: 1.0,
            beta: 1.0,
            runs: 50,
            seed: 8,
        };
        let out = duality_identity(&cfg).unwrap();
        assert_eq!(out.violations, 0);
        assert!(out.both_hit > 0);
    }
}
