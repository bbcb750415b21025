//! Empirical checks of the analytic bounds and identities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::estimate::{two_proportion_z, Estimate};
use crate::analysis::growth::{g_rho, hitting_bound, solve_c1};
use crate::analysis::survival::{run_replica, StartMode};
use crate::background::{coupled_times, BackgroundSpec};
use crate::engine::{phi_times, simulate, Dynamics, Gate, NoObserver, Observer, RunParams};
use crate::error::{param, Result};
use crate::graphical::{build_timeline, stream_view, Rates, Thinning};
use crate::lattice::{build_box, GraphView, Site, SiteSet};
use crate::seed::{replica_seed, stream_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingRow {
    pub distance: u32,
    /// `P(tau_y < c d)` for `y = d e_1`.
    pub empirical: Estimate,
    pub bound: f64,
    pub g0: f64,
    /// `empirical <= bound + 3 sigma`.
    pub within: bool,
}

/// First infection times of a set of target sites.
struct FirstHits {
    targets: Vec<Site>,
    times: Vec<f64>,
}

impl Observer for FirstHits {
    fn infected(&mut self, t: f64, x: Site) {
        for (k, &y) in self.targets.iter().enumerate() {
            if y == x && self.times[k].is_infinite() {
                self.times[k] = t;
            }
        }
    }
}

/// Richardson runs from the origin of `Z^dim`; targets sit on the first
/// axis at each distance, inside a box of half-width twice the largest.
pub fn hitting_bound_report(
    dim: usize,
    lambda: f64,
    c: f64,
    distances: &[u32],
    reps: usize,
    seed: u64,
) -> Result<Vec<HittingRow>> {
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    if distances.is_empty() || distances.contains(&0) {
        return Err(param("distances", "need at least one positive distance"));
    }
    let degree = 2 * dim;
    let c1 = solve_c1(lambda, degree, 0.0)?.c1;
    if !(c > 0.0 && c < c1) {
        return Err(param(
            "c",
            format!("must lie in (0, c1 = {c1}) for the bound to apply, got {c}"),
        ));
    }
    let max_d = *distances.iter().max().unwrap();
    let g = build_box(dim, 2 * max_d)?;
    let targets: Vec<Site> = distances
        .iter()
        .map(|&d| {
            let mut x = vec![0i32; dim];
            x[0] = d as i32;
            g.site_at(&x)
        })
        .collect::<Option<_>>()
        .ok_or_else(|| param("distances", "target outside the box"))?;
    let t_end = c * max_d as f64;
    let rates = Rates::new(lambda, 0.0, 0.0)?;
    let c0: SiteSet = [g.origin()].into_iter().collect();
    let hits: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut obs = FirstHits {
                targets: targets.clone(),
                times: vec![f64::INFINITY; targets.len()],
            };
            let mut dynamics = Dynamics::new(Gate::AllOpen, g.half_width(), t_end);
            dynamics.recoveries_from = f64::INFINITY;
            let events = stream_view(
                &g,
                rates,
                Thinning::full(rates),
                t_end,
                replica_seed(seed, i),
            );
            simulate(&g, &dynamics, &c0, &Default::default(), events, &mut obs);
            obs.times
        })
        .collect();
    let g0 = g_rho(c, lambda, degree, 0.0);
    distances
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let limit = c * d as f64;
            let n_hit = hits.iter().filter(|h| h[k] < limit).count() as u64;
            let empirical = Estimate::from_counts(n_hit, reps as u64, 0, 0, seed)?;
            let bound = hitting_bound(lambda, c, degree, d)?;
            Ok(HittingRow {
                distance: d,
                within: empirical.p_hat <= bound + 3.0 * empirical.sigma(),
                empirical,
                bound,
                g0,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub t: f64,
    /// `P(e not in Psi'_t)` for a single edge.
    pub empirical: Estimate,
    /// `exp(-(alpha + beta) t)`.
    pub exact: f64,
    pub within: bool,
}

/// Single-edge coupling times under dynamical percolation with the exact
/// candidate rate `alpha + beta`.
pub fn coupling_speed_report(
    spec: &BackgroundSpec,
    t_grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<CouplingRow>> {
    let (alpha, beta) = spec.dp_params().ok_or_else(|| {
        param(
            "spec",
            "the exact coupling law is only available for dynamical percolation",
        )
    })?;
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(param("t_grid", "need finite non-negative times"));
    }
    let horizon = t_grid
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let g = build_box(spec.dim(), 1)?;
    let rates = Rates::new(0.0, 0.0, alpha + beta)?;
    let since: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let tl = build_timeline(&g, rates, horizon, replica_seed(seed, i))?;
            Ok(coupled_times(spec, &g, &tl.view())?.since(0))
        })
        .collect::<Result<_>>()?;
    t_grid
        .iter()
        .map(|&t| {
            let n = since.iter().filter(|&&s| s > t).count() as u64;
            let empirical = Estimate::from_counts(n, reps as u64, 0, 0, seed)?;
            let exact = (-(alpha + beta) * t).exp();
            Ok(CouplingRow {
                t,
                within: empirical.within(exact, 3.0),
                empirical,
                exact,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfDuality {
    /// `P(C_t^{C} ∩ A != ∅)` from a stationary background.
    pub forward: Estimate,
    /// `P(C_t^{A} ∩ C != ∅)`, independent replicas.
    pub backward: Estimate,
    pub z: f64,
}

/// Two independent experiments on different streams of the root seed.
#[allow(clippy::too_many_arguments)]
pub fn self_duality_check(
    g: &GraphView,
    lambda: f64,
    r: f64,
    spec: &BackgroundSpec,
    c: &SiteSet,
    a: &SiteSet,
    t: f64,
    reps: usize,
    seed: u64,
) -> Result<SelfDuality> {
    if spec.dp_params().is_none() {
        return Err(param(
            "spec",
            "self-duality needs the dynamical percolation stationary law",
        ));
    }
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    g.check_sites(c)?;
    g.check_sites(a)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(param("t", "must be finite and non-negative"));
    }
    let side = |from: &SiteSet, target: &SiteSet, root: u64| -> Result<Estimate> {
        if t == 0.0 {
            let hit = if from.intersects(target) {
                reps as u64
            } else {
                0
            };
            return Estimate::from_counts(hit, reps as u64, 0, 0, root);
        }
        let params = RunParams::new(g, lambda, r, *spec, t, root)?;
        let ceilings = params.rates();
        let per: Vec<(bool, bool)> = (0..reps as u64)
            .into_par_iter()
            .map(|i| {
                let (out, st) = run_replica(
                    &params,
                    from,
                    &StartMode::Stationary,
                    ceilings,
                    replica_seed(root, i),
                    t,
                    true,
                    &mut NoObserver,
                )?;
                Ok((
                    target.iter().any(|x| st.infected[x as usize]),
                    out.boundary_touched,
                ))
            })
            .collect::<Result<_>>()?;
        let hit = per.iter().filter(|p| p.0).count() as u64;
        let touched = per.iter().filter(|p| p.1).count() as u64;
        Estimate::from_counts(hit, reps as u64, hit, touched, root)
    };
    let forward = side(c, a, stream_seed(seed, 1))?;
    let backward = side(a, c, stream_seed(seed, 2))?;
    let z = two_proportion_z(&forward, &backward);
    Ok(SelfDuality {
        forward,
        backward,
        z,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentCurve {
    /// `(s, P(Richardson_t ⊆ Phi_t for all t in [s, T]))`.
    pub points: Vec<(f64, Estimate)>,
    pub horizon: f64,
    /// Coupling times are exact (dynamical percolation) rather than
    /// horizon-limited.
    pub exact: bool,
    /// Nondecreasing in `s`. Holds pathwise, so `false` indicates a bug.
    pub monotone: bool,
}

/// Richardson growth at rate `params.lambda` from the origin against the
/// coupled vertex region of the background, on shared timelines.
pub fn containment_curve(
    params: &RunParams<'_>,
    s_grid: &[f64],
    reps: usize,
) -> Result<ContainmentCurve> {
    let g = params.graph;
    let horizon = params.horizon;
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    if s_grid.is_empty()
        || s_grid.windows(2).any(|w| !(w[0] <= w[1]))
        || s_grid[0] < 0.0
        || s_grid[s_grid.len() - 1] > horizon
    {
        return Err(param(
            "s_grid",
            format!("must be sorted within [0, {horizon}]"),
        ));
    }
    let rates = Rates::new(params.lambda, 0.0, params.spec.candidate_rate())?;
    let c0: SiteSet = [g.origin()].into_iter().collect();
    let per: Vec<(f64, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let tl = build_timeline(g, rates, horizon, replica_seed(params.seed, i))?;
            let phi = phi_times(&params.spec, g, &tl.view())?;
            let mut hits = AllHits {
                tau: vec![f64::INFINITY; g.n_sites()],
            };
            for x in c0.iter() {
                hits.tau[x as usize] = 0.0;
            }
            let mut dynamics = Dynamics::new(Gate::AllOpen, g.half_width(), horizon);
            dynamics.recoveries_from = f64::INFINITY;
            simulate(
                g,
                &dynamics,
                &c0,
                &Default::default(),
                tl.view().iter(),
                &mut hits,
            );
            // Smallest s for which the event holds.
            let need = hits
                .tau
                .iter()
                .zip(&phi.times)
                .filter(|(tau, phi)| tau.is_finite() && **phi > **tau)
                .map(|(_, &phi)| phi)
                .fold(0.0, f64::max);
            Ok((need, phi.exact))
        })
        .collect::<Result<_>>()?;
    let exact = per.iter().all(|p| p.1);
    let points: Vec<(f64, Estimate)> = s_grid
        .iter()
        .map(|&s| {
            let n = per.iter().filter(|p| p.0 <= s).count() as u64;
            Ok((s, Estimate::from_counts(n, reps as u64, 0, 0, params.seed)?))
        })
        .collect::<Result<_>>()?;
    let monotone = points
        .windows(2)
        .all(|w| w[0].1.successes <= w[1].1.successes);
    Ok(ContainmentCurve {
        points,
        horizon,
        exact,
        monotone,
    })
}

struct AllHits {
    tau: Vec<f64>,
}

impl Observer for AllHits {
    fn infected(&mut self, t: f64, x: Site) {
        let slot = &mut self.tau[x as usize];
        if slot.is_infinite() {
            *slot = t;
        }
    }
}
