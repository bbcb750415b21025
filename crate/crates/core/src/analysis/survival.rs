//! Finite-horizon survival estimators.
//!
//! Replica `i` of a run with root seed `s` draws its events from seed
//! `replica_seed(s, i)` at the ceiling rates, thinned down to the run's
//! parameters. Estimates at different parameters but equal root seed and
//! ceilings are therefore computed from the same realisations, which makes
//! them pathwise monotone wherever the process is.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::estimate::Estimate;
use crate::background::{check_candidate_rate, BackgroundSpec, EdgeState};
use crate::engine::{simulate, Dynamics, Gate, NoObserver, Observer, RunParams, State};
use crate::error::{param, Result};
use crate::graphical::{stream_view, EventKind, Rates, Thinning};
use crate::lattice::{EdgeSet, GraphView, Site, SiteSet};
use crate::seed::{self, replica_seed, stream_seed};

/// Initial background configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    #[default]
    Empty,
    Full,
    Fixed(EdgeSet),
    /// Exact product-Bernoulli stationary law (dynamical percolation only).
    Stationary,
    /// Evolved from the empty configuration for
    /// [`BackgroundSpec::burn_in_time`].
    BurnIn,
}

impl StartMode {
    pub fn name(&self) -> &'static str {
        match self {
            StartMode::Empty => "empty",
            StartMode::Full => "full",
            StartMode::Fixed(_) => "fixed",
            StartMode::Stationary => "stationary",
            StartMode::BurnIn => "burn-in",
        }
    }
}

/// Background at time 0 for the replica with seed `rep_seed`.
pub(crate) fn initial_background(
    spec: &BackgroundSpec,
    g: &GraphView,
    start: &StartMode,
    q: f64,
    rep_seed: u64,
) -> Result<EdgeSet> {
    match start {
        StartMode::Empty => Ok(EdgeSet::new()),
        StartMode::Full => Ok(g.all_edges()),
        StartMode::Fixed(b) => {
            g.check_edges(b)?;
            Ok(b.clone())
        }
        StartMode::Stationary => {
            spec.sample_stationary(g, stream_seed(rep_seed, seed::STREAM_BACKGROUND))
        }
        StartMode::BurnIn => {
            let burn = spec.burn_in_time()?;
            let rates = Rates {
                lambda_max: 0.0,
                r_max: 0.0,
                q,
            };
            let mut st = EdgeState::all(g, false);
            for ev in stream_view(
                g,
                rates,
                Thinning::full(rates),
                burn,
                stream_seed(rep_seed, seed::STREAM_BURN_IN),
            ) {
                if let EventKind::Flip { edge } = ev.kind {
                    st.apply(spec, g, edge, ev.mark, q);
                }
            }
            Ok(st.to_set())
        }
    }
}

/// Ceiling rates for a replica family, defaulting to the run's own rates.
pub(crate) fn resolve_ceilings(params: &RunParams<'_>, ceilings: Option<Rates>) -> Result<Rates> {
    let c = ceilings.unwrap_or_else(|| params.rates());
    let c = Rates::new(c.lambda_max, c.r_max, c.q)?;
    if params.lambda > c.lambda_max || params.r > c.r_max {
        return Err(param(
            "ceilings",
            format!(
                "rates (lambda {}, r {}) exceed the shared ceilings ({}, {})",
                params.lambda, params.r, c.lambda_max, c.r_max
            ),
        ));
    }
    check_candidate_rate(&params.spec, c.q)?;
    Ok(c)
}

/// Runs one replica forward from `c0` with the given observer.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_replica<O: Observer>(
    params: &RunParams<'_>,
    c0: &SiteSet,
    start: &StartMode,
    ceilings: Rates,
    rep_seed: u64,
    horizon: f64,
    stop_when_extinct: bool,
    obs: &mut O,
) -> Result<(crate::engine::Outcome, State)> {
    let g = params.graph;
    let b0 = initial_background(&params.spec, g, start, ceilings.q, rep_seed)?;
    let thinning = Thinning::new(ceilings, params.lambda, params.r)?;
    let mut dynamics = Dynamics::new(
        Gate::Evolve(&params.spec, ceilings.q),
        g.half_width(),
        horizon,
    );
    dynamics.stop_when_extinct = stop_when_extinct;
    let events = stream_view(g, ceilings, thinning, horizon, rep_seed);
    Ok(simulate(g, &dynamics, c0, &b0, events, obs))
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Counts {
    pub alive: u64,
    pub touched: u64,
    pub n: u64,
}

impl Counts {
    pub fn add(self, o: Counts) -> Counts {
        Counts {
            alive: self.alive + o.alive,
            touched: self.touched + o.touched,
            n: self.n + o.n,
        }
    }
}

/// Alive-at-horizon counts over replicas `range`.
pub(crate) fn survival_counts(
    params: &RunParams<'_>,
    c0: &SiteSet,
    start: &StartMode,
    ceilings: Rates,
    range: std::ops::Range<u64>,
) -> Result<Counts> {
    let per: Vec<(bool, bool)> = range
        .into_par_iter()
        .map(|i| {
            let (out, _) = run_replica(
                params,
                c0,
                start,
                ceilings,
                replica_seed(params.seed, i),
                params.horizon,
                true,
                &mut NoObserver,
            )?;
            Ok((out.extinction.is_none(), out.boundary_touched))
        })
        .collect::<Result<_>>()?;
    Ok(Counts {
        alive: per.iter().filter(|p| p.0).count() as u64,
        touched: per.iter().filter(|p| p.1).count() as u64,
        n: per.len() as u64,
    })
}

/// `P(C_T != ∅)` over `reps` replicas with root seed `params.seed`.
pub fn estimate_survival(
    params: &RunParams<'_>,
    c0: &SiteSet,
    start: &StartMode,
    reps: usize,
    ceilings: Option<Rates>,
) -> Result<Estimate> {
    check_reps(reps)?;
    params.graph.check_sites(c0)?;
    let ceilings = resolve_ceilings(params, ceilings)?;
    let c = survival_counts(params, c0, start, ceilings, 0..reps as u64)?;
    Estimate::from_counts(c.alive, c.n, c.alive, c.touched, params.seed)
}

/// Recurrence proxy next to the plain survival estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalProxy {
    /// `P(x in C_t for some t in [T/2, T])`.
    pub proxy: Estimate,
    /// `P(C_T != ∅)` on the same replicas.
    pub survival: Estimate,
}

struct SiteWatch {
    x: Site,
    from: f64,
    state: bool,
    flushed: bool,
    hit: bool,
}

impl SiteWatch {
    fn touch(&mut self, t: f64) {
        if !self.flushed && t >= self.from {
            self.flushed = true;
            self.hit |= self.state;
        }
    }
}

impl Observer for SiteWatch {
    fn infected(&mut self, t: f64, x: Site) {
        self.touch(t);
        if x == self.x {
            self.state = true;
            self.hit |= t >= self.from;
        }
    }
    fn recovered(&mut self, t: f64, x: Site) {
        self.touch(t);
        if x == self.x {
            self.state = false;
        }
    }
}

pub fn local_survival_proxy(
    params: &RunParams<'_>,
    x: Site,
    c0: &SiteSet,
    start: &StartMode,
    reps: usize,
    ceilings: Option<Rates>,
) -> Result<LocalProxy> {
    check_reps(reps)?;
    let g = params.graph;
    g.check_sites(c0)?;
    if x as usize >= g.n_sites() {
        return Err(param("x", format!("site {x} outside the box")));
    }
    let ceilings = resolve_ceilings(params, ceilings)?;
    let per: Vec<(bool, bool, bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut w = SiteWatch {
                x,
                from: params.horizon / 2.0,
                state: c0.contains(x),
                flushed: false,
                hit: false,
            };
            let (out, _) = run_replica(
                params,
                c0,
                start,
                ceilings,
                replica_seed(params.seed, i),
                params.horizon,
                true,
                &mut w,
            )?;
            if !w.flushed {
                w.hit |= w.state;
            }
            Ok((w.hit, out.extinction.is_none(), out.boundary_touched))
        })
        .collect::<Result<_>>()?;
    let count = |f: fn(&(bool, bool, bool)) -> bool| per.iter().filter(|p| f(p)).count() as u64;
    let (hits, alive, touched) = (count(|p| p.0), count(|p| p.1), count(|p| p.2));
    let n = reps as u64;
    Ok(LocalProxy {
        proxy: Estimate::from_counts(hits, n, alive, touched, params.seed)?,
        survival: Estimate::from_counts(alive, n, alive, touched, params.seed)?,
    })
}

/// Samples an indicator of the state at each grid time.
struct GridSampler<'a> {
    grid: &'a [f64],
    next: usize,
    member: Vec<bool>,
    inside: usize,
    out: Vec<bool>,
}

impl GridSampler<'_> {
    fn flush_before(&mut self, t: f64) {
        while self.next < self.grid.len() && self.grid[self.next] < t {
            self.out.push(self.inside > 0);
            self.next += 1;
        }
    }
    fn finish(&mut self) {
        self.flush_before(f64::INFINITY);
    }
}

impl Observer for GridSampler<'_> {
    fn infected(&mut self, t: f64, x: Site) {
        self.flush_before(t);
        if self.member[x as usize] {
            self.inside += 1;
        }
    }
    fn recovered(&mut self, t: f64, x: Site) {
        self.flush_before(t);
        if self.member[x as usize] {
            self.inside -= 1;
        }
    }
}

/// `P(C_t ∩ B_n(0) != ∅)` along `t_grid`, started from `(B_n(0), ∅)`.
pub fn condition_block_curve(
    params: &RunParams<'_>,
    n: u32,
    t_grid: &[f64],
    reps: usize,
    ceilings: Option<Rates>,
) -> Result<Vec<(f64, Estimate)>> {
    check_reps(reps)?;
    let g = params.graph;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[0] <= w[1])) || t_grid[0] < 0.0 {
        return Err(param(
            "t_grid",
            "must be non-empty, non-negative and sorted",
        ));
    }
    let horizon = *t_grid.last().unwrap();
    if horizon > params.horizon {
        return Err(param(
            "t_grid",
            format!("last time {horizon} exceeds T = {}", params.horizon),
        ));
    }
    let ball = g.site_ball(g.origin(), n);
    if ball.clipped || n >= g.half_width() {
        return Err(param(
            "n",
            format!(
                "ball of radius {n} does not fit well inside a box of half-width {}",
                g.half_width()
            ),
        ));
    }
    let member = ball.members.to_mask(g.n_sites());
    let ceilings = resolve_ceilings(params, ceilings)?;
    let run_params = RunParams { horizon, ..*params };
    let per: Vec<Vec<bool>> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = GridSampler {
                grid: t_grid,
                next: 0,
                member: member.clone(),
                inside: ball.members.len(),
                out: Vec::with_capacity(t_grid.len()),
            };
            // Grid points at exactly 0 see the initial state.
            run_replica(
                &run_params,
                &ball.members,
                &StartMode::Empty,
                ceilings,
                replica_seed(params.seed, i),
                horizon,
                true,
                &mut s,
            )?;
            s.finish();
            Ok(s.out)
        })
        .collect::<Result<_>>()?;
    t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let hits = per.iter().filter(|v| v[k]).count() as u64;
            Ok((
                t,
                Estimate::from_counts(hits, reps as u64, hits, 0, params.seed)?,
            ))
        })
        .collect()
}
