//! Event-driven evolution of `(C_t, B_t)` and its coupled variants.
//!
//! Every process here reads the same kind of event sequence (a
//! [`TimelineView`] or a lazily generated stream with identical events) and
//! differs only in which events it honours:
//!
//! * an arrow `x -> y` on edge `e` infects `y` iff `x` is infected, `e` is
//!   open just before the arrow and `x` lies in the open interior
//!   `(-L, L)^d` of the truncation box;
//! * a recovery at `x` heals `x`;
//! * a background candidate updates `B` by the flip rule of the spec.
//!
//! The untruncated process on a box of half-width `L` is the truncation at
//! `L` itself, so arrows never leave boundary sites. In reversed views the
//! rule is applied to the arrow's forward source, which keeps the dual
//! built from exactly the arrows the forward process can use.

mod region;
mod trajectory;

pub use region::{RegionBox, SpaceTimeRegion};
pub use trajectory::{
    first_containment_violation, pathwise_violation, subset_bits, Change, Layer, Snapshot,
    Trajectory,
};

use serde::{Deserialize, Serialize};

use crate::background::{check_candidate_rate, coupled_times, BackgroundSpec, EdgeState};
use crate::error::{check_rate, param, Error, Result};
use crate::graphical::{build_timeline, EventKind, Rates, Timeline, TimelineView, ViewEvent};
use crate::lattice::{Edge, EdgeSet, GraphView, Site, SiteSet};

/// Parameters of one CPERE run.
#[derive(Clone, Copy, Debug)]
pub struct RunParams<'g> {
    pub graph: &'g GraphView,
    pub lambda: f64,
    pub r: f64,
    pub spec: BackgroundSpec,
    pub horizon: f64,
    pub seed: u64,
}

impl<'g> RunParams<'g> {
    /// Rates may be zero; the horizon must be positive.
    pub fn new(
        graph: &'g GraphView,
        lambda: f64,
        r: f64,
        spec: BackgroundSpec,
        horizon: f64,
        seed: u64,
    ) -> Result<Self> {
        check_rate("lambda", lambda)?;
        check_rate("r", r)?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(param(
                "T",
                format!("horizon must be finite and positive, got {horizon}"),
            ));
        }
        if spec.dim() != graph.dim() {
            return Err(param(
                "spec",
                format!(
                    "background built for d = {} on a d = {} box",
                    spec.dim(),
                    graph.dim()
                ),
            ));
        }
        Ok(Self {
            graph,
            lambda,
            r,
            spec,
            horizon,
            seed,
        })
    }

    /// Timeline rates that realise exactly these parameters.
    pub fn rates(&self) -> Rates {
        Rates {
            lambda_max: self.lambda,
            r_max: self.r,
            q: self.spec.candidate_rate(),
        }
    }

    pub fn timeline(&self) -> Result<Timeline> {
        build_timeline(self.graph, self.rates(), self.horizon, self.seed)
    }

    pub fn with_spec(mut self, spec: BackgroundSpec) -> Self {
        self.spec = spec;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Gate<'a> {
    Evolve(&'a BackgroundSpec, f64),
    /// Every edge open, background ignored.
    AllOpen,
    /// Toggle exactly the flagged candidate events (indexed by sequence).
    Replay(&'a [bool]),
}

/// Which events a run honours.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dynamics<'a> {
    pub gate: Gate<'a>,
    pub arrows_from: f64,
    pub recoveries_from: f64,
    pub all_open_before: f64,
    /// Arrows only leave sites of sup-norm strictly below this.
    pub source_limit: u32,
    pub region: Option<&'a SpaceTimeRegion>,
    pub horizon: f64,
    pub stop_when_extinct: bool,
}

impl<'a> Dynamics<'a> {
    pub fn new(gate: Gate<'a>, source_limit: u32, horizon: f64) -> Self {
        Self {
            gate,
            arrows_from: 0.0,
            recoveries_from: 0.0,
            all_open_before: 0.0,
            source_limit,
            region: None,
            horizon,
            stop_when_extinct: false,
        }
    }
}

/// Mutable configuration during a run.
#[derive(Clone, Debug)]
pub struct State {
    pub infected: Vec<bool>,
    pub count: usize,
    pub edges: EdgeState,
}

impl State {
    pub fn sites(&self) -> SiteSet {
        SiteSet::from_mask(&self.infected)
    }
}

/// Hooks into a run. `after_change` is called after every event that changed
/// the state; returning true ends the run.
pub(crate) trait Observer {
    fn infected(&mut self, _t: f64, _x: Site) {}
    fn recovered(&mut self, _t: f64, _x: Site) {}
    fn edge(&mut self, _t: f64, _e: Edge, _open: bool) {}
    fn after_change(&mut self, _t: f64, _state: &State) -> bool {
        false
    }
}

pub(crate) struct NoObserver;
impl Observer for NoObserver {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Outcome {
    pub extinction: Option<f64>,
    pub boundary_touched: bool,
}

/// Core loop shared by every process in the crate.
pub(crate) fn simulate<I, O>(
    g: &GraphView,
    dynamics: &Dynamics<'_>,
    c0: &SiteSet,
    b0: &EdgeSet,
    events: I,
    obs: &mut O,
) -> (Outcome, State)
where
    I: IntoIterator<Item = ViewEvent>,
    O: Observer,
{
    let mut st = State {
        infected: c0.to_mask(g.n_sites()),
        count: c0.len(),
        edges: EdgeState::new(g, b0),
    };
    let boundary = dynamics.source_limit;
    let mut touched = c0.iter().any(|x| g.sup_norm(x) >= boundary);
    let breaks = dynamics.region.map(|r| r.breakpoints()).unwrap_or_default();
    let mut next_break = 0;
    if let Some(region) = dynamics.region {
        prune(g, region, 0.0, &mut st, obs);
    }
    let mut extinction = (st.count == 0).then_some(0.0);
    if extinction.is_some() && dynamics.stop_when_extinct {
        return (
            Outcome {
                extinction,
                boundary_touched: touched,
            },
            st,
        );
    }

    for ev in events {
        let t = ev.t;
        if t > dynamics.horizon {
            break;
        }
        if let Some(region) = dynamics.region {
            while next_break < breaks.len() && breaks[next_break] < t {
                let b = breaks[next_break];
                prune(g, region, b, &mut st, obs);
                next_break += 1;
                if st.count == 0 && extinction.is_none() {
                    extinction = Some(b);
                }
            }
            if extinction.is_some() && dynamics.stop_when_extinct {
                break;
            }
        }
        match ev.kind {
            EventKind::Arrow { from, to, edge } => {
                // Truncation is a property of the forward arrow, so reversed
                // views test the original source.
                let source = if ev.reversed { to } else { from };
                if !st.infected[from as usize]
                    || st.infected[to as usize]
                    || t < dynamics.arrows_from
                    || g.sup_norm(source) >= dynamics.source_limit
                {
                    continue;
                }
                let open = match dynamics.gate {
                    Gate::AllOpen => true,
                    _ => t < dynamics.all_open_before || st.edges.is_open(edge),
                };
                if !open {
                    continue;
                }
                if let Some(region) = dynamics.region {
                    if !region.contains(g, from, t) || !region.contains(g, to, t) {
                        continue;
                    }
                }
                st.infected[to as usize] = true;
                st.count += 1;
                if g.sup_norm(to) >= boundary {
                    touched = true;
                }
                obs.infected(t, to);
            }
            EventKind::Recovery { site } => {
                if t < dynamics.recoveries_from || !st.infected[site as usize] {
                    continue;
                }
                st.infected[site as usize] = false;
                st.count -= 1;
                obs.recovered(t, site);
            }
            EventKind::Flip { edge } => {
                let flipped = match dynamics.gate {
                    Gate::Evolve(spec, q) => st.edges.apply(spec, g, edge, ev.mark, q),
                    Gate::Replay(accepted) => {
                        if accepted[ev.seq] {
                            st.edges.toggle(edge);
                            true
                        } else {
                            false
                        }
                    }
                    Gate::AllOpen => false,
                };
                if !flipped {
                    continue;
                }
                obs.edge(t, edge, st.edges.is_open(edge));
            }
        }
        if st.count == 0 && extinction.is_none() {
            extinction = Some(t);
            if dynamics.stop_when_extinct {
                break;
            }
        }
        if obs.after_change(t, &st) {
            break;
        }
    }
    if let Some(region) = dynamics.region {
        while next_break < breaks.len() && breaks[next_break] < dynamics.horizon {
            let b = breaks[next_break];
            prune(g, region, b, &mut st, obs);
            next_break += 1;
            if st.count == 0 && extinction.is_none() {
                extinction = Some(b);
            }
        }
    }
    (
        Outcome {
            extinction,
            boundary_touched: touched,
        },
        st,
    )
}

fn prune<O: Observer>(
    g: &GraphView,
    region: &SpaceTimeRegion,
    t: f64,
    st: &mut State,
    obs: &mut O,
) {
    for x in 0..g.n_sites() {
        if st.infected[x] && !region.contains(g, x as Site, t) {
            st.infected[x] = false;
            st.count -= 1;
            obs.recovered(t, x as Site);
        }
    }
}

/// Records every change into a [`Trajectory`].
pub(crate) struct Recorder {
    pub changes: Vec<(f64, Change)>,
}

impl Observer for Recorder {
    fn infected(&mut self, t: f64, x: Site) {
        self.changes.push((t, Change::Infect(x)));
    }
    fn recovered(&mut self, t: f64, x: Site) {
        self.changes.push((t, Change::Recover(x)));
    }
    fn edge(&mut self, t: f64, e: Edge, open: bool) {
        self.changes.push((
            t,
            if open {
                Change::Open(e)
            } else {
                Change::Close(e)
            },
        ));
    }
}

pub(crate) fn record<I: IntoIterator<Item = ViewEvent>>(
    g: &GraphView,
    dynamics: &Dynamics<'_>,
    c0: &SiteSet,
    b0: &EdgeSet,
    events: I,
) -> Trajectory {
    let mut rec = Recorder {
        changes: Vec::new(),
    };
    let (out, _) = simulate(g, dynamics, c0, b0, events, &mut rec);
    Trajectory {
        n_sites: g.n_sites(),
        n_edges: g.n_edges(),
        c0: c0.clone(),
        b0: b0.clone(),
        changes: rec.changes,
        horizon: dynamics.horizon,
        extinction: out.extinction,
        boundary_touched: out.boundary_touched,
    }
}

fn check_inputs(params: &RunParams<'_>, c0: &SiteSet, b0: &EdgeSet, tl: &Timeline) -> Result<()> {
    let g = params.graph;
    if !tl.fits(g) {
        return Err(param("timeline", "built for a different box"));
    }
    g.check_sites(c0)?;
    g.check_edges(b0)?;
    let rates = tl.rates();
    if params.lambda > rates.lambda_max {
        return Err(param(
            "lambda",
            format!(
                "{} exceeds the timeline arrow ceiling {}",
                params.lambda, rates.lambda_max
            ),
        ));
    }
    if params.r > rates.r_max {
        return Err(param(
            "r",
            format!(
                "{} exceeds the timeline recovery ceiling {}",
                params.r, rates.r_max
            ),
        ));
    }
    Ok(())
}

/// The view thinned to `min(lambda, view rate)` and `min(r, view rate)`.
fn effective_view<'a>(params: &RunParams<'_>, view: &TimelineView<'a>) -> Result<TimelineView<'a>> {
    view.thin(params.lambda.min(view.arrow_rate()))?
        .thin_recoveries(params.r.min(view.recovery_rate()))
}

fn run_horizon(params: &RunParams<'_>, view: &TimelineView<'_>) -> Result<f64> {
    if view.span() < params.horizon {
        return Err(param(
            "T",
            format!(
                "horizon {} exceeds the view span {}",
                params.horizon,
                view.span()
            ),
        ));
    }
    Ok(params.horizon)
}

/// CPERE on the view. Arrow and recovery rates are `params.lambda` and
/// `params.r`, further thinned by the view if it is already thinner.
pub fn evolve(
    params: &RunParams<'_>,
    c0: &SiteSet,
    b0: &EdgeSet,
    view: &TimelineView<'_>,
) -> Result<Trajectory> {
    evolve_truncated(params.graph.half_width(), params, c0, b0, view)
}

/// The process truncated at `l_inner`: arrows only from `(-l_inner, l_inner)^d`.
pub fn evolve_truncated(
    l_inner: u32,
    params: &RunParams<'_>,
    c0: &SiteSet,
    b0: &EdgeSet,
    view: &TimelineView<'_>,
) -> Result<Trajectory> {
    run_full(l_inner, params, &params.spec, c0, b0, view, |d| d)
}

fn run_full(
    l_inner: u32,
    params: &RunParams<'_>,
    spec: &BackgroundSpec,
    c0: &SiteSet,
    b0: &EdgeSet,
    view: &TimelineView<'_>,
    adjust: impl FnOnce(Dynamics<'_>) -> Dynamics<'_>,
) -> Result<Trajectory> {
    let g = params.graph;
    if l_inner == 0 || l_inner > g.half_width() {
        return Err(param(
            "L_inner",
            format!("must lie in 1..={}, got {l_inner}", g.half_width()),
        ));
    }
    check_inputs(params, c0, b0, view.timeline())?;
    let q = view.timeline().rates().q;
    check_candidate_rate(spec, q)?;
    let horizon = run_horizon(params, view)?;
    let v = effective_view(params, view)?;
    let dynamics = adjust(Dynamics::new(Gate::Evolve(spec, q), l_inner, horizon));
    Ok(record(g, &dynamics, c0, b0, v.iter()))
}

/// Richardson model on the view: arrows at rate `lambda` (thinned from
/// the view), no recoveries, every edge open, same truncation as
/// [`evolve`].
pub fn richardson(
    g: &GraphView,
    lambda: f64,
    c0: &SiteSet,
    view: &TimelineView<'_>,
    t_end: f64,
) -> Result<Trajectory> {
    g.check_sites(c0)?;
    if !view.timeline().fits(g) {
        return Err(param("timeline", "built for a different box"));
    }
    if t_end > view.span() {
        return Err(param(
            "t_end",
            format!("{t_end} exceeds the view span {}", view.span()),
        ));
    }
    check_rate("lambda", lambda)?;
    let v = view.thin(lambda.min(view.arrow_rate()))?;
    let mut dynamics = Dynamics::new(Gate::AllOpen, g.half_width(), t_end);
    dynamics.recoveries_from = f64::INFINITY;
    Ok(record(g, &dynamics, c0, &EdgeSet::new(), v.iter()))
}

/// Dual process started from `a` on the time-reversed timeline over
/// `[0, t_star]`, against the frozen forward background
/// `B^_s = B_{(t* - s)-}`. Its edge layer records `B^`.
pub fn dual_evolve(
    a: &SiteSet,
    params: &RunParams<'_>,
    b0: &EdgeSet,
    tl: &Timeline,
    t_star: f64,
) -> Result<Trajectory> {
    let g = params.graph;
    check_inputs(params, a, b0, tl)?;
    let q = tl.rates().q;
    check_candidate_rate(&params.spec, q)?;
    if !(t_star > 0.0) || t_star > tl.horizon() {
        return Err(param(
            "t*",
            format!("must lie in (0, {}], got {t_star}", tl.horizon()),
        ));
    }
    let mut accepted = vec![false; tl.len()];
    let mut edges = EdgeState::new(g, b0);
    for ev in tl.view().iter().take_while(|e| e.t <= t_star) {
        if let EventKind::Flip { edge } = ev.kind {
            accepted[ev.seq] = edges.apply(&params.spec, g, edge, ev.mark, q);
        }
    }
    let b_final = edges.to_set();
    let view = tl.view().reverse(t_star)?;
    let v = effective_view(params, &view)?;
    let dynamics = Dynamics::new(Gate::Replay(&accepted), g.half_width(), t_star);
    Ok(record(g, &dynamics, a, &b_final, v.iter()))
}

/// Runs under `DP(alpha_min, beta_max)`, the given spec, and
/// `DP(alpha_max, beta_min)` on the shared view. The timeline's candidate
/// rate must be at least [`BackgroundSpec::sandwich_rate`].
pub fn coupled_bounds_cpdp(
    params: &RunParams<'_>,
    c0: &SiteSet,
    b0: &EdgeSet,
    view: &TimelineView<'_>,
) -> Result<[Trajectory; 3]> {
    let need = params.spec.sandwich_rate();
    let q = view.timeline().rates().q;
    if q + 1e-12 * q.max(1.0) < need {
        return Err(param(
            "q",
            format!("sandwich needs a candidate rate of at least {need}, timeline has {q}"),
        ));
    }
    let (lo, hi) = params.spec.comparison_dps();
    let l = params.graph.half_width();
    Ok([
        run_full(l, params, &lo, c0, b0, view, |d| d)?,
        run_full(l, params, &params.spec, c0, b0, view, |d| d)?,
        run_full(l, params, &hi, c0, b0, view, |d| d)?,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayMode {
    /// Only recoveries (and the background) act on `[0, s]`.
    SuppressArrows,
    /// No recoveries and every edge treated as open on `[0, s]`; the
    /// background itself keeps evolving.
    SuppressRecoveriesAndBackground,
}

pub fn delayed_variant(
    mode: DelayMode,
    s: f64,
    params: &RunParams<'_>,
    c0: &SiteSet,
    b0: &EdgeSet,
    view: &TimelineView<'_>,
) -> Result<Trajectory> {
    if !(s >= 0.0) || s > params.horizon {
        return Err(param(
            "s",
            format!("delay must lie in [0, {}], got {s}", params.horizon),
        ));
    }
    run_full(
        params.graph.half_width(),
        params,
        &params.spec,
        c0,
        b0,
        view,
        |mut d| {
            match mode {
                DelayMode::SuppressArrows => d.arrows_from = s,
                DelayMode::SuppressRecoveriesAndBackground => {
                    d.recoveries_from = s;
                    d.all_open_before = s;
                }
            }
            d
        },
    )
}

/// Per-site entry times into `Φ`: the latest coupling time of the incident
/// edges for interior sites, infinite for boundary sites.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiTimes {
    pub times: Vec<f64>,
    pub horizon: f64,
    pub exact: bool,
}

impl PhiTimes {
    pub fn at(&self, t: f64) -> SiteSet {
        self.times
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= t)
            .map(|(x, _)| x as Site)
            .collect()
    }
}

pub fn phi_times(
    spec: &BackgroundSpec,
    g: &GraphView,
    view: &TimelineView<'_>,
) -> Result<PhiTimes> {
    let cr = coupled_times(spec, g, view)?;
    let times = (0..g.n_sites() as Site)
        .map(|x| {
            if !g.is_interior(x) {
                return f64::INFINITY;
            }
            g.neighbours(x)
                .iter()
                .map(|&(_, e)| cr.since(e))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(PhiTimes {
        times,
        horizon: cr.horizon(),
        exact: cr.is_exact(),
    })
}

/// `Φ_t`: interior sites whose incident edges are all permanently coupled.
pub fn phi_set(
    spec: &BackgroundSpec,
    g: &GraphView,
    view: &TimelineView<'_>,
    t: f64,
) -> Result<SiteSet> {
    if t > view.span() {
        return Err(Error::OutOfRange(format!(
            "t = {t} beyond the view span {}",
            view.span()
        )));
    }
    Ok(phi_times(spec, g, view)?.at(t))
}
