//! Attractive finite-range spin systems on the edges: dynamical percolation,
//! the noisy voter model (d = 1) and the stochastic Ising model.
//!
//! All three have range 1 and rates that depend on the local pattern only
//! through `k`, the number of open edges among the `n` line-graph
//! neighbours. On the box boundary `n` is smaller than `4d - 2`: missing
//! neighbours are simply absent from the pattern.
//!
//! Flip rule on a candidate event with mark `u` and candidate rate `Q`:
//! a closed edge opens iff `u * Q < up(k)`, an open edge closes iff
//! `(1 - u) * Q < down(k)`. Opening uses the bottom of the mark range and
//! closing the top, so ordered configurations stay ordered whenever the
//! rates are attractive and `up + down <= Q`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::graphical::{EventKind, TimelineView, ViewEvent};
use crate::lattice::{Edge, EdgeSet, GraphView};
use crate::num::Real;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackgroundKind {
    DynamicalPercolation {
        alpha: f64,
        beta: f64,
    },
    NoisyVoter {
        alpha: f64,
        beta: f64,
    },
    Ising {
        beta: f64,
    },
    /// No flips at all. Started from every edge open this is the classical
    /// contact process.
    Frozen,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    kind: BackgroundKind,
    dim: usize,
    line_degree: usize,
    q: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateBounds<S> {
    pub alpha_min: S,
    pub alpha_max: S,
    pub beta_min: S,
    pub beta_max: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityMargin<S> {
    /// Total influence `sum_a sup_B |q(e,B) - q(e,B^a)|`.
    pub m: S,
    /// Flip-rate floor `inf_B q(e,B) + q(e,B^e)`.
    pub epsilon: S,
    pub margin: S,
    /// Exponential mixing rate, known exactly only for dynamical percolation.
    pub kappa_exact: Option<S>,
}

/// Largest pattern size the exhaustive checks will enumerate, as a power of 2.
const MAX_PATTERN_BITS: usize = 20;

pub fn make_spec(kind: BackgroundKind, dim: usize) -> Result<BackgroundSpec> {
    BackgroundSpec::new(kind, dim)
}

impl BackgroundSpec {
    pub fn new(kind: BackgroundKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(param("d", "dimension must be at least 1"));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(param(name, format!("must be finite and positive, got {v}")))
            }
        };
        match kind {
            BackgroundKind::DynamicalPercolation { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
            }
            BackgroundKind::NoisyVoter { alpha, beta } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
                if dim != 1 {
                    return Err(Error::Unsupported(format!(
                        "noisy voter background is only defined for d = 1, got d = {dim}"
                    )));
                }
            }
            BackgroundKind::Ising { beta } => {
                positive("beta", beta)?;
                let bound = ising_beta_bound(4 * dim - 2);
                if beta >= bound {
                    return Err(param(
                        "beta",
                        format!("Ising inverse temperature must be below {bound} in d = {dim}, got {beta}"),
                    ));
                }
            }
            BackgroundKind::Frozen => {}
        }
        let spec = Self::unchecked(kind, dim);
        spec.check_attractive()?;
        Ok(spec)
    }

    /// Skips parameter validation; used for the comparison percolations whose
    /// rates may legitimately be zero.
    pub(crate) fn unchecked(kind: BackgroundKind, dim: usize) -> Self {
        let line_degree = 4 * dim - 2;
        let mut spec = Self {
            kind,
            dim,
            line_degree,
            q: 0.0,
        };
        spec.q = (0..=line_degree)
            .map(|k| spec.up::<f64>(k, line_degree) + spec.down::<f64>(k, line_degree))
            .fold(0.0, f64::max);
        spec
    }

    pub fn dynamical_percolation(alpha: f64, beta: f64, dim: usize) -> Result<Self> {
        Self::new(BackgroundKind::DynamicalPercolation { alpha, beta }, dim)
    }

    pub fn frozen(dim: usize) -> Self {
        Self::unchecked(BackgroundKind::Frozen, dim)
    }

    pub fn kind(&self) -> BackgroundKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Candidate rate `Q = sup_F (up(F) + down(F))` for interior edges.
    pub fn candidate_rate(&self) -> f64 {
        self.q
    }

    pub fn is_dp(&self) -> bool {
        matches!(self.kind, BackgroundKind::DynamicalPercolation { .. })
    }

    pub fn dp_params(&self) -> Option<(f64, f64)> {
        match self.kind {
            BackgroundKind::DynamicalPercolation { alpha, beta } => Some((alpha, beta)),
            _ => None,
        }
    }

    /// Whether rates depend on the neighbouring edges at all.
    pub fn needs_pattern(&self) -> bool {
        matches!(
            self.kind,
            BackgroundKind::NoisyVoter { .. } | BackgroundKind::Ising { .. }
        )
    }

    /// Rate at which a closed edge with `k` of `n` open neighbours opens.
    pub fn up<S: Real>(&self, k: usize, n: usize) -> S {
        match self.kind {
            BackgroundKind::DynamicalPercolation { alpha, .. } => S::lit(alpha),
            BackgroundKind::NoisyVoter { alpha, beta } => {
                S::lit(alpha) / S::lit(2.0) + S::lit(beta) * S::of_usize(k)
            }
            BackgroundKind::Ising { beta } => {
                S::one() - (S::lit(beta) * (S::of_usize(n) - S::lit(2.0) * S::of_usize(k))).tanh()
            }
            BackgroundKind::Frozen => S::zero(),
        }
    }

    /// Rate at which an open edge with `k` of `n` open neighbours closes.
    pub fn down<S: Real>(&self, k: usize, n: usize) -> S {
        match self.kind {
            BackgroundKind::DynamicalPercolation { beta, .. } => S::lit(beta),
            BackgroundKind::NoisyVoter { alpha, beta } => {
                S::lit(alpha) / S::lit(2.0) + S::lit(beta) * S::of_usize(n - k)
            }
            BackgroundKind::Ising { beta } => {
                S::one() + (S::lit(beta) * (S::of_usize(n) - S::lit(2.0) * S::of_usize(k))).tanh()
            }
            BackgroundKind::Frozen => S::zero(),
        }
    }

    /// Decides a candidate event; true if the edge changes state.
    #[inline]
    pub fn flips(&self, open: bool, k: usize, n: usize, mark: f64, q: f64) -> bool {
        if open {
            (1.0 - mark) * q < self.down::<f64>(k, n)
        } else {
            mark * q < self.up::<f64>(k, n)
        }
    }

    fn pattern_bits(&self) -> Result<usize> {
        if self.line_degree > MAX_PATTERN_BITS {
            return Err(Error::Unsupported(format!(
                "local pattern count 2^{} exceeds 2^{MAX_PATTERN_BITS}",
                self.line_degree
            )));
        }
        Ok(self.line_degree)
    }

    /// Exhaustive check over every local pattern and every single-edge
    /// extension, including the clipped patterns of boundary edges.
    pub fn check_attractive(&self) -> Result<()> {
        if !self.needs_pattern() {
            return Ok(());
        }
        let bits = self.pattern_bits()?;
        for n in 0..=bits {
            for f in 0u32..(1 << n) {
                let k = f.count_ones() as usize;
                for a in 0..n {
                    if f & (1 << a) != 0 {
                        continue;
                    }
                    let g = f | (1 << a);
                    let (u1, u2) = (self.up::<f64>(k, n), self.up::<f64>(k + 1, n));
                    let (d1, d2) = (self.down::<f64>(k, n), self.down::<f64>(k + 1, n));
                    if u1 > u2 || d1 < d2 {
                        return Err(Error::NotAttractive(format!(
                            "patterns {f:#0w$b} and {g:#0w$b} of {n} neighbours: up {u1} -> {u2}, down {d1} -> {d2}",
                            w = n + 2
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Minimum and maximum up and down rates over interior patterns.
    pub fn min_max_rates<S: Real>(&self) -> RateBounds<S> {
        let n = self.line_degree;
        let mut b = RateBounds {
            alpha_min: S::infinity(),
            alpha_max: S::neg_infinity(),
            beta_min: S::infinity(),
            beta_max: S::neg_infinity(),
        };
        for k in 0..=n {
            let (u, d) = (self.up::<S>(k, n), self.down::<S>(k, n));
            b.alpha_min = b.alpha_min.min(u);
            b.alpha_max = b.alpha_max.max(u);
            b.beta_min = b.beta_min.min(d);
            b.beta_max = b.beta_max.max(d);
        }
        b
    }

    /// `M`, `epsilon` and `epsilon - M` by enumeration of interior patterns.
    pub fn ergodicity_margin<S: Real>(&self) -> Result<ErgodicityMargin<S>> {
        let n = self.pattern_bits()?;
        let rate = |open: bool, k: usize| {
            if open {
                self.down::<S>(k, n)
            } else {
                self.up::<S>(k, n)
            }
        };
        let mut m = S::zero();
        for a in 0..n {
            let mut sup = S::zero();
            for f in 0u32..(1 << n) {
                let k = f.count_ones() as usize;
                let k_flipped = if f & (1 << a) != 0 { k - 1 } else { k + 1 };
                for open in [false, true] {
                    sup = sup.max((rate(open, k) - rate(open, k_flipped)).abs());
                }
            }
            m = m + sup;
        }
        let mut epsilon = S::infinity();
        for f in 0u32..(1 << n) {
            let k = f.count_ones() as usize;
            epsilon = epsilon.min(rate(false, k) + rate(true, k));
        }
        let kappa_exact = self.dp_params().map(|(a, b)| S::lit(a) + S::lit(b));
        Ok(ErgodicityMargin {
            m,
            epsilon,
            margin: epsilon - m,
            kappa_exact,
        })
    }

    /// Lower and upper comparison percolations: `DP(alpha_min, beta_max)`
    /// and `DP(alpha_max, beta_min)`.
    pub fn comparison_dps(&self) -> (BackgroundSpec, BackgroundSpec) {
        let b = self.min_max_rates::<f64>();
        let dp = |alpha, beta| {
            Self::unchecked(
                BackgroundKind::DynamicalPercolation { alpha, beta },
                self.dim,
            )
        };
        (dp(b.alpha_min, b.beta_max), dp(b.alpha_max, b.beta_min))
    }

    /// Candidate rate sufficient to run this spec and both comparison
    /// percolations on one timeline.
    pub fn sandwich_rate(&self) -> f64 {
        let b = self.min_max_rates::<f64>();
        self.q.max(b.alpha_max + b.beta_max)
    }

    /// Burn-in length `ln(1000) / (alpha_min + beta_min)` after which the
    /// comparison bound on the distance to stationarity is below `1e-3`.
    pub fn burn_in_time(&self) -> Result<f64> {
        let b = self.min_max_rates::<f64>();
        let rate = b.alpha_min + b.beta_min;
        if !(rate > 0.0) {
            return Err(Error::Unsupported(
                "burn-in needs alpha_min + beta_min > 0".into(),
            ));
        }
        Ok(1000f64.ln() / rate)
    }

    pub fn sample_stationary(&self, g: &GraphView, seed: u64) -> Result<EdgeSet> {
        match self.kind {
            BackgroundKind::DynamicalPercolation { alpha, beta } => {
                Ok(sample_stationary_dp(g, alpha, beta, seed))
            }
            other => Err(Error::Unsupported(format!(
                "no closed-form stationary law for {other:?}; use a burn-in start"
            ))),
        }
    }
}

/// `1/4 log((n + 2) / (n - 2))`, infinite for `n <= 2`.
pub fn ising_beta_bound(n: usize) -> f64 {
    if n <= 2 {
        f64::INFINITY
    } else {
        0.25 * ((n as f64 + 2.0) / (n as f64 - 2.0)).ln()
    }
}

/// I.i.d. Bernoulli(`alpha / (alpha + beta)`) edges.
pub fn sample_stationary_dp(g: &GraphView, alpha: f64, beta: f64, seed: u64) -> EdgeSet {
    let p = alpha / (alpha + beta);
    let mut rng = seed::rng(seed);
    (0..g.n_edges() as Edge)
        .filter(|_| seed::unit(&mut rng) < p)
        .collect()
}

/// Mutable edge configuration with the flip rule applied in place.
#[derive(Clone, Debug)]
pub struct EdgeState {
    open: Vec<bool>,
}

impl EdgeState {
    pub fn new(g: &GraphView, b0: &EdgeSet) -> Self {
        Self {
            open: b0.to_mask(g.n_edges()),
        }
    }

    pub fn all(g: &GraphView, open: bool) -> Self {
        Self {
            open: vec![open; g.n_edges()],
        }
    }

    #[inline]
    pub fn is_open(&self, e: Edge) -> bool {
        self.open[e as usize]
    }

    pub fn toggle(&mut self, e: Edge) {
        self.open[e as usize] ^= true;
    }

    pub fn mask(&self) -> &[bool] {
        &self.open
    }

    pub fn to_set(&self) -> EdgeSet {
        EdgeSet::from_mask(&self.open)
    }

    /// Applies one candidate event; returns true if the edge flipped.
    #[inline]
    pub fn apply(
        &mut self,
        spec: &BackgroundSpec,
        g: &GraphView,
        e: Edge,
        mark: f64,
        q: f64,
    ) -> bool {
        let (k, n) = if spec.needs_pattern() {
            let nb = g.line_neighbours(e);
            (
                nb.iter().filter(|&&f| self.open[f as usize]).count(),
                nb.len(),
            )
        } else {
            (0, 0)
        };
        let open = self.open[e as usize];
        if spec.flips(open, k, n, mark, q) {
            self.open[e as usize] = !open;
            true
        } else {
            false
        }
    }
}

/// Rejects a timeline whose candidate rate cannot realise `spec`.
pub(crate) fn check_candidate_rate(spec: &BackgroundSpec, q: f64) -> Result<()> {
    if q + 1e-12 * q.max(1.0) < spec.candidate_rate() {
        return Err(param(
            "q",
            format!(
                "timeline candidate rate {q} is below the background's rate bound {}",
                spec.candidate_rate()
            ),
        ));
    }
    Ok(())
}

/// Background state at time `t`, from candidate events of the view.
pub fn evolve_background(
    spec: &BackgroundSpec,
    g: &GraphView,
    b0: &EdgeSet,
    view: &TimelineView<'_>,
    t: f64,
) -> Result<EdgeSet> {
    g.check_edges(b0)?;
    let q = view.timeline().rates().q;
    check_candidate_rate(spec, q)?;
    if t > view.span() {
        return Err(param(
            "t",
            format!("{t} is beyond the view span {}", view.span()),
        ));
    }
    let mut state = EdgeState::new(g, b0);
    for ev in view.iter().take_while(|e| e.t <= t) {
        if let EventKind::Flip { edge } = ev.kind {
            state.apply(spec, g, edge, ev.mark, q);
        }
    }
    Ok(state.to_set())
}

/// For each edge, the time from which its state no longer depends on the
/// initial configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledRegion {
    since: Vec<f64>,
    horizon: f64,
    exact: bool,
}

impl CoupledRegion {
    /// Coupling time of an edge; infinite if not coupled by the horizon.
    pub fn since(&self, e: Edge) -> f64 {
        self.since[e as usize]
    }

    pub fn times(&self) -> &[f64] {
        &self.since
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// False when the region was computed over a finite horizon for a
    /// background whose coupling can in principle be undone later.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn at(&self, t: f64) -> EdgeSet {
        self.since
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= t)
            .map(|(e, _)| e as Edge)
            .collect()
    }
}

/// Coupling times over the whole view.
///
/// For dynamical percolation an event fixes the edge state independently of
/// the past when `u * Q < alpha` or `(1 - u) * Q < beta`, so the first such
/// event is the exact coupling time. Otherwise the extreme starts `∅` and
/// `E` are evolved jointly and an edge counts as coupled from the last time
/// the two began to agree, provided they agree at the horizon.
pub fn coupled_times(
    spec: &BackgroundSpec,
    g: &GraphView,
    view: &TimelineView<'_>,
) -> Result<CoupledRegion> {
    let q = view.timeline().rates().q;
    check_candidate_rate(spec, q)?;
    let mut since = vec![f64::INFINITY; g.n_edges()];
    let flips = view.iter().filter_map(|ev: ViewEvent| match ev.kind {
        EventKind::Flip { edge } => Some((ev.t, ev.mark, edge)),
        _ => None,
    });
    if let Some((alpha, beta)) = spec.dp_params() {
        for (t, mark, e) in flips {
            let s = &mut since[e as usize];
            if s.is_infinite() && (mark * q < alpha || (1.0 - mark) * q < beta) {
                *s = t;
            }
        }
        return Ok(CoupledRegion {
            since,
            horizon: view.span(),
            exact: true,
        });
    }
    let mut low = EdgeState::all(g, false);
    let mut high = EdgeState::all(g, true);
    for (t, mark, e) in flips {
        low.apply(spec, g, e, mark, q);
        high.apply(spec, g, e, mark, q);
        let agree = low.is_open(e) == high.is_open(e);
        let s = &mut since[e as usize];
        if agree && s.is_infinite() {
            *s = t;
        } else if !agree {
            *s = f64::INFINITY;
        }
    }
    // Agreement on an edge can only change at that edge's own candidates.
    Ok(CoupledRegion {
        since,
        horizon: view.span(),
        exact: matches!(spec.kind, BackgroundKind::Frozen),
    })
}

/// `Ψ'_t` on the view, exact for dynamical percolation.
pub fn coupled_region(
    spec: &BackgroundSpec,
    g: &GraphView,
    view: &TimelineView<'_>,
    t: f64,
) -> Result<EdgeSet> {
    Ok(coupled_times(spec, g, view)?.at(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphical::{build_timeline, Rates};
    use crate::lattice::build_box;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn dp_spec_constants() {
        let s = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
        assert_eq!(s.candidate_rate(), 2.0);
        let b = s.min_max_rates::<f64>();
        assert_eq!(
            (b.alpha_min, b.alpha_max, b.beta_min, b.beta_max),
            (1.0, 1.0, 1.0, 1.0)
        );
        let m = s.ergodicity_margin::<f64>().unwrap();
        assert_eq!(m.m, 0.0);
        assert_eq!(m.margin, 2.0);
        assert_eq!(m.kappa_exact, Some(2.0));
    }

    #[test]
    fn ising_rate_bounds() {
        let beta = 0.5f64.atanh() / 2.0;
        let s = make_spec(BackgroundKind::Ising { beta }, 1).unwrap();
        let b = s.min_max_rates::<f64>();
        assert!(close(b.alpha_min, 0.5) && close(b.alpha_max, 1.5));
        assert!(close(s.candidate_rate(), 2.0));
    }

    #[test]
    fn noisy_voter_bounds_and_margin() {
        let s = make_spec(
            BackgroundKind::NoisyVoter {
                alpha: 1.0,
                beta: 1.0,
            },
            1,
        )
        .unwrap();
        let b = s.min_max_rates::<f64>();
        assert!(close(b.alpha_min, 0.5) && close(b.alpha_max, 2.5));
        let m = s.ergodicity_margin::<f64>().unwrap();
        assert!(close(m.m, 2.0) && close(m.epsilon, 3.0) && close(m.margin, 1.0));
        assert!(m.kappa_exact.is_none());
        assert!(make_spec(
            BackgroundKind::NoisyVoter {
                alpha: 1.0,
                beta: 1.0
            },
            2
        )
        .is_err());
    }

    #[test]
    fn ising_parameter_bound() {
        let bound = ising_beta_bound(6);
        assert!(close(bound, 0.25 * 2f64.ln()));
        assert!(make_spec(BackgroundKind::Ising { beta: bound * 0.99 }, 2).is_ok());
        assert!(make_spec(BackgroundKind::Ising { beta: bound }, 2).is_err());
        assert!(make_spec(BackgroundKind::Ising { beta: 5.0 }, 1).is_ok());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BackgroundSpec::dynamical_percolation(0.0, 1.0, 1).is_err());
        assert!(BackgroundSpec::dynamical_percolation(1.0, f64::NAN, 1).is_err());
    }

    #[test]
    fn stationary_sampler_only_for_dp() {
        let g = build_box(1, 5).unwrap();
        let s = make_spec(BackgroundKind::Ising { beta: 0.3 }, 1).unwrap();
        assert!(matches!(
            s.sample_stationary(&g, 1),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn no_events_leave_state() {
        let g = build_box(1, 5).unwrap();
        let s = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
        let tl = build_timeline(&g, Rates::new(1.0, 1.0, 2.0).unwrap(), 0.001, 3).unwrap();
        let b0: EdgeSet = [1, 3].into_iter().collect();
        let flipped: Vec<Edge> = tl
            .view()
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::Flip { edge } => Some(edge),
                _ => None,
            })
            .collect();
        let b = evolve_background(&s, &g, &b0, &tl.view(), 0.001).unwrap();
        for e in 0..g.n_edges() as Edge {
            if !flipped.contains(&e) {
                assert_eq!(b.contains(e), b0.contains(e));
            }
        }
    }

    #[test]
    fn coupled_region_starts_empty_and_grows() {
        let g = build_box(1, 20).unwrap();
        let s = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
        let tl = build_timeline(&g, Rates::new(0.0, 0.0, 2.0).unwrap(), 3.0, 5).unwrap();
        let cr = coupled_times(&s, &g, &tl.view()).unwrap();
        assert!(cr.at(0.0).is_empty());
        assert!(cr.at(1.0).is_subset(&cr.at(2.0)));
        assert!(cr.is_exact());
    }

    #[test]
    fn timeline_rate_too_small_is_rejected() {
        let g = build_box(1, 2).unwrap();
        let s = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
        let tl = build_timeline(&g, Rates::new(0.0, 0.0, 1.0).unwrap(), 1.0, 5).unwrap();
        assert!(evolve_background(&s, &g, &EdgeSet::new(), &tl.view(), 1.0).is_err());
    }
}
