//! The realised Poisson point set: infection arrows, recovery marks and
//! background flip candidates on a time window, each with a uniform mark.
//!
//! All three streams are generated as one superposed Poisson process of
//! total rate `lambda_max * 2|E| + r_max * |V| + q * |E|`; each point is
//! assigned to a stream and a site, directed pair or edge in proportion to
//! the rates. Marks drive thinning (arrows kept iff `mark * lambda_max <
//! lambda'`, recoveries likewise) and background flip decisions.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_rate, param, Error, Result};
use crate::lattice::{Budget, Edge, GraphView, Site};
use crate::seed::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventKind {
    Arrow { from: Site, to: Site, edge: Edge },
    Recovery { site: Site },
    Flip { edge: Edge },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub mark: f64,
    pub kind: EventKind,
}

/// Generation rates of a timeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Arrow rate per directed neighbour pair.
    pub lambda_max: f64,
    /// Recovery rate per site.
    pub r_max: f64,
    /// Background candidate rate per edge.
    pub q: f64,
}

impl Rates {
    pub fn new(lambda_max: f64, r_max: f64, q: f64) -> Result<Self> {
        check_rate("lambda_max", lambda_max)?;
        check_rate("r_max", r_max)?;
        check_rate("q", q)?;
        Ok(Self {
            lambda_max,
            r_max,
            q,
        })
    }

    fn totals(&self, g: &GraphView) -> [f64; 3] {
        [
            self.lambda_max * 2.0 * g.n_edges() as f64,
            self.r_max * g.n_sites() as f64,
            self.q * g.n_edges() as f64,
        ]
    }

    pub fn expected_events(&self, g: &GraphView, horizon: f64) -> f64 {
        self.totals(g).iter().sum::<f64>() * horizon
    }
}

/// Lazy generator of timeline events in time order. Yields exactly the
/// events [`Timeline::build`] would store for the same inputs.
#[derive(Clone)]
pub struct EventStream<'g> {
    graph: &'g GraphView,
    rng: Rng,
    horizon: f64,
    t: f64,
    total: f64,
    cut_arrow: f64,
    cut_recovery: f64,
}

impl<'g> EventStream<'g> {
    pub fn new(graph: &'g GraphView, rates: Rates, horizon: f64, seed: u64) -> Self {
        let [a, r, q] = rates.totals(graph);
        Self {
            graph,
            rng: seed::rng(seed),
            horizon,
            t: 0.0,
            total: a + r + q,
            cut_arrow: a,
            cut_recovery: a + r,
        }
    }
}

impl Iterator for EventStream<'_> {
    type Item = Event;

    fn next(&mut self) -> Option<Event> {
        if !(self.total > 0.0) || self.t > self.horizon {
            return None;
        }
        let mut t = self.t + seed::exponential(&mut self.rng, self.total);
        if t <= self.t {
            t = self.t.next_up();
        }
        if t > self.horizon {
            self.t = f64::INFINITY;
            return None;
        }
        self.t = t;
        let pick = seed::unit(&mut self.rng) * self.total;
        let g = self.graph;
        let kind = if pick < self.cut_arrow {
            let j = seed::below(&mut self.rng, 2 * g.n_edges() as u64);
            let edge = (j >> 1) as Edge;
            let [a, b] = g.endpoints(edge);
            if j & 1 == 0 {
                EventKind::Arrow {
                    from: a,
                    to: b,
                    edge,
                }
            } else {
                EventKind::Arrow {
                    from: b,
                    to: a,
                    edge,
                }
            }
        } else if pick < self.cut_recovery {
            EventKind::Recovery {
                site: seed::below(&mut self.rng, g.n_sites() as u64) as Site,
            }
        } else {
            EventKind::Flip {
                edge: seed::below(&mut self.rng, g.n_edges() as u64) as Edge,
            }
        };
        let mark = seed::unit(&mut self.rng);
        Some(Event { t, mark, kind })
    }
}

/// Materialised event list on `[0, horizon]`, sorted by time.
#[derive(Clone, Debug, PartialEq)]
pub struct Timeline {
    n_sites: usize,
    n_edges: usize,
    rates: Rates,
    horizon: f64,
    seed: u64,
    events: Vec<Event>,
}

/// Eagerly builds a timeline under the default budget.
pub fn build_timeline(g: &GraphView, rates: Rates, horizon: f64, seed: u64) -> Result<Timeline> {
    Timeline::build(g, rates, horizon, seed, &Budget::default())
}

impl Timeline {
    pub fn build(
        g: &GraphView,
        rates: Rates,
        horizon: f64,
        seed: u64,
        budget: &Budget,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        let rates = Rates::new(rates.lambda_max, rates.r_max, rates.q)?;
        let expected = rates.expected_events(g, horizon);
        if expected > budget.max_events as f64 {
            return Err(Error::Budget {
                what: "expected timeline events (2*lambda_max*|E| + r*|V| + q*|E|)*T".into(),
                value: expected.ceil() as u128,
                limit: budget.max_events,
            });
        }
        let mut events = Vec::with_capacity((expected * 1.05) as usize + 16);
        events.extend(EventStream::new(g, rates, horizon, seed));
        Ok(Self {
            n_sites: g.n_sites(),
            n_edges: g.n_edges(),
            rates,
            horizon,
            seed,
            events,
        })
    }

    pub fn rates(&self) -> Rates {
        self.rates
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn fits(&self, g: &GraphView) -> bool {
        self.n_sites == g.n_sites() && self.n_edges == g.n_edges()
    }

    /// Full-rate forward view.
    pub fn view(&self) -> TimelineView<'_> {
        TimelineView {
            tl: self,
            arrow_rate: self.rates.lambda_max,
            recovery_rate: self.rates.r_max,
            sign: 1.0,
            offset: 0.0,
            span: self.horizon,
        }
    }

    /// One JSON object per line: `t`, `kind`, the site or edge fields, `mark`.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for ev in &self.events {
            let line = EventLine {
                t: ev.t,
                kind: ev.kind,
                mark: ev.mark,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads events written by [`write_ndjson`](Self::write_ndjson) back.
    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<Event>> {
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Numerical(format!("read line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: EventLine = serde_json::from_str(&line)
                .map_err(|e| param("ndjson", format!("line {}: {e}", i + 1)))?;
            events.push(Event {
                t: parsed.t,
                mark: parsed.mark,
                kind: parsed.kind,
            });
        }
        Ok(events)
    }
}

#[derive(Serialize, Deserialize)]
struct EventLine {
    t: f64,
    #[serde(flatten)]
    kind: EventKind,
    mark: f64,
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(param(
            "horizon",
            format!("must be finite and positive, got {horizon}"),
        ))
    }
}

/// Which arrows and recoveries a view keeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thinning {
    pub arrow_rate: f64,
    pub lambda_max: f64,
    pub recovery_rate: f64,
    pub r_max: f64,
}

impl Thinning {
    pub fn full(rates: Rates) -> Self {
        Self {
            arrow_rate: rates.lambda_max,
            lambda_max: rates.lambda_max,
            recovery_rate: rates.r_max,
            r_max: rates.r_max,
        }
    }

    pub fn new(rates: Rates, arrow_rate: f64, recovery_rate: f64) -> Result<Self> {
        check_thin("arrow rate", arrow_rate, rates.lambda_max)?;
        check_thin("recovery rate", recovery_rate, rates.r_max)?;
        Ok(Self {
            arrow_rate,
            lambda_max: rates.lambda_max,
            recovery_rate,
            r_max: rates.r_max,
        })
    }

    #[inline]
    pub fn keeps(&self, ev: &Event) -> bool {
        match ev.kind {
            EventKind::Arrow { .. } => {
                self.arrow_rate >= self.lambda_max || ev.mark * self.lambda_max < self.arrow_rate
            }
            EventKind::Recovery { .. } => {
                self.recovery_rate >= self.r_max || ev.mark * self.r_max < self.recovery_rate
            }
            EventKind::Flip { .. } => true,
        }
    }
}

fn check_thin(name: &str, value: f64, max: f64) -> Result<()> {
    check_rate(name, value)?;
    if value > max {
        return Err(param(
            name,
            format!("{value} exceeds the timeline ceiling {max}; views can only thin"),
        ));
    }
    Ok(())
}

/// Event as seen through a view: time is in view coordinates, arrows are
/// reversed in reversed views (flagged by `reversed`), `seq` is the index in
/// the backing timeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewEvent {
    pub t: f64,
    pub mark: f64,
    pub kind: EventKind,
    pub seq: usize,
    pub reversed: bool,
}

impl ViewEvent {
    /// Source of the arrow in the forward timeline.
    #[inline]
    pub fn original_source(&self) -> Option<Site> {
        match self.kind {
            EventKind::Arrow { from, to, .. } => Some(if self.reversed { to } else { from }),
            _ => None,
        }
    }
}

/// Read-only thinned and possibly time-reversed window on a timeline.
///
/// View time `s` relates to timeline time `u` by `s = sign * u + offset`;
/// the view covers `s` in `[0, span]`.
#[derive(Clone, Copy, Debug)]
pub struct TimelineView<'a> {
    tl: &'a Timeline,
    arrow_rate: f64,
    recovery_rate: f64,
    sign: f64,
    offset: f64,
    span: f64,
}

pub fn thin_view(tl: &Timeline, lambda: f64) -> Result<TimelineView<'_>> {
    tl.view().thin(lambda)
}

pub fn reverse_view(tl: &Timeline, anchor: f64) -> Result<TimelineView<'_>> {
    tl.view().reverse(anchor)
}

impl<'a> TimelineView<'a> {
    pub fn timeline(&self) -> &'a Timeline {
        self.tl
    }

    pub fn arrow_rate(&self) -> f64 {
        self.arrow_rate
    }

    pub fn recovery_rate(&self) -> f64 {
        self.recovery_rate
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn is_reversed(&self) -> bool {
        self.sign < 0.0
    }

    pub fn thinning(&self) -> Thinning {
        Thinning {
            arrow_rate: self.arrow_rate,
            lambda_max: self.tl.rates.lambda_max,
            recovery_rate: self.recovery_rate,
            r_max: self.tl.rates.r_max,
        }
    }

    pub fn thin(mut self, lambda: f64) -> Result<Self> {
        check_thin("lambda'", lambda, self.tl.rates.lambda_max)?;
        self.arrow_rate = lambda;
        Ok(self)
    }

    pub fn thin_recoveries(mut self, r: f64) -> Result<Self> {
        check_thin("r'", r, self.tl.rates.r_max)?;
        self.recovery_rate = r;
        Ok(self)
    }

    /// Reverses on `[0, anchor]`: view time `s` becomes `anchor - s`.
    pub fn reverse(self, anchor: f64) -> Result<Self> {
        if !(anchor > 0.0) || anchor > self.span {
            return Err(param(
                "t*",
                format!(
                    "reversal anchor must lie in (0, {}], got {anchor}",
                    self.span
                ),
            ));
        }
        Ok(Self {
            sign: -self.sign,
            offset: anchor - self.offset,
            span: anchor,
            ..self
        })
    }

    /// Index range of backing events inside the window.
    fn range(&self) -> (usize, usize) {
        let ev = &self.tl.events;
        // s in [0, span]  <=>  u in [lo, hi]
        let (lo, hi) = if self.sign > 0.0 {
            (-self.offset, self.span - self.offset)
        } else {
            (self.offset - self.span, self.offset)
        };
        let a = ev.partition_point(|e| e.t < lo);
        let b = ev.partition_point(|e| e.t <= hi);
        (a, b.max(a))
    }

    pub fn iter(&self) -> ViewIter<'a> {
        let (start, end) = self.range();
        ViewIter {
            events: &self.tl.events,
            start,
            end,
            forward: self.sign > 0.0,
            offset: self.offset,
            thinning: self.thinning(),
        }
    }
}

/// Iterator over the events of a view, in view-time order.
#[derive(Clone)]
pub struct ViewIter<'a> {
    events: &'a [Event],
    start: usize,
    end: usize,
    forward: bool,
    offset: f64,
    thinning: Thinning,
}

impl Iterator for ViewIter<'_> {
    type Item = ViewEvent;

    fn next(&mut self) -> Option<ViewEvent> {
        while self.start < self.end {
            let seq = if self.forward {
                self.start += 1;
                self.start - 1
            } else {
                self.end -= 1;
                self.end
            };
            let ev = &self.events[seq];
            if !self.thinning.keeps(ev) {
                continue;
            }
            let (t, kind) = if self.forward {
                (ev.t + self.offset, ev.kind)
            } else {
                let kind = match ev.kind {
                    EventKind::Arrow { from, to, edge } => EventKind::Arrow {
                        from: to,
                        to: from,
                        edge,
                    },
                    k => k,
                };
                (self.offset - ev.t, kind)
            };
            return Some(ViewEvent {
                t,
                mark: ev.mark,
                kind,
                seq,
                reversed: !self.forward,
            });
        }
        None
    }
}

/// Thinned lazy stream: the eager-free counterpart of a forward view.
pub fn stream_view<'g>(
    g: &'g GraphView,
    rates: Rates,
    thinning: Thinning,
    horizon: f64,
    seed: u64,
) -> impl Iterator<Item = ViewEvent> + 'g {
    EventStream::new(g, rates, horizon, seed)
        .enumerate()
        .filter(move |(_, e)| thinning.keeps(e))
        .map(|(seq, e)| ViewEvent {
            t: e.t,
            mark: e.mark,
            kind: e.kind,
            seq,
            reversed: false,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_box;

    fn tl(g: &GraphView, l: f64, r: f64, q: f64, t: f64, seed: u64) -> Timeline {
        build_timeline(g, Rates::new(l, r, q).unwrap(), t, seed).unwrap()
    }

    #[test]
    fn zero_rates_empty() {
        let g = build_box(1, 3).unwrap();
        assert!(tl(&g, 0.0, 0.0, 0.0, 10.0, 1).is_empty());
    }

    #[test]
    fn reproducible() {
        let g = build_box(1, 1).unwrap();
        assert_eq!(
            tl(&g, 1.0, 1.0, 2.0, 10.0, 9),
            tl(&g, 1.0, 1.0, 2.0, 10.0, 9)
        );
    }

    #[test]
    fn times_strictly_increase() {
        let g = build_box(2, 3).unwrap();
        let t = tl(&g, 2.0, 1.0, 2.0, 5.0, 4);
        assert!(t.events().windows(2).all(|w| w[0].t < w[1].t));
        assert!(t.events().iter().all(|e| e.t > 0.0 && e.t <= 5.0));
    }

    #[test]
    fn recovery_count_matches_poisson_mean() {
        let g = build_box(1, 50).unwrap();
        let t = tl(&g, 2.0, 1.0, 0.0, 100.0, 11);
        let rec = t
            .events()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Recovery { .. }))
            .count() as f64;
        let per_site = rec / g.n_sites() as f64;
        // Mean over 101 sites of Poisson(100); sd of the mean is about 1.
        assert!((per_site - 100.0).abs() < 4.0, "{per_site}");
    }

    #[test]
    fn budget_rejects_large_timeline() {
        let g = build_box(1, 10).unwrap();
        let budget = Budget {
            max_sites: u128::MAX,
            max_events: 100,
        };
        let err = Timeline::build(&g, Rates::new(5.0, 1.0, 1.0).unwrap(), 100.0, 0, &budget);
        assert!(matches!(err, Err(Error::Budget { .. })));
    }

    #[test]
    fn thinning_extremes_and_rejection() {
        let g = build_box(1, 10).unwrap();
        let t = tl(&g, 2.0, 1.0, 0.0, 10.0, 2);
        let arrows = |v: TimelineView| {
            v.iter()
                .filter(|e| matches!(e.kind, EventKind::Arrow { .. }))
                .count()
        };
        let total = arrows(t.view());
        assert!(total > 0);
        assert_eq!(arrows(thin_view(&t, 2.0).unwrap()), total);
        assert_eq!(arrows(thin_view(&t, 0.0).unwrap()), 0);
        assert!(thin_view(&t, 2.5).is_err());
        let half = arrows(thin_view(&t, 1.0).unwrap()) as f64;
        let n = total as f64;
        assert!((half / n - 0.5).abs() < 3.0 * (0.25 / n).sqrt());
    }

    #[test]
    fn single_arrow_reversal() {
        let g = build_box(1, 1).unwrap();
        let [a, b] = g.endpoints(0);
        let t = Timeline {
            n_sites: g.n_sites(),
            n_edges: g.n_edges(),
            rates: Rates::new(1.0, 0.0, 0.0).unwrap(),
            horizon: 5.0,
            seed: 0,
            events: vec![Event {
                t: 1.0,
                mark: 0.3,
                kind: EventKind::Arrow {
                    from: a,
                    to: b,
                    edge: 0,
                },
            }],
        };
        let ev: Vec<_> = reverse_view(&t, 3.0).unwrap().iter().collect();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].t, 2.0);
        assert_eq!(
            ev[0].kind,
            EventKind::Arrow {
                from: b,
                to: a,
                edge: 0
            }
        );
        assert!(reverse_view(&t, 6.0).is_err());
    }

    #[test]
    fn double_reversal_is_identity() {
        let g = build_box(2, 2).unwrap();
        let t = tl(&g, 1.0, 1.0, 1.0, 4.0, 5);
        let fwd: Vec<_> = t.view().reverse(4.0).unwrap().iter().collect();
        assert_eq!(fwd.len(), t.len());
        let twice: Vec<_> = t
            .view()
            .reverse(2.5)
            .unwrap()
            .reverse(2.5)
            .unwrap()
            .iter()
            .collect();
        let orig: Vec<_> = t.view().iter().filter(|e| e.t <= 2.5).collect();
        assert_eq!(twice, orig);
    }

    #[test]
    fn stream_matches_timeline() {
        let g = build_box(2, 3).unwrap();
        let rates = Rates::new(1.5, 1.0, 2.0).unwrap();
        let t = build_timeline(&g, rates, 3.0, 77).unwrap();
        let th = Thinning::new(rates, 0.7, 0.4).unwrap();
        let a: Vec<_> = t
            .view()
            .thin(0.7)
            .unwrap()
            .thin_recoveries(0.4)
            .unwrap()
            .iter()
            .collect();
        let b: Vec<_> = stream_view(&g, rates, th, 3.0, 77).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn ndjson_round_trip() {
        let g = build_box(1, 2).unwrap();
        let t = tl(&g, 1.0, 1.0, 1.0, 3.0, 8);
        let mut buf = Vec::new();
        t.write_ndjson(&mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.lines().next().unwrap().starts_with("{\"t\":"));
        let back = Timeline::read_ndjson(&buf[..]).unwrap();
        assert_eq!(back, t.events());
    }
}
