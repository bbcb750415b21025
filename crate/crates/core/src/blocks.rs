//! Finite space-time block events for the truncated process, the block
//! scale search, good blocks, and independent oriented site percolation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::estimate::Estimate;
use crate::background::{check_candidate_rate, BackgroundSpec};
use crate::engine::{simulate, Dynamics, Gate, Observer, RegionBox, SpaceTimeRegion, State};
use crate::error::{param, Error, Result};
use crate::graphical::{stream_view, Rates, Thinning};
use crate::lattice::{build_box, Edge, GraphView, Site, SiteSet};
use crate::seed::{hashed_unit, replica_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BlockEvent {
    A1,
    A2,
    A3,
}

impl BlockEvent {
    pub fn name(self) -> &'static str {
        match self {
            BlockEvent::A1 => "A1",
            BlockEvent::A2 => "A2",
            BlockEvent::A3 => "A3",
        }
    }
}

/// Process parameters shared by the block estimators. The background
/// always starts empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub dim: usize,
    pub lambda: f64,
    pub r: f64,
    pub spec: BackgroundSpec,
    /// Simulation box; defaults to the smallest one holding the event.
    pub box_half_width: Option<u32>,
}

impl BlockParams {
    fn ceilings(&self, ceilings: Option<Rates>) -> Result<Rates> {
        let c = match ceilings {
            Some(c) => Rates::new(c.lambda_max, c.r_max, c.q)?,
            None => Rates::new(self.lambda, self.r, self.spec.candidate_rate())?,
        };
        if self.lambda > c.lambda_max || self.r > c.r_max {
            return Err(param("ceilings", "block rates exceed the shared ceilings"));
        }
        if self.spec.dim() != self.dim {
            return Err(param(
                "spec",
                "background dimension differs from the block dimension",
            ));
        }
        check_candidate_rate(&self.spec, c.q)?;
        Ok(c)
    }

    fn graph(&self, needed: u32, what: &str) -> Result<GraphView> {
        let hw = self.box_half_width.unwrap_or(needed);
        if hw < needed {
            return Err(Error::Geometry(format!(
                "box half-width {hw} < {what} = {needed}"
            )));
        }
        build_box(self.dim, hw)
    }
}

/// Event and block scales with the derived regions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockGeometry {
    pub n: u32,
    pub l: u32,
    pub t: f64,
    pub a: u32,
    pub b: f64,
}

impl BlockGeometry {
    pub fn new(n: u32, l: u32, t: f64, a: u32, b: f64) -> Result<Self> {
        if n == 0 || l == 0 || a == 0 {
            return Err(Error::Geometry(format!(
                "scales must be positive: n = {n}, L = {l}, a = {a}"
            )));
        }
        if !(t > 0.0 && b > 0.0 && t.is_finite() && b.is_finite()) {
            return Err(Error::Geometry(format!(
                "times must be positive: T = {t}, b = {b}"
            )));
        }
        if n >= a {
            return Err(Error::Geometry(format!("n < a fails: n = {n}, a = {a}")));
        }
        Ok(Self { n, l, t, a, b })
    }

    /// `D_{j,k}`, with time window `[5kb, (5k+1)b)`.
    pub fn d_region(&self, dim: usize, j: i32, k: i32) -> RegionBox {
        let a = self.a as i32;
        let mut lo = vec![-a; dim];
        let mut hi = vec![a; dim];
        lo[0] = -(1 - 2 * j) * a;
        hi[0] = (1 + 2 * j) * a;
        RegionBox {
            lo,
            hi,
            t0: 5.0 * k as f64 * self.b,
            t1: (5 * k + 1) as f64 * self.b,
        }
    }

    /// `S_{j,k} = D_{6j,6k}`, spatially `[a(12j-1), a(12j+1)] x [-a, a]^{d-1}`.
    pub fn s_region(&self, dim: usize, j: i32, k: i32) -> RegionBox {
        let a = self.a as i32;
        let mut lo = vec![-a; dim];
        let mut hi = vec![a; dim];
        lo[0] = a * (12 * j - 1);
        hi[0] = a * (12 * j + 1);
        RegionBox {
            lo,
            hi,
            t0: 30.0 * k as f64 * self.b,
            t1: (30 * k + 1) as f64 * self.b,
        }
    }

    /// `M^±(j,k)`: seven boxes `([-5a, 5a] ± 2la) x [-5a, 5a]^{d-1}` shifted by
    /// `w(j,k)`, box `l` covering the times `[5lb, 5lb + 6b)` of step `l`.
    pub fn m_region(&self, dim: usize, plus: bool, j: i32, k: i32) -> SpaceTimeRegion {
        let a = self.a as i32;
        let sign = if plus { 1 } else { -1 };
        let t0 = 30.0 * k as f64 * self.b;
        let boxes = (0..=6)
            .map(|l| {
                let mut lo = vec![-5 * a; dim];
                let mut hi = vec![5 * a; dim];
                let shift = 12 * j * a + sign * 2 * l * a;
                lo[0] += shift;
                hi[0] += shift;
                RegionBox {
                    lo,
                    hi,
                    t0: t0 + 5.0 * l as f64 * self.b,
                    t1: t0 + (5 * l + 6) as f64 * self.b,
                }
            })
            .collect();
        SpaceTimeRegion::new(boxes)
    }
}

/// Watches `center + [-n, n]^d` for a set of centres and reports whether
/// some cube is fully infected at a time in `[from, to)`.
struct CubeWatch {
    cover: Vec<Vec<u32>>,
    counts: Vec<u32>,
    full_size: u32,
    full: usize,
    from: f64,
    to: f64,
    checked_start: bool,
    hit: bool,
}

impl CubeWatch {
    fn new(g: &GraphView, centers: &[Vec<i32>], n: u32, c0: &SiteSet, from: f64, to: f64) -> Self {
        let mut cover = vec![Vec::new(); g.n_sites()];
        let mut kept = 0u32;
        let mut full_size = 0;
        for c in centers {
            let (sites, complete) = g.cube(c, n);
            if !complete {
                continue;
            }
            full_size = sites.len() as u32;
            for s in sites.iter() {
                cover[s as usize].push(kept);
            }
            kept += 1;
        }
        let mut counts = vec![0u32; kept as usize];
        for x in c0.iter() {
            for &c in &cover[x as usize] {
                counts[c as usize] += 1;
            }
        }
        let full = counts
            .iter()
            .filter(|&&k| k == full_size && full_size > 0)
            .count();
        Self {
            cover,
            counts,
            full_size,
            full,
            from,
            to,
            checked_start: false,
            hit: false,
        }
    }

    fn before(&mut self, t: f64) {
        if !self.checked_start && t >= self.from {
            self.checked_start = true;
            self.hit |= self.full > 0 && self.from < self.to;
        }
    }

    fn finish(&mut self, horizon: f64) {
        if !self.checked_start && horizon >= self.from {
            self.checked_start = true;
            self.hit |= self.full > 0;
        }
    }
}

impl Observer for CubeWatch {
    fn infected(&mut self, t: f64, x: Site) {
        self.before(t);
        for &c in &self.cover[x as usize] {
            let k = &mut self.counts[c as usize];
            *k += 1;
            if *k == self.full_size {
                self.full += 1;
            }
        }
    }

    fn recovered(&mut self, t: f64, x: Site) {
        self.before(t);
        for &c in &self.cover[x as usize] {
            let k = &mut self.counts[c as usize];
            if *k == self.full_size {
                self.full -= 1;
            }
            *k -= 1;
        }
    }

    fn edge(&mut self, t: f64, _e: Edge, _open: bool) {
        self.before(t);
    }

    fn after_change(&mut self, t: f64, _state: &State) -> bool {
        if t >= self.from && t < self.to && self.full > 0 {
            self.hit = true;
        }
        self.hit
    }
}

/// All integer points of the product of inclusive ranges.
fn lattice_points(ranges: &[(i32, i32)]) -> Vec<Vec<i32>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in ranges {
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

struct BlockRun<'a> {
    g: &'a GraphView,
    truncation: u32,
    horizon: f64,
    centers: Vec<Vec<i32>>,
    from: f64,
    to: f64,
    c0: SiteSet,
    region: Option<SpaceTimeRegion>,
}

fn run_blocks(
    p: &BlockParams,
    run: &BlockRun<'_>,
    n: u32,
    reps: usize,
    seed: u64,
    ceilings: Rates,
) -> Result<Estimate> {
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    let g = run.g;
    let thinning = Thinning::new(ceilings, p.lambda, p.r)?;
    let hits: Vec<bool> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut w = CubeWatch::new(g, &run.centers, n, &run.c0, run.from, run.to);
            let mut dynamics = Dynamics::new(
                Gate::Evolve(&p.spec, ceilings.q),
                run.truncation,
                run.horizon,
            );
            dynamics.stop_when_extinct = true;
            dynamics.region = run.region.as_ref();
            let events = stream_view(g, ceilings, thinning, run.horizon, replica_seed(seed, i));
            let (out, _) = simulate(g, &dynamics, &run.c0, &Default::default(), events, &mut w);
            if out.extinction.is_none() {
                w.finish(run.horizon);
            }
            w.hit
        })
        .collect();
    let k = hits.iter().filter(|&&h| h).count() as u64;
    Estimate::from_counts(k, reps as u64, 0, 0, seed)
}

/// Frequency of `A1`, `A2` or `A3` for the truncated process started from
/// `([-n, n]^d, ∅)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_block_event(
    which: BlockEvent,
    n: u32,
    l: u32,
    t: f64,
    p: &BlockParams,
    reps: usize,
    seed: u64,
    ceilings: Option<Rates>,
) -> Result<Estimate> {
    if n == 0 || l == 0 {
        return Err(Error::Geometry(format!(
            "n >= 1 and L >= 1 required, got n = {n}, L = {l}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Geometry(format!("T > 0 required, got {t}")));
    }
    let ceilings = p.ceilings(ceilings)?;
    let (li, ni) = (l as i32, n as i32);
    let d = p.dim;
    let (truncation, horizon, from, to, ranges, what) = match which {
        BlockEvent::A1 => (
            l + n,
            t + 1.0,
            t + 1.0,
            f64::INFINITY,
            vec![(0, li - 1); d],
            "L + n",
        ),
        BlockEvent::A2 => {
            let mut r = vec![(0, li - 1); d];
            r[0] = (li + ni, li + ni);
            (l + 2 * n, t + 1.0, 1.0, t + 1.0, r, "L + 2n")
        }
        BlockEvent::A3 => {
            let mut r = vec![(0, 2 * li - 1); d];
            r[0] = (li + ni, 2 * li + ni);
            (2 * l + 2 * n, 2.0 * t, t, 2.0 * t, r, "2L + 2n")
        }
    };
    let g = p.graph(truncation, what)?;
    let (c0, _) = g.cube(&vec![0; d], n);
    let run = BlockRun {
        g: &g,
        truncation,
        horizon,
        centers: lattice_points(&ranges),
        from,
        to,
        c0,
        region: None,
    };
    run_blocks(p, &run, n, reps, seed, ceilings)
}

/// Good block `B^+` (or `B^-`) for `(j, k) = (0, 0)` from `(x, s) = (0, 0)`:
/// a fully infected `y + [-n, n]^d` in `S_{±1,1}` reached by paths confined to
/// `M^±(0, 0)`.
pub fn estimate_good_block(
    geom: &BlockGeometry,
    plus: bool,
    p: &BlockParams,
    reps: usize,
    seed: u64,
    ceilings: Option<Rates>,
) -> Result<Estimate> {
    let ceilings = p.ceilings(ceilings)?;
    let d = p.dim;
    let reach = 17 * geom.a;
    let g = p.graph(reach, "17a")?;
    let target = geom.s_region(d, if plus { 1 } else { -1 }, 1);
    let ranges: Vec<(i32, i32)> = target
        .lo
        .iter()
        .zip(&target.hi)
        .map(|(&a, &b)| (a, b))
        .collect();
    let (c0, _) = g.cube(&vec![0; d], geom.n);
    let run = BlockRun {
        g: &g,
        truncation: g.half_width(),
        horizon: target.t1,
        centers: lattice_points(&ranges),
        from: target.t0,
        to: target.t1,
        c0,
        region: Some(geom.m_region(d, plus, 0, 0)),
    };
    run_blocks(p, &run, geom.n, reps, seed, ceilings)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleLimits {
    pub max_n: u32,
    pub max_l: u32,
    pub max_t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockScale {
    pub n: u32,
    pub l: u32,
    pub t: f64,
    pub a1: Estimate,
    pub a2: Estimate,
    /// Both lower Wilson bounds exceed `1 - epsilon`. Otherwise this is the
    /// best triple found.
    pub success: bool,
    pub tried: usize,
}

fn doubling(max: f64) -> Vec<f64> {
    let mut v = vec![1.0];
    while v[v.len() - 1] * 2.0 <= max {
        v.push(v[v.len() - 1] * 2.0);
    }
    v
}

/// Doubling grid in `(n, L, T)`, visited in order of total scale so small
/// triples are tried first.
pub fn find_block_scale(
    p: &BlockParams,
    epsilon: f64,
    limits: &ScaleLimits,
    reps: usize,
    seed: u64,
) -> Result<BlockScale> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(param("epsilon", "must lie in (0, 1)"));
    }
    if limits.max_n == 0 || limits.max_l == 0 || !(limits.max_t >= 1.0) {
        return Err(param("limits", "need max_n, max_l >= 1 and max_t >= 1"));
    }
    let ns = doubling(limits.max_n as f64);
    let ls = doubling(limits.max_l as f64);
    let ts = doubling(limits.max_t);
    let (nl, nt) = (ls.len(), ts.len());
    let mut grid: Vec<(usize, usize, usize)> = (0..ns.len())
        .flat_map(|i| (0..nl).flat_map(move |j| (0..nt).map(move |k| (i, j, k))))
        .collect();
    grid.sort_by_key(|&(i, j, k)| (i + j + k, i, j, k));
    let mut best: Option<BlockScale> = None;
    for (tried, (i, j, k)) in grid.into_iter().enumerate() {
        let (n, l, t) = (ns[i] as u32, ls[j] as u32, ts[k]);
        let a1 = estimate_block_event(BlockEvent::A1, n, l, t, p, reps, seed, None)?;
        let a2 = estimate_block_event(BlockEvent::A2, n, l, t, p, reps, seed, None)?;
        let success = a1.lower > 1.0 - epsilon && a2.lower > 1.0 - epsilon;
        let score = a1.p_hat.min(a2.p_hat);
        let cand = BlockScale {
            n,
            l,
            t,
            a1,
            a2,
            success,
            tried: tried + 1,
        };
        if success {
            return Ok(cand);
        }
        if best
            .as_ref()
            .is_none_or(|b| score > b.a1.p_hat.min(b.a2.p_hat))
        {
            best = Some(cand);
        }
        if let Some(b) = best.as_mut() {
            b.tried = tried + 1;
        }
    }
    Ok(best.expect("grid is never empty"))
}

/// One level of oriented site percolation on `{(j, k) : j + k even}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PercolationState {
    pub level: u32,
    pub open: Vec<i64>,
}

/// Levels `0..=k_max` (fewer if the cluster dies). Site `(j, k)` is open
/// iff `hashed_unit(seed, j, k) < q`, so runs at different `q` share
/// uniforms and are nested.
pub fn oriented_percolation_run(
    q: f64,
    w0: &[i64],
    k_max: u32,
    seed: u64,
) -> Result<Vec<PercolationState>> {
    if !(0.0..=1.0).contains(&q) {
        return Err(param("q", format!("must lie in [0, 1], got {q}")));
    }
    if let Some(j) = w0.iter().find(|j| j.rem_euclid(2) != 0) {
        return Err(param("W0", format!("site {j} is off the even sublattice")));
    }
    let mut cur: Vec<i64> = w0.to_vec();
    cur.sort_unstable();
    cur.dedup();
    let mut path = vec![PercolationState {
        level: 0,
        open: cur.clone(),
    }];
    for k in 1..=k_max {
        if cur.is_empty() {
            break;
        }
        let mut next: Vec<i64> = cur.iter().flat_map(|&j| [j - 1, j + 1]).collect();
        next.sort_unstable();
        next.dedup();
        next.retain(|&j| hashed_unit(seed, j, k as i64) < q);
        path.push(PercolationState {
            level: k,
            open: next.clone(),
        });
        cur = next;
    }
    Ok(path)
}

/// `P(W_{k_max} != ∅)` from `W_0 = {0}`.
pub fn percolation_survival(q: f64, reps: usize, k_max: u32, seed: u64) -> Result<Estimate> {
    if reps == 0 {
        return Err(param("reps", "at least one replica is required"));
    }
    let alive: Vec<bool> = (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let path = oriented_percolation_run(q, &[0], k_max, replica_seed(seed, i))?;
            Ok(path.len() == k_max as usize + 1 && !path[path.len() - 1].open.is_empty())
        })
        .collect::<Result<_>>()?;
    let k = alive.iter().filter(|&&a| a).count() as u64;
    Estimate::from_counts(k, reps as u64, k, 0, seed)
}
