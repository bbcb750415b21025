//! Finite boxes `[-L, L]^d` of the integer lattice with nearest-neighbour
//! edges, the line graph on those edges, and metric queries.
//!
//! Sites are indexed row-major over the box (first coordinate slowest).
//! Edges are enumerated by scanning sites in index order and, for each axis
//! in increasing order, emitting the edge to the `+1` neighbour. That fixed
//! order is the tie-break used everywhere downstream.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

pub type Site = u32;
pub type Edge = u32;

/// Memory guards for box construction and timeline generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Upper bound on `d * (2L+1)^d`.
    pub max_sites: u128,
    /// Upper bound on the expected number of events in one timeline.
    pub max_events: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_sites: 50_000_000,
            max_events: 200_000_000,
        }
    }
}

macro_rules! id_set {
    ($name:ident, $id:ty, $what:literal) => {
        #[doc = concat!("Sorted, duplicate-free set of ", $what, " indices.")]
        #[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
        pub struct $name(Vec<$id>);

        impl $name {
            pub fn new() -> Self {
                Self(Vec::new())
            }

            pub fn from_sorted_unchecked(ids: Vec<$id>) -> Self {
                debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
                Self(ids)
            }

            /// Collects indices whose flag is set.
            pub fn from_mask(mask: &[bool]) -> Self {
                Self(
                    mask.iter()
                        .enumerate()
                        .filter(|(_, &b)| b)
                        .map(|(i, _)| i as $id)
                        .collect(),
                )
            }

            pub fn to_mask(&self, len: usize) -> Vec<bool> {
                let mut mask = vec![false; len];
                for &i in &self.0 {
                    mask[i as usize] = true;
                }
                mask
            }

            pub fn contains(&self, id: $id) -> bool {
                self.0.binary_search(&id).is_ok()
            }

            pub fn is_subset(&self, other: &Self) -> bool {
                let mut it = other.0.iter().peekable();
                for x in &self.0 {
                    loop {
                        match it.peek() {
                            Some(y) if **y < *x => {
                                it.next();
                            }
                            Some(y) if **y == *x => break,
                            _ => return false,
                        }
                    }
                }
                true
            }

            pub fn union(&self, other: &Self) -> Self {
                let mut v: Vec<$id> = self.0.iter().chain(other.0.iter()).copied().collect();
                v.sort_unstable();
                v.dedup();
                Self(v)
            }

            pub fn intersects(&self, other: &Self) -> bool {
                let (mut i, mut j) = (0, 0);
                while i < self.0.len() && j < other.0.len() {
                    match self.0[i].cmp(&other.0[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => return true,
                    }
                }
                false
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn iter(&self) -> impl Iterator<Item = $id> + '_ {
                self.0.iter().copied()
            }

            pub fn as_slice(&self) -> &[$id] {
                &self.0
            }
        }

        impl FromIterator<$id> for $name {
            fn from_iter<I: IntoIterator<Item = $id>>(iter: I) -> Self {
                let mut v: Vec<$id> = iter.into_iter().collect();
                v.sort_unstable();
                v.dedup();
                Self(v)
            }
        }
    };
}

id_set!(SiteSet, Site, "site");
id_set!(EdgeSet, Edge, "edge");

/// Result of a ball query; `clipped` is set when the infinite-lattice ball
/// would reach outside the box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ball<T> {
    pub members: T,
    pub clipped: bool,
}

/// Immutable finite box of `Z^d` with its edge set and line graph.
#[derive(Clone, PartialEq, Eq)]
pub struct GraphView {
    dim: usize,
    half_width: u32,
    side: u32,
    sup_norm: Vec<u32>,
    edges: Vec<[Site; 2]>,
    adj_start: Vec<u32>,
    adj: Vec<(Site, Edge)>,
    line_start: Vec<u32>,
    line_adj: Vec<Edge>,
}

impl fmt::Debug for GraphView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphView")
            .field("dim", &self.dim)
            .field("half_width", &self.half_width)
            .field("sites", &self.n_sites())
            .field("edges", &self.n_edges())
            .finish()
    }
}

/// Box `[-L, L]^d` under the default budget.
pub fn build_box(dim: usize, half_width: u32) -> Result<GraphView> {
    GraphView::new(dim, half_width, &Budget::default())
}

impl GraphView {
    pub fn new(dim: usize, half_width: u32, budget: &Budget) -> Result<Self> {
        if dim == 0 {
            return Err(param("d", "dimension must be at least 1"));
        }
        if half_width == 0 {
            return Err(param("L", "half-width must be at least 1"));
        }
        let side = 2 * half_width as u128 + 1;
        let mut product: u128 = dim as u128;
        for _ in 0..dim {
            product = product.saturating_mul(side);
        }
        if product > budget.max_sites {
            return Err(Error::Budget {
                what: format!("d*(2L+1)^d with d={dim}, L={half_width}"),
                value: product,
                limit: budget.max_sites,
            });
        }
        let side = side as u32;
        let n_sites = (side as usize).pow(dim as u32);
        let hw = half_width as i32;

        let mut sup_norm = Vec::with_capacity(n_sites);
        let mut coords = vec![0i32; dim];
        for s in 0..n_sites {
            decode(s, side, hw, &mut coords);
            sup_norm.push(coords.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0));
        }

        let mut edges = Vec::with_capacity(dim * n_sites);
        for s in 0..n_sites {
            decode(s, side, hw, &mut coords);
            let mut stride = 1usize;
            let mut strides = vec![0usize; dim];
            for axis in (0..dim).rev() {
                strides[axis] = stride;
                stride *= side as usize;
            }
            for axis in 0..dim {
                if coords[axis] < hw {
                    edges.push([s as Site, (s + strides[axis]) as Site]);
                }
            }
        }

        let mut degree = vec![0u32; n_sites];
        for &[a, b] in &edges {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut adj_start = Vec::with_capacity(n_sites + 1);
        let mut acc = 0u32;
        adj_start.push(0);
        for d in &degree {
            acc += d;
            adj_start.push(acc);
        }
        let mut fill: Vec<u32> = adj_start[..n_sites].to_vec();
        let mut adj = vec![(0, 0); acc as usize];
        for (e, &[a, b]) in edges.iter().enumerate() {
            adj[fill[a as usize] as usize] = (b, e as Edge);
            fill[a as usize] += 1;
            adj[fill[b as usize] as usize] = (a, e as Edge);
            fill[b as usize] += 1;
        }
        for s in 0..n_sites {
            let (lo, hi) = (adj_start[s] as usize, adj_start[s + 1] as usize);
            adj[lo..hi].sort_unstable_by_key(|&(_, e)| e);
        }

        let mut line_start = Vec::with_capacity(edges.len() + 1);
        let mut line_adj = Vec::new();
        line_start.push(0);
        for (e, &[a, b]) in edges.iter().enumerate() {
            let mut nb: Vec<Edge> = [a, b]
                .iter()
                .flat_map(|&x| {
                    adj[adj_start[x as usize] as usize..adj_start[x as usize + 1] as usize]
                        .iter()
                        .map(|&(_, f)| f)
                })
                .filter(|&f| f != e as Edge)
                .collect();
            nb.sort_unstable();
            nb.dedup();
            line_adj.extend_from_slice(&nb);
            line_start.push(line_adj.len() as u32);
        }

        Ok(Self {
            dim,
            half_width,
            side,
            sup_norm,
            edges,
            adj_start,
            adj,
            line_start,
            line_adj,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> u32 {
        self.half_width
    }

    pub fn n_sites(&self) -> usize {
        self.sup_norm.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Degree of an interior site, `|N_x| = 2d`.
    pub fn full_degree(&self) -> usize {
        2 * self.dim
    }

    /// Line-graph degree of an interior edge, `|N^L_e| = 4d - 2`.
    pub fn full_line_degree(&self) -> usize {
        4 * self.dim - 2
    }

    /// Exponential growth of `Z^d`.
    pub fn growth_exponent(&self) -> f64 {
        0.0
    }

    pub fn degree(&self, s: Site) -> usize {
        (self.adj_start[s as usize + 1] - self.adj_start[s as usize]) as usize
    }

    pub fn is_interior(&self, s: Site) -> bool {
        self.degree(s) == self.full_degree()
    }

    /// `(neighbour, connecting edge)` pairs, sorted by edge index.
    #[inline]
    pub fn neighbours(&self, s: Site) -> &[(Site, Edge)] {
        &self.adj[self.adj_start[s as usize] as usize..self.adj_start[s as usize + 1] as usize]
    }

    #[inline]
    pub fn line_neighbours(&self, e: Edge) -> &[Edge] {
        &self.line_adj
            [self.line_start[e as usize] as usize..self.line_start[e as usize + 1] as usize]
    }

    #[inline]
    pub fn endpoints(&self, e: Edge) -> [Site; 2] {
        self.edges[e as usize]
    }

    pub fn edges(&self) -> &[[Site; 2]] {
        &self.edges
    }

    /// `max_i |x_i|`.
    #[inline]
    pub fn sup_norm(&self, s: Site) -> u32 {
        self.sup_norm[s as usize]
    }

    /// Single coordinate of a site, without allocating.
    #[inline]
    pub fn coord(&self, s: Site, axis: usize) -> i32 {
        let mut s = s as usize;
        let side = self.side as usize;
        for _ in 0..self.dim - 1 - axis {
            s /= side;
        }
        (s % side) as i32 - self.half_width as i32
    }

    pub fn coords(&self, s: Site) -> Vec<i32> {
        let mut c = vec![0; self.dim];
        decode(s as usize, self.side, self.half_width as i32, &mut c);
        c
    }

    pub fn site_at(&self, coords: &[i32]) -> Option<Site> {
        if coords.len() != self.dim {
            return None;
        }
        let hw = self.half_width as i32;
        let mut idx = 0usize;
        for &c in coords {
            if c < -hw || c > hw {
                return None;
            }
            idx = idx * self.side as usize + (c + hw) as usize;
        }
        Some(idx as Site)
    }

    /// Like [`site_at`](Self::site_at) but reports the offending point.
    pub fn require_site(&self, coords: &[i32]) -> Result<Site> {
        self.site_at(coords).ok_or_else(|| {
            Error::OutOfRange(format!(
                "point {coords:?} not in the box [-{0},{0}]^{1}",
                self.half_width, self.dim
            ))
        })
    }

    pub fn origin(&self) -> Site {
        self.site_at(&vec![0; self.dim]).expect("origin in box")
    }

    pub fn all_sites(&self) -> SiteSet {
        SiteSet::from_sorted_unchecked((0..self.n_sites() as Site).collect())
    }

    pub fn all_edges(&self) -> EdgeSet {
        EdgeSet::from_sorted_unchecked((0..self.n_edges() as Edge).collect())
    }

    pub fn edge_between(&self, x: Site, y: Site) -> Option<Edge> {
        self.neighbours(x)
            .iter()
            .find(|&&(z, _)| z == y)
            .map(|&(_, e)| e)
    }

    /// Graph distance, which on the box is the `l1` distance.
    pub fn graph_distance(&self, x: Site, y: Site) -> u32 {
        let (a, b) = (self.coords(x), self.coords(y));
        a.iter().zip(&b).map(|(p, q)| p.abs_diff(*q)).sum()
    }

    /// `{y : d(x, y) <= radius}` intersected with the box.
    pub fn site_ball(&self, center: Site, radius: u32) -> Ball<SiteSet> {
        let mut dist = vec![u32::MAX; self.n_sites()];
        let mut clipped = false;
        let mut queue = VecDeque::from([center]);
        dist[center as usize] = 0;
        while let Some(x) = queue.pop_front() {
            let dx = dist[x as usize];
            if dx == radius {
                continue;
            }
            if self.degree(x) < self.full_degree() {
                clipped = true;
            }
            for &(y, _) in self.neighbours(x) {
                if dist[y as usize] == u32::MAX {
                    dist[y as usize] = dx + 1;
                    queue.push_back(y);
                }
            }
        }
        let members = dist
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != u32::MAX)
            .map(|(i, _)| i as Site)
            .collect();
        Ball { members, clipped }
    }

    /// Edges within line-graph distance `radius` of `center`.
    pub fn line_ball(&self, center: Edge, radius: u32) -> Ball<EdgeSet> {
        let mut dist = vec![u32::MAX; self.n_edges()];
        let mut clipped = false;
        let mut queue = VecDeque::from([center]);
        dist[center as usize] = 0;
        while let Some(e) = queue.pop_front() {
            let de = dist[e as usize];
            if de == radius {
                continue;
            }
            if self.line_neighbours(e).len() < self.full_line_degree() {
                clipped = true;
            }
            for &f in self.line_neighbours(e) {
                if dist[f as usize] == u32::MAX {
                    dist[f as usize] = de + 1;
                    queue.push_back(f);
                }
            }
        }
        let members = dist
            .iter()
            .enumerate()
            .filter(|(_, &d)| d != u32::MAX)
            .map(|(i, _)| i as Edge)
            .collect();
        Ball { members, clipped }
    }

    /// Sites of `center + [-n, n]^d` that lie in the box, and whether the
    /// whole cube fits.
    pub fn cube(&self, center: &[i32], n: u32) -> (SiteSet, bool) {
        let n = n as i32;
        let mut out = Vec::new();
        let mut complete = true;
        let mut offset = vec![-n; self.dim];
        loop {
            let p: Vec<i32> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            match self.site_at(&p) {
                Some(s) => out.push(s),
                None => complete = false,
            }
            let mut axis = self.dim;
            loop {
                if axis == 0 {
                    return (out.into_iter().collect(), complete);
                }
                axis -= 1;
                if offset[axis] < n {
                    offset[axis] += 1;
                    break;
                }
                offset[axis] = -n;
            }
        }
    }

    pub fn check_sites(&self, set: &SiteSet) -> Result<()> {
        match set.iter().find(|&s| s as usize >= self.n_sites()) {
            Some(s) => Err(Error::OutOfRange(format!("site index {s} outside the box"))),
            None => Ok(()),
        }
    }

    pub fn check_edges(&self, set: &EdgeSet) -> Result<()> {
        match set.iter().find(|&e| e as usize >= self.n_edges()) {
            Some(e) => Err(Error::OutOfRange(format!("edge index {e} outside the box"))),
            None => Ok(()),
        }
    }
}

fn decode(mut s: usize, side: u32, hw: i32, out: &mut [i32]) {
    for c in out.iter_mut().rev() {
        *c = (s % side as usize) as i32 - hw;
        s /= side as usize;
    }
}
