use std::io::Write;

use serde::Serialize;

use crate::lattice::{Edge, EdgeSet, Site, SiteSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "op", content = "id", rename_all = "lowercase")]
pub enum Change {
    Infect(Site),
    Recover(Site),
    Open(Edge),
    Close(Edge),
}

/// Piecewise-constant path of `(C_t, B_t)`: initial sets plus the state
/// changes in time order. Queries at time `t` see every change at or before
/// `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub(crate) n_sites: usize,
    pub(crate) n_edges: usize,
    pub(crate) c0: SiteSet,
    pub(crate) b0: EdgeSet,
    pub(crate) changes: Vec<(f64, Change)>,
    pub(crate) horizon: f64,
    pub(crate) extinction: Option<f64>,
    pub(crate) boundary_touched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub sites: Vec<Site>,
    pub edges: Vec<Edge>,
}

/// Which half of the configuration a pathwise check looks at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Sites,
    Edges,
}

impl Trajectory {
    pub fn initial_sites(&self) -> &SiteSet {
        &self.c0
    }

    pub fn initial_edges(&self) -> &EdgeSet {
        &self.b0
    }

    pub fn changes(&self) -> &[(f64, Change)] {
        &self.changes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time at which `C` first became empty, if it did by the horizon.
    pub fn extinction_time(&self) -> Option<f64> {
        self.extinction
    }

    pub fn survived(&self) -> bool {
        self.extinction.is_none()
    }

    pub fn boundary_touched(&self) -> bool {
        self.boundary_touched
    }

    fn masks_at(&self, t: f64) -> (Vec<bool>, Vec<bool>) {
        let mut c = self.c0.to_mask(self.n_sites);
        let mut b = self.b0.to_mask(self.n_edges);
        for &(s, ch) in &self.changes {
            if s > t {
                break;
            }
            apply(&mut c, &mut b, ch);
        }
        (c, b)
    }

    pub fn sites_at(&self, t: f64) -> SiteSet {
        SiteSet::from_mask(&self.masks_at(t).0)
    }

    pub fn edges_at(&self, t: f64) -> EdgeSet {
        EdgeSet::from_mask(&self.masks_at(t).1)
    }

    pub fn final_sites(&self) -> SiteSet {
        self.sites_at(f64::INFINITY)
    }

    /// Full state after each distinct change time, starting at `t = 0`.
    pub fn snapshots(&self) -> Vec<Snapshot> {
        let mut c = self.c0.to_mask(self.n_sites);
        let mut b = self.b0.to_mask(self.n_edges);
        let snap = |t: f64, c: &[bool], b: &[bool]| Snapshot {
            t,
            sites: SiteSet::from_mask(c).as_slice().to_vec(),
            edges: EdgeSet::from_mask(b).as_slice().to_vec(),
        };
        let mut out = vec![snap(0.0, &c, &b)];
        let mut i = 0;
        while i < self.changes.len() {
            let t = self.changes[i].0;
            while i < self.changes.len() && self.changes[i].0 == t {
                apply(&mut c, &mut b, self.changes[i].1);
                i += 1;
            }
            out.push(snap(t, &c, &b));
        }
        out
    }

    /// One snapshot per line.
    pub fn write_ndjson<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in self.snapshots() {
            serde_json::to_writer(&mut out, &s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn apply(c: &mut [bool], b: &mut [bool], ch: Change) {
    match ch {
        Change::Infect(x) => c[x as usize] = true,
        Change::Recover(x) => c[x as usize] = false,
        Change::Open(e) => b[e as usize] = true,
        Change::Close(e) => b[e as usize] = false,
    }
}

/// First time at which `ok` fails for some site (or edge), where `ok` sees
/// the membership bits of that index in each trajectory (bit `i` for
/// `trajectories[i]`). Checked at time 0 and after every group of
/// simultaneous changes, so trajectories driven by one timeline are
/// compared at matched event times. Returns `None` if `ok` always holds.
pub fn pathwise_violation(
    trajectories: &[&Trajectory],
    layer: Layer,
    ok: impl Fn(u32) -> bool,
) -> Option<f64> {
    assert!(trajectories.len() <= 32);
    let first = trajectories.first()?;
    let len = match layer {
        Layer::Sites => first.n_sites,
        Layer::Edges => first.n_edges,
    };
    let mut bits = vec![0u32; len];
    for (i, tr) in trajectories.iter().enumerate() {
        let init = match layer {
            Layer::Sites => tr.c0.as_slice(),
            Layer::Edges => tr.b0.as_slice(),
        };
        for &x in init {
            bits[x as usize] |= 1 << i;
        }
    }
    let mut bad = bits.iter().filter(|&&b| !ok(b)).count();
    if bad > 0 {
        return Some(0.0);
    }
    let mut merged: Vec<(f64, usize, u32, bool)> = Vec::new();
    for (i, tr) in trajectories.iter().enumerate() {
        for &(t, ch) in &tr.changes {
            let item = match (layer, ch) {
                (Layer::Sites, Change::Infect(x)) => (x, true),
                (Layer::Sites, Change::Recover(x)) => (x, false),
                (Layer::Edges, Change::Open(e)) => (e, true),
                (Layer::Edges, Change::Close(e)) => (e, false),
                _ => continue,
            };
            merged.push((t, i, item.0, item.1));
        }
    }
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut k = 0;
    while k < merged.len() {
        let t = merged[k].0;
        while k < merged.len() && merged[k].0 == t {
            let (_, i, x, on) = merged[k];
            let slot = &mut bits[x as usize];
            let before = ok(*slot);
            if on {
                *slot |= 1 << i;
            } else {
                *slot &= !(1 << i);
            }
            let after = ok(*slot);
            match (before, after) {
                (true, false) => bad += 1,
                (false, true) => bad -= 1,
                _ => {}
            }
            k += 1;
        }
        if bad > 0 {
            return Some(t);
        }
    }
    None
}

/// `ok` for containment of trajectory 0 in trajectory 1.
pub fn subset_bits(bits: u32) -> bool {
    bits & 1 == 0 || bits & 2 != 0
}

/// First time `sub` has a site (or edge) that `sup` lacks.
pub fn first_containment_violation(
    sub: &Trajectory,
    sup: &Trajectory,
    layer: Layer,
) -> Option<f64> {
    pathwise_violation(&[sub, sup], layer, subset_bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(c0: &[Site], changes: Vec<(f64, Change)>) -> Trajectory {
        Trajectory {
            n_sites: 4,
            n_edges: 2,
            c0: c0.iter().copied().collect(),
            b0: EdgeSet::new(),
            changes,
            horizon: 10.0,
            extinction: None,
            boundary_touched: false,
        }
    }

    #[test]
    fn state_queries() {
        let t = tr(
            &[0],
            vec![
                (1.0, Change::Infect(1)),
                (2.0, Change::Recover(0)),
                (2.5, Change::Open(1)),
            ],
        );
        assert_eq!(t.sites_at(0.5).as_slice(), &[0]);
        assert_eq!(t.sites_at(1.0).as_slice(), &[0, 1]);
        assert_eq!(t.sites_at(3.0).as_slice(), &[1]);
        assert_eq!(t.edges_at(3.0).as_slice(), &[1]);
        assert_eq!(t.snapshots().len(), 4);
    }

    #[test]
    fn containment_violation_time() {
        let a = tr(
            &[0],
            vec![(1.0, Change::Infect(1)), (3.0, Change::Infect(2))],
        );
        let b = tr(
            &[0],
            vec![(1.0, Change::Infect(1)), (2.0, Change::Recover(1))],
        );
        assert_eq!(first_containment_violation(&a, &b, Layer::Sites), Some(2.0));
        assert_eq!(first_containment_violation(&b, &a, Layer::Sites), None);
    }

    #[test]
    fn simultaneous_changes_are_grouped() {
        let a = tr(&[], vec![(1.0, Change::Infect(1))]);
        let b = tr(&[], vec![(1.0, Change::Infect(1))]);
        assert_eq!(first_containment_violation(&a, &b, Layer::Sites), None);
    }
}
