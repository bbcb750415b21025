use crate::lattice::{GraphView, Site};

/// Axis-aligned space box with a time window `[t0, t1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionBox {
    pub lo: Vec<i32>,
    pub hi: Vec<i32>,
    pub t0: f64,
    pub t1: f64,
}

/// Finite union of space-time boxes. Infection paths confined to the region
/// may only use arrows whose endpoints are both inside at the arrow time,
/// and an infected site is dropped once time leaves every box holding it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpaceTimeRegion {
    boxes: Vec<RegionBox>,
}

impl SpaceTimeRegion {
    pub fn new(boxes: Vec<RegionBox>) -> Self {
        Self { boxes }
    }

    pub fn boxes(&self) -> &[RegionBox] {
        &self.boxes
    }

    /// Membership on the half-open window convention.
    pub fn contains(&self, g: &GraphView, x: Site, t: f64) -> bool {
        self.boxes.iter().any(|b| {
            b.t0 <= t
                && t < b.t1
                && (0..g.dim()).all(|i| {
                    let c = g.coord(x, i);
                    b.lo[i] <= c && c <= b.hi[i]
                })
        })
    }

    /// Ends of time windows, sorted, where confinement must be re-checked.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.boxes.iter().map(|b| b.t1).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}
