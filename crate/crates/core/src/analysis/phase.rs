//! Survival over a two-parameter grid for dynamical percolation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analysis::estimate::{drop_in_sigmas, Estimate};
use crate::analysis::survival::{estimate_survival, StartMode};
use crate::background::BackgroundSpec;
use crate::engine::RunParams;
use crate::error::{param, Error, Result};
use crate::graphical::Rates;
use crate::lattice::{GraphView, SiteSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Lambda,
    R,
    Alpha,
    Beta,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::R => "r",
            Axis::Alpha => "alpha",
            Axis::Beta => "beta",
        }
    }

    /// Survival can only grow along lambda and alpha.
    pub fn increasing(self) -> bool {
        matches!(self, Axis::Lambda | Axis::Alpha)
    }

    const ALL: [Axis; 4] = [Axis::Lambda, Axis::R, Axis::Alpha, Axis::Beta];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpPoint {
    pub lambda: f64,
    pub r: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl DpPoint {
    fn get(&self, a: Axis) -> f64 {
        match a {
            Axis::Lambda => self.lambda,
            Axis::R => self.r,
            Axis::Alpha => self.alpha,
            Axis::Beta => self.beta,
        }
    }

    fn with(mut self, a: Axis, v: f64) -> Self {
        match a {
            Axis::Lambda => self.lambda = v,
            Axis::R => self.r = v,
            Axis::Alpha => self.alpha = v,
            Axis::Beta => self.beta = v,
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub base: DpPoint,
    pub axis1: Axis,
    pub values1: Vec<f64>,
    pub axis2: Axis,
    pub values2: Vec<f64>,
    pub horizon: f64,
    pub reps: usize,
    pub start: StartMode,
    /// Cap on `points * reps`; the scan stops early, flagged partial, once
    /// the next point would exceed it.
    pub max_runs: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    pub grid: PhaseGrid,
    /// Row-major over `values1 x values2`; shorter than the grid if partial.
    pub points: Vec<(DpPoint, Estimate)>,
    pub partial: bool,
}

pub fn phase_scan(g: &GraphView, grid: &PhaseGrid, c0: &SiteSet, seed: u64) -> Result<PhaseScan> {
    if grid.axis1 == grid.axis2 {
        return Err(param("axes", "the two axes must differ"));
    }
    if grid.values1.is_empty() || grid.values2.is_empty() {
        return Err(param("grid", "both axes need at least one value"));
    }
    let points: Vec<DpPoint> = grid
        .values1
        .iter()
        .flat_map(|&a| grid.values2.iter().map(move |&b| (a, b)))
        .map(|(a, b)| grid.base.with(grid.axis1, a).with(grid.axis2, b))
        .collect();
    let max = |a: Axis| points.iter().map(|p| p.get(a)).fold(0.0, f64::max);
    let q = points.iter().map(|p| p.alpha + p.beta).fold(0.0, f64::max);
    let ceilings = Rates::new(max(Axis::Lambda), max(Axis::R), q)?;
    let mut out = Vec::with_capacity(points.len());
    let mut runs = 0u64;
    let mut partial = false;
    for p in points {
        runs += grid.reps as u64;
        if grid.max_runs.is_some_and(|m| runs > m) {
            partial = true;
            break;
        }
        let spec = BackgroundSpec::dynamical_percolation(p.alpha, p.beta, g.dim())?;
        let params = RunParams::new(g, p.lambda, p.r, spec, grid.horizon, seed)?;
        out.push((
            p,
            estimate_survival(&params, c0, &grid.start, grid.reps, Some(ceilings))?,
        ));
    }
    if out.is_empty() {
        return Err(Error::Budget {
            what: "phase scan replica runs".into(),
            value: grid.reps as u128,
            limit: grid.max_runs.unwrap_or(0) as u128,
        });
    }
    Ok(PhaseScan {
        grid: grid.clone(),
        points: out,
        partial,
    })
}

impl PhaseScan {
    /// Adjacent pairs along either axis where survival drops against the
    /// coupling order by more than `k` combined sigmas.
    pub fn monotonicity_violations(&self, k: f64) -> usize {
        let n2 = self.grid.values2.len();
        let at = |i: usize, j: usize| self.points.get(i * n2 + j).map(|p| &p.1);
        let mut count = 0;
        for i in 0..self.grid.values1.len() {
            for j in 0..n2 {
                let Some(here) = at(i, j) else { continue };
                for (axis, next) in [
                    (self.grid.axis1, at(i + 1, j)),
                    (
                        self.grid.axis2,
                        (j + 1 < n2).then(|| at(i, j + 1)).flatten(),
                    ),
                ] {
                    let Some(next) = next else { continue };
                    let (lo, hi) = if axis.increasing() {
                        (here, next)
                    } else {
                        (next, here)
                    };
                    if drop_in_sigmas(lo, hi) > k {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Axes first, then the fixed parameters, then the estimate.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let fixed: Vec<Axis> = Axis::ALL
            .into_iter()
            .filter(|a| *a != self.grid.axis1 && *a != self.grid.axis2)
            .collect();
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = vec![self.grid.axis1.name(), self.grid.axis2.name()];
        header.extend(fixed.iter().map(|a| a.name()));
        header.extend([
            "horizon",
            "p_hat",
            "successes",
            "n",
            "half_width",
            "lower",
            "upper",
            "censored",
            "boundary_touched",
            "seed",
        ]);
        wr.write_record(&header).map_err(csv_err)?;
        for (p, e) in &self.points {
            let mut row: Vec<String> = vec![
                p.get(self.grid.axis1).to_string(),
                p.get(self.grid.axis2).to_string(),
            ];
            row.extend(fixed.iter().map(|a| p.get(*a).to_string()));
            row.extend([
                self.grid.horizon.to_string(),
                e.p_hat.to_string(),
                e.successes.to_string(),
                e.n.to_string(),
                e.half_width.to_string(),
                e.lower.to_string(),
                e.upper.to_string(),
                e.censored.to_string(),
                e.boundary_touched.to_string(),
                e.root_seed.to_string(),
            ]);
            wr.write_record(&row).map_err(csv_err)?;
        }
        wr.flush()
            .map_err(|e| Error::Numerical(format!("csv write: {e}")))?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv write: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_box;

    fn grid(max_runs: Option<u64>) -> PhaseGrid {
        PhaseGrid {
            base: DpPoint {
                lambda: 1.0,
                r: 1.0,
                alpha: 1.0,
                beta: 1.0,
            },
            axis1: Axis::Lambda,
            values1: vec![0.05, 2.0, 4.0],
            axis2: Axis::Beta,
            values2: vec![0.5, 2.0],
            horizon: 5.0,
            reps: 100,
            start: StartMode::Stationary,
            max_runs,
        }
    }

    #[test]
    fn scan_is_deterministic_and_monotone_in_lambda() {
        let g = build_box(1, 30).unwrap();
        let c0: SiteSet = [g.origin()].into_iter().collect();
        let a = phase_scan(&g, &grid(None), &c0, 7).unwrap();
        let b = phase_scan(&g, &grid(None), &c0, 7).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.write_csv(&mut x).unwrap();
        b.write_csv(&mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x)
            .unwrap()
            .starts_with("lambda,beta,r,alpha,horizon,p_hat"));
        for j in 0..2 {
            for i in 0..2 {
                assert!(a.points[i * 2 + j].1.successes <= a.points[(i + 1) * 2 + j].1.successes);
            }
        }
        assert_eq!(a.monotonicity_violations(3.0), 0);
    }

    #[test]
    fn budget_truncates_scan() {
        let g = build_box(1, 10).unwrap();
        let c0: SiteSet = [g.origin()].into_iter().collect();
        let s = phase_scan(&g, &grid(Some(250)), &c0, 7).unwrap();
        assert!(s.partial);
        assert_eq!(s.points.len(), 2);
        assert!(phase_scan(&g, &grid(Some(50)), &c0, 7).is_err());
    }
}
