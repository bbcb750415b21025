//! Subcommand execution. Each command yields a CSV table plus the seed
//! behind every row; nothing here touches the filesystem.

use cpere::analysis::critical::{estimate_critical_lambda, Verdict};
use cpere::analysis::estimate::Estimate;
use cpere::analysis::growth::solve_c1;
use cpere::analysis::pathwise::{duality_identity, DualityConfig};
use cpere::analysis::phase::{phase_scan, PhaseGrid};
use cpere::analysis::reports::{
    containment_curve, coupling_speed_report, hitting_bound_report, self_duality_check,
};
use cpere::analysis::survival::{estimate_survival, StartMode};
use cpere::background::{BackgroundKind, BackgroundSpec};
use cpere::blocks::{estimate_block_event, find_block_scale, percolation_survival};
use cpere::engine::RunParams;
use cpere::lattice::{Budget, GraphView, SiteSet};
use cpere::seed::stream_seed;
use serde_json::{json, Value};

use crate::config::{BlocksMode, BoundsCfg, Budgets, Command, DualityCfg, Lattice, RunConfig};
use crate::manifest::RowSeed;
use crate::CliError;

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub seeds: Vec<RowSeed>,
    pub partial: bool,
    pub flags: Vec<String>,
    pub result: Value,
}

impl Table {
    fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
            seeds: Vec::new(),
            partial: false,
            flags: Vec::new(),
            result: Value::Null,
        }
    }

    fn push(&mut self, row: Vec<String>, seed: Option<(u64, u64)>) {
        if let Some((seed, replicas)) = seed {
            self.seeds.push(RowSeed {
                row: self.rows.len(),
                seed,
                replicas,
            });
        }
        self.rows.push(row);
    }

    fn push_est(&mut self, mut lead: Vec<String>, e: &Estimate, tail: Vec<String>) {
        lead.extend(est_cells(e));
        lead.extend(tail);
        lead.push(e.root_seed.to_string());
        self.push(lead, Some((e.root_seed, e.n)));
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(internal)?;
        for r in &self.rows {
            w.write_record(r).map_err(internal)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Internal(e.to_string()))
    }
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

const EST: [&str; 8] = [
    "p_hat",
    "successes",
    "n",
    "half_width",
    "lower",
    "upper",
    "censored",
    "boundary_touched",
];

fn est_cells(e: &Estimate) -> Vec<String> {
    vec![
        e.p_hat.to_string(),
        e.successes.to_string(),
        e.n.to_string(),
        e.half_width.to_string(),
        e.lower.to_string(),
        e.upper.to_string(),
        e.censored.to_string(),
        e.boundary_touched.to_string(),
    ]
}

fn header<'a>(lead: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    let mut h = lead.to_vec();
    h.extend(EST);
    h.extend(tail);
    h.push("seed");
    h
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

/// Kind name and the two rate columns; unused rates are left empty.
fn bg_cells(spec: &BackgroundSpec) -> Vec<String> {
    let (name, a, b) = match spec.kind() {
        BackgroundKind::DynamicalPercolation { alpha, beta } => {
            ("dynamical-percolation", s(alpha), s(beta))
        }
        BackgroundKind::NoisyVoter { alpha, beta } => ("noisy-voter", s(alpha), s(beta)),
        BackgroundKind::Ising { beta } => ("ising", String::new(), s(beta)),
        BackgroundKind::Frozen => ("frozen", String::new(), String::new()),
    };
    vec![name.into(), a, b]
}

const BG: [&str; 3] = ["background", "bg_alpha", "bg_beta"];

fn graph(l: Lattice, b: &Budgets) -> Result<GraphView, CliError> {
    let budget = Budget {
        max_sites: b.max_sites as u128,
        max_events: b.max_events as u128,
    };
    Ok(GraphView::new(l.dim, l.half_width, &budget)?)
}

fn site_set(g: &GraphView, pts: &[Vec<i32>]) -> Result<SiteSet, CliError> {
    pts.iter()
        .map(|p| g.require_site(p).map_err(CliError::from))
        .collect()
}

fn start_flags(t: &mut Table, start: &StartMode, spec: &BackgroundSpec) {
    if *start == StartMode::BurnIn {
        if let Ok(b) = spec.burn_in_time() {
            t.flags.push(format!(
                "burn-in start: background evolved for {b} time units from the empty configuration, not sampled from its invariant law"
            ));
        }
    }
}

fn boundary_flag(t: &mut Table) {
    let col = t.header.iter().position(|h| h == "boundary_touched");
    if let Some(c) = col {
        if t.rows
            .iter()
            .any(|r| r[c].parse::<f64>().is_ok_and(|v| v > 0.0))
        {
            t.flags.push(
                "infection reached the truncation boundary in some replicas; see boundary_touched"
                    .into(),
            );
        }
    }
}

/// Expected events in one timeline on the box, used for the budget check.
pub fn expected_events(l: Lattice, lambda: f64, r: f64, q: f64, horizon: f64) -> f64 {
    let sites = (2.0 * l.half_width as f64 + 1.0).powi(l.dim as i32);
    let edges = l.dim as f64 * sites;
    horizon * (sites * r + 2.0 * edges * lambda + edges * q)
}

/// Upper bound on replica runs and the largest per-timeline event count
/// the command can generate; checked before anything runs.
pub fn plan(cfg: &RunConfig) -> (u64, Option<f64>) {
    let span = |m: u32| (32 - m.leading_zeros()) as u64;
    match &cfg.command {
        Command::Survival(c) => (
            c.reps as u64,
            Some(expected_events(
                c.lattice,
                c.lambda,
                c.r,
                c.background.candidate_rate(),
                c.horizon,
            )),
        ),
        Command::Critical(c) => {
            let s = &c.search;
            (
                (s.reps_per_probe * s.max_batches * s.max_probes) as u64,
                Some(expected_events(
                    c.lattice,
                    s.hi,
                    c.r,
                    c.background.candidate_rate(),
                    c.horizon,
                )),
            )
        }
        Command::PhaseScan(c) => {
            let all: Vec<f64> = c
                .values1
                .iter()
                .chain(&c.values2)
                .copied()
                .chain([c.base.lambda, c.base.r, c.base.alpha + c.base.beta])
                .collect();
            let top = all.iter().copied().fold(0.0, f64::max);
            (
                (c.values1.len() * c.values2.len() * c.reps) as u64,
                Some(expected_events(c.lattice, top, top, 2.0 * top, c.horizon)),
            )
        }
        Command::Duality(DualityCfg::Identity {
            lattice,
            t_star,
            lambda,
            r,
            alpha,
            beta,
            runs,
        }) => (
            *runs as u64,
            Some(expected_events(
                *lattice,
                *lambda,
                *r,
                alpha + beta,
                *t_star,
            )),
        ),
        Command::Duality(DualityCfg::Distributional {
            lattice,
            lambda,
            r,
            background,
            t,
            reps,
            ..
        }) => (
            2 * *reps as u64,
            Some(expected_events(
                *lattice,
                *lambda,
                *r,
                background.candidate_rate(),
                t.max(1e-9),
            )),
        ),
        Command::Bounds(BoundsCfg::Hitting { reps, .. })
        | Command::Bounds(BoundsCfg::Coupling { reps, .. }) => (*reps as u64, None),
        Command::Bounds(BoundsCfg::Containment {
            lattice,
            lambda,
            r,
            background,
            horizon,
            reps,
            ..
        }) => (
            *reps as u64,
            Some(expected_events(
                *lattice,
                *lambda,
                *r,
                background.candidate_rate(),
                *horizon,
            )),
        ),
        Command::Blocks(b) => match &b.mode {
            BlocksMode::Events {
                events,
                n,
                l,
                t,
                reps,
            } => (
                (events.len() * n.len() * l.len() * t.len() * reps) as u64,
                None,
            ),
            BlocksMode::Scale { limits, reps, .. } => {
                let nt = span(limits.max_t.floor().min(u32::MAX as f64) as u32);
                (
                    span(limits.max_n) * span(limits.max_l) * nt * 2 * (*reps as u64),
                    None,
                )
            }
        },
        Command::Percolation(p) => ((p.q.len() * p.reps) as u64, None),
        Command::C1(_) => (0, None),
    }
}

pub fn check_budget(cfg: &RunConfig) -> Result<(), CliError> {
    let (replicas, events) = plan(cfg);
    if let Some(ev) = events {
        if ev > cfg.budget.max_events as f64 {
            return Err(CliError::Budget(format!(
                "expected events per timeline {ev:.3e} exceed max_events = {}",
                cfg.budget.max_events
            )));
        }
    }
    let scan = matches!(cfg.command, Command::PhaseScan(_));
    if let Some(m) = cfg.budget.max_replicas {
        if replicas > m && !scan {
            return Err(CliError::Budget(format!(
                "{replicas} replica runs exceed max_replicas = {m}"
            )));
        }
    }
    Ok(())
}

pub fn execute(cfg: &RunConfig) -> Result<Table, CliError> {
    let seed = cfg.seed.unwrap_or(0);
    let b = &cfg.budget;
    match &cfg.command {
        Command::Survival(c) => {
            let g = graph(c.lattice, b)?;
            let c0 = site_set(&g, &c.initial)?;
            let p = RunParams::new(&g, c.lambda, c.r, c.background, c.horizon, seed)?;
            let e = estimate_survival(&p, &c0, &c.start, c.reps, None)?;
            let mut t = Table::new(&header(
                &[
                    "dim",
                    "half_width",
                    "lambda",
                    "r",
                    BG[0],
                    BG[1],
                    BG[2],
                    "horizon",
                    "start",
                ],
                &[],
            ));
            let mut lead = vec![
                s(c.lattice.dim),
                s(c.lattice.half_width),
                s(c.lambda),
                s(c.r),
            ];
            lead.extend(bg_cells(&c.background));
            lead.extend([s(c.horizon), c.start.name().into()]);
            t.push_est(lead, &e, vec![]);
            start_flags(&mut t, &c.start, &c.background);
            boundary_flag(&mut t);
            Ok(t)
        }
        Command::Critical(c) => {
            let g = graph(c.lattice, b)?;
            let c0 = site_set(&g, &c.initial)?;
            let br = estimate_critical_lambda(
                &g,
                c.r,
                c.background,
                &c.start,
                &c0,
                c.horizon,
                &c.search,
                seed,
            )?;
            let mut t = Table::new(&header(&["probe", "lambda", "verdict", "forced"], &[]));
            for (i, p) in br.probes.iter().enumerate() {
                let v = match p.verdict {
                    Verdict::Subcritical => "subcritical",
                    Verdict::Supercritical => "supercritical",
                };
                t.push_est(
                    vec![s(i), s(p.lambda), v.into(), s(p.forced)],
                    &p.estimate,
                    vec![],
                );
            }
            if !br.complete {
                t.flags
                    .push(format!("bracket incomplete: {}", br.statement));
            }
            t.result = json!({
                "lambda_lo": br.lambda_lo,
                "lambda_hi": br.lambda_hi,
                "width": br.width(),
                "complete": br.complete,
                "statement": br.statement,
            });
            start_flags(&mut t, &c.start, &c.background);
            boundary_flag(&mut t);
            Ok(t)
        }
        Command::PhaseScan(c) => {
            let g = graph(c.lattice, b)?;
            let c0 = site_set(&g, &c.initial)?;
            let grid = PhaseGrid {
                base: c.base,
                axis1: c.axis1,
                values1: c.values1.clone(),
                axis2: c.axis2,
                values2: c.values2.clone(),
                horizon: c.horizon,
                reps: c.reps,
                start: c.start.clone(),
                max_runs: b.max_replicas,
            };
            let scan = phase_scan(&g, &grid, &c0, seed)?;
            let mut bytes = Vec::new();
            scan.write_csv(&mut bytes)?;
            let mut rd = csv::Reader::from_reader(bytes.as_slice());
            let head: Vec<String> = rd
                .headers()
                .map_err(internal)?
                .iter()
                .map(String::from)
                .collect();
            let mut t = Table {
                header: head,
                ..Table::new::<&str>(&[])
            };
            for (rec, (_, e)) in rd.records().zip(&scan.points) {
                let row = rec.map_err(internal)?.iter().map(String::from).collect();
                t.push(row, Some((e.root_seed, e.n)));
            }
            t.partial = scan.partial;
            if scan.partial {
                t.flags.push(format!(
                    "partial: max_replicas reached after {} of {} grid points",
                    scan.points.len(),
                    c.values1.len() * c.values2.len()
                ));
            }
            t.result =
                json!({ "monotonicity_violations_3sigma": scan.monotonicity_violations(3.0) });
            boundary_flag(&mut t);
            Ok(t)
        }
        Command::Duality(DualityCfg::Identity {
            lattice,
            t_star,
            lambda,
            r,
            alpha,
            beta,
            runs,
        }) => {
            graph(*lattice, b)?;
            let out = duality_identity(&DualityConfig {
                dim: lattice.dim,
                half_width: lattice.half_width,
                t_star: *t_star,
                lambda: *lambda,
                r: *r,
                alpha: *alpha,
                beta: *beta,
                runs: *runs,
                seed,
            })?;
            let mut t = Table::new(&[
                "dim",
                "half_width",
                "t_star",
                "lambda",
                "r",
                "alpha",
                "beta",
                "runs",
                "violations",
                "both_hit",
                "seed",
            ]);
            t.push(
                vec![
                    s(lattice.dim),
                    s(lattice.half_width),
                    s(t_star),
                    s(lambda),
                    s(r),
                    s(alpha),
                    s(beta),
                    s(out.runs),
                    s(out.violations),
                    s(out.both_hit),
                    s(seed),
                ],
                Some((seed, out.runs as u64)),
            );
            if out.violations > 0 {
                t.flags.push(format!(
                    "{} realisations violate the duality identity",
                    out.violations
                ));
            }
            t.result = serde_json::to_value(&out).map_err(internal)?;
            Ok(t)
        }
        Command::Duality(DualityCfg::Distributional {
            lattice,
            lambda,
            r,
            background,
            c,
            a,
            t: time,
            reps,
        }) => {
            let g = graph(*lattice, b)?;
            let cs = site_set(&g, c)?;
            let as_ = site_set(&g, a)?;
            let out =
                self_duality_check(&g, *lambda, *r, background, &cs, &as_, *time, *reps, seed)?;
            let mut t = Table::new(&header(&["side", "t"], &["z"]));
            t.push_est(
                vec!["forward".into(), s(time)],
                &out.forward,
                vec![s(out.z)],
            );
            t.push_est(
                vec!["backward".into(), s(time)],
                &out.backward,
                vec![s(out.z)],
            );
            debug_assert_eq!(out.forward.root_seed, stream_seed(seed, 1));
            t.result = json!({ "z": out.z });
            boundary_flag(&mut t);
            Ok(t)
        }
        Command::Bounds(BoundsCfg::Hitting {
            dim,
            lambda,
            c,
            distances,
            reps,
        }) => {
            let rows = hitting_bound_report(*dim, *lambda, *c, distances, *reps, seed)?;
            let mut t = Table::new(&header(
                &["dim", "lambda", "c", "distance"],
                &["bound", "g0", "within"],
            ));
            for r in &rows {
                t.push_est(
                    vec![s(dim), s(lambda), s(c), s(r.distance)],
                    &r.empirical,
                    vec![s(r.bound), s(r.g0), s(r.within)],
                );
            }
            Ok(t)
        }
        Command::Bounds(BoundsCfg::Coupling {
            background,
            t_grid,
            reps,
        }) => {
            let rows = coupling_speed_report(background, t_grid, *reps, seed)?;
            let mut t = Table::new(&header(
                &["dim", BG[0], BG[1], BG[2], "t"],
                &["exact", "within"],
            ));
            for r in &rows {
                let mut lead = vec![s(background.dim())];
                lead.extend(bg_cells(background));
                lead.push(s(r.t));
                t.push_est(lead, &r.empirical, vec![s(r.exact), s(r.within)]);
            }
            Ok(t)
        }
        Command::Bounds(BoundsCfg::Containment {
            lattice,
            lambda,
            r,
            background,
            horizon,
            s_grid,
            reps,
        }) => {
            let g = graph(*lattice, b)?;
            let p = RunParams::new(&g, *lambda, *r, *background, *horizon, seed)?;
            let cur = containment_curve(&p, s_grid, *reps)?;
            let mut t = Table::new(&header(
                &["lambda", BG[0], BG[1], BG[2], "horizon", "s"],
                &["exact", "monotone"],
            ));
            for (sv, e) in &cur.points {
                let mut lead = vec![s(lambda)];
                lead.extend(bg_cells(background));
                lead.extend([s(horizon), s(sv)]);
                t.push_est(lead, e, vec![s(cur.exact), s(cur.monotone)]);
            }
            if !cur.exact {
                t.flags
                    .push("coupling times are limited by the horizon for this background".into());
            }
            Ok(t)
        }
        Command::Blocks(bc) => match &bc.mode {
            BlocksMode::Events {
                events,
                n,
                l,
                t: ts,
                reps,
            } => {
                let mut t = Table::new(&header(
                    &["event", "n", "l", "t", "lambda", "r", BG[0], BG[1], BG[2]],
                    &[],
                ));
                for &ev in events {
                    for &nn in n {
                        for &ll in l {
                            for &tt in ts {
                                let e = estimate_block_event(
                                    ev, nn, ll, tt, &bc.params, *reps, seed, None,
                                )?;
                                let mut lead = vec![
                                    ev.name().into(),
                                    s(nn),
                                    s(ll),
                                    s(tt),
                                    s(bc.params.lambda),
                                    s(bc.params.r),
                                ];
                                lead.extend(bg_cells(&bc.params.spec));
                                t.push_est(lead, &e, vec![]);
                            }
                        }
                    }
                }
                Ok(t)
            }
            BlocksMode::Scale {
                epsilon,
                limits,
                reps,
            } => {
                let sc = find_block_scale(&bc.params, *epsilon, limits, *reps, seed)?;
                let mut t = Table::new(&[
                    "epsilon", "n", "l", "t", "a1_p_hat", "a1_lower", "a2_p_hat", "a2_lower",
                    "success", "tried", "seed",
                ]);
                t.push(
                    vec![
                        s(epsilon),
                        s(sc.n),
                        s(sc.l),
                        s(sc.t),
                        s(sc.a1.p_hat),
                        s(sc.a1.lower),
                        s(sc.a2.p_hat),
                        s(sc.a2.lower),
                        s(sc.success),
                        s(sc.tried),
                        s(seed),
                    ],
                    Some((seed, sc.a1.n)),
                );
                if !sc.success {
                    t.flags.push("no scale within the limits met the target; the row is the best triple found".into());
                }
                Ok(t)
            }
        },
        Command::Percolation(p) => {
            let mut t = Table::new(&header(&["q", "k_max"], &[]));
            for &q in &p.q {
                let e = percolation_survival(q, p.reps, p.k_max, seed)?;
                t.push_est(vec![s(q), s(p.k_max)], &e, vec![]);
            }
            Ok(t)
        }
        Command::C1(c) => {
            let gc = solve_c1(c.lambda, c.degree, c.rho)?;
            let mut t = Table::new(&["lambda", "degree", "rho", "c1", "via_bisection", "residual"]);
            t.push(
                vec![
                    s(c.lambda),
                    s(c.degree),
                    s(c.rho),
                    s(gc.c1),
                    s(gc.via_bisection),
                    s(gc.residual),
                ],
                None,
            );
            Ok(t)
        }
    }
}
