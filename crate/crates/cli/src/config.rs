//! JSON run configuration. Parsing walks the document by hand so every
//! problem is reported at once, each with a path such as `.background.alpha`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;

use cpere::analysis::critical::CriticalSearch;
use cpere::analysis::phase::{Axis, DpPoint};
use cpere::analysis::survival::StartMode;
use cpere::background::{BackgroundKind, BackgroundSpec};
use cpere::blocks::{BlockEvent, BlockParams, ScaleLimits};
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Syntax,
    UnknownKey,
    Type,
    Missing,
    Constraint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub kind: ErrorKind,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() {
            "."
        } else {
            &self.path
        };
        write!(f, "{path}: {}", self.message)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Budgets {
    pub max_sites: u64,
    pub max_events: u64,
    /// Total replica runs; a phase scan stops partial when it is reached,
    /// every other command refuses to start.
    pub max_replicas: Option<u64>,
    /// Recorded in the manifest and compared against the elapsed time.
    pub wall_clock_hint_s: Option<f64>,
}

impl Default for Budgets {
    fn default() -> Self {
        let b = cpere::lattice::Budget::default();
        Self {
            max_sites: b.max_sites as u64,
            max_events: b.max_events as u64,
            max_replicas: None,
            wall_clock_hint_s: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub half_width: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalCfg {
    pub lattice: Lattice,
    pub lambda: f64,
    pub r: f64,
    pub background: BackgroundSpec,
    pub horizon: f64,
    pub reps: usize,
    pub start: StartMode,
    pub initial: Vec<Vec<i32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalCfg {
    pub lattice: Lattice,
    pub r: f64,
    pub background: BackgroundSpec,
    pub horizon: f64,
    pub start: StartMode,
    pub initial: Vec<Vec<i32>>,
    pub search: CriticalSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseCfg {
    pub lattice: Lattice,
    pub base: DpPoint,
    pub axis1: Axis,
    pub values1: Vec<f64>,
    pub axis2: Axis,
    pub values2: Vec<f64>,
    pub horizon: f64,
    pub reps: usize,
    pub start: StartMode,
    pub initial: Vec<Vec<i32>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DualityCfg {
    Identity {
        lattice: Lattice,
        t_star: f64,
        lambda: f64,
        r: f64,
        alpha: f64,
        beta: f64,
        runs: usize,
    },
    Distributional {
        lattice: Lattice,
        lambda: f64,
        r: f64,
        background: BackgroundSpec,
        c: Vec<Vec<i32>>,
        a: Vec<Vec<i32>>,
        t: f64,
        reps: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundsCfg {
    Hitting {
        dim: usize,
        lambda: f64,
        c: f64,
        distances: Vec<u32>,
        reps: usize,
    },
    Coupling {
        background: BackgroundSpec,
        t_grid: Vec<f64>,
        reps: usize,
    },
    Containment {
        lattice: Lattice,
        lambda: f64,
        r: f64,
        background: BackgroundSpec,
        horizon: f64,
        s_grid: Vec<f64>,
        reps: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlocksMode {
    Events {
        events: Vec<BlockEvent>,
        n: Vec<u32>,
        l: Vec<u32>,
        t: Vec<f64>,
        reps: usize,
    },
    Scale {
        epsilon: f64,
        limits: ScaleLimits,
        reps: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlocksCfg {
    pub params: BlockParams,
    pub mode: BlocksMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PercolationCfg {
    pub q: Vec<f64>,
    pub k_max: u32,
    pub reps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct C1Cfg {
    pub lambda: f64,
    pub degree: usize,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Survival(SurvivalCfg),
    Critical(CriticalCfg),
    PhaseScan(PhaseCfg),
    Duality(DualityCfg),
    Bounds(BoundsCfg),
    Blocks(BlocksCfg),
    Percolation(PercolationCfg),
    C1(C1Cfg),
}

pub const COMMANDS: [&str; 8] = [
    "survival",
    "critical",
    "phase-scan",
    "duality",
    "bounds",
    "blocks",
    "percolation",
    "c1",
];

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Survival(_) => "survival",
            Command::Critical(_) => "critical",
            Command::PhaseScan(_) => "phase-scan",
            Command::Duality(_) => "duality",
            Command::Bounds(_) => "bounds",
            Command::Blocks(_) => "blocks",
            Command::Percolation(_) => "percolation",
            Command::C1(_) => "c1",
        }
    }

    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Command::C1(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub budget: Budgets,
    /// The document as read, with overrides applied; echoed into the manifest.
    pub echo: Value,
}

/// Values supplied on the command line that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
}

pub fn parse_config(text: &str, ov: &Overrides) -> Result<RunConfig, Vec<ConfigError>> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| {
        vec![ConfigError {
            path: String::new(),
            kind: ErrorKind::Syntax,
            message: format!("malformed JSON: {e}"),
        }]
    })?;
    if let (Some(seed), Value::Object(m)) = (ov.seed, &mut doc) {
        m.insert("seed".into(), Value::from(seed));
    }
    from_value(doc)
}

pub fn from_value(doc: Value) -> Result<RunConfig, Vec<ConfigError>> {
    let mut e = Errs::default();
    let Value::Object(map) = &doc else {
        e.push(
            "",
            ErrorKind::Type,
            "the configuration must be a JSON object",
        );
        return Err(e.0);
    };
    let mut o = Obj::new(String::new(), map);
    let command = o.string(&mut e, "command", None);
    let seed = o.opt_u64(&mut e, "seed");
    let out_dir = o.opt_string(&mut e, "out_dir").map(PathBuf::from);
    let threads = o.opt_u64(&mut e, "threads").map(|t| t as usize);
    if threads == Some(0) {
        e.push(".threads", ErrorKind::Constraint, "must be at least 1");
    }
    let budget = match o.obj(&mut e, "budget") {
        Some(mut b) => {
            let d = Budgets::default();
            let out = Budgets {
                max_sites: b.u64(&mut e, "max_sites", Some(d.max_sites), 1),
                max_events: b.u64(&mut e, "max_events", Some(d.max_events), 1),
                max_replicas: b.opt_u64(&mut e, "max_replicas"),
                wall_clock_hint_s: b.opt_f64(&mut e, "wall_clock_hint_s", positive),
            };
            b.finish(&mut e);
            out
        }
        None => Budgets::default(),
    };
    let command = match command.as_str() {
        "survival" => Some(Command::Survival(survival(&mut o, &mut e))),
        "critical" => Some(Command::Critical(critical(&mut o, &mut e))),
        "phase-scan" => Some(Command::PhaseScan(phase(&mut o, &mut e))),
        "duality" => Some(Command::Duality(duality(&mut o, &mut e))),
        "bounds" => Some(Command::Bounds(bounds(&mut o, &mut e))),
        "blocks" => Some(Command::Blocks(blocks(&mut o, &mut e))),
        "percolation" => Some(Command::Percolation(percolation(&mut o, &mut e))),
        "c1" => Some(Command::C1(c1(&mut o, &mut e))),
        "" => None,
        other => {
            e.push(
                ".command",
                ErrorKind::Constraint,
                format!(
                    "unknown command `{other}`, expected one of {}",
                    COMMANDS.join(", ")
                ),
            );
            None
        }
    };
    if let Some(c) = &command {
        if c.is_stochastic() && seed.is_none() && !o.has("seed") {
            e.push(".seed", ErrorKind::Missing, "required (or pass --seed)");
        }
        // Unknown keys only make sense once the command fixed the key set.
        o.finish(&mut e);
    }
    match command {
        Some(command) if e.0.is_empty() => Ok(RunConfig {
            command,
            seed,
            out_dir,
            threads,
            budget,
            echo: doc.clone(),
        }),
        _ => Err(e.0),
    }
}

fn lattice(o: &mut Obj, e: &mut Errs) -> Lattice {
    let dim = o.u64(e, "dim", None, 1);
    if dim > 6 {
        e.push(
            &o.child("dim"),
            ErrorKind::Constraint,
            format!("at most 6 dimensions are supported, got {dim}"),
        );
    }
    let half_width = o.u64(e, "half_width", None, 1);
    if half_width > i32::MAX as u64 {
        e.push(&o.child("half_width"), ErrorKind::Constraint, "too large");
    }
    Lattice {
        dim: dim.max(1) as usize,
        half_width: half_width.min(i32::MAX as u64) as u32,
    }
}

fn survival(o: &mut Obj, e: &mut Errs) -> SurvivalCfg {
    let lattice = lattice(o, e);
    let background = background(o, e, lattice.dim);
    SurvivalCfg {
        lattice,
        lambda: o.f64(e, "lambda", None, nonneg),
        r: o.f64(e, "r", None, nonneg),
        background,
        horizon: o.f64(e, "horizon", None, positive),
        reps: o.u64(e, "reps", None, 1) as usize,
        start: start(o, e, &background),
        initial: points(o, e, "initial", lattice, true),
    }
}

fn critical(o: &mut Obj, e: &mut Errs) -> CriticalCfg {
    let lattice = lattice(o, e);
    let background = background(o, e, lattice.dim);
    let d = CriticalSearch::default();
    let search = match o.obj(e, "search") {
        Some(mut s) => {
            let out = CriticalSearch {
                lo: s.f64(e, "lo", Some(d.lo), nonneg),
                hi: s.f64(e, "hi", Some(d.hi), positive),
                tol: s.f64(e, "tol", Some(d.tol), positive),
                reps_per_probe: s.u64(e, "reps_per_probe", Some(d.reps_per_probe as u64), 1)
                    as usize,
                p0: s.f64(e, "p0", Some(d.p0), open_unit),
                max_batches: s.u64(e, "max_batches", Some(d.max_batches as u64), 1) as usize,
                max_probes: s.u64(e, "max_probes", Some(d.max_probes as u64), 2) as usize,
            };
            if out.lo >= out.hi {
                e.push(
                    &s.child("hi"),
                    ErrorKind::Constraint,
                    format!("must exceed lo = {}", out.lo),
                );
            }
            s.finish(e);
            out
        }
        None => d,
    };
    CriticalCfg {
        lattice,
        r: o.f64(e, "r", None, nonneg),
        background,
        horizon: o.f64(e, "horizon", None, positive),
        start: start(o, e, &background),
        initial: points(o, e, "initial", lattice, true),
        search,
    }
}

fn axis(o: &mut Obj, e: &mut Errs, key: &str) -> Axis {
    match o.string(e, key, None).as_str() {
        "lambda" => Axis::Lambda,
        "r" => Axis::R,
        "alpha" => Axis::Alpha,
        "beta" => Axis::Beta,
        "" => Axis::Lambda,
        other => {
            e.push(
                &o.child(key),
                ErrorKind::Constraint,
                format!("unknown axis `{other}`, expected lambda, r, alpha or beta"),
            );
            Axis::Lambda
        }
    }
}

fn phase(o: &mut Obj, e: &mut Errs) -> PhaseCfg {
    let lattice = lattice(o, e);
    let base = match o.obj(e, "base") {
        Some(mut b) => {
            let p = DpPoint {
                lambda: b.f64(e, "lambda", None, nonneg),
                r: b.f64(e, "r", None, nonneg),
                alpha: b.f64(e, "alpha", None, nonneg),
                beta: b.f64(e, "beta", None, nonneg),
            };
            b.finish(e);
            p
        }
        None => {
            if !o.has("base") {
                e.push(".base", ErrorKind::Missing, "required");
            }
            DpPoint {
                lambda: 0.0,
                r: 0.0,
                alpha: 0.0,
                beta: 0.0,
            }
        }
    };
    let axis1 = axis(o, e, "axis1");
    let axis2 = axis(o, e, "axis2");
    if axis1 == axis2 && o.has("axis1") && o.has("axis2") {
        e.push(".axis2", ErrorKind::Constraint, "must differ from axis1");
    }
    let values1 = o.f64_list(e, "values1", None, nonneg);
    let values2 = o.f64_list(e, "values2", None, nonneg);
    let dp = BackgroundSpec::dynamical_percolation(1.0, 1.0, lattice.dim).expect("valid");
    let start = start(o, e, &dp);
    PhaseCfg {
        lattice,
        base,
        axis1,
        values1,
        axis2,
        values2,
        horizon: o.f64(e, "horizon", None, positive),
        reps: o.u64(e, "reps", None, 1) as usize,
        start,
        initial: points(o, e, "initial", lattice, true),
    }
}

fn duality(o: &mut Obj, e: &mut Errs) -> DualityCfg {
    let mode = o.string(e, "mode", Some("identity"));
    let lattice = lattice(o, e);
    match mode.as_str() {
        "distributional" => {
            let background = background(o, e, lattice.dim);
            if !background.is_dp() {
                e.push(
                    ".background",
                    ErrorKind::Constraint,
                    "distributional self-duality needs dynamical percolation",
                );
            }
            DualityCfg::Distributional {
                lattice,
                lambda: o.f64(e, "lambda", None, nonneg),
                r: o.f64(e, "r", None, nonneg),
                background,
                c: points(o, e, "c", lattice, false),
                a: points(o, e, "a", lattice, false),
                t: o.f64(e, "t", None, nonneg),
                reps: o.u64(e, "reps", None, 1) as usize,
            }
        }
        other => {
            if other != "identity" {
                e.push(
                    ".mode",
                    ErrorKind::Constraint,
                    format!("unknown mode `{other}`, expected identity or distributional"),
                );
            }
            DualityCfg::Identity {
                lattice,
                t_star: o.f64(e, "t_star", None, positive),
                lambda: o.f64(e, "lambda", None, nonneg),
                r: o.f64(e, "r", None, nonneg),
                alpha: o.f64(e, "alpha", None, nonneg),
                beta: o.f64(e, "beta", None, nonneg),
                runs: o.u64(e, "runs", None, 1) as usize,
            }
        }
    }
}

fn bounds(o: &mut Obj, e: &mut Errs) -> BoundsCfg {
    match o.string(e, "kind", None).as_str() {
        "coupling" => {
            let dim = o.u64(e, "dim", None, 1).max(1) as usize;
            let background = background(o, e, dim);
            if !background.is_dp() {
                e.push(
                    ".background",
                    ErrorKind::Constraint,
                    "the coupling-speed law is exact only for dynamical percolation",
                );
            }
            BoundsCfg::Coupling {
                background,
                t_grid: o.f64_list(e, "t_grid", None, nonneg),
                reps: o.u64(e, "reps", None, 1) as usize,
            }
        }
        "containment" => {
            let lattice = lattice(o, e);
            let background = background(o, e, lattice.dim);
            BoundsCfg::Containment {
                lattice,
                lambda: o.f64(e, "lambda", None, positive),
                r: o.f64(e, "r", Some(0.0), nonneg),
                background,
                horizon: o.f64(e, "horizon", None, positive),
                s_grid: o.f64_list(e, "s_grid", None, nonneg),
                reps: o.u64(e, "reps", None, 1) as usize,
            }
        }
        other => {
            if other != "hitting" && !other.is_empty() {
                e.push(
                    ".kind",
                    ErrorKind::Constraint,
                    format!("unknown kind `{other}`, expected hitting, coupling or containment"),
                );
            }
            let distances = o.u64_list(e, "distances", None, 1);
            BoundsCfg::Hitting {
                dim: o.u64(e, "dim", None, 1).max(1) as usize,
                lambda: o.f64(e, "lambda", None, positive),
                c: o.f64(e, "c", None, positive),
                distances: distances
                    .into_iter()
                    .map(|d| d.min(u32::MAX as u64) as u32)
                    .collect(),
                reps: o.u64(e, "reps", None, 1) as usize,
            }
        }
    }
}

fn blocks(o: &mut Obj, e: &mut Errs) -> BlocksCfg {
    let dim = o.u64(e, "dim", None, 1).max(1) as usize;
    let background = background(o, e, dim);
    if !background.is_dp() && o.has("background") {
        e.push(
            ".background",
            ErrorKind::Constraint,
            "block events are defined for dynamical percolation",
        );
    }
    let params = BlockParams {
        dim,
        lambda: o.f64(e, "lambda", None, nonneg),
        r: o.f64(e, "r", None, nonneg),
        spec: background,
        box_half_width: o
            .opt_u64(e, "box_half_width")
            .map(|h| h.min(i32::MAX as u64) as u32),
    };
    let mode = match o.string(e, "mode", Some("events")).as_str() {
        "scale" => {
            let limits = match o.obj(e, "limits") {
                Some(mut l) => {
                    let out = ScaleLimits {
                        max_n: l.u64(e, "max_n", None, 1) as u32,
                        max_l: l.u64(e, "max_l", None, 1) as u32,
                        max_t: l.f64(e, "max_t", None, |v| {
                            (v < 1.0).then(|| "must be at least 1".into())
                        }),
                    };
                    l.finish(e);
                    out
                }
                None => {
                    e.push(".limits", ErrorKind::Missing, "required in scale mode");
                    ScaleLimits {
                        max_n: 1,
                        max_l: 1,
                        max_t: 1.0,
                    }
                }
            };
            BlocksMode::Scale {
                epsilon: o.f64(e, "epsilon", None, open_unit),
                limits,
                reps: o.u64(e, "reps", None, 1) as usize,
            }
        }
        other => {
            if other != "events" {
                e.push(
                    ".mode",
                    ErrorKind::Constraint,
                    format!("unknown mode `{other}`, expected events or scale"),
                );
            }
            let names = o.string_list(e, "events", Some(&["A1", "A2", "A3"]));
            let events = names
                .iter()
                .enumerate()
                .filter_map(|(i, s)| match s.as_str() {
                    "A1" => Some(BlockEvent::A1),
                    "A2" => Some(BlockEvent::A2),
                    "A3" => Some(BlockEvent::A3),
                    other => {
                        e.push(
                            &format!(".events[{i}]"),
                            ErrorKind::Constraint,
                            format!("unknown event `{other}`, expected A1, A2 or A3"),
                        );
                        None
                    }
                })
                .collect();
            let to_u32 = |v: Vec<u64>| {
                v.into_iter()
                    .map(|x| x.min(u32::MAX as u64) as u32)
                    .collect()
            };
            BlocksMode::Events {
                events,
                n: to_u32(o.u64_list(e, "n", None, 1)),
                l: to_u32(o.u64_list(e, "l", None, 1)),
                t: o.f64_list(e, "t", None, positive),
                reps: o.u64(e, "reps", None, 1) as usize,
            }
        }
    };
    BlocksCfg { params, mode }
}

fn percolation(o: &mut Obj, e: &mut Errs) -> PercolationCfg {
    PercolationCfg {
        q: o.f64_list(e, "q", None, |v| {
            (!(0.0..=1.0).contains(&v)).then(|| format!("must lie in [0, 1], got {v}"))
        }),
        k_max: o.u64(e, "k_max", None, 1).min(u32::MAX as u64) as u32,
        reps: o.u64(e, "reps", None, 1) as usize,
    }
}

fn c1(o: &mut Obj, e: &mut Errs) -> C1Cfg {
    C1Cfg {
        lambda: o.f64(e, "lambda", None, positive),
        degree: o.u64(e, "degree", None, 1) as usize,
        rho: o.f64(e, "rho", Some(0.0), nonneg),
    }
}

fn background(o: &mut Obj, e: &mut Errs, dim: usize) -> BackgroundSpec {
    let fallback = BackgroundSpec::frozen(dim);
    let Some(mut b) = o.obj(e, "background") else {
        if !o.has("background") {
            e.push(&o.child("background"), ErrorKind::Missing, "required");
        }
        return fallback;
    };
    let kind = match b.string(e, "kind", None).as_str() {
        "dynamical-percolation" => BackgroundKind::DynamicalPercolation {
            alpha: b.f64(e, "alpha", None, nonneg),
            beta: b.f64(e, "beta", None, nonneg),
        },
        "noisy-voter" => BackgroundKind::NoisyVoter {
            alpha: b.f64(e, "alpha", None, nonneg),
            beta: b.f64(e, "beta", None, nonneg),
        },
        "ising" => BackgroundKind::Ising {
            beta: b.f64(e, "beta", None, nonneg),
        },
        "frozen" => BackgroundKind::Frozen,
        "" => return fallback,
        other => {
            e.push(
                &b.child("kind"),
                ErrorKind::Constraint,
                format!("unknown background `{other}`, expected dynamical-percolation, noisy-voter, ising or frozen"),
            );
            return fallback;
        }
    };
    let path = b.path.clone();
    b.finish(e);
    match BackgroundSpec::new(kind, dim) {
        Ok(s) => s,
        Err(err) => {
            e.push(&path, ErrorKind::Constraint, err.to_string());
            fallback
        }
    }
}

fn start(o: &mut Obj, e: &mut Errs, spec: &BackgroundSpec) -> StartMode {
    let s = match o.string(e, "start", Some("empty")).as_str() {
        "empty" => StartMode::Empty,
        "full" => StartMode::Full,
        "stationary" => StartMode::Stationary,
        "burn-in" => StartMode::BurnIn,
        other => {
            e.push(
                &o.child("start"),
                ErrorKind::Constraint,
                format!("unknown start `{other}`, expected empty, full, stationary or burn-in"),
            );
            StartMode::Empty
        }
    };
    match s {
        StartMode::Stationary if !spec.is_dp() => e.push(
            &o.child("start"),
            ErrorKind::Constraint,
            "the stationary law is only sampled exactly for dynamical percolation; use burn-in",
        ),
        StartMode::BurnIn if spec.burn_in_time().is_err() => e.push(
            &o.child("start"),
            ErrorKind::Constraint,
            "burn-in needs alpha_min + beta_min > 0",
        ),
        _ => {}
    }
    s
}

/// Lists of integer points inside the box; `default_origin` makes the key
/// optional with `[origin]` as the value.
fn points(
    o: &mut Obj,
    e: &mut Errs,
    key: &str,
    lat: Lattice,
    default_origin: bool,
) -> Vec<Vec<i32>> {
    let path = o.child(key);
    let Some(v) = o.take(key) else {
        if default_origin {
            return vec![vec![0; lat.dim]];
        }
        e.push(&path, ErrorKind::Missing, "required");
        return Vec::new();
    };
    let Some(list) = v.as_array() else {
        e.push(&path, ErrorKind::Type, "expected a list of points");
        return Vec::new();
    };
    if list.is_empty() {
        e.push(&path, ErrorKind::Constraint, "needs at least one point");
    }
    let hw = lat.half_width as i64;
    let mut out = Vec::new();
    for (i, p) in list.iter().enumerate() {
        let pp = format!("{path}[{i}]");
        let coords: Option<Vec<i64>> = p
            .as_array()
            .and_then(|a| a.iter().map(Value::as_i64).collect());
        match coords {
            None => e.push(&pp, ErrorKind::Type, "expected a list of integers"),
            Some(c) if c.len() != lat.dim => e.push(
                &pp,
                ErrorKind::Constraint,
                format!("has {} coordinates in dimension {}", c.len(), lat.dim),
            ),
            Some(c) if c.iter().any(|x| x.abs() > hw) => e.push(
                &pp,
                ErrorKind::Constraint,
                format!("lies outside the box [-{hw}, {hw}]^{}", lat.dim),
            ),
            Some(c) => out.push(c.into_iter().map(|x| x as i32).collect()),
        }
    }
    out
}

fn nonneg(v: f64) -> Option<String> {
    (!(v.is_finite() && v >= 0.0)).then(|| format!("must be finite and non-negative, got {v}"))
}

fn positive(v: f64) -> Option<String> {
    (!(v.is_finite() && v > 0.0)).then(|| format!("must be finite and positive, got {v}"))
}

fn open_unit(v: f64) -> Option<String> {
    (!(v > 0.0 && v < 1.0)).then(|| format!("must lie in (0, 1), got {v}"))
}

#[derive(Default)]
struct Errs(Vec<ConfigError>);

impl Errs {
    fn push(&mut self, path: &str, kind: ErrorKind, message: impl Into<String>) {
        self.0.push(ConfigError {
            path: path.to_string(),
            kind,
            message: message.into(),
        });
    }
}

/// One JSON object being read; every key asked for counts as known.
struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
    known: BTreeSet<String>,
}

impl<'a> Obj<'a> {
    fn new(path: String, map: &'a Map<String, Value>) -> Self {
        Self {
            path,
            map,
            known: BTreeSet::new(),
        }
    }

    fn child(&self, key: &str) -> String {
        format!("{}.{key}", self.path)
    }

    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn take(&mut self, key: &str) -> Option<&'a Value> {
        self.known.insert(key.to_string());
        self.map.get(key)
    }

    fn f64(
        &mut self,
        e: &mut Errs,
        key: &str,
        default: Option<f64>,
        check: impl Fn(f64) -> Option<String>,
    ) -> f64 {
        let path = self.child(key);
        match self.take(key) {
            None => {
                if default.is_none() {
                    e.push(&path, ErrorKind::Missing, "required");
                }
                default.unwrap_or(0.0)
            }
            Some(v) => match v.as_f64() {
                None => {
                    e.push(
                        &path,
                        ErrorKind::Type,
                        format!("expected a number, got {v}"),
                    );
                    0.0
                }
                Some(x) => {
                    if let Some(msg) = check(x) {
                        e.push(&path, ErrorKind::Constraint, msg);
                    }
                    x
                }
            },
        }
    }

    fn opt_f64(
        &mut self,
        e: &mut Errs,
        key: &str,
        check: impl Fn(f64) -> Option<String>,
    ) -> Option<f64> {
        self.has(key)
            .then(|| self.f64(e, key, None, check))
            .or_else(|| {
                self.known.insert(key.to_string());
                None
            })
    }

    fn u64(&mut self, e: &mut Errs, key: &str, default: Option<u64>, min: u64) -> u64 {
        let path = self.child(key);
        match self.take(key) {
            None => {
                if default.is_none() {
                    e.push(&path, ErrorKind::Missing, "required");
                }
                default.unwrap_or(min)
            }
            Some(v) => match v.as_u64() {
                None => {
                    e.push(
                        &path,
                        ErrorKind::Type,
                        format!("expected a non-negative integer, got {v}"),
                    );
                    min
                }
                Some(x) => {
                    if x < min {
                        e.push(
                            &path,
                            ErrorKind::Constraint,
                            format!("must be at least {min}, got {x}"),
                        );
                    }
                    x
                }
            },
        }
    }

    fn opt_u64(&mut self, e: &mut Errs, key: &str) -> Option<u64> {
        if self.has(key) {
            Some(self.u64(e, key, None, 0))
        } else {
            self.known.insert(key.to_string());
            None
        }
    }

    fn string(&mut self, e: &mut Errs, key: &str, default: Option<&str>) -> String {
        let path = self.child(key);
        match self.take(key) {
            None => {
                if default.is_none() {
                    e.push(&path, ErrorKind::Missing, "required");
                }
                default.unwrap_or("").to_string()
            }
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                e.push(
                    &path,
                    ErrorKind::Type,
                    format!("expected a string, got {v}"),
                );
                String::new()
            }
        }
    }

    fn opt_string(&mut self, e: &mut Errs, key: &str) -> Option<String> {
        if self.has(key) {
            Some(self.string(e, key, None))
        } else {
            self.known.insert(key.to_string());
            None
        }
    }

    fn list(&mut self, e: &mut Errs, key: &str, required: bool) -> Option<(&'a [Value], String)> {
        let path = self.child(key);
        match self.take(key) {
            None => {
                if required {
                    e.push(&path, ErrorKind::Missing, "required");
                }
                None
            }
            Some(Value::Array(a)) => {
                if a.is_empty() {
                    e.push(&path, ErrorKind::Constraint, "needs at least one value");
                }
                Some((a.as_slice(), path))
            }
            Some(v) => {
                e.push(&path, ErrorKind::Type, format!("expected a list, got {v}"));
                None
            }
        }
    }

    fn f64_list(
        &mut self,
        e: &mut Errs,
        key: &str,
        default: Option<&[f64]>,
        check: impl Fn(f64) -> Option<String>,
    ) -> Vec<f64> {
        let Some((items, path)) = self.list(e, key, default.is_none()) else {
            return default.map(<[f64]>::to_vec).unwrap_or_default();
        };
        let mut out = Vec::new();
        for (i, v) in items.iter().enumerate() {
            match v.as_f64() {
                None => e.push(
                    &format!("{path}[{i}]"),
                    ErrorKind::Type,
                    format!("expected a number, got {v}"),
                ),
                Some(x) => {
                    if let Some(msg) = check(x) {
                        e.push(&format!("{path}[{i}]"), ErrorKind::Constraint, msg);
                    }
                    out.push(x);
                }
            }
        }
        out
    }

    fn u64_list(&mut self, e: &mut Errs, key: &str, default: Option<&[u64]>, min: u64) -> Vec<u64> {
        let Some((items, path)) = self.list(e, key, default.is_none()) else {
            return default.map(<[u64]>::to_vec).unwrap_or_default();
        };
        let mut out = Vec::new();
        for (i, v) in items.iter().enumerate() {
            match v.as_u64() {
                None => e.push(
                    &format!("{path}[{i}]"),
                    ErrorKind::Type,
                    format!("expected a non-negative integer, got {v}"),
                ),
                Some(x) if x < min => e.push(
                    &format!("{path}[{i}]"),
                    ErrorKind::Constraint,
                    format!("must be at least {min}, got {x}"),
                ),
                Some(x) => out.push(x),
            }
        }
        out
    }

    fn string_list(&mut self, e: &mut Errs, key: &str, default: Option<&[&str]>) -> Vec<String> {
        let Some((items, path)) = self.list(e, key, default.is_none()) else {
            return default
                .unwrap_or_default()
                .iter()
                .map(|s| s.to_string())
                .collect();
        };
        let mut out = Vec::new();
        for (i, v) in items.iter().enumerate() {
            match v.as_str() {
                None => e.push(
                    &format!("{path}[{i}]"),
                    ErrorKind::Type,
                    format!("expected a string, got {v}"),
                ),
                Some(s) => out.push(s.to_string()),
            }
        }
        out
    }

    fn obj(&mut self, e: &mut Errs, key: &str) -> Option<Obj<'a>> {
        let path = self.child(key);
        match self.take(key)? {
            Value::Object(m) => Some(Obj::new(path, m)),
            v => {
                e.push(
                    &path,
                    ErrorKind::Type,
                    format!("expected an object, got {v}"),
                );
                None
            }
        }
    }

    fn finish(self, e: &mut Errs) {
        for k in self.map.keys() {
            if !self.known.contains(k) {
                let hint = closest(k, &self.known)
                    .map(|s| format!("; did you mean `{s}`?"))
                    .unwrap_or_default();
                e.push(
                    &self.child(k),
                    ErrorKind::UnknownKey,
                    format!("unknown key `{k}`{hint}"),
                );
            }
        }
    }
}

fn closest<'k>(key: &str, known: &'k BTreeSet<String>) -> Option<&'k str> {
    known
        .iter()
        .map(|k| (edit_distance(key, k), k))
        .filter(|(d, _)| *d <= 2)
        .min()
        .map(|(_, k)| k.as_str())
}

fn edit_distance(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut prev = row[0];
        row[0] = i + 1;
        for j in 0..b.len() {
            let cur = row[j + 1];
            row[j + 1] = (prev + (ca != b[j]) as usize).min(row[j] + 1).min(cur + 1);
            prev = cur;
        }
    }
    row[b.len()]
}
