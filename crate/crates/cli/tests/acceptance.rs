//! Acceptance run: one PASS/FAIL line per criterion. Criteria that produce
//! tables go through the batch runner, so their CSVs and manifests land in
//! the target temp directory and the last criterion regenerates each one
//! from its manifest.
//!
//! The process exits 0 even when a criterion fails; the lines are the
//! result. Set `CPERE_ACCEPTANCE_STRICT=1` to turn failures into a nonzero
//! exit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cpere::analysis::estimate::Estimate;
use cpere::analysis::growth::solve_c1;
use cpere::analysis::pathwise::{coupling_suite, SuiteConfig};
use cpere::analysis::survival::condition_block_curve;
use cpere::background::{sample_stationary_dp, BackgroundSpec};
use cpere::engine::RunParams;
use cpere::lattice::build_box;
use cpere_cli::config::from_value;
use cpere_cli::{run, verify, RunReport};
use serde_json::{json, Value};

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

struct Ctx {
    root: PathBuf,
    manifests: Vec<PathBuf>,
}

impl Ctx {
    /// Runs a configuration into its own directory and returns the parsed CSV.
    fn cli(&mut self, tag: &str, cfg: Value) -> Result<(RunReport, Vec<Vec<String>>), String> {
        let dir = self.root.join(tag);
        let cfg = from_value(cfg).map_err(|e| format!("{e:?}"))?;
        let rep = run(&cfg, &dir).map_err(|e| e.to_string())?;
        self.manifests.push(rep.manifest_path.clone());
        let rows = read_csv(&rep.csv_path);
        Ok((rep, rows))
    }
}

fn read_csv(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).expect("csv");
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(
        r.records()
            .map(|x| x.unwrap().iter().map(String::from).collect()),
    );
    rows
}

fn col(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = rows[0]
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name}"));
    rows[1..].iter().map(|r| r[i].clone()).collect()
}

fn colf(rows: &[Vec<String>], name: &str) -> Vec<f64> {
    col(rows, name).iter().map(|s| s.parse().unwrap()).collect()
}

fn dp(alpha: f64, beta: f64) -> Value {
    json!({"kind": "dynamical-percolation", "alpha": alpha, "beta": beta})
}

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn(&mut Ctx) -> Outcome);

fn c1_coupling_suite(_: &mut Ctx) -> Outcome {
    let mut bad = Vec::new();
    let mut total = 0;
    for (dim, hw, t, seed) in [(1, 50, 20.0, 101), (2, 12, 10.0, 102)] {
        let cfg = SuiteConfig {
            dim,
            half_width: hw,
            horizon: t,
            lambda: 2.0,
            r: 1.0,
            runs: 1000,
            seed,
        };
        for c in coupling_suite(&cfg).map_err(|e| e.to_string())? {
            total += c.runs;
            if c.violations > 0 {
                bad.push(format!("d={dim} {}: {}", c.name, c.violations));
            }
        }
    }
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            format!("0 violations in {total} check-runs")
        } else {
            bad.join("; ")
        },
    ))
}

fn c2_duality(ctx: &mut Ctx) -> Outcome {
    let (rep, _) = ctx.cli(
        "duality-identity",
        json!({"command": "duality", "seed": 201, "dim": 1, "half_width": 30, "t_star": 10.0,
               "lambda": 2.0, "r": 1.0, "alpha": 1.0, "beta": 1.0, "runs": 1000}),
    )?;
    let r = &rep.manifest.result;
    let v = r["violations"].as_u64().unwrap();
    Ok((
        v == 0,
        format!(
            "{v} violations in {} runs, {} with both indicators 1",
            r["runs"], r["both_hit"]
        ),
    ))
}

fn c3_self_duality(ctx: &mut Ctx) -> Outcome {
    let (rep, rows) = ctx.cli(
        "self-duality",
        json!({"command": "duality", "mode": "distributional", "seed": 301, "dim": 1, "half_width": 40,
               "lambda": 2.0, "r": 1.0, "background": dp(1.0, 1.0), "c": [[0]], "a": [[5]], "t": 8.0, "reps": 20000}),
    )?;
    let z = rep.manifest.result["z"].as_f64().unwrap();
    let p = colf(&rows, "p_hat");
    Ok((
        z.abs() <= 3.0,
        format!("forward {:.4} backward {:.4} z = {z:.3}", p[0], p[1]),
    ))
}

fn c4_dp_analytics(ctx: &mut Ctx) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let g = build_box(1, 50).unwrap();
    for (a, b) in [(1.0, 1.0), (3.0, 1.0)] {
        let samples = 200u64;
        let open: u64 = (0..samples)
            .map(|i| sample_stationary_dp(&g, a, b, 4000 + i).len() as u64)
            .sum();
        let e = Estimate::from_counts(open, samples * g.n_edges() as u64, 0, 0, 0)
            .map_err(|e| e.to_string())?;
        let w = e.within(a / (a + b), 3.0);
        ok &= w;
        notes.push(format!(
            "density({a},{b}) {:.4} vs {:.4}",
            e.p_hat,
            a / (a + b)
        ));
    }
    let (_, rows) = ctx.cli(
        "coupling-speed",
        json!({"command": "bounds", "kind": "coupling", "seed": 401, "dim": 1, "background": dp(1.0, 1.0),
               "t_grid": [0.5, 1.0, 2.0], "reps": 20000}),
    )?;
    for ((t, p), (x, w)) in colf(&rows, "t")
        .iter()
        .zip(colf(&rows, "p_hat"))
        .zip(colf(&rows, "exact").iter().zip(col(&rows, "within")))
    {
        ok &= w == "true";
        notes.push(format!("uncoupled({t}) {p:.4} vs {x:.4}"));
    }
    for r in [0.5, 1.0] {
        let (_, rows) = ctx.cli(
            &format!("blocks-lambda0-r{r}"),
            json!({"command": "blocks", "seed": 402, "dim": 1, "lambda": 0.0, "r": r, "background": dp(1.0, 1.0),
                   "events": ["A1"], "n": [1, 2], "l": [3], "t": [1.0, 2.0], "reps": 10000}),
        )?;
        let n = colf(&rows, "n");
        let t = colf(&rows, "t");
        let lo = colf(&rows, "p_hat");
        let hw = colf(&rows, "half_width");
        for i in 0..n.len() {
            let exact = (-r * (t[i] + 1.0) * (2.0 * n[i] + 1.0)).exp();
            let sigma = (exact * (1.0 - exact) / 10000.0).sqrt().max(1e-12);
            let w = (lo[i] - exact).abs() <= 3.0 * sigma;
            ok &= w;
            if !w {
                notes.push(format!(
                    "A1 n={} T={} r={r}: {} vs {exact:.5} (hw {})",
                    n[i], t[i], lo[i], hw[i]
                ));
            }
        }
    }
    notes.push("8 closed-form block cases".into());
    Ok((ok, notes.join(", ")))
}

fn c5_c1(ctx: &mut Ctx) -> Outcome {
    let t0 = Instant::now();
    let mut worst_res = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut mono = true;
    for degree in [2, 4, 6] {
        let mut prev = f64::INFINITY;
        for lam in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let g = solve_c1(lam, degree, 0.0).map_err(|e| e.to_string())?;
            worst_res = worst_res.max(g.residual);
            worst_gap = worst_gap.max((g.c1 - g.via_bisection).abs());
            mono &= g.c1 < prev;
            prev = g.c1;
        }
    }
    let mut deg1 = 0.0f64;
    for lam in [0.5f64, 1.0, 2.0, 4.0, 8.0] {
        deg1 = deg1.max((solve_c1(lam, 1, 0.0).map_err(|e| e.to_string())?.c1 - 1.0 / lam).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    let (_, rows) = ctx.cli(
        "c1",
        json!({"command": "c1", "lambda": 1.0, "degree": 2, "rho": 0.0}),
    )?;
    let c1 = colf(&rows, "c1")[0];
    let ok = worst_res <= 1e-10 && worst_gap <= 1e-10 && mono && deg1 <= 1e-10 && secs <= 1.0;
    Ok((
        ok,
        format!("residual {worst_res:.1e}, gap {worst_gap:.1e}, monotone {mono}, degree-1 error {deg1:.1e}, {secs:.3} s; c1(1,2,0) = {c1}"),
    ))
}

fn c6_hitting(ctx: &mut Ctx) -> Outcome {
    let t0 = Instant::now();
    let (_, rows) = ctx.cli(
        "hitting",
        json!({"command": "bounds", "kind": "hitting", "seed": 601, "dim": 1, "lambda": 1.0, "c": 0.1,
               "distances": [5, 10, 15, 20], "reps": 10000}),
    )?;
    let secs = t0.elapsed().as_secs_f64();
    let within = col(&rows, "within").iter().all(|w| w == "true");
    let parts: Vec<String> = colf(&rows, "distance")
        .iter()
        .zip(colf(&rows, "p_hat"))
        .zip(colf(&rows, "bound"))
        .map(|((d, p), b)| format!("d={d}: {p:.4} <= {b:.3e}"))
        .collect();
    Ok((
        within && secs <= 120.0,
        format!("{} ({secs:.1} s)", parts.join(", ")),
    ))
}

fn c7_critical(ctx: &mut Ctx) -> Outcome {
    let t0 = Instant::now();
    let (rep, rows) = ctx.cli(
        "critical-classical",
        json!({"command": "critical", "seed": 701, "dim": 1, "half_width": 200, "r": 1.0, "horizon": 100.0,
               "start": "full", "background": {"kind": "frozen"},
               "search": {"lo": 0.0, "hi": 4.0, "tol": 0.3, "reps_per_probe": 500}}),
    )?;
    let secs = t0.elapsed().as_secs_f64();
    let r = &rep.manifest.result;
    let (lo, hi) = (
        r["lambda_lo"].as_f64().unwrap(),
        r["lambda_hi"].as_f64().unwrap(),
    );
    let ok = hi - lo <= 0.3 && lo <= 1.65 && 1.65 <= hi && secs <= 1200.0;
    Ok((
        ok,
        format!(
            "bracket [{lo}, {hi}] after {} probes ({secs:.0} s); {}",
            rows.len() - 1,
            r["statement"].as_str().unwrap()
        ),
    ))
}

fn c8_phase(ctx: &mut Ctx) -> Outcome {
    let t0 = Instant::now();
    let lambdas: Vec<f64> = (1..=8).map(|i| 0.5 * i as f64).collect();
    let betas: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let (rep, _) = ctx.cli(
        "phase-scan",
        json!({"command": "phase-scan", "seed": 801, "dim": 1, "half_width": 40,
               "base": {"lambda": 1.0, "r": 1.0, "alpha": 1.0, "beta": 1.0},
               "axis1": "lambda", "values1": lambdas, "axis2": "beta", "values2": betas,
               "horizon": 10.0, "reps": 300, "start": "stationary"}),
    )?;
    let viol = rep.manifest.result["monotonicity_violations_3sigma"]
        .as_u64()
        .unwrap();
    let g = build_box(1, 60).unwrap();
    let spec = BackgroundSpec::dynamical_percolation(1.0, 0.5, 1).map_err(|e| e.to_string())?;
    let p = RunParams::new(&g, 3.0, 1.0, spec, 10.0, 802).map_err(|e| e.to_string())?;
    let mut last = Vec::new();
    for n in [1, 2, 4] {
        let c = condition_block_curve(&p, n, &[0.0, 5.0, 10.0], 2000, None)
            .map_err(|e| e.to_string())?;
        last.push(c[c.len() - 1].1.p_hat);
    }
    let increasing = last.windows(2).all(|w| w[0] < w[1]);
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        viol <= 2 && increasing && secs <= 1800.0,
        format!("{viol} violations beyond 3 sigma over 64 points; block curve at T=10 for n=1,2,4: {last:?} ({secs:.0} s)"),
    ))
}

fn c9_percolation(ctx: &mut Ctx) -> Outcome {
    let (_, rows) = ctx.cli(
        "percolation",
        json!({"command": "percolation", "seed": 901, "q": [0.3, 0.6, 0.9], "k_max": 100, "reps": 1000}),
    )?;
    let p = colf(&rows, "p_hat");
    let ok = p.windows(2).all(|w| w[0] <= w[1]) && p[2] > 0.5;
    Ok((ok, format!("survival to k=100 at q=0.3,0.6,0.9: {p:?}")))
}

fn c10_determinism(ctx: &mut Ctx) -> Outcome {
    let mut bad = Vec::new();
    for m in &ctx.manifests {
        match verify(m) {
            Ok(v) if v.matches() => {}
            Ok(v) => bad.push(format!(
                "{} digest {} != {}",
                m.display(),
                v.actual,
                v.expected
            )),
            Err(e) => bad.push(format!("{}: {e}", m.display())),
        }
    }
    let n = ctx.manifests.len();
    Ok((
        bad.is_empty() && n > 0,
        if bad.is_empty() {
            format!("{n} CSVs regenerated byte-identically")
        } else {
            bad.join("; ")
        },
    ))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a name filter
    // that matches nothing here skips the run.
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    let _ = std::fs::remove_dir_all(&root);
    let mut ctx = Ctx {
        root: root.clone(),
        manifests: Vec::new(),
    };
    let criteria: [Criterion; 10] = [
        ("coupling suite", c1_coupling_suite),
        ("duality identity", c2_duality),
        ("distributional self-duality", c3_self_duality),
        ("dynamical percolation analytics", c4_dp_analytics),
        ("growth constant solver", c5_c1),
        ("hitting-time bound", c6_hitting),
        ("classical contact process limit", c7_critical),
        ("phase-structure probes", c8_phase),
        ("oriented percolation", c9_percolation),
        ("determinism", c10_determinism),
    ];
    let mut lines = Vec::new();
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let t0 = Instant::now();
        let (pass, detail) = match f(&mut ctx) {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        let l = Line {
            id: i + 1,
            name,
            pass,
            detail,
            secs: t0.elapsed().as_secs_f64(),
        };
        println!(
            "{} [{}] {}: {} [{:.1} s]",
            if l.pass { "PASS" } else { "FAIL" },
            l.id,
            l.name,
            l.detail,
            l.secs
        );
        lines.push(l);
    }
    let passed = lines.iter().filter(|l| l.pass).count();
    println!(
        "acceptance: {passed}/{} criteria passed; outputs in {}",
        lines.len(),
        root.display()
    );
    if passed < lines.len() && std::env::var("CPERE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
