//! Batch runner: a JSON configuration selects one command, the command
//! writes `<out>/<command>.csv`, and `<out>/<command>.manifest.json`
//! records the configuration, seeds, timings and output digests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{from_value, ConfigError, RunConfig};
use crate::manifest::{now_ms, sha256_hex, write_atomic, OutputDigest, RunManifest, CODE_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub const OUT_DIR_ENV: &str = "CPERE_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n{}", list(.0))]
    Config(Vec<ConfigError>),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("internal failure: {0}")]
    Internal(String),
}

fn list(errs: &[ConfigError]) -> String {
    errs.iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Budget(_) => EXIT_BUDGET,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<cpere::Error> for CliError {
    fn from(e: cpere::Error) -> Self {
        use cpere::Error as E;
        let constraint = |path: String, msg: String| {
            CliError::Config(vec![ConfigError {
                path,
                kind: config::ErrorKind::Constraint,
                message: msg,
            }])
        };
        match e {
            E::Budget { .. } => CliError::Budget(e.to_string()),
            E::Numerical(_) => CliError::Internal(e.to_string()),
            E::Parameter { ref name, .. } => constraint(format!(".{name}"), e.to_string()),
            _ => constraint(String::new(), e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

/// Output location: the flag, then the config's `out_dir`, then the
/// environment, then `cpere-out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cpere-out"))
}

pub struct RunReport {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: RunManifest,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.partial {
            EXIT_BUDGET
        } else {
            EXIT_OK
        }
    }
}

pub fn paths(out: &Path, command: &str) -> (PathBuf, PathBuf) {
    (
        out.join(format!("{command}.csv")),
        out.join(format!("{command}.manifest.json")),
    )
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs the command and returns the CSV bytes with the table behind them,
/// without writing anything.
pub fn compute(cfg: &RunConfig) -> Result<(Vec<u8>, commands::Table), CliError> {
    commands::check_budget(cfg)?;
    let table = in_pool(cfg.threads, || commands::execute(cfg))??;
    Ok((table.to_csv()?, table))
}

/// Runs the command and writes the CSV, then the manifest.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunReport, CliError> {
    let started = now_ms();
    let (csv, table) = compute(cfg)?;
    let name = cfg.command.name();
    let (csv_path, manifest_path) = paths(out, name);
    write_atomic(&csv_path, &csv)?;
    let finished = now_ms();
    let mut flags = table.flags;
    if let Some(h) = cfg.budget.wall_clock_hint_s {
        let took = (finished - started) as f64 / 1000.0;
        if took > h {
            flags.push(format!("wall clock {took:.1} s exceeded the hint of {h} s"));
        }
    }
    let manifest = RunManifest {
        command: name.into(),
        config: cfg.echo.clone(),
        code_version: CODE_VERSION.into(),
        seed: cfg.seed,
        seed_rule: cpere::seed::SEED_RULE.into(),
        rows: table.seeds,
        started_unix_ms: started,
        finished_unix_ms: finished,
        outputs: vec![OutputDigest {
            file: csv_path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .into(),
            bytes: csv.len() as u64,
            sha256: sha256_hex(&csv),
        }],
        partial: table.partial,
        flags,
        result: table.result,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(&manifest_path, text.as_bytes())?;
    Ok(RunReport {
        csv_path,
        manifest_path,
        manifest,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verification {
    pub file: String,
    pub expected: String,
    pub actual: String,
}

impl Verification {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

/// Reruns the configuration echoed in a manifest and compares the digest of
/// the regenerated CSV with the recorded one.
pub fn verify(manifest_path: &Path) -> Result<Verification, CliError> {
    let m = RunManifest::read(manifest_path)?;
    let cfg = from_value(m.config.clone()).map_err(CliError::Config)?;
    let (csv, _) = compute(&cfg)?;
    let out = m
        .outputs
        .first()
        .ok_or_else(|| CliError::Internal("manifest lists no outputs".into()))?;
    if let Some(dir) = manifest_path.parent() {
        let on_disk = dir.join(&out.file);
        if on_disk.exists() && sha256_hex(&fs::read(&on_disk)?) != out.sha256 {
            return Err(CliError::Internal(format!(
                "{} no longer matches its manifest digest",
                on_disk.display()
            )));
        }
    }
    Ok(Verification {
        file: out.file.clone(),
        expected: out.sha256.clone(),
        actual: sha256_hex(&csv),
    })
}
