use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cpere_cli::config::{parse_config, Overrides};
use cpere_cli::{resolve_out_dir, run, verify, CliError, EXIT_INTERNAL, EXIT_OK};

/// Contact processes in evolving random environments: batch runs from a JSON
/// configuration. Exit codes: 0 ok, 2 configuration, 3 budget, 4 internal.
#[derive(Parser, Debug)]
#[command(name = "cpere", version)]
struct Args {
    /// Configuration file, `-` for stdin, or an inline JSON object.
    #[arg(long, required_unless_present = "verify")]
    config: Option<String>,
    /// Root seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: config `out_dir`, then $CPERE_OUT_DIR, then ./cpere-out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replica worker threads [default: config `threads`, then all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Validate the configuration and budgets, then exit.
    #[arg(long)]
    dry_run: bool,
    /// Rerun the configuration in a manifest and check the CSV digest.
    #[arg(long, conflicts_with = "config")]
    verify: Option<PathBuf>,
}

fn read_config(arg: &str) -> std::io::Result<String> {
    if arg == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        fs::read_to_string(arg)
    }
}

fn main_inner(args: Args) -> Result<i32, CliError> {
    if let Some(m) = &args.verify {
        let v = verify(m)?;
        println!("{}: expected {} got {}", v.file, v.expected, v.actual);
        return Ok(if v.matches() { EXIT_OK } else { EXIT_INTERNAL });
    }
    let arg = args.config.as_deref().unwrap_or_default();
    let text = read_config(arg).map_err(|e| {
        CliError::Config(vec![cpere_cli::config::ConfigError {
            path: String::new(),
            kind: cpere_cli::config::ErrorKind::Syntax,
            message: format!("cannot read {arg}: {e}"),
        }])
    })?;
    let mut cfg = parse_config(&text, &Overrides { seed: args.seed }).map_err(CliError::Config)?;
    if args.threads == Some(0) {
        return Err(CliError::Config(vec![cpere_cli::config::ConfigError {
            path: "--threads".into(),
            kind: cpere_cli::config::ErrorKind::Constraint,
            message: "must be at least 1".into(),
        }]));
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    let out = resolve_out_dir(args.out.as_deref(), &cfg);
    if args.dry_run {
        cpere_cli::commands::check_budget(&cfg)?;
        let (replicas, events) = cpere_cli::commands::plan(&cfg);
        println!(
            "configuration valid: command {}, up to {replicas} replica runs",
            cfg.command.name()
        );
        if let Some(ev) = events {
            println!("expected events per timeline: {ev:.3e}");
        }
        println!("outputs would go to {}", out.display());
        return Ok(EXIT_OK);
    }
    let report = run(&cfg, &out)?;
    println!(
        "wrote {} and {}",
        report.csv_path.display(),
        report.manifest_path.display()
    );
    for f in &report.manifest.flags {
        eprintln!("note: {f}");
    }
    if report.manifest.partial {
        eprintln!("budget exceeded: partial output");
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match main_inner(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
