use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use softland_cli::config::Origin;
use softland_cli::{resolve, run, Entries, RunError};

#[derive(Parser)]
#[command(name = "softland", version, about = "Simulate and optimize soft landings on yielding ground")]
struct Args {
    /// One of simulate, sweep, curves, bangbang, compare, cot.
    mode: String,

    /// Configuration file with `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a configuration entry; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads, 0 for automatic. Falls back to SOFTLAND_WORKERS.
    #[arg(long, env = "SOFTLAND_WORKERS")]
    workers: Option<usize>,
}

fn entries(args: &Args) -> Result<Entries, RunError> {
    let mut entries = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                path: path.clone(),
                source,
            })?;
            Entries::from_text(&text)?
        }
        None => Entries::default(),
    };
    entries.set("mode", &args.mode, Origin::Flag)?;
    for s in &args.set {
        entries.set_flag(s)?;
    }
    if let Some(out) = &args.out {
        entries.set("out", &out.display().to_string(), Origin::Flag)?;
    }
    if let Some(n) = args.workers {
        entries.set("workers", &n.to_string(), Origin::Flag)?;
    }
    Ok(entries)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = entries(&args)
        .and_then(|e| resolve(e).map_err(RunError::from))
        .and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            println!(
                "{}",
                json!({
                    "status": "ok",
                    "mode": summary["mode"],
                    "outputs": summary["outputs"],
                    "headline": summary["headline"],
                })
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "status": "error", "error": e.record() }));
            let code = if matches!(e, RunError::Config(_)) { 2 } else { 1 };
            ExitCode::from(code)
        }
    }
}
