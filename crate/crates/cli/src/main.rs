//! Experiment runner: reads a JSON configuration, runs one command and
//! writes `manifest.json`, `result.json` and CSV tables to the output
//! directory.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;
use serde_json::json;

use commands::{Artifacts, Command};
use config::LoadedConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "sthomog",
    version,
    about = "Homogenization experiments for multiscale diffusions"
)]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Replaces the config's seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn write_csv(dir: &Path, name: &str, hash: &str, body: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(name), format!("# config_hash={hash}\n{body}"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON value serializes");
    text.push('\n');
    std::fs::write(path, text)
}

fn emit(out: &Path, command: Command, cfg: &LoadedConfig, art: &Artifacts) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    if let Some(result) = &art.result {
        let doc = json!({
            "command": command.name(),
            "config_hash": cfg.hash,
            "result": result,
        });
        write_json(&out.join("result.json"), &doc)?;
        files.push("result.json".to_string());
    }
    for (name, body) in &art.csv {
        write_csv(out, name, &cfg.hash, body)?;
        files.push(name.to_string());
    }
    Ok(files)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    if args.threads > 0 {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global();
    }

    let loaded = config::load(&args.config, args.seed_override);
    let out = args
        .out
        .clone()
        .or_else(|| loaded.as_ref().ok().and_then(|c| c.config.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let hash = loaded.as_ref().ok().map(|c| c.hash.clone());

    let outcome = loaded.and_then(|cfg| {
        std::fs::create_dir_all(&out)?;
        let art = commands::run(args.command, &cfg)?;
        let files = emit(&out, args.command, &cfg, &art)?;
        Ok((art.seeds, files))
    });

    let (status, seeds, files, code) = match &outcome {
        Ok((seeds, files)) => ("ok", seeds.clone(), files.clone(), 0),
        Err(err) => {
            let report = err.report(args.command.name(), hash.as_deref());
            let value = serde_json::to_value(&report).expect("report serializes");
            eprintln!("{}", serde_json::to_string(&value).expect("report serializes"));
            let mut files = Vec::new();
            if std::fs::create_dir_all(&out).is_ok() && write_json(&out.join("error.json"), &value).is_ok() {
                files.push("error.json".to_string());
            }
            ("error", Vec::new(), files, err.exit_code())
        }
    };

    let manifest = json!({
        "command": args.command.name(),
        "status": status,
        "config": args.config.display().to_string(),
        "config_hash": hash,
        "seeds": seeds,
        "versions": {
            "sthomog": env!("CARGO_PKG_VERSION"),
        },
        "threads": rayon::current_num_threads(),
        "started_unix": started_unix,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outputs": files,
    });
    if std::fs::create_dir_all(&out).is_ok() {
        if let Err(e) = write_json(&out.join("manifest.json"), &manifest) {
            eprintln!("cannot write manifest: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code as u8)
}
