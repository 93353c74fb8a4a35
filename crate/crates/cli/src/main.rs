//! `kp5 <experiment> [--key=value ...] [--config path] --out dir`

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use clap::Parser;
use kp5_core::runs::{run, Outcome};
use serde::Serialize;

use config::{parse_config, parse_file, ExperimentConfig};

/// Runs one solver or estimate experiment and writes its artifacts.
#[derive(Parser, Debug)]
#[command(name = "kp5", version)]
struct Cli {
    /// solve, scatter, roundtrip, strichartz, bilinear, resonance,
    /// modulation, kernel, tailshrink or norms-selftest
    experiment: String,
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    nx: Option<String>,
    #[arg(long)]
    ny: Option<String>,
    #[arg(long)]
    lx: Option<String>,
    #[arg(long)]
    ly: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long = "t_max")]
    t_max: Option<String>,
    /// Time step, or `auto` for the phase-step rule.
    #[arg(long)]
    dt: Option<String>,
    #[arg(long = "small_data_delta")]
    small_data_delta: Option<String>,
    #[arg(long = "picard_tol")]
    picard_tol: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

impl Cli {
    fn flags(&self) -> BTreeMap<String, String> {
        let all = [
            ("nx", &self.nx),
            ("ny", &self.ny),
            ("lx", &self.lx),
            ("ly", &self.ly),
            ("alpha", &self.alpha),
            ("t_max", &self.t_max),
            ("dt", &self.dt),
            ("small_data_delta", &self.small_data_delta),
            ("picard_tol", &self.picard_tol),
            ("seed", &self.seed),
        ];
        all.into_iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    version: String,
    wall_time_s: f64,
    pass: bool,
    artifacts: Vec<&'a str>,
}

/// `v<crate version>` plus the source checkout, in `git describe` style when available.
fn version() -> String {
    let base = format!("v{}", env!("CARGO_PKG_VERSION"));
    let out = Command::new("git").args(["describe", "--always", "--dirty"]).current_dir(env!("CARGO_MANIFEST_DIR")).output();
    match out {
        Ok(o) if o.status.success() => format!("{base}-g{}", String::from_utf8_lossy(&o.stdout).trim()),
        _ => base,
    }
}

fn write_outputs(dir: &Path, cfg: &ExperimentConfig, outcome: &Outcome, wall: f64) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for a in &outcome.artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes)?;
    }
    std::fs::write(dir.join("summary.json"), outcome.summary.to_json())?;
    let manifest = Manifest {
        config: cfg,
        version: version(),
        wall_time_s: wall,
        pass: outcome.pass(),
        artifacts: outcome.artifacts.iter().map(|a| a.name.as_str()).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("manifest.json"), json)
}

fn usage(msg: &str) -> ExitCode {
    eprintln!("kp5: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let file = match &cli.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(text) => match parse_file(&text) {
                Ok(m) => m,
                Err(e) => return usage(&e),
            },
            Err(e) => return usage(&format!("cannot read {}: {e}", p.display())),
        },
        None => BTreeMap::new(),
    };
    let cfg = match parse_config(&cli.experiment, &file, &cli.flags(), cli.out.clone()) {
        Ok(c) => c,
        Err(e) => return usage(&e),
    };
    let start = Instant::now();
    let outcome = match run(cfg.experiment, &cfg.run) {
        Ok(o) => o,
        Err(e) => return usage(&e.to_string()),
    };
    let wall = start.elapsed().as_secs_f64();
    if let Err(e) = write_outputs(&cfg.output_dir, &cfg, &outcome, wall) {
        return usage(&format!("cannot write to {}: {e}", cfg.output_dir.display()));
    }
    for c in &outcome.checks {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.source, c.detail);
    }
    if outcome.pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}
