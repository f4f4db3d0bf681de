mod run;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use run::{execute, Outcome};
use scenario::{preset, presets, Scenario};

const EXIT_FAILED_PROPERTY: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "mnflow", version, about = "Lagrangian compressible-flow experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more scenario files (or `preset:<name>`).
    Run {
        #[arg(required = true)]
        configs: Vec<String>,
        /// Worker threads for independent scenarios.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides the scenario's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Lint a scenario file without running it.
    Validate { config: String },
    /// Check the exponent inequalities for the time weights.
    Bookkeeping {
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        /// Time exponent; both 2 and 1 + sigma when omitted.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print a built-in scenario as JSON.
    Show { name: String },
    /// Print version information.
    Version,
}

fn load(spec: &str) -> Result<Scenario, String> {
    match spec.strip_prefix("preset:") {
        Some(name) => preset(name).ok_or_else(|| format!("unknown preset '{name}'")),
        None => Scenario::load(Path::new(spec)).map_err(|e| e.to_string()),
    }
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn write_outputs(dir: &Path, sc: &Scenario, out: &Outcome, started: f64, elapsed: f64) -> std::io::Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut report = serde_json::to_string_pretty(&out.report)?;
    report.push('\n');
    std::fs::write(dir.join(out.report_file), report)?;
    files.push(out.report_file.to_string());
    for t in &out.tables {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(dir.join(&t.file))?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        files.push(t.file.clone());
    }
    std::fs::write(dir.join("plot.gp"), &out.plot)?;
    files.push("plot.gp".into());
    let meta = json!({
        "scenario": sc.name,
        "mode": sc.mode,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "elapsed_seconds": elapsed,
        "failed_property": out.failed,
        "files": files,
    });
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(files)
}

/// Runs one scenario and returns its exit code.
fn run_one(spec: &str, output_dir: Option<&Path>) -> u8 {
    let sc = match load(spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let bad = sc.violations();
    if !bad.is_empty() {
        for v in &bad {
            eprintln!("error: {spec}: {}: {}", v.key, v.rule);
        }
        return 1;
    }
    let started = unix_seconds();
    let clock = Instant::now();
    let out = match execute(&sc) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", sc.name);
            return 1;
        }
    };
    let dir = output_dir.unwrap_or(&sc.output_dir).join(&sc.name);
    if let Err(e) = write_outputs(&dir, &sc, &out, started, clock.elapsed().as_secs_f64()) {
        eprintln!("error: writing {}: {e}", dir.display());
        return 1;
    }
    emit(&format!("{}: {} [{}]", sc.name, out.summary, dir.display()));
    if out.failed {
        EXIT_FAILED_PROPERTY
    } else {
        0
    }
}

/// Errors dominate property failures.
fn combine(codes: &[u8]) -> u8 {
    if codes.contains(&1) {
        1
    } else {
        codes.iter().copied().max().unwrap_or(0)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("MNFLOW_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { configs, jobs, output_dir } => {
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("error: cannot start {jobs} workers: {e}");
                    return ExitCode::from(1);
                }
            };
            let codes: Vec<u8> = pool.install(|| {
                use rayon::prelude::*;
                configs.par_iter().map(|c| run_one(c, output_dir.as_deref())).collect()
            });
            combine(&codes)
        }
        Command::Validate { config } => match load(&config) {
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
            Ok(sc) => {
                let bad = sc.violations();
                emit(&serde_json::to_string_pretty(&bad).unwrap_or_default());
                if bad.is_empty() {
                    0
                } else {
                    EXIT_FAILED_PROPERTY
                }
            }
        },
        Command::Bookkeeping { n, sigma, p, b } => {
            let ps: Vec<f64> = p.into_iter().collect();
            match run::bookkeeping_reports(n, sigma, &ps, b) {
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
                Ok(reps) => {
                    emit(&serde_json::to_string_pretty(&reps).unwrap_or_default());
                    if reps.iter().all(|r| r.holds) {
                        0
                    } else {
                        EXIT_FAILED_PROPERTY
                    }
                }
            }
        }
        Command::ListScenarios => {
            for (name, about, _) in presets() {
                emit(&format!("{name:<16} {about}"));
            }
            0
        }
        Command::Show { name } => match preset(&name) {
            Some(sc) => {
                emit(&serde_json::to_string_pretty(&sc).unwrap_or_default());
                0
            }
            None => {
                eprintln!("error: unknown preset '{name}'");
                1
            }
        },
        Command::Version => {
            emit(&format!("mnflow {}", env!("CARGO_PKG_VERSION")));
            0
        }
    };
    ExitCode::from(code)
}
