use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use lorentzkit_cli::{diff, execute, ConfigError, Manifest, RunError, ScenarioConfig, Subcommand};

#[derive(Parser)]
#[command(name = "lorentzkit", version, about = "Deterministic scenario runs and manifest diffs")]
enum Cli {
    /// Run a scenario and write its artifacts and manifest.json.
    Run {
        config: PathBuf,
        #[arg(value_enum)]
        subcommand: Subcommand,
    },
    /// Compare two manifests field by field.
    Diff { a: PathBuf, b: PathBuf },
}

const EXIT_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run(config: &Path, sub: Subcommand) -> ExitCode {
    let text = match read(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cfg = match ScenarioConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            let kind = match e {
                ConfigError::Parse { .. } => "parse error",
                ConfigError::Catalog { .. } => "metric catalog miss",
                ConfigError::Invalid { .. } => "invalid config",
            };
            eprintln!("{kind}: {}:{e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(&cfg, sub) {
        Ok(m) => {
            for a in &m.assertions {
                let tag = if a.passed { "PASS" } else { "FAIL" };
                println!("{tag} {} = {:e} (limit {:e})", a.name, a.value, a.limit);
            }
            println!("wrote {} files and manifest.json to {}", m.files.len(), cfg.output.display());
            let failed = m.failures();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("failing assertions: {}", failed.join(", "));
                ExitCode::from(EXIT_FAILED)
            }
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("invalid config: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn load(path: &Path) -> Result<Manifest, String> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| format!("{}: not a manifest: {e}", path.display()))
}

fn compare(a: &Path, b: &Path) -> ExitCode {
    let (ma, mb) = match (load(a), load(b)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    let fields = match diff(&ma, &mb, &ma.config.diff) {
        Ok(f) => f,
        Err(e) => Cli::command().error(clap::error::ErrorKind::ArgumentConflict, e).exit(),
    };
    let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:e}"));
    for d in &fields {
        println!(
            "{} a={} b={} delta={} tol={:e}",
            d.field,
            show(d.a),
            show(d.b),
            show(d.delta()),
            d.tolerance
        );
    }
    if fields.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn main() -> ExitCode {
    match Cli::parse() {
        Cli::Run { config, subcommand } => run(&config, subcommand),
        Cli::Diff { a, b } => compare(&a, &b),
    }
}
