use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use kmfg::cli_io::{compare, diagnose_checkpoint, parse_manifest, run_manifest, write_field_csv, Checkpoint};
use kmfg::oracle::{kolmogorov_density, KineticGaussian};
use kmfg::phase_grid::{build_grid, GridConfig, DEFAULT_MAX_CELLS};
use kmfg::{KmfgError, Result};

#[derive(Parser)]
#[command(name = "kmfg", version, about = "Kinetic mean field game solver and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coupled system described by a JSON manifest.
    Solve {
        manifest: PathBuf,
        /// Output directory, overriding `output_dir` in the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the diagnostics suite on a density checkpoint.
    Diagnose {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Final time of the stored series.
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distances between two checkpoints, per time level.
    Compare { a: PathBuf, b: PathBuf },
    /// Closed-form reference solutions.
    Oracle {
        #[command(subcommand)]
        oracle: Oracle,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    All,
}

#[derive(Subcommand)]
enum Oracle {
    /// Free kinetic Gaussian at time `t`, periodized in x.
    Kolmogorov {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 64)]
        n_x: usize,
        #[arg(long, default_value_t = 64)]
        n_v: usize,
        #[arg(long, default_value_t = 2.0)]
        l_x: f64,
        #[arg(long, default_value_t = 5.0)]
        l_v: f64,
        #[arg(long, default_value_t = 0.0)]
        mean_x: f64,
        #[arg(long, default_value_t = 0.0)]
        mean_v: f64,
        /// Initial width in x; 0 gives a point source.
        #[arg(long, default_value_t = 0.0)]
        sigma_x: f64,
        #[arg(long, default_value_t = 0.0)]
        sigma_v: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"))
}

fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { manifest, out } => {
            let m = parse_manifest(&read_to_string(&manifest)?)?;
            let outcome = run_manifest(&m, out.as_deref())?;
            println!("{}", to_json(&outcome));
            Ok(outcome.exit_code)
        }
        Command::Diagnose {
            checkpoint,
            suite: Suite::All,
            horizon,
            out,
        } => {
            let report = diagnose_checkpoint(&checkpoint, horizon, out.as_deref())?;
            println!("{}", to_json(&report));
            Ok(if report.hard_ok() { 0 } else { 1 })
        }
        Command::Compare { a, b } => {
            let report = compare(&Checkpoint::read(&a)?, &Checkpoint::read(&b)?)?;
            println!("{}", to_json(&report));
            Ok(0)
        }
        Command::Oracle {
            oracle:
                Oracle::Kolmogorov {
                    t,
                    d,
                    n_x,
                    n_v,
                    l_x,
                    l_v,
                    mean_x,
                    mean_v,
                    sigma_x,
                    sigma_v,
                    out,
                    csv,
                },
        } => {
            if !(t.is_finite() && t >= 0.0) {
                return Err(KmfgError::InvalidArgument(format!("t must be nonnegative, got {t}")));
            }
            let grid = build_grid(&GridConfig {
                d,
                t_final: t.max(f64::MIN_POSITIVE),
                n_t: 1,
                l_x,
                n_x,
                l_v,
                n_v,
                max_cells: DEFAULT_MAX_CELLS,
            })?;
            let law = KineticGaussian::isotropic(mean_x, mean_v, sigma_x, sigma_v);
            let f = kolmogorov_density(&grid, t, &law)?;
            Checkpoint::from_fields(std::slice::from_ref(&f))?.write(&out)?;
            if let Some(path) = csv {
                write_field_csv(&path, &f)?;
            }
            println!("{}", to_json(&json!({ "t": t, "out": out, "min": f.min(), "max": f.max() })));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", to_json(&json!({ "status": "error", "reason": e.reason(), "message": e.to_string() })));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
