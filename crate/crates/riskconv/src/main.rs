use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskconv::commands::{self, BoundChoice, P0Choice, PolicyName};
use riskconv::{example, exit, CliError};
use riskconv_core::riccati::FixedPointOptions;
use serde::Serialize;

/// Convergence analysis of risk-sensitive Riccati equations.
#[derive(Parser)]
#[command(name = "riskconv", version)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct BoundArgs {
    /// Observer gain entries (column-major) for Sigma_rho; default is a bound search.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, requires = "rho")]
    gain: Option<Vec<f64>>,
    /// Rate rho for the observer bound.
    #[arg(long, requires = "gain")]
    rho: Option<f64>,
}

impl From<BoundArgs> for BoundChoice {
    fn from(b: BoundArgs) -> Self {
        BoundChoice {
            gain: b.gain,
            rho: b.rho,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Report thresholds, the observer bound and whether theta meets both conditions.
    Analyze {
        model: PathBuf,
        #[arg(long = "block-n")]
        block_n: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Iterate the risk-sensitive Riccati map and write eigenvalues per step.
    Trajectory {
        model: PathBuf,
        #[arg(long)]
        theta: f64,
        /// identity, sigma, or a JSON file holding the matrix.
        #[arg(long, default_value = "identity")]
        p0: P0Choice,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// CSV destination; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Iterate to the fixed point and report gains and closed-loop spectrum.
    FixedPoint {
        model: PathBuf,
        #[arg(long)]
        theta: f64,
        #[arg(long, default_value = "identity")]
        p0: P0Choice,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 10_000)]
        max_iter: usize,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Bisect for the largest theta with a valid fixed point.
    Breakdown {
        model: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        /// Defaults to theta_n.
        #[arg(long)]
        hi: Option<f64>,
        #[arg(long, default_value = "sigma-bound")]
        policy: PolicyName,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long = "max-iter", default_value_t = 10_000)]
        max_iter: usize,
        #[command(flatten)]
        bound: BoundArgs,
    },
    /// Search observer gains and rates for the largest positivity bound.
    BoundSearch {
        model: PathBuf,
        /// START:STEP:STOP or a comma-separated list.
        #[arg(long = "rho-grid")]
        rho_grid: Option<String>,
        /// LO:HI:COUNT for every gain entry.
        #[arg(long = "gain-grid", allow_hyphen_values = true)]
        gain_grid: Option<String>,
        #[arg(long = "no-refine")]
        no_refine: bool,
    },
    /// Reproduce the two-state example and write its CSVs and summary.
    PaperExample {
        #[arg(long = "out-dir", default_value = "paper-example")]
        out_dir: PathBuf,
    },
}

fn emit<T: Serialize + std::fmt::Display>(json: bool, report: &T) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    let written = if json {
        serde_json::to_string_pretty(report)
            .map_err(|e| CliError::Input(e.to_string()))
            .map(|s| writeln!(out, "{s}"))?
    } else {
        write!(out, "{report}")
    };
    written.map_err(|e| CliError::io("<stdout>", e))
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let json = cli.json;
    match cli.command {
        Command::Analyze {
            model,
            block_n,
            theta,
            bound,
        } => {
            let report = commands::analyze(&model, block_n, theta, &bound.into())?;
            emit(json, &report)?;
            Ok(report.exit_code())
        }
        Command::Trajectory {
            model,
            theta,
            p0,
            steps,
            out,
            bound,
        } => {
            let report =
                commands::trajectory(&model, theta, &p0, steps, out.as_deref(), &bound.into())?;
            if json {
                emit(true, &report)?;
            } else if out.is_none() {
                report.write_csv(io::stdout().lock())?;
            } else {
                emit(false, &report)?;
            }
            Ok(exit::OK)
        }
        Command::FixedPoint {
            model,
            theta,
            p0,
            tol,
            max_iter,
            out,
            bound,
        } => {
            let opts = FixedPointOptions { tol, max_iter };
            let report =
                commands::fixed_point_cmd(&model, theta, &p0, opts, out.as_deref(), &bound.into())?;
            emit(json, &report)?;
            Ok(exit::OK)
        }
        Command::Breakdown {
            model,
            lo,
            hi,
            policy,
            tol,
            max_iter,
            bound,
        } => {
            let opts = FixedPointOptions {
                max_iter,
                ..FixedPointOptions::default()
            };
            let report = commands::breakdown(&model, lo, hi, policy, tol, opts, &bound.into())?;
            emit(json, &report)?;
            Ok(exit::OK)
        }
        Command::BoundSearch {
            model,
            rho_grid,
            gain_grid,
            no_refine,
        } => {
            let report = commands::bound_search_cmd(
                &model,
                rho_grid.as_deref(),
                gain_grid.as_deref(),
                !no_refine,
            )?;
            emit(json, &report)?;
            Ok(exit::OK)
        }
        Command::PaperExample { out_dir } => {
            let summary = example::run(&out_dir)?;
            let value = summary.to_json();
            let mut out = io::stdout().lock();
            let text = if json {
                serde_json::to_string_pretty(&value).unwrap_or_default()
            } else {
                summary
                    .entries
                    .iter()
                    .filter(|(k, _)| k.ends_with("_pass"))
                    .map(|(k, v)| format!("{:<36} {}", k.trim_end_matches("_pass"), v))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            writeln!(out, "{text}").map_err(|e| CliError::io("<stdout>", e))?;
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::INPUT } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("riskconv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
