use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mixhess_cli::app::{self, AppError, SweepParam};
use mixhess_cli::config::RunConfig;

const EXIT_AUDIT: u8 = 3;

#[derive(Parser)]
#[command(name = "mixhess", version, about = "Neumann problem solver for mixed Hessian equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration
    Run {
        config: PathBuf,
        /// output directory (overrides `output.dir`)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_audit: bool,
    },
    /// Solve a configuration repeatedly over one parameter
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        param: Param,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_audit: bool,
    },
    /// Seeded property checks of the pointwise algebra
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    H,
    EpsMin,
}

fn load(path: &Path, out: Option<PathBuf>, no_audit: bool) -> Result<(RunConfig, PathBuf, bool), AppError> {
    let cfg = RunConfig::load(path)?;
    let out = out.or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("mixhess-out"));
    let audits = cfg.audits.enabled && !no_audit;
    Ok((cfg, out, audits))
}

fn fail(e: AppError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, no_audit } => {
            let (cfg, out, audits) = match load(&config, out, no_audit) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            match app::run(&cfg, &out, audits) {
                Ok(s) => {
                    println!("c = {:e} (last level {:e})", s.c, s.c_last);
                    println!("{} levels, {} Newton iterations", s.levels, s.newton_iterations);
                    if let Some(e) = s.linf_error {
                        println!("max error against reference = {e:e}");
                    }
                    println!("outputs in {}", out.display());
                    match s.audits_passed {
                        Some(false) => {
                            eprintln!("audit failure, see {}", out.join("audit.txt").display());
                            ExitCode::from(EXIT_AUDIT)
                        }
                        _ => ExitCode::SUCCESS,
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Sweep { config, param, values, out, no_audit } => {
            let (cfg, out, audits) = match load(&config, out, no_audit) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            let param = match param {
                Param::H => SweepParam::H,
                Param::EpsMin => SweepParam::EpsMin,
            };
            match app::sweep(&cfg, param, &values, &out, audits) {
                Ok(runs) => {
                    print!("{}", std::fs::read_to_string(out.join("sweep.csv")).unwrap_or_default());
                    if runs.iter().any(|r| r.audits_passed == Some(false)) {
                        ExitCode::from(EXIT_AUDIT)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::Check { seed, samples } => {
            let lines = app::check(seed, samples);
            for l in &lines {
                println!("{:<20} {} {}", l.name, if l.passed { "PASS" } else { "FAIL" }, l.detail);
            }
            if lines.iter().all(|l| l.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_AUDIT)
            }
        }
    }
}
