use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde_json::Value;

use resonance::channel::scenario_with;
use resonance::channel::{DEFAULT_DEPTH, DEFAULT_EPSILON};
use resonance::config::{apply_override, RunConfig};
use resonance::oracle::run_suite;
use resonance::pipeline::{channel_config, emit, evaluate_points, exit_code_for, run, to_json, RunOutcome, Stage};
use resonance::Error;

// stdout may be a closed pipe; the exit code carries the result
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "resonance", version, about = "Resonances and factorizations of transfer functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to output.directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. solver.tol=1e-12. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check model hypotheses.
    Validate(Common),
    /// Validate, then evaluate the admissibility inequalities.
    Admissible(Common),
    /// Solve both transformation equations.
    Solve(Common),
    /// Solve and certify the factorization.
    Factorize(Common),
    /// Full pipeline including the resonance table.
    Resonances(Common),
    /// Run the discrete oracle suite.
    Verify {
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Full pipeline on the coupled-channel example.
    ExampleChannel {
        #[arg(long, default_value_t = 0.5)]
        lambda_c: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha0: f64,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 12.0)]
        half_width: f64,
        #[arg(long, default_value_t = 121)]
        points: usize,
        #[arg(long, default_value_t = DEFAULT_DEPTH)]
        depth: f64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate M_Gamma(z) and its inverse at the given points.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Point as re,im. Repeatable.
        #[arg(long = "z", value_name = "RE,IM", required = true, allow_hyphen_values = true)]
        z: Vec<String>,
    },
}

fn parse_point(s: &str) -> Result<Complex64, Error> {
    let bad = || Error::Config(format!("cannot parse point {s:?}; expected re,im"));
    let (re, im) = s.split_once(',').ok_or_else(bad)?;
    let re: f64 = re.trim().parse().map_err(|_| bad())?;
    let im: f64 = im.trim().parse().map_err(|_| bad())?;
    Ok(Complex64::new(re, im))
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn refuse(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    code(exit_code_for(e))
}

fn finish(outcome: &RunOutcome, dir: &Path) -> ExitCode {
    match emit(outcome, dir) {
        Ok(files) => {
            let st = &outcome.report.status;
            say!("outcome: {} (exit {})", st.outcome, st.exit_code);
            if let Some(r) = &st.reason {
                say!("reason: {}: {}", r.kind, r.message);
            }
            for f in &st.failed_certificates {
                say!("failed: {f}");
            }
            for f in files {
                say!("wrote {}", dir.join(f).display());
            }
            code(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            code(1)
        }
    }
}

fn staged(common: &Common, stage: Stage) -> ExitCode {
    let config = match RunConfig::load(&common.config, &common.overrides) {
        Ok(c) => c,
        Err(e) => return refuse(&e),
    };
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&config.output.directory));
    finish(&run(&config, stage), &dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate(c) => staged(&c, Stage::Validate),
        Command::Admissible(c) => staged(&c, Stage::Admissible),
        Command::Solve(c) => staged(&c, Stage::Solve),
        Command::Factorize(c) => staged(&c, Stage::Factorize),
        Command::Resonances(c) => staged(&c, Stage::Resonances),
        Command::Verify { seed } => match run_suite(seed) {
            Ok(checks) => {
                say!("{:<46} {:>12} {:>10}  result", "check", "value", "tol");
                for c in &checks {
                    let tag = if c.pass { "PASS" } else { "FAIL" };
                    say!("{:<46} {:>12.3e} {:>10.1e}  {tag}", c.name, c.value, c.tol);
                }
                code(if checks.iter().all(|c| c.pass) { 0 } else { 5 })
            }
            Err(e) => refuse(&e),
        },
        Command::ExampleChannel {
            lambda_c,
            alpha0,
            epsilon,
            half_width,
            points,
            depth,
            out,
            overrides,
        } => {
            let mut sc = scenario_with(epsilon, points, depth);
            sc.channel.lambda_c = lambda_c;
            sc.channel.alpha0 = alpha0;
            sc.channel.half_width = half_width;
            sc.contour.lambda_c = lambda_c;
            let config = match with_overrides(channel_config(&sc), &overrides) {
                Ok(c) => c,
                Err(e) => return refuse(&e),
            };
            finish(&run(&config, Stage::Resonances), &out)
        }
        Command::Eval { config, overrides, z } => {
            let run = || -> Result<String, Error> {
                let cfg = RunConfig::load(&config, &overrides)?;
                let pts = z.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>, _>>()?;
                to_json(&evaluate_points(&cfg, &pts)?)
            };
            match run() {
                Ok(s) => {
                    let _ = write!(std::io::stdout().lock(), "{s}");
                    code(0)
                }
                Err(e) => refuse(&e),
            }
        }
    }
}

fn with_overrides(config: RunConfig, overrides: &[String]) -> Result<RunConfig, Error> {
    let mut v: Value = serde_json::to_value(&config)?;
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    RunConfig::from_value(v)
}
