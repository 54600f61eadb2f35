//! Command-line front end.
//!
//! | exit code | meaning                        |
//! |-----------|--------------------------------|
//! | 0         | success                        |
//! | 2         | parse error (flags or config)  |
//! | 3         | validation error               |
//! | 4         | runtime failure                |
//! | 5         | `verify` found a failing check |

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::{apply_override, decode, parse_config, OpoConfig};
use crate::engine::{run_ea, run_opo_from, EAConfig};
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, write_csv, ExperimentPlan, RunRow, RUNS_FILE, SUMMARY_FILE};
use crate::theory::{evaluate_bound, BoundQuery};
use crate::verify::run_checks;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PLATEAU_EA_OUT";

/// Output directory of `experiment` when nothing else names one.
pub const DEFAULT_EXPERIMENT_DIR: &str = "results";

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "plateau-ea", version, about = "Non-elitist EA simulations and runtime bound calculators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON config file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Override a config key, e.g. `--set mutation.chi=2.0` or `--set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default: $PLATEAU_EA_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One seeded run of the non-elitist EA; prints a CSV row.
    Run(ConfigArgs),
    /// One seeded run of the (1+1) EA; prints a CSV row.
    Opo(ConfigArgs),
    /// Replicated runs over a grid of n; writes runs.csv and summary.csv.
    Experiment(ConfigArgs),
    /// Evaluates a named bound and prints a JSON report.
    Bounds(BoundsArgs),
    /// Runs the built-in property checks.
    Verify,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// level-based, updrift, m4-prime-floor, high-pressure,
    /// plateau-high-pressure, negative-drift, pk10, approximation, fprop,
    /// opo-exact
    #[arg(long, required_unless_present = "config")]
    pub theorem: Option<String>,
    /// JSON bound query; flags given alongside override its fields.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub chi: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub eps_prime: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub s_star: Option<f64>,
    #[arg(long)]
    pub p_xi1: Option<f64>,
    /// Upgrade probabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub s: Option<Vec<f64>>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub c: Option<f64>,
}

impl BoundsArgs {
    fn query(&self) -> Result<BoundQuery> {
        let mut doc = match &self.config {
            Some(path) => parse_config::<Value>(path, &[])?,
            None => Value::Object(Map::new()),
        };
        let map = doc
            .as_object_mut()
            .ok_or_else(|| Error::Parse("bound query must be a JSON object".into()))?;
        let mut put = |key: &str, v: Option<Value>| {
            if let Some(v) = v {
                map.insert(key.to_string(), v);
            }
        };
        put("theorem", self.theorem.clone().map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("chi", self.chi.map(Value::from));
        put("delta", self.delta.map(Value::from));
        put("epsilon", self.epsilon.map(Value::from));
        put("eps_prime", self.eps_prime.map(Value::from));
        put("n", self.n.map(Value::from));
        put("r", self.r.map(Value::from));
        put("m", self.m.map(Value::from));
        put("s_star", self.s_star.map(Value::from));
        put("p_xi1", self.p_xi1.map(Value::from));
        put("s", self.s.clone().map(Value::from));
        put("p0", self.p0.map(Value::from));
        put("gamma0", self.gamma0.map(Value::from));
        put("lambda", self.lambda.map(Value::from));
        put("c", self.c.map(Value::from));
        for o in &self.overrides {
            apply_override(&mut doc, o)?;
        }
        decode(doc)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) => EXIT_PARSE,
        Error::Invalid(_) | Error::LengthMismatch { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), dispatches, and returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn env_out_dir() -> Option<PathBuf> {
    std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

pub fn dispatch(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Run(args) => {
            let cfg: EAConfig = parse_config(&args.config, &args.overrides)?;
            let result = run_ea(&cfg)?;
            let row = RunRow::new(&cfg.fitness, Some(&cfg.selection), &cfg.mutation, cfg.lambda, cfg.seed, &result);
            emit_row(&row, stdout)?;
            if let Some(dir) = args.out.clone().or_else(env_out_dir) {
                std::fs::create_dir_all(&dir)?;
                write_csv(&dir.join("run.csv"), std::slice::from_ref(&row))?;
                if let Some(t) = &result.trajectory {
                    write_csv(&dir.join("trajectory.csv"), t)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Opo(args) => {
            let cfg: OpoConfig = parse_config(&args.config, &args.overrides)?;
            cfg.validate()?;
            let result = run_opo_from(&cfg.fitness, &cfg.mutation, cfg.budget, cfg.seed, cfg.start.clone())?;
            let row = RunRow::new(&cfg.fitness, None, &cfg.mutation, 1, cfg.seed, &result);
            emit_row(&row, stdout)?;
            if let Some(dir) = args.out.clone().or_else(env_out_dir) {
                std::fs::create_dir_all(&dir)?;
                write_csv(&dir.join("opo.csv"), std::slice::from_ref(&row))?;
            }
            Ok(EXIT_OK)
        }
        Command::Experiment(args) => {
            let plan: ExperimentPlan = parse_config(&args.config, &args.overrides)?;
            let dir = args
                .out
                .clone()
                .or_else(|| plan.output_dir.clone())
                .or_else(env_out_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_EXPERIMENT_DIR));
            let out = run_experiment(&plan, Some(&dir))?;
            let mut w = csv::Writer::from_writer(&mut *stdout);
            for s in &out.summary {
                w.serialize(s)?;
            }
            w.flush()?;
            drop(w);
            writeln!(
                stderr,
                "wrote {} and {}",
                dir.join(RUNS_FILE).display(),
                dir.join(SUMMARY_FILE).display()
            )?;
            Ok(EXIT_OK)
        }
        Command::Bounds(args) => {
            let report = evaluate_bound(&args.query()?)?;
            writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(EXIT_OK)
        }
        Command::Verify => {
            let mut failed = 0;
            for c in run_checks() {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                writeln!(stdout, "{tag} {} ({})", c.name, c.detail)?;
                failed += usize::from(!c.passed);
            }
            Ok(if failed == 0 { EXIT_OK } else { EXIT_VERIFY })
        }
    }
}

fn emit_row<T: Serialize>(row: &T, out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.serialize(row)?;
    w.flush()?;
    Ok(())
}
