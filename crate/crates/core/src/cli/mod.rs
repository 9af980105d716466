//! The `fairdiff` command line: `bias`, `audit`, `simulate` and `report`.
//!
//! Exit codes: 0 pass, 1 audit or theorem failure, 2 input error, 3 hypotheses unmet.

mod audit;
mod audit_input;
mod bias;
mod config;
mod report;
mod simulate;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use audit::AuditArgs;
pub use audit_input::{load_audit_input, AuditInput};
pub use bias::BiasArgs;
pub use config::{AuditSection, RunConfig, SdeSection, SimulateSection, TweedieSection};
pub use report::ReportArgs;
pub use simulate::{prompt_pairs, Experiment, SimulateArgs};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_HYPOTHESES: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fairdiff", version, about = "Embedding bias metrics, auditor checks and diffusion simulations")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for all random streams; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for outputs, the effective config and run.json.
    #[arg(long, global = true, default_value = "fairdiff-out")]
    pub output_dir: PathBuf,
    /// JSON config; absent fields keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Text-text bias table, cosine ratios and ε-closeness for a prompt store.
    Bias(BiasArgs),
    /// Multiaccuracy / multicalibration audit of an alignment scorer.
    Audit(AuditArgs),
    /// Diffusion experiments on a prompt-conditioned Gaussian-mixture model.
    Simulate(SimulateArgs),
    /// Summaries of earlier runs, table formatting and the default config.
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bias(_) => "bias",
            Command::Audit(_) => "audit",
            Command::Simulate(_) => "simulate",
            Command::Report(_) => "report",
        }
    }
}

/// Written to `run.json` after every run that got past argument parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub duration_seconds: f64,
    pub outputs: Vec<String>,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub(crate) struct Context {
    pub config: RunConfig,
    out_dir: PathBuf,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

impl Context {
    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write(name, &text)
    }
}

/// Maps a library error to its exit code.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::HypothesisViolated(_) => EXIT_HYPOTHESES,
        Error::Numerical(_) => EXIT_FAIL,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> i32 {
    let start = Instant::now();
    let Cli { global, command } = cli;
    let mut ctx = Context {
        config: RunConfig::default(),
        out_dir: global.output_dir.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };

    let result = prepare(&global, &mut ctx).and_then(|pool| {
        let body = |ctx: &mut Context| match &command {
            Command::Bias(a) => bias::run(a, ctx),
            Command::Audit(a) => audit::run(a, ctx),
            Command::Simulate(a) => simulate::run(a, ctx),
            Command::Report(a) => report::run(a, ctx),
        };
        match pool {
            Some(pool) => pool.install(|| body(&mut ctx)),
            None => body(&mut ctx),
        }
    });

    let (code, error) = match result {
        Ok(code) => (code, None),
        Err(e) => {
            eprintln!("error: {e}");
            (exit_code_for(&e), Some(e.to_string()))
        }
    };

    let config_text = ctx.config.to_json();
    if error.is_none() {
        if let Err(e) = ctx.write("config.json", &config_text) {
            eprintln!("error: {e}");
        }
    }
    let manifest = RunManifest {
        subcommand: command.name().to_string(),
        inputs: ctx.inputs.clone(),
        config_hash: ctx.config.hash(),
        seed: ctx.config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
        outputs: ctx.outputs.clone(),
        exit_code: code,
        error,
    };
    if let Err(e) = ctx.write_json("run.json", &manifest) {
        eprintln!("error: could not write run.json: {e}");
    }
    code
}

fn prepare(global: &GlobalArgs, ctx: &mut Context) -> Result<Option<rayon::ThreadPool>> {
    if let Some(path) = &global.config {
        ctx.config = RunConfig::load(path)?;
        ctx.input(path);
    }
    if let Some(seed) = global.seed {
        ctx.config.seed = seed;
    }
    match global.threads {
        None => Ok(None),
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(Some)
            .map_err(|e| Error::invalid(format!("thread pool: {e}"))),
    }
}

pub(crate) fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code_for(&Error::HypothesisViolated("x".into())), 3);
        assert_eq!(exit_code_for(&Error::Numerical("x".into())), 1);
        assert_eq!(exit_code_for(&Error::MissingKeys(vec!["k".into()])), 2);
    }
}
