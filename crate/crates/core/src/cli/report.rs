use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use super::{Context, RunConfig, RunManifest, EXIT_PASS};
use crate::bias::csv_field;
use crate::error::{Error, Result};

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("action").required(true).multiple(true))]
pub struct ReportArgs {
    /// Output directories of earlier runs to summarize.
    #[arg(long, num_args = 1.., group = "action")]
    pub summarize: Vec<PathBuf>,
    /// Write the default config to this path.
    #[arg(long, group = "action")]
    pub write_default_config: Option<PathBuf>,
    /// CSV `generation,proportion` rendered as a Markdown table.
    #[arg(long, group = "action")]
    pub proportions: Option<PathBuf>,
    /// Column heading for the proportion column.
    #[arg(long, default_value = "Proportion")]
    pub proportion_label: String,
}

#[derive(Debug, Serialize)]
struct RunSummary {
    dir: String,
    subcommand: String,
    exit_code: i32,
    seed: u64,
    config_hash: String,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ProportionRow {
    generation: String,
    proportion: f64,
}

fn summarize(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    Ok(RunSummary {
        dir: dir.display().to_string(),
        subcommand: m.subcommand,
        exit_code: m.exit_code,
        seed: m.seed,
        config_hash: m.config_hash,
        outputs: m.outputs,
        error: m.error,
    })
}

/// Renders `generation,proportion` rows as a two-column Markdown table with three decimals.
pub fn proportions_table(rows: &[(String, f64)], label: &str) -> String {
    let mut out = format!("| Generation | {label} |\n|:--|--:|\n");
    for (g, p) in rows {
        let _ = writeln!(out, "| {g} | {p:.3} |");
    }
    out
}

fn read_proportions(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<ProportionRow>().enumerate() {
        let r = rec?;
        if !(0.0..=1.0).contains(&r.proportion) {
            return Err(Error::Format {
                line: i + 2,
                message: format!("proportion {} is outside [0, 1]", r.proportion),
            });
        }
        rows.push((r.generation, r.proportion));
    }
    Ok(rows)
}

pub(super) fn run(args: &ReportArgs, ctx: &mut Context) -> Result<i32> {
    if let Some(path) = &args.write_default_config {
        let text = RunConfig::default().to_json();
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
        println!("default config written to {}", path.display());
    }
    if let Some(path) = &args.proportions {
        ctx.input(path);
        let rows = read_proportions(path)?;
        let table = proportions_table(&rows, &args.proportion_label);
        print!("{table}");
        ctx.write("proportions.md", &table)?;
        let mut csv = String::from("generation,proportion\n");
        for (g, p) in &rows {
            let _ = writeln!(csv, "{},{p:.3}", csv_field(g));
        }
        ctx.write("proportions.csv", &csv)?;
    }
    if !args.summarize.is_empty() {
        let runs = args
            .summarize
            .iter()
            .map(|d| {
                ctx.input(d);
                summarize(d)
            })
            .collect::<Result<Vec<_>>>()?;
        for r in &runs {
            println!(
                "{}: {} exit {} ({} outputs)",
                r.dir,
                r.subcommand,
                r.exit_code,
                r.outputs.len()
            );
        }
        ctx.write_json("summary.json", &runs)?;
    }
    Ok(EXIT_PASS)
}
