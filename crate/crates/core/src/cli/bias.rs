use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;

use super::{Context, EXIT_PASS};
use crate::bias::{
    bias_ratio, bias_table_csv, csv_field, epsilon_closeness, ols_fit, read_ratio_csv,
    text_text_bias_table, token_cosine_table, ClosenessResult, RegressionSummary, SortOrder,
};
use crate::embedding::{jl_project, load_store, EmbeddingStore, PromptKey, StoreKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SortArg {
    Descending,
    Ascending,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    /// Prompt store in fairdiff-store v1 format.
    #[arg(long)]
    pub store: PathBuf,
    /// Comma-separated base prompts [default: every key with both composed prompts]
    #[arg(long, value_delimiter = ',')]
    pub bases: Vec<String>,
    /// The two attributes compared; delta is the first minus the second.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = ["male".to_string(), "female".to_string()])]
    pub attributes: Vec<String>,
    /// Row order of the table, by delta.
    #[arg(long, value_enum, default_value_t = SortArg::Descending)]
    pub sort: SortArg,
    /// CSV `profession,ratio,proportion_male`; adds a ratio column and writes regression.json.
    #[arg(long)]
    pub ratio: Option<PathBuf>,
    /// Also test every composed prompt for ε-closeness to its base.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Row tokens of a word-level cosine table; replaces the bias table.
    #[arg(long, value_delimiter = ',', requires = "token_cols")]
    pub token_rows: Vec<String>,
    /// Column tokens of the word-level cosine table.
    #[arg(long, value_delimiter = ',', requires = "token_rows")]
    pub token_cols: Vec<String>,
    /// Gaussian random projection of the store to this dimension before any metric.
    #[arg(long)]
    pub project_dim: Option<usize>,
}

#[derive(Serialize)]
struct RegressionOutput {
    source: String,
    x: &'static str,
    y: &'static str,
    #[serde(flatten)]
    fit: RegressionSummary,
}

fn infer_bases(store: &EmbeddingStore, a1: &str, a2: &str) -> Vec<String> {
    store
        .keys()
        .filter(|k| {
            store.contains(&PromptKey::composed(a1, *k).render())
                && store.contains(&PromptKey::composed(a2, *k).render())
        })
        .map(str::to_string)
        .collect()
}

pub(super) fn run(args: &BiasArgs, ctx: &mut Context) -> Result<i32> {
    ctx.input(&args.store);
    let mut store = load_store(&args.store, StoreKind::Prompt)?;
    if let Some(dim) = args.project_dim {
        store = jl_project(&store, dim, ctx.config.seed, store.is_unit())?;
        println!(
            "projected {} vectors to dimension {dim} (seed {})",
            store.len(),
            ctx.config.seed
        );
    }

    if !args.token_rows.is_empty() {
        let table = token_cosine_table(&store, &args.token_rows, &args.token_cols)?;
        let mut csv = String::from("token");
        for c in &args.token_cols {
            let _ = write!(csv, ",{}", csv_field(c));
        }
        csv.push('\n');
        for (r, row) in args.token_rows.iter().zip(&table) {
            csv.push_str(&csv_field(r));
            for v in row {
                let _ = write!(csv, ",{v:.6}");
            }
            csv.push('\n');
        }
        print!("{csv}");
        ctx.write("token_cosines.csv", &csv)?;
        return Ok(EXIT_PASS);
    }

    let [a1, a2] = args.attributes.as_slice() else {
        return Err(Error::invalid(format!(
            "--attributes needs exactly two names, got {}",
            args.attributes.len()
        )));
    };
    let bases = if args.bases.is_empty() {
        let inferred = infer_bases(&store, a1, a2);
        if inferred.is_empty() {
            return Err(Error::invalid(format!(
                "no base in the store has both \"{a1} <base>\" and \"{a2} <base>\" keys"
            )));
        }
        inferred
    } else {
        args.bases.clone()
    };
    let order = match args.sort {
        SortArg::Descending => SortOrder::Descending,
        SortArg::Ascending => SortOrder::Ascending,
    };
    let rows = text_text_bias_table(&store, &bases, (a1, a2), order)?;

    let ratios = match &args.ratio {
        Some(path) => {
            ctx.input(path);
            let points = read_ratio_csv(path)?;
            let fit = ols_fit(
                &points
                    .iter()
                    .map(|p| (p.ratio, p.proportion_male))
                    .collect::<Vec<_>>(),
            )?;
            println!(
                "regression of proportion_male on ratio: slope {:.6}, intercept {:.6}, R^2 {:.6}, n {}",
                fit.slope, fit.intercept, fit.r_squared, fit.n
            );
            ctx.write_json(
                "regression.json",
                &RegressionOutput {
                    source: path.display().to_string(),
                    x: "ratio",
                    y: "proportion_male",
                    fit,
                },
            )?;
            let mut map = IndexMap::new();
            for r in &rows {
                map.insert(r.base.clone(), bias_ratio(&store, &r.base, (a1, a2))?);
            }
            Some(map)
        }
        None => None,
    };
    let csv = bias_table_csv(&rows, ratios.as_ref());
    print!("{csv}");
    ctx.write("bias_table.csv", &csv)?;

    if let Some(eps) = args.epsilon {
        let results = rows
            .iter()
            .flat_map(|r| [(r.base.clone(), a1), (r.base.clone(), a2)])
            .map(|(b, a)| epsilon_closeness(&store, &b, a, eps))
            .collect::<Result<Vec<ClosenessResult>>>()?;
        let mut out = String::from("base,attribute,distance,epsilon,is_close\n");
        for c in &results {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{}",
                csv_field(&c.base.base),
                csv_field(&c.attribute),
                c.distance,
                c.epsilon,
                c.is_close
            );
        }
        ctx.write("closeness.csv", &out)?;
    }
    Ok(EXIT_PASS)
}
