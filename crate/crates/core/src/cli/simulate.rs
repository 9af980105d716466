use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::{Context, EXIT_FAIL, EXIT_HYPOTHESES, EXIT_PASS};
use crate::diffusion::{
    default_tweedie_prior, girsanov_bound, ks_distance, rep_balance_audit, reverse_sde_sample,
    score_lipschitz_estimate, theorem41_experiment, tweedie_check, ConditionalMixtureModel,
    DivergenceReport, Verdict,
};
use crate::embedding::{load_store, EmbeddingStore, StoreKind};
use crate::error::{Error, Result};

/// Stream index for drawing Girsanov prompt pairs, far from the per-path streams.
const PAIR_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    /// KL against the Girsanov integral and TV against Pinsker on random prompt pairs.
    Girsanov,
    /// Close embeddings force near-identical generations; far ones are not balanced.
    Theorem41,
    /// TV between base and composed-prompt generations against 1 − v.
    RepBalance,
    /// Tweedie's posterior-mean formula against a quadrature oracle.
    Tweedie,
    /// Reverse-SDE samples for one prompt vector.
    Sample,
    /// Empirical score Lipschitz constant against the analytic bound.
    Lipschitz,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model specification JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Experiment to run.
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Prompt store holding the base and "<attribute> <base>" keys.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Base prompt key in the store.
    #[arg(long)]
    pub base: Option<String>,
    /// Attributes for rep-balance [default: the model's attribute names]
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
    /// ε of the closeness experiment.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Balance thresholds v, one shared value or one per attribute.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<f64>,
    /// Number of random prompt pairs for the Girsanov experiment.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Prompt vector, comma-separated, for `sample` (and the Tweedie prior when a model is given).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub prompt: Vec<f64>,
    /// Noise level of the Tweedie check.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Grid points of the Tweedie check.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Euler–Maruyama steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Continuous SDE horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Lipschitz probes.
    #[arg(long)]
    pub probes: Option<usize>,
}

fn apply_overrides(args: &SimulateArgs, ctx: &mut Context) {
    let c = &mut ctx.config;
    if let Some(v) = args.paths {
        c.sde.paths = v;
    }
    if let Some(v) = args.steps {
        c.sde.steps = v;
    }
    if let Some(v) = args.horizon {
        c.sde.horizon = v;
    }
    if let Some(v) = args.probes {
        c.simulate.lipschitz_probes = v;
    }
    if let Some(v) = args.epsilon {
        c.simulate.epsilon = v;
    }
    if !args.thresholds.is_empty() {
        c.simulate.thresholds = args.thresholds.clone();
    }
    if let Some(v) = args.pairs {
        c.simulate.pairs = v;
    }
    if let Some(v) = args.sigma {
        c.tweedie.sigma = v;
    }
    if let Some(v) = args.trials {
        c.tweedie.trials = v;
    }
}

fn need_model(args: &SimulateArgs, ctx: &mut Context) -> Result<ConditionalMixtureModel> {
    let path = args
        .model
        .as_ref()
        .ok_or_else(|| Error::invalid("this experiment needs --model"))?;
    ctx.input(path);
    ConditionalMixtureModel::load(path)
}

fn need_store(args: &SimulateArgs, ctx: &mut Context) -> Result<(EmbeddingStore, String)> {
    let path = args
        .store
        .as_ref()
        .ok_or_else(|| Error::invalid("this experiment needs --store"))?;
    let base = args
        .base
        .clone()
        .ok_or_else(|| Error::invalid("this experiment needs --base"))?;
    ctx.input(path);
    Ok((load_store(path, StoreKind::Prompt)?, base))
}

fn need_prompt(args: &SimulateArgs, model: &ConditionalMixtureModel) -> Result<Vec<f64>> {
    if args.prompt.len() != model.prompt_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.prompt_dim(),
            found: args.prompt.len(),
            context: Some("--prompt vs model prompt_dim".into()),
        });
    }
    Ok(args.prompt.clone())
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Random unit prompt pairs drawn from their own stream of `seed`.
pub fn prompt_pairs(dim: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PAIR_STREAM);
    (0..count)
        .map(|_| (random_unit(dim, &mut rng), random_unit(dim, &mut rng)))
        .collect()
}

#[derive(Serialize)]
struct GirsanovPair<'a> {
    y: &'a [f64],
    y_prime: &'a [f64],
    #[serde(flatten)]
    report: &'a DivergenceReport,
}

#[derive(Serialize)]
struct GirsanovOutput<'a> {
    pairs: Vec<GirsanovPair<'a>>,
    satisfied: usize,
    inconclusive: usize,
    violated: usize,
}

fn girsanov(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    let model = need_model(args, ctx)?;
    let sde = ctx.config.sde_run();
    let quad = ctx.config.quadrature.clone();
    let count = ctx.config.simulate.pairs;
    if count == 0 {
        return Err(Error::invalid("--pairs must be at least 1"));
    }
    let pairs = prompt_pairs(model.prompt_dim(), count, ctx.config.seed);
    let mut reports = Vec::with_capacity(count);
    for (i, (y, yp)) in pairs.iter().enumerate() {
        let r = girsanov_bound(&model, y, yp, &sde, &quad)?;
        println!(
            "pair {i:02}: kl {:.6} <= {:.6} ± {:.6}, tv {:.6} <= {:.6}{}",
            r.kl_numeric,
            r.kl_girsanov_bound,
            r.ci_half_width,
            r.tv_numeric,
            r.pinsker_bound,
            if r.inconclusive {
                " (inconclusive)"
            } else if r.holds() {
                ""
            } else {
                " VIOLATED"
            }
        );
        ctx.write(&format!("girsanov_integrand_{i:02}.csv"), &r.integrand_csv())?;
        reports.push(r);
    }
    let satisfied = reports.iter().filter(|r| r.holds()).count();
    let inconclusive = reports.iter().filter(|r| r.inconclusive).count();
    let violated = reports
        .iter()
        .filter(|r| !r.holds() && !r.inconclusive)
        .count();
    println!("{satisfied}/{count} pairs satisfy both bounds");
    let out = GirsanovOutput {
        pairs: pairs
            .iter()
            .zip(&reports)
            .map(|((y, yp), report)| GirsanovPair {
                y,
                y_prime: yp,
                report,
            })
            .collect(),
        satisfied,
        inconclusive,
        violated,
    };
    ctx.write_json("girsanov_report.json", &out)?;
    Ok(if violated == 0 { EXIT_PASS } else { EXIT_FAIL })
}

fn theorem41(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    let model = need_model(args, ctx)?;
    let (store, base) = need_store(args, ctx)?;
    let report = theorem41_experiment(
        &model,
        &store,
        &base,
        ctx.config.simulate.epsilon,
        &ctx.config.simulate.thresholds,
        &ctx.config.theorem41(),
    )?;
    for c in report.hypotheses.iter().chain(&report.conclusions) {
        println!(
            "{}: {} (value {:.6e}, bound {:.6e})",
            c.name,
            if c.holds { "holds" } else { "FAILS" },
            c.value,
            c.bound
        );
    }
    println!("verdict: {:?}", report.verdict);
    ctx.write_json("theorem41_report.json", &report)?;
    Ok(match report.verdict {
        Verdict::Verified => EXIT_PASS,
        Verdict::TheoremViolated => EXIT_FAIL,
        Verdict::HypothesesNotMet => EXIT_HYPOTHESES,
    })
}

fn rep_balance(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    let model = need_model(args, ctx)?;
    let (store, base) = need_store(args, ctx)?;
    let attributes: Vec<String> = if args.attributes.is_empty() {
        model.attributes().map(str::to_string).collect()
    } else {
        args.attributes.clone()
    };
    let report = rep_balance_audit(
        &model,
        &store,
        &base,
        &attributes,
        &ctx.config.simulate.thresholds,
        &ctx.config.quadrature,
    )?;
    for r in &report.rows {
        println!(
            "{}: tv {:.6} vs 1 - v = {:.6} -> {}",
            r.attribute,
            r.tv,
            1.0 - r.threshold,
            if r.satisfied { "balanced" } else { "not balanced" }
        );
    }
    ctx.write_json("rep_balance.json", &report)?;
    Ok(if report.balanced { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct TweedieOutput {
    tolerance: f64,
    passes: bool,
    #[serde(flatten)]
    report: crate::diffusion::TweedieReport,
}

fn tweedie(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    let prior = match &args.model {
        Some(_) => {
            let model = need_model(args, ctx)?;
            model.mixture_at(&need_prompt(args, &model)?)?
        }
        None => default_tweedie_prior(),
    };
    let t = ctx.config.tweedie.clone();
    let report = tweedie_check(&prior, t.sigma, t.trials)?;
    let passes = report.max_deviation <= t.tolerance;
    println!(
        "tweedie: max deviation {:.3e} over {} points (tolerance {:.0e})",
        report.max_deviation, t.trials, t.tolerance
    );
    ctx.write_json(
        "tweedie_report.json",
        &TweedieOutput {
            tolerance: t.tolerance,
            passes,
            report,
        },
    )?;
    Ok(if passes { EXIT_PASS } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct SampleSummary {
    prompt: Vec<f64>,
    target_weights: Vec<f64>,
    mean: Vec<f64>,
    variance: Vec<f64>,
    component_counts: Vec<usize>,
    component_proportions: Vec<f64>,
    /// 99% tolerance on each proportion at this path count.
    proportion_tolerance: Vec<f64>,
    mean_responsibilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ks_distance: Option<f64>,
}

fn sample(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    let model = need_model(args, ctx)?;
    let y = need_prompt(args, &model)?;
    let sde = ctx.config.sde_run();
    let set = reverse_sde_sample(&model, &y, &sde)?;
    let target = model.mixture_at(&y)?;
    let ks = (target.dim() == 1).then(|| {
        let xs: Vec<f64> = set.samples.iter().map(|s| s[0]).collect();
        ks_distance(&xs, |x| target.cdf_1d(x).expect("1D target"))
    });
    let mut csv = (0..target.dim())
        .map(|d| format!("x{d}"))
        .collect::<Vec<_>>()
        .join(",");
    csv.push('\n');
    for s in &set.samples {
        let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(csv, "{}", row.join(","));
    }
    ctx.write("samples.csv", &csv)?;
    let weights = target.weights();
    let summary = SampleSummary {
        prompt: y,
        proportion_tolerance: weights.iter().map(|&w| sde.proportion_tolerance(w)).collect(),
        target_weights: weights,
        mean: set.mean,
        variance: set.variance,
        component_counts: set.component_counts,
        component_proportions: set.component_proportions,
        mean_responsibilities: set.mean_responsibilities,
        ks_distance: ks,
    };
    println!(
        "{} samples: mean {:?}, variance {:?}, proportions {:?}",
        sde.paths, summary.mean, summary.variance, summary.component_proportions
    );
    ctx.write_json("sample_summary.json", &summary)?;
    Ok(EXIT_PASS)
}

fn lipschitz(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    let model = need_model(args, ctx)?;
    let est = score_lipschitz_estimate(&model, &ctx.config.probes())?;
    println!(
        "score Lipschitz: estimate {:.6} vs analytic bound {:.6} over {} probes",
        est.estimate, est.analytic_bound, est.probes
    );
    ctx.write_json("lipschitz.json", &est)?;
    Ok(if est.within_bound { EXIT_PASS } else { EXIT_FAIL })
}

pub(super) fn run(args: &SimulateArgs, ctx: &mut Context) -> Result<i32> {
    apply_overrides(args, ctx);
    match args.experiment {
        Experiment::Girsanov => girsanov(args, ctx),
        Experiment::Theorem41 => theorem41(args, ctx),
        Experiment::RepBalance => rep_balance(args, ctx),
        Experiment::Tweedie => tweedie(args, ctx),
        Experiment::Sample => sample(args, ctx),
        Experiment::Lipschitz => lipschitz(args, ctx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_are_unit_and_reproducible() {
        let a = prompt_pairs(3, 5, 9);
        assert_eq!(a, prompt_pairs(3, 5, 9));
        assert_ne!(a, prompt_pairs(3, 5, 10));
        for (y, yp) in &a {
            for v in [y, yp] {
                let n: f64 = v.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }
}
