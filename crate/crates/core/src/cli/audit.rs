use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use super::audit_input::load_audit_input;
use super::{check_unit_interval, Context, EXIT_FAIL, EXIT_PASS};
use crate::audit::{
    mixture_stability_check, multiaccuracy_audit, multicalibration_audit, score_sweep,
    text_image_condition_check, text_text_condition_check, within_level, AuditReport, Auditor,
    EmbeddingAuditor, ScoreScale, ScoreSweepPoint, TableAuditor, TextImageCondition,
    TextTextCondition,
};
use crate::embedding::PromptKey;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Multiaccuracy,
    Multicalibration,
    Both,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Audit input JSON; store paths inside it are relative to the file.
    #[arg(long)]
    pub input: PathBuf,
    /// Which audits decide the exit code.
    #[arg(long, value_enum, default_value_t = ModeArg::Multiaccuracy)]
    pub mode: ModeArg,
    /// Overrides the alpha in the input file.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Width of the true-score bins for multicalibration.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Bins with fewer images are reported but do not count.
    #[arg(long)]
    pub min_bin_count: Option<usize>,
    /// Allowed spread of subset true means in the mixture-stability check; widens its bound.
    #[arg(long)]
    pub tolerate_mean_gap: Option<f64>,
    /// Score with max(cos, 0) instead of (cos + 1) / 2.
    #[arg(long)]
    pub clipscore_compat: bool,
    /// Step of the first-subset proportion sweep over [0, 1].
    #[arg(long)]
    pub sweep_step: Option<f64>,
    /// Radius around composed prompts assumed by the text-text condition.
    #[arg(long)]
    pub ball_radius: Option<f64>,
}

#[derive(Debug, Serialize)]
struct StabilityPoint {
    weights: Vec<f64>,
    expected_score: f64,
    bound: f64,
    bound_holds: bool,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Section<T> {
    Done(T),
    Skipped { skipped: String },
}

impl<T> Section<T> {
    fn from_result(r: Result<T>) -> Result<Self> {
        match r {
            Ok(v) => Ok(Section::Done(v)),
            Err(e @ (Error::HypothesisViolated(_) | Error::MissingKeys(_) | Error::InvalidArgument(_))) => {
                Ok(Section::Skipped {
                    skipped: e.to_string(),
                })
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Serialize)]
struct MixtureSweep {
    true_mean: f64,
    alpha: f64,
    points: Vec<StabilityPoint>,
    max_spread: f64,
    /// Any two mixtures differ by at most twice the bound.
    spread_within_twice_bound: bool,
}

#[derive(Debug, Serialize)]
struct Conditions {
    text_image: Section<TextImageCondition>,
    text_text: Section<TextTextCondition>,
}

#[derive(Debug, Serialize)]
struct AuditOutput {
    base: String,
    alpha: f64,
    auditor: &'static str,
    scale: ScoreScale,
    prompt_store_unit: bool,
    image_store_unit: bool,
    passes: bool,
    audits: Vec<AuditReport>,
    mixture_stability: Section<MixtureSweep>,
    score_sweep: Section<Vec<ScoreSweepPoint>>,
    conditions: Conditions,
}

fn proportions(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::invalid(format!("sweep step must lie in (0, 1], got {step}")));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("sweep step {step} does not divide 1")));
    }
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

fn mixture_sweep(
    input: &super::AuditInput,
    auditor: &dyn Auditor,
    props: &[f64],
    gap: f64,
) -> Result<MixtureSweep> {
    let k = input.collection.subsets.len();
    let weights: Vec<Vec<f64>> = if k == 2 {
        props.iter().map(|&p| vec![p, 1.0 - p]).collect()
    } else {
        let mut w: Vec<Vec<f64>> = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        w.push(vec![1.0 / k as f64; k]);
        w
    };
    let mut points = Vec::with_capacity(weights.len());
    let mut first = None;
    for w in weights {
        let m = mixture_stability_check(&input.collection, auditor, &w, gap)?;
        first.get_or_insert((m.true_mean, m.alpha));
        points.push(StabilityPoint {
            weights: w,
            expected_score: m.expected_score,
            bound: m.bound,
            bound_holds: m.bound_holds,
        });
    }
    let (true_mean, alpha) = first.expect("at least one mixture");
    let lo = points.iter().map(|p| p.expected_score).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.expected_score).fold(f64::NEG_INFINITY, f64::max);
    let bound = points[0].bound;
    Ok(MixtureSweep {
        true_mean,
        alpha,
        max_spread: hi - lo,
        spread_within_twice_bound: within_level(hi - lo, 2.0 * bound),
        points,
    })
}

pub(super) fn run(args: &AuditArgs, ctx: &mut Context) -> Result<i32> {
    let cfg = &mut ctx.config.audit;
    if let Some(v) = args.lambda {
        cfg.bin_width = v;
    }
    if let Some(v) = args.min_bin_count {
        cfg.min_bin_count = v;
    }
    if let Some(v) = args.tolerate_mean_gap {
        cfg.tolerate_mean_gap = v;
    }
    if let Some(v) = args.sweep_step {
        cfg.sweep_step = v;
    }
    if let Some(v) = args.ball_radius {
        cfg.ball_radius = v;
    }
    let cfg = cfg.clone();
    if let Some(a) = args.alpha {
        check_unit_interval("--alpha", a)?;
    }
    let props = proportions(cfg.sweep_step)?;
    let scale = if args.clipscore_compat {
        ScoreScale::ClipCompat
    } else {
        ScoreScale::Affine
    };

    ctx.input(&args.input);
    let input = load_audit_input(&args.input, args.alpha)?;
    ctx.input(&input.prompt_store_path);
    ctx.input(&input.image_store_path);
    let base_vec = input.prompts.get(&input.base)?.clone();

    let (auditor, auditor_name): (Box<dyn Auditor>, _) = match &input.auditor_scores {
        Some(scores) => (
            Box::new(TableAuditor {
                scores: scores.clone(),
            }),
            "table",
        ),
        None => (
            Box::new(EmbeddingAuditor {
                prompt: base_vec.clone(),
                scale,
            }),
            "embedding",
        ),
    };

    let mut audits = Vec::new();
    if matches!(args.mode, ModeArg::Multiaccuracy | ModeArg::Both) {
        audits.push(multiaccuracy_audit(&input.collection, auditor.as_ref())?);
    }
    if matches!(args.mode, ModeArg::Multicalibration | ModeArg::Both) {
        audits.push(multicalibration_audit(
            &input.collection,
            auditor.as_ref(),
            ctx.config.calibration(),
        )?);
    }
    let passes = audits.iter().all(|a| a.passes);

    let mixture = Section::from_result(mixture_sweep(
        &input,
        auditor.as_ref(),
        &props,
        cfg.tolerate_mean_gap,
    ))?;

    let attrs: Vec<&str> = input
        .collection
        .subsets
        .iter()
        .map(|s| s.attribute.as_str())
        .collect();
    let sweep = Section::from_result((|| {
        if input.collection.subsets.len() < 2 {
            return Err(Error::invalid("the score sweep needs two subsets"));
        }
        let composed = attrs
            .iter()
            .map(|a| {
                let key = PromptKey::composed(*a, &input.base).render();
                Ok((a.to_string(), input.prompts.get(&key)?))
            })
            .collect::<Result<Vec<_>>>()?;
        score_sweep(
            &base_vec,
            &composed,
            &input.collection.subsets[0],
            &input.collection.subsets[1],
            &props,
            scale,
        )
    })())?;

    let conditions = Conditions {
        text_image: Section::from_result(text_image_condition_check(&input.collection, &base_vec))?,
        text_text: Section::from_result(text_text_condition_check(
            &input.prompts,
            &input.base,
            &attrs,
            cfg.ball_radius,
            input.collection.alpha,
        ))?,
    };

    for a in &audits {
        let name = match a.mode {
            crate::audit::AuditMode::Multiaccuracy => "multiaccuracy",
            crate::audit::AuditMode::Multicalibration => "multicalibration",
        };
        println!(
            "{name}: max deviation {:.6} vs alpha {} -> {}",
            a.max_deviation,
            a.alpha,
            if a.passes { "pass" } else { "fail" }
        );
        ctx.write(&format!("{name}_summary.csv"), &a.summary_csv())?;
    }
    if let Section::Done(ti) = &conditions.text_image {
        println!(
            "text-image condition: max gap {:.6}, implied alpha >= {:.6}",
            ti.max_gap, ti.alpha_lower_bound
        );
    }
    if let Section::Done(points) = &sweep {
        let first = &input.collection.subsets[0].attribute;
        let mut csv = String::from("proportion,score_then_average,average_then_score,subclass_score\n");
        for p in points {
            let _ = writeln!(
                csv,
                "{:.6},{:.6},{:.6},{:.6}",
                p.proportion, p.score_then_average, p.average_then_score, p.subclass_score
            );
        }
        println!("score sweep over the proportion of \"{first}\" written to score_sweep.csv");
        ctx.write("score_sweep.csv", &csv)?;
    }

    let report = AuditOutput {
        base: input.base.clone(),
        alpha: input.collection.alpha,
        auditor: auditor_name,
        scale,
        prompt_store_unit: input.prompts.is_unit(),
        image_store_unit: input.images.is_unit(),
        passes,
        audits,
        mixture_stability: mixture,
        score_sweep: sweep,
        conditions,
    };
    ctx.write_json("audit_report.json", &report)?;
    Ok(if passes { EXIT_PASS } else { EXIT_FAIL })
}
