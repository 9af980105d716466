//! Prompt-conditioned Gaussian-mixture diffusion with closed-form scores.

mod conditional;
mod girsanov;
mod mixture;
mod quadrature;
mod sampler;
mod theorem;
mod tweedie;

pub use conditional::{
    conditional_score, score_lipschitz_estimate, ComponentShape, ConditionalMixtureModel,
    LipschitzEstimate, LipschitzProbeConfig, ModelSpec, SoftmaxWeightMap, WeightMapSpec,
};
pub use mixture::{mixture_score, noised_params, GaussianComponent, GaussianMixture, NoisedMixture};
pub use quadrature::{kl_numeric, kl_numeric_with, tv_numeric, tv_numeric_with, QuadratureOptions};
pub use sampler::{
    ks_distance, reverse_sde_sample, reverse_sde_sample_mixture, SampleSet, SdeRunConfig,
};
pub use girsanov::{
    girsanov_bound, girsanov_suite, DivergenceReport, IntegrandPoint, MAX_RELATIVE_CI_WIDTH,
};
pub use theorem::{
    is_balanced, rep_balance_audit, theorem41_experiment, BALANCE_ROUNDING, AttributeDistance, Check, PairTv, RepBalanceReport,
    RepBalanceRow, Theorem41Config, Theorem41Report, Verdict,
};
pub use tweedie::{
    default_tweedie_prior, posterior_mean_quadrature, tweedie_check, TweediePoint, TweedieReport,
};
