//! Average treatment effects of chemotherapy and targeted therapy against the
//! radiation reference arm, by outcome-regression g-computation, with
//! percentile-bootstrap uncertainty.

use crate::cohort::{spelled_enum, Outcome, Treatment};
use crate::glm::{backward_eliminate, fit_logistic, sample_sd, FitOptions, GlmError, LogisticModel};
use crate::preprocess::{build_matrix, BaselineFeatures, FeatureMatrix, FeatureSet, PreprocessError, Target};
use crate::rng::Xoshiro256;
use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

pub const MIN_BOOT: usize = 100;
/// Fraction of bootstrap replicates that must succeed.
pub const MIN_BOOT_SUCCESS: f64 = 0.95;

const CHEMO: &str = "chemotherapy";
const TARGETED: &str = "targeted";
/// Treatments estimated against radiation, in report order.
pub const TREATED_ARMS: [Treatment; 2] = [Treatment::Chemotherapy, Treatment::Targeted];

spelled_enum!(
    Estimand {
        Ate => "ATE",
        Att => "ATT",
    }
);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CausalError {
    #[error("treatment arm {0} has no patients")]
    MissingArm(Treatment),
    #[error("bootstrap needs B >= {MIN_BOOT}, got {0}")]
    TooFewReplicates(usize),
    #[error("only {succeeded} of {requested} bootstrap replicates succeeded ({})", taxonomy_text(.taxonomy))]
    TooManyBootFailures {
        requested: usize,
        succeeded: usize,
        taxonomy: BTreeMap<String, usize>,
    },
    #[error(transparent)]
    Fit(#[from] GlmError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

fn taxonomy_text(t: &BTreeMap<String, usize>) -> String {
    t.iter().map(|(k, v)| format!("{k}: {v}")).collect::<Vec<_>>().join(", ")
}

impl CausalError {
    /// Short label used in failure counts.
    pub fn kind(&self) -> &'static str {
        match self {
            CausalError::MissingArm(_) => "MISSING_ARM",
            CausalError::TooFewReplicates(_) => "TOO_FEW_REPLICATES",
            CausalError::TooManyBootFailures { .. } => "TOO_MANY_BOOT_FAILURES",
            CausalError::Preprocess(_) => "PREPROCESS",
            CausalError::Fit(e) => match e {
                GlmError::DegenerateOutcome { .. } => "DEGENERATE_OUTCOME",
                GlmError::SeparationDetected { .. } => "SEPARATION",
                GlmError::SingularInformation { .. } => "SINGULAR_INFORMATION",
                GlmError::NotConverged { .. } => "NOT_CONVERGED",
                GlmError::TooFewRows { .. } => "TOO_FEW_ROWS",
                _ => "FIT",
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectOptions {
    /// Adjustment covariates; treatment dummies in the set are ignored.
    pub covariates: FeatureSet,
    /// Average ATE over the two compared arms only instead of every patient.
    pub arms_only_ate: bool,
    /// Fit the outcome model after backward elimination at this stay
    /// threshold. The treatment dummies are never eliminated.
    pub eliminate: Option<f64>,
    pub fit: FitOptions,
}

impl Default for EffectOptions {
    fn default() -> Self {
        Self {
            covariates: FeatureSet::OutcomeModel,
            arms_only_ate: false,
            eliminate: None,
            fit: FitOptions::default(),
        }
    }
}

/// Outcome-model design: intercept, chemotherapy, targeted, then covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectDesign {
    pub outcome: Outcome,
    pub matrix: FeatureMatrix,
    pub arms: Vec<Treatment>,
}

pub fn effect_design(
    features: &[BaselineFeatures],
    outcome: Outcome,
    covariates: &FeatureSet,
) -> Result<EffectDesign, CausalError> {
    let mut columns = vec![CHEMO.to_string(), TARGETED.to_string()];
    columns.extend(covariates.columns().into_iter().filter(|c| c != CHEMO && c != TARGETED));
    let matrix = build_matrix(features, &FeatureSet::Custom(columns), Target::Outcome(outcome))?;
    let arms = arms_of(&matrix);
    Ok(EffectDesign { outcome, matrix, arms })
}

fn arms_of(fm: &FeatureMatrix) -> Vec<Treatment> {
    (0..fm.nrows())
        .map(|i| {
            if fm.x[(i, 1)] == 1.0 {
                Treatment::Chemotherapy
            } else if fm.x[(i, 2)] == 1.0 {
                Treatment::Targeted
            } else {
                Treatment::Radiation
            }
        })
        .collect()
}

/// One point estimate: risk difference on the probability scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEffect {
    pub treatment: Treatment,
    pub estimand: Estimand,
    pub value: f64,
}

/// Point estimates in the order (CHEMO ATE, CHEMO ATT, TARGETED ATE, TARGETED ATT).
pub type EffectVector = [f64; 4];

pub fn effect_labels() -> [(Treatment, Estimand); 4] {
    [
        (Treatment::Chemotherapy, Estimand::Ate),
        (Treatment::Chemotherapy, Estimand::Att),
        (Treatment::Targeted, Estimand::Ate),
        (Treatment::Targeted, Estimand::Att),
    ]
}

fn fit_outcome_model(fm: &FeatureMatrix, opts: &EffectOptions) -> Result<LogisticModel, GlmError> {
    match opts.eliminate {
        None => fit_logistic(fm, &opts.fit),
        Some(alpha) => backward_eliminate(fm, alpha, &[CHEMO, TARGETED], &opts.fit).map(|t| t.final_model),
    }
}

/// g-computation on a design with the dummies in columns 1 and 2.
fn effects_on(fm: &FeatureMatrix, arms: &[Treatment], opts: &EffectOptions) -> Result<EffectVector, CausalError> {
    for arm in Treatment::ALL {
        if !arms.contains(arm) {
            return Err(CausalError::MissingArm(*arm));
        }
    }
    let model = fit_outcome_model(fm, opts)?;
    let eta = model.linear_predictors_named(&fm.x, &fm.column_names)?;
    let coef = |name: &str| model.column_index(name).map_or(0.0, |j| model.beta[j]);
    let (b_chemo, b_targeted) = (coef(CHEMO), coef(TARGETED));

    let mut out = [0.0; 4];
    for (slot, (arm, b_arm)) in [(Treatment::Chemotherapy, b_chemo), (Treatment::Targeted, b_targeted)]
        .into_iter()
        .enumerate()
    {
        let (mut all_sum, mut all_n, mut att_sum, mut att_n) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..fm.nrows() {
            // Linear predictor with both dummies zeroed.
            let eta_ref = eta[i] - b_chemo * fm.x[(i, 1)] - b_targeted * fm.x[(i, 2)];
            let diff = sigmoid_difference(eta_ref + b_arm, eta_ref);
            if !opts.arms_only_ate || arms[i] == arm || arms[i] == Treatment::Radiation {
                all_sum += diff;
                all_n += 1;
            }
            if arms[i] == arm {
                att_sum += diff;
                att_n += 1;
            }
        }
        out[2 * slot] = all_sum / all_n as f64;
        out[2 * slot + 1] = att_sum / att_n as f64;
    }
    Ok(out)
}

/// σ(a) − σ(b), exactly 0 when a == b.
fn sigmoid_difference(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        crate::glm::sigmoid(a) - crate::glm::sigmoid(b)
    }
}

/// ATE and ATT of each treated arm against radiation for one outcome.
pub fn estimate_effects(design: &EffectDesign, opts: &EffectOptions) -> Result<Vec<PointEffect>, CausalError> {
    let v = effects_on(&design.matrix, &design.arms, opts)?;
    Ok(effect_labels()
        .into_iter()
        .zip(v)
        .map(|((treatment, estimand), value)| PointEffect {
            treatment,
            estimand,
            value,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub treatment: Treatment,
    pub outcome: Outcome,
    pub estimand: Estimand,
    pub point: f64,
    pub boot_se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_boot_requested: usize,
    pub n_boot_succeeded: usize,
    pub seed: u64,
}

/// Type-7 sample quantile of sorted data (linear interpolation between order
/// statistics at position (m − 1)q).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resample index vectors for `b` replicates of size `n`, drawn sequentially.
pub fn resample_indices(n: usize, b: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    (0..b)
        .map(|_| (0..n).map(|_| rng.below(n as u64) as usize).collect())
        .collect()
}

/// Point estimates from the full sample with bootstrap standard errors and
/// 2.5/97.5 percentile intervals from `b` patient-level resamples. Failed
/// replicates are skipped and counted by kind.
pub fn bootstrap_effects(
    design: &EffectDesign,
    opts: &EffectOptions,
    b: usize,
    seed: u64,
) -> Result<Vec<EffectEstimate>, CausalError> {
    if b < MIN_BOOT {
        return Err(CausalError::TooFewReplicates(b));
    }
    let point = effects_on(&design.matrix, &design.arms, opts)?;
    let draws = resample_indices(design.matrix.nrows(), b, seed);
    let replicates: Vec<Result<EffectVector, CausalError>> = draws
        .par_iter()
        .map(|idx| {
            let fm = design.matrix.select_rows(idx);
            let arms: Vec<Treatment> = idx.iter().map(|&i| design.arms[i]).collect();
            effects_on(&fm, &arms, opts)
        })
        .collect();

    let mut taxonomy = BTreeMap::new();
    let mut ok = Vec::with_capacity(b);
    for r in replicates {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => *taxonomy.entry(e.kind().to_string()).or_insert(0) += 1,
        }
    }
    if (ok.len() as f64) < MIN_BOOT_SUCCESS * b as f64 {
        return Err(CausalError::TooManyBootFailures {
            requested: b,
            succeeded: ok.len(),
            taxonomy,
        });
    }

    Ok(effect_labels()
        .into_iter()
        .enumerate()
        .map(|(k, (treatment, estimand))| {
            let mut values: Vec<f64> = ok.iter().map(|v| v[k]).collect();
            let boot_se = sample_sd(&values);
            values.sort_by(f64::total_cmp);
            EffectEstimate {
                treatment,
                outcome: design.outcome,
                estimand,
                point: point[k],
                boot_se,
                ci_low: quantile_sorted(&values, 0.025),
                ci_high: quantile_sorted(&values, 0.975),
                n_boot_requested: b,
                n_boot_succeeded: ok.len(),
                seed,
            }
        })
        .collect())
}
