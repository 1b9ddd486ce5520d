//! Eligibility, index-date anchoring, baseline summarization, imputation and
//! design-matrix assembly.

mod baseline;
mod eligibility;
mod matrix;

pub use baseline::{
    cohort_means, impute, summarize_baseline, BaselineFeatures, CohortMeans, ContinuousField,
    PartialFeatures, FEATURE_COLUMNS,
};
pub use eligibility::{age_at, apply_eligibility, index_date, EligibilityReport, ExclusionReason};
pub use matrix::{build_matrix, Contrast, FeatureMatrix, FeatureSet, Target, INTERCEPT};

use crate::cohort::{Cohort, CodeMap, DrugClass};
use chrono::NaiveDate;
use thiserror::Error;

/// Follow-up must last at least this many days after the index date.
pub const MIN_FOLLOWUP_DAYS: i64 = 365;
pub const ADULT_AGE: i32 = 18;

pub const HDL_DEFAULT: f64 = 55.0;
pub const LDL_DEFAULT: f64 = 115.0;
pub const HBA1C_DEFAULT: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("cannot impute `{field}`: no observed values in the included cohort")]
    EmptyCohortMean { field: &'static str },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("patient `{0}` has no index date")]
    NoIndexDate(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Last date covered by the extract; the outcome window is (index, end_of_data].
    pub end_of_data: NaiveDate,
    /// Optional cap on the outcome window, in days after the index date.
    pub outcome_horizon_days: Option<u32>,
    /// When set, the troponin flag requires the latest pre-index troponin to
    /// exceed this value; otherwise any pre-index troponin draw sets it.
    pub troponin_threshold: Option<f64>,
    pub antihypertensive_classes: Vec<DrugClass>,
    pub antihyperlipidemia_classes: Vec<DrugClass>,
}

impl PreprocessConfig {
    pub fn new(end_of_data: NaiveDate) -> Self {
        use DrugClass::*;
        Self {
            end_of_data,
            outcome_horizon_days: None,
            troponin_threshold: None,
            antihypertensive_classes: vec![
                AceInhibitor,
                Arb,
                BetaBlocker,
                CalciumBlocker,
                Diuretic,
                Vasodilator,
                AntihypertensiveCombination,
            ],
            antihyperlipidemia_classes: vec![Statin, AntihyperlipidemicOther],
        }
    }
}

/// Everything the feature stage produces for one cohort.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub eligibility: EligibilityReport,
    pub means: CohortMeans,
    /// One entry per included patient, ascending patient_id.
    pub features: Vec<BaselineFeatures>,
}

/// Runs eligibility, summarization, cohort means and imputation.
pub fn build_features(
    cohort: &Cohort,
    code_map: &CodeMap,
    config: &PreprocessConfig,
) -> Result<FeatureTable, PreprocessError> {
    let eligibility = apply_eligibility(cohort, code_map, config.end_of_data);
    let partials = eligibility
        .included
        .iter()
        .map(|id| {
            let p = cohort.get(id).expect("included id comes from the cohort");
            let index = index_date(p).ok_or_else(|| PreprocessError::NoIndexDate(id.clone()))?;
            Ok(summarize_baseline(p, index, code_map, config))
        })
        .collect::<Result<Vec<_>, PreprocessError>>()?;
    let means = cohort_means(&partials);
    let features = partials
        .iter()
        .map(|p| impute(p, &means))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureTable {
        eligibility,
        means,
        features,
    })
}
