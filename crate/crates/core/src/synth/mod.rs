//! Synthetic cohorts from a declarative generative model, with the model's
//! true effects and AUCs as oracles.
//!
//! A spec is TOML:
//!
//! ```toml
//! n = 2000
//! seed = 7
//! end_of_data = "2021-12-31"
//! index_start = "2014-01-01"
//! index_end = "2019-12-31"
//! truth_mc_draws = 1000000
//!
//! [[covariates]]
//! name = "age"
//! distribution = { type = "normal", mean = 57.5, sd = 12.25 }
//!
//! [[covariates]]
//! name = "diabetes"
//! distribution = { type = "bernoulli", p = 0.165 }
//!
//! [treatment]
//! type = "logit"          # or: type = "randomized", p_chemo = .., p_targeted = ..
//! chemo = { intercept = -1.3, coefficients = { age = -0.02 } }
//! targeted = { intercept = -1.2 }
//!
//! [outcomes.CHF]
//! intercept = -3.2
//! coefficients = { age = 0.03, chemotherapy = 0.6, targeted = 0.7 }
//! ```
//!
//! Covariate names are feature names: `age`, the seven labs and vitals,
//! `troponin`, the three pre-conditions and the twelve medication classes.
//! Binary features take `bernoulli`; continuous ones `normal` or `lognormal`.
//! Age is rounded to whole years and floored at 18; other measurements are
//! floored at 0. Undeclared age defaults to 50; undeclared labs are not emitted.
//!
//! Treatment uses two sequential logits: P(chemo | x) = σ(chemo · x), then
//! P(targeted | not chemo, x) = σ(targeted · x); the rest receive radiation.
//! Outcome logits may use the covariates plus the `chemotherapy` and
//! `targeted` dummies; outcomes without a model never occur.
//!
//! Per patient the stream is consumed in a fixed order: covariates as
//! declared, index-date offset, one uniform for the arm, then for each
//! modelled outcome (CHF, CAD, CM, MI) one uniform and, on an event, its
//! onset offset.

mod generate;
mod truth;

pub use generate::{generate, SyntheticCohort, SyntheticPatient};
pub use truth::{compute_truth, true_ate, true_att, true_auc, truth_csv, write_truth, McEstimate, TruthRow};

use crate::cohort::{Category, DrugClass, Outcome};
use crate::preprocess::{ContinuousField, MIN_FOLLOWUP_DAYS};
use chrono::NaiveDate;
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_AGE: f64 = 50.0;
pub const DEFAULT_MC_DRAWS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub distribution: Distribution,
}

/// Logit-scale linear predictor: intercept + Σ coefficient · variable.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogitSpec {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum TreatmentModel {
    Randomized { p_chemo: f64, p_targeted: f64 },
    Logit { chemo: LogitSpec, targeted: LogitSpec },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub seed: u64,
    pub end_of_data: NaiveDate,
    pub index_start: NaiveDate,
    pub index_end: NaiveDate,
    #[serde(default)]
    pub truth_mc_draws: Option<usize>,
    #[serde(default)]
    pub covariates: Vec<CovariateSpec>,
    pub treatment: TreatmentModel,
    /// Keyed by outcome spelling (CHF, CAD, CM, MI).
    #[serde(default)]
    pub outcomes: BTreeMap<String, LogitSpec>,
}

/// Where a covariate lands in the generated cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthFeature {
    Age,
    Lab(ContinuousField),
    Troponin,
    Condition(Category),
    Medication(DrugClass),
}

impl SynthFeature {
    pub fn from_name(name: &str) -> Option<Self> {
        if name == "age" {
            return Some(SynthFeature::Age);
        }
        if name == "troponin" {
            return Some(SynthFeature::Troponin);
        }
        if let Some(f) = ContinuousField::ALL.iter().find(|f| f.name() == name) {
            return Some(SynthFeature::Lab(*f));
        }
        let condition = match name {
            "hypertension" => Some(Category::Hypertension),
            "diabetes" => Some(Category::Diabetes),
            "hyperlipidemia" => Some(Category::Hyperlipidemia),
            _ => None,
        };
        if let Some(c) = condition {
            return Some(SynthFeature::Condition(c));
        }
        DrugClass::ALL
            .iter()
            .find(|d| d.feature_name() == name)
            .map(|d| SynthFeature::Medication(*d))
    }

    pub fn is_binary(self) -> bool {
        !matches!(self, SynthFeature::Age | SynthFeature::Lab(_))
    }

    /// Maps a raw draw onto the value the cohort files can carry.
    pub fn realize(self, raw: f64) -> f64 {
        match self {
            SynthFeature::Age => raw.round().max(18.0),
            SynthFeature::Lab(_) => raw.max(0.0),
            _ => raw,
        }
    }
}

/// Treatment dummies usable in outcome models.
pub const DUMMIES: [&str; 2] = ["chemotherapy", "targeted"];

impl SyntheticSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let spec: SyntheticSpec = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn mc_draws(&self) -> usize {
        self.truth_mc_draws.unwrap_or(DEFAULT_MC_DRAWS)
    }

    pub fn features(&self) -> Vec<SynthFeature> {
        self.covariates
            .iter()
            .map(|c| SynthFeature::from_name(&c.name).expect("validated"))
            .collect()
    }

    pub fn covariate_names(&self) -> Vec<String> {
        self.covariates.iter().map(|c| c.name.clone()).collect()
    }

    /// Outcome models in outcome order.
    pub fn outcome_models(&self) -> Vec<(Outcome, &LogitSpec)> {
        Outcome::ALL
            .iter()
            .filter_map(|o| self.outcomes.get(o.as_str()).map(|m| (*o, m)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.truth_mc_draws == Some(0) {
            return Err(invalid("truth_mc_draws must be positive"));
        }
        if self.index_start > self.index_end {
            return Err(invalid("index_start is after index_end"));
        }
        if (self.end_of_data - self.index_end).num_days() < MIN_FOLLOWUP_DAYS {
            return Err(invalid(format!(
                "index_end must leave {MIN_FOLLOWUP_DAYS} days of follow-up before end_of_data"
            )));
        }

        let mut seen = BTreeSet::new();
        for c in &self.covariates {
            if !seen.insert(c.name.as_str()) {
                return Err(invalid(format!("covariate `{}` declared twice", c.name)));
            }
            let feature = SynthFeature::from_name(&c.name)
                .ok_or_else(|| invalid(format!("`{}` is not a feature that can be sampled", c.name)))?;
            match (&c.distribution, feature.is_binary()) {
                (Distribution::Bernoulli { p }, true) => {
                    if !(0.0..=1.0).contains(p) {
                        return Err(invalid(format!("`{}`: probability {p} outside [0, 1]", c.name)));
                    }
                }
                (Distribution::Normal { mean, sd }, false) => {
                    if !mean.is_finite() || !sd.is_finite() || *sd < 0.0 {
                        return Err(invalid(format!("`{}`: need finite mean and sd >= 0", c.name)));
                    }
                }
                (Distribution::Lognormal { mu, sigma }, false) => {
                    if !mu.is_finite() || !sigma.is_finite() || *sigma < 0.0 {
                        return Err(invalid(format!("`{}`: need finite mu and sigma >= 0", c.name)));
                    }
                }
                (_, true) => return Err(invalid(format!("`{}` is binary and needs a bernoulli distribution", c.name))),
                (_, false) => {
                    return Err(invalid(format!("`{}` is continuous and needs normal or lognormal", c.name)))
                }
            }
        }

        match &self.treatment {
            TreatmentModel::Randomized { p_chemo, p_targeted } => {
                let ok = (0.0..=1.0).contains(p_chemo)
                    && (0.0..=1.0).contains(p_targeted)
                    && p_chemo + p_targeted <= 1.0;
                if !ok {
                    return Err(invalid("randomized arm probabilities must lie in [0, 1] and sum to at most 1"));
                }
            }
            TreatmentModel::Logit { chemo, targeted } => {
                check_logit("treatment.chemo", chemo, &seen, false)?;
                check_logit("treatment.targeted", targeted, &seen, false)?;
            }
        }

        for (key, model) in &self.outcomes {
            if key.parse::<Outcome>().is_err() {
                return Err(invalid(format!("unknown outcome `{key}`")));
            }
            check_logit(&format!("outcomes.{key}"), model, &seen, true)?;
        }
        Ok(())
    }
}

fn check_logit(label: &str, m: &LogitSpec, covariates: &BTreeSet<&str>, dummies: bool) -> Result<(), SynthError> {
    if !m.intercept.is_finite() {
        return Err(invalid(format!("{label}: intercept must be finite")));
    }
    for (name, b) in &m.coefficients {
        let known = covariates.contains(name.as_str()) || (dummies && DUMMIES.contains(&name.as_str()));
        if !known {
            return Err(invalid(format!("{label}: `{name}` is not a declared covariate")));
        }
        if !b.is_finite() {
            return Err(invalid(format!("{label}: coefficient of `{name}` must be finite")));
        }
    }
    Ok(())
}

/// A logit with coefficients laid out against the covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CompiledLogit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub chemo: f64,
    pub targeted: f64,
}

impl CompiledLogit {
    pub fn new(m: &LogitSpec, names: &[String]) -> Self {
        let coef = |n: &str| m.coefficients.get(n).copied().unwrap_or(0.0);
        Self {
            intercept: m.intercept,
            beta: names.iter().map(|n| coef(n)).collect(),
            chemo: coef(DUMMIES[0]),
            targeted: coef(DUMMIES[1]),
        }
    }

    /// Linear predictor with both dummies at zero.
    pub fn eta_ref(&self, x: &[f64]) -> f64 {
        self.intercept + self.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn arm_shift(&self, arm: crate::cohort::Treatment) -> f64 {
        match arm {
            crate::cohort::Treatment::Chemotherapy => self.chemo,
            crate::cohort::Treatment::Targeted => self.targeted,
            crate::cohort::Treatment::Radiation => 0.0,
        }
    }
}

/// Arm probabilities (chemo, targeted, radiation) for covariates `x`.
pub(crate) fn arm_probabilities(model: &TreatmentModel, names: &[String], x: &[f64]) -> [f64; 3] {
    use crate::glm::sigmoid;
    match model {
        TreatmentModel::Randomized { p_chemo, p_targeted } => [*p_chemo, *p_targeted, 1.0 - p_chemo - p_targeted],
        TreatmentModel::Logit { chemo, targeted } => {
            let c = sigmoid(CompiledLogit::new(chemo, names).eta_ref(x));
            let t = (1.0 - c) * sigmoid(CompiledLogit::new(targeted, names).eta_ref(x));
            [c, t, 1.0 - c - t]
        }
    }
}

pub(crate) fn draw_covariates(spec: &SyntheticSpec, features: &[SynthFeature], rng: &mut crate::rng::Xoshiro256) -> Vec<f64> {
    spec.covariates
        .iter()
        .zip(features)
        .map(|(c, f)| {
            let raw = match c.distribution {
                Distribution::Normal { mean, sd } => mean + sd * rng.standard_normal(),
                Distribution::Lognormal { mu, sigma } => (mu + sigma * rng.standard_normal()).exp(),
                Distribution::Bernoulli { p } => rng.bernoulli(p) as u8 as f64,
            };
            f.realize(raw)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn minimal(extra: &str) -> String {
        format!(
            r#"
n = 100
seed = 7
end_of_data = "2021-12-31"
index_start = "2015-01-01"
index_end = "2019-12-31"
truth_mc_draws = 20000
{extra}
"#
        )
    }

    const RANDOMIZED: &str = "[treatment]\ntype = \"randomized\"\np_chemo = 0.3\np_targeted = 0.3\n";

    #[test]
    fn parses_and_validates() {
        let text = minimal(&format!(
            "[[covariates]]\nname = \"diabetes\"\ndistribution = {{ type = \"bernoulli\", p = 0.2 }}\n{RANDOMIZED}\n[outcomes.CHF]\nintercept = -2.0\ncoefficients = {{ chemotherapy = 1.0, diabetes = 0.5 }}\n"
        ));
        let spec = SyntheticSpec::from_toml_str(&text).unwrap();
        assert_eq!(spec.covariates.len(), 1);
        assert_eq!(spec.outcome_models().len(), 1);
        assert_eq!(spec.mc_draws(), 20000);
    }

    fn rejects(extra: &str, needle: &str) {
        let err = SyntheticSpec::from_toml_str(&minimal(extra)).unwrap_err().to_string();
        assert!(err.contains(needle), "{err}");
    }

    #[test]
    fn invalid_specs() {
        rejects(
            &format!("[[covariates]]\nname = \"shoe_size\"\ndistribution = {{ type = \"normal\", mean = 1.0, sd = 1.0 }}\n{RANDOMIZED}"),
            "can be sampled",
        );
        rejects(
            &format!("[[covariates]]\nname = \"diabetes\"\ndistribution = {{ type = \"bernoulli\", p = 1.5 }}\n{RANDOMIZED}"),
            "outside [0, 1]",
        );
        rejects(
            &format!("[[covariates]]\nname = \"diabetes\"\ndistribution = {{ type = \"normal\", mean = 0.0, sd = 1.0 }}\n{RANDOMIZED}"),
            "binary",
        );
        rejects(
            &format!(
                "[[covariates]]\nname = \"sbp\"\ndistribution = {{ type = \"normal\", mean = 1.0, sd = 1.0 }}\n[[covariates]]\nname = \"sbp\"\ndistribution = {{ type = \"normal\", mean = 1.0, sd = 1.0 }}\n{RANDOMIZED}"
            ),
            "twice",
        );
        rejects(&format!("{RANDOMIZED}\n[outcomes.CHF]\nintercept = -2.0\ncoefficients = {{ bmi = 1.0 }}\n"), "not a declared covariate");
        rejects(&format!("{RANDOMIZED}\n[outcomes.STROKE]\nintercept = -2.0\n"), "unknown outcome");
        rejects("[treatment]\ntype = \"randomized\"\np_chemo = 0.7\np_targeted = 0.7\n", "sum to at most 1");
        rejects(
            "[treatment]\ntype = \"logit\"\nchemo = { intercept = 0.0, coefficients = { chemotherapy = 1.0 } }\ntargeted = { intercept = 0.0 }\n",
            "not a declared covariate",
        );
        rejects("", "treatment");
    }

    #[test]
    fn followup_window_is_checked() {
        let text = minimal(RANDOMIZED).replace("2019-12-31", "2021-06-30");
        assert!(SyntheticSpec::from_toml_str(&text).unwrap_err().to_string().contains("follow-up"));
    }

    #[test]
    fn feature_names_map() {
        assert_eq!(SynthFeature::from_name("age"), Some(SynthFeature::Age));
        assert_eq!(SynthFeature::from_name("hba1c"), Some(SynthFeature::Lab(ContinuousField::Hba1c)));
        assert_eq!(SynthFeature::from_name("diuretic"), Some(SynthFeature::Medication(DrugClass::Diuretic)));
        assert_eq!(SynthFeature::from_name("abnormal_blood_pressure"), None);
        assert_eq!(SynthFeature::Age.realize(16.2), 18.0);
        assert_eq!(SynthFeature::Age.realize(57.5), 58.0);
        assert_eq!(SynthFeature::Lab(ContinuousField::Sbp).realize(-3.0), 0.0);
    }

    #[test]
    fn sequential_logit_probabilities_sum_to_one() {
        let model = TreatmentModel::Logit {
            chemo: LogitSpec { intercept: 0.0, coefficients: BTreeMap::new() },
            targeted: LogitSpec { intercept: 0.0, coefficients: BTreeMap::new() },
        };
        assert_eq!(arm_probabilities(&model, &[], &[]), [0.5, 0.25, 0.25]);
    }
}
