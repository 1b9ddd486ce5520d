use super::CliError;
use crate::cohort::CohortFiles;
use crate::glm::DEFAULT_ALPHA_STAY;
use crate::preprocess::FeatureSet;
use chrono::NaiveDate;
use serde::Deserialize;
use std::path::{Path, PathBuf};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_BOOT: usize = 1000;

fn default_alpha() -> f64 {
    DEFAULT_ALPHA_STAY
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_boot() -> usize {
    DEFAULT_BOOT
}
fn yes() -> bool {
    true
}

/// Run configuration. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory holding the five conventionally named cohort CSVs.
    pub input_dir: Option<PathBuf>,
    pub patients: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub diagnoses: Option<PathBuf>,
    pub medications: Option<PathBuf>,
    pub treatments: Option<PathBuf>,
    /// CSV code map; the built-in default when absent.
    pub code_map: Option<PathBuf>,
    pub end_of_data: NaiveDate,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default = "default_alpha")]
    pub alpha_stay: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_boot")]
    pub boot: usize,
    /// Named predictor list for fit and cv.
    pub feature_set: Option<String>,
    /// Explicit predictor list for fit and cv; overrides `feature_set`.
    pub features: Option<Vec<String>>,
    /// Explicit adjustment covariates for effects (default: the outcome-model list).
    pub effect_covariates: Option<Vec<String>>,
    #[serde(default)]
    pub eliminate_in_causal: bool,
    #[serde(default)]
    pub arms_only_ate: bool,
    /// Run backward elimination inside every training fold.
    #[serde(default = "yes")]
    pub eliminate_in_cv: bool,
    pub outcome_horizon_days: Option<u32>,
    pub troponin_threshold: Option<f64>,
    /// Add radiation treatments for RADIATION_PROCEDURE diagnosis codes.
    #[serde(default)]
    pub coded_radiation: bool,
}

impl RunConfig {
    /// Reads and validates the config, resolving paths against its directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| CliError::Config(format!("{}: not UTF-8", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok((cfg, bytes))
    }

    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.input_dir,
            &mut self.patients,
            &mut self.observations,
            &mut self.diagnoses,
            &mut self.medications,
            &mut self.treatments,
            &mut self.code_map,
            &mut self.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k < 2 {
            return Err(CliError::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.boot < crate::causal::MIN_BOOT {
            return Err(CliError::Config(format!(
                "boot must be at least {}, got {}",
                crate::causal::MIN_BOOT,
                self.boot
            )));
        }
        if !(self.alpha_stay > 0.0 && self.alpha_stay < 1.0) {
            return Err(CliError::Config(format!("alpha_stay must lie in (0, 1), got {}", self.alpha_stay)));
        }
        if let Some(t) = self.troponin_threshold {
            if !t.is_finite() {
                return Err(CliError::Config("troponin_threshold must be finite".into()));
            }
        }
        self.predictors()?;
        Ok(())
    }

    pub fn cohort_files(&self) -> Result<CohortFiles, CliError> {
        let default = self.input_dir.as_ref().map(CohortFiles::in_dir);
        let pick = |explicit: &Option<PathBuf>, from_dir: Option<&PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| from_dir.cloned())
                .ok_or_else(|| CliError::Config(format!("no path for {name}: set input_dir or {name}")))
        };
        Ok(CohortFiles {
            patients: pick(&self.patients, default.as_ref().map(|d| &d.patients), "patients")?,
            observations: pick(&self.observations, default.as_ref().map(|d| &d.observations), "observations")?,
            diagnoses: pick(&self.diagnoses, default.as_ref().map(|d| &d.diagnoses), "diagnoses")?,
            medications: pick(&self.medications, default.as_ref().map(|d| &d.medications), "medications")?,
            treatments: pick(&self.treatments, default.as_ref().map(|d| &d.treatments), "treatments")?,
        })
    }

    /// Predictors for fit and cv.
    pub fn predictors(&self) -> Result<FeatureSet, CliError> {
        if let Some(list) = &self.features {
            return Ok(FeatureSet::Custom(list.clone()));
        }
        match &self.feature_set {
            None => Ok(FeatureSet::OutcomeModel),
            Some(name) => name.parse().map_err(CliError::Config),
        }
    }

    pub fn effect_covariates(&self) -> FeatureSet {
        match &self.effect_covariates {
            Some(list) => FeatureSet::Custom(list.clone()),
            None => FeatureSet::OutcomeModel,
        }
    }
}
