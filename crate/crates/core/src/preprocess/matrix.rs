use super::{BaselineFeatures, PreprocessError, FEATURE_COLUMNS};
use crate::cohort::{spelled_enum, Outcome, Treatment};
use nalgebra::{DMatrix, DVector};
use std::str::FromStr;

pub const INTERCEPT: &str = "intercept";

spelled_enum!(
    /// Two-arm comparison against the radiation reference arm.
    Contrast {
        ChemoVsRadiation => "CHEMO_VS_RADIATION",
        TargetedVsRadiation => "TARGETED_VS_RADIATION",
    }
);

impl Contrast {
    pub fn treated_arm(self) -> Treatment {
        match self {
            Contrast::ChemoVsRadiation => Treatment::Chemotherapy,
            Contrast::TargetedVsRadiation => Treatment::Targeted,
        }
    }
}

/// What the 0/1 label of a matrix encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Outcome(Outcome),
    /// Rows restricted to the two arms; label 1 for the non-reference arm.
    Contrast(Contrast),
}

const OUTCOME_MODEL: &[&str] = &[
    "sbp",
    "dbp",
    "bmi",
    "hdl",
    "ldl",
    "hba1c",
    "troponin",
    "triglyceride",
    "abnormal_blood_pressure",
    "abnormal_blood_lipid",
    "hyperlipidemia",
    "diabetes",
    "hypertension",
    "insulin",
    "metformin",
    "statin",
    "ace_inhibitor",
    "arb",
    "antihypertensive_combination",
    "vasodilator",
    "antiarrhythmic",
    "beta_blocker",
    "calcium_blocker",
    "chemotherapy",
    "targeted",
    "age",
];

const BASELINE_HEALTH: &[&str] = &[
    "age",
    "sbp",
    "dbp",
    "bmi",
    "ldl",
    "hdl",
    "hba1c",
    "triglyceride",
    "troponin",
    "abnormal_blood_pressure",
    "hypertension",
    "hyperlipidemia",
    "abnormal_blood_lipid",
    "diabetes",
];

const MEDICATION_MODEL: &[&str] = &[
    "age",
    "sbp",
    "dbp",
    "bmi",
    "ldl",
    "hdl",
    "hba1c",
    "troponin",
    "triglyceride",
    "abnormal_blood_pressure",
    "abnormal_blood_lipid",
    "hyperlipidemia",
    "diabetes",
    "hypertension",
    "metformin",
    "insulin",
    "statin",
    "ace_inhibitor",
    "arb",
    "vasodilator",
    "antiarrhythmic",
    "beta_blocker",
    "calcium_blocker",
    "diuretic",
    "antihypertensive_medication",
    "antihyperlipidemia_medication",
];

/// Named predictor lists.
///
/// * `OutcomeModel`: every collected predictor (vitals, labs, pre-conditions,
///   the ten cardiovascular drug classes, treatment dummies, age).
/// * `BaselineHealth`: labs, vitals and pre-conditions only.
/// * `MedicationModel`: baseline health plus medication classes and the two
///   medication summary flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSet {
    OutcomeModel,
    BaselineHealth,
    MedicationModel,
    Custom(Vec<String>),
}

impl FeatureSet {
    pub fn columns(&self) -> Vec<String> {
        let fixed: &[&str] = match self {
            FeatureSet::OutcomeModel => OUTCOME_MODEL,
            FeatureSet::BaselineHealth => BASELINE_HEALTH,
            FeatureSet::MedicationModel => MEDICATION_MODEL,
            FeatureSet::Custom(cols) => return cols.clone(),
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    pub fn name(&self) -> &str {
        match self {
            FeatureSet::OutcomeModel => "OUTCOME_MODEL",
            FeatureSet::BaselineHealth => "BASELINE_HEALTH",
            FeatureSet::MedicationModel => "MEDICATION_MODEL",
            FeatureSet::Custom(_) => "CUSTOM",
        }
    }
}

impl FromStr for FeatureSet {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "OUTCOME_MODEL" => Ok(FeatureSet::OutcomeModel),
            "BASELINE_HEALTH" => Ok(FeatureSet::BaselineHealth),
            "MEDICATION_MODEL" => Ok(FeatureSet::MedicationModel),
            other => Err(format!(
                "`{other}` is not one of OUTCOME_MODEL, BASELINE_HEALTH, MEDICATION_MODEL"
            )),
        }
    }
}

/// Design matrix with a leading intercept column, one row per patient in
/// ascending patient_id order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Rows `rows` (in the given order, repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            row_ids: rows.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Keeps the named columns, in the given order.
    pub fn select_columns(&self, names: &[String]) -> Option<FeatureMatrix> {
        let idx: Option<Vec<usize>> = names.iter().map(|n| self.column_index(n)).collect();
        let idx = idx?;
        Some(FeatureMatrix {
            column_names: names.to_vec(),
            x: self.x.select_columns(&idx),
            y: self.y.clone(),
            row_ids: self.row_ids.clone(),
        })
    }
}

pub fn build_matrix(
    features: &[BaselineFeatures],
    feature_set: &FeatureSet,
    target: Target,
) -> Result<FeatureMatrix, PreprocessError> {
    let columns = feature_set.columns();
    if let Some(bad) = columns.iter().find(|c| !FEATURE_COLUMNS.contains(&c.as_str())) {
        return Err(PreprocessError::UnknownFeature(bad.clone()));
    }

    let mut rows: Vec<&BaselineFeatures> = features
        .iter()
        .filter(|f| match target {
            Target::Outcome(_) => true,
            Target::Contrast(c) => f.treatment == Treatment::Radiation || f.treatment == c.treated_arm(),
        })
        .collect();
    rows.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    let p = columns.len() + 1;
    let x = DMatrix::from_fn(rows.len(), p, |i, j| {
        if j == 0 {
            1.0
        } else {
            rows[i].feature(&columns[j - 1]).expect("validated above")
        }
    });
    let y = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|f| {
            let positive = match target {
                Target::Outcome(o) => f.outcome(o),
                Target::Contrast(c) => f.treatment == c.treated_arm(),
            };
            if positive {
                1.0
            } else {
                0.0
            }
        }),
    );
    let mut column_names = Vec::with_capacity(p);
    column_names.push(INTERCEPT.to_string());
    column_names.extend(columns);
    Ok(FeatureMatrix {
        column_names,
        x,
        y,
        row_ids: rows.iter().map(|f| f.patient_id.clone()).collect(),
    })
}
