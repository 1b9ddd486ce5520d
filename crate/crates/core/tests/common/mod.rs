#![allow(dead_code)]

use cardiotox::cohort::{parse_cohort, CodeMap, Cohort, CohortSources};
use cardiotox::preprocess::{build_features, BaselineFeatures, FeatureMatrix, PreprocessConfig};
use cardiotox::rng::Xoshiro256;
use cardiotox::synth::{generate, SyntheticCohort, SyntheticSpec};
use nalgebra::{DMatrix, DVector};
use std::path::PathBuf;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

pub fn parse_synthetic(cohort: &SyntheticCohort) -> Cohort {
    let [p, o, d, m, t] = cohort.to_csv();
    parse_cohort(CohortSources {
        patients: ("patients.csv".into(), p.as_bytes()),
        observations: ("observations.csv".into(), o.as_bytes()),
        diagnoses: ("diagnoses.csv".into(), d.as_bytes()),
        medications: ("medications.csv".into(), m.as_bytes()),
        treatments: ("treatments.csv".into(), t.as_bytes()),
    })
    .expect("synthetic cohort parses")
}

/// generate -> CSV -> load -> features, the same path the CLI takes.
pub fn synth_features(spec: &SyntheticSpec) -> Vec<BaselineFeatures> {
    let cohort = parse_synthetic(&generate(spec).expect("valid spec"));
    build_features(&cohort, &CodeMap::default_map(), &PreprocessConfig::new(spec.end_of_data))
        .expect("features build")
        .features
}

/// Labs without a fixed imputation default need at least one observed value
/// in the cohort, so scenarios that do not model them still emit them.
pub const FILLER_LABS: &str = r#"
[[covariates]]
name = "dbp"
distribution = { type = "normal", mean = 75.0, sd = 10.0 }
[[covariates]]
name = "bmi"
distribution = { type = "normal", mean = 28.0, sd = 5.0 }
[[covariates]]
name = "triglyceride"
distribution = { type = "lognormal", mu = 4.8, sigma = 0.4 }
"#;

/// Spec header and filler labs shared by the synthetic scenarios. Scenarios
/// that go through preprocessing declare `sbp` themselves.
pub fn spec_text(n: usize, seed: u64, mc_draws: usize, body: &str) -> String {
    format!(
        "n = {n}\nseed = {seed}\nend_of_data = \"2021-12-31\"\nindex_start = \"2015-01-01\"\nindex_end = \"2019-12-31\"\ntruth_mc_draws = {mc_draws}\n{FILLER_LABS}{body}\n"
    )
}

/// Two confounders drive both assignment and the CHF outcome.
pub const CONFOUNDED: &str = r#"
[[covariates]]
name = "sbp"
distribution = { type = "normal", mean = 130.0, sd = 15.0 }
[[covariates]]
name = "diabetes"
distribution = { type = "bernoulli", p = 0.3 }
[treatment]
type = "logit"
chemo = { intercept = -4.0, coefficients = { sbp = 0.025, diabetes = 0.5 } }
targeted = { intercept = 1.5, coefficients = { sbp = -0.015, diabetes = -0.4 } }
[outcomes.CHF]
intercept = -7.2
coefficients = { sbp = 0.03, diabetes = 0.7, chemotherapy = CHEMO, targeted = 0.4 }
"#;

pub fn confounded(n: usize, seed: u64, chemo: f64) -> SyntheticSpec {
    let body = CONFOUNDED.replace("CHEMO", &format!("{chemo:?}"));
    SyntheticSpec::from_toml_str(&spec_text(n, seed, 1_000_000, &body)).expect("valid spec")
}

/// Logistic data with N(0, 1) predictors x1..xp.
pub fn logistic_data(n: usize, intercept: f64, beta: &[f64], seed: u64) -> FeatureMatrix {
    let mut rng = Xoshiro256::seed_from_u64(seed);
    let p = beta.len();
    let mut x = DMatrix::zeros(n, p + 1);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        let mut eta = intercept;
        for j in 0..p {
            let v = rng.standard_normal();
            x[(i, j + 1)] = v;
            eta += beta[j] * v;
        }
        y[i] = if rng.next_f64() < 1.0 / (1.0 + (-eta).exp()) { 1.0 } else { 0.0 };
    }
    let mut column_names = vec!["intercept".to_string()];
    column_names.extend((1..=p).map(|j| format!("x{j}")));
    FeatureMatrix {
        column_names,
        x,
        y,
        row_ids: (0..n).map(|i| format!("R{i:06}")).collect(),
    }
}

/// max_j |X^T (y - p_hat)|_j, computed independently of the fitter.
pub fn max_score(fm: &FeatureMatrix, beta: &[f64]) -> f64 {
    let mut score = vec![0.0; fm.ncols()];
    for i in 0..fm.nrows() {
        let eta: f64 = (0..fm.ncols()).map(|j| fm.x[(i, j)] * beta[j]).sum();
        let r = fm.y[i] - 1.0 / (1.0 + (-eta).exp());
        for (j, s) in score.iter_mut().enumerate() {
            *s += fm.x[(i, j)] * r;
        }
    }
    score.iter().fold(0.0, |m, s| m.max(s.abs()))
}
