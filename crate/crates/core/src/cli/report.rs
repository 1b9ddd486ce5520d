//! CSV renderings of every pipeline artifact. LF line endings, fixed column
//! order, reals through `format::real`.

use crate::causal::EffectEstimate;
use crate::cohort::{DrugClass, Outcome, Treatment};
use crate::eval::{CvReport, RocCurve};
use crate::format::{flag, opt_real, real};
use crate::glm::{CoefficientRow, EliminationTrace};
use crate::preprocess::{BaselineFeatures, ContinuousField, EligibilityReport};
use std::fmt::Write as _;

pub fn exclusions_csv(report: &EligibilityReport) -> String {
    let mut out = String::from("patient_id,reason\n");
    for (id, reason) in &report.excluded {
        writeln!(out, "{id},{reason}").unwrap();
    }
    out
}

pub fn features_csv(features: &[BaselineFeatures]) -> String {
    let mut header: Vec<&str> = vec!["patient_id", "age"];
    header.extend(ContinuousField::ALL.iter().map(|f| f.name()));
    header.extend([
        "troponin",
        "abnormal_blood_pressure",
        "abnormal_blood_lipid",
        "hypertension",
        "diabetes",
        "hyperlipidemia",
    ]);
    header.extend(DrugClass::ALL.iter().map(|d| d.feature_name()));
    header.extend(["antihypertensive_medication", "antihyperlipidemia_medication", "treatment"]);
    let outcome_names: Vec<String> = Outcome::ALL.iter().map(|o| o.as_str().to_lowercase()).collect();
    header.extend(outcome_names.iter().map(String::as_str));
    header.push("imputed");

    let mut out = header.join(",");
    out.push('\n');
    for f in features {
        let mut cells = vec![f.patient_id.clone(), real(f.age)];
        cells.extend(ContinuousField::ALL.iter().map(|c| real(f.continuous(*c))));
        cells.extend(
            [
                f.troponin,
                f.abnormal_blood_pressure,
                f.abnormal_blood_lipid,
                f.hypertension,
                f.diabetes,
                f.hyperlipidemia,
            ]
            .map(|b| flag(b).to_string()),
        );
        cells.extend(f.medications.iter().map(|b| flag(*b).to_string()));
        cells.push(flag(f.antihypertensive_medication).into());
        cells.push(flag(f.antihyperlipidemia_medication).into());
        cells.push(f.treatment.to_string());
        cells.extend(f.outcomes.iter().map(|b| flag(*b).to_string()));
        cells.push(f.imputed.iter().map(|c| c.name()).collect::<Vec<_>>().join(";"));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

type Column<T> = Box<dyn Fn(&BaselineFeatures) -> T>;

/// Cohort summary: means of continuous variables, then share and count of
/// every binary variable, arm and outcome.
pub fn summary_csv(features: &[BaselineFeatures]) -> String {
    let n = features.len();
    let share = |k: usize| if n == 0 { f64::NAN } else { k as f64 / n as f64 };
    let mut out = format!("variable,value,count\nn,{n},{n}\n");

    let mut continuous: Vec<(&str, Column<f64>)> = vec![("age", Box::new(|f| f.age))];
    for c in ContinuousField::ALL {
        continuous.push((c.name(), Box::new(move |f| f.continuous(c))));
    }
    for (name, g) in &continuous {
        let mean = features.iter().map(g).sum::<f64>() / n as f64;
        writeln!(out, "{name},{},{n}", real(mean)).unwrap();
    }

    let mut binary: Vec<(String, Column<bool>)> = vec![
        ("troponin".into(), Box::new(|f| f.troponin)),
        ("abnormal_blood_pressure".into(), Box::new(|f| f.abnormal_blood_pressure)),
        ("abnormal_blood_lipid".into(), Box::new(|f| f.abnormal_blood_lipid)),
        ("hypertension".into(), Box::new(|f| f.hypertension)),
        ("diabetes".into(), Box::new(|f| f.diabetes)),
        ("hyperlipidemia".into(), Box::new(|f| f.hyperlipidemia)),
    ];
    for &d in DrugClass::ALL {
        binary.push((d.feature_name().into(), Box::new(move |f| f.medication(d))));
    }
    binary.push(("antihypertensive_medication".into(), Box::new(|f| f.antihypertensive_medication)));
    binary.push(("antihyperlipidemia_medication".into(), Box::new(|f| f.antihyperlipidemia_medication)));
    for &t in Treatment::ALL {
        binary.push((t.as_str().to_lowercase(), Box::new(move |f| f.treatment == t)));
    }
    for &o in Outcome::ALL {
        binary.push((o.as_str().to_lowercase(), Box::new(move |f| f.outcome(o))));
    }
    for (name, g) in &binary {
        let k = features.iter().filter(|f| g(f)).count();
        writeln!(out, "{name},{},{k}", real(share(k))).unwrap();
    }
    out
}

pub const COEFFICIENT_HEADER: &str = "variable,coefficient,std_error,std_dev,normalized,z,p_value";

pub fn coefficients_csv(rows: &[CoefficientRow]) -> String {
    let mut out = format!("{COEFFICIENT_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.variable,
            real(r.coefficient),
            real(r.std_error),
            opt_real(r.std_dev),
            opt_real(r.normalized),
            real(r.z),
            real(r.p_value)
        )
        .unwrap();
    }
    out
}

pub fn elimination_csv(trace: &EliminationTrace) -> String {
    let mut out = String::from("step,removed,p_value\n");
    for (i, s) in trace.steps.iter().enumerate() {
        writeln!(out, "{},{},{}", i + 1, s.removed, real(s.p_value)).unwrap();
    }
    out
}

pub const CV_HEADER: &str = "outcome,fold,auc";

/// Per-fold rows then MEAN and POOLED for one outcome (no header).
pub fn cv_rows(outcome: Outcome, r: &CvReport) -> String {
    let mut out = String::new();
    for (i, a) in r.per_fold_auc.iter().enumerate() {
        writeln!(out, "{outcome},{},{}", i + 1, opt_real(*a)).unwrap();
    }
    writeln!(out, "{outcome},MEAN,{}", real(r.mean_auc)).unwrap();
    writeln!(out, "{outcome},POOLED,{}", real(r.pooled_auc)).unwrap();
    out
}

pub fn roc_csv(outcome: Outcome, curve: &RocCurve) -> String {
    let mut out = String::from("outcome,fpr,tpr,threshold\n");
    for p in &curve.points {
        writeln!(out, "{outcome},{},{},{}", real(p.fpr), real(p.tpr), real(p.threshold)).unwrap();
    }
    out
}

pub const EFFECTS_HEADER: &str = "treatment,outcome,estimand,point,boot_se,ci_low,ci_high,n_boot_succeeded,seed";

pub fn effect_rows(estimates: &[EffectEstimate]) -> String {
    let mut out = String::new();
    for e in estimates {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.treatment,
            e.outcome,
            e.estimand,
            real(e.point),
            real(e.boot_se),
            real(e.ci_low),
            real(e.ci_high),
            e.n_boot_succeeded,
            e.seed
        )
        .unwrap();
    }
    out
}
