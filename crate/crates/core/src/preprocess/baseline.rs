use super::{
    age_at, PreprocessConfig, PreprocessError, HBA1C_DEFAULT, HDL_DEFAULT, LDL_DEFAULT,
};
use crate::cohort::{Category, CodeMap, DrugClass, ObservationKind, Outcome, PatientRecord, Treatment};
use chrono::NaiveDate;
use std::collections::BTreeSet;

/// The seven continuous baseline measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ContinuousField {
    Sbp,
    Dbp,
    Bmi,
    Hdl,
    Ldl,
    Hba1c,
    Triglyceride,
}

impl ContinuousField {
    pub const ALL: [ContinuousField; 7] = [
        ContinuousField::Sbp,
        ContinuousField::Dbp,
        ContinuousField::Bmi,
        ContinuousField::Hdl,
        ContinuousField::Ldl,
        ContinuousField::Hba1c,
        ContinuousField::Triglyceride,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ContinuousField::Sbp => "sbp",
            ContinuousField::Dbp => "dbp",
            ContinuousField::Bmi => "bmi",
            ContinuousField::Hdl => "hdl",
            ContinuousField::Ldl => "ldl",
            ContinuousField::Hba1c => "hba1c",
            ContinuousField::Triglyceride => "triglyceride",
        }
    }

    pub fn kind(self) -> ObservationKind {
        match self {
            ContinuousField::Sbp => ObservationKind::Sbp,
            ContinuousField::Dbp => ObservationKind::Dbp,
            ContinuousField::Bmi => ObservationKind::Bmi,
            ContinuousField::Hdl => ObservationKind::Hdl,
            ContinuousField::Ldl => ObservationKind::Ldl,
            ContinuousField::Hba1c => ObservationKind::Hba1c,
            ContinuousField::Triglyceride => ObservationKind::Triglyceride,
        }
    }

    /// Fixed fill-in for fields imputed with a constant; `None` for fields
    /// imputed with the cohort mean.
    pub fn fixed_default(self) -> Option<f64> {
        match self {
            ContinuousField::Hdl => Some(HDL_DEFAULT),
            ContinuousField::Ldl => Some(LDL_DEFAULT),
            ContinuousField::Hba1c => Some(HBA1C_DEFAULT),
            _ => None,
        }
    }
}

/// Baseline summary before imputation. `values[f]` is `None` when the patient
/// has no observation of that kind before the index date.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialFeatures {
    pub patient_id: String,
    pub age: f64,
    pub values: [Option<f64>; 7],
    pub troponin: bool,
    pub hypertension: bool,
    pub diabetes: bool,
    pub hyperlipidemia: bool,
    pub medications: [bool; 12],
    pub antihypertensive_medication: bool,
    pub antihyperlipidemia_medication: bool,
    pub treatment: Treatment,
    pub outcomes: [bool; 4],
    /// Fields already imputed upstream; carried through so imputation is idempotent.
    pub imputed: BTreeSet<ContinuousField>,
}

impl PartialFeatures {
    pub fn value(&self, f: ContinuousField) -> Option<f64> {
        self.values[f as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFeatures {
    pub patient_id: String,
    pub age: f64,
    pub sbp: f64,
    pub dbp: f64,
    pub bmi: f64,
    pub hdl: f64,
    pub ldl: f64,
    pub hba1c: f64,
    pub triglyceride: f64,
    pub troponin: bool,
    pub abnormal_blood_pressure: bool,
    pub abnormal_blood_lipid: bool,
    pub hypertension: bool,
    pub diabetes: bool,
    pub hyperlipidemia: bool,
    /// Indexed by `DrugClass::index()`.
    pub medications: [bool; 12],
    pub antihypertensive_medication: bool,
    pub antihyperlipidemia_medication: bool,
    pub treatment: Treatment,
    /// Indexed by `Outcome::index()`.
    pub outcomes: [bool; 4],
    pub imputed: BTreeSet<ContinuousField>,
}

/// Numeric feature columns of `BaselineFeatures`, in declaration order, plus
/// the two treatment dummies (radiation is the reference arm).
pub const FEATURE_COLUMNS: &[&str] = &[
    "age",
    "sbp",
    "dbp",
    "bmi",
    "hdl",
    "ldl",
    "hba1c",
    "triglyceride",
    "troponin",
    "abnormal_blood_pressure",
    "abnormal_blood_lipid",
    "hypertension",
    "diabetes",
    "hyperlipidemia",
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
    "diuretic",
    "antihyperlipidemic_other",
    "antihypertensive_medication",
    "antihyperlipidemia_medication",
    "chemotherapy",
    "targeted",
];

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

pub fn abnormal_blood_pressure(sbp: f64, dbp: f64) -> bool {
    sbp > 130.0 || dbp > 80.0
}

pub fn abnormal_blood_lipid(ldl: f64, hdl: f64, triglyceride: f64) -> bool {
    ldl > 130.0 || hdl < 50.0 || triglyceride > 150.0
}

impl BaselineFeatures {
    pub fn continuous(&self, f: ContinuousField) -> f64 {
        match f {
            ContinuousField::Sbp => self.sbp,
            ContinuousField::Dbp => self.dbp,
            ContinuousField::Bmi => self.bmi,
            ContinuousField::Hdl => self.hdl,
            ContinuousField::Ldl => self.ldl,
            ContinuousField::Hba1c => self.hba1c,
            ContinuousField::Triglyceride => self.triglyceride,
        }
    }

    pub fn medication(&self, class: DrugClass) -> bool {
        self.medications[class.index()]
    }

    pub fn outcome(&self, outcome: Outcome) -> bool {
        self.outcomes[outcome.index()]
    }

    /// Numeric value of a named feature (booleans as 0/1), or `None` for an
    /// unknown name.
    pub fn feature(&self, name: &str) -> Option<f64> {
        if let Some(f) = ContinuousField::ALL.iter().find(|f| f.name() == name) {
            return Some(self.continuous(*f));
        }
        if let Some(c) = DrugClass::ALL.iter().find(|c| c.feature_name() == name) {
            return Some(b(self.medication(*c)));
        }
        let v = match name {
            "age" => self.age,
            "troponin" => b(self.troponin),
            "abnormal_blood_pressure" => b(self.abnormal_blood_pressure),
            "abnormal_blood_lipid" => b(self.abnormal_blood_lipid),
            "hypertension" => b(self.hypertension),
            "diabetes" => b(self.diabetes),
            "hyperlipidemia" => b(self.hyperlipidemia),
            "antihypertensive_medication" => b(self.antihypertensive_medication),
            "antihyperlipidemia_medication" => b(self.antihyperlipidemia_medication),
            "chemotherapy" => b(self.treatment == Treatment::Chemotherapy),
            "targeted" => b(self.treatment == Treatment::Targeted),
            _ => return None,
        };
        Some(v)
    }

    /// Back to the pre-imputation form with every value present.
    pub fn to_partial(&self) -> PartialFeatures {
        let mut values = [None; 7];
        for f in ContinuousField::ALL {
            values[f as usize] = Some(self.continuous(f));
        }
        PartialFeatures {
            patient_id: self.patient_id.clone(),
            age: self.age,
            values,
            troponin: self.troponin,
            hypertension: self.hypertension,
            diabetes: self.diabetes,
            hyperlipidemia: self.hyperlipidemia,
            medications: self.medications,
            antihypertensive_medication: self.antihypertensive_medication,
            antihyperlipidemia_medication: self.antihyperlipidemia_medication,
            treatment: self.treatment,
            outcomes: self.outcomes,
            imputed: self.imputed.clone(),
        }
    }
}

/// Latest pre-index value of one observation kind; same-day readings are averaged.
fn closest_before(p: &PatientRecord, kind: ObservationKind, index: NaiveDate) -> Option<f64> {
    let latest = p
        .observations
        .iter()
        .filter(|o| o.kind == kind && o.date < index)
        .map(|o| o.date)
        .max()?;
    let same_day: Vec<f64> = p
        .observations
        .iter()
        .filter(|o| o.kind == kind && o.date == latest)
        .map(|o| o.value)
        .collect();
    Some(same_day.iter().sum::<f64>() / same_day.len() as f64)
}

/// Summarizes one patient around `index`.
///
/// Labs and vitals use observations strictly before the index date,
/// pre-conditions use diagnoses strictly before it, medications count from the
/// index date on, and outcomes count strictly after it up to the end of data
/// (or the configured horizon).
pub fn summarize_baseline(
    p: &PatientRecord,
    index: NaiveDate,
    code_map: &CodeMap,
    config: &PreprocessConfig,
) -> PartialFeatures {
    let mut values = [None; 7];
    for f in ContinuousField::ALL {
        values[f as usize] = closest_before(p, f.kind(), index);
    }

    let troponin = match config.troponin_threshold {
        None => p
            .observations
            .iter()
            .any(|o| o.kind == ObservationKind::Troponin && o.date < index),
        Some(cut) => closest_before(p, ObservationKind::Troponin, index).is_some_and(|v| v > cut),
    };

    let mut window_end = config.end_of_data;
    if let Some(h) = config.outcome_horizon_days {
        window_end = window_end.min(index + chrono::Days::new(h as u64));
    }
    let mut pre = BTreeSet::new();
    let mut outcomes = [false; 4];
    for dx in &p.diagnoses {
        let Some(cat) = code_map.classify(dx) else {
            continue;
        };
        if dx.date < index {
            pre.insert(cat);
        }
        if dx.date > index && dx.date <= window_end {
            if let Some(o) = Outcome::ALL.iter().find(|o| o.category() == cat) {
                outcomes[o.index()] = true;
            }
        }
    }

    let mut medications = [false; 12];
    for m in p.medications.iter().filter(|m| m.date >= index) {
        medications[m.drug_class.index()] = true;
    }
    let any_of = |classes: &[DrugClass]| classes.iter().any(|c| medications[c.index()]);

    let treatment = p
        .treatments
        .iter()
        .filter(|t| t.date == index)
        .map(|t| t.treatment)
        .min()
        .expect("index date comes from a treatment event");

    PartialFeatures {
        patient_id: p.patient_id.clone(),
        age: age_at(p.birth_date, index) as f64,
        values,
        troponin,
        hypertension: pre.contains(&Category::Hypertension),
        diabetes: pre.contains(&Category::Diabetes),
        hyperlipidemia: pre.contains(&Category::Hyperlipidemia),
        medications,
        antihypertensive_medication: any_of(&config.antihypertensive_classes),
        antihyperlipidemia_medication: any_of(&config.antihyperlipidemia_classes),
        treatment,
        outcomes,
        imputed: BTreeSet::new(),
    }
}

/// Means of the observed values of the mean-imputed fields
/// (sbp, dbp, bmi, triglyceride). `None` when nothing was observed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CohortMeans {
    pub values: [Option<f64>; 7],
}

impl CohortMeans {
    pub fn get(&self, f: ContinuousField) -> Option<f64> {
        self.values[f as usize]
    }
}

pub fn cohort_means(partials: &[PartialFeatures]) -> CohortMeans {
    let mut means = CohortMeans::default();
    for f in ContinuousField::ALL {
        if f.fixed_default().is_some() {
            continue;
        }
        let observed: Vec<f64> = partials.iter().filter_map(|p| p.value(f)).collect();
        if !observed.is_empty() {
            means.values[f as usize] = Some(observed.iter().sum::<f64>() / observed.len() as f64);
        }
    }
    means
}

/// Fills missing values (cohort mean for sbp/dbp/bmi/triglyceride; 55, 115 and
/// 6.0 for hdl, ldl and hba1c) and derives the abnormality flags from the
/// completed values.
pub fn impute(p: &PartialFeatures, means: &CohortMeans) -> Result<BaselineFeatures, PreprocessError> {
    let mut imputed = p.imputed.clone();
    let mut filled = [0.0; 7];
    for f in ContinuousField::ALL {
        filled[f as usize] = match p.value(f) {
            Some(v) => v,
            None => {
                imputed.insert(f);
                match f.fixed_default() {
                    Some(v) => v,
                    None => means
                        .get(f)
                        .ok_or(PreprocessError::EmptyCohortMean { field: f.name() })?,
                }
            }
        };
    }
    let [sbp, dbp, bmi, hdl, ldl, hba1c, triglyceride] = filled;
    Ok(BaselineFeatures {
        patient_id: p.patient_id.clone(),
        age: p.age,
        sbp,
        dbp,
        bmi,
        hdl,
        ldl,
        hba1c,
        triglyceride,
        troponin: p.troponin,
        abnormal_blood_pressure: abnormal_blood_pressure(sbp, dbp),
        abnormal_blood_lipid: abnormal_blood_lipid(ldl, hdl, triglyceride),
        hypertension: p.hypertension,
        diabetes: p.diabetes,
        hyperlipidemia: p.hyperlipidemia,
        medications: p.medications,
        antihypertensive_medication: p.antihypertensive_medication,
        antihyperlipidemia_medication: p.antihyperlipidemia_medication,
        treatment: p.treatment,
        outcomes: p.outcomes,
        imputed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{
        CodeSystem, DiagnosisEvent, MedicationEvent, Observation, Sex, TreatmentEvent,
    };
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn base(tx_date: &str) -> PatientRecord {
        let mut p = PatientRecord::new("p", d("1960-01-01"), Sex::F);
        p.treatments.push(TreatmentEvent {
            date: d(tx_date),
            treatment: Treatment::Radiation,
        });
        p
    }

    fn obs(p: &mut PatientRecord, date: &str, kind: ObservationKind, value: f64) {
        p.observations.push(Observation { date: d(date), kind, value });
    }

    fn config() -> PreprocessConfig {
        PreprocessConfig::new(d("2021-12-31"))
    }

    fn summarize(p: &PatientRecord) -> PartialFeatures {
        summarize_baseline(p, d("2018-01-01"), &CodeMap::default_map(), &config())
    }

    #[test]
    fn closest_before_index_rule() {
        let mut p = base("2018-01-01");
        obs(&mut p, "2017-01-01", ObservationKind::Sbp, 140.0);
        obs(&mut p, "2017-06-01", ObservationKind::Sbp, 120.0);
        assert_eq!(summarize(&p).value(ContinuousField::Sbp), Some(120.0));
    }

    #[test]
    fn same_day_readings_average() {
        let mut p = base("2018-01-01");
        obs(&mut p, "2017-06-01", ObservationKind::Bmi, 27.0);
        obs(&mut p, "2017-06-01", ObservationKind::Bmi, 29.0);
        assert_eq!(summarize(&p).value(ContinuousField::Bmi), Some(28.0));
    }

    #[test]
    fn post_index_only_is_missing() {
        let mut p = base("2018-01-01");
        obs(&mut p, "2018-03-01", ObservationKind::Ldl, 150.0);
        obs(&mut p, "2018-01-01", ObservationKind::Ldl, 150.0);
        assert_eq!(summarize(&p).value(ContinuousField::Ldl), None);
    }

    #[test]
    fn troponin_presence_or_threshold() {
        let mut p = base("2018-01-01");
        obs(&mut p, "2017-01-01", ObservationKind::Troponin, 0.01);
        assert!(summarize(&p).troponin);
        let mut cfg = config();
        cfg.troponin_threshold = Some(0.04);
        let s = summarize_baseline(&p, d("2018-01-01"), &CodeMap::default_map(), &cfg);
        assert!(!s.troponin);
        obs(&mut p, "2017-02-01", ObservationKind::Troponin, 0.5);
        let s = summarize_baseline(&p, d("2018-01-01"), &CodeMap::default_map(), &cfg);
        assert!(s.troponin);
    }

    #[test]
    fn event_windows() {
        let mut p = base("2018-01-01");
        let push_dx = |p: &mut PatientRecord, date: &str, code: &str| {
            p.diagnoses.push(DiagnosisEvent {
                date: d(date),
                code_system: CodeSystem::Icd10,
                code: code.into(),
            })
        };
        push_dx(&mut p, "2017-12-31", "E11.9");
        push_dx(&mut p, "2018-01-01", "I10");
        push_dx(&mut p, "2018-01-01", "I50.9");
        push_dx(&mut p, "2019-01-01", "I21.0");
        push_dx(&mut p, "2022-01-01", "I42.0");
        p.medications.push(MedicationEvent { date: d("2017-12-31"), drug_class: DrugClass::Insulin });
        p.medications.push(MedicationEvent { date: d("2018-01-01"), drug_class: DrugClass::Diuretic });
        p.medications.push(MedicationEvent { date: d("2019-01-01"), drug_class: DrugClass::AntihyperlipidemicOther });
        let s = summarize(&p);
        assert!(s.diabetes);
        assert!(!s.hypertension);
        assert_eq!(s.outcomes, [false, false, false, true]);
        assert!(!s.medications[DrugClass::Insulin.index()]);
        assert!(s.medications[DrugClass::Diuretic.index()]);
        assert!(s.antihypertensive_medication);
        assert!(s.antihyperlipidemia_medication);

        let mut cfg = config();
        cfg.outcome_horizon_days = Some(100);
        let s = summarize_baseline(&p, d("2018-01-01"), &CodeMap::default_map(), &cfg);
        assert_eq!(s.outcomes, [false; 4]);
    }

    #[test]
    fn imputation_constants_and_means() {
        let p = summarize(&base("2018-01-01"));
        let mut means = CohortMeans::default();
        for (f, v) in [
            (ContinuousField::Sbp, 126.0),
            (ContinuousField::Dbp, 74.2),
            (ContinuousField::Bmi, 28.7),
            (ContinuousField::Triglyceride, 128.1),
        ] {
            means.values[f as usize] = Some(v);
        }
        let f = impute(&p, &means).unwrap();
        assert_eq!(f.hdl, 55.0);
        assert_eq!(f.ldl, 115.0);
        assert_eq!(f.hba1c, 6.0);
        assert_eq!(f.sbp, 126.0);
        assert_eq!(f.imputed.len(), 7);
        // hdl 55, ldl 115, trig 128.1: normal lipids; 126/74.2: normal pressure
        assert!(!f.abnormal_blood_lipid);
        assert!(!f.abnormal_blood_pressure);
    }

    #[test]
    fn nothing_missing_is_identity() {
        let mut p = summarize(&base("2018-01-01"));
        p.values = [Some(131.0), Some(70.0), Some(25.0), Some(50.0), Some(130.0), Some(5.0), Some(150.0)];
        let f = impute(&p, &CohortMeans::default()).unwrap();
        assert!(f.imputed.is_empty());
        assert_eq!(f.to_partial(), p);
        assert!(f.abnormal_blood_pressure);
        // Strict inequalities: 130, 50, 150 are all on the normal side.
        assert!(!f.abnormal_blood_lipid);
    }

    #[test]
    fn missing_mean_field_without_observations_errors() {
        let p = summarize(&base("2018-01-01"));
        let err = impute(&p, &cohort_means(std::slice::from_ref(&p))).unwrap_err();
        assert_eq!(err, PreprocessError::EmptyCohortMean { field: "sbp" });
    }

    #[test]
    fn unknown_feature_name() {
        let mut p = summarize(&base("2018-01-01"));
        p.values = [Some(1.0); 7];
        let f = impute(&p, &CohortMeans::default()).unwrap();
        assert_eq!(f.feature("height"), None);
        for name in FEATURE_COLUMNS {
            assert!(f.feature(name).is_some(), "{name}");
        }
    }

    fn arb_partial() -> impl Strategy<Value = PartialFeatures> {
        (
            proptest::collection::vec(proptest::option::of(0.0f64..400.0), 7),
            any::<[bool; 12]>(),
            any::<[bool; 4]>(),
        )
            .prop_map(|(vals, medications, outcomes)| {
                let mut values = [None; 7];
                values.copy_from_slice(&vals);
                PartialFeatures {
                    patient_id: "p".into(),
                    age: 50.0,
                    values,
                    troponin: false,
                    hypertension: false,
                    diabetes: true,
                    hyperlipidemia: false,
                    medications,
                    antihypertensive_medication: false,
                    antihyperlipidemia_medication: true,
                    treatment: Treatment::Targeted,
                    outcomes,
                    imputed: BTreeSet::new(),
                }
            })
    }

    proptest! {
        #[test]
        fn impute_is_idempotent_and_flags_hold(p in arb_partial(), m in proptest::collection::vec(1.0f64..300.0, 4)) {
            let means = CohortMeans { values: [Some(m[0]), Some(m[1]), Some(m[2]), None, None, None, Some(m[3])] };
            let once = impute(&p, &means).unwrap();
            let twice = impute(&once.to_partial(), &means).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.abnormal_blood_pressure, once.sbp > 130.0 || once.dbp > 80.0);
            prop_assert_eq!(
                once.abnormal_blood_lipid,
                once.ldl > 130.0 || once.hdl < 50.0 || once.triglyceride > 150.0
            );
            for f in ContinuousField::ALL {
                prop_assert!(once.continuous(f).is_finite());
                prop_assert_eq!(once.imputed.contains(&f), p.value(f).is_none());
            }
        }
    }
}
