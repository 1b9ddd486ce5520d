//! Longitudinal patient data model and its CSV loader.

mod codemap;
mod load;

pub use codemap::{Category, CodeMap};
pub use load::{
    load_cohort, parse_cohort, CohortFiles, CohortSources, DIAGNOSES_HEADER, MEDICATIONS_HEADER,
    OBSERVATIONS_HEADER, PATIENTS_HEADER, TREATMENTS_HEADER,
};

use chrono::NaiveDate;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("{file}:{line}: column `{column}`: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        column: String,
        reason: String,
    },
    #[error("{file}:{line}: event references unknown patient `{patient_id}`")]
    UnknownPatient {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("{file}:{line}: duplicate patient `{patient_id}`")]
    DuplicatePatient {
        file: String,
        line: u64,
        patient_id: String,
    },
    #[error("{file}:{line}: prefix `{prefix}` already mapped for {code_system}")]
    DuplicatePrefix {
        file: String,
        line: u64,
        code_system: CodeSystem,
        prefix: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Declares a closed enum with its canonical upper-case spelling, used for
/// both CSV parsing and printing.
macro_rules! spelled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl ::std::fmt::Display for $name {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl ::std::str::FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "`{}` is not one of {}",
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}
pub(crate) use spelled_enum;

spelled_enum!(Sex { F => "F", M => "M", Other => "OTHER" });

spelled_enum!(
    /// Vitals and labs, each in its fixed unit (mmHg, kg/m², mg/dL, %, ng/mL).
    ObservationKind {
        Sbp => "SBP",
        Dbp => "DBP",
        Bmi => "BMI",
        Hdl => "HDL",
        Ldl => "LDL",
        Hba1c => "HBA1C",
        Triglyceride => "TRIGLYCERIDE",
        Troponin => "TROPONIN",
    }
);

spelled_enum!(CodeSystem { Icd9 => "ICD9", Icd10 => "ICD10" });

spelled_enum!(
    DrugClass {
        Insulin => "INSULIN",
        Metformin => "METFORMIN",
        Statin => "STATIN",
        AceInhibitor => "ACE_INHIBITOR",
        Arb => "ARB",
        AntihypertensiveCombination => "ANTIHYPERTENSIVE_COMBINATION",
        Vasodilator => "VASODILATOR",
        Antiarrhythmic => "ANTIARRHYTHMIC",
        BetaBlocker => "BETA_BLOCKER",
        CalciumBlocker => "CALCIUM_BLOCKER",
        Diuretic => "DIURETIC",
        AntihyperlipidemicOther => "ANTIHYPERLIPIDEMIC_OTHER",
    }
);

spelled_enum!(
    Treatment {
        Chemotherapy => "CHEMOTHERAPY",
        Targeted => "TARGETED",
        Radiation => "RADIATION",
    }
);

spelled_enum!(
    /// The four cardiac outcomes used as proxies for cardiotoxicity.
    Outcome {
        Chf => "CHF",
        Cad => "CAD",
        Cm => "CM",
        Mi => "MI",
    }
);

impl DrugClass {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Lower-case feature name used in feature sets and reports.
    pub fn feature_name(self) -> &'static str {
        match self {
            DrugClass::Insulin => "insulin",
            DrugClass::Metformin => "metformin",
            DrugClass::Statin => "statin",
            DrugClass::AceInhibitor => "ace_inhibitor",
            DrugClass::Arb => "arb",
            DrugClass::AntihypertensiveCombination => "antihypertensive_combination",
            DrugClass::Vasodilator => "vasodilator",
            DrugClass::Antiarrhythmic => "antiarrhythmic",
            DrugClass::BetaBlocker => "beta_blocker",
            DrugClass::CalciumBlocker => "calcium_blocker",
            DrugClass::Diuretic => "diuretic",
            DrugClass::AntihyperlipidemicOther => "antihyperlipidemic_other",
        }
    }
}

impl Outcome {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn category(self) -> Category {
        match self {
            Outcome::Chf => Category::Chf,
            Outcome::Cad => Category::Cad,
            Outcome::Cm => Category::Cm,
            Outcome::Mi => Category::Mi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub date: NaiveDate,
    pub kind: ObservationKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosisEvent {
    pub date: NaiveDate,
    pub code_system: CodeSystem,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedicationEvent {
    pub date: NaiveDate,
    pub drug_class: DrugClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreatmentEvent {
    pub date: NaiveDate,
    pub treatment: Treatment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub observations: Vec<Observation>,
    pub diagnoses: Vec<DiagnosisEvent>,
    pub medications: Vec<MedicationEvent>,
    pub treatments: Vec<TreatmentEvent>,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, birth_date: NaiveDate, sex: Sex) -> Self {
        Self {
            patient_id: patient_id.into(),
            birth_date,
            sex,
            observations: Vec::new(),
            diagnoses: Vec::new(),
            medications: Vec::new(),
            treatments: Vec::new(),
        }
    }

    pub fn event_count(&self) -> usize {
        self.observations.len() + self.diagnoses.len() + self.medications.len() + self.treatments.len()
    }

    /// Sorts every event list into canonical order so that a record does not
    /// depend on the order its source rows were read in.
    pub fn canonicalize(&mut self) {
        self.observations.sort_by(|a, b| {
            (a.date, a.kind)
                .cmp(&(b.date, b.kind))
                .then(a.value.total_cmp(&b.value))
        });
        self.diagnoses
            .sort_by(|a, b| (a.date, a.code_system, &a.code).cmp(&(b.date, b.code_system, &b.code)));
        self.medications.sort_by_key(|m| (m.date, m.drug_class));
        self.treatments.sort_by_key(|t| (t.date, t.treatment));
    }
}

/// Patients in ascending `patient_id` order. Immutable once loaded.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cohort {
    patients: Vec<PatientRecord>,
}

impl Cohort {
    /// Builds a cohort from records, canonicalizing each and sorting by id.
    /// Fails on a repeated id.
    pub fn from_records(mut patients: Vec<PatientRecord>) -> Result<Self, CohortError> {
        patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
        for w in patients.windows(2) {
            if w[0].patient_id == w[1].patient_id {
                return Err(CohortError::DuplicatePatient {
                    file: "<records>".into(),
                    line: 0,
                    patient_id: w[0].patient_id.clone(),
                });
            }
        }
        for p in &mut patients {
            p.canonicalize();
        }
        Ok(Self { patients })
    }

    pub fn patients(&self) -> &[PatientRecord] {
        &self.patients
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }

    pub fn get(&self, patient_id: &str) -> Option<&PatientRecord> {
        self.patients
            .binary_search_by(|p| p.patient_id.as_str().cmp(patient_id))
            .ok()
            .map(|i| &self.patients[i])
    }

    pub fn event_count(&self) -> usize {
        self.patients.iter().map(PatientRecord::event_count).sum()
    }

    /// Returns a copy in which every diagnosis that the code map classifies as a
    /// radiation procedure also appears as a RADIATION treatment event on the
    /// same date (once per date).
    pub fn with_coded_radiation(&self, code_map: &CodeMap) -> Cohort {
        let mut patients = self.patients.clone();
        for p in &mut patients {
            let mut added: Vec<NaiveDate> = p
                .diagnoses
                .iter()
                .filter(|d| code_map.classify(d) == Some(Category::RadiationProcedure))
                .map(|d| d.date)
                .collect();
            added.sort_unstable();
            added.dedup();
            for date in added {
                let exists = p
                    .treatments
                    .iter()
                    .any(|t| t.date == date && t.treatment == Treatment::Radiation);
                if !exists {
                    p.treatments.push(TreatmentEvent {
                        date,
                        treatment: Treatment::Radiation,
                    });
                }
            }
            p.canonicalize();
        }
        Cohort { patients }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn enum_spellings_round_trip() {
        for k in ObservationKind::ALL {
            assert_eq!(k.as_str().parse::<ObservationKind>().unwrap(), *k);
        }
        for c in DrugClass::ALL {
            assert_eq!(c.as_str().parse::<DrugClass>().unwrap(), *c);
        }
        assert_eq!(DrugClass::ALL.len(), 12);
        assert!("CHEMO".parse::<Treatment>().is_err());
        assert!("f".parse::<Sex>().is_err());
    }

    #[test]
    fn duplicate_record_ids_rejected() {
        let a = PatientRecord::new("p1", d("1960-01-01"), Sex::F);
        let err = Cohort::from_records(vec![a.clone(), a]).unwrap_err();
        assert!(matches!(err, CohortError::DuplicatePatient { .. }));
    }

    #[test]
    fn coded_radiation_adds_treatment_once_per_date() {
        let mut p = PatientRecord::new("p1", d("1960-01-01"), Sex::F);
        for _ in 0..2 {
            p.diagnoses.push(DiagnosisEvent {
                date: d("2015-02-01"),
                code_system: CodeSystem::Icd10,
                code: "Z51.0".into(),
            });
        }
        let cohort = Cohort::from_records(vec![p]).unwrap();
        let out = cohort.with_coded_radiation(&CodeMap::default_map());
        assert_eq!(
            out.patients()[0].treatments,
            vec![TreatmentEvent {
                date: d("2015-02-01"),
                treatment: Treatment::Radiation
            }]
        );
        // Source cohort untouched.
        assert!(cohort.patients()[0].treatments.is_empty());
    }
}
