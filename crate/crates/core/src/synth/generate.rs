use super::{arm_probabilities, draw_covariates, CompiledLogit, SynthError, SynthFeature, SyntheticSpec, DEFAULT_AGE};
use crate::cohort::{
    Category, ObservationKind, Outcome, Treatment, DIAGNOSES_HEADER, MEDICATIONS_HEADER,
    OBSERVATIONS_HEADER, PATIENTS_HEADER, TREATMENTS_HEADER,
};
use crate::glm::sigmoid;
use crate::rng::Xoshiro256;
use chrono::{Datelike, Days, NaiveDate};
use std::fmt::Write as _;
use std::path::Path;

/// Days before the index date at which labs and vitals are recorded.
const LAB_LEAD_DAYS: u64 = 30;
/// Days before the index date at which pre-conditions are diagnosed.
const CONDITION_LEAD_DAYS: u64 = 60;
/// Days after the index date at which medications are dispensed.
const MEDICATION_LAG_DAYS: u64 = 14;
/// Outcome onsets fall 1..=365 days after the index date.
const ONSET_WINDOW_DAYS: u64 = 365;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPatient {
    pub patient_id: String,
    pub birth_date: NaiveDate,
    pub index_date: NaiveDate,
    /// Realized covariate values in spec order.
    pub covariates: Vec<f64>,
    pub arm: Treatment,
    /// Indexed by `Outcome::index()`.
    pub onsets: [Option<NaiveDate>; 4],
}

impl SyntheticPatient {
    pub fn outcome(&self, o: Outcome) -> bool {
        self.onsets[o.index()].is_some()
    }

    pub fn age(&self, spec: &SyntheticSpec) -> f64 {
        spec.covariates
            .iter()
            .position(|c| c.name == "age")
            .map_or(DEFAULT_AGE, |j| self.covariates[j])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub spec: SyntheticSpec,
    pub patients: Vec<SyntheticPatient>,
}

fn birth_date_for(index: NaiveDate, age: u32) -> NaiveDate {
    let year = index.year() - age as i32;
    index
        .with_year(year)
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(year, 2, 28).expect("28 Feb exists"))
}

/// Samples the cohort. Deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCohort, SynthError> {
    spec.validate()?;
    let names = spec.covariate_names();
    let features = spec.features();
    let outcome_models: Vec<(Outcome, CompiledLogit)> = spec
        .outcome_models()
        .into_iter()
        .map(|(o, m)| (o, CompiledLogit::new(m, &names)))
        .collect();
    let span = (spec.index_end - spec.index_start).num_days() as u64 + 1;
    let width = spec.n.to_string().len().max(6);
    let mut rng = Xoshiro256::seed_from_u64(spec.seed);

    let mut patients = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let covariates = draw_covariates(spec, &features, &mut rng);
        let index_date = spec.index_start + Days::new(rng.below(span));
        let probs = arm_probabilities(&spec.treatment, &names, &covariates);
        let u = rng.next_f64();
        let arm = if u < probs[0] {
            Treatment::Chemotherapy
        } else if u < probs[0] + probs[1] {
            Treatment::Targeted
        } else {
            Treatment::Radiation
        };
        let mut onsets = [None; 4];
        for (o, m) in &outcome_models {
            let p = sigmoid(m.eta_ref(&covariates) + m.arm_shift(arm));
            if rng.bernoulli(p) {
                onsets[o.index()] = Some(index_date + Days::new(1 + rng.below(ONSET_WINDOW_DAYS)));
            }
        }
        let mut patient = SyntheticPatient {
            patient_id: format!("S{:0width$}", i + 1),
            birth_date: index_date,
            index_date,
            covariates,
            arm,
            onsets,
        };
        patient.birth_date = birth_date_for(index_date, patient.age(spec) as u32);
        patients.push(patient);
    }
    Ok(SyntheticCohort {
        spec: spec.clone(),
        patients,
    })
}

fn condition_code(c: Category) -> &'static str {
    match c {
        Category::Hypertension => "I10",
        Category::Diabetes => "E11.9",
        Category::Hyperlipidemia => "E78.5",
        Category::Chf => "I50.9",
        Category::Cad => "I25.10",
        Category::Cm => "I42.9",
        Category::Mi => "I21.9",
        _ => unreachable!("only conditions and outcomes are emitted"),
    }
}

/// Primary breast-cancer diagnosis recorded on the index date.
const BREAST_CANCER_CODE: &str = "C50.911";

impl SyntheticCohort {
    /// The five cohort tables as CSV text, in the order patients,
    /// observations, diagnoses, medications, treatments. Codes come from the
    /// default code map.
    pub fn to_csv(&self) -> [String; 5] {
        let header = |h: &[&str]| format!("{}\n", h.join(","));
        let mut patients = header(PATIENTS_HEADER);
        let mut observations = header(OBSERVATIONS_HEADER);
        let mut diagnoses = header(DIAGNOSES_HEADER);
        let mut medications = header(MEDICATIONS_HEADER);
        let mut treatments = header(TREATMENTS_HEADER);
        let features = self.spec.features();

        for p in &self.patients {
            let id = &p.patient_id;
            let lab_date = p.index_date - Days::new(LAB_LEAD_DAYS);
            let condition_date = p.index_date - Days::new(CONDITION_LEAD_DAYS);
            let medication_date = p.index_date + Days::new(MEDICATION_LAG_DAYS);
            writeln!(patients, "{id},{},F", p.birth_date).unwrap();
            writeln!(diagnoses, "{id},{},ICD10,{BREAST_CANCER_CODE}", p.index_date).unwrap();
            for (f, v) in features.iter().zip(&p.covariates) {
                match f {
                    SynthFeature::Age => {}
                    SynthFeature::Lab(field) => {
                        writeln!(observations, "{id},{lab_date},{},{v}", field.kind()).unwrap()
                    }
                    SynthFeature::Troponin if *v == 1.0 => {
                        writeln!(observations, "{id},{lab_date},{},1", ObservationKind::Troponin).unwrap()
                    }
                    SynthFeature::Condition(c) if *v == 1.0 => {
                        writeln!(diagnoses, "{id},{condition_date},ICD10,{}", condition_code(*c)).unwrap()
                    }
                    SynthFeature::Medication(d) if *v == 1.0 => {
                        writeln!(medications, "{id},{medication_date},{d}").unwrap()
                    }
                    _ => {}
                }
            }
            for o in Outcome::ALL {
                if let Some(onset) = p.onsets[o.index()] {
                    writeln!(diagnoses, "{id},{onset},ICD10,{}", condition_code(o.category())).unwrap();
                }
            }
            writeln!(treatments, "{id},{},{}", p.index_date, p.arm).unwrap();
        }
        [patients, observations, diagnoses, medications, treatments]
    }

    /// Writes the five cohort CSVs into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| SynthError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let names = ["patients.csv", "observations.csv", "diagnoses.csv", "medications.csv", "treatments.csv"];
        for (name, text) in names.iter().zip(self.to_csv()) {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(io(&path))?;
        }
        Ok(())
    }
}
