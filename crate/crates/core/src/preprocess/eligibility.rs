use super::{ADULT_AGE, MIN_FOLLOWUP_DAYS};
use crate::cohort::{spelled_enum, Category, Cohort, CodeMap, PatientRecord, Sex};
use chrono::{Datelike, NaiveDate};

spelled_enum!(
    ExclusionReason {
        NoTreatment => "NO_TREATMENT",
        NotFemaleAdult => "NOT_FEMALE_ADULT",
        MultipleTreatmentTypes => "MULTIPLE_TREATMENT_TYPES",
        PriorCancer => "PRIOR_CANCER",
        PriorHeartDisease => "PRIOR_HEART_DISEASE",
        InsufficientFollowup => "INSUFFICIENT_FOLLOWUP",
    }
);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EligibilityReport {
    pub included: Vec<String>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl EligibilityReport {
    pub fn reason(&self, patient_id: &str) -> Option<ExclusionReason> {
        self.excluded
            .iter()
            .find(|(id, _)| id == patient_id)
            .map(|(_, r)| *r)
    }
}

/// First treatment date of any kind.
pub fn index_date(p: &PatientRecord) -> Option<NaiveDate> {
    p.treatments.iter().map(|t| t.date).min()
}

/// Completed years between `birth` and `on`.
pub fn age_at(birth: NaiveDate, on: NaiveDate) -> i32 {
    let mut years = on.year() - birth.year();
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    years
}

fn exclusion(p: &PatientRecord, code_map: &CodeMap, end_of_data: NaiveDate) -> Option<ExclusionReason> {
    let Some(index) = index_date(p) else {
        return Some(ExclusionReason::NoTreatment);
    };
    if p.sex != Sex::F || age_at(p.birth_date, index) < ADULT_AGE {
        return Some(ExclusionReason::NotFemaleAdult);
    }
    let first = p.treatments[0].treatment;
    if p.treatments.iter().any(|t| t.treatment != first) {
        return Some(ExclusionReason::MultipleTreatmentTypes);
    }
    let categories = || {
        p.diagnoses
            .iter()
            .filter_map(|d| code_map.classify(d).map(|c| (d.date, c)))
    };
    if categories().any(|(date, c)| c == Category::PriorCancerExcluding && date < index) {
        return Some(ExclusionReason::PriorCancer);
    }
    if categories().any(|(date, c)| c.is_heart_disease() && date <= index) {
        return Some(ExclusionReason::PriorHeartDisease);
    }
    if (end_of_data - index).num_days() < MIN_FOLLOWUP_DAYS {
        return Some(ExclusionReason::InsufficientFollowup);
    }
    None
}

/// Partitions the cohort. Each excluded patient carries the first failing rule
/// in the order: no treatment, not a female adult, several therapy types,
/// prior cancer, prior heart disease, short follow-up.
pub fn apply_eligibility(cohort: &Cohort, code_map: &CodeMap, end_of_data: NaiveDate) -> EligibilityReport {
    let mut report = EligibilityReport::default();
    for p in cohort.patients() {
        match exclusion(p, code_map, end_of_data) {
            None => report.included.push(p.patient_id.clone()),
            Some(reason) => report.excluded.push((p.patient_id.clone(), reason)),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{CodeSystem, DiagnosisEvent, Treatment, TreatmentEvent};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn patient(id: &str, sex: Sex, tx: &[(&str, Treatment)]) -> PatientRecord {
        let mut p = PatientRecord::new(id, d("1960-01-01"), sex);
        for (date, t) in tx {
            p.treatments.push(TreatmentEvent { date: d(date), treatment: *t });
        }
        p.canonicalize();
        p
    }

    fn dx(p: &mut PatientRecord, date: &str, code: &str) {
        p.diagnoses.push(DiagnosisEvent {
            date: d(date),
            code_system: CodeSystem::Icd10,
            code: code.into(),
        });
    }

    #[test]
    fn index_date_is_first_treatment() {
        let p = patient("a", Sex::F, &[("2015-03-01", Treatment::Radiation)]);
        assert_eq!(index_date(&p), Some(d("2015-03-01")));
        let p = patient(
            "a",
            Sex::F,
            &[("2016-01-10", Treatment::Chemotherapy), ("2015-06-02", Treatment::Chemotherapy)],
        );
        assert_eq!(index_date(&p), Some(d("2015-06-02")));
        assert_eq!(index_date(&patient("a", Sex::F, &[])), None);
    }

    #[test]
    fn age_is_floor_of_years() {
        assert_eq!(age_at(d("1960-06-15"), d("2018-06-14")), 57);
        assert_eq!(age_at(d("1960-06-15"), d("2018-06-15")), 58);
        assert_eq!(age_at(d("2000-02-29"), d("2018-02-28")), 17);
        assert_eq!(age_at(d("2000-02-29"), d("2018-03-01")), 18);
    }

    #[test]
    fn rule_examples() {
        let map = CodeMap::default_map();
        let eod = d("2021-12-31");
        let male = patient("m", Sex::M, &[("2018-01-01", Treatment::Radiation)]);
        assert_eq!(exclusion(&male, &map, eod), Some(ExclusionReason::NotFemaleAdult));

        let mut chf = patient("c", Sex::F, &[("2018-01-01", Treatment::Chemotherapy)]);
        dx(&mut chf, "2017-05-01", "I50.9");
        assert_eq!(exclusion(&chf, &map, eod), Some(ExclusionReason::PriorHeartDisease));

        let short = patient("s", Sex::F, &[("2018-01-01", Treatment::Chemotherapy)]);
        assert_eq!(
            exclusion(&short, &map, d("2018-06-01")),
            Some(ExclusionReason::InsufficientFollowup)
        );
        assert_eq!(exclusion(&short, &map, d("2019-01-01")), None);
        assert_eq!(
            exclusion(&short, &map, d("2018-12-31")),
            Some(ExclusionReason::InsufficientFollowup)
        );
    }

    #[test]
    fn boundaries_and_precedence() {
        let map = CodeMap::default_map();
        let eod = d("2021-12-31");
        // Heart disease on the index day excludes; prior cancer on the index day does not.
        let mut p = patient("x", Sex::F, &[("2018-01-01", Treatment::Targeted)]);
        dx(&mut p, "2018-01-01", "C34.1");
        assert_eq!(exclusion(&p, &map, eod), None);
        dx(&mut p, "2018-01-01", "I21.0");
        assert_eq!(exclusion(&p, &map, eod), Some(ExclusionReason::PriorHeartDisease));
        dx(&mut p, "2017-01-01", "C34.1");
        assert_eq!(exclusion(&p, &map, eod), Some(ExclusionReason::PriorCancer));

        // Male with two therapy types reports the earlier rule.
        let p = patient(
            "y",
            Sex::M,
            &[("2018-01-01", Treatment::Targeted), ("2018-02-01", Treatment::Radiation)],
        );
        assert_eq!(exclusion(&p, &map, eod), Some(ExclusionReason::NotFemaleAdult));
        let p = patient("z", Sex::Other, &[]);
        assert_eq!(exclusion(&p, &map, eod), Some(ExclusionReason::NoTreatment));
    }

    #[test]
    fn report_partitions_and_is_stable_on_rerun() {
        let map = CodeMap::default_map();
        let eod = d("2021-12-31");
        let cohort = Cohort::from_records(vec![
            patient("a", Sex::F, &[("2018-01-01", Treatment::Radiation)]),
            patient("b", Sex::M, &[("2018-01-01", Treatment::Radiation)]),
            patient("c", Sex::F, &[]),
        ])
        .unwrap();
        let r = apply_eligibility(&cohort, &map, eod);
        assert_eq!(r.included, vec!["a".to_string()]);
        assert_eq!(r.excluded.len(), 2);
        assert_eq!(r.reason("c"), Some(ExclusionReason::NoTreatment));

        let kept: Vec<PatientRecord> = r.included.iter().map(|id| cohort.get(id).unwrap().clone()).collect();
        let again = apply_eligibility(&Cohort::from_records(kept).unwrap(), &map, eod);
        assert!(again.excluded.is_empty());
    }
}
