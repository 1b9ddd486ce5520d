use super::{
    Cohort, CohortError, DiagnosisEvent, MedicationEvent, Observation, PatientRecord,
    TreatmentEvent,
};
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const PATIENTS_HEADER: &[&str] = &["patient_id", "birth_date", "sex"];
pub const OBSERVATIONS_HEADER: &[&str] = &["patient_id", "date", "kind", "value"];
pub const DIAGNOSES_HEADER: &[&str] = &["patient_id", "date", "code_system", "code"];
pub const MEDICATIONS_HEADER: &[&str] = &["patient_id", "date", "drug_class"];
pub const TREATMENTS_HEADER: &[&str] = &["patient_id", "date", "treatment"];

/// Locations of the five cohort tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CohortFiles {
    pub patients: PathBuf,
    pub observations: PathBuf,
    pub diagnoses: PathBuf,
    pub medications: PathBuf,
    pub treatments: PathBuf,
}

impl CohortFiles {
    /// The conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            patients: dir.join("patients.csv"),
            observations: dir.join("observations.csv"),
            diagnoses: dir.join("diagnoses.csv"),
            medications: dir.join("medications.csv"),
            treatments: dir.join("treatments.csv"),
        }
    }
}

/// Five labelled readers, one per table. The label is used in error messages.
pub struct CohortSources<R> {
    pub patients: (String, R),
    pub observations: (String, R),
    pub diagnoses: (String, R),
    pub medications: (String, R),
    pub treatments: (String, R),
}

fn open(path: &Path) -> Result<(String, File), CohortError> {
    let label = path.display().to_string();
    let file = File::open(path).map_err(|source| CohortError::Io {
        path: label.clone(),
        source,
    })?;
    Ok((label, file))
}

pub fn load_cohort(files: &CohortFiles) -> Result<Cohort, CohortError> {
    parse_cohort(CohortSources {
        patients: open(&files.patients)?,
        observations: open(&files.observations)?,
        diagnoses: open(&files.diagnoses)?,
        medications: open(&files.medications)?,
        treatments: open(&files.treatments)?,
    })
}

/// Parses all five tables. Patients come out sorted by id and every event list
/// in canonical order, so the result does not depend on row order.
pub fn parse_cohort<R: Read>(src: CohortSources<R>) -> Result<Cohort, CohortError> {
    let mut patients: BTreeMap<String, PatientRecord> = BTreeMap::new();

    let (label, reader) = src.patients;
    let mut table = CsvTable::open(&label, reader, PATIENTS_HEADER)?;
    while let Some(row) = table.next_row()? {
        let id = row.text(0)?.to_string();
        let record = PatientRecord::new(id.clone(), row.date(1)?, row.parse(2)?);
        if patients.insert(id.clone(), record).is_some() {
            return Err(CohortError::DuplicatePatient {
                file: label,
                line: row.line,
                patient_id: id,
            });
        }
    }

    let (label, reader) = src.observations;
    let mut table = CsvTable::open(&label, reader, OBSERVATIONS_HEADER)?;
    while let Some(row) = table.next_row()? {
        let value: f64 = row.parse(3)?;
        if !value.is_finite() || value < 0.0 {
            return Err(row.malformed(3, "value must be finite and non-negative"));
        }
        let obs = Observation {
            date: row.date(1)?,
            kind: row.parse(2)?,
            value,
        };
        row.patient(&mut patients)?.observations.push(obs);
    }

    let (label, reader) = src.diagnoses;
    let mut table = CsvTable::open(&label, reader, DIAGNOSES_HEADER)?;
    while let Some(row) = table.next_row()? {
        let dx = DiagnosisEvent {
            date: row.date(1)?,
            code_system: row.parse(2)?,
            code: row.text(3)?.to_string(),
        };
        row.patient(&mut patients)?.diagnoses.push(dx);
    }

    let (label, reader) = src.medications;
    let mut table = CsvTable::open(&label, reader, MEDICATIONS_HEADER)?;
    while let Some(row) = table.next_row()? {
        let med = MedicationEvent {
            date: row.date(1)?,
            drug_class: row.parse(2)?,
        };
        row.patient(&mut patients)?.medications.push(med);
    }

    let (label, reader) = src.treatments;
    let mut table = CsvTable::open(&label, reader, TREATMENTS_HEADER)?;
    while let Some(row) = table.next_row()? {
        let tx = TreatmentEvent {
            date: row.date(1)?,
            treatment: row.parse(2)?,
        };
        row.patient(&mut patients)?.treatments.push(tx);
    }

    Cohort::from_records(patients.into_values().collect())
}

/// A header-checked CSV table that reports errors with file, line and column.
pub(crate) struct CsvTable<'h, R> {
    label: String,
    header: &'h [&'h str],
    reader: csv::Reader<R>,
    record: csv::StringRecord,
    empty: bool,
}

pub(crate) struct Row<'a> {
    pub line: u64,
    label: &'a str,
    header: &'a [&'a str],
    record: &'a csv::StringRecord,
}

impl<'h, R: Read> CsvTable<'h, R> {
    /// Opens a table and checks its header row. A completely empty input is a
    /// table with no rows.
    pub fn open(label: &str, reader: R, header: &'h [&'h str]) -> Result<Self, CohortError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let found = reader.headers().map_err(|e| csv_error(label, &e, 1))?.clone();
        let empty = found.is_empty() || (found.len() == 1 && found[0].is_empty());
        if !empty && !found.iter().eq(header.iter().copied()) {
            return Err(CohortError::MalformedRow {
                file: label.to_string(),
                line: 1,
                column: "<header>".into(),
                reason: format!(
                    "expected header `{}`, found `{}`",
                    header.join(","),
                    found.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
        Ok(Self {
            label: label.to_string(),
            header,
            reader,
            record: csv::StringRecord::new(),
            empty,
        })
    }

    pub fn next_row(&mut self) -> Result<Option<Row<'_>>, CohortError> {
        if self.empty {
            return Ok(None);
        }
        loop {
            let more = self
                .reader
                .read_record(&mut self.record)
                .map_err(|e| csv_error(&self.label, &e, 0))?;
            if !more {
                return Ok(None);
            }
            // Blank lines parse as a single empty field; skip them.
            if self.record.len() == 1 && self.record[0].is_empty() {
                continue;
            }
            break;
        }
        let line = self.record.position().map(|p| p.line()).unwrap_or(0);
        Ok(Some(Row {
            line,
            label: &self.label,
            header: self.header,
            record: &self.record,
        }))
    }
}

fn csv_error(label: &str, err: &csv::Error, fallback_line: u64) -> CohortError {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    let reason = match err.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_string(),
        _ => err.to_string(),
    };
    CohortError::MalformedRow {
        file: label.to_string(),
        line,
        column: "<row>".into(),
        reason,
    }
}

impl<'a> Row<'a> {
    pub fn malformed(&self, col: usize, reason: impl Into<String>) -> CohortError {
        CohortError::MalformedRow {
            file: self.label.to_string(),
            line: self.line,
            column: self.header[col].to_string(),
            reason: reason.into(),
        }
    }

    pub fn text(&self, col: usize) -> Result<&'a str, CohortError> {
        match self.record.get(col) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(self.malformed(col, "empty value")),
        }
    }

    pub fn parse<T>(&self, col: usize) -> Result<T, CohortError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.text(col)?;
        raw.parse()
            .map_err(|e| self.malformed(col, format!("cannot parse `{raw}`: {e}")))
    }

    pub fn date(&self, col: usize) -> Result<NaiveDate, CohortError> {
        let raw = self.text(col)?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| self.malformed(col, format!("`{raw}` is not a YYYY-MM-DD date: {e}")))
    }

    fn patient<'p>(
        &self,
        patients: &'p mut BTreeMap<String, PatientRecord>,
    ) -> Result<&'p mut PatientRecord, CohortError> {
        let id = self.text(0)?;
        patients
            .get_mut(id)
            .ok_or_else(|| CohortError::UnknownPatient {
                file: self.label.to_string(),
                line: self.line,
                patient_id: id.to_string(),
            })
    }
}
