use super::{spelled_enum, CodeSystem, CohortError, DiagnosisEvent};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

spelled_enum!(
    Category {
        BreastCancer => "BREAST_CANCER",
        PriorCancerExcluding => "PRIOR_CANCER_EXCLUDING",
        PriorCancerAllowed => "PRIOR_CANCER_ALLOWED",
        Chf => "CHF",
        Cad => "CAD",
        Cm => "CM",
        Mi => "MI",
        Hypertension => "HYPERTENSION",
        Diabetes => "DIABETES",
        Hyperlipidemia => "HYPERLIPIDEMIA",
        RadiationProcedure => "RADIATION_PROCEDURE",
    }
);

impl Category {
    pub fn is_heart_disease(self) -> bool {
        matches!(self, Category::Chf | Category::Cad | Category::Cm | Category::Mi)
    }
}

const DEFAULT_CODE_MAP: &str = include_str!("../../data/default_code_map.csv");

/// Prefix table from ICD codes to analysis categories.
///
/// Codes and prefixes are compared after removing `.` and upper-casing, so
/// `I50.9`, `I509` and `i50.9` are the same code. The longest matching prefix
/// within the event's code system decides the category.
#[derive(Debug, Clone, Default)]
pub struct CodeMap {
    entries: HashMap<(CodeSystem, String), Category>,
    max_prefix_len: usize,
}

fn normalize(code: &str) -> String {
    code.trim()
        .chars()
        .filter(|c| *c != '.')
        .flat_map(char::to_uppercase)
        .collect()
}

impl CodeMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// The illustrative map shipped with the crate (`data/default_code_map.csv`).
    /// It documents the expected shape; it is not a curated clinical code list.
    pub fn default_map() -> Self {
        Self::from_reader("default_code_map.csv", DEFAULT_CODE_MAP.as_bytes())
            .expect("bundled code map is well formed")
    }

    pub fn insert(&mut self, system: CodeSystem, prefix: &str, category: Category) -> bool {
        let key = normalize(prefix);
        if key.is_empty() || self.entries.contains_key(&(system, key.clone())) {
            return false;
        }
        self.max_prefix_len = self.max_prefix_len.max(key.chars().count());
        self.entries.insert((system, key), category);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, CohortError> {
        let file = std::fs::File::open(path).map_err(|source| CohortError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(&path.display().to_string(), file)
    }

    /// Reads `code_system,code_prefix,category` rows.
    pub fn from_reader<R: Read>(label: &str, reader: R) -> Result<Self, CohortError> {
        let mut map = CodeMap::new();
        let mut rows = super::load::CsvTable::open(
            label,
            reader,
            &["code_system", "code_prefix", "category"],
        )?;
        while let Some(row) = rows.next_row()? {
            let system: CodeSystem = row.parse(0)?;
            let prefix = row.text(1)?;
            let category: Category = row.parse(2)?;
            if !map.insert(system, prefix, category) {
                return Err(CohortError::DuplicatePrefix {
                    file: label.to_string(),
                    line: row.line,
                    code_system: system,
                    prefix: prefix.to_string(),
                });
            }
        }
        Ok(map)
    }

    pub fn classify_code(&self, system: CodeSystem, code: &str) -> Option<Category> {
        let code = normalize(code);
        let chars: Vec<(usize, char)> = code.char_indices().collect();
        let longest = chars.len().min(self.max_prefix_len);
        (1..=longest).rev().find_map(|len| {
            let end = chars.get(len).map(|(i, _)| *i).unwrap_or(code.len());
            self.entries.get(&(system, code[..end].to_string())).copied()
        })
    }

    /// Category of a diagnosis, or `None` when no prefix in its code system matches.
    pub fn classify(&self, event: &DiagnosisEvent) -> Option<Category> {
        self.classify_code(event.code_system, &event.code)
    }
}
