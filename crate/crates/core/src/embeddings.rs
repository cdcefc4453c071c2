//! Tab-separated embedding tables: `drug_id<TAB>v1<TAB>...<TAB>vd`, one drug
//! per line, values written with 9 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingTableError {
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("line {line}: drug `{id}` has {got} values, expected {expected}")]
    Width { line: usize, id: String, expected: usize, got: usize },
}

/// Drug ID → embedding vector, iterated in ID order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    rows: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f64>) {
        self.rows.insert(id.into(), v);
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.rows.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.rows.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, v) in &self.rows {
            out.push_str(id);
            for x in v {
                write!(out, "\t{x:.8e}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, EmbeddingTableError> {
        let mut rows = BTreeMap::new();
        let mut width = None;
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| EmbeddingTableError::Parse {
                        line: line_no,
                        detail: format!("`{f}`: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let expected = *width.get_or_insert(values.len());
            if values.len() != expected {
                return Err(EmbeddingTableError::Width { line: line_no, id, expected, got: values.len() });
            }
            rows.insert(id, values);
        }
        Ok(Self { rows })
    }
}

/// Rounds to the precision [`EmbeddingTable::to_tsv`] keeps.
pub fn nine_significant(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}
