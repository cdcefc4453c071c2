//! SMILES substructure tokens and skip-gram embeddings.
//!
//! A SMILES string is cut into overlapping fixed-length substrings (k-mers);
//! skip-gram with negative sampling learns one vector per k-mer, and a drug is
//! represented by the mean of its k-mer vectors.

mod skipgram;

pub use skipgram::{train_skipgram, train_skipgram_with_history, SkipGramConfig, SkipGramHistory, Vocab};

use std::collections::BTreeSet;

use thiserror::Error;

/// Default k-mer length.
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("SMILES for `{id}` contains whitespace or non-ASCII characters")]
    InvalidCharacters { id: String },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("duplicate drug id `{0}`")]
    DuplicateId(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("invalid skip-gram setting: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmilesRecord {
    pub drug_id: String,
    pub smiles: String,
}

impl SmilesRecord {
    pub fn new(drug_id: impl Into<String>, smiles: impl Into<String>) -> Result<Self, SmilesError> {
        let (drug_id, smiles) = (drug_id.into(), smiles.into());
        if smiles.is_empty() {
            return Err(SmilesError::Empty);
        }
        if !smiles.is_ascii() || smiles.chars().any(|c| c.is_ascii_whitespace()) {
            return Err(SmilesError::InvalidCharacters { id: drug_id });
        }
        Ok(Self { drug_id, smiles })
    }
}

/// Parses `drug_id<TAB>smiles` lines; blank lines and `#` comments are skipped.
pub fn parse_smiles_file(text: &str) -> Result<Vec<SmilesRecord>, SmilesError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (id, smiles) = line.split_once('\t').ok_or_else(|| SmilesError::Parse {
            line: i + 1,
            detail: "expected `drug_id<TAB>smiles`".into(),
        })?;
        let id = id.trim();
        if id.is_empty() {
            return Err(SmilesError::Parse { line: i + 1, detail: "empty drug id".into() });
        }
        let rec = SmilesRecord::new(id, smiles.trim()).map_err(|e| SmilesError::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        if !seen.insert(rec.drug_id.clone()) {
            return Err(SmilesError::DuplicateId(rec.drug_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_smiles_file(records: &[SmilesRecord]) -> String {
    records.iter().map(|r| format!("{}\t{}\n", r.drug_id, r.smiles)).collect()
}

/// All contiguous substrings of length `k`; a string shorter than `k` is a
/// single token. Always yields `max(1, len − k + 1)` tokens.
pub fn tokenize_smiles(smiles: &str, k: usize) -> Result<Vec<String>, SmilesError> {
    if k == 0 {
        return Err(SmilesError::ZeroK);
    }
    if smiles.is_empty() {
        return Err(SmilesError::Empty);
    }
    let bytes = smiles.as_bytes();
    if bytes.len() < k {
        return Ok(vec![smiles.to_string()]);
    }
    Ok(bytes.windows(k).map(|w| String::from_utf8_lossy(w).into_owned()).collect())
}

/// Mean of the vectors of `smiles`' in-vocabulary k-mers; the zero vector
/// when none are known.
pub fn embed_drug(smiles: &str, vocab: &Vocab, k: usize) -> Result<Vec<f64>, SmilesError> {
    let tokens = tokenize_smiles(smiles, k)?;
    let mut acc = vec![0.0; vocab.dim()];
    let mut hits = 0usize;
    for t in &tokens {
        if let Some(v) = vocab.vector(t) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            hits += 1;
        }
    }
    if hits > 0 {
        let n = hits as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FLUVOXAMINE: &str = "COCCCCC(=NOCCN)C1=CC=C(C=C1)C(F)(F)F";

    #[test]
    fn sliding_window() {
        assert_eq!(tokenize_smiles("CCO", 2).unwrap(), vec!["CC", "CO"]);
        assert_eq!(tokenize_smiles("CCO", 8).unwrap(), vec!["CCO"]);
    }

    #[test]
    fn fluvoxamine_eight_mers() {
        let chars: Vec<char> = FLUVOXAMINE.chars().collect();
        let toks = tokenize_smiles(FLUVOXAMINE, 8).unwrap();
        assert_eq!(toks.len(), chars.len() - 8 + 1);
        assert_eq!(toks.len(), 29);
        assert_eq!(toks[0], "COCCCCC(");
        assert_eq!(toks[28], "C(F)(F)F");
    }

    #[test]
    fn empty_string_is_an_error() {
        assert_eq!(tokenize_smiles("", 3), Err(SmilesError::Empty));
        assert_eq!(tokenize_smiles("C", 0), Err(SmilesError::ZeroK));
    }

    #[test]
    fn smiles_file_parsing() {
        let text = "# comment\nDB1\tCCO\n\nDB2\tc1ccccc1\n";
        let recs = parse_smiles_file(text).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].smiles, "c1ccccc1");
        assert!(matches!(parse_smiles_file("DB1 CCO\n"), Err(SmilesError::Parse { line: 1, .. })));
        assert!(matches!(parse_smiles_file("DB1\tCC O\n"), Err(SmilesError::Parse { line: 1, .. })));
        assert_eq!(parse_smiles_file("a\tC\na\tO\n"), Err(SmilesError::DuplicateId("a".into())));
    }

    fn tiny_vocab() -> Vocab {
        let corpus = vec![tokenize_smiles("CCOCCN", 3).unwrap(), tokenize_smiles("NCCOC", 3).unwrap()];
        let cfg = SkipGramConfig { epochs: 2, seed: 3, ..SkipGramConfig::default() };
        train_skipgram(&corpus, &cfg).unwrap()
    }

    #[test]
    fn single_token_embedding_is_that_vector() {
        let vocab = tiny_vocab();
        let v = embed_drug("CCO", &vocab, 3).unwrap();
        assert_eq!(v.as_slice(), vocab.vector("CCO").unwrap());
    }

    #[test]
    fn embedding_is_order_invariant_over_tokens() {
        let vocab = tiny_vocab();
        let a = embed_drug("NCCOC", &vocab, 3).unwrap();
        let toks = tokenize_smiles("NCCOC", 3).unwrap();
        let mut rev = toks.clone();
        rev.reverse();
        let mut manual = vec![0.0; vocab.dim()];
        for t in &rev {
            for (m, x) in manual.iter_mut().zip(vocab.vector(t).unwrap()) {
                *m += x;
            }
        }
        manual.iter_mut().for_each(|m| *m /= rev.len() as f64);
        for (x, y) in a.iter().zip(&manual) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn all_unknown_tokens_give_zero_vector() {
        let vocab = tiny_vocab();
        let v = embed_drug("FFFFFFF", &vocab, 3).unwrap();
        assert_eq!(v, vec![0.0; 100]);
    }

    proptest! {
        #[test]
        fn token_count_law(s in "[A-Za-z0-9()=#@+\\-\\[\\]]{1,60}", k in 1usize..12) {
            let toks = tokenize_smiles(&s, k).unwrap();
            prop_assert_eq!(toks.len(), std::cmp::max(1, s.len() as isize - k as isize + 1) as usize);
        }
    }
}
