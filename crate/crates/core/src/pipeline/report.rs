use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::PipelineError;
use crate::fusion::Metrics;

/// Outcome of one experiment: a Table-1 style row plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub method: String,
    pub metrics: Metrics,
    pub config_hash: String,
    pub seed: u64,
    /// `(positives, negatives)` per side.
    pub train_counts: (usize, usize),
    pub test_counts: (usize, usize),
    pub feature_dim: Option<usize>,
    pub num_rules: Option<usize>,
    /// Protocol choices the data does not determine, recorded verbatim.
    pub notes: Vec<String>,
    /// Seconds since the Unix epoch; the only field allowed to differ between
    /// identical runs.
    pub generated_unix: Option<u64>,
}

impl Report {
    /// Human-readable table with the columns Accuracy, Recall, Precision, F1.
    pub fn to_table(&self) -> String {
        let m = &self.metrics;
        let width = self.method.len().max(24);
        let mut s = String::new();
        let _ = writeln!(s, "# config_hash: {}", self.config_hash);
        let _ = writeln!(s, "# seed: {}", self.seed);
        if let Some(t) = self.generated_unix {
            let _ = writeln!(s, "# generated_unix: {t}");
        }
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>9}  {:>8}", "Method", "Accuracy", "Recall", "Precision", "F1");
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.3}  {:>8.3}  {:>9.3}  {:>8.3}",
            self.method, m.accuracy, m.recall, m.precision, m.f1
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "train pairs: {} positive / {} negative", self.train_counts.0, self.train_counts.1);
        let _ = writeln!(s, "test pairs:  {} positive / {} negative", self.test_counts.0, self.test_counts.1);
        let _ = writeln!(s, "confusion: tp={} fp={} tn={} fn={}", m.tp, m.fp, m.tn, m.fn_);
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// One `key=value` per line; floats use shortest round-trip formatting.
    pub fn to_kv(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("method", self.method.clone());
        kv("config_hash", self.config_hash.clone());
        kv("seed", self.seed.to_string());
        kv("accuracy", m.accuracy.to_string());
        kv("recall", m.recall.to_string());
        kv("precision", m.precision.to_string());
        kv("f1", m.f1.to_string());
        kv("tp", m.tp.to_string());
        kv("fp", m.fp.to_string());
        kv("tn", m.tn.to_string());
        kv("fn", m.fn_.to_string());
        kv("train_positive", self.train_counts.0.to_string());
        kv("train_negative", self.train_counts.1.to_string());
        kv("test_positive", self.test_counts.0.to_string());
        kv("test_negative", self.test_counts.1.to_string());
        if let Some(d) = self.feature_dim {
            kv("feature_dim", d.to_string());
        }
        if let Some(r) = self.num_rules {
            kv("num_rules", r.to_string());
        }
        for n in &self.notes {
            kv("note", n.clone());
        }
        if let Some(t) = self.generated_unix {
            kv("generated_unix", t.to_string());
        }
        s
    }

    /// Parses the output of [`Report::to_kv`]. Metrics are recomputed from
    /// the confusion counts.
    pub fn from_kv(text: &str) -> Result<Self, PipelineError> {
        let mut fields = BTreeMap::new();
        let mut notes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| PipelineError::parse(i + 1, "expected key=value"))?;
            if k == "note" {
                notes.push(v.to_string());
            } else if fields.insert(k, v).is_some() {
                return Err(PipelineError::parse(i + 1, format!("duplicate key `{k}`")));
            }
        }
        let text_of = |k: &str| fields.get(k).copied().ok_or_else(|| PipelineError::parse(0, format!("missing key `{k}`")));
        let num = |k: &str| -> Result<u64, PipelineError> {
            text_of(k)?.parse().map_err(|_| PipelineError::parse(0, format!("`{k}` is not a non-negative integer")))
        };
        let opt = |k: &str| fields.contains_key(k).then(|| num(k)).transpose();
        let count = |k: &str| num(k).map(|n| n as usize);
        Ok(Self {
            method: text_of("method")?.to_string(),
            metrics: Metrics::from_counts(count("tp")?, count("fp")?, count("tn")?, count("fn")?),
            config_hash: text_of("config_hash")?.to_string(),
            seed: num("seed")?,
            train_counts: (count("train_positive")?, count("train_negative")?),
            test_counts: (count("test_positive")?, count("test_negative")?),
            feature_dim: opt("feature_dim")?.map(|n| n as usize),
            num_rules: opt("num_rules")?.map(|n| n as usize),
            notes,
            generated_unix: opt("generated_unix")?,
        })
    }
}

/// Several reports as one table, one row per run, in the given order.
pub fn comparison_table(reports: &[Report]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(0).max(24);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>9}  {:>8}  {:>4}  Config", "Method", "Accuracy", "Recall", "Precision", "F1", "Seed");
    for r in reports {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.3}  {:>8.3}  {:>9.3}  {:>8.3}  {:>4}  {}",
            r.method,
            m.accuracy,
            m.recall,
            m.precision,
            m.f1,
            r.seed,
            &r.config_hash[..r.config_hash.len().min(12)]
        );
    }
    s
}

/// Drops the timestamp line from either report rendering.
pub fn strip_timestamp(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with("# generated_unix:") && !l.starts_with("generated_unix="))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(ts: Option<u64>) -> Report {
        Report {
            method: "Our Method (agg=sub)".into(),
            metrics: Metrics::from_counts(8, 2, 7, 3),
            config_hash: "ab".repeat(32),
            seed: 3,
            train_counts: (40, 60),
            test_counts: (11, 9),
            feature_dim: Some(119),
            num_rules: Some(19),
            notes: vec!["split: stratified 0.8".into()],
            generated_unix: ts,
        }
    }

    #[test]
    fn table_has_paper_columns() {
        let t = report(None).to_table();
        let header = t.lines().find(|l| l.starts_with("Method")).unwrap();
        let cols: Vec<&str> = header.split_whitespace().collect();
        assert_eq!(cols, ["Method", "Accuracy", "Recall", "Precision", "F1"]);
        assert!(t.contains("Our Method (agg=sub)         0.750     0.727      0.800     0.762"));
        assert!(t.contains("# seed: 3"));
        assert!(t.contains("test pairs:  11 positive / 9 negative"));
    }

    #[test]
    fn kv_has_hash_seed_and_counts() {
        let kv = report(Some(5)).to_kv();
        for needle in ["seed=3\n", "train_positive=40\n", "test_negative=9\n", "num_rules=19\n", "accuracy=0.75\n"] {
            assert!(kv.contains(needle), "{needle}");
        }
        assert!(kv.contains(&format!("config_hash={}\n", "ab".repeat(32))));
    }

    #[test]
    fn timestamp_is_the_only_difference() {
        let (a, b) = (report(Some(1)), report(Some(2)));
        assert_ne!(a.to_table(), b.to_table());
        assert_eq!(strip_timestamp(&a.to_table()), strip_timestamp(&b.to_table()));
        assert_eq!(strip_timestamp(&a.to_kv()), report(None).to_kv());
    }

    #[test]
    fn kv_round_trips() {
        for r in [report(Some(9)), Report { feature_dim: None, num_rules: None, notes: vec![], ..report(None) }] {
            assert_eq!(Report::from_kv(&r.to_kv()).unwrap(), r);
        }
        assert!(Report::from_kv("method=x\n").is_err());
        assert!(Report::from_kv("seed\n").is_err());
    }

    #[test]
    fn comparison_rows_follow_input_order() {
        let a = report(None);
        let b = Report { method: "SSIM".into(), ..report(None) };
        let t = comparison_table(&[a, b]);
        let rows: Vec<&str> = t.lines().skip(1).map(|l| l.split("  ").next().unwrap().trim()).collect();
        assert_eq!(rows, ["Our Method (agg=sub)", "SSIM"]);
    }
}
