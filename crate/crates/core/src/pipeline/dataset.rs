use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, Luma};
use rayon::prelude::*;

use crate::relational::{parse_facts, KnowledgeBase};
use crate::smiles::{parse_smiles_file, write_smiles_file, SmilesRecord};
use crate::tensor::Tensor;

use super::PipelineError;

/// A drug pair stored in canonical (lexicographic) orientation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledPair {
    pub drug_a: String,
    pub drug_b: String,
    pub label: bool,
}

impl LabeledPair {
    /// Orders the two IDs lexicographically.
    pub fn canonical(x: impl Into<String>, y: impl Into<String>, label: bool) -> Self {
        let (x, y) = (x.into(), y.into());
        if x <= y {
            Self { drug_a: x, drug_b: y, label }
        } else {
            Self { drug_a: y, drug_b: x, label }
        }
    }

    pub fn key(&self) -> (String, String) {
        (self.drug_a.clone(), self.drug_b.clone())
    }

    pub fn ids(&self) -> (&str, &str) {
        (&self.drug_a, &self.drug_b)
    }
}

/// Everything known about the drugs of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Grayscale images in `[0, 1]`, shape `[h, w]`.
    pub images: BTreeMap<String, Tensor>,
    pub smiles: BTreeMap<String, String>,
    pub kb: KnowledgeBase,
    pub pairs: Vec<LabeledPair>,
}

impl Dataset {
    /// Checks the dataset invariants: canonical unique pairs whose drugs all
    /// have an image and a SMILES string.
    pub fn new(
        images: BTreeMap<String, Tensor>,
        smiles: BTreeMap<String, String>,
        kb: KnowledgeBase,
        pairs: Vec<LabeledPair>,
    ) -> Result<Self, PipelineError> {
        let pairs = canonicalize_pairs(pairs.into_iter().map(|p| (p.drug_a, p.drug_b, p.label)))?;
        let ds = Self { images, smiles, kb, pairs };
        let missing = ds.missing_modalities();
        if !missing.is_empty() {
            return Err(PipelineError::MissingModalities(missing));
        }
        Ok(ds)
    }

    /// Drugs referenced by at least one pair.
    pub fn paired_drugs(&self) -> BTreeSet<&str> {
        self.pairs.iter().flat_map(|p| [p.drug_a.as_str(), p.drug_b.as_str()]).collect()
    }

    /// Paired drugs lacking an image or SMILES string, with what is missing.
    pub fn missing_modalities(&self) -> Vec<(String, Vec<&'static str>)> {
        self.paired_drugs()
            .into_iter()
            .filter_map(|d| {
                let mut m = Vec::new();
                if !self.images.contains_key(d) {
                    m.push("image");
                }
                if !self.smiles.contains_key(d) {
                    m.push("smiles");
                }
                (!m.is_empty()).then(|| (d.to_string(), m))
            })
            .collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        class_counts(&self.pairs)
    }

    /// Writes the dataset in the layout [`ingest`] reads: `images/<id>.pgm`,
    /// `smiles.tsv`, `facts.pl` and `pairs.csv`.
    pub fn save(&self, dir: &Path) -> Result<DatasetPaths, PipelineError> {
        let paths = DatasetPaths::in_dir(dir);
        fs::create_dir_all(&paths.image_dir).map_err(|e| PipelineError::io(&paths.image_dir, e))?;
        for (id, img) in &self.images {
            write_pgm(&paths.image_dir.join(format!("{id}.pgm")), img)?;
        }
        let records: Vec<SmilesRecord> = self
            .smiles
            .iter()
            .map(|(id, s)| SmilesRecord::new(id.clone(), s.clone()))
            .collect::<Result<_, _>>()?;
        write_file(&paths.smiles_file, &write_smiles_file(&records))?;
        write_file(&paths.facts_file, &self.kb.to_facts_text())?;
        write_file(&paths.pairs_file, &pairs_csv(&self.pairs))?;
        Ok(paths)
    }
}

/// `(positives, negatives)`.
pub fn class_counts(pairs: &[LabeledPair]) -> (usize, usize) {
    let pos = pairs.iter().filter(|p| p.label).count();
    (pos, pairs.len() - pos)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub image_dir: PathBuf,
    pub smiles_file: PathBuf,
    pub facts_file: PathBuf,
    pub pairs_file: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            image_dir: dir.join("images"),
            smiles_file: dir.join("smiles.tsv"),
            facts_file: dir.join("facts.pl"),
            pairs_file: dir.join("pairs.csv"),
        }
    }
}

/// What ingestion saw besides the dataset itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub pairs_read: usize,
    pub duplicate_pairs: usize,
    pub duplicate_facts: usize,
    /// Paired drugs with no relational facts; their counts are all zero.
    pub drugs_without_facts: Vec<String>,
    /// Drugs with an image or SMILES string that no pair references.
    pub unused_drugs: Vec<String>,
}

impl ValidationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "pairs_read={}", self.pairs_read);
        let _ = writeln!(s, "duplicate_pairs={}", self.duplicate_pairs);
        let _ = writeln!(s, "duplicate_facts={}", self.duplicate_facts);
        let _ = writeln!(s, "drugs_without_facts={}", self.drugs_without_facts.join(","));
        let _ = writeln!(s, "unused_drugs={}", self.unused_drugs.join(","));
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Resample every image to `(height, width)` before conversion.
    pub resize: Option<(u32, u32)>,
}

/// Reads images, SMILES, facts and pairs into a validated [`Dataset`].
pub fn ingest(paths: &DatasetPaths, options: IngestOptions) -> Result<(Dataset, ValidationReport), PipelineError> {
    let pairs_text = read_file(&paths.pairs_file)?;
    let raw = parse_pairs_csv(&pairs_text).map_err(|e| e.in_file(&paths.pairs_file))?;
    let pairs_read = raw.len();
    let pairs = canonicalize_pairs(raw).map_err(|e| e.in_file(&paths.pairs_file))?;

    let smiles_text = read_file(&paths.smiles_file)?;
    let smiles: BTreeMap<String, String> = parse_smiles_file(&smiles_text)
        .map_err(|e| PipelineError::from(e).in_file(&paths.smiles_file))?
        .into_iter()
        .map(|r| (r.drug_id, r.smiles))
        .collect();
    let kb = parse_facts(&read_file(&paths.facts_file)?).map_err(|e| PipelineError::from(e).in_file(&paths.facts_file))?;
    let images = load_image_dir(&paths.image_dir, options)?;

    let duplicate_facts = kb.duplicate_count();
    let ds = Dataset { images, smiles, kb, pairs };
    let missing = ds.missing_modalities();
    if !missing.is_empty() {
        return Err(PipelineError::MissingModalities(missing));
    }
    let paired = ds.paired_drugs();
    let with_facts = ds.kb.drugs();
    let report = ValidationReport {
        pairs_read,
        duplicate_pairs: pairs_read - ds.pairs.len(),
        duplicate_facts,
        drugs_without_facts: paired.iter().filter(|d| !with_facts.contains(*d)).map(|d| d.to_string()).collect(),
        unused_drugs: ds
            .images
            .keys()
            .chain(ds.smiles.keys())
            .filter(|d| !paired.contains(d.as_str()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect(),
    };
    Ok((ds, report))
}

/// Parses `drug_a,drug_b,label` rows (label 0 or 1); a header row with those
/// names is skipped.
pub fn parse_pairs_csv(text: &str) -> Result<Vec<(String, String, bool)>, PipelineError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| PipelineError::parse(e.position().map_or(i + 1, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(PipelineError::parse(line, format!("expected 3 fields, found {}", rec.len())));
        }
        if i == 0 && &rec[0] == "drug_a" && &rec[1] == "drug_b" && &rec[2] == "label" {
            continue;
        }
        let label = match &rec[2] {
            "0" => false,
            "1" => true,
            other => return Err(PipelineError::parse(line, format!("label must be 0 or 1, found `{other}`"))),
        };
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(PipelineError::parse(line, "empty drug id"));
        }
        out.push((rec[0].to_string(), rec[1].to_string(), label));
    }
    Ok(out)
}

/// Canonical orientation, reciprocal and repeated pairs dropped, sorted.
pub fn canonicalize_pairs(
    raw: impl IntoIterator<Item = (String, String, bool)>,
) -> Result<Vec<LabeledPair>, PipelineError> {
    let mut seen: BTreeMap<(String, String), bool> = BTreeMap::new();
    for (a, b, label) in raw {
        if a == b {
            return Err(PipelineError::InvalidPair(format!("self-pair `{a}`")));
        }
        let p = LabeledPair::canonical(a, b, label);
        match seen.get(&p.key()) {
            Some(&l) if l != label => {
                return Err(PipelineError::InvalidPair(format!("conflicting labels for ({}, {})", p.drug_a, p.drug_b)))
            }
            Some(_) => {}
            None => {
                seen.insert(p.key(), label);
            }
        }
    }
    if seen.is_empty() {
        return Err(PipelineError::InvalidPair("pairs file has no pairs".into()));
    }
    Ok(seen.into_iter().map(|((drug_a, drug_b), label)| LabeledPair { drug_a, drug_b, label }).collect())
}

pub fn pairs_csv(pairs: &[LabeledPair]) -> String {
    let mut s = String::from("drug_a,drug_b,label\n");
    for p in pairs {
        let _ = writeln!(s, "{},{},{}", p.drug_a, p.drug_b, u8::from(p.label));
    }
    s
}

/// Luminance `0.299R + 0.587G + 0.114B` scaled by 1/255; grayscale input is
/// only scaled.
pub fn to_grayscale(img: &DynamicImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(g) => g.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0)
            .collect(),
    };
    Tensor::new(&[h, w], data).expect("pixel count matches shape")
}

pub fn load_image(path: &Path, options: IngestOptions) -> Result<Tensor, PipelineError> {
    let img = image::open(path).map_err(|e| PipelineError::Decode { path: path.to_path_buf(), detail: e.to_string() })?;
    let img = match options.resize {
        Some((h, w)) if (img.height(), img.width()) != (h, w) => img.resize_exact(w, h, image::imageops::FilterType::Triangle),
        _ => img,
    };
    Ok(to_grayscale(&img))
}

/// Loads every `*.png` / `*.pgm` in `dir`, keyed by file stem.
pub fn load_image_dir(dir: &Path, options: IngestOptions) -> Result<BTreeMap<String, Tensor>, PipelineError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))? {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "pgm")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                files.push((stem.to_string(), path.clone()));
            }
        }
    }
    files.sort();
    if let Some(w) = files.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(PipelineError::InvalidPair(format!("two image files for drug `{}`", w[0].0)));
    }
    files
        .into_par_iter()
        .map(|(id, path)| load_image(&path, options).map(|t| (id, t)))
        .collect::<Result<Vec<_>, _>>()
        .map(|v| v.into_iter().collect())
}

/// Writes a binary (P5) PGM, rounding `[0, 1]` intensities to 8 bits.
pub fn write_pgm(path: &Path, img: &Tensor) -> Result<(), PipelineError> {
    let (h, w) = match img.shape() {
        [h, w] | [h, w, 1] => (*h, *w),
        other => return Err(PipelineError::InvalidPair(format!("cannot write image of shape {other:?}"))),
    };
    let px: Vec<u8> = img.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let buf = GrayImage::from_fn(w as u32, h as u32, |x, y| Luma([px[y as usize * w + x as usize]]));
    buf.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| PipelineError::Decode { path: path.to_path_buf(), detail: e.to_string() })
}

pub(crate) fn read_file(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}
