use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use toml::Value;

use crate::baselines::{AeCriterion, AutoencoderConfig, DistanceRule, SIAMESE_THRESHOLD};
use crate::fusion::{AggMode, ClassifierConfig};
use crate::image::{SiameseTrainConfig, TowerConfig};
use crate::relational::RrtConfig;
use crate::smiles::{SkipGramConfig, DEFAULT_K};
use crate::tensor::Activation;

use super::{DatasetPaths, PipelineError};

/// Prefix of environment variables that override config keys, e.g.
/// `HETDDI_SIAMESE_EPOCHS` for `siamese_epochs`.
pub const ENV_PREFIX: &str = "HETDDI_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Image,
    Smiles,
    Relational,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Image => "img",
            Modality::Smiles => "smiles",
            Modality::Relational => "rel",
        })
    }
}

impl FromStr for Modality {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, PipelineError> {
        match s.trim() {
            "img" | "image" => Ok(Modality::Image),
            "smiles" => Ok(Modality::Smiles),
            "rel" | "relational" => Ok(Modality::Relational),
            other => Err(PipelineError::Config(format!("unknown modality `{other}` (expected img, smiles or rel)"))),
        }
    }
}

/// How the test pairs are classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Modality embeddings fused into the MLP classifier.
    Fused,
    Ssim,
    Autoencoder,
    Siamese,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fused => "fused",
            Method::Ssim => "ssim",
            Method::Autoencoder => "ae",
            Method::Siamese => "siamese",
        })
    }
}

impl FromStr for Method {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, PipelineError> {
        match s {
            "fused" => Ok(Method::Fused),
            "ssim" => Ok(Method::Ssim),
            "ae" | "autoencoder" => Ok(Method::Autoencoder),
            "siamese" => Ok(Method::Siamese),
            other => Err(PipelineError::Config(format!("unknown method `{other}` (expected fused, ssim, ae or siamese)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TowerPreset {
    Desk,
    Paper,
}

impl TowerPreset {
    pub fn config(self) -> TowerConfig {
        match self {
            TowerPreset::Desk => TowerConfig::desk(),
            TowerPreset::Paper => TowerConfig::paper(),
        }
    }
}

/// Every setting of one experiment. Build it with [`ExperimentConfig::new`]
/// or [`ExperimentConfig::from_layers`]; the seed has no default.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub modalities: BTreeSet<Modality>,
    pub method: Method,
    pub agg: AggMode,
    pub use_stn: bool,
    pub split_ratio: f64,
    /// Probability at or above which the classifier predicts an interaction.
    pub threshold: f64,
    pub classifier: ClassifierConfig,
    pub tower: TowerPreset,
    pub siamese: SiameseTrainConfig,
    pub kmer: usize,
    pub skipgram: SkipGramConfig,
    pub rrt: RrtConfig,
    pub distance_threshold: f64,
    pub distance_rule: DistanceRule,
    pub ae_criterion: AeCriterion,
    pub ae: AutoencoderConfig,
    pub data: DatasetPaths,
    pub out_dir: PathBuf,
    /// Resample images to `(height, width)` on ingest.
    pub resize: Option<(u32, u32)>,
}

impl ExperimentConfig {
    pub fn new(seed: u64) -> Self {
        let tower = TowerPreset::Desk;
        Self {
            seed,
            modalities: [Modality::Image, Modality::Smiles, Modality::Relational].into(),
            method: Method::Fused,
            agg: AggMode::Sub,
            use_stn: false,
            split_ratio: 0.8,
            threshold: 0.5,
            classifier: ClassifierConfig::default(),
            tower,
            siamese: SiameseTrainConfig::default(),
            kmer: DEFAULT_K,
            skipgram: SkipGramConfig::default(),
            rrt: RrtConfig::default(),
            distance_threshold: SIAMESE_THRESHOLD,
            distance_rule: DistanceRule::AtLeast,
            ae_criterion: AeCriterion::Bce,
            ae: AutoencoderConfig { input_size: tower.config().input_size, ..AutoencoderConfig::default() },
            data: DatasetPaths::in_dir(&PathBuf::from("data")),
            out_dir: PathBuf::from("out"),
            resize: None,
        }
    }

    /// Applies key/value layers in order (later wins) on top of the
    /// defaults. Fails on unknown keys, bad values or a missing seed.
    pub fn from_layers(layers: &[Vec<(String, String)>]) -> Result<Self, PipelineError> {
        let mut cfg = Self::new(0);
        let mut seeded = false;
        for (k, v) in layers.iter().flatten() {
            cfg.set(k, v)?;
            seeded |= k == "seed";
        }
        if !seeded {
            return Err(PipelineError::Config("`seed` is mandatory".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let v = value.trim();
        let bad = |what: &str| PipelineError::Config(format!("{key}: expected {what}, got `{value}`"));
        let usize_ = || v.parse::<usize>().map_err(|_| bad("a non-negative integer"));
        let f64_ = || v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad("a number"));
        let bool_ = || v.parse::<bool>().map_err(|_| bad("true or false"));
        match key {
            "seed" => self.seed = v.parse().map_err(|_| bad("a non-negative integer"))?,
            "modalities" => {
                self.modalities = split_list(v).map(str::parse).collect::<Result<_, _>>()?;
            }
            "method" => self.method = v.parse()?,
            "agg" => self.agg = v.parse().map_err(|_| bad("sub, avg or absdiff"))?,
            "use_stn" => self.use_stn = bool_()?,
            "split_ratio" => self.split_ratio = f64_()?,
            "threshold" => self.threshold = f64_()?,
            "classifier_hidden" => {
                self.classifier.hidden =
                    split_list(v).map(|s| s.parse::<usize>().map_err(|_| bad("a list of layer widths"))).collect::<Result<_, _>>()?;
            }
            "classifier_activation" => {
                self.classifier.activation = match v {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    "sigmoid" => Activation::Sigmoid,
                    _ => return Err(bad("relu, tanh or sigmoid")),
                }
            }
            "classifier_lr" => self.classifier.lr = f64_()?,
            "classifier_epochs" => self.classifier.epochs = usize_()?,
            "classifier_batch_size" => self.classifier.batch_size = usize_()?,
            "classifier_standardize" => self.classifier.standardize = bool_()?,
            "tower" => {
                self.tower = match v {
                    "desk" => TowerPreset::Desk,
                    "paper" => TowerPreset::Paper,
                    _ => return Err(bad("desk or paper")),
                };
                self.ae.input_size = self.tower.config().input_size;
            }
            "siamese_epochs" => self.siamese.epochs = usize_()?,
            "siamese_lr" => self.siamese.lr = f64_()?,
            "siamese_batch_size" => self.siamese.batch_size = usize_()?,
            "siamese_margin" => self.siamese.margin = f64_()?,
            "siamese_pairs_per_epoch" => self.siamese.pairs_per_epoch = Some(usize_()?).filter(|&n| n > 0),
            "kmer" => self.kmer = usize_()?,
            "skipgram_window" => self.skipgram.window = usize_()?,
            "skipgram_negatives" => self.skipgram.negatives = usize_()?,
            "skipgram_epochs" => self.skipgram.epochs = usize_()?,
            "skipgram_lr" => self.skipgram.lr = f64_()?,
            "rrt_max_depth" => self.rrt.max_depth = usize_()?,
            "rrt_min_examples" => self.rrt.min_examples = usize_()?,
            "rrt_lookahead" => self.rrt.lookahead = bool_()?,
            "distance_threshold" => self.distance_threshold = f64_()?,
            "distance_rule" => {
                self.distance_rule = match v {
                    "at_least" => DistanceRule::AtLeast,
                    "below" => DistanceRule::Below,
                    _ => return Err(bad("at_least or below")),
                }
            }
            "ae_criterion" => self.ae_criterion = v.parse().map_err(|_| bad("bce or cosine"))?,
            "ae_epochs" => self.ae.epochs = usize_()?,
            "ae_lr" => self.ae.lr = f64_()?,
            "ae_batch_size" => self.ae.batch_size = usize_()?,
            "ae_bottleneck" => self.ae.bottleneck = usize_()?,
            "data_dir" => self.data = DatasetPaths::in_dir(&PathBuf::from(v)),
            "image_dir" => self.data.image_dir = v.into(),
            "smiles_file" => self.data.smiles_file = v.into(),
            "facts_file" => self.data.facts_file = v.into(),
            "pairs_file" => self.data.pairs_file = v.into(),
            "out_dir" => self.out_dir = v.into(),
            "resize" => {
                self.resize = match v {
                    "" | "none" => None,
                    _ => {
                        let (h, w) = v.split_once('x').ok_or_else(|| bad("HxW or none"))?;
                        Some((h.parse().map_err(|_| bad("HxW"))?, w.parse().map_err(|_| bad("HxW"))?))
                    }
                }
            }
            _ => return Err(PipelineError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        if self.modalities.is_empty() {
            return fail("modality set is empty".into());
        }
        if self.method != Method::Fused && self.modalities != BTreeSet::from([Modality::Image]) {
            return fail(format!("method {} is an image-only baseline; set modalities = [\"img\"]", self.method));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return fail(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio));
        }
        if self.kmer == 0 {
            return fail("kmer must be positive".into());
        }
        Ok(())
    }

    /// Siamese training settings with the experiment-level STN flag and seed.
    pub fn siamese_config(&self) -> SiameseTrainConfig {
        SiameseTrainConfig { use_stn: self.use_stn, seed: self.seed, ..self.siamese.clone() }
    }

    pub fn skipgram_config(&self) -> SkipGramConfig {
        SkipGramConfig { seed: self.seed.wrapping_add(1), ..self.skipgram.clone() }
    }

    pub fn classifier_config(&self) -> ClassifierConfig {
        ClassifierConfig { seed: self.seed.wrapping_add(2), ..self.classifier.clone() }
    }

    pub fn ae_config(&self) -> AutoencoderConfig {
        AutoencoderConfig { seed: self.seed.wrapping_add(3), ..self.ae.clone() }
    }

    /// Every key with its current value, in schema order.
    pub fn entries(&self) -> Vec<(&'static str, Value)> {
        let int = |n: usize| Value::Integer(n as i64);
        let s = |x: &dyn fmt::Display| Value::String(x.to_string());
        let path = |p: &PathBuf| Value::String(p.display().to_string());
        let activation = match self.classifier.activation {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::None => "none",
        };
        vec![
            ("seed", Value::String(self.seed.to_string())),
            ("modalities", Value::Array(self.modalities.iter().map(|m| s(m)).collect())),
            ("method", s(&self.method)),
            ("agg", s(&self.agg)),
            ("use_stn", Value::Boolean(self.use_stn)),
            ("split_ratio", Value::Float(self.split_ratio)),
            ("threshold", Value::Float(self.threshold)),
            ("classifier_hidden", Value::Array(self.classifier.hidden.iter().map(|&n| int(n)).collect())),
            ("classifier_activation", s(&activation)),
            ("classifier_lr", Value::Float(self.classifier.lr)),
            ("classifier_epochs", int(self.classifier.epochs)),
            ("classifier_batch_size", int(self.classifier.batch_size)),
            ("classifier_standardize", Value::Boolean(self.classifier.standardize)),
            ("tower", s(&if self.tower == TowerPreset::Desk { "desk" } else { "paper" })),
            ("siamese_epochs", int(self.siamese.epochs)),
            ("siamese_lr", Value::Float(self.siamese.lr)),
            ("siamese_batch_size", int(self.siamese.batch_size)),
            ("siamese_margin", Value::Float(self.siamese.margin)),
            ("siamese_pairs_per_epoch", int(self.siamese.pairs_per_epoch.unwrap_or(0))),
            ("kmer", int(self.kmer)),
            ("skipgram_window", int(self.skipgram.window)),
            ("skipgram_negatives", int(self.skipgram.negatives)),
            ("skipgram_epochs", int(self.skipgram.epochs)),
            ("skipgram_lr", Value::Float(self.skipgram.lr)),
            ("rrt_max_depth", int(self.rrt.max_depth)),
            ("rrt_min_examples", int(self.rrt.min_examples)),
            ("rrt_lookahead", Value::Boolean(self.rrt.lookahead)),
            ("distance_threshold", Value::Float(self.distance_threshold)),
            ("distance_rule", s(&if self.distance_rule == DistanceRule::AtLeast { "at_least" } else { "below" })),
            ("ae_criterion", s(&self.ae_criterion)),
            ("ae_epochs", int(self.ae.epochs)),
            ("ae_lr", Value::Float(self.ae.lr)),
            ("ae_batch_size", int(self.ae.batch_size)),
            ("ae_bottleneck", int(self.ae.bottleneck)),
            ("image_dir", path(&self.data.image_dir)),
            ("smiles_file", path(&self.data.smiles_file)),
            ("facts_file", path(&self.data.facts_file)),
            ("pairs_file", path(&self.data.pairs_file)),
            ("out_dir", path(&self.out_dir)),
            ("resize", Value::String(self.resize.map_or("none".into(), |(h, w)| format!("{h}x{w}")))),
        ]
    }

    /// Canonical config file text; parsing it back yields `self`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Flat `key = value` TOML as text pairs; arrays become comma lists.
pub fn toml_layer(text: &str) -> Result<Vec<(String, String)>, PipelineError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
    table
        .into_iter()
        .map(|(k, v)| {
            let text = match v {
                Value::String(s) => s,
                Value::Array(items) => items
                    .into_iter()
                    .map(|i| match i {
                        Value::String(s) => Ok(s),
                        Value::Integer(_) | Value::Float(_) | Value::Boolean(_) => Ok(i.to_string()),
                        _ => Err(PipelineError::Config(format!("{k}: nested values are not supported"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(","),
                Value::Table(_) => return Err(PipelineError::Config(format!("{k}: tables are not supported"))),
                other => other.to_string(),
            };
            Ok((k, text))
        })
        .collect()
}

/// `HETDDI_*` variables as config pairs (`HETDDI_SIAMESE_EPOCHS` →
/// `siamese_epochs`).
pub fn env_layer(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vars
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|rest| (rest.to_ascii_lowercase(), v)))
        .collect();
    out.sort();
    out
}
