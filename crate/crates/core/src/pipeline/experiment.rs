use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::baselines::{self, DistanceRule};
use crate::embeddings::EmbeddingTable;
use crate::fusion::{aggregate_pair, feature_csv, predictions_csv, train_classifier, AggMode, Metrics, Mlp, PairFeature, Prediction};
use crate::image::{train_siamese, ImagePair, SiameseModel};
use crate::relational::{extract_rules, learn_rrt, CompiledRules, RrtExample, RuleSet};
use crate::smiles::{embed_drug, tokenize_smiles, train_skipgram, Vocab};
use crate::tensor::{load_params, save_params, CheckpointDtype, ParamStore, Tensor};

use super::dataset::{read_file, write_file};
use super::{
    class_counts, ingest, pairs_csv, parse_pairs_csv, split, toml_layer, Dataset, ExperimentConfig, IngestOptions,
    LabeledPair, Method, Modality, PipelineError, Report, Split,
};

type Touched = (BTreeSet<(String, String)>, BTreeSet<String>);

/// Every pair and drug each fitting stage consumed, so a run can prove that
/// nothing from the test side was used.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FitLog {
    stages: BTreeMap<&'static str, Touched>,
}

impl FitLog {
    pub fn record_pairs<'a>(&mut self, stage: &'static str, pairs: impl IntoIterator<Item = &'a LabeledPair>) {
        let (ps, ds) = self.stages.entry(stage).or_default();
        for p in pairs {
            ps.insert(p.key());
            ds.insert(p.drug_a.clone());
            ds.insert(p.drug_b.clone());
        }
    }

    pub fn record_drugs<'a>(&mut self, stage: &'static str, drugs: impl IntoIterator<Item = &'a str>) {
        self.stages.entry(stage).or_default().1.extend(drugs.into_iter().map(str::to_string));
    }

    pub fn stages(&self) -> Vec<&'static str> {
        self.stages.keys().copied().collect()
    }

    pub fn pairs(&self) -> BTreeSet<(String, String)> {
        self.stages.values().flat_map(|(p, _)| p.iter().cloned()).collect()
    }

    pub fn drugs(&self) -> BTreeSet<String> {
        self.stages.values().flat_map(|(_, d)| d.iter().cloned()).collect()
    }

    /// Fails if a fitted pair is a test pair or a fitted drug appears in no
    /// training pair.
    pub fn check_no_leakage(&self, train: &[LabeledPair]) -> Result<(), PipelineError> {
        let allowed_pairs: BTreeSet<_> = train.iter().map(LabeledPair::key).collect();
        let allowed_drugs: BTreeSet<&str> = train.iter().flat_map(|p| [p.drug_a.as_str(), p.drug_b.as_str()]).collect();
        for (stage, (pairs, drugs)) in &self.stages {
            if let Some((a, b)) = pairs.iter().find(|k| !allowed_pairs.contains(*k)) {
                return Err(PipelineError::Leakage(format!("{stage} was fit on non-training pair ({a}, {b})")));
            }
            if let Some(d) = drugs.iter().find(|d| !allowed_drugs.contains(d.as_str())) {
                return Err(PipelineError::Leakage(format!("{stage} was fit on drug `{d}`, absent from training pairs")));
            }
        }
        Ok(())
    }
}

/// The fitted per-modality embedders.
#[derive(Debug, Clone)]
pub struct Embedders {
    pub siamese: Option<SiameseModel>,
    pub vocab: Option<Vocab>,
    pub kmer: usize,
    pub rules: Option<RuleSet>,
}

impl Embedders {
    /// Fits the embedder of every modality in `config` on `train` only.
    pub fn fit(
        config: &ExperimentConfig,
        dataset: &Dataset,
        train: &[LabeledPair],
        log: &mut FitLog,
    ) -> Result<Self, PipelineError> {
        let mut out = Self { siamese: None, vocab: None, kmer: config.kmer, rules: None };
        let train_drugs: BTreeSet<&str> = train.iter().flat_map(|p| [p.drug_a.as_str(), p.drug_b.as_str()]).collect();
        if config.modalities.contains(&Modality::Image) {
            let pairs: Vec<ImagePair> = train
                .iter()
                .map(|p| ImagePair { a: p.drug_a.clone(), b: p.drug_b.clone(), interacts: p.label })
                .collect();
            log.record_pairs("siamese", train);
            let model = train_siamese(&pairs, &dataset.images, &config.tower.config(), &config.siamese_config())
                .map_err(|e| PipelineError::from(e).in_stage("train image embedder"))?;
            out.siamese = Some(model);
        }
        if config.modalities.contains(&Modality::Smiles) {
            let corpus = train_drugs
                .iter()
                .map(|d| tokenize_smiles(&dataset.smiles[*d], config.kmer))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PipelineError::from(e).in_stage("train SMILES embedder"))?;
            log.record_drugs("skipgram", train_drugs.iter().copied());
            out.vocab = Some(
                train_skipgram(&corpus, &config.skipgram_config())
                    .map_err(|e| PipelineError::from(e).in_stage("train SMILES embedder"))?,
            );
        }
        if config.modalities.contains(&Modality::Relational) {
            let examples: Vec<RrtExample> =
                train.iter().map(|p| RrtExample::new(&p.drug_a, &p.drug_b, f64::from(u8::from(p.label)))).collect();
            log.record_pairs("rrt", train);
            let tree = learn_rrt(&examples, &dataset.kb, &config.rrt)
                .map_err(|e| PipelineError::from(e).in_stage("learn relational rules"))?;
            out.rules = Some(extract_rules(&tree));
        }
        Ok(out)
    }

    /// Per-drug image embeddings for `drugs`.
    pub fn image_embeddings(&self, dataset: &Dataset, drugs: &BTreeSet<&str>) -> Result<EmbeddingTable, PipelineError> {
        let mut table = EmbeddingTable::new();
        if let Some(model) = &self.siamese {
            let ids: Vec<&str> = drugs.iter().copied().collect();
            let imgs: Vec<&Tensor> = ids
                .iter()
                .map(|d| dataset.images.get(*d).ok_or_else(|| PipelineError::MissingModalities(vec![(d.to_string(), vec!["image"])])))
                .collect::<Result<_, _>>()?;
            for (chunk_ids, chunk) in ids.chunks(64).zip(imgs.chunks(64)) {
                for (id, e) in chunk_ids.iter().zip(model.embed_batch(chunk)?) {
                    table.insert(*id, e);
                }
            }
        }
        Ok(table)
    }

    /// Per-drug SMILES embeddings for `drugs`.
    pub fn smiles_embeddings(&self, dataset: &Dataset, drugs: &BTreeSet<&str>) -> Result<EmbeddingTable, PipelineError> {
        let mut table = EmbeddingTable::new();
        if let Some(vocab) = &self.vocab {
            for d in drugs {
                let s = dataset.smiles.get(*d).ok_or_else(|| PipelineError::MissingModalities(vec![(d.to_string(), vec!["smiles"])]))?;
                table.insert(*d, embed_drug(s, vocab, self.kmer)?);
            }
        }
        Ok(table)
    }

    /// Fused feature vector of every pair.
    pub fn featurize(&self, dataset: &Dataset, pairs: &[LabeledPair], agg: AggMode) -> Result<Vec<PairFeature>, PipelineError> {
        let drugs: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.drug_a.as_str(), p.drug_b.as_str()]).collect();
        let img = self.image_embeddings(dataset, &drugs)?;
        let smi = self.smiles_embeddings(dataset, &drugs)?;
        let compiled = self.rules.as_ref().map(|r| CompiledRules::new(r, &dataset.kb)).transpose()?;
        pairs
            .par_iter()
            .map(|p| {
                let diff = |t: &EmbeddingTable| -> Result<Option<Vec<f64>>, PipelineError> {
                    match (t.get(&p.drug_a), t.get(&p.drug_b)) {
                        (Some(a), Some(b)) => Ok(Some(aggregate_pair(a, b, agg)?)),
                        _ => Ok(None),
                    }
                };
                let rel = compiled.as_ref().map(|c| c.embed(p.ids()).into_iter().map(|n| n as f64).collect());
                Ok(PairFeature::new(&p.drug_a, &p.drug_b, diff(&img)?, diff(&smi)?, rel)?)
            })
            .collect()
    }

    /// Writes `siamese.ckpt`, `smiles_vocab.ckpt` and `rules.pl` for the
    /// modalities present.
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        if let Some(m) = &self.siamese {
            save_checkpoint(&dir.join("siamese.ckpt"), m.params())?;
        }
        if let Some(v) = &self.vocab {
            let mut store = ParamStore::new();
            for t in v.tokens() {
                store.insert(t.clone(), Tensor::from_vec(v.vector(t).expect("token in vocab").to_vec()));
            }
            save_checkpoint(&dir.join("smiles_vocab.ckpt"), &store)?;
        }
        if let Some(r) = &self.rules {
            write_file(&dir.join("rules.pl"), &r.to_text())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, config: &ExperimentConfig) -> Result<Self, PipelineError> {
        let mut out = Self { siamese: None, vocab: None, kmer: config.kmer, rules: None };
        if config.modalities.contains(&Modality::Image) {
            let params = load_checkpoint(&dir.join("siamese.ckpt"))?;
            out.siamese = Some(SiameseModel::from_params(config.tower.config(), params)?);
        }
        if config.modalities.contains(&Modality::Smiles) {
            let store = load_checkpoint(&dir.join("smiles_vocab.ckpt"))?;
            let entries: Vec<(String, Vec<f64>)> = store.iter().map(|(k, t)| (k.to_string(), t.data().to_vec())).collect();
            out.vocab = Some(Vocab::from_vectors(config.skipgram.dim, entries)?);
        }
        if config.modalities.contains(&Modality::Relational) {
            out.rules = Some(RuleSet::parse(&read_file(&dir.join("rules.pl"))?)?);
        }
        Ok(out)
    }
}

fn save_checkpoint(path: &Path, store: &ParamStore) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    let f = File::create(path).map_err(|e| PipelineError::io(path, e))?;
    save_params(store, CheckpointDtype::F64, BufWriter::new(f))?;
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<ParamStore, PipelineError> {
    let f = File::open(path).map_err(|e| PipelineError::io(path, e))?;
    Ok(load_params(BufReader::new(f))?.0)
}

/// Embedders plus the classifier on top of their fused features.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub embedders: Embedders,
    pub classifier: Mlp,
}

impl TrainedModel {
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        self.embedders.save(dir)?;
        save_checkpoint(&dir.join("classifier.ckpt"), &self.classifier.to_params())
    }

    pub fn load(dir: &Path, config: &ExperimentConfig) -> Result<Self, PipelineError> {
        let embedders = Embedders::load(dir, config)?;
        let classifier = Mlp::from_params(&load_checkpoint(&dir.join("classifier.ckpt"))?)?;
        Ok(Self { embedders, classifier })
    }

    pub fn predict(
        &self,
        dataset: &Dataset,
        pairs: &[LabeledPair],
        agg: AggMode,
        threshold: f64,
    ) -> Result<Vec<Prediction>, PipelineError> {
        let features = self.embedders.featurize(dataset, pairs, agg)?;
        let x: Vec<Vec<f64>> = features.into_iter().map(|f| f.fused).collect();
        let probs = self.classifier.predict_proba(&x)?;
        Ok(pairs
            .iter()
            .zip(probs)
            .map(|(p, s)| Prediction { drug_a: p.drug_a.clone(), drug_b: p.drug_b.clone(), score: s, interacts: s >= threshold })
            .collect())
    }
}

/// Result of one run, before anything is written to disk.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: Report,
    pub split: Split,
    pub fit_log: FitLog,
    pub predictions: Vec<Prediction>,
    /// Present for the fused method.
    pub model: Option<TrainedModel>,
    /// Feature matrix of all pairs (fused method only).
    pub features: Option<(Vec<PairFeature>, Vec<bool>)>,
}

impl Experiment {
    /// Writes the run under `dir`: `config.toml`, `split/{train,test}.csv`,
    /// `model/*`, `features.csv`, `predictions.csv`, `report.txt` and
    /// `report.kv`.
    pub fn save(&self, config: &ExperimentConfig, dir: &Path) -> Result<(), PipelineError> {
        write_file(&dir.join("config.toml"), &config.to_text())?;
        write_file(&dir.join("split/train.csv"), &pairs_csv(&self.split.train))?;
        write_file(&dir.join("split/test.csv"), &pairs_csv(&self.split.test))?;
        if let Some(m) = &self.model {
            m.save(&dir.join("model"))?;
        }
        if let Some((f, y)) = &self.features {
            write_file(&dir.join("features.csv"), &feature_csv(f, y)?)?;
        }
        write_file(&dir.join("predictions.csv"), &predictions_csv(&self.predictions))?;
        write_report(&self.report, dir)
    }
}

pub fn write_report(report: &Report, dir: &Path) -> Result<(), PipelineError> {
    write_file(&dir.join("report.txt"), &report.to_table())?;
    write_file(&dir.join("report.kv"), &report.to_kv())
}

/// Reads the config saved by [`Experiment::save`].
pub fn load_config(path: &Path) -> Result<ExperimentConfig, PipelineError> {
    ExperimentConfig::from_layers(&[toml_layer(&read_file(path)?)?])
}

/// Reads a pairs CSV written by [`Experiment::save`] or [`pairs_csv`].
pub fn load_pairs(path: &Path) -> Result<Vec<LabeledPair>, PipelineError> {
    let raw = parse_pairs_csv(&read_file(path)?).map_err(|e| e.in_file(path))?;
    Ok(raw.into_iter().map(|(a, b, l)| LabeledPair::canonical(a, b, l)).collect())
}

/// Table-1 row label for `config`.
pub fn method_label(config: &ExperimentConfig) -> String {
    match config.method {
        Method::Ssim => "SSIM".into(),
        Method::Autoencoder => format!("Autoencoder ({})", config.ae_criterion),
        Method::Siamese if config.use_stn => "Siamese Network + STN".into(),
        Method::Siamese => "Siamese Network".into(),
        Method::Fused => {
            let mut q = Vec::new();
            if config.modalities.len() < 3 {
                q.push(config.modalities.iter().map(ToString::to_string).collect::<Vec<_>>().join("+"));
            }
            q.push(format!("agg={}", config.agg));
            if config.use_stn {
                q.push("with STN".into());
            }
            format!("Our Method ({})", q.join(", "))
        }
    }
}

fn test_images(dataset: &Dataset, test: &[LabeledPair]) -> BTreeMap<String, Tensor> {
    let drugs: BTreeSet<&str> = test.iter().flat_map(|p| [p.drug_a.as_str(), p.drug_b.as_str()]).collect();
    drugs.into_iter().map(|d| (d.to_string(), dataset.images[d].clone())).collect()
}

/// Split, fit, featurize, classify and score, entirely in memory.
pub fn run_on_dataset(config: &ExperimentConfig, dataset: &Dataset) -> Result<Experiment, PipelineError> {
    config.validate()?;
    let sp = split(&dataset.pairs, config.split_ratio, config.seed).map_err(|e| e.in_stage("split"))?;
    let mut log = FitLog::default();
    let test_keys: Vec<(String, String)> = sp.test.iter().map(LabeledPair::key).collect();
    let mut notes = vec![
        format!("split: stratified by label, ratio {}, seed {}", config.split_ratio, config.seed),
        "pairs: labels exactly as listed in the pairs file; unlisted pairs are unused".to_string(),
    ];
    let (mut model, mut features, mut feature_dim, mut num_rules) = (None, None, None, None);

    let predictions = match config.method {
        Method::Ssim => baselines::ssim_classify(&test_keys, &test_images(dataset, &sp.test), Default::default())
            .map_err(|e| PipelineError::from(e).in_stage("SSIM baseline"))?,
        Method::Autoencoder => {
            let drugs: BTreeSet<&str> = sp.train.iter().flat_map(|p| [p.drug_a.as_str(), p.drug_b.as_str()]).collect();
            log.record_drugs("autoencoder", drugs.iter().copied());
            let imgs: Vec<&Tensor> = drugs.iter().map(|d| &dataset.images[*d]).collect();
            notes.push(format!("autoencoder criterion: {}", config.ae_criterion));
            baselines::autoencoder_baseline(&imgs, &test_keys, &test_images(dataset, &sp.test), config.ae_criterion, &config.ae_config())
                .map_err(|e| PipelineError::from(e).in_stage("autoencoder baseline"))?
        }
        Method::Siamese => {
            let emb = Embedders::fit(config, dataset, &sp.train, &mut log)?;
            let rule = match config.distance_rule {
                DistanceRule::AtLeast => "at least",
                DistanceRule::Below => "below",
            };
            notes.push(format!("distance rule: interacts when distance is {rule} {}", config.distance_threshold));
            baselines::siamese_distance_classify(
                emb.siamese.as_ref().expect("image modality fitted"),
                &test_keys,
                &test_images(dataset, &sp.test),
                config.distance_threshold,
                config.distance_rule,
            )
            .map_err(|e| PipelineError::from(e).in_stage("Siamese baseline"))?
        }
        Method::Fused => {
            let emb = Embedders::fit(config, dataset, &sp.train, &mut log)?;
            num_rules = emb.rules.as_ref().map(RuleSet::len);
            let all = emb.featurize(dataset, &dataset.pairs, config.agg).map_err(|e| e.in_stage("featurize"))?;
            let by_key: BTreeMap<(String, String), &PairFeature> =
                all.iter().map(|f| ((f.drug_a.clone(), f.drug_b.clone()), f)).collect();
            let train_x: Vec<Vec<f64>> = sp.train.iter().map(|p| by_key[&p.key()].fused.clone()).collect();
            let train_y: Vec<bool> = sp.train.iter().map(|p| p.label).collect();
            feature_dim = train_x.first().map(Vec::len);
            log.record_pairs("classifier", &sp.train);
            let clf = train_classifier(&train_x, &train_y, &config.classifier_config())
                .map_err(|e| PipelineError::from(e).in_stage("train classifier"))?;
            let trained = TrainedModel { embedders: emb, classifier: clf };
            let preds = trained.predict(dataset, &sp.test, config.agg, config.threshold).map_err(|e| e.in_stage("evaluate"))?;
            let labels = dataset.pairs.iter().map(|p| p.label).collect();
            features = Some((all, labels));
            model = Some(trained);
            preds
        }
    };
    log.check_no_leakage(&sp.train)?;
    let predicted: Vec<bool> = predictions.iter().map(|p| p.interacts).collect();
    let actual: Vec<bool> = sp.test.iter().map(|p| p.label).collect();
    let metrics = Metrics::from_predictions(&predicted, &actual)?;
    let report = Report {
        method: method_label(config),
        metrics,
        config_hash: config.hash(),
        seed: config.seed,
        train_counts: class_counts(&sp.train),
        test_counts: class_counts(&sp.test),
        feature_dim,
        num_rules,
        notes,
        generated_unix: None,
    };
    Ok(Experiment { report, split: sp, fit_log: log, predictions, model, features })
}

/// Ingests the configured data and runs the experiment; the report carries
/// the current time.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment, PipelineError> {
    let (dataset, _) = ingest(&config.data, IngestOptions { resize: config.resize }).map_err(|e| e.in_stage("ingest"))?;
    let mut exp = run_on_dataset(config, &dataset)?;
    exp.report.generated_unix = Some(SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()));
    Ok(exp)
}
