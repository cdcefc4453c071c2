use std::collections::BTreeMap;

use rand::Rng as _;

use crate::tensor::rng_from_seed;

use super::SmilesError;

#[derive(Debug, Clone, PartialEq)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `lr * 1e-4`.
    pub lr: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { dim: 100, window: 5, negatives: 5, epochs: 30, lr: 0.025, seed: 0 }
    }
}

/// Learned k-mer vocabulary. Tokens are ordered by descending count, ties by
/// token text, so the table is independent of corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    dim: usize,
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: BTreeMap<String, usize>,
    vectors: Vec<f64>,
}

impl Vocab {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, token: &str) -> Option<u64> {
        self.index.get(token).map(|&i| self.counts[i])
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Rebuilds a vocabulary from stored vectors (counts are unknown and set to 0).
    pub fn from_vectors(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self, SmilesError> {
        if dim == 0 {
            return Err(SmilesError::InvalidConfig("dim must be positive".into()));
        }
        let mut tokens = Vec::with_capacity(entries.len());
        let mut index = BTreeMap::new();
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for (t, v) in entries {
            if v.len() != dim {
                return Err(SmilesError::InvalidConfig(format!("vector for `{t}` has length {}", v.len())));
            }
            if index.insert(t.clone(), tokens.len()).is_some() {
                return Err(SmilesError::InvalidConfig(format!("duplicate token `{t}`")));
            }
            tokens.push(t);
            vectors.extend(v);
        }
        let counts = vec![0; tokens.len()];
        Ok(Self { dim, tokens, counts, index, vectors })
    }
}

#[derive(Debug, Clone)]
pub struct SkipGramHistory {
    pub vocab: Vocab,
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

pub fn train_skipgram(corpus: &[Vec<String>], config: &SkipGramConfig) -> Result<Vocab, SmilesError> {
    train_skipgram_with_history(corpus, config).map(|h| h.vocab)
}

fn sigmoid(x: f64) -> f64 {
    crate::tensor::sigmoid(x)
}

/// Skip-gram with negative sampling. Negatives are drawn from the unigram
/// distribution raised to 0.75; each center sees a window shrunk uniformly
/// in `1..=window`, as in the reference word2vec trainer.
pub fn train_skipgram_with_history(
    corpus: &[Vec<String>],
    config: &SkipGramConfig,
) -> Result<SkipGramHistory, SmilesError> {
    if config.dim == 0 || config.window == 0 {
        return Err(SmilesError::InvalidConfig("dim and window must be positive".into()));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) {
        return Err(SmilesError::InvalidConfig("lr must be positive".into()));
    }

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for sentence in corpus {
        for t in sentence {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    if freq.is_empty() {
        return Err(SmilesError::EmptyVocabulary);
    }
    let mut ordered: Vec<(&str, u64)> = freq.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens: Vec<String> = ordered.iter().map(|(t, _)| t.to_string()).collect();
    let counts: Vec<u64> = ordered.iter().map(|(_, c)| *c).collect();
    let index: BTreeMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    let sentences: Vec<Vec<usize>> =
        corpus.iter().map(|s| s.iter().map(|t| index[t.as_str()]).collect()).collect();

    let mut cumulative = Vec::with_capacity(counts.len());
    let mut acc = 0.0;
    for &c in &counts {
        acc += (c as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total_mass = acc;

    let dim = config.dim;
    let n_vocab = tokens.len();
    let mut rng = rng_from_seed(config.seed);
    let half = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..n_vocab * dim).map(|_| rng.gen_range(-half..half)).collect();
    let mut output = vec![0.0; n_vocab * dim];

    let total_tokens: usize = sentences.iter().map(Vec::len).sum();
    let schedule = (total_tokens * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for sentence in &sentences {
            for (i, &center) in sentence.iter().enumerate() {
                let lr = config.lr * (1.0 - processed as f64 / schedule).max(1e-4);
                processed += 1;
                let reach = rng.gen_range(1..=config.window);
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(sentence.len() - 1);
                for (j, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let v = &input[center * dim..(center + 1) * dim];
                    for d in 0..=config.negatives {
                        let (target, label) = if d == 0 {
                            (context, 1.0)
                        } else {
                            let r = rng.gen_range(0.0..total_mass);
                            let t = cumulative.partition_point(|&c| c <= r).min(n_vocab - 1);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let u = &mut output[target * dim..(target + 1) * dim];
                        let score: f64 = v.iter().zip(u.iter()).map(|(a, b)| a * b).sum();
                        let p = sigmoid(score);
                        loss_sum -= if label > 0.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                        let g = lr * (label - p);
                        for k in 0..dim {
                            grad[k] += g * u[k];
                            u[k] += g * v[k];
                        }
                    }
                    for (x, g) in input[center * dim..(center + 1) * dim].iter_mut().zip(&grad) {
                        *x += g;
                    }
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }

    Ok(SkipGramHistory { vocab: Vocab { dim, tokens, counts, index, vectors: input }, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn two_topic_corpus() -> Vec<Vec<String>> {
        let mut corpus = Vec::new();
        for _ in 0..40 {
            corpus.push(sentence("A B X Y A B X Y"));
            corpus.push(sentence("C D Z W C D Z W"));
        }
        corpus
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn vocabulary_order_and_counts() {
        let corpus = vec![sentence("b a b c b a")];
        let vocab = train_skipgram(&corpus, &SkipGramConfig { epochs: 1, dim: 4, ..Default::default() }).unwrap();
        assert_eq!(vocab.tokens(), ["b", "a", "c"]);
        assert_eq!(vocab.count("b"), Some(3));
        assert_eq!(vocab.count("z"), None);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let err = train_skipgram(&[vec![]], &SkipGramConfig::default()).unwrap_err();
        assert_eq!(err, SmilesError::EmptyVocabulary);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = SkipGramConfig { epochs: 3, dim: 16, seed: 11, ..Default::default() };
        let a = train_skipgram_with_history(&two_topic_corpus(), &cfg).unwrap();
        let b = train_skipgram_with_history(&two_topic_corpus(), &cfg).unwrap();
        assert_eq!(a.vocab, b.vocab);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn cooccurring_tokens_end_up_closer() {
        let cfg = SkipGramConfig { epochs: 10, dim: 20, seed: 5, ..Default::default() };
        let vocab = train_skipgram(&two_topic_corpus(), &cfg).unwrap();
        let v = |t: &str| vocab.vector(t).unwrap();
        assert!(cosine(v("A"), v("B")) > cosine(v("A"), v("C")));
        assert!(cosine(v("Z"), v("W")) > cosine(v("X"), v("W")));
    }

    #[test]
    fn loss_decreases_over_early_epochs() {
        let cfg = SkipGramConfig { epochs: 5, dim: 20, seed: 2, ..Default::default() };
        let h = train_skipgram_with_history(&two_topic_corpus(), &cfg).unwrap();
        assert_eq!(h.epoch_losses.len(), 5);
        assert!(h.epoch_losses[4] < h.epoch_losses[0]);
    }

    #[test]
    fn single_token_corpus_stays_finite() {
        let corpus = vec![sentence("Q Q Q Q Q")];
        let h = train_skipgram_with_history(&corpus, &SkipGramConfig { epochs: 3, ..Default::default() }).unwrap();
        assert!(h.epoch_losses.iter().all(|l| l.is_finite()));
        assert!(h.vocab.vector("Q").unwrap().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn from_vectors_checks_widths() {
        assert!(Vocab::from_vectors(2, vec![("a".into(), vec![1.0])]).is_err());
        let v = Vocab::from_vectors(2, vec![("a".into(), vec![1.0, 2.0])]).unwrap();
        assert_eq!(v.vector("a"), Some(&[1.0, 2.0][..]));
    }
}
