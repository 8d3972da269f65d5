//! Evaluation harness: corpus construction, linear max-margin
//! classification of call-graph features, macro-F1 scoring, action-
//! budget sweeps and the agent comparison table.

mod metrics;
mod svm;
mod sweep;

pub use metrics::{macro_f1, F1Report};
pub use svm::{train_one_vs_rest, LinearModel, SparseFeatures, SvmHyper};
pub use sweep::{
    compare_agents, comparison_row, optimal_actions, per_seed_optimal_actions,
    simulated_seconds, sweep_action_budget, AgentSpec, AnalysisParams, BudgetStats,
    ComparisonRow, ComparisonTable, SweepConfig, SweepResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds;
use crate::world::{
    generate_family, instantiate_sample, FamilyId, FamilySpec, MalwareSample, SampleId,
    WorldConfig, WorldError,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("infeasible corpus config: {0}")]
    InfeasibleCorpus(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("prediction and label vectors differ in length ({predictions} vs {labels})")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("invalid sweep config: {0}")]
    InvalidSweep(String),
    #[error("analysis failed for sample {sample}: {message}")]
    AnalysisFailed { sample: u32, message: String },
    #[error("corpus document is invalid: {0}")]
    InvalidDocument(String),
    #[error("corpus JSON failed to parse: {0}")]
    Json(#[from] serde_json::Error),
}

/// Shape of a generated corpus: `families` times `samples_per_family`
/// perturbed samples over one shared world configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub families: u32,
    pub samples_per_family: u32,
    pub world: WorldConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            families: 20,
            samples_per_family: 30,
            world: WorldConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.families < 2 {
            return Err(EvalError::InfeasibleCorpus(format!(
                "at least 2 families required, got {}",
                self.families
            )));
        }
        if self.samples_per_family < 2 {
            return Err(EvalError::InfeasibleCorpus(format!(
                "at least 2 samples per family required, got {}",
                self.samples_per_family
            )));
        }
        self.world.validate()?;
        Ok(())
    }
}

/// A balanced labeled corpus, reproducible from its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub seed: u64,
    pub families: Vec<FamilySpec>,
    pub samples: Vec<MalwareSample>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn family_count(&self) -> u32 {
        self.config.families
    }

    /// Family label of each sample, aligned with `samples`.
    pub fn labels(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.family.0).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CorpusDoc::from_corpus(self))
            .expect("corpus document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let doc: CorpusDoc = serde_json::from_str(text)?;
        doc.into_corpus()
    }
}

/// Generate a corpus: per-family kernels, then per-sample perturbed
/// copies, all seeded through dedicated streams so the result is
/// independent of evaluation order.
pub fn build_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Corpus, EvalError> {
    cfg.validate()?;
    let mut families = Vec::with_capacity(cfg.families as usize);
    let mut samples = Vec::with_capacity((cfg.families * cfg.samples_per_family) as usize);
    for f in 0..cfg.families {
        let mut rng = seeds::rng_for(seed, &[seeds::stream::FAMILY, f as u64]);
        let family = generate_family(FamilyId(f), &cfg.world, &mut rng)?;
        for m in 0..cfg.samples_per_family {
            let id = SampleId(f * cfg.samples_per_family + m);
            let mut rng = seeds::rng_for(seed, &[seeds::stream::SAMPLE, f as u64, m as u64]);
            samples.push(instantiate_sample(
                &family,
                id,
                &cfg.world,
                cfg.world.jitter,
                cfg.world.noise_rate,
                &mut rng,
            )?);
        }
        families.push(family);
    }
    Ok(Corpus { config: cfg.clone(), seed, families, samples })
}

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDoc {
    schema_version: u32,
    seed: u64,
    config: CorpusConfig,
    families: Vec<FamilySpec>,
    samples: Vec<MalwareSample>,
}

impl CorpusDoc {
    fn from_corpus(c: &Corpus) -> Self {
        Self {
            schema_version: CORPUS_SCHEMA_VERSION,
            seed: c.seed,
            config: c.config.clone(),
            families: c.families.clone(),
            samples: c.samples.clone(),
        }
    }

    fn into_corpus(self) -> Result<Corpus, EvalError> {
        if self.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(EvalError::InvalidDocument(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        let corpus = Corpus {
            config: self.config,
            seed: self.seed,
            families: self.families,
            samples: self.samples,
        };
        corpus.config.validate()?;
        let expected = (corpus.config.families * corpus.config.samples_per_family) as usize;
        if corpus.samples.len() != expected {
            return Err(EvalError::InvalidDocument(format!(
                "expected {expected} samples, found {}",
                corpus.samples.len()
            )));
        }
        let mut per_family = vec![0u32; corpus.config.families as usize];
        for s in &corpus.samples {
            let idx = s.family.0 as usize;
            if idx >= per_family.len() {
                return Err(EvalError::InvalidDocument(format!(
                    "sample {} carries unknown family {}",
                    s.id.0, s.family.0
                )));
            }
            per_family[idx] += 1;
        }
        if per_family.iter().any(|&c| c != corpus.config.samples_per_family) {
            return Err(EvalError::InvalidDocument(
                "corpus is not balanced across families".into(),
            ));
        }
        for f in &corpus.families {
            f.validate()?;
        }
        Ok(corpus)
    }
}

/// Stratified train/test split: within each class, a seeded shuffle
/// and a `train_fraction` cut. Every class must land at least one
/// sample on each side.
pub fn stratified_split(
    labels: &[u32],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    use rand::seq::SliceRandom;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::DegenerateSplit(format!(
            "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut by_class: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(EvalError::DegenerateSplit(format!(
            "need at least 2 classes, got {}",
            by_class.len()
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut idx) in by_class {
        if idx.len() < 2 {
            return Err(EvalError::DegenerateSplit(format!(
                "class {label} has fewer than 2 samples"
            )));
        }
        let mut rng = seeds::rng_for(seed, &[seeds::stream::SPLIT, label as u64]);
        idx.shuffle(&mut rng);
        let cut = ((idx.len() as f64 * train_fraction).round() as usize)
            .clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..cut]);
        test.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Split specification for [`train_classifier`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// Held-out evaluation rows produced by [`train_classifier`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOut {
    pub indices: Vec<usize>,
    pub predicted: Vec<u32>,
    pub actual: Vec<u32>,
}

/// Train a one-vs-rest hinge-loss model on a stratified split and
/// predict the held-out rows. Deterministic given the split seed and
/// hyperparameters.
pub fn train_classifier(
    features: &[SparseFeatures],
    labels: &[u32],
    dim: usize,
    split: SplitSpec,
    hyper: &SvmHyper,
) -> Result<(LinearModel, HeldOut), EvalError> {
    if features.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: features.len(),
            labels: labels.len(),
        });
    }
    let (train_idx, test_idx) = stratified_split(labels, split.train_fraction, split.seed)?;
    let train_features: Vec<SparseFeatures> =
        train_idx.iter().map(|&i| features[i].clone()).collect();
    let train_labels: Vec<u32> = train_idx.iter().map(|&i| labels[i]).collect();
    let model = train_one_vs_rest(&train_features, &train_labels, dim, hyper, split.seed);
    let predicted: Vec<u32> = test_idx.iter().map(|&i| model.predict(&features[i])).collect();
    let actual: Vec<u32> = test_idx.iter().map(|&i| labels[i]).collect();
    Ok((model, HeldOut { indices: test_idx, predicted, actual }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            families: 4,
            samples_per_family: 6,
            world: WorldConfig {
                vocab_size: 40,
                family_pool: 16,
                noise_pool: 4,
                nodes_per_family: 5,
                intents_min: 2,
                intents_max: 4,
                terminal_min: 0.3,
                terminal_max: 0.6,
                max_trace_len: 16,
                jitter: 0.05,
                noise_rate: 0.0,
            },
        }
    }

    #[test]
    fn corpus_has_expected_shape() {
        let corpus = build_corpus(&small_config(), 5).unwrap();
        assert_eq!(corpus.len(), 24);
        assert_eq!(corpus.families.len(), 4);
        let labels = corpus.labels();
        for f in 0..4 {
            assert_eq!(labels.iter().filter(|&&l| l == f).count(), 6);
        }
    }

    #[test]
    fn default_corpus_is_desk_scale() {
        let cfg = CorpusConfig::default();
        assert_eq!(cfg.families * cfg.samples_per_family, 600);
    }

    #[test]
    fn paper_scale_corpus_shape() {
        // 100 families x 150 samples. Generation is cheap even at this
        // scale; analysis is what the desk-scale default avoids.
        let cfg = CorpusConfig {
            families: 100,
            samples_per_family: 150,
            ..small_config()
        };
        let corpus = build_corpus(&cfg, 1).unwrap();
        assert_eq!(corpus.len(), 15_000);
    }

    #[test]
    fn same_seed_reproduces_corpus_exactly() {
        let a = build_corpus(&small_config(), 9).unwrap();
        let b = build_corpus(&small_config(), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        let c = build_corpus(&small_config(), 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn corpus_round_trips_through_json() {
        let corpus = build_corpus(&small_config(), 3).unwrap();
        let json = corpus.to_json();
        let back = Corpus::from_json(&json).unwrap();
        assert_eq!(corpus, back);
        assert_eq!(json, back.to_json());
    }

    #[test]
    fn unbalanced_documents_are_rejected() {
        let corpus = build_corpus(&small_config(), 3).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&corpus.to_json()).unwrap();
        let samples = doc["samples"].as_array_mut().unwrap();
        samples.pop();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(
            Corpus::from_json(&text),
            Err(EvalError::InvalidDocument(_))
        ));
    }

    #[test]
    fn infeasible_corpus_configs_are_rejected() {
        let mut cfg = small_config();
        cfg.families = 1;
        assert!(build_corpus(&cfg, 0).is_err());
        let mut cfg = small_config();
        cfg.samples_per_family = 1;
        assert!(build_corpus(&cfg, 0).is_err());
    }

    #[test]
    fn stratified_split_balances_classes() {
        let labels: Vec<u32> = (0..40).map(|i| i % 4).collect();
        let (train, test) = stratified_split(&labels, 0.7, 11).unwrap();
        assert_eq!(train.len(), 28);
        assert_eq!(test.len(), 12);
        for class in 0..4u32 {
            let in_train = train.iter().filter(|&&i| labels[i] == class).count();
            assert_eq!(in_train, 7);
        }
        // Deterministic.
        assert_eq!(stratified_split(&labels, 0.7, 11).unwrap(), (train, test));
    }

    #[test]
    fn degenerate_splits_are_rejected() {
        let one_class = vec![0u32; 10];
        assert!(stratified_split(&one_class, 0.7, 0).is_err());
        let tiny = vec![0u32, 1];
        assert!(stratified_split(&tiny, 0.7, 0).is_err());
        let labels: Vec<u32> = (0..10).map(|i| i % 2).collect();
        assert!(stratified_split(&labels, 0.0, 0).is_err());
        assert!(stratified_split(&labels, 1.0, 0).is_err());
    }
}
