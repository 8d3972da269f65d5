//! Experiment configuration: one structured JSON file drives every
//! command. Unknown keys are rejected so typos fail loudly; every
//! section has defaults, so `{}` is a valid experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use amalab_core::analyzer::RewardSpec;
use amalab_core::eval::{AgentSpec, AnalysisParams, CorpusConfig, SvmHyper, SweepConfig};
use amalab_core::exploration::ControllerSpec;
use amalab_core::rl::LearningConfig;
use amalab_core::world::WorldConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path} failed to parse: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_master_seed() -> u64 {
    42
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_max_actions() -> u32 {
    12
}
fn default_gamma() -> f64 {
    0.95
}
fn default_eta() -> f64 {
    0.1
}
fn default_per_action_cost() -> f64 {
    21.0
}

/// Corpus shape and optional pre-generated corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub families: u32,
    pub samples_per_family: u32,
    /// When set, `run`, `sweep` and `compare` load this corpus instead
    /// of regenerating one from the world section.
    pub corpus_file: Option<PathBuf>,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { families: 20, samples_per_family: 30, corpus_file: None }
    }
}

/// Analysis-loop parameters; the `controller` is the agent used by the
/// `run` command (sweep and compare take theirs from `agents`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzerSection {
    pub max_actions: u32,
    pub gamma: f64,
    pub eta: f64,
    pub reward: RewardSpec,
    pub per_action_cost_secs: f64,
    pub controller: ControllerSpec,
}

impl Default for AnalyzerSection {
    fn default() -> Self {
        Self {
            max_actions: default_max_actions(),
            gamma: default_gamma(),
            eta: default_eta(),
            reward: RewardSpec::Novelty,
            per_action_cost_secs: default_per_action_cost(),
            controller: ControllerSpec::default(),
        }
    }
}

/// Sweep and classifier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub max_budget: u32,
    pub seeds: u32,
    pub train_fraction: f64,
    pub lambda: f64,
    pub epochs: u32,
    pub learning_rate: f64,
    pub pair_features: usize,
    pub plateau_delta: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            max_budget: sweep.max_budget,
            seeds: sweep.seeds,
            train_fraction: sweep.train_fraction,
            lambda: sweep.svm.lambda,
            epochs: sweep.svm.epochs,
            learning_rate: sweep.svm.learning_rate,
            pair_features: sweep.pair_features,
            plateau_delta: sweep.plateau_delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads for sample analyses and sweep cells; 0 picks the
    /// machine's core count. Results are merged in sample order, so the
    /// value never changes any output byte.
    pub workers: usize,
    pub world: WorldConfig,
    pub corpus: CorpusSection,
    pub analyzer: AnalyzerSection,
    pub agents: Vec<AgentSpec>,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: default_master_seed(),
            output_dir: default_output_dir(),
            workers: 0,
            world: WorldConfig::default(),
            corpus: CorpusSection::default(),
            analyzer: AnalyzerSection::default(),
            agents: default_agents(),
            sweep: SweepSection::default(),
        }
    }
}

/// The standard comparison field: the adaptive controller against a
/// fixed rate and a geometric schedule.
pub fn default_agents() -> Vec<AgentSpec> {
    vec![
        AgentSpec { name: "epsilon-bmc".into(), controller: ControllerSpec::default() },
        AgentSpec {
            name: "constant-epsilon".into(),
            controller: ControllerSpec::Constant { epsilon: 0.1 },
        },
        AgentSpec {
            name: "annealed-epsilon".into(),
            controller: ControllerSpec::Annealed { initial: 1.0, decay: 0.9, min: 0.05 },
        },
    ]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.corpus_config().validate().map_err(|e| invalid(&e))?;
        self.analyzer
            .controller
            .validate()
            .map_err(|e| invalid(&e))?;
        LearningConfig::new(self.analyzer.gamma, self.analyzer.eta).map_err(|e| invalid(&e))?;
        if self.analyzer.max_actions < 1 {
            return Err(ConfigError::Invalid("analyzer.max_actions must be at least 1".into()));
        }
        if !(self.analyzer.per_action_cost_secs > 0.0) {
            return Err(ConfigError::Invalid(
                "analyzer.per_action_cost_secs must be positive".into(),
            ));
        }
        if self.agents.is_empty() {
            return Err(ConfigError::Invalid("agents list is empty".into()));
        }
        for agent in &self.agents {
            if agent.name.is_empty() || agent.name.contains(',') {
                return Err(ConfigError::Invalid(format!(
                    "agent name {:?} must be nonempty and comma-free",
                    agent.name
                )));
            }
            agent.controller.validate().map_err(|e| invalid(&e))?;
        }
        self.sweep_config().validate().map_err(|e| invalid(&e))?;
        Ok(())
    }

    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            families: self.corpus.families,
            samples_per_family: self.corpus.samples_per_family,
            world: self.world.clone(),
        }
    }

    pub fn analysis_params(&self) -> AnalysisParams {
        AnalysisParams {
            learning: LearningConfig {
                gamma: self.analyzer.gamma,
                eta: self.analyzer.eta,
            },
            reward: self.analyzer.reward,
            per_action_cost_secs: self.analyzer.per_action_cost_secs,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            max_budget: self.sweep.max_budget,
            seeds: self.sweep.seeds,
            train_fraction: self.sweep.train_fraction,
            svm: SvmHyper {
                lambda: self.sweep.lambda,
                epochs: self.sweep.epochs,
                learning_rate: self.sweep.learning_rate,
            },
            pair_features: self.sweep.pair_features,
            plateau_delta: self.sweep.plateau_delta,
        }
    }
}
