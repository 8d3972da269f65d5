//! Action-budget sweeps and the agent comparison table: how does
//! held-out macro-F1 grow with the analysis budget, and how many
//! actions does each agent need before its curve plateaus?

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{macro_f1, train_classifier, Corpus, EvalError, SplitSpec, SvmHyper};
use crate::analyzer::{analyze_with_feature_snapshots, AnalyzerConfig, RewardSpec};
use crate::exploration::ControllerSpec;
use crate::rl::LearningConfig;
use crate::seeds;

/// Analyzer parameters shared by every agent in a sweep; the agent
/// contributes only its exploration controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    pub learning: LearningConfig,
    #[serde(default)]
    pub reward: RewardSpec,
    pub per_action_cost_secs: f64,
}

/// A named exploration policy entered in the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub name: String,
    pub controller: ControllerSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Budgets 1..=max_budget are evaluated.
    pub max_budget: u32,
    /// Independent seeds; each varies analysis randomness and the
    /// train/test split.
    pub seeds: u32,
    pub train_fraction: f64,
    pub svm: SvmHyper,
    /// Hashed edge-feature dimension appended to the vocabulary block.
    pub pair_features: usize,
    /// Plateau tolerance for reading off the optimal action count.
    pub plateau_delta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            max_budget: 12,
            seeds: 5,
            train_fraction: 0.7,
            svm: SvmHyper::default(),
            pair_features: 512,
            plateau_delta: 0.01,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.max_budget < 1 {
            return Err(EvalError::InvalidSweep("max_budget must be at least 1".into()));
        }
        if self.seeds < 1 {
            return Err(EvalError::InvalidSweep("at least one seed is required".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(EvalError::InvalidSweep(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            )));
        }
        if self.pair_features == 0 {
            return Err(EvalError::InvalidSweep("pair_features must be positive".into()));
        }
        if !(self.plateau_delta > 0.0) {
            return Err(EvalError::InvalidSweep(format!(
                "plateau_delta must be positive, got {}",
                self.plateau_delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetStats {
    pub budget: u32,
    pub mean_f1: f64,
    pub std_f1: f64,
}

/// Macro-F1 as a function of action budget for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub agent: String,
    pub budgets: Vec<BudgetStats>,
    /// Raw curve per seed: `per_seed[s][b]` is the macro-F1 at budget
    /// `b + 1` under seed index `s`.
    pub per_seed: Vec<Vec<f64>>,
}

impl SweepResult {
    pub const CSV_HEADER: &'static str = "budget,mean_macro_f1,std_macro_f1";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.budgets {
            out.push_str(&format!("{},{},{}\n", row.budget, row.mean_f1, row.std_f1));
        }
        out
    }
}

/// Sweep one agent across budgets `1..=max_budget`.
///
/// Each sample is analyzed once per seed at the full budget; because
/// the analysis loop consumes randomness step by step, the feature
/// snapshot captured after `n` steps equals a standalone budget-`n`
/// run, so every budget column comes from the same pass.
pub fn sweep_action_budget(
    corpus: &Corpus,
    agent: &AgentSpec,
    params: &AnalysisParams,
    cfg: &SweepConfig,
    master_seed: u64,
) -> Result<SweepResult, EvalError> {
    cfg.validate()?;
    agent
        .controller
        .validate()
        .map_err(|e| EvalError::InvalidSweep(e.to_string()))?;
    if corpus.is_empty() {
        return Err(EvalError::InvalidSweep("corpus is empty".into()));
    }
    let labels = corpus.labels();
    let distinct: std::collections::BTreeSet<u32> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(EvalError::DegenerateSplit(
            "sweep needs a corpus with at least 2 families".into(),
        ));
    }

    let vocab = corpus.config.world.vocab_size as usize;
    let dim = vocab + cfg.pair_features;
    let budgets: Vec<u32> = (1..=cfg.max_budget).collect();

    let per_seed: Vec<Vec<f64>> = (0..cfg.seeds as u64)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&seed_index| -> Result<Vec<f64>, EvalError> {
            // One full-budget analysis per sample, snapshot features at
            // every budget.
            let snapshots: Vec<Vec<super::SparseFeatures>> = corpus
                .samples
                .par_iter()
                .map(|sample| {
                    let analyzer_cfg = AnalyzerConfig {
                        max_actions: cfg.max_budget,
                        learning: params.learning,
                        controller: agent.controller.clone(),
                        reward: params.reward,
                        per_action_cost_secs: params.per_action_cost_secs,
                        seed: seeds::mix(
                            master_seed,
                            &[seeds::stream::ANALYSIS, seed_index, sample.id.0 as u64],
                        ),
                    };
                    analyze_with_feature_snapshots(
                        sample,
                        &analyzer_cfg,
                        vocab,
                        cfg.pair_features,
                        &budgets,
                    )
                    .map(|(_, snaps)| snaps)
                    .map_err(|e| EvalError::AnalysisFailed {
                        sample: sample.id.0,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;

            let split = SplitSpec {
                train_fraction: cfg.train_fraction,
                seed: seeds::mix(master_seed, &[seeds::stream::SPLIT, seed_index]),
            };
            budgets
                .par_iter()
                .enumerate()
                .map(|(b_idx, _)| {
                    let features: Vec<super::SparseFeatures> =
                        snapshots.iter().map(|s| s[b_idx].clone()).collect();
                    let (_, held_out) =
                        train_classifier(&features, &labels, dim, split, &cfg.svm)?;
                    Ok(macro_f1(&held_out.predicted, &held_out.actual)?.macro_f1)
                })
                .collect::<Result<Vec<f64>, EvalError>>()
        })
        .collect::<Result<_, _>>()?;

    let mut stats = Vec::with_capacity(budgets.len());
    for (b_idx, &budget) in budgets.iter().enumerate() {
        let values: Vec<f64> = per_seed.iter().map(|row| row[b_idx]).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (values.len() - 1) as f64;
            var.sqrt()
        };
        stats.push(BudgetStats { budget, mean_f1: mean, std_f1: std });
    }

    Ok(SweepResult { agent: agent.name.clone(), budgets: stats, per_seed })
}

/// Smallest budget whose mean F1 is within `delta` of the best mean F1
/// across the whole curve.
pub fn optimal_actions(result: &SweepResult, delta: f64) -> u32 {
    let best = result
        .budgets
        .iter()
        .map(|b| b.mean_f1)
        .fold(f64::NEG_INFINITY, f64::max);
    result
        .budgets
        .iter()
        .find(|b| b.mean_f1 >= best - delta)
        .map(|b| b.budget)
        .unwrap_or(1)
}

/// Per-seed plateau read-off: the optimal budget of each seed's own
/// curve. Medians of these drive the agent comparison statistics.
pub fn per_seed_optimal_actions(result: &SweepResult, delta: f64) -> Vec<u32> {
    result
        .per_seed
        .iter()
        .map(|curve| {
            let best = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            curve
                .iter()
                .position(|&f1| f1 >= best - delta)
                .map(|idx| idx as u32 + 1)
                .unwrap_or(1)
        })
        .collect()
}

/// Simulated wall-clock seconds for running an analysis at the given
/// action count.
pub fn simulated_seconds(actions: u32, per_action_cost_secs: f64) -> f64 {
    actions as f64 * per_action_cost_secs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub agent: String,
    pub optimal_actions: u32,
    pub simulated_seconds: f64,
}

/// Agent comparison: plateau action count and implied analysis time
/// per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub const CSV_HEADER: &'static str = "agent,optimal_actions,simulated_seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{}\n",
                row.agent, row.optimal_actions, row.simulated_seconds
            ));
        }
        out
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .rows
            .iter()
            .map(|r| r.agent.len())
            .chain(["agent".len()])
            .max()
            .unwrap_or(5);
        writeln!(f, "{:<width$}  {:>15}  {:>12}", "agent", "optimal actions", "time [s]")?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<width$}  {:>15}  {:>12.1}",
                row.agent, row.optimal_actions, row.simulated_seconds
            )?;
        }
        Ok(())
    }
}

/// Read one comparison row off a finished sweep.
pub fn comparison_row(
    result: &SweepResult,
    delta: f64,
    per_action_cost_secs: f64,
) -> ComparisonRow {
    let optimal = optimal_actions(result, delta);
    ComparisonRow {
        agent: result.agent.clone(),
        optimal_actions: optimal,
        simulated_seconds: simulated_seconds(optimal, per_action_cost_secs),
    }
}

/// Sweep every agent on the same corpus and assemble the comparison
/// table. Rows keep the input agent order.
pub fn compare_agents(
    corpus: &Corpus,
    agents: &[AgentSpec],
    params: &AnalysisParams,
    cfg: &SweepConfig,
    master_seed: u64,
) -> Result<(ComparisonTable, Vec<SweepResult>), EvalError> {
    if agents.is_empty() {
        return Err(EvalError::InvalidSweep("no agents to compare".into()));
    }
    let mut rows = Vec::with_capacity(agents.len());
    let mut sweeps = Vec::with_capacity(agents.len());
    for agent in agents {
        let result = sweep_action_budget(corpus, agent, params, cfg, master_seed)?;
        rows.push(comparison_row(&result, cfg.plateau_delta, params.per_action_cost_secs));
        sweeps.push(result);
    }
    Ok((ComparisonTable { rows }, sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{build_corpus, CorpusConfig};
    use crate::world::WorldConfig;

    fn small_corpus() -> Corpus {
        build_corpus(
            &CorpusConfig {
                families: 3,
                samples_per_family: 8,
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
            },
            77,
        )
        .unwrap()
    }

    fn params() -> AnalysisParams {
        AnalysisParams {
            learning: LearningConfig::new(0.95, 0.1).unwrap(),
            reward: RewardSpec::Novelty,
            per_action_cost_secs: 21.0,
        }
    }

    fn quick_sweep_config() -> SweepConfig {
        SweepConfig {
            max_budget: 4,
            seeds: 2,
            svm: SvmHyper { epochs: 12, ..SvmHyper::default() },
            pair_features: 64,
            ..SweepConfig::default()
        }
    }

    fn bmc_agent() -> AgentSpec {
        AgentSpec { name: "epsilon-bmc".into(), controller: ControllerSpec::default() }
    }

    #[test]
    fn sweep_produces_one_row_per_budget() {
        let corpus = small_corpus();
        let result =
            sweep_action_budget(&corpus, &bmc_agent(), &params(), &quick_sweep_config(), 5)
                .unwrap();
        assert_eq!(result.budgets.len(), 4);
        assert_eq!(result.per_seed.len(), 2);
        for row in &result.budgets {
            assert!((0.0..=1.0).contains(&row.mean_f1));
            assert!(row.std_f1 >= 0.0);
        }
        let csv = result.to_csv();
        assert_eq!(csv.trim_end().lines().count(), 5);
    }

    #[test]
    fn sweep_is_bit_deterministic() {
        let corpus = small_corpus();
        let a = sweep_action_budget(&corpus, &bmc_agent(), &params(), &quick_sweep_config(), 5)
            .unwrap();
        let b = sweep_action_budget(&corpus, &bmc_agent(), &params(), &quick_sweep_config(), 5)
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn single_family_corpus_is_rejected() {
        let mut corpus = small_corpus();
        corpus.samples.retain(|s| s.family.0 == 0);
        let err = sweep_action_budget(
            &corpus,
            &bmc_agent(),
            &params(),
            &quick_sweep_config(),
            5,
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::DegenerateSplit(_)));
    }

    fn fixture(agent: &str, means: &[f64]) -> SweepResult {
        SweepResult {
            agent: agent.into(),
            budgets: means
                .iter()
                .enumerate()
                .map(|(i, &m)| BudgetStats { budget: i as u32 + 1, mean_f1: m, std_f1: 0.0 })
                .collect(),
            per_seed: vec![means.to_vec()],
        }
    }

    #[test]
    fn optimal_actions_reads_the_plateau() {
        // Saturates at budget 7.
        let curve = fixture(
            "x",
            &[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.8, 0.8, 0.8, 0.8, 0.8],
        );
        assert_eq!(optimal_actions(&curve, 0.01), 7);
        assert_eq!(per_seed_optimal_actions(&curve, 0.01), vec![7]);

        let flat = fixture("x", &[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(optimal_actions(&flat, 0.01), 1);

        // Tolerance larger than the curve's whole rise.
        let gentle = fixture("x", &[0.50, 0.51, 0.52]);
        assert_eq!(optimal_actions(&gentle, 0.05), 1);
    }

    #[test]
    fn comparison_row_arithmetic_is_exact() {
        let seven = fixture("epsilon-bmc", &[0.2, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.8]);
        let row = comparison_row(&seven, 0.01, 21.0);
        assert_eq!(row.optimal_actions, 7);
        assert_eq!(row.simulated_seconds, 147.0);

        let eight = fixture(
            "constant-epsilon",
            &[0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8],
        );
        let row = comparison_row(&eight, 0.01, 21.0);
        assert_eq!(row.optimal_actions, 8);
        assert_eq!(row.simulated_seconds, 168.0);
    }

    #[test]
    fn compare_emits_one_row_per_agent_in_order() {
        let corpus = small_corpus();
        let agents = vec![
            bmc_agent(),
            AgentSpec {
                name: "constant-epsilon".into(),
                controller: ControllerSpec::Constant { epsilon: 0.1 },
            },
        ];
        let (table, sweeps) =
            compare_agents(&corpus, &agents, &params(), &quick_sweep_config(), 5).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].agent, "epsilon-bmc");
        assert_eq!(table.rows[1].agent, "constant-epsilon");
        assert_eq!(sweeps.len(), 2);
        let text = table.to_string();
        assert!(text.contains("agent"));
        assert!(text.contains("constant-epsilon"));
    }

    #[test]
    fn duplicate_agent_rows_are_identical() {
        let corpus = small_corpus();
        let agents = vec![bmc_agent(), bmc_agent()];
        let (table, _) =
            compare_agents(&corpus, &agents, &params(), &quick_sweep_config(), 5).unwrap();
        assert_eq!(table.rows[0].optimal_actions, table.rows[1].optimal_actions);
        assert_eq!(table.rows[0].simulated_seconds, table.rows[1].simulated_seconds);
    }

    #[test]
    fn sweep_config_validation() {
        let mut cfg = SweepConfig::default();
        cfg.max_budget = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::default();
        cfg.seeds = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::default();
        cfg.plateau_delta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = SweepConfig::default();
        cfg.train_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }
}
