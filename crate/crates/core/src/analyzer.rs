//! The per-sample analysis loop.
//!
//! Couples an epsilon controller, the tabular Q-learner, the synthetic
//! environment and the graph builder for a fixed budget of trigger
//! actions. One step: read epsilon, pick an intent epsilon-greedily,
//! execute it, fold the trace into the call graph, reward the novelty
//! it contributed, compute the three bootstrapped targets, TD-update on
//! the expected-SARSA target, feed the targets to the controller, and
//! advance to the trace's terminal call.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::{ControllerSpec, ExplorationError};
use crate::graph::{CallGraph, GraphError, NoveltyReport};
use crate::rl::{
    self, ActionId, LearningConfig, QTable, RlError, StateId, Transition,
};
use crate::world::{MalwareSample, Trace, WorldError, INIT};

/// Reward handed to the learner each step. Kept in config so alternate
/// shapings can be compared without touching the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardSpec {
    /// New nodes plus new edges contributed by the ingested trace.
    #[default]
    Novelty,
}

impl RewardSpec {
    pub fn reward(&self, report: &NoveltyReport) -> f64 {
        match self {
            Self::Novelty => novelty_reward(report),
        }
    }
}

/// Information-gain reward: count of previously unseen nodes plus
/// previously unseen edges.
pub fn novelty_reward(report: &NoveltyReport) -> f64 {
    (report.new_nodes + report.new_edges) as f64
}

/// The learner's state abstraction: the terminal API call of the
/// previous trace, `Init` before the first action.
pub fn analyzer_state(last_trace: Option<&Trace>) -> StateId {
    StateId(last_trace.map_or(INIT.0, |t| t.terminal().0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzerConfig {
    /// Number of trigger actions to execute.
    pub max_actions: u32,
    pub learning: LearningConfig,
    pub controller: ControllerSpec,
    #[serde(default)]
    pub reward: RewardSpec,
    /// Simulated wall-clock cost of one select-execute-observe-reset
    /// round, in seconds.
    pub per_action_cost_secs: f64,
    pub seed: u64,
}

impl AnalyzerConfig {
    pub fn validate(&self) -> Result<(), AnalyzerError> {
        if self.max_actions < 1 {
            return Err(AnalyzerError::InvalidConfig(
                "max_actions must be at least 1".into(),
            ));
        }
        if !(self.per_action_cost_secs > 0.0 && self.per_action_cost_secs.is_finite()) {
            return Err(AnalyzerError::InvalidConfig(format!(
                "per_action_cost_secs must be positive, got {}",
                self.per_action_cost_secs
            )));
        }
        self.learning.validate()?;
        self.controller.validate()?;
        Ok(())
    }
}

/// One executed trigger action, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u32,
    pub state: StateId,
    pub action: ActionId,
    pub epsilon: f64,
    pub trace_len: u32,
    pub reward: f64,
    pub new_nodes: u64,
    pub new_edges: u64,
    pub target_greedy: f64,
    pub target_uniform: f64,
    pub target_expected: f64,
}

impl StepLog {
    pub const CSV_HEADER: &'static str = "step,state,action,epsilon,trace_len,reward,new_nodes,new_edges,target_greedy,target_uniform,target_expected";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.state.0,
            self.action.0,
            self.epsilon,
            self.trace_len,
            self.reward,
            self.new_nodes,
            self.new_edges,
            self.target_greedy,
            self.target_uniform,
            self.target_expected
        )
    }
}

/// Result of one full-budget analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisResult {
    pub graph: CallGraph,
    pub steps: Vec<StepLog>,
    /// Simulated wall time: executed actions times the per-action cost.
    pub elapsed_secs: f64,
}

impl AnalysisResult {
    pub fn steps_csv(&self) -> String {
        let mut out = String::from(StepLog::CSV_HEADER);
        out.push('\n');
        for step in &self.steps {
            out.push_str(&step.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("invalid analyzer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Learning(#[from] RlError),
    #[error(transparent)]
    Controller(#[from] ExplorationError),
    #[error("analysis failed at step {step}: {source}")]
    Step {
        step: u32,
        source: StepFailure,
        /// Whatever completed before the failure.
        partial: Box<AnalysisResult>,
    },
}

#[derive(Debug, Error)]
pub enum StepFailure {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Learning(#[from] RlError),
}

/// Run the full analysis loop against one sample. Deterministic given
/// the config seed.
pub fn analyze_sample(
    sample: &MalwareSample,
    cfg: &AnalyzerConfig,
) -> Result<AnalysisResult, AnalyzerError> {
    analyze_with_snapshots(sample, cfg, &mut |_, _| {})
}

/// Feature snapshots of the evolving graph at each budget in
/// `budgets` (ascending, each at most `cfg.max_actions`). Because the
/// loop consumes randomness step by step from one stream, the graph
/// after `n` steps is bit-identical to a standalone run with budget
/// `n` and the same seed.
pub fn analyze_with_feature_snapshots(
    sample: &MalwareSample,
    cfg: &AnalyzerConfig,
    vocab_size: usize,
    pair_dim: usize,
    budgets: &[u32],
) -> Result<(AnalysisResult, Vec<Vec<(u32, f64)>>), AnalyzerError> {
    let mut snapshots = Vec::with_capacity(budgets.len());
    let result = analyze_with_snapshots(sample, cfg, &mut |step, graph| {
        if budgets.contains(&step) {
            snapshots.push(graph.sparse_features(vocab_size, pair_dim));
        }
    })?;
    Ok((result, snapshots))
}

fn analyze_with_snapshots(
    sample: &MalwareSample,
    cfg: &AnalyzerConfig,
    on_step: &mut dyn FnMut(u32, &CallGraph),
) -> Result<AnalysisResult, AnalyzerError> {
    cfg.validate()?;
    let actions = sample.action_space();
    if actions.is_empty() {
        return Err(AnalyzerError::InvalidConfig(
            "sample manifest is empty".into(),
        ));
    }
    let mut controller = cfg.controller.build()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut q = QTable::new();
    let mut graph = CallGraph::new();
    let mut steps: Vec<StepLog> = Vec::with_capacity(cfg.max_actions as usize);
    let mut state = analyzer_state(None);

    for step in 1..=cfg.max_actions {
        match run_step(
            sample,
            cfg,
            &actions,
            &mut controller,
            &mut rng,
            &mut q,
            &mut graph,
            state,
            step,
        ) {
            Ok((log, next_state)) => {
                state = next_state;
                steps.push(log);
                on_step(step, &graph);
            }
            Err(source) => {
                let elapsed = steps.len() as f64 * cfg.per_action_cost_secs;
                return Err(AnalyzerError::Step {
                    step,
                    source,
                    partial: Box::new(AnalysisResult { graph, steps, elapsed_secs: elapsed }),
                });
            }
        }
    }

    let elapsed_secs = cfg.max_actions as f64 * cfg.per_action_cost_secs;
    Ok(AnalysisResult { graph, steps, elapsed_secs })
}

#[allow(clippy::too_many_arguments)]
fn run_step(
    sample: &MalwareSample,
    cfg: &AnalyzerConfig,
    actions: &[ActionId],
    controller: &mut crate::exploration::EpsilonController,
    rng: &mut ChaCha12Rng,
    q: &mut QTable,
    graph: &mut CallGraph,
    state: StateId,
    step: u32,
) -> Result<(StepLog, StateId), StepFailure> {
    let epsilon = controller.epsilon();
    let action = rl::epsilon_greedy_sample(q, state, actions, epsilon, rng)?;
    let trace = sample.execute_trigger(action, rng)?;
    let novelty = graph.ingest_trace(action, &trace)?;
    let reward = cfg.reward.reward(&novelty);
    let next_state = analyzer_state(Some(&trace));
    let transition = Transition::new(state, action, reward, next_state, actions.to_vec())?;

    let gamma = cfg.learning.gamma;
    let target_greedy = rl::q_learning_target(q, &transition, gamma);
    let target_uniform = rl::uniform_target(q, &transition, gamma);
    let target_expected = rl::expected_sarsa_target(q, &transition, gamma, epsilon)?;

    q.td_update(state, action, target_expected, cfg.learning.eta)?;
    controller.observe(target_greedy, target_uniform, target_expected);
    sample.reset_environment();

    let log = StepLog {
        step,
        state,
        action,
        epsilon,
        trace_len: trace.len() as u32,
        reward,
        new_nodes: novelty.new_nodes,
        new_edges: novelty.new_edges,
        target_greedy,
        target_uniform,
        target_expected,
    };
    Ok((log, next_state))
}
