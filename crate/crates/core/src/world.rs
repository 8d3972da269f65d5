//! Synthetic malware world.
//!
//! Stands in for an instrumented emulator: hidden ground-truth behavior
//! models are Markov call kernels rooted at `Init`, grouped into
//! families. Each sample is a perturbed copy of its family kernel with
//! its own intent manifest; executing a trigger action emits a random
//! API-call trace from the hidden kernel, optionally interleaved with
//! noise calls drawn from a pool disjoint from the family-informative
//! vocabulary.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rl::ActionId;

/// Index into the global API-call vocabulary. Index 0 is `Init`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ApiCallId(pub u32);

/// The root call every application starts from.
pub const INIT: ApiCallId = ApiCallId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FamilyId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SampleId(pub u32);

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("infeasible world config: {0}")]
    InfeasibleConfig(String),
    #[error("rate {name} must lie in [0, 1), got {value}")]
    RateOutOfRange { name: &'static str, value: f64 },
    #[error("action {0:?} is not in the sample manifest")]
    UnknownAction(ActionId),
    #[error("sample kernel is corrupt: {0}")]
    CorruptSample(String),
    #[error("kernel row {context} sums to {sum}, not 1")]
    NonStochasticRow { context: String, sum: f64 },
    #[error("trace violates its invariants: {0}")]
    InvalidTrace(String),
}

/// Generation parameters for the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    /// Global API vocabulary size `V`; id 0 is reserved for `Init`.
    pub vocab_size: u32,
    /// How many vocabulary entries each family draws its nodes from.
    /// A shared pool smaller than the vocabulary makes families overlap,
    /// so early evidence is ambiguous.
    pub family_pool: u32,
    /// Vocabulary entries reserved for noise calls, taken from the top
    /// of the vocabulary, disjoint from the family pool.
    pub noise_pool: u32,
    /// Nodes per family kernel.
    pub nodes_per_family: u32,
    /// Inclusive range for the number of intents in a sample manifest.
    pub intents_min: u32,
    pub intents_max: u32,
    /// Inclusive range for per-node terminal probabilities.
    pub terminal_min: f64,
    pub terminal_max: f64,
    /// Hard cap on trace length, `Init` included.
    pub max_trace_len: u32,
    /// Per-sample kernel perturbation weight, in [0, 1).
    pub jitter: f64,
    /// Probability of interleaving a noise call before each emitted
    /// kernel call, in [0, 1).
    pub noise_rate: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            vocab_size: 200,
            family_pool: 48,
            noise_pool: 16,
            nodes_per_family: 12,
            intents_min: 5,
            intents_max: 15,
            terminal_min: 0.25,
            terminal_max: 0.5,
            max_trace_len: 32,
            jitter: 0.05,
            noise_rate: 0.05,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let fail = |msg: String| Err(WorldError::InfeasibleConfig(msg));
        if self.nodes_per_family < 2 {
            return fail(format!("nodes_per_family must be >= 2, got {}", self.nodes_per_family));
        }
        if self.vocab_size < self.nodes_per_family {
            return fail(format!(
                "vocab_size {} is smaller than nodes_per_family {}",
                self.vocab_size, self.nodes_per_family
            ));
        }
        if self.family_pool < self.nodes_per_family {
            return fail(format!(
                "family_pool {} is smaller than nodes_per_family {}",
                self.family_pool, self.nodes_per_family
            ));
        }
        if 1 + self.family_pool as u64 + self.noise_pool as u64 > self.vocab_size as u64 {
            return fail(format!(
                "Init + family_pool {} + noise_pool {} exceed vocab_size {}",
                self.family_pool, self.noise_pool, self.vocab_size
            ));
        }
        if self.noise_rate > 0.0 && self.noise_pool == 0 {
            return fail("noise_rate > 0 requires a nonempty noise_pool".to_string());
        }
        if self.intents_min < 1 || self.intents_min > self.intents_max {
            return fail(format!(
                "intent range [{}, {}] is invalid",
                self.intents_min, self.intents_max
            ));
        }
        if !(self.terminal_min >= 0.0
            && self.terminal_min <= self.terminal_max
            && self.terminal_max <= 1.0)
        {
            return fail(format!(
                "terminal range [{}, {}] is invalid",
                self.terminal_min, self.terminal_max
            ));
        }
        if self.max_trace_len < 2 {
            return fail(format!("max_trace_len must be >= 2, got {}", self.max_trace_len));
        }
        check_rate("jitter", self.jitter)?;
        check_rate("noise_rate", self.noise_rate)?;
        Ok(())
    }

    /// Ids reserved for noise calls: the top `noise_pool` entries.
    fn noise_range(&self) -> (u32, u32) {
        (self.vocab_size - self.noise_pool, self.vocab_size)
    }
}

fn check_rate(name: &'static str, value: f64) -> Result<(), WorldError> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(WorldError::RateOutOfRange { name, value })
    }
}

/// A distribution on the probability simplex: independent Exp(1)
/// weights, normalized (equivalently Dirichlet(1, ..., 1)).
fn random_row(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    debug_assert!(len > 0);
    let mut row: Vec<f64> = (0..len)
        .map(|_| -(1.0 - rng.gen::<f64>()).ln())
        .collect();
    let total: f64 = row.iter().sum();
    for v in &mut row {
        *v /= total;
    }
    row
}

fn row_sum_error(row: &[f64]) -> f64 {
    (row.iter().sum::<f64>() - 1.0).abs()
}

/// Hidden ground-truth kernel shared by every sample of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub id: FamilyId,
    /// Family-specific node subset of the vocabulary, distinct ids.
    pub nodes: Vec<ApiCallId>,
    /// One distribution over `nodes` per intent slot; a sample manifest
    /// picks a subset of these slots.
    pub trigger_rows: Vec<Vec<f64>>,
    /// Row-stochastic node-to-node matrix, indexed by position in
    /// `nodes`.
    pub transition_rows: Vec<Vec<f64>>,
    /// Per-node probability of the walk terminating at that node.
    pub terminal_prob: Vec<f64>,
    pub intents_min: u32,
    pub intents_max: u32,
}

impl FamilySpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        let n = self.nodes.len();
        if n < 2 {
            return Err(WorldError::InfeasibleConfig("family needs >= 2 nodes".into()));
        }
        if self.trigger_rows.len() != self.intents_max as usize {
            return Err(WorldError::InfeasibleConfig(
                "one trigger row per intent slot is required".into(),
            ));
        }
        for (i, row) in self.trigger_rows.iter().enumerate() {
            validate_row(row, n, &format!("family {} trigger {i}", self.id.0))?;
        }
        if self.transition_rows.len() != n || self.terminal_prob.len() != n {
            return Err(WorldError::InfeasibleConfig(
                "transition matrix and terminal vector must match the node count".into(),
            ));
        }
        for (i, row) in self.transition_rows.iter().enumerate() {
            validate_row(row, n, &format!("family {} node {i}", self.id.0))?;
        }
        Ok(())
    }
}

fn validate_row(row: &[f64], len: usize, context: &str) -> Result<(), WorldError> {
    if row.len() != len {
        return Err(WorldError::InfeasibleConfig(format!(
            "{context}: row length {} != {len}",
            row.len()
        )));
    }
    let err = row_sum_error(row);
    if err > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(WorldError::NonStochasticRow {
            context: context.to_string(),
            sum: row.iter().sum(),
        });
    }
    Ok(())
}

/// Generate one family kernel. Distinct seeds give distinct kernels.
pub fn generate_family(
    id: FamilyId,
    cfg: &WorldConfig,
    rng: &mut impl Rng,
) -> Result<FamilySpec, WorldError> {
    cfg.validate()?;
    let pool: Vec<u32> = (1..=cfg.family_pool).collect();
    let nodes: Vec<ApiCallId> = pool
        .choose_multiple(rng, cfg.nodes_per_family as usize)
        .map(|&v| ApiCallId(v))
        .collect();
    let n = nodes.len();
    let trigger_rows = (0..cfg.intents_max).map(|_| random_row(n, rng)).collect();
    let transition_rows = (0..n).map(|_| random_row(n, rng)).collect();
    let terminal_prob = (0..n)
        .map(|_| rng.gen_range(cfg.terminal_min..=cfg.terminal_max))
        .collect();
    let family = FamilySpec {
        id,
        nodes,
        trigger_rows,
        transition_rows,
        terminal_prob,
        intents_min: cfg.intents_min,
        intents_max: cfg.intents_max,
    };
    family.validate()?;
    Ok(family)
}

/// One synthetic malware sample: a perturbed copy of its family kernel
/// plus a manifest of intents. Immutable after instantiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MalwareSample {
    pub id: SampleId,
    pub family: FamilyId,
    pub nodes: Vec<ApiCallId>,
    pub trigger_rows: Vec<Vec<f64>>,
    pub transition_rows: Vec<Vec<f64>>,
    pub terminal_prob: Vec<f64>,
    /// Intent slots backing each action: action `i` triggers slot
    /// `manifest[i]` of `trigger_rows`. Fresh per sample; the same
    /// action index means nothing across samples.
    pub manifest: Vec<u32>,
    pub noise_rate: f64,
    /// Noise-call id range `[start, end)`.
    pub noise_range: (u32, u32),
    pub max_trace_len: u32,
}

/// Blend `row` toward a fresh random row with weight `jitter` and
/// renormalize. The L1 distance from the original is bounded by
/// `2 * jitter`.
fn jitter_row(row: &[f64], jitter: f64, rng: &mut impl Rng) -> Vec<f64> {
    if jitter == 0.0 {
        return row.to_vec();
    }
    let noise = random_row(row.len(), rng);
    let mut out: Vec<f64> = row
        .iter()
        .zip(&noise)
        .map(|(&p, &q)| (1.0 - jitter) * p + jitter * q)
        .collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Instantiate a sample from a family kernel: jitter every kernel row
/// and draw an intent manifest within the family's range.
pub fn instantiate_sample(
    family: &FamilySpec,
    id: SampleId,
    cfg: &WorldConfig,
    jitter: f64,
    noise_rate: f64,
    rng: &mut impl Rng,
) -> Result<MalwareSample, WorldError> {
    check_rate("jitter", jitter)?;
    check_rate("noise_rate", noise_rate)?;
    if noise_rate > 0.0 && cfg.noise_pool == 0 {
        return Err(WorldError::InfeasibleConfig(
            "noise_rate > 0 requires a nonempty noise_pool".to_string(),
        ));
    }
    let trigger_rows = family
        .trigger_rows
        .iter()
        .map(|r| jitter_row(r, jitter, rng))
        .collect();
    let transition_rows = family
        .transition_rows
        .iter()
        .map(|r| jitter_row(r, jitter, rng))
        .collect();
    let intent_count = rng.gen_range(family.intents_min..=family.intents_max) as usize;
    let slots: Vec<u32> = (0..family.intents_max).collect();
    let manifest: Vec<u32> = slots
        .choose_multiple(rng, intent_count)
        .copied()
        .collect();
    Ok(MalwareSample {
        id,
        family: family.id,
        nodes: family.nodes.clone(),
        trigger_rows,
        transition_rows,
        terminal_prob: family.terminal_prob.clone(),
        manifest,
        noise_rate,
        noise_range: cfg.noise_range(),
        max_trace_len: cfg.max_trace_len,
    })
}

impl MalwareSample {
    /// The sample's action space: one action per manifest intent. Fresh
    /// per sample; identical indices across samples are unrelated.
    pub fn action_space(&self) -> Vec<ActionId> {
        (0..self.manifest.len() as u32).map(ActionId).collect()
    }

    /// Restore the execution context. The synthetic world is
    /// memoryless, so this is a no-op kept for loop structure and the
    /// per-action cost model it represents.
    pub fn reset_environment(&self) {}

    /// Execute one trigger action and record the API-call response: a
    /// random walk on the hidden kernel from `Init` through the
    /// intent's successor distribution, until a terminal draw or the
    /// trace-length cap, with noise calls interleaved at `noise_rate`.
    pub fn execute_trigger(&self, action: ActionId, rng: &mut impl Rng) -> Result<Trace, WorldError> {
        let slot = *self
            .manifest
            .get(action.0 as usize)
            .ok_or(WorldError::UnknownAction(action))?;
        if slot as usize >= self.trigger_rows.len() {
            return Err(WorldError::CorruptSample(format!(
                "manifest slot {slot} has no trigger row"
            )));
        }
        let cap = self.max_trace_len as usize;
        let mut calls = vec![INIT];

        self.maybe_noise(&mut calls, cap, rng);
        if calls.len() >= cap {
            return Trace::new(calls, self.max_trace_len);
        }
        let mut current = sample_categorical(&self.trigger_rows[slot as usize], rng);
        calls.push(self.nodes[current]);

        loop {
            if rng.gen::<f64>() < self.terminal_prob[current] {
                break;
            }
            if calls.len() >= cap {
                break;
            }
            self.maybe_noise(&mut calls, cap, rng);
            if calls.len() >= cap {
                break;
            }
            current = sample_categorical(&self.transition_rows[current], rng);
            calls.push(self.nodes[current]);
        }
        Trace::new(calls, self.max_trace_len)
    }

    fn maybe_noise(&self, calls: &mut Vec<ApiCallId>, cap: usize, rng: &mut impl Rng) {
        if self.noise_rate > 0.0 && calls.len() < cap && rng.gen::<f64>() < self.noise_rate {
            let (lo, hi) = self.noise_range;
            calls.push(ApiCallId(rng.gen_range(lo..hi)));
        }
    }
}

/// Draw an index from a normalized weight row.
fn sample_categorical(row: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    row.len() - 1
}

/// An observed API-call sequence. Always starts at `Init` and never
/// exceeds the world's trace-length cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    calls: Vec<ApiCallId>,
}

impl Trace {
    pub fn new(calls: Vec<ApiCallId>, max_len: u32) -> Result<Self, WorldError> {
        if calls.is_empty() {
            return Err(WorldError::InvalidTrace("empty call sequence".into()));
        }
        if calls[0] != INIT {
            return Err(WorldError::InvalidTrace(format!(
                "first call is {:?}, expected Init",
                calls[0]
            )));
        }
        if calls.len() > max_len as usize {
            return Err(WorldError::InvalidTrace(format!(
                "length {} exceeds cap {max_len}",
                calls.len()
            )));
        }
        Ok(Self { calls })
    }

    pub fn calls(&self) -> &[ApiCallId] {
        &self.calls
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The last call of the trace; `Init` itself for length-1 traces.
    pub fn terminal(&self) -> ApiCallId {
        *self.calls.last().unwrap()
    }
}

/// Average L1 distance between two kernels, rows aligned on the full
/// vocabulary. Rows present in only one kernel contribute their whole
/// mass. Diagnostic used to check that families stay separable under
/// per-sample jitter.
pub fn kernel_distance(a: &KernelView, b: &KernelView) -> f64 {
    let keys: std::collections::BTreeSet<&RowKey> = a.rows.keys().chain(b.rows.keys()).collect();
    if keys.is_empty() {
        return 0.0;
    }
    let empty = BTreeMap::new();
    let mut total = 0.0;
    for key in &keys {
        let ra = a.rows.get(key).unwrap_or(&empty);
        let rb = b.rows.get(key).unwrap_or(&empty);
        let cols: std::collections::BTreeSet<&u32> = ra.keys().chain(rb.keys()).collect();
        let mut l1 = 0.0;
        for c in cols {
            l1 += (ra.get(c).unwrap_or(&0.0) - rb.get(c).unwrap_or(&0.0)).abs();
        }
        total += l1;
    }
    total / keys.len() as f64
}

/// Kernel rows re-keyed by role and spread over the vocabulary, the
/// common coordinate system for [`kernel_distance`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelView {
    rows: BTreeMap<RowKey, BTreeMap<u32, f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKey {
    Trigger(u32),
    Node(u32),
}

fn view_from_rows(
    nodes: &[ApiCallId],
    trigger_rows: &[Vec<f64>],
    transition_rows: &[Vec<f64>],
) -> KernelView {
    let mut rows = BTreeMap::new();
    let spread = |row: &[f64]| -> BTreeMap<u32, f64> {
        row.iter()
            .enumerate()
            .map(|(i, &p)| (nodes[i].0, p))
            .collect()
    };
    for (slot, row) in trigger_rows.iter().enumerate() {
        rows.insert(RowKey::Trigger(slot as u32), spread(row));
    }
    for (i, row) in transition_rows.iter().enumerate() {
        rows.insert(RowKey::Node(nodes[i].0), spread(row));
    }
    KernelView { rows }
}

impl FamilySpec {
    pub fn kernel_view(&self) -> KernelView {
        view_from_rows(&self.nodes, &self.trigger_rows, &self.transition_rows)
    }
}

impl MalwareSample {
    pub fn kernel_view(&self) -> KernelView {
        view_from_rows(&self.nodes, &self.trigger_rows, &self.transition_rows)
    }
}
