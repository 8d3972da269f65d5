//! Tabular value-learning primitives: the Q-table, the bootstrapped
//! return targets used by the model-combination controller, the
//! temporal-difference update, and the epsilon-greedy action law.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Opaque identifier for an analyzer state. Stable within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub u32);

/// Index of one trigger action inside a sample's action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub u32);

#[derive(Debug, Error)]
pub enum RlError {
    #[error("action list is empty")]
    EmptyActionSpace,
    #[error("epsilon must lie in [0, 1], got {0}")]
    EpsilonOutOfRange(f64),
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
    #[error("learning rate must lie in (0, 1], got {0}")]
    InvalidLearningRate(f64),
    #[error("update target must be finite, got {0}")]
    NonFiniteTarget(f64),
    #[error("transition reward must be finite, got {0}")]
    NonFiniteReward(f64),
}

/// Discount factor and learning rate for temporal-difference updates.
///
/// The learning rate is fixed per run; no schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningConfig {
    /// Discount factor, in (0, 1).
    pub gamma: f64,
    /// Step size for TD updates, in (0, 1].
    pub eta: f64,
}

impl LearningConfig {
    pub fn new(gamma: f64, eta: f64) -> Result<Self, RlError> {
        let cfg = Self { gamma, eta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(RlError::InvalidGamma(self.gamma));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(RlError::InvalidLearningRate(self.eta));
        }
        Ok(())
    }
}

/// Per-(state, action) value estimates. Unseen pairs read as zero,
/// which is the true value of an exhausted action under the novelty
/// reward, so the default is neutral rather than optimistic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    values: HashMap<(StateId, ActionId), f64>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current estimate for `(state, action)`; 0 if never updated.
    pub fn get(&self, state: StateId, action: ActionId) -> f64 {
        *self.values.get(&(state, action)).unwrap_or(&0.0)
    }

    /// Number of entries that have been written at least once.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Move the stored value a step of size `eta` toward `target`:
    /// `Q <- Q + eta * (target - Q)`. No other entry changes.
    ///
    /// A non-finite target is rejected and the table left untouched.
    pub fn td_update(
        &mut self,
        state: StateId,
        action: ActionId,
        target: f64,
        eta: f64,
    ) -> Result<f64, RlError> {
        if !target.is_finite() {
            return Err(RlError::NonFiniteTarget(target));
        }
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(RlError::InvalidLearningRate(eta));
        }
        let entry = self.values.entry((state, action)).or_insert(0.0);
        *entry += eta * (target - *entry);
        Ok(*entry)
    }
}

/// One observed step: `(s, a, r, s')` plus the action space available
/// in `s'`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    pub next_action_space: Vec<ActionId>,
}

impl Transition {
    pub fn new(
        state: StateId,
        action: ActionId,
        reward: f64,
        next_state: StateId,
        next_action_space: Vec<ActionId>,
    ) -> Result<Self, RlError> {
        if next_action_space.is_empty() {
            return Err(RlError::EmptyActionSpace);
        }
        if !reward.is_finite() {
            return Err(RlError::NonFiniteReward(reward));
        }
        Ok(Self {
            state,
            action,
            reward,
            next_state,
            next_action_space,
        })
    }
}

/// Maximum Q-value over `actions` in `state`. Assumes `actions` nonempty.
fn max_q(q: &QTable, state: StateId, actions: &[ActionId]) -> f64 {
    debug_assert!(!actions.is_empty());
    actions
        .iter()
        .map(|&a| q.get(state, a))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Mean Q-value over `actions` in `state`. Returns the common value
/// exactly when all entries are equal, so the uniform target coincides
/// bit-for-bit with the greedy target on constant rows.
fn mean_q(q: &QTable, state: StateId, actions: &[ActionId]) -> f64 {
    debug_assert!(!actions.is_empty());
    let first = q.get(state, actions[0]);
    let mut sum = 0.0;
    let mut all_equal = true;
    for &a in actions {
        let v = q.get(state, a);
        all_equal &= v == first;
        sum += v;
    }
    if all_equal {
        first
    } else {
        sum / actions.len() as f64
    }
}

/// An action attaining `max Q(state, .)`, ties broken uniformly at
/// random through `tie_rng`.
pub fn greedy_action(
    q: &QTable,
    state: StateId,
    actions: &[ActionId],
    tie_rng: &mut impl Rng,
) -> Result<ActionId, RlError> {
    if actions.is_empty() {
        return Err(RlError::EmptyActionSpace);
    }
    let best = max_q(q, state, actions);
    let ties: Vec<ActionId> = actions
        .iter()
        .copied()
        .filter(|&a| q.get(state, a) == best)
        .collect();
    Ok(ties[tie_rng.gen_range(0..ties.len())])
}

/// The epsilon-greedy action distribution over `actions`: the greedy
/// action receives `1 - eps + eps/|A|` and every other action
/// `eps/|A|`. When several actions tie for the maximum, the greedy mass
/// `1 - eps` is shared equally across the tie set.
///
/// Returned probabilities are aligned with the input order; `actions`
/// is expected to hold distinct ids.
pub fn epsilon_greedy_probabilities(
    q: &QTable,
    state: StateId,
    actions: &[ActionId],
    epsilon: f64,
) -> Result<Vec<f64>, RlError> {
    if actions.is_empty() {
        return Err(RlError::EmptyActionSpace);
    }
    if !(0.0..=1.0).contains(&epsilon) || epsilon.is_nan() {
        return Err(RlError::EpsilonOutOfRange(epsilon));
    }
    let best = max_q(q, state, actions);
    let ties = actions.iter().filter(|&&a| q.get(state, a) == best).count();
    let explore = epsilon / actions.len() as f64;
    let greedy_share = (1.0 - epsilon) / ties as f64;
    Ok(actions
        .iter()
        .map(|&a| {
            if q.get(state, a) == best {
                explore + greedy_share
            } else {
                explore
            }
        })
        .collect())
}

/// One draw from [`epsilon_greedy_probabilities`]. Consumes exactly one
/// uniform variate from `rng`, so sequences are reproducible per seed.
pub fn epsilon_greedy_sample(
    q: &QTable,
    state: StateId,
    actions: &[ActionId],
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<ActionId, RlError> {
    let probs = epsilon_greedy_probabilities(q, state, actions, epsilon)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(actions[i]);
        }
    }
    // Cumulative sum fell short of 1 by rounding; the draw belongs to
    // the last bucket.
    Ok(*actions.last().unwrap())
}

/// Q-learning target: `r + gamma * max_a' Q(s', a')`.
pub fn q_learning_target(q: &QTable, t: &Transition, gamma: f64) -> f64 {
    t.reward + gamma * max_q(q, t.next_state, &t.next_action_space)
}

/// Uniform-policy target: `r + gamma * mean_a' Q(s', a')`.
pub fn uniform_target(q: &QTable, t: &Transition, gamma: f64) -> f64 {
    t.reward + gamma * mean_q(q, t.next_state, &t.next_action_space)
}

/// Expected-SARSA target under the epsilon-greedy policy:
/// `r + gamma * sum_a' pi(a'|s') Q(s', a')`.
///
/// With tie-sharing the policy expectation collapses to
/// `(1 - eps) * max + eps * mean`, which makes the eps = 0 and eps = 1
/// endpoints equal to the greedy and uniform targets exactly, not just
/// within rounding.
pub fn expected_sarsa_target(
    q: &QTable,
    t: &Transition,
    gamma: f64,
    epsilon: f64,
) -> Result<f64, RlError> {
    if !(0.0..=1.0).contains(&epsilon) || epsilon.is_nan() {
        return Err(RlError::EpsilonOutOfRange(epsilon));
    }
    let max = max_q(q, t.next_state, &t.next_action_space);
    let mean = mean_q(q, t.next_state, &t.next_action_space);
    let expected = if max == mean {
        max
    } else {
        (1.0 - epsilon) * max + epsilon * mean
    };
    Ok(t.reward + gamma * expected)
}
