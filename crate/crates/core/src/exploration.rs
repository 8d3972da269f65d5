//! Exploration-rate controllers.
//!
//! Three interchangeable policies for setting epsilon in the analysis
//! loop: a fixed rate, a geometric annealing schedule, and a Bayesian
//! model-combination controller. The latter keeps a Beta(alpha, beta)
//! posterior over the weight `w` of a "uniform return" model versus a
//! "greedy return" model and exposes `epsilon = E[w] = alpha / (alpha +
//! beta)`. After each step it scores the greedy and uniform bootstrapped
//! targets under a Normal-Gamma posterior predictive (a location-scale
//! Student-t) fitted online to the realized expected-SARSA targets, and
//! folds that evidence into the Beta weight by moment matching.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplorationError {
    #[error("normal-gamma prior requires tau0 > 0, a0 > 1, b0 > 0 and finite values, got mu0={mu0}, tau0={tau0}, a0={a0}, b0={b0}")]
    InvalidNormalGamma { mu0: f64, tau0: f64, a0: f64, b0: f64 },
    #[error("beta weight parameters must be strictly positive and finite, got alpha={alpha}, beta={beta}")]
    InvalidBetaWeight { alpha: f64, beta: f64 },
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("annealing decay must lie in (0, 1], got {0}")]
    InvalidDecay(f64),
    #[error("annealing floor must lie in [0, initial], got floor={min} initial={initial}")]
    InvalidFloor { min: f64, initial: f64 },
}

/// Normal-Gamma prior over the mean and precision of the return stream.
///
/// `a0 > 1` keeps the posterior predictive variance finite from the
/// first step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalGammaParams {
    pub mu0: f64,
    pub tau0: f64,
    pub a0: f64,
    pub b0: f64,
}

impl NormalGammaParams {
    pub fn new(mu0: f64, tau0: f64, a0: f64, b0: f64) -> Result<Self, ExplorationError> {
        let p = Self { mu0, tau0, a0, b0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ExplorationError> {
        let ok = self.mu0.is_finite()
            && self.tau0.is_finite()
            && self.a0.is_finite()
            && self.b0.is_finite()
            && self.tau0 > 0.0
            && self.a0 > 1.0
            && self.b0 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(ExplorationError::InvalidNormalGamma {
                mu0: self.mu0,
                tau0: self.tau0,
                a0: self.a0,
                b0: self.b0,
            })
        }
    }

    /// Conjugate posterior given the observed summary statistics.
    pub fn posterior(&self, stats: &ReturnStats) -> NormalGammaPosterior {
        let t = stats.count() as f64;
        let mean = stats.mean();
        let var = stats.population_variance();
        let tau = self.tau0 + t;
        let mu = (self.tau0 * self.mu0 + t * mean) / tau;
        let shape = self.a0 + 0.5 * t;
        let rate =
            self.b0 + 0.5 * (t * var + self.tau0 * t * (mean - self.mu0).powi(2) / tau);
        NormalGammaPosterior { mu, tau, shape, rate }
    }
}

impl Default for NormalGammaParams {
    /// Weakly informative: zero prior mean, unit pseudo-count, finite
    /// predictive variance from the start.
    fn default() -> Self {
        Self { mu0: 0.0, tau0: 1.0, a0: 2.0, b0: 1.0 }
    }
}

/// Normal-Gamma posterior `(mu_t, tau_t, a_t, b_t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGammaPosterior {
    pub mu: f64,
    pub tau: f64,
    pub shape: f64,
    pub rate: f64,
}

impl NormalGammaPosterior {
    /// Posterior predictive density for the next observation: a
    /// location-scale Student-t with `2 a_t` degrees of freedom,
    /// location `mu_t` and squared scale `b_t (tau_t + 1) / (a_t tau_t)`.
    pub fn predictive(&self) -> StudentTDensity {
        StudentTDensity {
            degrees_of_freedom: 2.0 * self.shape,
            location: self.mu,
            scale: (self.rate * (self.tau + 1.0) / (self.shape * self.tau)).sqrt(),
        }
    }
}

/// Location-scale Student-t density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentTDensity {
    pub degrees_of_freedom: f64,
    pub location: f64,
    pub scale: f64,
}

impl StudentTDensity {
    /// Natural-log density at `x`.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        StudentsT::new(self.location, self.scale, self.degrees_of_freedom)
            .expect("valid student-t parameters")
            .ln_pdf(x)
    }
}

/// Online count, mean and population variance of the observed return
/// targets (Welford's recurrence).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReturnStats {
    count: u64,
    mean: f64,
    sum_sq_diff: f64,
}

impl ReturnStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        let delta = value - self.mean;
        self.mean += delta / self.count as f64;
        self.sum_sq_diff += delta * (value - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population variance (divide by `t`); zero until two observations
    /// have arrived.
    pub fn population_variance(&self) -> f64 {
        if self.count <= 1 {
            0.0
        } else {
            (self.sum_sq_diff / self.count as f64).max(0.0)
        }
    }
}

/// Beta posterior over the weight of the uniform-return model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaWeight {
    alpha: f64,
    beta: f64,
}

impl BetaWeight {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, ExplorationError> {
        if alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0 {
            Ok(Self { alpha, beta })
        } else {
            Err(ExplorationError::InvalidBetaWeight { alpha, beta })
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// First two moments of the exact weight posterior after one evidence
/// update: the mixture `lam_u Beta(alpha+1, beta) + lam_q Beta(alpha,
/// beta+1)` with `lam_u : lam_q = alpha e_u : beta e_q`.
///
/// Only the ratio of the evidences matters, so callers may pass both on
/// any common scale.
pub fn weight_mixture_moments(prior: &BetaWeight, e_q: f64, e_u: f64) -> (f64, f64) {
    let (alpha, beta) = (prior.alpha, prior.beta);
    let wu = alpha * e_u;
    let wq = beta * e_q;
    let total = wu + wq;
    let lam_u = wu / total;
    let lam_q = wq / total;
    let s1 = alpha + beta + 1.0;
    let s2 = alpha + beta + 2.0;
    let m1 = (lam_u * (alpha + 1.0) + lam_q * alpha) / s1;
    let m2 = (lam_u * (alpha + 1.0) * (alpha + 2.0) + lam_q * alpha * (alpha + 1.0)) / (s1 * s2);
    (m1, m2)
}

/// Project `(m1, m2)` back onto a single Beta by matching moments.
/// Returns `None` when the implied variance is not usably positive.
pub fn match_beta_moments(m1: f64, m2: f64) -> Option<BetaWeight> {
    let var = m2 - m1 * m1;
    if !(var > 1e-15) {
        return None;
    }
    let scale = (m1 - m2) / var;
    let alpha = m1 * scale;
    let beta = (1.0 - m1) * scale;
    BetaWeight::new(alpha, beta).ok()
}

/// Bayesian model-combination epsilon controller.
#[derive(Debug, Clone, PartialEq)]
pub struct BmcController {
    prior: NormalGammaParams,
    weight_prior: BetaWeight,
    stats: ReturnStats,
    weight: BetaWeight,
    skipped_updates: u64,
}

impl BmcController {
    pub fn new(prior: NormalGammaParams, weight_prior: BetaWeight) -> Self {
        Self {
            prior,
            weight_prior,
            stats: ReturnStats::new(),
            weight: weight_prior,
            skipped_updates: 0,
        }
    }

    /// `E[w] = alpha / (alpha + beta)`.
    pub fn epsilon(&self) -> f64 {
        self.weight.mean()
    }

    pub fn weight(&self) -> &BetaWeight {
        &self.weight
    }

    pub fn stats(&self) -> &ReturnStats {
        &self.stats
    }

    /// Normal-Gamma posterior implied by the current return statistics.
    pub fn posterior(&self) -> NormalGammaPosterior {
        self.prior.posterior(&self.stats)
    }

    /// Number of evidence updates that were skipped because the
    /// evidence or the mixture variance degenerated numerically.
    pub fn skipped_updates(&self) -> u64 {
        self.skipped_updates
    }

    /// Fold one step's targets into the controller: the realized
    /// expected-SARSA target updates the return statistics, then the
    /// greedy and uniform targets are scored under the refreshed
    /// posterior predictive and the Beta weight is re-fit by moment
    /// matching. Degenerate evidence leaves the weight untouched and
    /// bumps the skip counter.
    pub fn observe(&mut self, greedy_target: f64, uniform_target: f64, realized_target: f64) {
        if !(greedy_target.is_finite() && uniform_target.is_finite() && realized_target.is_finite())
        {
            self.skipped_updates += 1;
            return;
        }
        self.stats.push(realized_target);
        let predictive = self.posterior().predictive();
        let ln_e_q = predictive.ln_pdf(greedy_target);
        let ln_e_u = predictive.ln_pdf(uniform_target);
        // Shift to a common scale before exponentiating; only the
        // ratio reaches the Beta update.
        let shift = ln_e_q.max(ln_e_u);
        if !shift.is_finite() {
            self.skipped_updates += 1;
            return;
        }
        let e_q = (ln_e_q - shift).exp();
        let e_u = (ln_e_u - shift).exp();
        if e_q + e_u == 0.0 || !(e_q + e_u).is_finite() {
            self.skipped_updates += 1;
            return;
        }
        let (m1, m2) = weight_mixture_moments(&self.weight, e_q, e_u);
        match match_beta_moments(m1, m2) {
            Some(weight) => self.weight = weight,
            None => self.skipped_updates += 1,
        }
    }

    /// Restore the controller to its construction state.
    pub fn reset(&mut self) {
        self.stats = ReturnStats::new();
        self.weight = self.weight_prior;
        self.skipped_updates = 0;
    }
}

/// The uniform controller interface used by the analysis loop.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonController {
    Constant {
        epsilon: f64,
    },
    Annealed {
        initial: f64,
        decay: f64,
        min: f64,
        steps: u64,
    },
    Bmc(BmcController),
}

impl EpsilonController {
    /// Current exploration rate, always in [0, 1].
    pub fn epsilon(&self) -> f64 {
        match self {
            Self::Constant { epsilon } => *epsilon,
            Self::Annealed { initial, decay, min, steps } => {
                (initial * decay.powf(*steps as f64)).max(*min)
            }
            Self::Bmc(c) => c.epsilon(),
        }
    }

    /// Advance the controller with one step's bootstrapped targets.
    /// Constant controllers ignore the observation; annealed ones decay
    /// a step; the model-combination controller performs its evidence
    /// update.
    pub fn observe(&mut self, greedy_target: f64, uniform_target: f64, realized_target: f64) {
        match self {
            Self::Constant { .. } => {}
            Self::Annealed { steps, .. } => *steps += 1,
            Self::Bmc(c) => c.observe(greedy_target, uniform_target, realized_target),
        }
    }

    /// Return to the construction-time state.
    pub fn reset(&mut self) {
        match self {
            Self::Constant { .. } => {}
            Self::Annealed { steps, .. } => *steps = 0,
            Self::Bmc(c) => c.reset(),
        }
    }
}

fn default_mu0() -> f64 {
    0.0
}
fn default_tau0() -> f64 {
    1.0
}
fn default_a0() -> f64 {
    2.0
}
fn default_b0() -> f64 {
    1.0
}
fn default_weight() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    0.0
}

/// Serializable controller description, as written in experiment
/// configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerSpec {
    Constant {
        epsilon: f64,
    },
    Annealed {
        initial: f64,
        decay: f64,
        #[serde(default = "default_floor")]
        min: f64,
    },
    EpsilonBmc {
        #[serde(default = "default_mu0")]
        mu0: f64,
        #[serde(default = "default_tau0")]
        tau0: f64,
        #[serde(default = "default_a0")]
        a0: f64,
        #[serde(default = "default_b0")]
        b0: f64,
        #[serde(default = "default_weight")]
        alpha0: f64,
        #[serde(default = "default_weight")]
        beta0: f64,
    },
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self::EpsilonBmc {
            mu0: default_mu0(),
            tau0: default_tau0(),
            a0: default_a0(),
            b0: default_b0(),
            alpha0: default_weight(),
            beta0: default_weight(),
        }
    }
}

impl ControllerSpec {
    pub fn validate(&self) -> Result<(), ExplorationError> {
        match *self {
            Self::Constant { epsilon } => {
                if !(0.0..=1.0).contains(&epsilon) || epsilon.is_nan() {
                    return Err(ExplorationError::InvalidEpsilon(epsilon));
                }
            }
            Self::Annealed { initial, decay, min } => {
                if !(0.0..=1.0).contains(&initial) || initial.is_nan() {
                    return Err(ExplorationError::InvalidEpsilon(initial));
                }
                if !(decay > 0.0 && decay <= 1.0) {
                    return Err(ExplorationError::InvalidDecay(decay));
                }
                if !(0.0..=initial).contains(&min) || min.is_nan() {
                    return Err(ExplorationError::InvalidFloor { min, initial });
                }
            }
            Self::EpsilonBmc { mu0, tau0, a0, b0, alpha0, beta0 } => {
                NormalGammaParams::new(mu0, tau0, a0, b0)?;
                BetaWeight::new(alpha0, beta0)?;
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<EpsilonController, ExplorationError> {
        self.validate()?;
        Ok(match *self {
            Self::Constant { epsilon } => EpsilonController::Constant { epsilon },
            Self::Annealed { initial, decay, min } => EpsilonController::Annealed {
                initial,
                decay,
                min,
                steps: 0,
            },
            Self::EpsilonBmc { mu0, tau0, a0, b0, alpha0, beta0 } => {
                EpsilonController::Bmc(BmcController::new(
                    NormalGammaParams::new(mu0, tau0, a0, b0)?,
                    BetaWeight::new(alpha0, beta0)?,
                ))
            }
        })
    }
}
