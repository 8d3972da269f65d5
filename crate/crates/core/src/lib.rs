//! amalab-core: a simulation laboratory for adaptive exploration in
//! active malware analysis.
//!
//! The crate couples four pieces: a tabular value learner ([`rl`]), a
//! family of exploration-rate controllers including a Bayesian
//! model-combination controller ([`exploration`]), a synthetic malware
//! world that stands in for an instrumented emulator ([`world`]), and a
//! call-graph builder with Dirichlet transition posteriors ([`graph`]).
//! The [`analyzer`] module runs the per-sample analysis loop over those
//! pieces, and [`eval`] measures the result with a linear classifier:
//! how few trigger actions does an agent need before the downstream
//! family-classification F1 stops improving?

pub mod analyzer;
pub mod eval;
pub mod exploration;
pub mod graph;
pub mod rl;
pub mod seeds;
pub mod world;
