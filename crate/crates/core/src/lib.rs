//! Core of the `tpsqli` SQL-injection tester.
//!
//! Techniques are ordered by a per-target strength/weakness vector learned
//! from how quickly each technique exploited the target in earlier rounds.
//! During a round the working score of a technique drops by one for every
//! payload of that technique that fails, so the scan drifts toward the
//! families that actually work.
//!
//! The numeric pieces ([`weights`], [`metrics`]) are generic over the scalar
//! type; the aliases below pin the concrete types used by the rest of the
//! workspace.

pub mod catalog;
pub mod executor;
pub mod metrics;
pub mod report;
pub mod scalar;
pub mod store;
pub mod weights;

use num_bigint::BigInt;
use num_rational::Ratio;

pub use catalog::{DetectionHint, Payload, PayloadCorpus, Risk, Technique};
pub use executor::{Injector, RoundResult, TargetProfile, TraceEntry, TrialOutcome, TrialRecord};
pub use scalar::Scalar;

/// Exact rational scalar.
pub type Exact = Ratio<BigInt>;

/// Strength/weakness vector in double precision, as stored in profiles.
pub type WeightVector = weights::Weights<f64>;
/// Strength/weakness vector over exact rationals.
pub type ExactWeightVector = weights::Weights<Exact>;
/// Per-technique outcome with seconds as `f64`.
pub type TechniqueOutcome = weights::TechniqueOutcome<f64>;
/// Timing summary in seconds.
pub type EvaluationSummary = metrics::EvaluationSummary<f64>;
