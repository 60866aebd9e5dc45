//! Prioritized payload execution.
//!
//! A round first re-tests every payload that exploited the target before
//! (risk 3), best technique first, demoting the ones that no longer work.
//! It then repeatedly picks the technique with the highest working score
//! that still has unused payloads. A failed payload costs its technique one
//! point, so a technique keeps the floor only while it keeps succeeding.
//! When every payload has run, the strength/weakness vector is recomputed
//! from the time each technique needed to first exploit the target.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::catalog::{Payload, Risk, Technique};
use crate::weights::{weights_for, PerTechnique, TechniqueOutcome, Weights};
use crate::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOutcome {
    Exploited,
    NotExploited,
    TransportError,
}

impl TrialOutcome {
    pub fn is_exploited(self) -> bool {
        self == TrialOutcome::Exploited
    }
}

impl fmt::Display for TrialOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrialOutcome::Exploited => "exploited",
            TrialOutcome::NotExploited => "not_exploited",
            TrialOutcome::TransportError => "transport_error",
        })
    }
}

/// One payload execution. Timestamps are offsets on the injector's
/// monotonic clock.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub payload_id: String,
    pub technique: Technique,
    pub start: Duration,
    pub end: Duration,
    pub outcome: TrialOutcome,
    pub evidence: String,
}

impl TrialRecord {
    pub fn duration(&self) -> Duration {
        self.end.saturating_sub(self.start)
    }
}

/// Executes single payloads against one injection point.
pub trait Injector {
    fn execute(&mut self, payload: &Payload) -> TrialRecord;

    /// Drops per-round state such as cookies.
    fn reset(&mut self) {}
}

impl<F> Injector for F
where
    F: FnMut(&Payload) -> TrialRecord,
{
    fn execute(&mut self, payload: &Payload) -> TrialRecord {
        self(payload)
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Learned state for one injection point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetProfile {
    pub target_id: String,
    pub sw_vector: WeightVector,
    /// Working scores at the end of the last round; may be negative.
    pub basic_scores: Weights<f64>,
    /// Seconds spent until each technique first exploited the target.
    pub exploit_time: Weights<f64>,
    pub is_exploit: PerTechnique<bool>,
    pub payload_risks: BTreeMap<String, Risk>,
    /// Set when every trial of the last round hit a transport error.
    #[serde(default, skip_serializing_if = "is_false")]
    pub degraded: bool,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl TargetProfile {
    pub fn new(target_id: impl Into<String>) -> Self {
        TargetProfile {
            target_id: target_id.into(),
            sw_vector: Weights::zeros(),
            basic_scores: Weights::zeros(),
            exploit_time: Weights::zeros(),
            is_exploit: PerTechnique::from_fn(|_| false),
            payload_risks: BTreeMap::new(),
            degraded: false,
            extra: serde_json::Map::new(),
        }
    }

    /// Stored risk of a payload, falling back to the corpus default.
    pub fn risk_of(&self, payload: &Payload) -> Risk {
        self.payload_risks.get(&payload.id).copied().unwrap_or(payload.risk)
    }
}

/// Starting working scores: the stored vector, or 1.0 everywhere on a cold
/// start (ties then fall back to `BEUSTQ`).
pub fn initial_scores(profile: Option<&TargetProfile>) -> Weights<f64> {
    match profile {
        Some(p) => p.sw_vector.clone(),
        None => Weights::from_fn(|_| 1.0),
    }
}

/// Lowers a technique's working score by one point.
pub fn defense_update(mut profile: TargetProfile, technique: Technique) -> TargetProfile {
    *profile.basic_scores.get_mut(technique) -= 1.0;
    profile
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Retest,
    Main,
    Fixed,
}

/// One line of the order-trace log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub seq: usize,
    pub phase: Phase,
    pub technique: Technique,
    pub payload_id: String,
    pub risk_before: Risk,
    pub risk_after: Risk,
    pub score_before: f64,
    pub duration: Duration,
    pub outcome: TrialOutcome,
}

impl TraceEntry {
    pub const HEADER: &'static str = "seq,technique,payload,risk_before,risk_after,score_before,duration_ms,outcome";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3},{}",
            self.seq,
            self.technique,
            self.payload_id,
            self.risk_before,
            self.risk_after,
            self.score_before,
            self.duration.as_secs_f64() * 1000.0,
            self.outcome
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub point: String,
    pub payload_id: String,
    pub technique: Technique,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub trials: Vec<TrialRecord>,
    pub trace: Vec<TraceEntry>,
    pub updated_profile: TargetProfile,
    /// Techniques in the order they were first executed.
    pub order_trace: Vec<Technique>,
    pub vulnerabilities: Vec<Finding>,
    pub warnings: Vec<String>,
}

impl RoundResult {
    pub fn order_letters(&self) -> String {
        self.order_trace.iter().map(|t| t.letter()).collect()
    }

    /// 1-based index of the first exploited trial.
    pub fn first_exploit_index(&self) -> Option<usize> {
        self.trials.iter().position(|t| t.outcome.is_exploited()).map(|i| i + 1)
    }
}

struct RoundState<'a> {
    payloads: &'a [Payload],
    profile: TargetProfile,
    risks: Vec<Risk>,
    used: Vec<bool>,
    spent: PerTechnique<Duration>,
    trials: Vec<TrialRecord>,
    trace: Vec<TraceEntry>,
    order_trace: Vec<Technique>,
}

impl<'a> RoundState<'a> {
    fn new(target_id: &str, payloads: &'a [Payload], prior: Option<&TargetProfile>) -> Self {
        let risks = payloads
            .iter()
            .map(|p| prior.map_or(p.risk, |pr| pr.risk_of(p)))
            .collect();
        let mut profile = match prior {
            Some(p) => p.clone(),
            None => TargetProfile::new(target_id),
        };
        profile.target_id = target_id.to_string();
        profile.basic_scores = initial_scores(prior);
        profile.exploit_time = Weights::zeros();
        profile.is_exploit = PerTechnique::from_fn(|_| false);
        profile.degraded = false;
        RoundState {
            payloads,
            profile,
            risks,
            used: vec![false; payloads.len()],
            spent: PerTechnique::from_fn(|_| Duration::ZERO),
            trials: Vec::with_capacity(payloads.len()),
            trace: Vec::with_capacity(payloads.len()),
            order_trace: Vec::new(),
        }
    }

    fn score(&self, t: Technique) -> f64 {
        *self.profile.basic_scores.get(t)
    }

    /// Unused risk-3 payload of the best-scoring technique.
    fn next_retest(&self) -> Option<usize> {
        self.best(|i| self.risks[i] == Risk::HIGH)
    }

    fn next_main(&self) -> Option<usize> {
        self.best(|_| true)
    }

    /// Highest working score wins; ties go to the earlier technique in
    /// `BEUSTQ` order, then to corpus order.
    fn best(&self, eligible: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for t in Technique::ALL {
            let first =
                (0..self.payloads.len()).find(|&i| !self.used[i] && self.payloads[i].technique == t && eligible(i));
            if let Some(i) = first {
                let s = self.score(t);
                if best.is_none_or(|(bs, _)| s > bs) {
                    best = Some((s, i));
                }
            }
        }
        best.map(|(_, i)| i)
    }

    fn execute(&mut self, i: usize, phase: Phase, injector: &mut dyn Injector) {
        let payload = &self.payloads[i];
        let t = payload.technique;
        let score_before = self.score(t);
        let risk_before = self.risks[i];
        let trial = injector.execute(payload);
        self.used[i] = true;
        if !self.order_trace.contains(&t) {
            self.order_trace.push(t);
        }

        let elapsed = trial.duration();
        let exploited = trial.outcome.is_exploited();
        if exploited {
            self.risks[i] = Risk::HIGH;
            if !*self.profile.is_exploit.get(t) {
                *self.spent.get_mut(t) += elapsed;
                self.profile.is_exploit.set(t, true);
            }
        } else if phase == Phase::Retest {
            self.risks[i] = Risk::LOW;
        } else {
            if !*self.profile.is_exploit.get(t) {
                *self.spent.get_mut(t) += elapsed;
            }
            if phase == Phase::Main {
                let profile = std::mem::replace(&mut self.profile, TargetProfile::new(""));
                self.profile = defense_update(profile, t);
            }
        }

        self.trace.push(TraceEntry {
            seq: self.trials.len() + 1,
            phase,
            technique: t,
            payload_id: payload.id.clone(),
            risk_before,
            risk_after: self.risks[i],
            score_before,
            duration: elapsed,
            outcome: trial.outcome,
        });
        self.trials.push(trial);
    }

    fn finish(mut self, point: &str) -> RoundResult {
        let mut warnings = Vec::new();
        for t in Technique::ALL {
            // A success is never recorded as taking zero time.
            let mut secs = self.spent.get(t).as_secs_f64();
            if *self.profile.is_exploit.get(t) && secs <= 0.0 {
                secs = 1e-9;
            }
            self.profile.exploit_time.set(t, secs);
        }
        let outcomes: Vec<TechniqueOutcome<f64>> = Technique::ALL
            .into_iter()
            .map(|t| TechniqueOutcome::new(t, *self.profile.is_exploit.get(t), *self.profile.exploit_time.get(t)))
            .collect();
        self.profile.sw_vector = weights_for(&outcomes).expect("one outcome per technique, positive success times");

        let all_transport =
            !self.trials.is_empty() && self.trials.iter().all(|t| t.outcome == TrialOutcome::TransportError);
        if all_transport {
            self.profile.degraded = true;
            warnings.push(format!("{point}: every trial failed with a transport error"));
        }

        for (p, r) in self.payloads.iter().zip(&self.risks) {
            self.profile.payload_risks.insert(p.id.clone(), *r);
        }

        let vulnerabilities = self
            .trials
            .iter()
            .filter(|t| t.outcome.is_exploited())
            .map(|t| Finding {
                point: point.to_string(),
                payload_id: t.payload_id.clone(),
                technique: t.technique,
                evidence: t.evidence.clone(),
            })
            .collect();

        RoundResult {
            trials: self.trials,
            trace: self.trace,
            updated_profile: self.profile,
            order_trace: self.order_trace,
            vulnerabilities,
            warnings,
        }
    }
}

/// Runs one prioritized round of every payload against one injection point.
///
/// `target_id` names the injection point; `profile` is what earlier rounds
/// learned about it, if anything.
pub fn run_round(
    target_id: &str,
    payloads: &[Payload],
    profile: Option<&TargetProfile>,
    injector: &mut dyn Injector,
) -> RoundResult {
    let mut state = RoundState::new(target_id, payloads, profile);
    while let Some(i) = state.next_retest() {
        state.execute(i, Phase::Retest, injector);
    }
    while let Some(i) = state.next_main() {
        state.execute(i, Phase::Main, injector);
    }
    state.finish(target_id)
}

/// Baseline: every payload of each technique in the given order, no
/// feedback. Exploit times and risks are still recorded.
pub fn run_fixed_order(
    target_id: &str,
    order: &[Technique],
    payloads: &[Payload],
    injector: &mut dyn Injector,
) -> RoundResult {
    let mut state = RoundState::new(target_id, payloads, None);
    for &t in order {
        for i in 0..payloads.len() {
            if payloads[i].technique == t && !state.used[i] {
                state.execute(i, Phase::Fixed, injector);
            }
        }
    }
    state.finish(target_id)
}
