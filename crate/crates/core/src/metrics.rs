//! Measurement procedures: per-technique timing collection, the two-sample
//! Z statistic, the false-positive measure and its improvement rate, and
//! coverage curves.

use std::fmt;
use std::io::Write;
use std::time::Duration;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Payload, Technique};
use crate::executor::{Injector, TrialOutcome, TrialRecord};
use crate::weights::TechniqueOutcome;

/// One-sided critical value at 95% confidence.
pub const Z_CRITICAL_95: f64 = 1.645;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least {needed} runs, got {got}")]
    TooFewRuns { needed: usize, got: usize },
    #[error("both standard deviations are zero; Z is undefined")]
    ZeroVariance,
    #[error("summaries are for different targets ({0} vs {1})")]
    TargetMismatch(String, String),
    #[error("{false_positives} false positives out of {executed} executed payloads")]
    FalsePositivesExceedExecuted { executed: u64, false_positives: u64 },
    #[error("no payloads executed")]
    NothingExecuted,
    #[error("baseline FPM must be positive and finite")]
    BadBaseline,
    #[error("round {0}: every trial failed with a transport error")]
    Unreachable(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Baseline,
    Prioritized,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Baseline => "baseline",
            Method::Prioritized => "prioritized",
        })
    }
}

/// Spread of "time to expose the last vulnerability" over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary<T> {
    pub target_id: String,
    pub method: Method,
    pub t_max: T,
    pub t_min: T,
    pub t_mean: T,
    /// Sample standard deviation (n - 1 denominator).
    pub t_std: T,
    pub runs: usize,
}

impl<T: Float> EvaluationSummary<T> {
    pub fn from_times(target_id: impl Into<String>, method: Method, times: &[T]) -> Result<Self, MetricsError> {
        if times.len() < 2 {
            return Err(MetricsError::TooFewRuns {
                needed: 2,
                got: times.len(),
            });
        }
        let n = T::from(times.len()).unwrap();
        let mean = times.iter().fold(T::zero(), |a, &x| a + x) / n;
        let ss = times.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
        let std = (ss / (n - T::one())).sqrt();
        let t_max = times.iter().fold(T::neg_infinity(), |a, &x| a.max(x));
        let t_min = times.iter().fold(T::infinity(), |a, &x| a.min(x));
        Ok(EvaluationSummary {
            target_id: target_id.into(),
            method,
            t_max,
            // Rounding can push the mean a hair outside [min, max].
            t_min,
            t_mean: mean.max(t_min).min(t_max),
            t_std: std,
            runs: times.len(),
        })
    }
}

/// `(mean_a - mean_b) / sqrt(std_a² + std_b²)`.
pub fn z_statistic<T: Float>(mean_a: T, std_a: T, mean_b: T, std_b: T) -> Result<T, MetricsError> {
    let denom = (std_a * std_a + std_b * std_b).sqrt();
    if denom == T::zero() {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((mean_a - mean_b) / denom)
}

/// Z statistic of `a` against `b`; compare its magnitude with
/// [`Z_CRITICAL_95`].
pub fn z_score<T: Float>(a: &EvaluationSummary<T>, b: &EvaluationSummary<T>) -> Result<T, MetricsError> {
    if a.target_id != b.target_id {
        return Err(MetricsError::TargetMismatch(a.target_id.clone(), b.target_id.clone()));
    }
    z_statistic(a.t_mean, a.t_std, b.t_mean, b.t_std)
}

/// False-positive measure: executed payloads per false positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fpm<T> {
    Finite(T),
    /// No false positives at all; the ratio is unbounded.
    NoFalsePositives,
}

impl<T: Float> Fpm<T> {
    pub fn value(self) -> T {
        match self {
            Fpm::Finite(v) => v,
            Fpm::NoFalsePositives => T::infinity(),
        }
    }
}

impl<T: fmt::Display> fmt::Display for Fpm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fpm::Finite(v) => write!(f, "{v}"),
            Fpm::NoFalsePositives => f.write_str("inf"),
        }
    }
}

pub fn fpm<T: Float>(executed: u64, false_positives: u64) -> Result<Fpm<T>, MetricsError> {
    if executed == 0 {
        return Err(MetricsError::NothingExecuted);
    }
    if false_positives > executed {
        return Err(MetricsError::FalsePositivesExceedExecuted {
            executed,
            false_positives,
        });
    }
    if false_positives == 0 {
        return Ok(Fpm::NoFalsePositives);
    }
    Ok(Fpm::Finite(
        T::from(executed).unwrap() / T::from(false_positives).unwrap(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImprovedRate<T> {
    /// Percentage points.
    Percent(T),
    Unbounded,
}

impl<T: fmt::Display> fmt::Display for ImprovedRate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImprovedRate::Percent(v) => write!(f, "{v}"),
            ImprovedRate::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// Relative FPM improvement of `new` over `base`, in percent.
pub fn improved_rate<T: Float>(new: Fpm<T>, base: Fpm<T>) -> Result<ImprovedRate<T>, MetricsError> {
    let base = match base {
        Fpm::Finite(b) if b > T::zero() && b.is_finite() => b,
        _ => return Err(MetricsError::BadBaseline),
    };
    match new {
        Fpm::Finite(v) if v.is_finite() => Ok(ImprovedRate::Percent((v - base) / base * T::from(100.0).unwrap())),
        _ => Ok(ImprovedRate::Unbounded),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalsePositiveStats {
    /// Payloads run up to and including the last valid one.
    pub executed: u64,
    pub valid: u64,
    pub false_positives: u64,
    pub fpm: Fpm<f64>,
}

/// Counts false positives for a run that stops at its last exploiting
/// payload. `None` when nothing was exploited.
pub fn false_positive_stats(trials: &[TrialRecord]) -> Option<FalsePositiveStats> {
    let last = trials.iter().rposition(|t| t.outcome.is_exploited())?;
    let executed = (last + 1) as u64;
    let valid = trials[..=last].iter().filter(|t| t.outcome.is_exploited()).count() as u64;
    let false_positives = executed - valid;
    Some(FalsePositiveStats {
        executed,
        valid,
        false_positives,
        fpm: fpm(executed, false_positives).expect("executed >= 1 and fp <= executed"),
    })
}

/// Step curve of cumulative exploits against seconds since `origin`.
pub fn coverage_curve(trials: &[TrialRecord], origin: Duration) -> Vec<(f64, usize)> {
    trials
        .iter()
        .filter(|t| t.outcome.is_exploited())
        .enumerate()
        .map(|(i, t)| (t.end.saturating_sub(origin).as_secs_f64(), i + 1))
        .collect()
}

/// Seconds from `origin` to the end of the last exploited trial.
pub fn time_to_last_vulnerability(trials: &[TrialRecord], origin: Duration) -> Option<f64> {
    coverage_curve(trials, origin).last().map(|(t, _)| *t)
}

/// Times each technique in isolation for `rounds` independent rounds.
///
/// Every payload of a technique runs back to back; the technique's time is
/// the span from its first trial's start to its last trial's end, whether or
/// not anything was exploited. Injector state is reset before every
/// technique so nothing carries over.
pub fn collect_time_data(
    injector: &mut dyn Injector,
    payloads: &[Payload],
    rounds: usize,
) -> Result<Vec<Vec<TechniqueOutcome<f64>>>, MetricsError> {
    if rounds == 0 {
        return Err(MetricsError::TooFewRuns { needed: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut outcomes = Vec::with_capacity(Technique::COUNT);
        let mut attempted = 0;
        let mut transport = 0;
        for t in Technique::ALL {
            injector.reset();
            let trials: Vec<TrialRecord> = payloads
                .iter()
                .filter(|p| p.technique == t)
                .map(|p| injector.execute(p))
                .collect();
            attempted += trials.len();
            let errors = trials
                .iter()
                .filter(|r| r.outcome == TrialOutcome::TransportError)
                .count();
            transport += errors;
            let span = match (trials.first(), trials.last()) {
                (Some(first), Some(last)) => last.end.saturating_sub(first.start),
                _ => Duration::ZERO,
            };
            let mut succeeded = trials.iter().any(|r| r.outcome.is_exploited());
            if errors > 0 {
                log::warn!("round {}: {} transport errors for technique {}", round + 1, errors, t);
                succeeded = false;
            }
            let mut secs = span.as_secs_f64();
            if succeeded && secs <= 0.0 {
                secs = 1e-9;
            }
            outcomes.push(TechniqueOutcome::new(t, succeeded, secs));
        }
        if attempted > 0 && transport == attempted {
            return Err(MetricsError::Unreachable(round + 1));
        }
        out.push(outcomes);
    }
    Ok(out)
}

/// Long-format metric row shared by every CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub target: String,
    pub method: String,
    pub run: String,
    pub metric: String,
    pub value: String,
}

impl MetricRow {
    pub fn new(
        target: impl Into<String>,
        method: impl fmt::Display,
        run: impl fmt::Display,
        metric: impl Into<String>,
        value: impl fmt::Display,
    ) -> Self {
        MetricRow {
            target: target.into(),
            method: method.to_string(),
            run: run.to_string(),
            metric: metric.into(),
            value: value.to_string(),
        }
    }
}

pub fn write_metric_rows<W: Write>(writer: W, rows: &[MetricRow]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rows for the timing summary table.
pub fn summary_rows(summary: &EvaluationSummary<f64>) -> Vec<MetricRow> {
    let s = summary;
    [
        ("t_max", s.t_max),
        ("t_min", s.t_min),
        ("t_mean", s.t_mean),
        ("t_std", s.t_std),
    ]
    .into_iter()
    .map(|(m, v)| MetricRow::new(&s.target_id, s.method, "all", m, v))
    .collect()
}

pub fn coverage_rows(target: &str, method: Method, run: usize, curve: &[(f64, usize)]) -> Vec<MetricRow> {
    curve
        .iter()
        .map(|(t, k)| MetricRow::new(target, method, run, format!("coverage[{k}]"), t))
        .collect()
}
