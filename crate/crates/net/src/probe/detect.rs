//! Outcome oracles, one per technique family.

use std::collections::HashMap;
use std::time::Duration;

/// Responses at or above this similarity count as "the same page".
pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.98;
/// Share of the requested delay a response must add to count as delayed.
pub const DELAY_TOLERANCE: f64 = 0.8;

fn token_weights(text: &str) -> HashMap<String, usize> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        *counts.entry(tok.to_lowercase()).or_default() += tok.chars().count();
    }
    counts
}

/// Length-weighted token overlap in `[0, 1]`; 1 for identical bodies.
///
/// Bodies are split into lowercase alphanumeric tokens, each weighted by
/// its length, and compared as multisets (Dice coefficient).
pub fn similarity(a: &str, b: &str) -> f64 {
    if a == b {
        return 1.0;
    }
    let wa = token_weights(a);
    let wb = token_weights(b);
    let total: usize = wa.values().sum::<usize>() + wb.values().sum::<usize>();
    if total == 0 {
        return 1.0;
    }
    let shared: usize = wa
        .iter()
        .map(|(tok, n)| (*n).min(wb.get(tok).copied().unwrap_or(0)))
        .sum();
    2.0 * shared as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub exploited: bool,
    pub evidence: String,
}

impl Verdict {
    fn new(exploited: bool, evidence: String) -> Verdict {
        Verdict { exploited, evidence }
    }
}

/// The true-condition page must look like the baseline and the
/// false-condition page must not.
pub fn boolean_verdict(baseline: &str, true_body: &str, false_body: &str, threshold: f64) -> Verdict {
    if true_body == false_body {
        return Verdict::new(false, "true and false conditions returned identical pages".into());
    }
    let s_true = similarity(true_body, baseline);
    let s_false = similarity(false_body, baseline);
    let exploited = s_true >= threshold && s_false < threshold;
    Verdict::new(
        exploited,
        format!("similarity to baseline: true condition {s_true:.3}, false condition {s_false:.3}"),
    )
}

/// First signature present in `body` but absent from the baseline.
pub fn signature_verdict(baseline: &str, body: &str, signatures: &[String]) -> Verdict {
    match signatures
        .iter()
        .find(|s| !s.is_empty() && body.contains(s.as_str()) && !baseline.contains(s.as_str()))
    {
        Some(sig) => Verdict::new(true, format!("response contains error signature {sig:?}")),
        None => Verdict::new(false, "no error signature in response".into()),
    }
}

pub fn marker_verdict(baseline: &str, body: &str, marker: &str) -> Verdict {
    if body.contains(marker) && !baseline.contains(marker) {
        Verdict::new(true, format!("response reflects marker {marker:?}"))
    } else {
        Verdict::new(false, format!("marker {marker:?} not reflected"))
    }
}

/// Delayed iff the payload response took at least `DELAY_TOLERANCE` of the
/// requested delay longer than the control request.
pub fn delay_verdict(payload: Duration, control: Duration, delay: f64) -> Verdict {
    let extra = payload.as_secs_f64() - control.as_secs_f64();
    let exploited = extra >= DELAY_TOLERANCE * delay;
    Verdict::new(
        exploited,
        format!(
            "response took {:.3}s against {:.3}s for the control request (requested delay {delay}s)",
            payload.as_secs_f64(),
            control.as_secs_f64()
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_bodies_are_fully_similar() {
        assert_eq!(similarity("<p>a b</p>", "<p>a b</p>"), 1.0);
        assert_eq!(similarity("", ""), 1.0);
        assert_eq!(similarity("abc", ""), 0.0);
    }

    #[test]
    fn dropped_rows_lower_similarity() {
        let full = "<table><tr>ID 1 admin</tr><tr>ID 2 Gordon Brown</tr></table>";
        let empty = "<table>No matching records</table>";
        assert!(similarity(full, empty) < DEFAULT_SIMILARITY_THRESHOLD);
    }

    #[test]
    fn boolean_needs_a_difference() {
        let v = boolean_verdict("page", "page", "page", DEFAULT_SIMILARITY_THRESHOLD);
        assert!(!v.exploited);
        let v = boolean_verdict("rows one two three", "rows one two three", "nothing", 0.98);
        assert!(v.exploited);
    }

    #[test]
    fn delay_threshold() {
        let ms = Duration::from_millis;
        assert!(delay_verdict(ms(1020), ms(20), 1.0).exploited);
        assert!(delay_verdict(ms(825), ms(20), 1.0).exploited);
        assert!(!delay_verdict(ms(810), ms(20), 1.0).exploited);
    }

    #[test]
    fn signatures_already_on_the_page_do_not_count() {
        let sigs = vec!["SQL syntax".to_string()];
        assert!(!signature_verdict("SQL syntax help", "SQL syntax help", &sigs).exploited);
        assert!(signature_verdict("ok", "ok SQL syntax", &sigs).exploited);
    }
}
