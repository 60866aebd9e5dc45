use std::collections::BTreeMap;
use std::time::Duration;

use proptest::prelude::*;
use tpsqli_core::executor::{run_round, Phase};
use tpsqli_core::metrics::{
    coverage_curve, fpm, improved_rate, z_statistic, EvaluationSummary, Fpm, ImprovedRate, Method,
};
use tpsqli_core::store::{FeedbackStore, HistoryEntry, RoundDigest};
use tpsqli_core::weights::{aggregate_rounds, PerTechnique};
use tpsqli_core::{
    DetectionHint, Payload, Risk, RoundResult, TargetProfile, Technique, TechniqueOutcome, TrialOutcome, TrialRecord,
};

fn technique() -> impl Strategy<Value = Technique> {
    (0..6usize).prop_map(|i| Technique::ALL[i])
}

fn outcome() -> impl Strategy<Value = TrialOutcome> {
    prop_oneof![
        3 => Just(TrialOutcome::Exploited),
        6 => Just(TrialOutcome::NotExploited),
        1 => Just(TrialOutcome::TransportError),
    ]
}

/// Corpus entries as (technique, initial risk, scripted outcome, ms).
fn corpus() -> impl Strategy<Value = Vec<(Technique, u8, TrialOutcome, u64)>> {
    prop::collection::vec((technique(), 1u8..=3, outcome(), 1u64..50), 1..14)
}

fn profile() -> impl Strategy<Value = Option<Vec<f64>>> {
    prop::option::of(prop::collection::vec((0i32..12).prop_map(|v| v as f64 / 2.0), 6))
}

fn build(spec: &[(Technique, u8, TrialOutcome, u64)]) -> Vec<Payload> {
    spec.iter()
        .enumerate()
        .map(|(i, (t, risk, _, _))| Payload {
            id: format!("{}{i}", t.letter()),
            technique: *t,
            template: "{value}".into(),
            risk: Risk::new(*risk).unwrap(),
            hint: DetectionHint::default(),
        })
        .collect()
}

fn prior(sw: &Option<Vec<f64>>) -> Option<TargetProfile> {
    sw.as_ref().map(|v| {
        let mut p = TargetProfile::new("p");
        p.sw_vector = PerTechnique::from_fn(|t| v[t.index()]);
        p
    })
}

fn play(
    spec: &[(Technique, u8, TrialOutcome, u64)],
    payloads: &[Payload],
    prior: Option<&TargetProfile>,
) -> RoundResult {
    let script: BTreeMap<String, (TrialOutcome, u64)> = payloads
        .iter()
        .zip(spec)
        .map(|(p, s)| (p.id.clone(), (s.2, s.3)))
        .collect();
    let mut clock = Duration::ZERO;
    let mut inj = |p: &Payload| {
        let (outcome, ms) = script[&p.id];
        let start = clock;
        clock += Duration::from_millis(ms);
        TrialRecord {
            payload_id: p.id.clone(),
            technique: p.technique,
            start,
            end: clock,
            outcome,
            evidence: "scripted".into(),
        }
    };
    run_round("p", payloads, prior, &mut inj)
}

proptest! {
    #[test]
    fn every_payload_runs_exactly_once(spec in corpus(), sw in profile()) {
        let payloads = build(&spec);
        let r = play(&spec, &payloads, prior(&sw).as_ref());
        let mut ran: Vec<&str> = r.trials.iter().map(|t| t.payload_id.as_str()).collect();
        ran.sort();
        let mut all: Vec<&str> = payloads.iter().map(|p| p.id.as_str()).collect();
        all.sort();
        prop_assert_eq!(ran, all);
    }

    #[test]
    fn risk_only_moves_to_high_on_success_or_low_on_failed_retest(spec in corpus(), sw in profile()) {
        let payloads = build(&spec);
        let r = play(&spec, &payloads, prior(&sw).as_ref());
        for e in &r.trace {
            if e.outcome == TrialOutcome::Exploited {
                prop_assert_eq!(e.risk_after, Risk::HIGH);
            } else if e.phase == Phase::Retest {
                prop_assert_eq!((e.risk_before, e.risk_after), (Risk::HIGH, Risk::LOW));
            } else {
                prop_assert_eq!(e.risk_after, e.risk_before);
            }
        }
    }

    #[test]
    fn selection_never_skips_a_higher_score(spec in corpus(), sw in profile()) {
        let payloads = build(&spec);
        let p = prior(&sw);
        let r = play(&spec, &payloads, p.as_ref());
        let mut remaining: Vec<Technique> = payloads.iter().map(|p| p.technique).collect();
        let mut scores = match &p {
            Some(p) => p.sw_vector.clone(),
            None => PerTechnique::from_fn(|_| 1.0),
        };
        for e in &r.trace {
            if e.phase == Phase::Main {
                for other in &remaining {
                    let s = *scores.get(*other);
                    prop_assert!(e.score_before >= s);
                    if s == e.score_before {
                        prop_assert!(e.technique.index() <= other.index());
                    }
                }
                if e.outcome != TrialOutcome::Exploited {
                    *scores.get_mut(e.technique) -= 1.0;
                }
            }
            let pos = remaining.iter().position(|t| *t == e.technique).unwrap();
            remaining.remove(pos);
        }
    }

    #[test]
    fn first_exploit_time_is_frozen(spec in corpus(), sw in profile()) {
        let payloads = build(&spec);
        let r = play(&spec, &payloads, prior(&sw).as_ref());
        for t in Technique::ALL {
            let mut spent = Duration::ZERO;
            for e in r.trace.iter().filter(|e| e.technique == t) {
                let retest_miss = e.phase == Phase::Retest && e.outcome != TrialOutcome::Exploited;
                if !retest_miss {
                    spent += e.duration;
                }
                if e.outcome == TrialOutcome::Exploited {
                    break;
                }
            }
            let exploited = r.trials.iter().any(|x| x.technique == t && x.outcome == TrialOutcome::Exploited);
            prop_assert_eq!(*r.updated_profile.is_exploit.get(t), exploited);
            let want = if exploited { spent.as_secs_f64() } else {
                r.trace.iter()
                    .filter(|e| e.technique == t && e.phase != Phase::Retest)
                    .map(|e| e.duration)
                    .sum::<Duration>()
                    .as_secs_f64()
            };
            prop_assert_eq!(*r.updated_profile.exploit_time.get(t), want);
        }
    }

    #[test]
    fn rounds_are_deterministic(spec in corpus(), sw in profile()) {
        let payloads = build(&spec);
        let a = play(&spec, &payloads, prior(&sw).as_ref());
        let b = play(&spec, &payloads, prior(&sw).as_ref());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn feedback_never_delays_the_first_exploit(spec in corpus()) {
        let spec: Vec<_> = spec
            .into_iter()
            .map(|(t, risk, o, ms)| (t, risk, if o == TrialOutcome::TransportError { TrialOutcome::NotExploited } else { o }, ms))
            .collect();
        let payloads = build(&spec);
        let first = play(&spec, &payloads, None);
        let second = play(&spec, &payloads, Some(&first.updated_profile));
        match (first.first_exploit_index(), second.first_exploit_index()) {
            (Some(a), Some(b)) => prop_assert!(b <= a),
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn sw_vector_sums_to_technique_count_or_zero(spec in corpus(), sw in profile()) {
        let payloads = build(&spec);
        let r = play(&spec, &payloads, prior(&sw).as_ref());
        let sum = r.updated_profile.sw_vector.sum();
        if r.vulnerabilities.is_empty() {
            prop_assert_eq!(sum, 0.0);
        } else {
            prop_assert!((sum - 6.0).abs() < 1e-9);
        }
    }
}

fn summary(mean: f64, std: f64) -> EvaluationSummary<f64> {
    EvaluationSummary {
        target_id: "t".into(),
        method: Method::Baseline,
        t_max: mean + std,
        t_min: mean - std,
        t_mean: mean,
        t_std: std,
        runs: 5,
    }
}

proptest! {
    #[test]
    fn z_is_antisymmetric(ma in 0.0f64..1e3, sa in 0.01f64..50.0, mb in 0.0f64..1e3, sb in 0.0f64..50.0) {
        let ab = z_statistic(ma, sa, mb, sb).unwrap();
        let ba = z_statistic(mb, sb, ma, sa).unwrap();
        prop_assert_eq!(ab, -ba);
        let (a, b) = (summary(ma, sa), summary(mb, sb));
        prop_assert_eq!(tpsqli_core::metrics::z_score(&a, &b).unwrap(), ab);
    }

    #[test]
    fn z_ignores_a_common_shift(ma in 0.0f64..1e3, sa in 0.01f64..50.0, mb in 0.0f64..1e3, sb in 0.0f64..50.0, c in -1e3f64..1e3) {
        let z = z_statistic(ma, sa, mb, sb).unwrap();
        let shifted = z_statistic(ma + c, sa, mb + c, sb).unwrap();
        prop_assert!((z - shifted).abs() <= 1e-9 * z.abs().max(1.0));
    }

    #[test]
    fn fpm_falls_as_false_positives_grow(executed in 1u64..10_000, fp in 1u64..10_000) {
        prop_assume!(fp < executed);
        let a = fpm::<f64>(executed, fp).unwrap().value();
        let b = fpm::<f64>(executed, fp + 1).unwrap().value();
        prop_assert!(a >= 1.0 && b >= 1.0);
        prop_assert!(b < a);
    }

    #[test]
    fn ir_of_equal_fpm_is_zero(x in 1.0f64..100.0) {
        prop_assert_eq!(improved_rate(Fpm::Finite(x), Fpm::Finite(x)).unwrap(), ImprovedRate::Percent(0.0));
    }

    #[test]
    fn coverage_curve_is_monotone(steps in prop::collection::vec((any::<bool>(), 0u64..500), 0..40)) {
        let mut clock = Duration::from_secs(3);
        let trials: Vec<TrialRecord> = steps
            .iter()
            .enumerate()
            .map(|(i, (hit, ms))| {
                let start = clock;
                clock += Duration::from_millis(*ms);
                TrialRecord {
                    payload_id: format!("p{i}"),
                    technique: Technique::BooleanBlind,
                    start,
                    end: clock,
                    outcome: if *hit { TrialOutcome::Exploited } else { TrialOutcome::NotExploited },
                    evidence: String::new(),
                }
            })
            .collect();
        let curve = coverage_curve(&trials, Duration::from_secs(3));
        prop_assert_eq!(curve.len(), steps.iter().filter(|(h, _)| *h).count());
        for w in curve.windows(2) {
            prop_assert!(w[0].0 <= w[1].0);
            prop_assert_eq!(w[0].1 + 1, w[1].1);
        }
    }

    #[test]
    fn summary_bounds_hold(times in prop::collection::vec(0.0f64..1e4, 2..20)) {
        let s = EvaluationSummary::from_times("t", Method::Prioritized, &times).unwrap();
        prop_assert!(s.t_min <= s.t_mean && s.t_mean <= s.t_max);
        prop_assert!(s.t_std >= 0.0);
        prop_assert_eq!(s.runs, times.len());
    }

    #[test]
    fn one_round_aggregates_to_itself(ok in prop::collection::vec(any::<bool>(), 6), secs in prop::collection::vec(0.001f64..500.0, 6)) {
        let round: Vec<TechniqueOutcome> = Technique::ALL
            .into_iter()
            .map(|t| TechniqueOutcome::new(t, ok[t.index()], secs[t.index()]))
            .collect();
        prop_assert_eq!(aggregate_rounds(std::slice::from_ref(&round)).unwrap(), round);
    }
}

fn store() -> impl Strategy<Value = FeedbackStore> {
    let weights = prop::collection::vec(0.0f64..6.0, 6);
    let profile = (
        "[a-z]{1,8}",
        weights.clone(),
        prop::collection::vec(-20.0f64..6.0, 6),
        prop::collection::vec(any::<bool>(), 6),
        prop::collection::btree_map("[BEUSTQ][0-9]", 1u8..=3, 0..8),
        any::<bool>(),
    )
        .prop_map(|(id, sw, bs, ex, risks, degraded)| {
            let mut p = TargetProfile::new(id);
            p.sw_vector = PerTechnique::from_fn(|t| sw[t.index()]);
            p.basic_scores = PerTechnique::from_fn(|t| bs[t.index()]);
            p.exploit_time = PerTechnique::from_fn(|t| if ex[t.index()] { sw[t.index()] + 0.5 } else { 0.0 });
            p.is_exploit = PerTechnique::from_fn(|t| ex[t.index()]);
            p.payload_risks = risks.into_iter().map(|(k, v)| (k, Risk::new(v).unwrap())).collect();
            p.degraded = degraded;
            p
        });
    (
        prop::collection::vec(profile, 0..4),
        prop::collection::vec((any::<u32>(), 0usize..40, weights), 0..4),
    )
        .prop_map(|(profiles, history)| {
            let mut s = FeedbackStore::default();
            for p in profiles {
                s.profiles.insert(p.target_id.clone(), p);
            }
            for (ts, trials, sw) in history {
                s.history.push(HistoryEntry {
                    timestamp: ts as u64,
                    target_id: "h".into(),
                    digest: RoundDigest {
                        trials,
                        exploited: trials / 3,
                        order: "BEUSTQ".into(),
                        sw_vector: PerTechnique::from_fn(|t| sw[t.index()]),
                    },
                });
            }
            s
        })
}

proptest! {
    #[test]
    fn store_json_round_trips(s in store()) {
        let text = s.to_json();
        let back = FeedbackStore::from_json(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&back, &s);
        prop_assert_eq!(back.to_json(), text);
    }

    #[test]
    fn recording_rounds_only_appends_history(s in store(), spec in corpus()) {
        let payloads = build(&spec);
        let r = play(&spec, &payloads, None);
        let mut after = s.clone();
        after.record_round(&r);
        prop_assert_eq!(&after.history[..s.history.len()], &s.history[..]);
        prop_assert_eq!(after.history.len(), s.history.len() + 1);
        for t in Technique::ALL {
            if *r.updated_profile.is_exploit.get(t) {
                let stored = after.profile("p").unwrap();
                prop_assert!(*stored.is_exploit.get(t));
                prop_assert!(payloads.iter().any(|p| p.technique == t && stored.payload_risks.get(&p.id) == Some(&Risk::HIGH)));
            }
        }
    }
}
