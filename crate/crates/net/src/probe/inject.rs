use tpsqli_core::{Injector, Payload, Technique, TrialOutcome, TrialRecord};

use super::detect::{self, Verdict, DEFAULT_SIMILARITY_THRESHOLD};
use super::{HttpClient, HttpResponse, InjectionPoint, ProbeError};

/// Runs payloads against one injection point.
#[derive(Debug)]
pub struct HttpInjector<'a> {
    client: &'a HttpClient,
    point: &'a InjectionPoint,
    similarity_threshold: f64,
}

impl<'a> HttpInjector<'a> {
    pub fn new(client: &'a HttpClient, point: &'a InjectionPoint) -> Self {
        HttpInjector {
            client,
            point,
            similarity_threshold: DEFAULT_SIMILARITY_THRESHOLD,
        }
    }

    pub fn with_similarity_threshold(mut self, threshold: f64) -> Self {
        self.similarity_threshold = threshold;
        self
    }

    fn request(&self, value: &str) -> Result<HttpResponse, ProbeError> {
        let p = self.point;
        self.client.send(p.method, &p.url, &p.params_with(value))
    }

    fn timed(&self, payload: &Payload, delay: f64) -> Result<Verdict, ProbeError> {
        let value = &self.point.value;
        let control = self.request(&payload.render_control(value))?;
        let attempt = self.request(&payload.render(value))?;
        Ok(detect::delay_verdict(attempt.latency, control.latency, delay))
    }

    fn marker(&self, payload: &Payload, marker: &str) -> Result<Verdict, ProbeError> {
        let resp = self.request(&payload.render(&self.point.value))?;
        Ok(detect::marker_verdict(&self.point.baseline.body, &resp.body, marker))
    }

    fn judge(&self, payload: &Payload) -> Result<Verdict, ProbeError> {
        let value = &self.point.value;
        let baseline = &self.point.baseline.body;
        let hint = &payload.hint;
        match payload.technique {
            Technique::BooleanBlind => {
                let false_value = payload
                    .render_false(value)
                    .expect("validated boolean payload has a false variant");
                let t = self.request(&payload.render(value))?;
                let f = self.request(&false_value)?;
                Ok(detect::boolean_verdict(
                    baseline,
                    &t.body,
                    &f.body,
                    self.similarity_threshold,
                ))
            }
            Technique::ErrorBased => {
                let resp = self.request(&payload.render(value))?;
                Ok(detect::signature_verdict(baseline, &resp.body, &hint.signatures))
            }
            Technique::UnionBased | Technique::InlineQuery => {
                self.marker(payload, hint.marker.as_deref().unwrap_or_default())
            }
            Technique::StackBased => match (hint.delay, hint.marker.as_deref()) {
                (Some(delay), _) => self.timed(payload, delay),
                (None, Some(marker)) => self.marker(payload, marker),
                (None, None) => unreachable!("validated stacked payload has a delay or marker"),
            },
            Technique::TimeBlind => self.timed(payload, hint.delay.unwrap_or_default()),
        }
    }
}

impl Injector for HttpInjector<'_> {
    fn execute(&mut self, payload: &Payload) -> TrialRecord {
        let start = self.client.now();
        let (outcome, evidence) = match self.judge(payload) {
            Ok(v) if v.exploited => (TrialOutcome::Exploited, v.evidence),
            Ok(v) => (TrialOutcome::NotExploited, v.evidence),
            Err(e) => (TrialOutcome::TransportError, e.to_string()),
        };
        let end = self.client.now();
        TrialRecord {
            payload_id: payload.id.clone(),
            technique: payload.technique,
            start,
            end,
            outcome,
            evidence,
        }
    }

    fn reset(&mut self) {
        self.client.clear_cookies();
    }
}
