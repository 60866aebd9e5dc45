//! Technique families and the payload corpus.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Placeholder for the original parameter value inside a template.
pub const VALUE_MARKER: &str = "{value}";
/// Placeholder for the requested delay (seconds) in time-based templates.
pub const DELAY_TOKEN: &str = "{delay}";

const DEFAULT_CORPUS: &str = include_str!("../corpus/default.toml");

/// The six SQL-injection technique families, declared in the fixed
/// `BEUSTQ` order used as the cold-start tie order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "char", try_from = "char")]
pub enum Technique {
    BooleanBlind,
    ErrorBased,
    UnionBased,
    StackBased,
    TimeBlind,
    InlineQuery,
}

impl Technique {
    pub const COUNT: usize = 6;

    /// All techniques in `BEUSTQ` order.
    pub const ALL: [Technique; 6] = [
        Technique::BooleanBlind,
        Technique::ErrorBased,
        Technique::UnionBased,
        Technique::StackBased,
        Technique::TimeBlind,
        Technique::InlineQuery,
    ];

    pub fn letter(self) -> char {
        match self {
            Technique::BooleanBlind => 'B',
            Technique::ErrorBased => 'E',
            Technique::UnionBased => 'U',
            Technique::StackBased => 'S',
            Technique::TimeBlind => 'T',
            Technique::InlineQuery => 'Q',
        }
    }

    pub fn from_letter(letter: char) -> Option<Technique> {
        Technique::ALL
            .into_iter()
            .find(|t| t.letter() == letter.to_ascii_uppercase())
    }

    /// Position in the `BEUSTQ` order.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn description(self) -> &'static str {
        match self {
            Technique::BooleanBlind => "Boolean-based blind SQL injection",
            Technique::ErrorBased => "Error-based SQL injection",
            Technique::UnionBased => "Union-based SQL injection",
            Technique::StackBased => "Stack-based SQL injection",
            Technique::TimeBlind => "Time-based blind SQL injection",
            Technique::InlineQuery => "Inline queries SQL injection",
        }
    }

    /// Parses an order string such as `"BEUSTQ"`; every technique must
    /// appear exactly once.
    pub fn parse_order(order: &str) -> Result<Vec<Technique>, CatalogError> {
        let mut seen = Vec::with_capacity(Technique::COUNT);
        for c in order.chars() {
            let t = Technique::from_letter(c).ok_or(CatalogError::UnknownTechnique(c))?;
            if seen.contains(&t) {
                return Err(CatalogError::BadOrder(order.to_string()));
            }
            seen.push(t);
        }
        if seen.len() != Technique::COUNT {
            return Err(CatalogError::BadOrder(order.to_string()));
        }
        Ok(seen)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl From<Technique> for char {
    fn from(t: Technique) -> char {
        t.letter()
    }
}

impl TryFrom<char> for Technique {
    type Error = CatalogError;

    fn try_from(c: char) -> Result<Self, Self::Error> {
        Technique::from_letter(c).ok_or(CatalogError::UnknownTechnique(c))
    }
}

impl FromStr for Technique {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Technique::try_from(c),
            _ => Err(CatalogError::UnknownTechnique(s.chars().next().unwrap_or(' '))),
        }
    }
}

/// Persistent payload priority: 3 marks a previously successful payload,
/// 1 a demoted one, 2 is the neutral starting level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Risk(u8);

impl Risk {
    pub const LOW: Risk = Risk(1);
    pub const NEUTRAL: Risk = Risk(2);
    pub const HIGH: Risk = Risk(3);

    pub fn new(level: u8) -> Result<Risk, CatalogError> {
        match level {
            1..=3 => Ok(Risk(level)),
            other => Err(CatalogError::BadRisk(other)),
        }
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

impl Default for Risk {
    fn default() -> Self {
        Risk::NEUTRAL
    }
}

impl TryFrom<u8> for Risk {
    type Error = CatalogError;

    fn try_from(level: u8) -> Result<Self, Self::Error> {
        Risk::new(level)
    }
}

impl From<Risk> for u8 {
    fn from(r: Risk) -> u8 {
        r.0
    }
}

impl fmt::Display for Risk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Technique-specific oracle parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionHint {
    /// False-condition variant of a boolean payload.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub false_template: Option<String>,
    /// Error strings whose presence proves an error-based injection.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub signatures: Vec<String>,
    /// Value that only appears if the injected query actually ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marker: Option<String>,
    /// Requested server-side delay in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub id: String,
    pub technique: Technique,
    pub template: String,
    pub risk: Risk,
    pub hint: DetectionHint,
}

impl Payload {
    /// Renders the payload for an original parameter value.
    pub fn render(&self, value: &str) -> String {
        fill(&self.template, value, self.hint.delay)
    }

    /// Same template with the delay forced to zero; the latency reference
    /// for delay-based detection.
    pub fn render_control(&self, value: &str) -> String {
        fill(&self.template, value, Some(0.0))
    }

    /// False-condition variant for boolean payloads.
    pub fn render_false(&self, value: &str) -> Option<String> {
        self.hint
            .false_template
            .as_deref()
            .map(|t| fill(t, value, self.hint.delay))
    }

    fn validate(&self) -> Result<(), String> {
        check_template(&self.template, self.hint.delay.is_some())?;
        let hint = &self.hint;
        if let Some(d) = hint.delay {
            if !(d.is_finite() && d > 0.0) {
                return Err(format!("delay must be positive, got {d}"));
            }
        }
        match self.technique {
            Technique::BooleanBlind => match &hint.false_template {
                Some(t) => check_template(t, hint.delay.is_some())?,
                None => return Err("boolean payload needs hint.false_template".into()),
            },
            Technique::ErrorBased => {
                if hint.signatures.iter().all(|s| s.is_empty()) {
                    return Err("error-based payload needs hint.signatures".into());
                }
            }
            Technique::UnionBased | Technique::InlineQuery => {
                if hint.marker.as_deref().is_none_or(str::is_empty) {
                    return Err("payload needs hint.marker".into());
                }
            }
            Technique::StackBased => {
                if hint.marker.is_none() && hint.delay.is_none() {
                    return Err("stacked payload needs hint.marker or hint.delay".into());
                }
            }
            Technique::TimeBlind => {
                if hint.delay.is_none() {
                    return Err("time-based payload needs hint.delay".into());
                }
            }
        }
        Ok(())
    }
}

fn fill(template: &str, value: &str, delay: Option<f64>) -> String {
    let out = template.replace(VALUE_MARKER, value);
    match delay {
        Some(d) => out.replace(DELAY_TOKEN, &format_delay(d)),
        None => out,
    }
}

fn format_delay(d: f64) -> String {
    let s = format!("{d:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn check_template(template: &str, has_delay: bool) -> Result<(), String> {
    let markers = template.matches(VALUE_MARKER).count();
    if markers != 1 {
        return Err(format!(
            "template must contain exactly one {VALUE_MARKER} marker, found {markers}"
        ));
    }
    if template.contains(DELAY_TOKEN) && !has_delay {
        return Err(format!("template uses {DELAY_TOKEN} but hint.delay is missing"));
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus: {0}")]
    Syntax(String),
    #[error("malformed corpus entry {entry}: {message}")]
    Entry { entry: String, message: String },
    #[error("duplicate payload id {0:?}")]
    DuplicateId(String),
    #[error("corpus has no payloads for techniques {}", letters(.0))]
    MissingTechniques(Vec<Technique>),
    #[error("unknown technique letter {0:?}")]
    UnknownTechnique(char),
    #[error("risk level {0} outside 1..=3")]
    BadRisk(u8),
    #[error("technique order {0:?} must name each of B, E, U, S, T, Q exactly once")]
    BadOrder(String),
}

fn letters(ts: &[Technique]) -> String {
    ts.iter().map(|t| t.letter()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayloadCorpus {
    version: String,
    payloads: Vec<Payload>,
}

#[derive(Deserialize)]
struct RawCorpus {
    version: String,
    payloads: Vec<toml::Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPayload {
    id: String,
    technique: String,
    template: String,
    #[serde(default)]
    risk: Option<u8>,
    #[serde(default)]
    hint: DetectionHint,
}

impl PayloadCorpus {
    /// Builds a corpus, enforcing unique ids, per-payload hint rules and
    /// coverage of all six techniques.
    pub fn new(version: impl Into<String>, payloads: Vec<Payload>) -> Result<Self, CatalogError> {
        let mut ids = HashSet::new();
        for p in &payloads {
            if !ids.insert(p.id.as_str()) {
                return Err(CatalogError::DuplicateId(p.id.clone()));
            }
            p.validate().map_err(|message| CatalogError::Entry {
                entry: p.id.clone(),
                message,
            })?;
        }
        let missing: Vec<Technique> = Technique::ALL
            .into_iter()
            .filter(|t| !payloads.iter().any(|p| p.technique == *t))
            .collect();
        if !missing.is_empty() {
            return Err(CatalogError::MissingTechniques(missing));
        }
        Ok(PayloadCorpus {
            version: version.into(),
            payloads,
        })
    }

    pub fn builtin() -> PayloadCorpus {
        PayloadCorpus::parse(DEFAULT_CORPUS).expect("built-in corpus is valid")
    }

    pub fn parse(text: &str) -> Result<PayloadCorpus, CatalogError> {
        let raw: RawCorpus = toml::from_str(text).map_err(|e| CatalogError::Syntax(e.to_string()))?;
        let mut payloads = Vec::with_capacity(raw.payloads.len());
        for (i, table) in raw.payloads.into_iter().enumerate() {
            let label = match table.get("id").and_then(|v| v.as_str()) {
                Some(id) => format!("#{} ({id})", i + 1),
                None => format!("#{}", i + 1),
            };
            let entry_err = |message: String| CatalogError::Entry {
                entry: label.clone(),
                message,
            };
            let p: RawPayload = table
                .try_into()
                .map_err(|e: toml::de::Error| entry_err(e.message().to_string()))?;
            let technique = p.technique.parse::<Technique>().map_err(|e| entry_err(e.to_string()))?;
            let risk = match p.risk {
                Some(level) => Risk::new(level).map_err(|e| entry_err(e.to_string()))?,
                None => Risk::default(),
            };
            payloads.push(Payload {
                id: p.id,
                technique,
                template: p.template,
                risk,
                hint: p.hint,
            });
        }
        PayloadCorpus::new(raw.version, payloads)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn payloads(&self) -> &[Payload] {
        &self.payloads
    }

    pub fn len(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Payload> {
        self.payloads.iter().find(|p| p.id == id)
    }

    /// Payloads of one technique, in corpus order.
    pub fn payloads_for(&self, technique: Technique) -> Vec<&Payload> {
        self.payloads.iter().filter(|p| p.technique == technique).collect()
    }

    /// Copy with every declared delay multiplied by `scale`.
    pub fn with_delay_scale(&self, scale: f64) -> PayloadCorpus {
        assert!(scale > 0.0 && scale.is_finite(), "delay scale must be positive");
        let mut out = self.clone();
        for p in &mut out.payloads {
            if let Some(d) = p.hint.delay.as_mut() {
                *d *= scale;
            }
        }
        out
    }
}

/// Resolves `"default"` to the built-in corpus, anything else to a file.
pub fn load_corpus(source: &str) -> Result<PayloadCorpus, CatalogError> {
    if source == "default" {
        return Ok(PayloadCorpus::builtin());
    }
    let path = Path::new(source);
    let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PayloadCorpus::parse(&text)
}
