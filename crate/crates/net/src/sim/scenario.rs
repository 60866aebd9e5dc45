use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tpsqli_core::Technique;

use super::SimError;
use crate::HttpMethod;

pub const DEFAULT_ERROR_SIGNATURE: &str = "You have an error in your SQL syntax";

const BUNDLED: [(&str, &str); 10] = [
    (
        "dvwa-blind-analog",
        include_str!("../../scenarios/dvwa-blind-analog.toml"),
    ),
    ("dvwa-sql-analog", include_str!("../../scenarios/dvwa-sql-analog.toml")),
    ("r1-analog", include_str!("../../scenarios/r1-analog.toml")),
    ("r2-analog", include_str!("../../scenarios/r2-analog.toml")),
    ("r3-analog", include_str!("../../scenarios/r3-analog.toml")),
    ("r4-analog", include_str!("../../scenarios/r4-analog.toml")),
    ("r5-analog", include_str!("../../scenarios/r5-analog.toml")),
    ("r6-analog", include_str!("../../scenarios/r6-analog.toml")),
    ("r7-analog", include_str!("../../scenarios/r7-analog.toml")),
    ("r8-analog", include_str!("../../scenarios/r8-analog.toml")),
];

/// SQL dialect of the simulated backend. Sleep and error functions of other
/// dialects are treated as harmless text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dbms {
    #[default]
    Mysql,
    Postgres,
    Mssql,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub dbms: Dbms,
    pub pages: Vec<Page>,
    #[serde(default)]
    pub params: Vec<ParamSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Page {
    pub path: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    /// Hrefs, optionally with a query string.
    #[serde(default)]
    pub links: Vec<String>,
    #[serde(default)]
    pub forms: Vec<Form>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Form {
    pub action: String,
    #[serde(default)]
    pub method: HttpMethod,
    #[serde(default)]
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub name: String,
    #[serde(default)]
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub path: String,
    #[serde(default)]
    pub method: HttpMethod,
    pub name: String,
    #[serde(default)]
    pub vulnerable: Vec<Technique>,
    /// Seconds added to every request that carries this parameter.
    #[serde(default)]
    pub base_latency: f64,
    /// Extra seconds per request, keyed by the technique the value looks like.
    #[serde(default)]
    pub overhead: BTreeMap<Technique, f64>,
    /// Upper bound of a uniform random extra latency, in seconds.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "default_signature")]
    pub error_signature: String,
    /// Page echoes the submitted value back.
    #[serde(default)]
    pub echo_input: bool,
}

fn default_signature() -> String {
    DEFAULT_ERROR_SIGNATURE.to_string()
}

impl ParamSpec {
    pub fn is_vulnerable_to(&self, t: Technique) -> bool {
        self.vulnerable.contains(&t)
    }

    pub fn overhead_for(&self, t: Option<Technique>) -> f64 {
        t.and_then(|t| self.overhead.get(&t).copied()).unwrap_or(0.0)
    }
}

fn path_of(href: &str) -> &str {
    let end = href.find(['?', '#']).unwrap_or(href.len());
    &href[..end]
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, SimError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| SimError::Syntax(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Names of the scenarios compiled into the binary.
    pub fn bundled_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(n, _)| *n).collect()
    }

    pub fn bundled(name: &str) -> Option<Scenario> {
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Scenario::parse(text).expect("bundled scenario is valid"))
    }

    /// A bundled scenario name or a path to a scenario file.
    pub fn load(source: &str) -> Result<Scenario, SimError> {
        if let Some(s) = Scenario::bundled(source) {
            return Ok(s);
        }
        let path = Path::new(source);
        if !path.exists() {
            return Err(SimError::UnknownScenario(source.to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Syntax(format!("{source}: {e}")))?;
        Scenario::parse(&text)
    }

    pub fn page(&self, path: &str) -> Option<&Page> {
        self.pages.iter().find(|p| p.path == path)
    }

    pub fn params_for<'a>(
        &'a self,
        path: &'a str,
        method: HttpMethod,
    ) -> impl Iterator<Item = (usize, &'a ParamSpec)> + 'a {
        self.params
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.path == path && p.method == method)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::Invalid(format!("{}: {msg}", self.name)));
        if self.pages.is_empty() {
            return invalid("no pages".into());
        }
        for page in &self.pages {
            if !page.path.starts_with('/') {
                return invalid(format!("page path {:?} must start with '/'", page.path));
            }
            if self.pages.iter().filter(|p| p.path == page.path).count() > 1 {
                return invalid(format!("page {} declared twice", page.path));
            }
            for link in &page.links {
                if self.page(path_of(link)).is_none() {
                    return invalid(format!("page {} links to unknown path {link}", page.path));
                }
            }
            for form in &page.forms {
                if self.page(path_of(&form.action)).is_none() {
                    return invalid(format!("form on {} posts to unknown path {}", page.path, form.action));
                }
            }
        }
        for p in &self.params {
            let label = format!("{} {}#{}", p.method, p.path, p.name);
            if self.page(&p.path).is_none() {
                return invalid(format!("{label}: unknown path"));
            }
            let latencies = std::iter::once(p.base_latency)
                .chain(p.overhead.values().copied())
                .chain(std::iter::once(p.jitter));
            for v in latencies {
                if !(v.is_finite() && v >= 0.0) {
                    return invalid(format!("{label}: latencies must be finite and non-negative, got {v}"));
                }
            }
            if p.is_vulnerable_to(Technique::ErrorBased) && p.error_signature.is_empty() {
                return invalid(format!("{label}: error-vulnerable parameter needs error_signature"));
            }
        }
        Ok(())
    }
}

/// Copy of `scenario` with every latency multiplied by `scale`.
pub fn scripted_latency(scenario: &Scenario, scale: f64) -> Scenario {
    assert!(scale > 0.0 && scale.is_finite(), "latency scale must be positive");
    let mut out = scenario.clone();
    for p in &mut out.params {
        p.base_latency *= scale;
        p.jitter *= scale;
        for v in p.overhead.values_mut() {
            *v *= scale;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for name in Scenario::bundled_names() {
            let s = Scenario::bundled(name).unwrap();
            assert_eq!(s.name, name);
            assert!(s.params.iter().any(|p| !p.vulnerable.is_empty()), "{name}");
        }
    }

    #[test]
    fn unknown_link_target_is_rejected() {
        let text = r#"
            name = "x"
            [[pages]]
            path = "/"
            links = ["/missing?id=1"]
        "#;
        let err = Scenario::parse(text).unwrap_err();
        assert!(err.to_string().contains("/missing"), "{err}");
    }

    #[test]
    fn negative_latency_is_rejected() {
        let text = r#"
            name = "x"
            [[pages]]
            path = "/"
            [[params]]
            path = "/"
            name = "id"
            base_latency = -0.1
        "#;
        assert!(Scenario::parse(text).is_err());
    }

    #[test]
    fn scale_one_is_identity_and_structure_is_kept() {
        let s = Scenario::bundled("dvwa-blind-analog").unwrap();
        assert_eq!(scripted_latency(&s, 1.0), s);
        let fast = scripted_latency(&s, 0.1);
        for (a, b) in s.params.iter().zip(&fast.params) {
            assert_eq!(a.vulnerable, b.vulnerable);
            assert!((b.base_latency - a.base_latency * 0.1).abs() < 1e-12);
            for (t, v) in &a.overhead {
                assert!((b.overhead[t] - v * 0.1).abs() < 1e-12);
            }
        }
    }
}
