//! Injection-point discovery and payload execution over HTTP.

mod client;
mod crawl;
pub mod detect;
mod inject;

use std::time::Duration;

use thiserror::Error;
use url::Url;

use crate::HttpMethod;

pub use client::{HttpClient, HttpConfig, HttpResponse, DEFAULT_USER_AGENT};
pub use crawl::{crawl, crawl_with, extract_candidates, Candidate, CrawlConfig, CrawlResult};
pub use inject::HttpInjector;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("{url}: timed out after {:.1}s", .after.as_secs_f64())]
    Timeout { url: String, after: Duration },
    #[error("{url}: {message}")]
    Transport { url: String, message: String },
    #[error("seed {url} is unreachable: {message}")]
    Unreachable { url: String, message: String },
    #[error("invalid crawl configuration: {0}")]
    Config(String),
}

/// Normal response of an injection point, captured before any payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub status: u16,
    pub body: String,
    pub latency: Duration,
}

/// A (URL, method, parameter) triple that payloads are substituted into.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionPoint {
    /// Target URL without query string.
    pub url: Url,
    pub method: HttpMethod,
    pub parameter: String,
    /// Value the parameter had where it was found.
    pub value: String,
    /// Other parameters sent unchanged alongside.
    pub other_params: Vec<(String, String)>,
    pub baseline: Baseline,
}

impl InjectionPoint {
    /// Stable identifier, e.g. `GET http://host/page#id`.
    pub fn id(&self) -> String {
        format!("{} {}#{}", self.method, self.url, self.parameter)
    }

    /// Request parameters with the tested one set to `value`.
    pub fn params_with(&self, value: &str) -> Vec<(String, String)> {
        let mut params = self.other_params.clone();
        params.push((self.parameter.clone(), value.to_string()));
        params
    }
}
