//! Network side of `tpsqli`: crawling and payload injection over HTTP, and
//! a scripted vulnerable web application to run them against.

pub mod probe;
pub mod sim;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use probe::{crawl, CrawlConfig, HttpClient, HttpConfig, HttpInjector, InjectionPoint, ProbeError};
pub use sim::{scripted_latency, serve, Scenario, SimError, SimHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub enum HttpMethod {
    #[default]
    #[serde(rename = "GET", alias = "get")]
    Get,
    #[serde(rename = "POST", alias = "post")]
    Post,
}

impl HttpMethod {
    /// Case-insensitive; anything that is not POST is treated as GET, as
    /// browsers do for form methods.
    pub fn from_form_attr(attr: Option<&str>) -> HttpMethod {
        match attr {
            Some(m) if m.trim().eq_ignore_ascii_case("post") => HttpMethod::Post,
            _ => HttpMethod::Get,
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HttpMethod::Get => "GET",
            HttpMethod::Post => "POST",
        })
    }
}
