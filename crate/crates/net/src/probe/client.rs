use std::sync::Mutex;
use std::time::{Duration, Instant};

use ureq::Agent;
use url::Url;

use super::ProbeError;
use crate::HttpMethod;

pub const DEFAULT_USER_AGENT: &str = concat!("tpsqli/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub timeout: Duration,
    /// Minimum gap between the end of one request and the start of the next.
    pub politeness: Duration,
    pub user_agent: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            timeout: Duration::from_secs(30),
            politeness: Duration::ZERO,
            user_agent: DEFAULT_USER_AGENT.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
    pub latency: Duration,
}

/// Blocking HTTP client with an in-memory cookie jar. Requests are
/// serialized: at most one is in flight at any time.
#[derive(Debug)]
pub struct HttpClient {
    agent: Agent,
    politeness: Duration,
    timeout: Duration,
    /// End of the previous request; the lock also serializes requests.
    last: Mutex<Option<Instant>>,
    origin: Instant,
}

impl HttpClient {
    pub fn new(config: &HttpConfig) -> HttpClient {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .user_agent(config.user_agent.as_str())
            .build()
            .into();
        HttpClient {
            agent,
            politeness: config.politeness,
            timeout: config.timeout,
            last: Mutex::new(None),
            origin: Instant::now(),
        }
    }

    /// Time since the client was created; trial timestamps use this clock.
    pub fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn clear_cookies(&self) {
        self.agent.cookie_jar_lock().clear();
    }

    pub fn get(&self, url: &Url) -> Result<HttpResponse, ProbeError> {
        self.send(HttpMethod::Get, url, &[])
    }

    /// Sends `params` as the query string (GET) or a form body (POST),
    /// replacing any query already on `url`.
    pub fn send(&self, method: HttpMethod, url: &Url, params: &[(String, String)]) -> Result<HttpResponse, ProbeError> {
        let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let since = prev.elapsed();
            if since < self.politeness {
                std::thread::sleep(self.politeness - since);
            }
        }

        let started = Instant::now();
        let result = match method {
            HttpMethod::Get => {
                let mut target = url.clone();
                if !params.is_empty() {
                    target.query_pairs_mut().clear().extend_pairs(params);
                }
                self.agent.get(target.as_str()).call()
            }
            HttpMethod::Post => self
                .agent
                .post(url.as_str())
                .send_form(params.iter().map(|(k, v)| (k.as_str(), v.as_str()))),
        };
        let outcome = result.and_then(|mut resp| {
            let status = resp.status().as_u16();
            let body = resp.body_mut().read_to_string()?;
            Ok((status, body))
        });
        let latency = started.elapsed();
        *last = Some(Instant::now());

        match outcome {
            Ok((status, body)) => Ok(HttpResponse { status, body, latency }),
            Err(ureq::Error::Timeout(_)) => Err(ProbeError::Timeout {
                url: url.to_string(),
                after: latency,
            }),
            Err(e) => Err(ProbeError::Transport {
                url: url.to_string(),
                message: e.to_string(),
            }),
        }
    }
}
