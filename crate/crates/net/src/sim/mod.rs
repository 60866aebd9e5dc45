//! Scripted vulnerable web application.
//!
//! A scenario file declares pages, links, forms and the parameters behind
//! them. Each parameter lists the technique families it falls to and how
//! slowly it answers; the server then reacts to injected values the way a
//! vulnerable backend would, without any database.

mod respond;
mod scenario;
mod server;

use thiserror::Error;

pub use respond::{classify, requested_delay};
pub use scenario::{scripted_latency, Dbms, Field, Form, Page, ParamSpec, Scenario, DEFAULT_ERROR_SIGNATURE};
pub use server::{serve, SimHandle};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("malformed scenario: {0}")]
    Syntax(String),
    #[error("invalid scenario {0}")]
    Invalid(String),
    #[error("no bundled scenario or file named {0:?}")]
    UnknownScenario(String),
    #[error("cannot listen on port {port}: {source}")]
    Bind {
        port: u16,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot start simulator runtime: {0}")]
    Runtime(#[source] std::io::Error),
}
