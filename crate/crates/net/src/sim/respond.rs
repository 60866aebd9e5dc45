//! How the simulated application reacts to a parameter value.

use std::fmt::Write as _;
use std::sync::LazyLock;
use std::time::Duration;

use regex::Regex;
use tpsqli_core::Technique;

use super::scenario::{Dbms, Page, ParamSpec, Scenario};

static UNION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bUNION\s+(ALL\s+)?SELECT\b").unwrap());
static SUBSELECT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\(\s*SELECT\b").unwrap());
static COMPARISON: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"'?(\w+)'?\s*=\s*'?(\w+)'?").unwrap());
static SLEEP_ARG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)SLEEP\(\s*([0-9]*\.?[0-9]+)\s*\)").unwrap());
static WAITFOR_ARG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)WAITFOR\s+DELAY\s+'(\d+):(\d+):([0-9]*\.?[0-9]+)'").unwrap());
static CONCAT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)CONCAT\(([^()]*)\)").unwrap());

const RECORDS: [(&str, &str); 5] = [
    ("admin", "admin"),
    ("Gordon", "Brown"),
    ("Hack", "Me"),
    ("Pablo", "Picasso"),
    ("Bob", "Smith"),
];

fn has_sleep(upper: &str) -> bool {
    upper.contains("SLEEP(") || upper.contains("WAITFOR DELAY")
}

/// Which technique family a submitted value looks like, if any.
///
/// Checked from the most to the least specific shape: stacked sleep,
/// inline sleep, UNION, sub-select, error trigger, boolean comparison.
pub fn classify(value: &str) -> Option<Technique> {
    let upper = value.to_ascii_uppercase();
    if has_sleep(&upper) {
        return Some(if value.contains(';') {
            Technique::StackBased
        } else {
            Technique::TimeBlind
        });
    }
    if UNION.is_match(value) {
        return Some(Technique::UnionBased);
    }
    if SUBSELECT.is_match(value) {
        return Some(Technique::InlineQuery);
    }
    let error_fn = ["EXTRACTVALUE(", "UPDATEXML(", "CONVERT(", "CAST("]
        .iter()
        .any(|f| upper.contains(f));
    let commented = value.contains("--") || value.contains('#');
    if error_fn || (value.matches('\'').count() % 2 == 1 && !commented) {
        return Some(Technique::ErrorBased);
    }
    if COMPARISON.is_match(value) {
        return Some(Technique::BooleanBlind);
    }
    None
}

/// Whether the functions the value relies on exist in `dbms`.
fn dialect_matches(value: &str, technique: Technique, dbms: Dbms) -> bool {
    let upper = value.to_ascii_uppercase();
    match technique {
        Technique::StackBased | Technique::TimeBlind => {
            if upper.contains("PG_SLEEP(") {
                dbms == Dbms::Postgres
            } else if upper.contains("WAITFOR DELAY") {
                dbms == Dbms::Mssql
            } else {
                dbms == Dbms::Mysql
            }
        }
        Technique::ErrorBased => {
            if upper.contains("EXTRACTVALUE(") || upper.contains("UPDATEXML(") {
                dbms == Dbms::Mysql
            } else if upper.contains("CONVERT(") {
                dbms == Dbms::Mssql
            } else if upper.contains("CAST(") {
                dbms == Dbms::Postgres
            } else {
                true
            }
        }
        _ => true,
    }
}

/// Delay requested by a sleep call in `value`.
pub fn requested_delay(value: &str) -> Option<Duration> {
    if let Some(c) = SLEEP_ARG.captures(value) {
        return c[1].parse::<f64>().ok().map(Duration::from_secs_f64);
    }
    let c = WAITFOR_ARG.captures(value)?;
    let h: f64 = c[1].parse().ok()?;
    let m: f64 = c[2].parse().ok()?;
    let s: f64 = c[3].parse().ok()?;
    Some(Duration::from_secs_f64(h * 3600.0 + m * 60.0 + s))
}

/// Value of the first `CONCAT` of string literals in `value`.
fn evaluate_concat(value: &str) -> Option<String> {
    let args = CONCAT.captures(value)?;
    let mut out = String::new();
    for arg in args[1].split(',') {
        let arg = arg.trim();
        let lit = arg.strip_prefix('\'')?.strip_suffix('\'')?;
        out.push_str(lit);
    }
    Some(out)
}

/// True when every literal comparison in `value` holds.
fn conditions_hold(value: &str) -> bool {
    COMPARISON.captures_iter(value).all(|c| c[1] == c[2])
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(ch),
        }
    }
    out
}

fn records_table(extra_row: Option<&str>) -> String {
    let mut out = String::from("<table class=\"records\">\n");
    for (i, (first, last)) in RECORDS.iter().enumerate() {
        let _ = writeln!(
            out,
            "<tr><td>ID: {}</td><td>First name: {first}</td><td>Surname: {last}</td></tr>",
            i + 1
        );
    }
    if let Some(row) = extra_row {
        let _ = writeln!(out, "<tr><td>{}</td></tr>", escape(row));
    }
    out.push_str("</table>\n");
    out
}

/// Full HTML for `page` with an optional result section.
pub fn render_page(scenario: &Scenario, page: &Page, result: Option<&str>) -> String {
    let mut out = String::new();
    let title = if page.title.is_empty() { &page.path } else { &page.title };
    let _ = writeln!(
        out,
        "<!DOCTYPE html>\n<html><head><title>{} | {}</title></head><body>",
        escape(title),
        escape(&scenario.name)
    );
    let _ = writeln!(out, "<h1>{}</h1>", escape(title));
    if !page.text.is_empty() {
        let _ = writeln!(out, "<p>{}</p>", escape(&page.text));
    }
    if !page.links.is_empty() {
        out.push_str("<ul class=\"nav\">\n");
        for link in &page.links {
            let _ = writeln!(out, "<li><a href=\"{}\">{}</a></li>", escape(link), escape(link));
        }
        out.push_str("</ul>\n");
    }
    for form in &page.forms {
        let _ = writeln!(
            out,
            "<form action=\"{}\" method=\"{}\">",
            escape(&form.action),
            form.method
        );
        for field in &form.fields {
            let _ = writeln!(
                out,
                "<input type=\"text\" name=\"{}\" value=\"{}\">",
                escape(&field.name),
                escape(&field.value)
            );
        }
        out.push_str("<input type=\"submit\" value=\"Submit\">\n</form>\n");
    }
    if let Some(r) = result {
        let _ = write!(out, "<div class=\"result\">\n{r}</div>\n");
    }
    out.push_str("</body></html>\n");
    out
}

/// What the application does for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub body: String,
    /// Technique the value was read as; selects the latency overhead.
    pub class: Option<Technique>,
    /// Server-side sleep requested by an injected delay.
    pub injected_delay: Duration,
}

/// Reaction of a page that declares parameters; `param` is the declared
/// parameter under attack with its submitted value, if any was sent.
pub fn react(scenario: &Scenario, page: &Page, param: Option<(&ParamSpec, &str)>) -> Reaction {
    let Some((spec, value)) = param else {
        return Reaction {
            body: render_page(scenario, page, Some(&records_table(None))),
            class: None,
            injected_delay: Duration::ZERO,
        };
    };
    let class = classify(value);
    let active = class.filter(|t| spec.is_vulnerable_to(*t) && dialect_matches(value, *t, scenario.dbms));

    let mut injected_delay = Duration::ZERO;
    let mut result = match active {
        Some(Technique::BooleanBlind) if !conditions_hold(value) => "<p>No matching records.</p>\n".to_string(),
        Some(Technique::ErrorBased) => format!(
            "{}<pre class=\"sql-error\">{} near '{}' at line 1</pre>\n",
            records_table(None),
            spec.error_signature,
            escape(value)
        ),
        Some(Technique::UnionBased) | Some(Technique::InlineQuery) => records_table(evaluate_concat(value).as_deref()),
        Some(Technique::StackBased) | Some(Technique::TimeBlind) => {
            injected_delay = requested_delay(value).unwrap_or_default();
            records_table(None)
        }
        _ => records_table(None),
    };
    if spec.echo_input {
        let _ = writeln!(result, "<p>You searched for: {}</p>", escape(value));
    }
    Reaction {
        body: render_page(scenario, page, Some(&result)),
        class,
        injected_delay,
    }
}
