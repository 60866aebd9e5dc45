//! Scan report in text and CSV form.

use std::fmt::Write as _;

use crate::catalog::Technique;
use crate::executor::{Finding, RoundResult};
use crate::WeightVector;

pub fn remediation(t: Technique) -> &'static str {
    match t {
        Technique::BooleanBlind => {
            "Use parameterized queries; never build conditions from request input. \
             Return identical responses for empty and non-empty result sets where possible."
        }
        Technique::ErrorBased => {
            "Use parameterized queries and stop sending database error messages to clients; \
             log them server-side instead."
        }
        Technique::UnionBased => {
            "Use parameterized queries and restrict the database account to the tables the page needs."
        }
        Technique::StackBased => {
            "Use parameterized queries and disable multi-statement execution in the database driver."
        }
        Technique::TimeBlind => {
            "Use parameterized queries; enforce statement timeouts and revoke access to sleep/benchmark functions."
        }
        Technique::InlineQuery => {
            "Use parameterized queries; validate input types strictly so sub-selects cannot reach the query."
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub point: String,
    pub weights: WeightVector,
    pub trials: usize,
    pub order: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub target: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub vulnerabilities: Vec<Finding>,
    pub points: Vec<PointReport>,
    /// Extra named CSV sections (order traces, coverage curves).
    pub csv_blocks: Vec<(String, String)>,
}

impl Report {
    pub fn new(target: impl Into<String>, timestamp: u64) -> Self {
        Report {
            target: target.into(),
            timestamp,
            vulnerabilities: Vec::new(),
            points: Vec::new(),
            csv_blocks: Vec::new(),
        }
    }

    pub fn add_round(&mut self, result: &RoundResult) {
        self.vulnerabilities.extend(result.vulnerabilities.iter().cloned());
        self.points.push(PointReport {
            point: result.updated_profile.target_id.clone(),
            weights: result.updated_profile.sw_vector.clone(),
            trials: result.trials.len(),
            order: result.order_letters(),
        });
    }

    fn techniques_found(&self) -> Vec<Technique> {
        Technique::ALL
            .into_iter()
            .filter(|t| self.vulnerabilities.iter().any(|v| v.technique == *t))
            .collect()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "SQL injection report for {}", self.target);
        let _ = writeln!(out, "scan time (unix): {}", self.timestamp);
        let _ = writeln!(out, "injection points tested: {}", self.points.len());
        let _ = writeln!(out, "vulnerabilities: {}", self.vulnerabilities.len());
        let _ = writeln!(out);

        for v in &self.vulnerabilities {
            let _ = writeln!(
                out,
                "  [{}] {} payload {} at {}\n      evidence: {}",
                v.technique,
                v.technique.description(),
                v.payload_id,
                v.point,
                v.evidence
            );
        }
        if !self.vulnerabilities.is_empty() {
            let _ = writeln!(out);
        }

        let _ = writeln!(out, "weights per injection point (order B E U S T Q):");
        for p in &self.points {
            let cells: Vec<String> = p.weights.iter().map(|(_, w)| format!("{w:.2}")).collect();
            let _ = writeln!(out, "  {}  [{}]  order {}", p.point, cells.join(" "), p.order);
        }

        let found = self.techniques_found();
        if !found.is_empty() {
            let _ = writeln!(out, "\nrecommended fixes:");
            for t in found {
                let _ = writeln!(out, "  {}: {}", t.description(), remediation(t));
            }
        }
        out
    }

    /// Machine-readable sections separated by `# name` lines.
    pub fn render_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# vulnerabilities\npoint,technique,payload,evidence\n");
        for v in &self.vulnerabilities {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                csv_field(&v.point),
                v.technique,
                csv_field(&v.payload_id),
                csv_field(&v.evidence)
            );
        }
        out.push_str("# weights\npoint,B,E,U,S,T,Q\n");
        for p in &self.points {
            let cells: Vec<String> = p.weights.iter().map(|(_, w)| w.to_string()).collect();
            let _ = writeln!(out, "{},{}", csv_field(&p.point), cells.join(","));
        }
        for (name, block) in &self.csv_blocks {
            let _ = writeln!(out, "# {name}");
            out.push_str(block);
            if !block.ends_with('\n') {
                out.push('\n');
            }
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_and_csv_list_findings() {
        let mut r = Report::new("http://127.0.0.1:8080/", 0);
        r.vulnerabilities.push(Finding {
            point: "GET http://127.0.0.1:8080/item#id".into(),
            payload_id: "T1".into(),
            technique: Technique::TimeBlind,
            evidence: "latency 1.02s vs 0.01s, control".into(),
        });
        let text = r.render_text();
        assert!(text.contains("vulnerabilities: 1"));
        assert!(text.contains("Time-based blind"));
        let csv = r.render_csv();
        assert!(csv.contains("GET http://127.0.0.1:8080/item#id,T,T1,\"latency 1.02s vs 0.01s, control\""));
    }
}
