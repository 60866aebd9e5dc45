//! `tpsqli scan`: crawl, test every injection point, learn, report.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use tpsqli_core::metrics::coverage_curve;
use tpsqli_core::report::Report;
use tpsqli_core::store::{feedback_path, load_feedback, save_feedback, FeedbackLock};
use tpsqli_core::{executor::run_round, RoundResult, TraceEntry, TrialRecord};
use tpsqli_net::probe::{crawl_with, CrawlConfig, HttpClient, HttpConfig, HttpInjector};
use url::Url;

use crate::{check_consent, http_config, load_corpus, positive, ScanArgs};

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub url: Url,
    pub depth: usize,
    pub feedback: PathBuf,
    pub report_dir: Option<PathBuf>,
    pub corpus: String,
    pub http: HttpConfig,
    pub delay_scale: f64,
    pub i_own_this_target: bool,
}

impl ScanOptions {
    /// Defaults for a scan of `url` with the given feedback file.
    pub fn new(url: Url, feedback: impl Into<PathBuf>) -> Self {
        ScanOptions {
            url,
            depth: 1,
            feedback: feedback.into(),
            report_dir: None,
            corpus: "default".into(),
            http: HttpConfig::default(),
            delay_scale: 1.0,
            i_own_this_target: false,
        }
    }

    pub fn from_args(args: &ScanArgs) -> Result<Self> {
        Ok(ScanOptions {
            url: args.url.clone(),
            depth: args.depth,
            feedback: feedback_path(args.feedback.as_deref()),
            report_dir: args.report.clone(),
            corpus: args.corpus.clone(),
            http: http_config(args.timeout, args.politeness, &args.user_agent)?,
            delay_scale: positive(args.delay_scale, "delay-scale")?,
            i_own_this_target: args.i_own_this_target,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScanOutcome {
    /// One round per injection point, in crawl order.
    pub rounds: Vec<RoundResult>,
    pub report: Report,
    pub pages_visited: usize,
    pub warnings: Vec<String>,
    /// Cumulative exploits over the whole scan, seconds from scan start.
    pub coverage: Vec<(f64, usize)>,
}

impl ScanOutcome {
    /// Console summary: one line per injection point, then totals.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for r in &self.rounds {
            let p = &r.updated_profile;
            let _ = writeln!(
                out,
                "{}  order {}  trials {}  exploited {}",
                p.target_id,
                r.order_letters(),
                r.trials.len(),
                r.vulnerabilities.len()
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        let _ = writeln!(
            out,
            "{} pages, {} injection points, {} vulnerabilities",
            self.pages_visited,
            self.rounds.len(),
            self.report.vulnerabilities.len()
        );
        out
    }
}

fn trace_block(rounds: &[RoundResult]) -> String {
    let mut out = format!("point,{}\n", TraceEntry::HEADER);
    for r in rounds {
        let point = &r.updated_profile.target_id;
        for e in &r.trace {
            let _ = writeln!(out, "\"{}\",{}", point.replace('"', "\"\""), e.to_csv_line());
        }
    }
    out
}

fn coverage_block(curve: &[(f64, usize)]) -> String {
    let mut out = String::from("elapsed_s,vulnerabilities\n");
    for (t, k) in curve {
        let _ = writeln!(out, "{t:.6},{k}");
    }
    out
}

/// Runs one scan: crawl, one prioritized round per injection point with
/// the stored profile, then saves feedback and writes the report.
pub fn run_scan(opts: &ScanOptions) -> Result<ScanOutcome> {
    check_consent(&opts.url, opts.i_own_this_target)?;
    let corpus = load_corpus(&opts.corpus, opts.delay_scale)?;

    let _lock = FeedbackLock::acquire(&opts.feedback)?;
    let mut store = load_feedback(&opts.feedback)?;

    let client = HttpClient::new(&opts.http);
    let mut crawl_cfg = CrawlConfig::new(opts.url.clone());
    crawl_cfg.max_depth = opts.depth;
    crawl_cfg.request_timeout = opts.http.timeout;
    crawl_cfg.politeness_delay = opts.http.politeness;
    let crawled = crawl_with(&client, &crawl_cfg).with_context(|| format!("crawling {}", opts.url))?;
    let mut warnings = crawled.warnings.clone();
    if crawled.points.is_empty() {
        log::warn!("no injection points found from {}", opts.url);
    }

    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut report = Report::new(opts.url.as_str(), timestamp);
    let mut rounds = Vec::with_capacity(crawled.points.len());
    for point in &crawled.points {
        let id = point.id();
        log::info!("testing {id}");
        let mut injector = HttpInjector::new(&client, point);
        let result = run_round(&id, corpus.payloads(), store.profile(&id), &mut injector);
        warnings.extend(result.warnings.iter().cloned());
        store.record_round(&result);
        report.add_round(&result);
        rounds.push(result);
    }

    let all: Vec<TrialRecord> = rounds.iter().flat_map(|r| r.trials.iter().cloned()).collect();
    let coverage = all
        .first()
        .map(|first| coverage_curve(&all, first.start))
        .unwrap_or_default();
    report.csv_blocks.push(("order trace".into(), trace_block(&rounds)));
    report.csv_blocks.push(("coverage".into(), coverage_block(&coverage)));

    save_feedback(&store, &opts.feedback)?;

    if let Some(dir) = &opts.report_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, report.render_text()).with_context(|| format!("writing {}", txt.display()))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, report.render_csv()).with_context(|| format!("writing {}", csv.display()))?;
    }

    Ok(ScanOutcome {
        rounds,
        report,
        pages_visited: crawled.pages_visited,
        warnings,
        coverage,
    })
}
