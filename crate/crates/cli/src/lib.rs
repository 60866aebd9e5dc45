//! `tpsqli` command-line front end.

pub mod eval;
pub mod scan;

use std::ffi::OsString;
use std::io::Read;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tpsqli_core::weights::{aggregate_rounds, read_round_records, weights_for};
use tpsqli_core::{PayloadCorpus, Technique};
use tpsqli_net::probe::{HttpConfig, DEFAULT_USER_AGENT};
use tpsqli_net::sim::{scripted_latency, serve, Scenario};
use url::Url;

/// Exit code when a scan found vulnerabilities.
pub const EXIT_VULNERABLE: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "tpsqli",
    version,
    about = "SQL injection tester with feedback-driven payload prioritization"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl a site, test every injection point and update the feedback file.
    Scan(ScanArgs),
    /// Compare a fixed technique order with the learned order.
    Eval(EvalArgs),
    /// Run the simulated vulnerable application.
    Sim(SimArgs),
    /// Compute a weight vector from a round-record CSV file.
    Weights(WeightsArgs),
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Start page of the crawl.
    #[arg(long)]
    pub url: Url,
    /// Link hops to follow from the start page.
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Feedback file [default: $TPSQLI_FEEDBACK or ./feedback.json].
    #[arg(long)]
    pub feedback: Option<PathBuf>,
    /// Directory for report.txt and report.csv.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Payload corpus: "default" or a TOML file.
    #[arg(long, default_value = "default")]
    pub corpus: String,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// Minimum pause between requests in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub politeness: f64,
    /// Required for any host other than loopback.
    #[arg(long)]
    pub i_own_this_target: bool,
    #[arg(long, default_value = DEFAULT_USER_AGENT)]
    pub user_agent: String,
    /// Multiplies every payload delay.
    #[arg(long, default_value_t = 1.0)]
    pub delay_scale: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Bundled scenario name or scenario file, served locally.
    #[arg(long, conflicts_with = "url")]
    pub scenario: Option<String>,
    /// Existing target to evaluate instead of a scenario.
    #[arg(long)]
    pub url: Option<Url>,
    #[arg(long, default_value = "BEUSTQ")]
    pub baseline_order: String,
    /// Measured runs per method.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Rounds of per-technique timing data [default: same as --runs].
    #[arg(long)]
    pub time_rounds: Option<usize>,
    #[arg(long, default_value = "eval-out")]
    pub out: PathBuf,
    /// Multiplies scenario latencies and payload delays.
    #[arg(long, default_value_t = 1.0)]
    pub latency_scale: f64,
    #[arg(long, default_value = "default")]
    pub corpus: String,
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long)]
    pub i_own_this_target: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Bundled scenario name or scenario file.
    #[arg(long)]
    pub scenario: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = 1.0)]
    pub latency_scale: f64,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Round-record CSV (round,technique,succeeded,time_s); "-" for stdin.
    pub records: PathBuf,
    /// Print CSV instead of a table.
    #[arg(long)]
    pub csv: bool,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Scan(args) => {
            let outcome = scan::run_scan(&scan::ScanOptions::from_args(&args)?)?;
            print!("{}", outcome.summary());
            Ok(if outcome.report.vulnerabilities.is_empty() {
                0
            } else {
                EXIT_VULNERABLE
            })
        }
        Command::Eval(args) => eval::run_eval_command(&args).map(|_| 0),
        Command::Sim(args) => run_sim(&args).map(|_| 0),
        Command::Weights(args) => run_weights(&args).map(|_| 0),
    }
}

pub(crate) fn seconds(value: f64, flag: &str) -> Result<Duration> {
    if !(value.is_finite() && value >= 0.0) {
        bail!("--{flag} must be a non-negative number of seconds, got {value}");
    }
    Ok(Duration::from_secs_f64(value))
}

pub(crate) fn positive(value: f64, flag: &str) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        bail!("--{flag} must be positive, got {value}");
    }
    Ok(value)
}

pub(crate) fn http_config(timeout: f64, politeness: f64, user_agent: &str) -> Result<HttpConfig> {
    let timeout = seconds(timeout, "timeout")?;
    if timeout.is_zero() {
        bail!("--timeout must be positive");
    }
    Ok(HttpConfig {
        timeout,
        politeness: seconds(politeness, "politeness")?,
        user_agent: user_agent.to_string(),
    })
}

pub(crate) fn load_corpus(source: &str, delay_scale: f64) -> Result<PayloadCorpus> {
    let corpus = tpsqli_core::catalog::load_corpus(source).with_context(|| format!("loading corpus {source:?}"))?;
    Ok(if delay_scale == 1.0 {
        corpus
    } else {
        corpus.with_delay_scale(delay_scale)
    })
}

/// True for `localhost` and loopback addresses.
pub fn is_loopback(url: &Url) -> bool {
    match url.host() {
        Some(url::Host::Domain(d)) => d.eq_ignore_ascii_case("localhost"),
        Some(url::Host::Ipv4(ip)) => ip.is_loopback(),
        Some(url::Host::Ipv6(ip)) => ip.is_loopback(),
        None => false,
    }
}

pub(crate) fn check_consent(url: &Url, consent: bool) -> Result<()> {
    if !is_loopback(url) && !consent {
        bail!(
            "{} is not a loopback address; pass --i-own-this-target to confirm you are authorized to test it",
            url.host_str().unwrap_or("target")
        );
    }
    Ok(())
}

fn run_sim(args: &SimArgs) -> Result<()> {
    let scale = positive(args.latency_scale, "latency-scale")?;
    let scenario = Scenario::load(&args.scenario)?;
    let handle = serve(scripted_latency(&scenario, scale), args.port)?;
    println!("serving scenario {} at {}", scenario.name, handle.base_url());
    for p in &scenario.params {
        let vulns: String = p.vulnerable.iter().map(|t| t.letter()).collect();
        println!(
            "  {} {} {:<12} vulnerable to [{}]",
            p.method,
            p.path,
            p.name,
            if vulns.is_empty() { "-".to_string() } else { vulns }
        );
    }
    handle.wait();
    Ok(())
}

fn run_weights(args: &WeightsArgs) -> Result<()> {
    let text = if args.records.as_os_str() == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(&args.records).with_context(|| format!("reading {}", args.records.display()))?
    };
    let rounds = read_round_records(text.as_bytes())?;
    let agg = aggregate_rounds(&rounds)?;
    let w = weights_for(&agg)?;
    let ok = |t: Technique| {
        rounds
            .iter()
            .filter(|r| r.iter().any(|o| o.technique == t && o.succeeded))
            .count()
    };
    if args.csv {
        println!("technique,succeeded_rounds,rounds,mean_time_s,weight");
        for o in &agg {
            println!(
                "{},{},{},{},{}",
                o.technique,
                ok(o.technique),
                rounds.len(),
                o.exploit_time,
                w.get(o.technique)
            );
        }
    } else {
        println!(
            "{:<10} {:>9} {:>12} {:>8}",
            "technique", "succeeded", "mean time s", "weight"
        );
        for o in &agg {
            println!(
                "{:<10} {:>9} {:>12.2} {:>8.2}",
                o.technique,
                format!("{}/{}", ok(o.technique), rounds.len()),
                o.exploit_time,
                w.get(o.technique)
            );
        }
        println!("{:<10} {:>9} {:>12} {:>8.2}", "sum", "", "", w.sum());
        let order: String = w.order().iter().map(|t| t.letter()).collect();
        println!("order: {order}");
    }
    Ok(())
}
