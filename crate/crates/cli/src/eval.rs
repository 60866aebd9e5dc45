//! `tpsqli eval`: fixed technique order against the learned order.

use std::fmt::Write as _;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tpsqli_core::executor::{run_fixed_order, run_round};
use tpsqli_core::metrics::{
    collect_time_data, coverage_curve, coverage_rows, false_positive_stats, fpm, improved_rate, summary_rows,
    time_to_last_vulnerability, write_metric_rows, z_score, EvaluationSummary, FalsePositiveStats, Fpm, ImprovedRate,
    Method, MetricRow, MetricsError,
};
use tpsqli_core::weights::{aggregate_rounds, weights_for, write_round_records};
use tpsqli_core::{Injector, PayloadCorpus, RoundResult, TargetProfile, Technique, TechniqueOutcome, TrialRecord};
use tpsqli_net::probe::{crawl_with, CrawlConfig, HttpClient, HttpConfig, HttpInjector, InjectionPoint};
use tpsqli_net::sim::{scripted_latency, serve, Scenario};
use url::Url;

use crate::{check_consent, http_config, load_corpus, positive, EvalArgs};

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub baseline_order: Vec<Technique>,
    /// Measured runs per method; at least 2.
    pub runs: usize,
    /// Rounds of isolated per-technique timing used to seed the learned
    /// profile; 0 skips it.
    pub time_rounds: usize,
    pub corpus: PayloadCorpus,
    pub depth: usize,
    pub http: HttpConfig,
}

impl EvalOptions {
    pub fn new(corpus: PayloadCorpus, runs: usize) -> Self {
        EvalOptions {
            baseline_order: Technique::ALL.to_vec(),
            runs,
            time_rounds: 0,
            corpus,
            depth: 1,
            http: HttpConfig::default(),
        }
    }
}

/// One measured run of either method.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub trials: Vec<TrialRecord>,
    pub order: String,
    /// Seconds from the first trial's start to the last exploit's end.
    pub time_to_last: Option<f64>,
    pub coverage: Vec<(f64, usize)>,
    pub false_positives: Option<FalsePositiveStats>,
}

impl RunStats {
    fn of(round: RoundResult) -> Self {
        let order = round.order_letters();
        let trials = round.trials;
        let origin = trials.first().map(|t| t.start).unwrap_or_default();
        RunStats {
            time_to_last: time_to_last_vulnerability(&trials, origin),
            coverage: coverage_curve(&trials, origin),
            false_positives: false_positive_stats(&trials),
            trials,
            order,
        }
    }

    pub fn exploited(&self) -> usize {
        self.coverage.last().map_or(0, |(_, k)| *k)
    }
}

#[derive(Debug, Clone)]
pub struct PointEvaluation {
    pub point: String,
    pub baseline: Vec<RunStats>,
    pub prioritized: Vec<RunStats>,
    /// Profile every prioritized run starts from.
    pub trained: TargetProfile,
    pub time_data: Vec<Vec<TechniqueOutcome>>,
}

impl PointEvaluation {
    /// Technique order implied by the trained weights.
    pub fn learned_order(&self) -> Vec<Technique> {
        self.trained.sw_vector.order()
    }

    pub fn found_anything(&self) -> bool {
        self.baseline.iter().chain(&self.prioritized).any(|r| r.exploited() > 0)
    }

    fn times(runs: &[RunStats]) -> Option<Vec<f64>> {
        runs.iter().map(|r| r.time_to_last).collect()
    }

    pub fn summary(&self, method: Method) -> Result<EvaluationSummary<f64>, MetricsError> {
        let runs = match method {
            Method::Baseline => &self.baseline,
            Method::Prioritized => &self.prioritized,
        };
        let times = Self::times(runs).unwrap_or_default();
        EvaluationSummary::from_times(&self.point, method, &times)
    }

    /// Z of prioritized against baseline; negative means prioritized is
    /// faster.
    pub fn z(&self) -> Result<f64, MetricsError> {
        z_score(&self.summary(Method::Prioritized)?, &self.summary(Method::Baseline)?)
    }

    /// FPM over all runs of a method, from summed counts. `None` when no
    /// run exploited anything.
    pub fn fpm(&self, method: Method) -> Option<Fpm<f64>> {
        let runs = match method {
            Method::Baseline => &self.baseline,
            Method::Prioritized => &self.prioritized,
        };
        let (executed, fp) = self.counts(runs)?;
        fpm(executed, fp).ok()
    }

    fn counts(&self, runs: &[RunStats]) -> Option<(u64, u64)> {
        let stats: Vec<&FalsePositiveStats> = runs.iter().filter_map(|r| r.false_positives.as_ref()).collect();
        if stats.is_empty() {
            return None;
        }
        Some((
            stats.iter().map(|s| s.executed).sum(),
            stats.iter().map(|s| s.false_positives).sum(),
        ))
    }

    pub fn improved_rate(&self) -> Option<Result<ImprovedRate<f64>, MetricsError>> {
        Some(improved_rate(
            self.fpm(Method::Prioritized)?,
            self.fpm(Method::Baseline)?,
        ))
    }
}

/// Evaluates one injection point through `injector`.
pub fn evaluate_point(point: &str, injector: &mut dyn Injector, opts: &EvalOptions) -> Result<PointEvaluation> {
    if opts.runs < 2 {
        bail!("--runs must be at least 2, got {}", opts.runs);
    }
    let payloads = opts.corpus.payloads();

    let mut baseline = Vec::with_capacity(opts.runs);
    for _ in 0..opts.runs {
        injector.reset();
        let r = run_fixed_order(point, &opts.baseline_order, payloads, injector);
        baseline.push(RunStats::of(r));
    }

    let time_data = if opts.time_rounds > 0 {
        collect_time_data(injector, payloads, opts.time_rounds)?
    } else {
        Vec::new()
    };
    let seed = if time_data.is_empty() {
        None
    } else {
        let mut p = TargetProfile::new(point);
        p.sw_vector = weights_for(&aggregate_rounds(&time_data)?)?;
        Some(p)
    };
    injector.reset();
    let trained = run_round(point, payloads, seed.as_ref(), injector).updated_profile;

    let mut prioritized = Vec::with_capacity(opts.runs);
    for _ in 0..opts.runs {
        injector.reset();
        let r = run_round(point, payloads, Some(&trained), injector);
        prioritized.push(RunStats::of(r));
    }

    Ok(PointEvaluation {
        point: point.to_string(),
        baseline,
        prioritized,
        trained,
        time_data,
    })
}

pub fn evaluate_points(
    client: &HttpClient,
    points: &[InjectionPoint],
    opts: &EvalOptions,
) -> Result<Vec<PointEvaluation>> {
    points
        .iter()
        .map(|p| {
            log::info!("evaluating {}", p.id());
            let mut inj = HttpInjector::new(client, p);
            evaluate_point(&p.id(), &mut inj, opts)
        })
        .collect()
}

/// Crawls `url` and evaluates every injection point found.
pub fn evaluate_url(url: &Url, opts: &EvalOptions) -> Result<Vec<PointEvaluation>> {
    let client = HttpClient::new(&opts.http);
    let mut cfg = CrawlConfig::new(url.clone());
    cfg.max_depth = opts.depth;
    cfg.request_timeout = opts.http.timeout;
    let crawled = crawl_with(&client, &cfg).with_context(|| format!("crawling {url}"))?;
    evaluate_points(&client, &crawled.points, opts)
}

/// Serves `scenario` with latencies multiplied by `latency_scale` and
/// evaluates it. The corpus in `opts` should carry the same delay scale.
pub fn evaluate_scenario(scenario: &Scenario, latency_scale: f64, opts: &EvalOptions) -> Result<Vec<PointEvaluation>> {
    let sim = serve(scripted_latency(scenario, latency_scale), 0)?;
    let url = Url::parse(&sim.base_url())?;
    evaluate_url(&url, opts)
}

fn slug(point: &str) -> String {
    let s: String = point
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

/// Writes summary.csv, fpm.csv, coverage.csv and one round-record file per
/// point with timing data.
pub fn write_outputs(dir: &Path, results: &[PointEvaluation]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut summary = Vec::new();
    let mut fpm_rows = Vec::new();
    let mut coverage = Vec::new();
    for r in results {
        if !r.found_anything() {
            log::info!("{}: nothing exploited, no timing summary", r.point);
        }
        for method in [Method::Baseline, Method::Prioritized] {
            if !r.found_anything() {
                break;
            }
            match r.summary(method) {
                Ok(s) => summary.extend(summary_rows(&s)),
                Err(e) => log::warn!("{} {method}: {e}", r.point),
            }
        }
        let z = match r.z() {
            Ok(z) => z.to_string(),
            Err(e) => {
                if r.found_anything() {
                    log::warn!("{}: Z not available: {e}", r.point);
                }
                "undefined".to_string()
            }
        };
        summary.push(MetricRow::new(&r.point, "prioritized-vs-baseline", "all", "z", z));

        for (method, runs) in [(Method::Baseline, &r.baseline), (Method::Prioritized, &r.prioritized)] {
            if let Some((executed, fp)) = r.counts(runs) {
                fpm_rows.push(MetricRow::new(&r.point, method, "all", "executed", executed));
                fpm_rows.push(MetricRow::new(&r.point, method, "all", "false_positives", fp));
            }
            if let Some(f) = r.fpm(method) {
                fpm_rows.push(MetricRow::new(&r.point, method, "all", "fpm", f));
            }
            for (i, run) in runs.iter().enumerate() {
                coverage.extend(coverage_rows(&r.point, method, i + 1, &run.coverage));
            }
        }
        let ir = match r.improved_rate() {
            Some(Ok(ir)) => ir.to_string(),
            Some(Err(_)) | None => "undefined".to_string(),
        };
        fpm_rows.push(MetricRow::new(&r.point, Method::Prioritized, "all", "ir_percent", ir));

        if !r.time_data.is_empty() {
            let path = dir.join(format!("rounds-{}.csv", slug(&r.point)));
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_round_records(f, &r.time_data)?;
        }
    }
    for (name, rows) in [
        ("summary.csv", summary),
        ("fpm.csv", fpm_rows),
        ("coverage.csv", coverage),
    ] {
        let path = dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_metric_rows(f, &rows).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Console table, one block per point.
pub fn render(results: &[PointEvaluation]) -> String {
    let mut out = String::new();
    for r in results {
        let learned: String = r.learned_order().iter().map(|t| t.letter()).collect();
        let _ = writeln!(out, "{}", r.point);
        let _ = writeln!(out, "  learned order {learned}  weights {}", r.trained.sw_vector);
        for method in [Method::Baseline, Method::Prioritized] {
            match r.summary(method) {
                Ok(s) => {
                    let _ = writeln!(
                        out,
                        "  {:<12} t_mean {:>8.3}s  t_std {:>7.3}  t_min {:>8.3}  t_max {:>8.3}  fpm {}",
                        method.to_string(),
                        s.t_mean,
                        s.t_std,
                        s.t_min,
                        s.t_max,
                        r.fpm(method).map_or("-".to_string(), |f| format!("{:.4}", f.value()))
                    );
                }
                Err(_) => {
                    let _ = writeln!(out, "  {:<12} no vulnerabilities found", method.to_string());
                }
            }
        }
        if let Ok(z) = r.z() {
            let _ = writeln!(out, "  Z {z:.2}");
        }
        if let Some(Ok(ir)) = r.improved_rate() {
            let _ = writeln!(out, "  IR {ir}");
        }
    }
    out
}

pub fn run_eval_command(args: &EvalArgs) -> Result<Vec<PointEvaluation>> {
    let scale = positive(args.latency_scale, "latency-scale")?;
    let mut opts = EvalOptions::new(load_corpus(&args.corpus, scale)?, args.runs);
    opts.baseline_order = Technique::parse_order(&args.baseline_order)?;
    opts.time_rounds = args.time_rounds.unwrap_or(args.runs);
    opts.depth = args.depth;
    opts.http = http_config(args.timeout, 0.0, tpsqli_net::probe::DEFAULT_USER_AGENT)?;

    let results = match (&args.scenario, &args.url) {
        (Some(name), _) => evaluate_scenario(&Scenario::load(name)?, scale, &opts)?,
        (None, Some(url)) => {
            check_consent(url, args.i_own_this_target)?;
            evaluate_url(url, &opts)?
        }
        (None, None) => bail!("either --scenario or --url is required"),
    };
    write_outputs(&args.out, &results)?;
    print!("{}", render(&results));
    println!("results written to {}", PathBuf::from(&args.out).display());
    Ok(results)
}
