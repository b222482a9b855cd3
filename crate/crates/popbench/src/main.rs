//! Command-line entry point wiring the toolkit into reproducible runs.
//!
//! Every subcommand writes its data outputs plus a `manifest.json` recording
//! the resolved configuration, input digests and output digests. Re-running
//! with identical inputs and flags reproduces byte-identical data outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use popbench::analysis::{self, PopularSetCache, Scale, UserGroupSpec};
use popbench::corpus::{ingest, Corpus, Format, IngestOptions, IngestReport};
use popbench::eval::{self, CandidateContext, CandidatePolicy, EvalConfig, ReportDoc};
use popbench::manifest::RunManifest;
use popbench::models::{Decay, ScorerConfig, ScorerKind};
use popbench::splits;
use popbench::synth::{self, SynthConfig};
use popbench::{Error, TemporalIndex, Timestamp};

const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_DEGENERATE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "popbench",
    version,
    about = "Time-aware popularity baselines over timestamped interaction logs",
    after_help = "Exit codes: 0 ok, 2 usage error, 3 input error, 4 degenerate configuration.\n\
                  POPBENCH_DATA_DIR resolves relative input paths that do not exist locally.\n\
                  Durations accept 90, 90s, 15min, 2h, 30d, 2w, 1mo (months use --month-seconds)."
)]
struct Cli {
    /// Cap worker threads (default: all cores). Outputs are identical for
    /// any worker count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus summary: counts, time span, ingest accounting
    Stats(StatsArgs),
    /// Partition a corpus into train/test under a named scheme
    Split(SplitArgs),
    /// Rank test instances with a popularity scorer and report HR/NDCG
    Eval(EvalArgs),
    /// User-activity analyses: daily curves, tendency heatmap, group metrics
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus with controllable popularity drift
    Synth(SynthArgs),
    /// Relative improvements of reports over a baseline report
    Compare(CompareArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Interaction log CSV (header row required)
    #[arg(long)]
    input: PathBuf,
    /// Input schema
    #[arg(long, default_value = "movielens", value_parser = ["movielens", "generic"])]
    format: String,
    /// Column name for the user id (generic format)
    #[arg(long, default_value = "userId")]
    user_col: String,
    /// Column name for the item id (generic format)
    #[arg(long, default_value = "movieId")]
    item_col: String,
    /// Column name for the timestamp (generic format)
    #[arg(long, default_value = "timestamp")]
    time_col: String,
    /// Column name for the rating (generic format; omit for none)
    #[arg(long)]
    rating_col: Option<String>,
    /// Skip malformed rows (counted) instead of failing on the first
    #[arg(long)]
    lenient: bool,
}

impl InputArgs {
    fn options(&self) -> IngestOptions {
        let format = match self.format.as_str() {
            "movielens" => Format::MovieLens,
            _ => Format::Generic {
                user_col: self.user_col.clone(),
                item_col: self.item_col.clone(),
                timestamp_col: self.time_col.clone(),
                rating_col: self.rating_col.clone(),
            },
        };
        IngestOptions {
            format,
            lenient: self.lenient,
        }
    }

    fn load(&self, manifest: &mut RunManifest) -> popbench::Result<(Corpus, IngestReport)> {
        let path = resolve_input(&self.input)?;
        manifest.record_input(&path)?;
        let file = fs::File::open(&path)?;
        let (corpus, report) = ingest(std::io::BufReader::new(file), &self.options())?;
        if report.duplicates_dropped > 0 {
            eprintln!(
                "warning: dropped {} duplicate (user,item,timestamp) rows",
                report.duplicates_dropped
            );
        }
        if report.malformed_rows > 0 {
            eprintln!("warning: skipped {} malformed rows", report.malformed_rows);
        }
        Ok((corpus, report))
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::json!({
            "input": self.input.display().to_string(),
            "format": self.options().format,
            "lenient": self.lenient,
        })
    }
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Also write the normalized corpus snapshot as corpus.csv
    #[arg(long)]
    snapshot: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Partition scheme
    #[arg(long, value_parser = ["leave-one-out", "random-holdout", "per-user-holdout"])]
    scheme: String,
    /// Train fraction for the holdout schemes
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Seed for random-holdout
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Keep only test instances inside START..END (dates are midnight UTC)
    #[arg(long, value_parser = parse_window)]
    eval_window: Option<(Timestamp, Timestamp)>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScorerArgs {
    /// Popularity model
    #[arg(long, value_parser = parse_scorer_kind)]
    scorer: ScorerKind,
    /// RecentPop window length (duration; months resolve via --month-seconds)
    #[arg(long, default_value = "1mo")]
    delta_t: String,
    /// DecayPop lookback in months
    #[arg(long, default_value_t = 6)]
    horizon_months: u32,
    /// Seconds per month
    #[arg(long, default_value_t = popbench::models::MONTH_SECONDS)]
    month_seconds: i64,
    /// "exp" or an explicit comma-separated weight list (most recent first)
    #[arg(long, default_value = "exp")]
    decay: String,
}

impl ScorerArgs {
    fn config(&self) -> popbench::Result<ScorerConfig> {
        let delta_t_seconds = parse_duration(&self.delta_t)?.resolve(self.month_seconds);
        let decay = if self.decay == "exp" {
            Decay::Exp
        } else {
            let weights = self
                .decay
                .split(',')
                .map(|w| {
                    w.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad decay weight {w:?}")))
                })
                .collect::<popbench::Result<Vec<f64>>>()?;
            Decay::Weights(weights)
        };
        let cfg = ScorerConfig {
            kind: self.scorer,
            delta_t_seconds,
            horizon_months: self.horizon_months,
            month_seconds: self.month_seconds,
            decay,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Split directory written by `popbench split`
    #[arg(long)]
    split: PathBuf,
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Cutoffs, comma separated
    #[arg(long, default_value = "5,10")]
    k: String,
    /// Which items are rankable at a query
    #[arg(long, default_value = "all-items", value_parser = parse_policy)]
    candidates: CandidatePolicy,
    /// Also dump per-instance ranks to records.csv
    #[arg(long)]
    records: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Cohort window START..END over first-interaction times
    /// (default: the last five 365-day years of the corpus span)
    #[arg(long, value_parser = parse_window)]
    cohort_window: Option<(Timestamp, Timestamp)>,
    /// Number of user groups
    #[arg(long, default_value_t = 10)]
    groups: usize,
    /// Group bin spacing
    #[arg(long, default_value = "log", value_parser = ["log", "linear"])]
    scale: String,
    /// Popular-set size
    #[arg(long, default_value_t = 200)]
    top_n: usize,
    /// Popular-set cache granularity (duration)
    #[arg(long, default_value = "1d")]
    granularity: String,
    /// Cutoffs for the per-group metrics
    #[arg(long, default_value = "5,10")]
    k: String,
    /// DecayPop lookback in months
    #[arg(long, default_value_t = 6)]
    horizon_months: u32,
    /// Seconds per month
    #[arg(long, default_value_t = popbench::models::MONTH_SECONDS)]
    month_seconds: i64,
    /// "exp" or an explicit comma-separated weight list
    #[arg(long, default_value = "exp")]
    decay: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    users: u32,
    #[arg(long, default_value_t = 200)]
    items: u32,
    /// Generated time range (duration)
    #[arg(long, default_value = "6mo")]
    span: String,
    /// First generated timestamp (integer seconds or a date)
    #[arg(long, default_value = "1000000000", value_parser = parse_time_point)]
    start_time: Timestamp,
    /// Number of popularity regimes
    #[arg(long, default_value_t = 3)]
    epochs: u32,
    /// Regime concentration; 0 = stationary uniform
    #[arg(long, default_value_t = 0.0)]
    sharpness: f64,
    /// Minimum interactions per user
    #[arg(long, default_value_t = 20)]
    floor: u32,
    /// Pareto tail exponent of per-user activity
    #[arg(long, default_value_t = 2.5)]
    exponent: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Baseline report.json
    #[arg(long)]
    baseline: PathBuf,
    /// Reports to compare against the baseline
    #[arg(long = "report", required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // ignore the error if a pool already exists (tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let result = match cli.command {
        Command::Stats(args) => run_stats(args),
        Command::Split(args) => run_split(args),
        Command::Eval(args) => run_eval(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Synth(args) => run_synth(args),
        Command::Compare(args) => run_compare(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("popbench: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(Error::Degenerate(_)) => EXIT_DEGENERATE,
        Some(_) => EXIT_INPUT,
        None => EXIT_INPUT,
    }
}

/// Relative inputs that do not exist locally are retried under
/// POPBENCH_DATA_DIR.
fn resolve_input(path: &Path) -> popbench::Result<PathBuf> {
    if path.exists() {
        return Ok(path.to_path_buf());
    }
    if path.is_relative() {
        if let Ok(base) = std::env::var("POPBENCH_DATA_DIR") {
            let candidate = Path::new(&base).join(path);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("input not found: {}", path.display()),
    )))
}

enum DurationSpec {
    Seconds(i64),
    Months(i64),
}

impl DurationSpec {
    fn resolve(&self, month_seconds: i64) -> i64 {
        match *self {
            DurationSpec::Seconds(s) => s,
            DurationSpec::Months(m) => m * month_seconds,
        }
    }
}

fn parse_duration(s: &str) -> popbench::Result<DurationSpec> {
    let s = s.trim();
    let bad = || {
        Error::Config(format!(
            "bad duration {s:?} (try 90s, 15min, 2h, 30d, 2w, 1mo)"
        ))
    };
    let split_at = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (num, unit) = s.split_at(split_at);
    let value: i64 = num.parse().map_err(|_| bad())?;
    if value <= 0 {
        return Err(bad());
    }
    let spec = match unit {
        "" | "s" => DurationSpec::Seconds(value),
        "min" => DurationSpec::Seconds(value * 60),
        "h" => DurationSpec::Seconds(value * 3_600),
        "d" => DurationSpec::Seconds(value * 86_400),
        "w" => DurationSpec::Seconds(value * 7 * 86_400),
        "mo" => DurationSpec::Months(value),
        _ => return Err(bad()),
    };
    Ok(spec)
}

/// Integer seconds, YYYY-MM-DD (midnight UTC) or RFC 3339.
fn parse_time_point(s: &str) -> Result<Timestamp, String> {
    let s = s.trim();
    if let Ok(ts) = s.parse::<i64>() {
        return Ok(ts);
    }
    if let Ok(date) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(date
            .and_hms_opt(0, 0, 0)
            .expect("midnight exists")
            .and_utc()
            .timestamp());
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    Err(format!(
        "bad time point {s:?} (integer seconds, YYYY-MM-DD or RFC 3339)"
    ))
}

fn parse_window(s: &str) -> Result<(Timestamp, Timestamp), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("bad window {s:?} (expected START..END)"))?;
    let start = parse_time_point(a)?;
    let end = parse_time_point(b)?;
    if start >= end {
        return Err(format!("window start {start} must be < end {end}"));
    }
    Ok((start, end))
}

fn parse_scorer_kind(s: &str) -> Result<ScorerKind, String> {
    match s {
        "most-pop" | "most_pop" => Ok(ScorerKind::MostPop),
        "recent-pop" | "recent_pop" => Ok(ScorerKind::RecentPop),
        "decay-pop" | "decay_pop" => Ok(ScorerKind::DecayPop),
        _ => Err(format!("unknown scorer {s:?}")),
    }
}

fn parse_policy(s: &str) -> Result<CandidatePolicy, String> {
    match s {
        "all-items" | "all_items" => Ok(CandidatePolicy::AllItems),
        "released-before-t0" | "released_before_t0" => Ok(CandidatePolicy::ReleasedBeforeT0),
        "exclude-train-seen" | "exclude_train_seen" => Ok(CandidatePolicy::ExcludeTrainSeen),
        "released-and-unseen" | "released_and_unseen" => Ok(CandidatePolicy::ReleasedAndUnseen),
        _ => Err(format!("unknown candidate policy {s:?}")),
    }
}

fn parse_k_list(s: &str) -> popbench::Result<Vec<usize>> {
    s.split(',')
        .map(|k| {
            k.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad K {k:?}")))
        })
        .collect()
}

fn write_json(path: &Path, value: &serde_json::Value) -> popbench::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn finalize(
    mut manifest: RunManifest,
    out: &Path,
    data_files: &[PathBuf],
    started: Instant,
) -> popbench::Result<()> {
    for f in data_files {
        manifest.record_output(f)?;
    }
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    manifest.write(out)?;
    Ok(())
}

fn run_stats(args: StatsArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(
        "stats",
        serde_json::json!({ "input": args.input.config_json(), "snapshot": args.snapshot }),
    );
    let (corpus, report) = args.input.load(&mut manifest)?;
    let stats = corpus.stats();
    let doc = serde_json::json!({
        "users": stats.users,
        "items": stats.items,
        "interactions": stats.interactions,
        "t_min": stats.t_min,
        "t_max": stats.t_max,
        "duplicates_dropped": report.duplicates_dropped,
        "malformed_rows": report.malformed_rows,
    });
    let stats_path = args.out.join("stats.json");
    write_json(&stats_path, &doc)?;
    let mut outputs = vec![stats_path];
    if args.snapshot {
        let snapshot_path = args.out.join("corpus.csv");
        corpus.write_csv(fs::File::create(&snapshot_path)?)?;
        outputs.push(snapshot_path);
    }
    finalize(manifest, &args.out, &outputs, started)?;
    Ok(())
}

fn run_split(args: SplitArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(
        "split",
        serde_json::json!({
            "input": args.input.config_json(),
            "scheme": args.scheme,
            "ratio": args.ratio,
            "seed": args.seed,
            "eval_window": args.eval_window,
        }),
    );
    let (corpus, _) = args.input.load(&mut manifest)?;
    let mut split = match args.scheme.as_str() {
        "leave-one-out" => splits::leave_one_out(&corpus),
        "random-holdout" => splits::random_holdout(&corpus, args.ratio, args.seed)?,
        _ => splits::per_user_holdout(&corpus, args.ratio)?,
    };
    if let Some(window) = args.eval_window {
        split = splits::filter_eval_window(split, window)?;
    }
    splits::write_split(&args.out, &corpus, &split)?;
    let outputs = vec![
        args.out.join("train.csv"),
        args.out.join("test.csv"),
        args.out.join("split.json"),
    ];
    finalize(manifest, &args.out, &outputs, started)?;
    println!(
        "split: {} train, {} test ({} users excluded, {} outside window)",
        split.train.len(),
        split.test.len(),
        split.excluded_users,
        split.removed_by_window
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)?;
    let scorer = args.scorer.config()?;
    let k_values = parse_k_list(&args.k)?;
    let cfg = EvalConfig {
        k_values,
        candidate_policy: args.candidates,
        scorer,
    };
    let mut manifest = RunManifest::new(
        "eval",
        serde_json::json!({
            "split_dir": args.split.display().to_string(),
            "config": cfg,
            "records": args.records,
        }),
    );
    let split_dir = resolve_input(&args.split)?;
    for name in ["train.csv", "test.csv", "split.json"] {
        manifest.record_input(&split_dir.join(name))?;
    }
    let loaded = splits::load_split(&split_dir)
        .with_context(|| format!("loading split from {}", split_dir.display()))?;
    let index = TemporalIndex::build(&loaded.split.train, loaded.items.len());
    let ctx = CandidateContext::new(
        loaded.users.len(),
        loaded.items.len(),
        loaded.release_time.clone(),
        &loaded.split,
    );
    let report = eval::evaluate(&loaded.split, &index, &ctx, &cfg)?;

    let report_path = args.out.join("report.json");
    write_json(&report_path, &serde_json::to_value(report.doc())?)?;
    let mut outputs = vec![report_path];
    if args.records {
        let records_path = args.out.join("records.csv");
        let mut w = std::io::BufWriter::new(fs::File::create(&records_path)?);
        writeln!(w, "userId,movieId,t0,rank")?;
        for rec in &report.records {
            writeln!(
                w,
                "{},{},{},{}",
                loaded.users.external(rec.instance.user),
                loaded.items.external(rec.instance.item),
                rec.instance.t0,
                rec.rank.map(|r| r.to_string()).unwrap_or_default()
            )?;
        }
        w.flush()?;
        outputs.push(records_path);
    }
    finalize(manifest, &args.out, &outputs, started)?;
    for (metric, value) in report.metrics() {
        println!("{metric}: {value:.6}");
    }
    Ok(())
}

fn run_analyze(args: AnalyzeArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)?;
    let scorer = ScorerConfig {
        kind: ScorerKind::DecayPop,
        delta_t_seconds: args.month_seconds,
        horizon_months: args.horizon_months,
        month_seconds: args.month_seconds,
        decay: if args.decay == "exp" {
            Decay::Exp
        } else {
            Decay::Weights(
                args.decay
                    .split(',')
                    .map(|w| {
                        w.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad decay weight {w:?}")))
                    })
                    .collect::<popbench::Result<Vec<f64>>>()?,
            )
        },
    };
    scorer.validate()?;
    let k_values = parse_k_list(&args.k)?;
    let granularity = parse_duration(&args.granularity)?.resolve(args.month_seconds);
    let scale = if args.scale == "linear" {
        Scale::Linear
    } else {
        Scale::Log
    };

    let mut manifest = RunManifest::new(
        "analyze",
        serde_json::json!({
            "input": args.input.config_json(),
            "cohort_window": args.cohort_window,
            "groups": args.groups,
            "scale": args.scale,
            "top_n": args.top_n,
            "granularity_seconds": granularity,
            "k_values": k_values,
            "scorer": scorer,
        }),
    );
    let (corpus, _) = args.input.load(&mut manifest)?;
    let Some((t_min, t_max)) = corpus.time_span() else {
        return Err(Error::Degenerate("corpus is empty".into()).into());
    };
    let window = args
        .cohort_window
        .unwrap_or(((t_max + 1 - 5 * 365 * 86_400).max(t_min), t_max + 1));

    // daily series over the full leave-one-out split, no window
    let loo = splits::leave_one_out(&corpus);
    let daily = analysis::daily_curves(&corpus, &loo);
    let daily_path = args.out.join("daily_curves.csv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&daily_path)?);
        writeln!(w, "date,releases,last_interactions")?;
        for row in &daily {
            writeln!(
                w,
                "{},{},{}",
                row.date(),
                row.releases,
                row.last_interactions
            )?;
        }
        w.flush()?;
    }

    // cohort + grouping
    let cohort = analysis::select_cohort(&corpus, window)?;
    let counts = analysis::cohort_counts(&corpus, &cohort, window);
    let grouping = analysis::group_users(
        &counts,
        &UserGroupSpec {
            n_groups: args.groups,
            scale,
        },
    )?;

    // popular-set tendency over an all-interactions index
    let index_all = TemporalIndex::build(&corpus.interactions, corpus.n_items());
    let query_times: Vec<Timestamp> = corpus
        .interactions
        .iter()
        .filter(|it| {
            it.timestamp >= window.0
                && it.timestamp < window.1
                && grouping.group_of(it.user).is_some()
        })
        .map(|it| it.timestamp)
        .collect();
    let cache = PopularSetCache::build(
        &index_all,
        corpus.release_times(),
        &query_times,
        &scorer,
        granularity,
        args.top_n,
    )?;
    let heatmap = analysis::tendency_heatmap(&corpus, &grouping, &cache, window, &scorer);
    let heatmap_path = args.out.join("heatmap.csv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&heatmap_path)?);
        writeln!(w, "group_lo,group_hi,pct_bucket,user_count")?;
        for cell in &heatmap.cells {
            writeln!(
                w,
                "{},{},{},{}",
                grouping.edges[cell.group],
                grouping.edges[cell.group + 1],
                cell.pct_bucket,
                cell.user_count
            )?;
        }
        w.flush()?;
    }

    // per-group accuracy on the window-filtered test set
    let filtered = splits::filter_eval_window(loo, window)?;
    let index_train = TemporalIndex::build(&filtered.train, corpus.n_items());
    let ctx = CandidateContext::new(
        corpus.n_users(),
        corpus.n_items(),
        corpus.release_times().to_vec(),
        &filtered,
    );
    let cfg = EvalConfig {
        k_values: k_values.clone(),
        candidate_policy: CandidatePolicy::AllItems,
        scorer: scorer.clone(),
    };
    let per_group = analysis::per_group_eval(&filtered, &index_train, &ctx, &cfg, &grouping)?;
    let metrics_path = args.out.join("group_metrics.csv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&metrics_path)?);
        let metric_cols: Vec<String> = k_values
            .iter()
            .map(|k| format!("HR@{k}"))
            .chain(k_values.iter().map(|k| format!("NDCG@{k}")))
            .collect();
        writeln!(
            w,
            "group_lo,group_hi,n_users,n_test,{}",
            metric_cols.join(",")
        )?;
        for (g, report) in per_group.groups.iter().enumerate() {
            let mut cols = vec![
                grouping.edges[g].to_string(),
                grouping.edges[g + 1].to_string(),
                grouping.group_sizes[g].to_string(),
                report.n_instances.to_string(),
            ];
            for k in &k_values {
                cols.push(report.hr[k].to_string());
            }
            for k in &k_values {
                cols.push(report.ndcg[k].to_string());
            }
            writeln!(w, "{}", cols.join(","))?;
        }
        w.flush()?;
    }

    let chance = analysis::chance_baseline(&corpus, window.0, args.top_n)?;
    let doc = serde_json::json!({
        "cohort_window": [window.0, window.1],
        "cohort_size": cohort.len(),
        "bin_edges": grouping.edges,
        "group_sizes": grouping.group_sizes,
        "degenerate_grouping": grouping.degenerate,
        "top_n": args.top_n,
        "granularity_seconds": granularity,
        "popular_sets_cached": cache.n_sets(),
        "chance_baseline": chance,
        "ratings_before_full_horizon": heatmap.ratings_before_full_horizon,
        "n_test_in_window": filtered.test.len(),
        "n_test_in_cohort": per_group.overall.n_instances,
        "cohort_metrics": per_group.overall.metrics(),
        "scorer": scorer,
    });
    let analysis_path = args.out.join("analysis.json");
    write_json(&analysis_path, &doc)?;

    finalize(
        manifest,
        &args.out,
        &[daily_path, heatmap_path, metrics_path, analysis_path],
        started,
    )?;
    println!(
        "analyze: cohort {} users, {} test instances in window, chance baseline {:.4}%",
        cohort.len(),
        filtered.test.len(),
        100.0 * chance
    );
    Ok(())
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)?;
    let cfg = SynthConfig {
        n_users: args.users,
        n_items: args.items,
        start_time: args.start_time,
        span: parse_duration(&args.span)?.resolve(popbench::models::MONTH_SECONDS),
        epochs: args.epochs,
        regime_sharpness: args.sharpness,
        activity_floor: args.floor,
        activity_exponent: args.exponent,
        seed: args.seed,
    };
    let manifest = RunManifest::new(
        "synth",
        serde_json::json!({
            "n_users": cfg.n_users,
            "n_items": cfg.n_items,
            "start_time": cfg.start_time,
            "span_seconds": cfg.span,
            "epochs": cfg.epochs,
            "regime_sharpness": cfg.regime_sharpness,
            "activity_floor": cfg.activity_floor,
            "activity_exponent": cfg.activity_exponent,
            "seed": cfg.seed,
        }),
    );
    let corpus = synth::generate(&cfg)?;
    let ratings_path = args.out.join("ratings.csv");
    corpus.write_csv(fs::File::create(&ratings_path)?)?;
    finalize(manifest, &args.out, &[ratings_path], started)?;
    println!(
        "synth: {} interactions, {} users, {} items",
        corpus.interactions.len(),
        corpus.n_users(),
        corpus.n_items()
    );
    Ok(())
}

fn run_compare(args: CompareArgs) -> anyhow::Result<()> {
    let started = Instant::now();
    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new(
        "compare",
        serde_json::json!({
            "baseline": args.baseline.display().to_string(),
            "reports": args.reports.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
    );
    let load = |path: &Path| -> popbench::Result<ReportDoc> {
        let doc = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(doc)
    };
    let baseline_path = resolve_input(&args.baseline)?;
    manifest.record_input(&baseline_path)?;
    let baseline = load(&baseline_path)?;
    let mut names = Vec::new();
    let mut docs = Vec::new();
    for path in &args.reports {
        let path = resolve_input(path)?;
        manifest.record_input(&path)?;
        names.push(path.display().to_string());
        docs.push(load(&path)?);
    }
    let doc_refs: Vec<&ReportDoc> = docs.iter().collect();
    let tables = eval::compare(&baseline, &doc_refs)?;

    let comparison_path = args.out.join("comparison.csv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&comparison_path)?);
        writeln!(w, "report,metric,baseline,value,improvement")?;
        for (name, rows) in names.iter().zip(&tables) {
            for row in rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    name, row.metric, row.baseline, row.value, row.improvement
                )?;
            }
        }
        w.flush()?;
    }
    finalize(
        manifest,
        &args.out,
        std::slice::from_ref(&comparison_path),
        started,
    )?;
    // human-readable table on stdout
    let mut table = BTreeMap::new();
    for (name, rows) in names.iter().zip(&tables) {
        for row in rows {
            table.insert((row.metric.clone(), name.clone()), row.improvement);
        }
    }
    for ((metric, name), improvement) in table {
        println!("{metric}  {name}: {:+.1}%", improvement * 100.0);
    }
    Ok(())
}
