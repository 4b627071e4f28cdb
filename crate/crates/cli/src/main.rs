//! Single entry point for the deliberation engine: corpus preparation,
//! runs under any strategy, evaluation, panel-size sweeps, token and
//! alignment reports, per-case audit rendering, and corpus statistics.
//!
//! Exit codes: 0 success, 1 usage error, 2 provider failure, 3 IO error.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use camp_core::agents::{AgentRuntime, TemplateSet};
use camp_core::config::{Method, RunConfig};
use camp_core::dataprep::{self, PrepareOptions, RawRecord};
use camp_core::eval;
use camp_core::pipeline::{self, CaseStatus, TraceRecord};
use camp_core::provider::{
    CacheProvider, ChatProvider, HttpProvider, HttpProviderConfig, MockProvider, RecordingProvider,
    RetryPolicy, TokenLedger,
};
use camp_core::types::TaskInstance;

#[derive(Parser)]
#[command(
    name = "camp",
    version,
    about = "Case-adaptive multi-agent deliberation over candidate diagnoses",
    propagate_version = true
)]
struct Cli {
    /// Verbose logging to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an evaluation corpus from raw records.
    Prepare(PrepareArgs),
    /// Run a strategy over a corpus, writing a trace and manifest.
    Run(RunArgs),
    /// Score a trace file.
    Evaluate(EvaluateArgs),
    /// Re-run the deliberation pipeline across panel sizes.
    Sweep(SweepArgs),
    /// Token usage report over one or more traces.
    Tokens(TokensArgs),
    /// Specialist-service alignment matrix from a trace.
    Alignment(AlignmentArgs),
    /// Human-readable rendering of one case's votes and arbitration.
    Audit(AuditArgs),
    /// Descriptive statistics of a corpus.
    Stats(StatsArgs),
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Provider(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Provider(_) => 2,
            CliError::Io(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Provider(m) | CliError::Io(m) => m,
        }
    }
}

impl From<dataprep::DataPrepError> for CliError {
    fn from(e: dataprep::DataPrepError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<pipeline::PipelineError> for CliError {
    fn from(e: pipeline::PipelineError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests exit 0; real parse errors are usage errors
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };

    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose {
            tracing::Level::DEBUG
        } else {
            tracing::Level::WARN
        })
        .init();

    let outcome = match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Run(args) => cmd_run(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Tokens(args) => cmd_tokens(args),
        Command::Alignment(args) => cmd_alignment(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Stats(args) => cmd_stats(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

// ---------------------------------------------------------------------------
// shared config / provider plumbing
// ---------------------------------------------------------------------------

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Strategy to run.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Scripted mock provider (JSON script); replaces the HTTP endpoint.
    #[arg(long)]
    mock: Option<PathBuf>,
    /// OpenAI-compatible endpoint base URL.
    #[arg(long)]
    base_url: Option<String>,
    /// Model name sent with each request.
    #[arg(long)]
    model: Option<String>,
    /// Response cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Prompt template directory override.
    #[arg(long)]
    prompt_dir: Option<PathBuf>,
    /// Concurrent cases.
    #[arg(long)]
    case_parallelism: Option<usize>,
    /// Generate a brief hospital course per case.
    #[arg(long)]
    bhc: bool,
    /// Cost-comparison variant: arbitrate every diagnosis.
    #[arg(long)]
    always_arbitrate: bool,
}

impl ConfigArgs {
    fn resolve(&self, k_override: Option<usize>) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
                RunConfig::from_toml(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(method) = self.method {
            config.method = method;
        }
        if let Some(k) = k_override {
            config.k = k;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(t) = self.temperature {
            config.temperature = t;
        }
        if let Some(m) = self.max_tokens {
            config.max_tokens = Some(m);
        }
        if let Some(url) = &self.base_url {
            config.provider.base_url = Some(url.clone());
        }
        if let Some(model) = &self.model {
            config.provider.model = model.clone();
        }
        if let Some(dir) = &self.cache_dir {
            config.cache_dir = Some(dir.clone());
        }
        if let Some(dir) = &self.prompt_dir {
            config.prompt_dir = Some(dir.clone());
        }
        if let Some(p) = self.case_parallelism {
            config.case_parallelism = p.max(1);
        }
        if self.bhc {
            config.bhc_enabled = true;
        }
        if self.always_arbitrate {
            config.always_arbitrate = true;
        }
        if config.k == 0 {
            return Err(CliError::Usage("--k must be at least 1".into()));
        }
        Ok(config)
    }

    fn build_runtime(
        &self,
        config: &RunConfig,
        ledger: &Arc<TokenLedger>,
    ) -> Result<AgentRuntime, CliError> {
        let base: Arc<dyn ChatProvider> = match (&self.mock, &config.provider.base_url) {
            (Some(script), _) => Arc::new(MockProvider::from_file(script).map_err(|e| {
                CliError::Io(format!("loading mock script {}: {e}", script.display()))
            })?),
            (None, Some(base_url)) => {
                let api_key = std::env::var(&config.provider.credential_env).ok();
                Arc::new(HttpProvider::new(
                    HttpProviderConfig {
                        base_url: base_url.clone(),
                        api_key,
                        retry: RetryPolicy {
                            max_attempts: config.provider.retry_cap.max(1),
                            base_delay: std::time::Duration::from_millis(
                                config.provider.backoff_ms,
                            ),
                        },
                        in_flight_limit: config.provider.in_flight_limit,
                    },
                    std::time::Duration::from_secs(config.provider.timeout_secs),
                ))
            }
            (None, None) => {
                return Err(CliError::Usage(
                    "no provider configured: pass --mock <script> or set provider.base_url".into(),
                ))
            }
        };
        let cached: Arc<dyn ChatProvider> = match &config.cache_dir {
            Some(dir) => Arc::new(CacheProvider::new(base, dir.clone())),
            None => base,
        };
        let provider = Arc::new(RecordingProvider::new(cached, Arc::clone(ledger)));
        let templates = match &config.prompt_dir {
            Some(dir) => TemplateSet::from_dir(dir).map_err(|e| {
                CliError::Io(format!("loading prompts from {}: {e}", dir.display()))
            })?,
            None => TemplateSet::builtin(),
        };
        let mut rt = AgentRuntime::new(provider, templates, config.provider.model.clone());
        rt.temperature = config.temperature;
        rt.max_tokens = config.max_tokens;
        rt.max_tokens_by_stage = config.max_tokens_by_stage.clone();
        Ok(rt)
    }
}

fn load_instances(path: &Path) -> Result<Vec<TaskInstance>, CliError> {
    let instances: Vec<TaskInstance> = dataprep::read_jsonl(path)?;
    for instance in &instances {
        instance
            .validate()
            .map_err(|e| CliError::Usage(format!("invalid instance {}: {e}", instance.case_id)))?;
    }
    Ok(instances)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let body = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, body + "\n")?;
    Ok(())
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

#[derive(Args)]
struct PrepareArgs {
    /// Raw records (JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Output corpus (JSONL of task instances).
    #[arg(long)]
    out: PathBuf,
    /// Diagnosis pool output path (JSON). Defaults next to the corpus.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Enable the provider-backed refinements (leakage filter, phrase
    /// masking, distractor dedup).
    #[arg(long)]
    llm_steps: bool,
    /// Force the provider-backed refinements off (the default).
    #[arg(long, conflicts_with = "llm_steps")]
    no_llm_steps: bool,
    /// Per-note distractor cache directory.
    #[arg(long)]
    distractor_cache: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn cmd_prepare(args: PrepareArgs) -> Result<(), CliError> {
    let records: Vec<RawRecord> = dataprep::read_jsonl(&args.input)?;
    let options = PrepareOptions {
        llm_steps: args.llm_steps && !args.no_llm_steps,
        seed: args.config.seed.unwrap_or(0),
        distractor_cache_dir: args.distractor_cache.clone(),
    };

    let ledger = Arc::new(TokenLedger::new());
    let runtime = if options.llm_steps {
        let config = args.config.resolve(None)?;
        Some(args.config.build_runtime(&config, &ledger)?)
    } else {
        None
    };

    let prepared = dataprep::prepare_corpus(&records, &options, runtime.as_ref());
    dataprep::write_jsonl(&args.out, &prepared.instances)?;
    let pool_path = args
        .pool
        .unwrap_or_else(|| args.out.with_file_name("pool.json"));
    write_json(&pool_path, &prepared.pool)?;

    println!(
        "prepared {} instances from {} records ({} no valid diagnoses, {} over the label cap, {} leakage-filtered, {} pool-exhausted)",
        prepared.counts.prepared,
        prepared.counts.input_records,
        prepared.counts.no_valid_diagnoses,
        prepared.counts.too_many_diagnoses,
        prepared.counts.leakage_filtered,
        prepared.counts.pool_exhausted,
    );
    println!("corpus: {}", args.out.display());
    println!(
        "pool:   {} ({} entries)",
        pool_path.display(),
        prepared.pool.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

#[derive(Args)]
struct RunArgs {
    /// Corpus of task instances (JSONL).
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for trace.jsonl and manifest.json.
    #[arg(long)]
    out: PathBuf,
    /// Specialist panel size.
    #[arg(long)]
    k: Option<usize>,
    /// Skip cases already present in the trace file.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = args.config.resolve(args.k)?;
    let instances = load_instances(&args.corpus)?;
    let ledger = Arc::new(TokenLedger::new());
    let rt = args.config.build_runtime(&config, &ledger)?;

    let manifest = pipeline::run_corpus(&rt, &instances, &config, &ledger, &args.out, args.resume)?;

    println!(
        "method {} over {} cases: {} completed, {} failed, {} skipped",
        manifest.method,
        manifest.n_instances,
        manifest.n_completed,
        manifest.n_failed,
        manifest.n_skipped
    );
    if !manifest.path_counts.is_empty() {
        let paths = manifest
            .path_counts
            .iter()
            .map(|(p, c)| format!("{p}={c}"))
            .collect::<Vec<_>>()
            .join("  ");
        println!(
            "resolution paths: {paths}  (arbitrations: {})",
            manifest.arbitration_calls
        );
    }
    println!(
        "tokens: {} prompt + {} completion = {}",
        manifest.tokens.prompt_tokens, manifest.tokens.completion_tokens, manifest.tokens.total
    );
    println!("trace:    {}", pipeline::trace_path(&args.out).display());
    println!("manifest: {}", pipeline::manifest_path(&args.out).display());

    if manifest.n_completed == 0 && manifest.n_failed > 0 {
        return Err(CliError::Provider(format!(
            "all {} executed cases failed; see trace for per-case errors",
            manifest.n_failed
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EvaluateArgs {
    /// Trace file to score.
    #[arg(long)]
    trace: PathBuf,
    /// Label for the report; defaults to the method recorded in the trace.
    #[arg(long)]
    method_label: Option<String>,
    /// Score per-label over the global label space instead of per-case
    /// set-level (the default).
    #[arg(long)]
    label_level: bool,
    /// Directory for report.json / report.txt; prints to stdout when
    /// absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let records = pipeline::read_trace(&args.trace)?;
    if records.is_empty() {
        return Err(CliError::Usage(format!(
            "trace {} is empty",
            args.trace.display()
        )));
    }
    let label = args
        .method_label
        .clone()
        .unwrap_or_else(|| records[0].method.clone());
    let score = if args.label_level {
        eval::score_corpus_label_level(&records)
    } else {
        eval::score_corpus(&records)
    };
    let text = eval::score_report_text(&label, &score);
    print!("{text}");
    if let Some(dir) = args.out {
        std::fs::create_dir_all(&dir)?;
        write_json(
            &dir.join("report.json"),
            &serde_json::json!({
                "method_label": label,
                "label_level": args.label_level,
                "score": score,
            }),
        )?;
        std::fs::write(dir.join("report.txt"), text)?;
        println!("reports written to {}", dir.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Panel sizes: "1..5" (inclusive) or a comma list "1,3,5".
    #[arg(long)]
    k: String,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Directory keeping the per-k run outputs; temporary when absent.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_k_values(spec: &str) -> Result<Vec<usize>, CliError> {
    let spec = spec.trim();
    let parse_one = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("bad panel size {s:?} in --k {spec:?}")))
    };
    let values: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let lo = parse_one(a)?;
        let hi = parse_one(b.trim_start_matches('='))?;
        if lo == 0 || hi < lo {
            return Err(CliError::Usage(format!("bad panel range {spec:?}")));
        }
        (lo..=hi).collect()
    } else {
        spec.split(',').map(parse_one).collect::<Result<_, _>>()?
    };
    if values.is_empty() || values.contains(&0) {
        return Err(CliError::Usage(format!("bad panel sizes {spec:?}")));
    }
    Ok(values)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let base_config = args.config.resolve(None)?;
    let instances = load_instances(&args.corpus)?;
    let k_values = parse_k_values(&args.k)?;

    let temp_holder: PathBuf;
    let work_dir: &Path = match &args.work_dir {
        Some(dir) => dir,
        None => {
            temp_holder = scratch_dir()?;
            &temp_holder
        }
    };

    let rows = eval::panel_size_sweep(&k_values, |k| -> Result<Vec<TraceRecord>, CliError> {
        let config = RunConfig {
            k,
            method: Method::Camp,
            ..base_config.clone()
        };
        let ledger = Arc::new(TokenLedger::new());
        let rt = args.config.build_runtime(&config, &ledger)?;
        let out = work_dir.join(format!("k{k}"));
        pipeline::run_corpus(&rt, &instances, &config, &ledger, &out, false)?;
        Ok(pipeline::read_trace(&pipeline::trace_path(&out))?)
    })?;

    let csv = eval::sweep_csv(&rows);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&args.out, &csv)?;
    print!("{}", eval::sweep_table_text(&rows));
    println!("csv: {}", args.out.display());
    Ok(())
}

fn scratch_dir() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("camp-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// tokens
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TokensArgs {
    /// Trace paths; a path segment may contain `*` wildcards
    /// ("out/*/trace.jsonl").
    #[arg(long, required = true, num_args = 1..)]
    traces: Vec<String>,
    /// JSON report output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Minimal wildcard expansion: `*` matches within one path segment.
fn expand_pattern(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    fn segment_matches(segment: &str, name: &str) -> bool {
        let parts: Vec<&str> = segment.split('*').collect();
        if parts.len() == 1 {
            return segment == name;
        }
        if let Some(first) = parts.first() {
            if !first.is_empty() && !name.starts_with(first) {
                return false;
            }
        }
        if let Some(last) = parts.last() {
            if !last.is_empty() && !name.ends_with(last) {
                return false;
            }
        }
        let mut rest = name;
        for part in &parts {
            if part.is_empty() {
                continue;
            }
            match rest.find(part) {
                Some(pos) => rest = &rest[pos + part.len()..],
                None => return false,
            }
        }
        true
    }

    if !pattern.contains('*') {
        return Ok(vec![PathBuf::from(pattern)]);
    }
    let path = Path::new(pattern);
    let mut current: Vec<PathBuf> = vec![if path.is_absolute() {
        PathBuf::from("/")
    } else {
        PathBuf::from(".")
    }];
    for component in path.components() {
        let segment = component.as_os_str().to_string_lossy();
        if segment == "/" {
            continue;
        }
        let mut next = Vec::new();
        if segment.contains('*') {
            for dir in &current {
                let entries = std::fs::read_dir(dir)
                    .map_err(|e| CliError::Io(format!("reading {}: {e}", dir.display())))?;
                let mut matched: Vec<PathBuf> = entries
                    .filter_map(|e| e.ok())
                    .filter(|e| segment_matches(&segment, &e.file_name().to_string_lossy()))
                    .map(|e| e.path())
                    .collect();
                matched.sort();
                next.extend(matched);
            }
        } else {
            for dir in &current {
                next.push(dir.join(&*segment));
            }
        }
        current = next;
    }
    current.retain(|p| p.exists());
    Ok(current)
}

fn cmd_tokens(args: TokensArgs) -> Result<(), CliError> {
    let mut records = Vec::new();
    let mut n_files = 0;
    for pattern in &args.traces {
        for path in expand_pattern(pattern)? {
            records.extend(pipeline::read_trace(&path)?);
            n_files += 1;
        }
    }
    if n_files == 0 {
        return Err(CliError::Usage("no trace files matched --traces".into()));
    }
    let reports = eval::token_report(&records);
    print!("{}", eval::token_report_text(&reports));
    if let Some(path) = args.out {
        write_json(&path, &reports)?;
        println!("json: {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// alignment
// ---------------------------------------------------------------------------

#[derive(Args)]
struct AlignmentArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_alignment(args: AlignmentArgs) -> Result<(), CliError> {
    let records = pipeline::read_trace(&args.trace)?;
    let matrix = eval::alignment_matrix(&records);
    if matrix.rows.is_empty() {
        return Err(CliError::Usage(
            "no completed deliberation cases with service labels in the trace".into(),
        ));
    }
    print!("{}", eval::alignment_text(&matrix));
    if let Some(path) = args.out {
        write_json(&path, &matrix)?;
        println!("json: {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    case_id: String,
}

fn cmd_audit(args: AuditArgs) -> Result<(), CliError> {
    let records = pipeline::read_trace(&args.trace)?;
    let Some(record) = records.iter().find(|r| r.case_id == args.case_id) else {
        let available: Vec<&str> = records.iter().map(|r| r.case_id.as_str()).collect();
        return Err(CliError::Usage(format!(
            "case {:?} not found; available: {}",
            args.case_id,
            available.join(", ")
        )));
    };
    print!("{}", render_audit(record));
    Ok(())
}

fn render_audit(record: &TraceRecord) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "case {}  method {}  model {}  temperature {}",
        record.case_id, record.method, record.model, record.temperature
    );
    if record.status == CaseStatus::Failed {
        let _ = writeln!(
            out,
            "status: FAILED ({})",
            record.error.as_deref().unwrap_or("unknown")
        );
        return out;
    }
    let gold: BTreeSet<usize> = record.gold.iter().copied().collect();
    let accepted: BTreeSet<usize> = record.accepted.iter().copied().collect();

    if let Some(camp) = &record.camp {
        let roles: Vec<&str> = camp
            .panel
            .specialists
            .iter()
            .map(|s| s.role.as_str())
            .collect();
        let _ = writeln!(out, "panel: {}", roles.join(" | "));
        if !camp.panel.case_summary.is_empty() {
            let _ = writeln!(out, "summary: {}", camp.panel.case_summary);
        }
        let _ = writeln!(out);
        for resolution in &camp.resolutions {
            let j = resolution.diagnosis_index;
            let text = record
                .candidates
                .get(j - 1)
                .map(String::as_str)
                .unwrap_or("<unknown>");
            let marker = match (accepted.contains(&j), gold.contains(&j)) {
                (true, true) => "ACCEPT  (gold)",
                (true, false) => "ACCEPT",
                (false, true) => "REJECT  (gold missed)",
                (false, false) => "REJECT",
            };
            let _ = writeln!(
                out,
                "[{j}] {text}\n    tally K{} R{} N{}  ->  {}  ->  {marker}",
                resolution.tally.keeps,
                resolution.tally.refuses,
                resolution.tally.neutrals,
                resolution.path,
            );
            for (row, specialist) in camp.panel.specialists.iter().enumerate() {
                let eval = &camp.matrix.rows()[row][j - 1];
                let _ = writeln!(
                    out,
                    "    {:<28} {:>7} ({:.2})  {}",
                    specialist.role,
                    eval.vote.to_string(),
                    eval.confidence,
                    if eval.quote.is_empty() {
                        "(no quote)".to_string()
                    } else {
                        format!("\"{}\"", eval.quote)
                    }
                );
                if !eval.rationale.is_empty() {
                    let _ = writeln!(out, "    {:<28} {}", "", eval.rationale);
                }
            }
            if let Some(arbitration) = &resolution.arbitration {
                let verdict = match arbitration.decision {
                    camp_core::types::Decision::Accept => "INCLUDE",
                    camp_core::types::Decision::Reject => "EXCLUDE",
                };
                let _ = writeln!(
                    out,
                    "    arbitration -> {verdict}: {}",
                    arbitration.reasoning
                );
                for input in &arbitration.inputs {
                    if let Some(verified) = input.quote_verified {
                        let _ = writeln!(
                            out,
                            "      quote from {} verified in note: {}",
                            input.role,
                            if verified { "yes" } else { "NO" }
                        );
                    }
                }
            }
            if resolution.fallback_used {
                let _ = writeln!(out, "    fallback: attending initial judgment applied");
            }
            let _ = writeln!(out);
        }
    }

    let names = |set: &BTreeSet<usize>| {
        set.iter()
            .map(|&j| {
                record
                    .candidates
                    .get(j - 1)
                    .map(String::as_str)
                    .unwrap_or("?")
            })
            .collect::<Vec<_>>()
            .join("; ")
    };
    let _ = writeln!(out, "accepted: {{{}}}", names(&accepted));
    let _ = writeln!(out, "gold:     {{{}}}", names(&gold));
    if !record.degraded_flags.is_empty() {
        let _ = writeln!(out, "degraded: {}", record.degraded_flags.join(", "));
    }
    out
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let instances = load_instances(&args.corpus)?;
    if instances.is_empty() {
        return Err(CliError::Usage(format!(
            "corpus {} is empty",
            args.corpus.display()
        )));
    }
    let stats = dataprep::corpus_stats(&instances);
    println!(
        "{:<26}{:>10}{:>10}{:>10}{:>10}{:>10}",
        "Metric", "Mean", "Std", "Min", "Median", "Max"
    );
    for line in &stats {
        println!(
            "{:<26}{:>10.3}{:>10.3}{:>10.3}{:>10.3}{:>10.3}",
            line.metric, line.mean, line.std, line.min, line.median, line.max
        );
    }
    if let Some(path) = args.out {
        write_json(&path, &stats)?;
        println!("json: {}", path.display());
    }
    Ok(())
}
