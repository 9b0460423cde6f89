use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ptx_core::backends::BackendSpec;
use ptx_core::eval::{format_table, stratified_eval, Method};
use ptx_core::nlp::{Lexicon, ReportClassifier};
use ptx_core::pipeline::{PipelineConfig, StudyResult};
use ptx_core::store::{parse_manifest, BatchFilter, Store};
use ptx_core::synthetic::{write_funnel_set, FunnelSpec};
use ptx_core::triage::TriageDecision;
use ptx_service::{router, serve, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "ptxtriage", version, about = "Flag chest x-rays whose images show a pneumothorax the report does not mention")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a manifest, run the pipeline and triage, write per-study results.
    Run(RunArgs),
    /// Stratified AUC table for a results file against manifest labels.
    Eval(EvalArgs),
    /// Classify one report and print the mentions found.
    Nlp(NlpArgs),
    /// Serve the HTTP API and review UI.
    Serve(ServeArgs),
    /// Write a synthetic study set with planted missed findings.
    Synth(SynthArgs),
}

#[derive(Args)]
struct BackendArgs {
    /// `oracle`, `stub`, or an http(s) inference server URL.
    #[arg(long, default_value = "oracle")]
    backend: String,
    /// Uniform noise half-width for oracle scores.
    #[arg(long, default_value_t = 0.0)]
    oracle_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// JSON file with pipeline settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file for line-delimited results; `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
    /// Persist to a store directory instead of memory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Keep per-stage timings in the output (makes it run-dependent).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    /// Manifest carrying the labels.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "a,b,c,ens_ac,ens_abc")]
    methods: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct NlpArgs {
    /// Report file; standard input when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Alternative cue lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    data_dir: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    /// Directory with the review UI's static files, served under /ui/.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    planted: usize,
    #[arg(long, default_value_t = 130)]
    normal: usize,
    #[arg(long, default_value_t = 96)]
    image_size: usize,
}

/// One line of `run` output: the pipeline result plus its triage.
#[derive(Serialize)]
struct RunLine<'a> {
    #[serde(flatten)]
    result: &'a StudyResult,
    triage: Option<&'a TriageDecision>,
    report_positive: Option<bool>,
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let cfg = match path {
        None => PipelineConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn open_out(path: &Path) -> Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdout().lock()));
    }
    let f = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(std::io::BufWriter::new(f)))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let spec = BackendSpec::parse(&a.backend.backend, a.backend.oracle_noise, a.backend.seed)?;
    let text = std::fs::read_to_string(&a.manifest).with_context(|| format!("cannot read manifest {}", a.manifest.display()))?;
    let store = match &a.data_dir {
        Some(dir) => Store::open(dir)?,
        None => Store::in_memory(),
    };
    let base = a.manifest.parent().unwrap_or(Path::new("."));
    let report = store.ingest_text(&text, base);
    for r in &report.rejected {
        eprintln!("manifest line {}: rejected: {}", r.line, r.reason);
    }
    let ids: Vec<String> = parse_manifest(&text, base).records.into_iter().map(|r| r.study_id).collect();
    let filter = BatchFilter { study_ids: Some(ids.iter().cloned().collect()), ..Default::default() };
    let backend = spec.build();
    let summary = store.run_batch(&filter, backend.as_ref(), &cfg, a.backend.workers)?;
    store.flush()?;

    let mut out = open_out(&a.out)?;
    let mut sorted = ids;
    sorted.sort();
    for id in sorted {
        let Some(entry) = store.study(&id) else { continue };
        let Some(mut result) = entry.result else { continue };
        if !a.timings {
            result.timings_ms.clear();
        }
        let line = RunLine {
            result: &result,
            triage: entry.triage.as_ref(),
            report_positive: entry.nlp.as_ref().map(|n| n.positive),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    eprintln!(
        "ingested {} (rejected {}), processed {}, flagged {}, errored {}, skipped non-frontal {}",
        report.ingested,
        report.rejected.len(),
        summary.processed,
        summary.flagged,
        summary.errored,
        summary.skipped
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let methods = Method::parse_list(&a.methods)?;
    let text = std::fs::read_to_string(&a.results).with_context(|| format!("cannot read results {}", a.results.display()))?;
    let mut results: HashMap<String, StudyResult> = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: StudyResult =
            serde_json::from_str(line).with_context(|| format!("{} line {}", a.results.display(), i + 1))?;
        results.insert(r.study_id.clone(), r);
    }
    let mtext = std::fs::read_to_string(&a.manifest).with_context(|| format!("cannot read manifest {}", a.manifest.display()))?;
    let parsed = parse_manifest(&mtext, a.manifest.parent().unwrap_or(Path::new(".")));
    for r in &parsed.rejected {
        eprintln!("manifest line {}: rejected: {}", r.line, r.reason);
    }
    let mut rs = Vec::new();
    let mut ls = Vec::new();
    for rec in parsed.records {
        let Some(labels) = rec.labels else { continue };
        let Some(r) = results.remove(&rec.study_id) else {
            bail!("results have no entry for study {}", rec.study_id);
        };
        rs.push(r);
        ls.push(labels);
    }
    if ls.is_empty() {
        bail!("manifest {} has no labelled studies", a.manifest.display());
    }
    if !results.is_empty() {
        eprintln!("ignoring {} results without labels", results.len());
    }
    let table = stratified_eval(&rs, &ls, &methods)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&table)?);
    } else {
        print!("{}", format_table(&table));
    }
    Ok(())
}

fn cmd_nlp(a: NlpArgs) -> Result<()> {
    let classifier = match &a.lexicon {
        Some(p) => ReportClassifier::new(Lexicon::load(p)?),
        None => ReportClassifier::default(),
    };
    let text = match &a.report {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read report {}", p.display()))?,
        None => {
            let mut s = String::new();
            std::io::stdin().read_to_string(&mut s).context("cannot read standard input")?;
            s
        }
    };
    println!("{}", serde_json::to_string_pretty(&classifier.classify_report(&text))?);
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down");
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    BackendSpec::parse(&a.backend.backend, a.backend.oracle_noise, a.backend.seed)?;
    let store = Arc::new(Store::open(&a.data_dir)?);
    let cfg = ServiceConfig {
        default_backend: a.backend.backend,
        oracle_noise: a.backend.oracle_noise,
        seed: a.backend.seed,
        workers: a.backend.workers,
        ui_dir: a.ui_dir,
    };
    let app = router(AppState::new(store.clone(), cfg));
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("invalid --host/--port")?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
        let local = listener.local_addr()?;
        eprintln!("listening on http://{local}");
        serve(listener, app, shutdown_signal()).await?;
        anyhow::Ok(())
    })?;
    store.flush()?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let spec = FunnelSpec { planted: a.planted, normal: a.normal, image_size: a.image_size, ..Default::default() };
    let set = write_funnel_set(&a.out, &spec).with_context(|| format!("cannot write to {}", a.out.display()))?;
    println!("{}", set.manifest_path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Nlp(a) => cmd_nlp(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
