use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use discourse_mt::cohesion::{evaluate_cohesion, score_annotated, Dimension};
use discourse_mt::gateway::Tokenizer;
use discourse_mt::graph::graph_consistency;
use discourse_mt::metrics::{self, bleu_detail, chunk_overlap_rate, load_terms, terminology_accuracy};
use discourse_mt::runner::{
    self, compare_runs, export_graph_dot, load_collection, load_run, read_chunks, read_graph, BackendSpec,
    RunArtifacts, RunConfig, StageLimit,
};
use discourse_mt::translator::{FailurePolicy, SelectionPolicy};
use discourse_mt::{Language, StrategyId};

#[derive(Parser, Debug)]
#[command(
    name = "discourse-mt",
    version,
    about = "Discourse-graph-guided document translation"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for `RunConfig`; unset flags keep the config file's values.
#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// sent_mt | one_pass | transgraph | fixed_chunking | no_rel | seq_context
    #[arg(long, global = true)]
    strategy: Option<StrategyId>,
    /// mock:<fixture.jsonl> | synthetic[:seed] | live
    #[arg(long, global = true)]
    backend: Option<BackendSpec>,
    /// Output directory for runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    src_lang: Option<String>,
    #[arg(long, global = true)]
    tgt_lang: Option<String>,
    /// Chunking window in tokens.
    #[arg(long, global = true)]
    window_tokens: Option<usize>,
    /// Maximum chunk distance of labelled pairs.
    #[arg(long, global = true)]
    pair_window: Option<usize>,
    /// Maximum context chunks per translation request.
    #[arg(long, global = true)]
    context_cap: Option<usize>,
    /// nearest | earliest
    #[arg(long, global = true, value_parser = parse_selection)]
    selection: Option<SelectionPolicy>,
    #[arg(long, global = true)]
    fixed_chunks: Option<usize>,
    #[arg(long, global = true)]
    seq_window: Option<usize>,
    /// Sequential-context baseline without relation labels.
    #[arg(long, global = true)]
    no_seq_labels: bool,
    /// default | whitespace | char
    #[arg(long, global = true, value_parser = parse_tokenizer)]
    tokenizer: Option<Tokenizer>,
    /// halt | skip_and_mark
    #[arg(long, global = true, value_parser = parse_failure)]
    failure: Option<FailurePolicy>,
    #[arg(long, global = true)]
    max_concurrent_documents: Option<usize>,
    /// Issue requests one at a time.
    #[arg(long, global = true)]
    sequential: bool,
    #[arg(long, global = true)]
    structure_retries: Option<u32>,
    #[arg(long, global = true)]
    transport_retries: Option<u32>,
    #[arg(long, global = true)]
    bleu_max_n: Option<usize>,
    /// Run the cohesion judge on translated documents.
    #[arg(long, global = true)]
    cohesion: bool,
    /// JSONL of externally computed scores to attach.
    #[arg(long, global = true)]
    external_scores: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chunk every document of a collection.
    Chunk { collection: PathBuf },
    /// Chunk and build discourse graphs.
    Graph { collection: PathBuf },
    /// Run the configured strategy end to end, with metrics.
    Translate { collection: PathBuf },
    /// Score files without running a pipeline.
    Evaluate(EvaluateArgs),
    /// Judge (or score pre-annotated) cohesion of a translation.
    Cohesion(CohesionArgs),
    /// Side-by-side metrics of two runs.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Render a graph.json as Graphviz DOT.
    ExportDot {
        graph: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    hypothesis: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Term list (TSV or JSONL); needs --hypothesis.
    #[arg(long)]
    terms: Option<PathBuf>,
    /// External score JSONL to summarise.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long, requires = "chunking_b")]
    chunking_a: Option<PathBuf>,
    #[arg(long, requires = "chunking_a")]
    chunking_b: Option<PathBuf>,
    #[arg(long, requires = "graph_b")]
    graph_a: Option<PathBuf>,
    #[arg(long, requires = "graph_a")]
    graph_b: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CohesionArgs {
    /// Source document (needed with a judge).
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    translation: Option<PathBuf>,
    /// Already evaluated annotations to score directly.
    #[arg(long, conflicts_with_all = ["source", "translation"])]
    annotated: Option<PathBuf>,
    /// coreference | conjunction | all
    #[arg(long, default_value = "all")]
    dimension: String,
}

fn parse_serde<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_selection(s: &str) -> Result<SelectionPolicy, String> {
    parse_serde(s)
}

fn parse_failure(s: &str) -> Result<FailurePolicy, String> {
    parse_serde(s)
}

fn parse_tokenizer(s: &str) -> Result<Tokenizer, String> {
    Tokenizer::parse(s).ok_or_else(|| format!("unknown tokenizer {s:?}"))
}

impl GlobalArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { c.$target = v.into(); })*
            };
        }
        set!(
            strategy => strategy,
            backend => backend,
            out => out_dir,
            window_tokens => window_tokens,
            pair_window => pair_window,
            context_cap => context_cap,
            selection => selection,
            fixed_chunks => fixed_chunks,
            seq_window => seq_window,
            tokenizer => tokenizer,
            failure => failure,
            max_concurrent_documents => max_concurrent_documents,
            structure_retries => structure_retries,
            transport_retries => transport_retries,
            bleu_max_n => bleu_max_n,
        );
        if let Some(l) = &self.src_lang {
            c.src_lang = Language::new(l.as_str());
        }
        if let Some(l) = &self.tgt_lang {
            c.tgt_lang = Language::new(l.as_str());
        }
        if let Some(p) = &self.external_scores {
            c.external_scores = Some(p.clone());
        }
        if self.no_seq_labels {
            c.seq_labels = false;
        }
        if self.sequential {
            c.parallel = false;
        }
        if self.cohesion {
            c.cohesion = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn dimensions(arg: &str) -> Result<Vec<Dimension>> {
    if arg == "all" {
        return Ok(Dimension::ALL.to_vec());
    }
    match Dimension::parse(arg) {
        Some(d) => Ok(vec![d]),
        None => bail!("unknown dimension {arg:?} (coreference, conjunction or all)"),
    }
}

fn run_collection(global: &GlobalArgs, collection: &Path, limit: StageLimit) -> Result<ExitCode> {
    let config = global.run_config()?;
    let docs = load_collection(collection)?;
    let RunArtifacts { dir, manifest } = runner::run_stages(&config, &docs, limit)?;
    for d in &manifest.documents {
        match &d.error {
            None => println!(
                "{}\tok\tchunks={}\tcalls={}\ttokens={}",
                d.id,
                d.chunks,
                d.ledger.calls,
                d.ledger.total_tokens()
            ),
            Some(e) => println!("{}\tfailed\t{e}", d.id),
        }
    }
    if let Some(b) = manifest.means.d_bleu {
        println!("mean d-BLEU: {b:.2}");
    }
    if let Some(t) = manifest.means.terminology_accuracy {
        println!("mean terminology accuracy: {t:.4}");
    }
    println!("run: {}", dir.display());
    let failed = manifest.failed_documents();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} document(s) failed: {}", failed.len(), failed.join(", "));
        Ok(ExitCode::FAILURE)
    }
}

fn evaluate(global: &GlobalArgs, args: &EvaluateArgs) -> Result<ExitCode> {
    let config = global.run_config()?;
    let mut out = Map::new();
    let hypothesis = args.hypothesis.as_deref().map(read).transpose()?;
    if let Some(r) = &args.reference {
        let Some(h) = &hypothesis else {
            bail!("--reference needs --hypothesis")
        };
        let detail = bleu_detail(h, &read(r)?, config.bleu_max_n, config.tokenizer)?;
        out.insert("d_bleu".into(), json!(detail));
        out.insert("bleu_smoothing".into(), json!(metrics::SMOOTHING));
    }
    if let Some(t) = &args.terms {
        let Some(h) = &hypothesis else {
            bail!("--terms needs --hypothesis")
        };
        let terms = load_terms(t)?;
        out.insert("terminology_accuracy".into(), json!(terminology_accuracy(h, &terms)?));
    }
    if let (Some(a), Some(b)) = (&args.chunking_a, &args.chunking_b) {
        let rate = chunk_overlap_rate(&read_chunks(a)?, &read_chunks(b)?)?;
        out.insert("chunk_overlap_rate".into(), json!(rate));
    }
    if let (Some(a), Some(b)) = (&args.graph_a, &args.graph_b) {
        let score = graph_consistency(&read_graph(a)?, &read_graph(b)?)?;
        out.insert("graph_consistency".into(), json!(score));
    }
    if let Some(s) = &args.scores {
        let ids = external_ids(s)?;
        let scores = metrics::ingest_external_scores(s, &ids)?;
        out.insert("external_score_means".into(), json!(scores.means()));
    }
    if out.is_empty() {
        bail!("nothing to evaluate; pass --hypothesis with --reference/--terms, --chunking-a/-b, --graph-a/-b or --scores");
    }
    println!("{}", serde_json::to_string_pretty(&Value::Object(out))?);
    Ok(ExitCode::SUCCESS)
}

/// Without a collection every document id in the score file is accepted.
fn external_ids(path: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for line in read(path)?.lines().filter(|l| !l.trim().is_empty()) {
        if let Ok(v) = serde_json::from_str::<Value>(line) {
            if let Some(id) = v.get("document_id").and_then(Value::as_str) {
                ids.push(id.to_string());
            }
        }
    }
    Ok(ids)
}

fn cohesion(global: &GlobalArgs, args: &CohesionArgs) -> Result<ExitCode> {
    let dims = dimensions(&args.dimension)?;
    if let Some(path) = &args.annotated {
        let [dim] = dims[..] else {
            bail!("--annotated needs a single --dimension")
        };
        let score = score_annotated(&read(path)?, dim)?;
        println!("{}", serde_json::to_string_pretty(&score)?);
        return Ok(ExitCode::SUCCESS);
    }
    let (Some(src), Some(tr)) = (&args.source, &args.translation) else {
        bail!("cohesion needs --source and --translation (or --annotated)");
    };
    let config = global.run_config()?;
    let gateway = config.gateway()?;
    let (source, translation) = (read(src)?, read(tr)?);
    let mut outcomes = Vec::new();
    for dim in dims {
        let outcome = evaluate_cohesion(&source, &translation, dim, &gateway, config.structure_retries)
            .with_context(|| format!("{} evaluation", dim.as_str()))?;
        outcomes.push(outcome);
    }
    let report = json!({ "outcomes": outcomes, "ledger": gateway.ledger() });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn compare(a: &Path, b: &Path, as_json: bool) -> Result<ExitCode> {
    let report = compare_runs(&load_run(a)?, &load_run(b)?)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_table());
    }
    Ok(ExitCode::SUCCESS)
}

fn export_dot(graph: &Path, output: Option<&Path>) -> Result<ExitCode> {
    let dot = export_graph_dot(&read_graph(graph)?);
    match output {
        Some(p) => std::fs::write(p, dot).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{dot}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Chunk { collection } => run_collection(&cli.global, collection, StageLimit::Chunk),
        Command::Graph { collection } => run_collection(&cli.global, collection, StageLimit::Graph),
        Command::Translate { collection } => run_collection(&cli.global, collection, StageLimit::Translate),
        Command::Evaluate(args) => evaluate(&cli.global, args),
        Command::Cohesion(args) => cohesion(&cli.global, args),
        Command::Compare { run_a, run_b, json } => compare(run_a, run_b, *json),
        Command::ExportDot { graph, output } => export_dot(graph, output.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
