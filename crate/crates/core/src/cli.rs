//! The `held` command line.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::Mode;
use crate::error::{Error, ErrorKind, Result};
use crate::evaluation::{traversal_stats, EvalCounts, EvalReport};
use crate::headings::{
    AnnotatedHeadings, HeadingClassifier, LogisticHeadingClassifier, RuleHeadingClassifier,
};
use crate::hierarchy::{Document, FormatAttrs, HierarchyTree, PhysicalObject};
use crate::inference::{infer, InferenceConfig, TraversalOrder};
use crate::io::{
    read_documents, read_json, read_qrels, read_queries, read_trees, write_documents, write_json,
    write_jsonl, write_trees,
};
use crate::linear::LogisticConfig;
use crate::patterns::PatternLibrary;
use crate::retrieval::{group_qrels, rank_passages, ranking_metrics, training_samples, DocStats, LinearRanker};
use crate::scoring::{document_tuples, train_linear_scorer, tuple_auc, tuple_records, LinearScorer, ModelFile, ScorerTraining, TrainingMode};
use crate::synth::{generate, generate_retrieval_labels, CorpusConfig};

#[derive(Debug, Parser)]
#[command(name = "held", version, about = "Logical document hierarchy extraction")]
struct Cli {
    /// Worker threads for document-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic annotated corpus.
    GenCorpus(GenCorpusArgs),
    /// Train the put-or-skip scorer (and optionally a passage ranker).
    Train(TrainArgs),
    /// Build trees for documents with a trained scorer.
    Infer(InferArgs),
    /// Compare predicted trees with gold trees.
    Eval(EvalArgs),
    /// Count scorer calls per traversal order with the gold oracle.
    BenchTraversal(BenchArgs),
    /// Rank passages for queries.
    Retrieve(RetrieveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
enum ModeArg {
    #[value(name = "1step")]
    #[serde(rename = "1step")]
    OneStep,
    #[value(name = "2step")]
    #[serde(rename = "2step")]
    TwoStep,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::OneStep => Mode::OneStep,
            ModeArg::TwoStep => Mode::TwoStep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OrderArg {
    All,
    R2l,
    L2r,
}

impl From<OrderArg> for TraversalOrder {
    fn from(o: OrderArg) -> TraversalOrder {
        match o {
            OrderArg::All => TraversalOrder::TraversalAll,
            OrderArg::R2l => TraversalOrder::RootToLeaf,
            OrderArg::L2r => TraversalOrder::LeafToRoot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum HeadingSource {
    /// Annotations when present, else the model's heading classifier, else rules.
    Auto,
    Annotated,
    Model,
    Rules,
}

#[derive(Debug, Args, Serialize)]
struct GenCorpusArgs {
    /// TOML corpus configuration; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config document count.
    #[arg(long)]
    n_docs: Option<usize>,
    /// Number of retrieval queries (default: 3 per document).
    #[arg(long)]
    queries: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "2step")]
    mode: ModeArg,
    /// Fraction of replay steps placed at a deliberately wrong position.
    #[arg(long, default_value_t = 0.0)]
    error_rate: f64,
    /// Sibling window size.
    #[arg(long, default_value_t = crate::construction::DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// JSON array of extra numbering patterns.
    #[arg(long)]
    patterns: Option<PathBuf>,
    /// Also train a heading classifier and store it in the model file.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    heading_model: bool,
    /// Write the training tuples as JSON Lines for auditing.
    #[arg(long)]
    tuples_out: Option<PathBuf>,
    /// Queries and relevance labels for training a passage ranker.
    #[arg(long, requires_all = ["qrels", "rank_out"])]
    queries: Option<PathBuf>,
    #[arg(long)]
    qrels: Option<PathBuf>,
    #[arg(long)]
    rank_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct InferArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "r2l")]
    order: OrderArg,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    #[arg(long, value_enum, default_value = "2step")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "auto")]
    headings: HeadingSource,
    #[arg(long)]
    patterns: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-document CSV: doc_id, n_objects, n_headings, inquiries, wall_ms.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    gold: PathBuf,
    /// Documents matching the gold trees; placeholders are used when omitted.
    #[arg(long)]
    docs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct RetrieveArgs {
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    trees: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Ranker weights; BM25 alone when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Relevance labels; when given, mAP and recall are written next to the run.
    #[arg(long)]
    qrels: Option<PathBuf>,
}

/// Writes `<stem>.config.json` next to `out` (or `config.json` inside a directory).
fn echo_config<T: Serialize>(out: &Path, subcommand: &str, args: &T, is_dir: bool) -> Result<()> {
    let path = if is_dir {
        out.join("config.json")
    } else {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.config.json"))
    };
    #[derive(Serialize)]
    struct Echo<'a, T> {
        subcommand: &'a str,
        version: &'a str,
        args: &'a T,
    }
    write_json(
        &path,
        &Echo {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            args,
        },
    )
}

fn load_patterns(path: Option<&Path>) -> Result<PatternLibrary> {
    match path {
        None => Ok(PatternLibrary::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            PatternLibrary::with_extensions_json(&text)
        }
    }
}

/// Pairs documents with trees by doc_id, in document order.
fn pair_trees(docs: Vec<Document>, trees: Vec<(String, HierarchyTree)>) -> Result<Vec<(Document, HierarchyTree)>> {
    let mut by_id: HashMap<String, HierarchyTree> = trees.into_iter().collect();
    docs.into_iter()
        .map(|d| {
            let t = by_id
                .remove(&d.doc_id)
                .ok_or_else(|| Error::Mismatch(format!("no tree for document {}", d.doc_id)))?;
            if t.len() != d.len() {
                return Err(Error::Mismatch(format!(
                    "tree for {} has {} nodes, document has {} objects",
                    d.doc_id,
                    t.len(),
                    d.len()
                )));
            }
            Ok((d, t))
        })
        .collect()
}

fn gen_corpus(args: &GenCorpusArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => CorpusConfig::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => CorpusConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_docs {
        cfg.n_docs = n;
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let corpus = generate(&cfg)?;
    let n_queries = args.queries.unwrap_or(3 * cfg.n_docs);
    let (queries, qrels) = generate_retrieval_labels(&corpus, n_queries, cfg.seed);
    let docs: Vec<Document> = corpus.iter().map(|(d, _)| d.clone()).collect();
    write_documents(&args.out_dir.join("docs.jsonl"), &docs)?;
    write_trees(
        &args.out_dir.join("gold.json"),
        corpus.iter().map(|(d, t)| (d.doc_id.as_str(), t)),
    )?;
    write_jsonl(&args.out_dir.join("queries.jsonl"), &queries)?;
    write_jsonl(&args.out_dir.join("qrels.jsonl"), &qrels)?;
    write_json(&args.out_dir.join("corpus_config.json"), &cfg)?;
    echo_config(&args.out_dir, "gen-corpus", args, true)?;
    info!("wrote {} documents and {} queries", docs.len(), queries.len());
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let patterns = load_patterns(args.patterns.as_deref())?;
    let corpus = pair_trees(read_documents(&args.docs)?, read_trees(&args.gold)?)?;
    let mode = match args.mode {
        ModeArg::OneStep => TrainingMode::OneStep,
        ModeArg::TwoStep => TrainingMode::TwoStep,
    };
    if !(0.0..1.0).contains(&args.error_rate) {
        return Err(Error::Config(format!("error rate must lie in [0, 1), got {}", args.error_rate)));
    }
    if mode == TrainingMode::TwoStep {
        if let Some((d, _)) = corpus.iter().find(|(d, _)| !d.has_heading_annotations()) {
            return Err(Error::InvalidDocument {
                doc_id: d.doc_id.clone(),
                message: "two-step training needs is_heading annotations".into(),
            });
        }
    }
    let cfg = ScorerTraining {
        mode,
        window: args.window,
        error_rate: args.error_rate,
        seed: args.seed,
        logistic: LogisticConfig {
            seed: args.seed,
            ..LogisticConfig::default()
        },
    };
    let data = corpus
        .par_iter()
        .enumerate()
        .map(|(k, (doc, gold))| {
            let seed = crate::synth::doc_seed(args.seed, k);
            document_tuples(doc, gold, &cfg, seed).map(|t| (doc, t))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = &args.tuples_out {
        write_jsonl(p, data.iter().flat_map(|(d, t)| tuple_records(d, t, &patterns)))?;
    }
    let (scorer, report) = train_linear_scorer(&data, patterns.clone(), args.window, &cfg.logistic)?;
    info!(
        "scorer: {} epochs, final train loss {:.5}, {} backoffs",
        report.train_loss.len(),
        report.train_loss.last().copied().unwrap_or(f64::NAN),
        report.backoffs
    );
    if let Some(auc) = tuple_auc(&scorer, &data)? {
        info!("scorer: training tuple AUC {auc:.4}");
    }
    let mut file = scorer.to_file();
    if args.heading_model && corpus.iter().all(|(d, _)| d.has_heading_annotations()) {
        let docs: Vec<&Document> = corpus.iter().map(|(d, _)| d).collect();
        let (hc, _) = LogisticHeadingClassifier::train(&docs, patterns.clone(), &cfg.logistic)?;
        file.heading_model = Some(hc.to_file());
    }
    write_json(&args.out, &file)?;

    if let (Some(qp), Some(rp), Some(out)) = (&args.queries, &args.qrels, &args.rank_out) {
        let queries = read_queries(qp)?;
        let qrels = group_qrels(&read_qrels(rp)?);
        let stats: Vec<DocStats> = corpus.par_iter().map(|(d, _)| DocStats::new(d)).collect();
        let lookup = corpus
            .iter()
            .zip(&stats)
            .map(|((d, t), s)| (d.doc_id.clone(), (d, t, s)))
            .collect();
        let samples = training_samples(&queries, &lookup, &qrels)?;
        let ranker = LinearRanker::fit(&samples, [true; 5])?;
        write_json(out, &ranker)?;
    }
    echo_config(&args.out, "train", args, false)
}

fn load_model(path: &Path, patterns: PatternLibrary) -> Result<(LinearScorer, Option<LogisticHeadingClassifier>)> {
    let file: ModelFile = read_json(path)?;
    let heading = file
        .heading_model
        .as_ref()
        .map(|h| LogisticHeadingClassifier::from_file(h, patterns.clone()))
        .transpose()?;
    Ok((LinearScorer::from_file(&file, patterns)?, heading))
}

fn heading_flags(
    doc: &Document,
    source: HeadingSource,
    model: Option<&LogisticHeadingClassifier>,
    patterns: &PatternLibrary,
) -> Result<Vec<bool>> {
    let rules = || {
        RuleHeadingClassifier {
            patterns: patterns.clone(),
        }
        .classify(doc)
    };
    Ok(match source {
        HeadingSource::Annotated => {
            if !doc.has_heading_annotations() {
                return Err(Error::InvalidDocument {
                    doc_id: doc.doc_id.clone(),
                    message: "no is_heading annotations".into(),
                });
            }
            AnnotatedHeadings.classify(doc)
        }
        HeadingSource::Model => model
            .ok_or_else(|| Error::Model("model file has no heading classifier".into()))?
            .classify(doc),
        HeadingSource::Rules => rules(),
        HeadingSource::Auto => {
            if doc.has_heading_annotations() {
                AnnotatedHeadings.classify(doc)
            } else if let Some(m) = model {
                m.classify(doc)
            } else {
                rules()
            }
        }
    })
}

fn infer_cmd(args: &InferArgs) -> Result<()> {
    if args.beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    let patterns = load_patterns(args.patterns.as_deref())?;
    let (scorer, heading_model) = load_model(&args.model, patterns.clone())?;
    let docs = read_documents(&args.docs)?;
    let cfg = InferenceConfig {
        order: args.order.into(),
        mode: args.mode.into(),
        beam: args.beam,
    };
    let results = docs
        .par_iter()
        .map(|doc| {
            let start = Instant::now();
            let flags = match cfg.mode {
                Mode::TwoStep => Some(heading_flags(doc, args.headings, heading_model.as_ref(), &patterns)?),
                Mode::OneStep => None,
            };
            let r = infer(doc, &scorer, &cfg, flags.as_deref(), scorer.window)?;
            let n_headings = flags.map_or(0, |f| f.iter().filter(|&&h| h).count());
            Ok((r, n_headings, start.elapsed().as_millis()))
        })
        .collect::<Result<Vec<_>>>()?;
    write_trees(
        &args.out,
        docs.iter().zip(&results).map(|(d, (r, _, _))| (d.doc_id.as_str(), &r.tree)),
    )?;
    if let Some(p) = &args.stats {
        let mut w = csv::Writer::from_path(p).map_err(|e| csv_err(p, e))?;
        w.write_record(["doc_id", "n_objects", "n_headings", "inquiries", "wall_ms"])
            .map_err(|e| csv_err(p, e))?;
        for (d, (r, h, ms)) in docs.iter().zip(&results) {
            w.write_record([
                d.doc_id.clone(),
                d.len().to_string(),
                h.to_string(),
                r.inquiries.to_string(),
                ms.to_string(),
            ])
            .map_err(|e| csv_err(p, e))?;
        }
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    echo_config(&args.out, "infer", args, false)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

#[derive(Serialize)]
struct DocumentRow {
    doc_id: String,
    n_nodes: usize,
    node_accuracy: f64,
    legacy_depth_accuracy: f64,
}

#[derive(Serialize)]
struct FullReport {
    #[serde(flatten)]
    report: EvalReport,
    documents: Vec<DocumentRow>,
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let pred: HashMap<String, HierarchyTree> = read_trees(&args.pred)?.into_iter().collect();
    let gold = read_trees(&args.gold)?;
    let mut total = EvalCounts::default();
    let mut documents = Vec::with_capacity(gold.len());
    for (id, g) in &gold {
        let p = pred
            .get(id)
            .ok_or_else(|| Error::Mismatch(format!("no predicted tree for {id}")))?;
        let mut c = EvalCounts::default();
        c.add(p, g)?;
        let r = c.report();
        documents.push(DocumentRow {
            doc_id: id.clone(),
            n_nodes: r.n_nodes,
            node_accuracy: r.node_accuracy,
            legacy_depth_accuracy: r.legacy_depth_accuracy,
        });
        total.merge(&c);
    }
    write_json(
        &args.out,
        &FullReport {
            report: total.report(),
            documents,
        },
    )?;
    echo_config(&args.out, "eval", args, false)
}

/// Stand-in document with `n` plain paragraphs; the oracle ignores content.
fn placeholder(doc_id: &str, n: usize) -> Result<Document> {
    let objects = (0..n)
        .map(|i| PhysicalObject::paragraph(i, format!("object {i}"), FormatAttrs::default()))
        .collect();
    Document::new(doc_id, objects)
}

fn bench(args: &BenchArgs) -> Result<()> {
    let trees = read_trees(&args.gold)?;
    let corpus = match &args.docs {
        Some(p) => pair_trees(read_documents(p)?, trees)?,
        None => trees
            .into_iter()
            .map(|(id, t)| Ok((placeholder(&id, t.len())?, t)))
            .collect::<Result<Vec<_>>>()?,
    };
    let rows = corpus
        .par_iter()
        .map(|(d, t)| traversal_stats(d, t))
        .collect::<Result<Vec<_>>>()?;
    let p = &args.out;
    let mut w = csv::Writer::from_path(p).map_err(|e| csv_err(p, e))?;
    w.write_record([
        "doc_id",
        "n_objects",
        "internal_count",
        "leaf_count",
        "rightmost_branch_length",
        "empirical_all",
        "empirical_r2l",
        "empirical_l2r",
        "formula_all",
        "formula_r2l",
        "formula_l2r",
    ])
    .map_err(|e| csv_err(p, e))?;
    for ((d, _), s) in corpus.iter().zip(&rows) {
        let e = |o| s.empirical[&o].to_string();
        w.write_record([
            d.doc_id.clone(),
            d.len().to_string(),
            s.internal_count.to_string(),
            s.leaf_count.to_string(),
            s.rightmost_branch_length.to_string(),
            e(TraversalOrder::TraversalAll),
            e(TraversalOrder::RootToLeaf),
            e(TraversalOrder::LeafToRoot),
            s.formula_all.to_string(),
            s.formula_r2l.to_string(),
            s.formula_l2r.to_string(),
        ])
        .map_err(|e| csv_err(p, e))?;
    }
    w.flush().map_err(|e| Error::io(p, e))?;
    echo_config(&args.out, "bench-traversal", args, false)
}

fn retrieve(args: &RetrieveArgs) -> Result<()> {
    let ranker = match &args.model {
        Some(p) => {
            let r: LinearRanker = read_json(p)?;
            r.validate()?;
            r
        }
        None => LinearRanker::bm25_only(),
    };
    let corpus = pair_trees(read_documents(&args.docs)?, read_trees(&args.trees)?)?;
    let queries = read_queries(&args.queries)?;
    let stats: HashMap<&str, (usize, DocStats)> = corpus
        .par_iter()
        .enumerate()
        .map(|(k, (d, _))| (d.doc_id.as_str(), (k, DocStats::new(d))))
        .collect();
    let runs = queries
        .iter()
        .map(|q| {
            let (k, s) = stats
                .get(q.doc_id.as_str())
                .ok_or_else(|| Error::Mismatch(format!("query {} names unknown document {}", q.query_id, q.doc_id)))?;
            let (d, t) = &corpus[*k];
            rank_passages(q, d, t, s, &ranker)
        })
        .collect::<Result<Vec<_>>>()?;
    let p = &args.out;
    let file = File::create(p).map_err(|e| Error::io(p, e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "query_id\tpassage_id\trank\tscore").map_err(|e| Error::io(p, e))?;
    for (q, run) in queries.iter().zip(&runs) {
        for (rank, (pid, score)) in run.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}\t{:.6}", q.query_id, pid, rank + 1, score).map_err(|e| Error::io(p, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(p, e))?;
    if let Some(rp) = &args.qrels {
        let qrels = group_qrels(&read_qrels(rp)?);
        let rankings: Vec<Vec<usize>> = runs.iter().map(|r| r.iter().map(|x| x.0).collect()).collect();
        let empty = Default::default();
        let metrics = ranking_metrics(queries.iter().zip(&rankings).map(|(q, r)| {
            (
                r.as_slice(),
                qrels.get(&(q.query_id.clone(), q.doc_id.clone())).unwrap_or(&empty),
            )
        }));
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        write_json(&p.with_file_name(format!("{stem}.metrics.json")), &metrics)?;
    }
    echo_config(&args.out, "retrieve", args, false)
}

/// Exit code for an error category.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Validation => 2,
        ErrorKind::Io => 3,
        ErrorKind::Model => 4,
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train(a),
        Command::Infer(a) => infer_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::BenchTraversal(a) => bench(a),
        Command::Retrieve(a) => retrieve(a),
    }
}

/// Parses `argv`, runs the subcommand, and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build();
    let result = match pool {
        Ok(pool) => pool.install(|| dispatch(&cli)),
        Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e.kind())
        }
    }
}
