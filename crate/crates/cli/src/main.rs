//! Command line front end: wires file formats to the analysis library and
//! maps errors onto the documented exit codes (0 success, 1 usage,
//! 2 bad data, 3 I/O).
//!
//! Every analysis writes one JSON report plus a CSV per table, atomically,
//! so a failing run never leaves partial outputs. Reports embed input
//! digests and seeds instead of timestamps; reruns are byte-identical.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use negmt_core::attnflow::{flow_report, read_cue_labels, HeadMode};
use negmt_core::chart::{emit_chart, ChartKind};
use negmt_core::contrastive::chinese::{chinese_variants, ChineseCues};
use negmt_core::contrastive::german::{german_variants, GermanVocabulary};
use negmt_core::contrastive::scoring::{contrastive_accuracy, read_scores_jsonl};
use negmt_core::contrastive::{read_instances_jsonl, write_instances_jsonl, ContrastiveInstance};
use negmt_core::cuescan::{
    filter_matched, mismatch_table, CueLexicon, FilterPolicy, OVERTRIGGER_CAVEAT,
};
use negmt_core::error::{Error, Result};
use negmt_core::negdata::negpar::parse_negpar;
use negmt_core::negdata::subword::{align_subwords, ContinuationStyle};
use negmt_core::negdata::{
    corpus_stats, read_aligned_jsonl, write_aligned_jsonl, AlignedSentence, Split,
};
use negmt_core::probe::{
    layer_sweep, mean_dev_f1, sweep_table, token_dataset, train_probe, Pooling, ProbeTask,
    TrainConfig,
};
use negmt_core::report::{write_atomic, Cell, Report, Table};
use negmt_core::reprsim::{sim_sweep, sim_table, LayerRef};
use negmt_core::tracestore::container::{read_traceset, write_traceset};
use negmt_core::tracestore::{synth_traceset, Side, TraceDims, TraceFlags};

/// Default base seed for anything randomized; documented so published
/// fixture outputs stay stable.
const DEFAULT_SEED: u64 = 17;
const DEFAULT_EPOCHS: usize = 100;
const DEFAULT_SEED_COUNT: usize = 5;
const DEFAULT_HIDDEN: usize = 512;

#[derive(Parser)]
#[command(
    name = "negmt",
    version,
    about = "Negation-focused MT evaluation: contrastive sets, attention flow, probes, corpus scans",
    after_help = "Exit codes: 0 success, 1 usage, 2 invalid data, 3 I/O.\n\
                  Output paths resolve against --out-dir, then the config file's out_dir,\n\
                  then $NEGMT_OUT_DIR, then the working directory."
)]
struct Cli {
    /// JSON config file; explicit flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for output files with relative paths
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a column-format annotation file into the aligned corpus format
    Ingest(IngestArgs),
    /// Build or score contrastive translation sets
    #[command(subcommand)]
    Contrastive(ContrastiveCmd),
    /// Attention flow from decoder positions back to source cue embeddings
    Flow(FlowArgs),
    /// Train token-classification probes on exported hidden states
    Probe(ProbeArgs),
    /// Cosine similarity between cue, event, scope and outside tokens
    Sim(SimArgs),
    /// Tabulate negation-cue presence across a parallel corpus
    Scan(ScanArgs),
    /// Create or check trace container files
    #[command(subcommand)]
    Trace(TraceCmd),
    /// Re-render a table from an existing JSON report
    Report(ReportArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Column-format annotation file
    #[arg(long, value_name = "FILE")]
    annotations: PathBuf,
    /// Corpus split the file belongs to
    #[arg(long, value_name = "train|dev|test")]
    split: String,
    /// Subword pieces, one whitespace-separated line per sentence
    #[arg(long, value_name = "FILE")]
    subwords: Option<PathBuf>,
    /// Continuation marker for subword pieces
    #[arg(long, default_value = "@@", value_name = "STR")]
    marker: String,
    /// Whether the marker suffixes non-final or prefixes non-initial pieces
    #[arg(long, default_value = "suffix", value_name = "suffix|prefix")]
    marker_style: String,
    /// Output corpus (JSONL); the report lands next to it
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ContrastiveCmd {
    /// Generate polarity-flipped variants from tokenized reference text
    Gen(GenArgs),
    /// Aggregate model scores over a generated set
    Score(ScoreArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Rule set to apply
    #[arg(long, value_name = "de|zh")]
    lang: String,
    /// Tokenized references, one sentence per line
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Tokenized source sentences aligned line-by-line with --input
    #[arg(long, value_name = "FILE")]
    source: Option<PathBuf>,
    /// Vocabulary for the German affix rules (defaults to the input's own words)
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Surface form used by the Chinese insertion rule
    #[arg(long, value_name = "STR")]
    insertion_form: Option<String>,
    /// Output instances (JSONL)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Generated instances (JSONL)
    #[arg(long, value_name = "FILE")]
    instances: PathBuf,
    /// Per-token model log-probabilities (JSONL)
    #[arg(long, value_name = "FILE")]
    scores: PathBuf,
    /// Report output (JSON; tables land next to it)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Also render the accuracy table as a bar chart
    #[arg(long)]
    chart: bool,
}

#[derive(Args)]
struct FlowArgs {
    /// Trace container
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Cue labels CSV (pair_id,src_pos,category)
    #[arg(long, value_name = "FILE")]
    labels: PathBuf,
    /// Decoder layers, e.g. "1,2,3" or "1..6" (inclusive)
    #[arg(long, value_name = "LIST")]
    layers: String,
    /// How attention heads combine
    #[arg(long, value_name = "average|max")]
    head_mode: Option<String>,
    /// Report output (JSON)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    /// Training corpus (aligned JSONL)
    #[arg(long, value_name = "FILE")]
    train: PathBuf,
    /// Development corpus (aligned JSONL)
    #[arg(long, value_name = "FILE")]
    dev: PathBuf,
    /// Trace container holding both corpora's pairs
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// What the probe predicts
    #[arg(long, value_name = "cue|scope|event")]
    task: String,
    /// Which states to read (ignored with --sweep, which is encoder-only)
    #[arg(long, default_value = "enc", value_name = "enc|dec")]
    side: String,
    /// Layer to probe (0 = embeddings); required unless --sweep
    #[arg(long, value_name = "N")]
    layer: Option<usize>,
    /// Probe every encoder layer and report mean dev F1 per layer
    #[arg(long)]
    sweep: bool,
    /// One vector per word (subword mean) or per subword piece
    #[arg(long, default_value = "word", value_name = "word|subword")]
    pooling: String,
    /// Training epochs
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Number of seeds; runs use seed, seed+1, ...
    #[arg(long, value_name = "N")]
    seed_count: Option<usize>,
    /// Base seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Hidden layer width
    #[arg(long, value_name = "N")]
    hidden: Option<usize>,
    /// Report output (JSON)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    /// Annotated corpus (aligned JSONL)
    #[arg(long, value_name = "FILE")]
    corpus: PathBuf,
    /// Trace container
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Default side for bare layer numbers
    #[arg(long, default_value = "enc", value_name = "enc|dec")]
    side: String,
    /// Layers, e.g. "1..6,dec6"; bare numbers take --side (ranges inclusive)
    #[arg(long, value_name = "LIST")]
    layers: String,
    /// Also render the similarity sweep as a line chart
    #[arg(long)]
    chart: bool,
    /// Report output (JSON)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ScanArgs {
    /// Source-side text, one sentence per line
    #[arg(long, value_name = "FILE")]
    src: PathBuf,
    /// Target-side text, one sentence per line
    #[arg(long, value_name = "FILE")]
    tgt: PathBuf,
    /// Source lexicon JSON (default: built-in English word list)
    #[arg(long, value_name = "FILE")]
    src_lex: Option<PathBuf>,
    /// Target lexicon JSON (default: built-in Chinese character list)
    #[arg(long, value_name = "FILE")]
    tgt_lex: Option<PathBuf>,
    /// Write a filtered copy of the corpus
    #[arg(long, value_name = "drop_mismatch|keep_all_tagged")]
    filter: Option<String>,
    /// Path prefix for the filtered corpus files (required with --filter)
    #[arg(long, value_name = "PREFIX")]
    out_prefix: Option<PathBuf>,
    /// Report output (JSON)
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum TraceCmd {
    /// Generate a synthetic trace container for tests and demos
    Synth(SynthArgs),
    /// Decode a container and check every invariant
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 4, value_name = "N")]
    pairs: usize,
    #[arg(long, default_value_t = 3, value_name = "N")]
    enc_layers: usize,
    #[arg(long, default_value_t = 3, value_name = "N")]
    dec_layers: usize,
    #[arg(long, default_value_t = 4, value_name = "N")]
    heads: usize,
    #[arg(long, default_value_t = 6, value_name = "N")]
    src_len: usize,
    #[arg(long, default_value_t = 6, value_name = "N")]
    tgt_len: usize,
    #[arg(long, default_value_t = 8, value_name = "N")]
    hidden_dim: usize,
    /// Output container file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Trace container to check
    #[arg(long, value_name = "FILE")]
    traces: PathBuf,
    /// Optional report output (JSON)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Existing report JSON
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Table name inside the report
    #[arg(long, value_name = "NAME")]
    table: String,
    /// Output format
    #[arg(long, value_name = "csv|svg")]
    format: String,
    /// Chart kind for SVG output
    #[arg(long, default_value = "lines", value_name = "bars|lines")]
    kind: String,
    /// Output file
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Config file contents. Explicit flags win over these; built-in defaults
/// fill whatever remains.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: Option<PathBuf>,
    epochs: Option<usize>,
    seed_count: Option<usize>,
    hidden: Option<usize>,
    head_mode: Option<String>,
    insertion_form: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::invalid_input(format!("bad config {}: {e}", path.display())))
    }
}

struct Ctx {
    config: FileConfig,
    out_dir: PathBuf,
    command_echo: String,
}

impl Ctx {
    /// Relative output paths land in the resolved output directory.
    fn out_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.config.seed).unwrap_or(DEFAULT_SEED)
    }

    fn head_mode(&self, flag: Option<&str>) -> Result<HeadMode> {
        match flag.or(self.config.head_mode.as_deref()) {
            Some(s) => s.parse(),
            None => Ok(HeadMode::Average),
        }
    }

    fn new_report(&self) -> Report {
        Report::new(self.command_echo.clone())
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version are not usage errors
            let code = i32::from(e.use_stderr());
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => 1,
        Error::Parse { .. } | Error::Validation(_) | Error::Format(_) => 2,
        Error::Io(_) => 3,
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs.or(config.jobs) {
        if jobs == 0 {
            return Err(Error::invalid_input("--jobs must be positive"));
        }
        // a pool can only be installed once per process; fine for a CLI
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::invalid_input(format!("cannot size thread pool: {e}")))?;
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os("NEGMT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let command_echo: String = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    let ctx = Ctx { config, out_dir, command_echo };

    match cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, args),
        Command::Contrastive(ContrastiveCmd::Gen(args)) => cmd_gen(&ctx, args),
        Command::Contrastive(ContrastiveCmd::Score(args)) => cmd_score(&ctx, args),
        Command::Flow(args) => cmd_flow(&ctx, args),
        Command::Probe(args) => cmd_probe(&ctx, args),
        Command::Sim(args) => cmd_sim(&ctx, args),
        Command::Scan(args) => cmd_scan(&ctx, args),
        Command::Trace(TraceCmd::Synth(args)) => cmd_synth(&ctx, args),
        Command::Trace(TraceCmd::Validate(args)) => cmd_validate(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

/// Writes the JSON report plus one CSV per table, all atomic.
fn emit_report(report: &Report, json_path: &Path) -> Result<()> {
    write_atomic(json_path, report.to_json()?.as_bytes())?;
    for table in &report.tables {
        let csv_path = sibling(json_path, &table.name, "csv");
        write_atomic(&csv_path, table.to_csv()?.as_bytes())?;
    }
    Ok(())
}

/// `report.json` + "attention_flow" + "csv" → `report.attention_flow.csv`.
fn sibling(path: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn parse_side(s: &str) -> Result<Side> {
    match s.to_ascii_lowercase().as_str() {
        "enc" | "encoder" => Ok(Side::Encoder),
        "dec" | "decoder" => Ok(Side::Decoder),
        other => Err(Error::invalid_input(format!("unknown side {other:?} (expected enc or dec)"))),
    }
}

/// "1,3,5..7" → [1, 3, 5, 6, 7]; ranges are inclusive.
fn parse_layer_list(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(Error::invalid_input(format!("empty entry in layer list {s:?}")));
        }
        let (lo, hi) = match item.split_once("..") {
            Some((a, b)) => (parse_layer_number(a)?, parse_layer_number(b)?),
            None => {
                let n = parse_layer_number(item)?;
                (n, n)
            }
        };
        if lo > hi {
            return Err(Error::invalid_input(format!("descending layer range {item:?}")));
        }
        out.extend(lo..=hi);
    }
    Ok(out)
}

fn parse_layer_number(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid_input(format!("layer {s:?} is not a number")))
}

/// "1..2,dec6" with default side enc → [ENC1, ENC2, DEC6].
fn parse_layer_refs(s: &str, default_side: Side) -> Result<Vec<LayerRef>> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        let lower = item.to_ascii_lowercase();
        let (side, rest) = if let Some(rest) = lower.strip_prefix("enc") {
            (Side::Encoder, rest)
        } else if let Some(rest) = lower.strip_prefix("dec") {
            (Side::Decoder, rest)
        } else {
            (default_side, lower.as_str())
        };
        for layer in parse_layer_list(rest)? {
            out.push(LayerRef { side, layer });
        }
    }
    Ok(out)
}

fn cmd_ingest(ctx: &Ctx, args: IngestArgs) -> Result<()> {
    let split: Split = args.split.parse()?;
    let style = match args.marker_style.to_ascii_lowercase().as_str() {
        "suffix" => ContinuationStyle::Suffix(args.marker.clone()),
        "prefix" => ContinuationStyle::Prefix(args.marker.clone()),
        other => {
            return Err(Error::invalid_input(format!(
                "unknown marker style {other:?} (expected suffix or prefix)"
            )))
        }
    };

    let text = std::fs::read_to_string(&args.annotations)?;
    let doc = parse_negpar(&text, split)?;

    let piece_lines: Option<Vec<Vec<String>>> = match &args.subwords {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let lines: Vec<Vec<String>> = text
                .lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect();
            if lines.len() != doc.len() {
                return Err(Error::validation(format!(
                    "{} subword lines for {} sentences",
                    lines.len(),
                    doc.len()
                )));
            }
            Some(lines)
        }
    };

    let mut corpus = Vec::with_capacity(doc.len());
    for (i, entry) in doc.entries.iter().enumerate() {
        let alignment = match &piece_lines {
            None => None,
            Some(lines) => Some(
                align_subwords(&entry.sentence.tokens, &lines[i], &style).map_err(|e| {
                    Error::validation(format!("sentence {}: {e}", entry.sentence_id))
                })?,
            ),
        };
        corpus.push(AlignedSentence {
            pair_id: entry.sentence_id.clone(),
            sentence: entry.sentence.clone(),
            alignment,
        });
    }

    let out = ctx.out_path(&args.out);
    write_aligned_jsonl(&corpus, &out)?;

    let counts = corpus_stats(corpus.iter().map(|c| &c.sentence));
    let mut table = Table::new("corpus", ["metric", "value"]);
    for (metric, value) in [
        ("sentences", counts.sentences),
        ("instances", counts.instances),
        ("with_cue", counts.with_cue),
        ("with_event", counts.with_event),
        ("with_scope", counts.with_scope),
    ] {
        table.push_row(vec![Cell::from(metric), Cell::from(value as i64)]);
    }

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.annotations)?;
    if let Some(p) = &args.subwords {
        report.provenance.add_input(p)?;
    }
    report.tables.push(table);
    emit_report(&report, &sibling(&out, "report", "json"))?;
    println!("ingested {} sentences -> {}", corpus.len(), out.display());
    Ok(())
}

fn cmd_gen(ctx: &Ctx, args: GenArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let references: Vec<Vec<String>> = text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect();

    let sources: Option<Vec<Vec<String>>> = match &args.source {
        None => None,
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let lines: Vec<Vec<String>> = text
                .lines()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect();
            if lines.len() != references.len() {
                return Err(Error::validation(format!(
                    "{} source lines for {} references",
                    lines.len(),
                    references.len()
                )));
            }
            Some(lines)
        }
    };

    enum Rules {
        German(GermanVocabulary),
        Chinese(ChineseCues),
    }
    let rules = match args.lang.to_ascii_lowercase().as_str() {
        "de" => {
            let vocab = match &args.vocab {
                // one word per line, # comments
                Some(path) => GermanVocabulary::from_text(&std::fs::read_to_string(path)?),
                // the affix rules check candidate words against a vocabulary;
                // without an external one the input corpus itself serves
                None => GermanVocabulary::from_words(references.iter().flatten()),
            };
            Rules::German(vocab)
        }
        "zh" => {
            let form = args
                .insertion_form
                .as_deref()
                .or(ctx.config.insertion_form.as_deref());
            Rules::Chinese(match form {
                Some(f) => {
                    let standard = ChineseCues::standard();
                    ChineseCues::new(standard.forms().iter().cloned(), f)
                }
                None => ChineseCues::standard(),
            })
        }
        other => {
            return Err(Error::invalid_input(format!(
                "unknown rule set {other:?} (expected de or zh)"
            )))
        }
    };

    let mut instances = Vec::new();
    let mut skipped = 0usize;
    for (i, reference_tokens) in references.iter().enumerate() {
        if reference_tokens.is_empty() {
            skipped += 1;
            continue;
        }
        let variants = match &rules {
            Rules::German(vocab) => german_variants(reference_tokens, vocab),
            Rules::Chinese(cues) => chinese_variants(reference_tokens, cues),
        };
        if variants.is_empty() {
            skipped += 1;
            continue;
        }
        instances.push(ContrastiveInstance {
            instance_id: format!("line-{:05}", i + 1),
            source_tokens: sources.as_ref().map(|s| s[i].clone()),
            reference_tokens: reference_tokens.clone(),
            variants,
        });
    }

    let out = ctx.out_path(&args.out);
    let mut buf = Vec::new();
    write_instances_jsonl(&mut buf, &instances)?;
    write_atomic(&out, &buf)?;

    let mut by_rule: BTreeMap<(String, String), usize> = BTreeMap::new();
    for inst in &instances {
        for v in &inst.variants {
            *by_rule.entry((v.rule_tag.clone(), v.direction.to_string())).or_default() += 1;
        }
    }
    let mut table = Table::new("contrastive_set", ["rule", "direction", "variants"]);
    for ((rule, direction), n) in &by_rule {
        table.push_row(vec![
            Cell::from(rule.clone()),
            Cell::from(direction.clone()),
            Cell::from(*n as i64),
        ]);
    }
    let mut totals = Table::new("generation", ["metric", "value"]);
    totals.push_row(vec![Cell::from("input_sentences"), Cell::from(references.len() as i64)]);
    totals.push_row(vec![Cell::from("instances"), Cell::from(instances.len() as i64)]);
    totals.push_row(vec![Cell::from("skipped_no_variants"), Cell::from(skipped as i64)]);

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.input)?;
    if let Some(p) = &args.vocab {
        report.provenance.add_input(p)?;
    }
    if let Some(p) = &args.source {
        report.provenance.add_input(p)?;
    }
    report.tables.push(table);
    report.tables.push(totals);
    emit_report(&report, &sibling(&out, "report", "json"))?;
    println!("generated {} instances -> {}", instances.len(), out.display());
    Ok(())
}

fn cmd_score(ctx: &Ctx, args: ScoreArgs) -> Result<()> {
    let instances = read_instances_jsonl(BufReader::new(std::fs::File::open(&args.instances)?))?;
    let scores = read_scores_jsonl(BufReader::new(std::fs::File::open(&args.scores)?))?;
    let summary = contrastive_accuracy(&instances, &scores)?;

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.instances)?;
    report.provenance.add_input(&args.scores)?;
    report.warnings = summary.warnings.clone();
    report.tables.push(summary.to_table());

    let out = ctx.out_path(&args.out);
    emit_report(&report, &out)?;
    if args.chart {
        let svg = emit_chart(&summary.to_table(), ChartKind::Bars)?;
        write_atomic(&sibling(&out, "accuracy", "svg"), svg.as_bytes())?;
    }
    println!(
        "scored {} instances, overall accuracy {:.4}",
        summary.overall_total,
        summary.overall_accuracy()
    );
    Ok(())
}

fn cmd_flow(ctx: &Ctx, args: FlowArgs) -> Result<()> {
    let layers = parse_layer_list(&args.layers)?;
    let mode = ctx.head_mode(args.head_mode.as_deref())?;
    let set = read_traceset(&args.traces)?;
    for &layer in &layers {
        if layer == 0 || layer > set.dims().dec_layers {
            return Err(Error::invalid_input(format!(
                "layer {layer} outside the decoder range 1..={}",
                set.dims().dec_layers
            )));
        }
    }
    let labels = read_cue_labels(&args.labels)?;
    let flow = flow_report(&set, &labels, &layers, mode)?;

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.traces)?;
    report.provenance.add_input(&args.labels)?;
    report.warnings = flow.warnings.clone();
    report.tables.push(flow.to_table());
    let out = ctx.out_path(&args.out);
    emit_report(&report, &out)?;
    println!("flow over {} layers -> {}", layers.len(), out.display());
    Ok(())
}

fn cmd_probe(ctx: &Ctx, args: ProbeArgs) -> Result<()> {
    let task: ProbeTask = args.task.parse()?;
    let pooling: Pooling = args.pooling.parse()?;
    let side = parse_side(&args.side)?;
    let base_seed = ctx.seed(args.seed);
    let seed_count = args.seed_count.or(ctx.config.seed_count).unwrap_or(DEFAULT_SEED_COUNT);
    if seed_count == 0 {
        return Err(Error::invalid_input("--seed-count must be positive"));
    }
    let config = TrainConfig {
        epochs: args.epochs.or(ctx.config.epochs).unwrap_or(DEFAULT_EPOCHS),
        seeds: (0..seed_count as u64).map(|i| base_seed.wrapping_add(i)).collect(),
        hidden: args.hidden.or(ctx.config.hidden).unwrap_or(DEFAULT_HIDDEN),
        ..TrainConfig::default()
    };

    let train_corpus = read_aligned_jsonl(&args.train)?;
    let dev_corpus = read_aligned_jsonl(&args.dev)?;
    let traces = read_traceset(&args.traces)?;

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.train)?;
    report.provenance.add_input(&args.dev)?;
    report.provenance.add_input(&args.traces)?;
    report.provenance.seeds = config.seeds.clone();

    if args.sweep {
        let (rows, warnings) =
            layer_sweep(&train_corpus, &dev_corpus, &traces, task, pooling, &config)?;
        report.warnings = warnings;
        report.tables.push(sweep_table(&rows));
    } else {
        let Some(layer) = args.layer else {
            return Err(Error::invalid_input("pass --layer N or --sweep"));
        };
        let max = match side {
            Side::Encoder => traces.dims().enc_layers,
            Side::Decoder => traces.dims().dec_layers,
        };
        let min = usize::from(side == Side::Decoder); // decoder has no embedding row
        if layer < min || layer > max {
            return Err(Error::invalid_input(format!(
                "layer {layer} outside the {side} range {min}..={max}"
            )));
        }
        let (train, warnings) =
            token_dataset(&train_corpus, &traces, side, layer, task, pooling)?;
        let (dev, _) = token_dataset(&dev_corpus, &traces, side, layer, task, pooling)?;
        let probes = train_probe(&train, &dev, task, side, layer, &config)?;
        report.warnings = warnings;

        let mut runs = Table::new("probe_runs", ["seed", "best_dev_f1", "epoch_selected"]);
        for p in &probes {
            runs.push_row(vec![
                Cell::from(p.meta.seed as i64),
                Cell::from(p.meta.best_dev_f1),
                Cell::from(p.meta.epoch_selected as i64),
            ]);
        }
        let mut summary = Table::new(
            "probe_summary",
            ["task", "side", "layer", "mean_dev_f1", "seeds", "epochs"],
        );
        summary.push_row(vec![
            Cell::from(task.to_string()),
            Cell::from(side.to_string()),
            Cell::from(layer as i64),
            Cell::from(mean_dev_f1(&probes)),
            Cell::from(config.seeds.len() as i64),
            Cell::from(config.epochs as i64),
        ]);
        report.tables.push(runs);
        report.tables.push(summary);
    }

    let out = ctx.out_path(&args.out);
    emit_report(&report, &out)?;
    println!("probe report -> {}", out.display());
    Ok(())
}

fn cmd_sim(ctx: &Ctx, args: SimArgs) -> Result<()> {
    let side = parse_side(&args.side)?;
    let layers = parse_layer_refs(&args.layers, side)?;
    if layers.is_empty() {
        return Err(Error::invalid_input("no layers requested"));
    }
    let corpus = read_aligned_jsonl(&args.corpus)?;
    let traces = read_traceset(&args.traces)?;
    for l in &layers {
        let max = match l.side {
            Side::Encoder => traces.dims().enc_layers,
            Side::Decoder => traces.dims().dec_layers,
        };
        let min = usize::from(l.side == Side::Decoder);
        if l.layer < min || l.layer > max {
            return Err(Error::invalid_input(format!(
                "layer {l} outside the trace's range"
            )));
        }
    }
    let (rows, warnings) = sim_sweep(&corpus, &traces, &layers)?;
    let table = sim_table(&rows);

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.corpus)?;
    report.provenance.add_input(&args.traces)?;
    report.warnings = warnings;
    report.tables.push(table.clone());
    let out = ctx.out_path(&args.out);
    emit_report(&report, &out)?;
    if args.chart {
        let svg = emit_chart(&table, ChartKind::Lines)?;
        write_atomic(&sibling(&out, "similarity", "svg"), svg.as_bytes())?;
    }
    println!("similarity over {} layers -> {}", layers.len(), out.display());
    Ok(())
}

fn cmd_scan(ctx: &Ctx, args: ScanArgs) -> Result<()> {
    let src_lex = match &args.src_lex {
        Some(p) => CueLexicon::read(p)?,
        None => CueLexicon::english_default(),
    };
    let tgt_lex = match &args.tgt_lex {
        Some(p) => CueLexicon::read(p)?,
        None => CueLexicon::chinese_default(),
    };
    let src = BufReader::new(std::fs::File::open(&args.src)?);
    let tgt = BufReader::new(std::fs::File::open(&args.tgt)?);

    let table = match &args.filter {
        None => mismatch_table(src, tgt, &src_lex, &tgt_lex)?,
        Some(policy) => {
            let policy: FilterPolicy = policy.parse()?;
            let prefix = args.out_prefix.as_ref().ok_or_else(|| {
                Error::invalid_input("--filter needs --out-prefix for the filtered corpus")
            })?;
            let prefix = ctx.out_path(prefix);
            let mut out_src = Vec::new();
            let mut out_tgt = Vec::new();
            let mut tags = Vec::new();
            let wants_tags = policy == FilterPolicy::KeepAllTagged;
            let table = filter_matched(
                src,
                tgt,
                &src_lex,
                &tgt_lex,
                policy,
                &mut out_src,
                &mut out_tgt,
                wants_tags.then_some(&mut tags),
            )?;
            let ext = |side: &str| {
                let name = prefix.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
                prefix.with_file_name(format!("{name}.{side}"))
            };
            write_atomic(&ext("src"), &out_src)?;
            write_atomic(&ext("tgt"), &out_tgt)?;
            if wants_tags {
                write_atomic(&ext("tags"), &tags)?;
            }
            table
        }
    };

    let mut report = ctx.new_report();
    report.provenance.add_input(&args.src)?;
    report.provenance.add_input(&args.tgt)?;
    if let Some(p) = &args.src_lex {
        report.provenance.add_input(p)?;
    }
    if let Some(p) = &args.tgt_lex {
        report.provenance.add_input(p)?;
    }
    report.warnings.push(OVERTRIGGER_CAVEAT.to_string());
    if table.skipped > 0 {
        report.warnings.push(format!("{} undecodable lines skipped", table.skipped));
    }
    report.tables.push(table.to_table());
    let out = ctx.out_path(&args.out);
    emit_report(&report, &out)?;
    println!(
        "scanned {} pairs, mismatch rate {:.1}% -> {}",
        table.total(),
        table.mismatch_rate_percent(),
        out.display()
    );
    Ok(())
}

fn cmd_synth(ctx: &Ctx, args: SynthArgs) -> Result<()> {
    let dims = TraceDims {
        enc_layers: args.enc_layers,
        dec_layers: args.dec_layers,
        heads: args.heads,
        src_len: args.src_len,
        tgt_len: args.tgt_len,
        hidden_dim: args.hidden_dim,
    };
    dims.validate()?;
    let seed = ctx.seed(args.seed);
    let set = synth_traceset(seed, dims, args.pairs, TraceFlags::default());
    let out = ctx.out_path(&args.out);
    write_traceset(&set, &out)?;
    println!("wrote {} synthetic traces (seed {seed}) -> {}", set.len(), out.display());
    Ok(())
}

fn cmd_validate(ctx: &Ctx, args: ValidateArgs) -> Result<()> {
    // decoding re-runs every tensor invariant; reaching here means clean
    let set = read_traceset(&args.traces)?;
    let d = set.dims();
    let mut table = Table::new("trace_summary", ["pair_id", "src_len", "tgt_len"]);
    for trace in set.iter() {
        table.push_row(vec![
            Cell::from(trace.pair_id.clone()),
            Cell::from(trace.dims.src_len as i64),
            Cell::from(trace.dims.tgt_len as i64),
        ]);
    }
    if let Some(out) = &args.out {
        let mut report = ctx.new_report();
        report.provenance.add_input(&args.traces)?;
        report.tables.push(table);
        emit_report(&report, &ctx.out_path(out))?;
    }
    println!(
        "ok: {} traces, {} enc / {} dec layers, {} heads, hidden {}",
        set.len(),
        d.enc_layers,
        d.dec_layers,
        d.heads,
        d.hidden_dim
    );
    Ok(())
}

fn cmd_report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let report = Report::from_json(&std::fs::read_to_string(&args.input)?)?;
    let table = report.table(&args.table).ok_or_else(|| {
        let known: Vec<&str> = report.tables.iter().map(|t| t.name.as_str()).collect();
        Error::invalid_input(format!(
            "report has no table {:?}; it has {}",
            args.table,
            known.join(", ")
        ))
    })?;
    let bytes = match args.format.to_ascii_lowercase().as_str() {
        "csv" => table.to_csv()?.into_bytes(),
        "svg" => {
            let kind: ChartKind = args.kind.parse()?;
            emit_chart(table, kind)?.into_bytes()
        }
        other => {
            return Err(Error::invalid_input(format!(
                "unknown format {other:?} (expected csv or svg)"
            )))
        }
    };
    let out = ctx.out_path(&args.out);
    write_atomic(&out, &bytes)?;
    println!("rendered {} -> {}", args.table, out.display());
    Ok(())
}
