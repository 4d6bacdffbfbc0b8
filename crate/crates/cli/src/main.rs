//! `cqa`: benchmark generation, linearization, symbolic answering, training
//! and evaluation from one binary.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use cqa_core::eval::{evaluate, Filtering, Mode};
use cqa_core::graph::{load_dir, Dictionary, Layer, ENTITY_DICT_FILE, RELATION_DICT_FILE};
use cqa_core::linearize::{linearize, Vocabulary};
use cqa_core::query::{builtin_query_types, parse_formula, parse_grounded, parse_grounded_for, QueryType};
use cqa_core::sampler::{read_dataset, sample_dataset, summarize, write_dataset, Dataset, SamplerConfig};
use cqa_core::symbolic::answer;
use cqa_core::trainer::{dataset_vocabulary, read_checkpoint, train, write_checkpoint, TrainConfig};

#[derive(Parser, Debug)]
#[command(name = "cqa", version, about = "Complex query answering workbench")]
struct Cli {
    /// Worker threads (default: all cores). `1` makes every run bit-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a grounded query dataset from a knowledge graph.
    Generate(GenerateArgs),
    /// Print the token sequence of a grounded query.
    Linearize(LinearizeArgs),
    /// Print the answers of a grounded query on one graph layer.
    Answer(AnswerArgs),
    /// Train a query encoder.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Summarize a dataset or a checkpoint.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Directory with train.txt, valid.txt and test.txt.
    #[arg(long)]
    kg: PathBuf,
    /// fol, fol-ood, conj, conj-ood, or a file with one formula per line.
    #[arg(long, default_value = "fol")]
    types: String,
    /// Queries per type.
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layer the queries are grounded on.
    #[arg(long, default_value = "train")]
    layer: Layer,
    #[arg(long, default_value_t = 64)]
    max_retries: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LinearizeArgs {
    /// Grounded query, e.g. `(p,(7),(e,(12)))`.
    #[arg(long)]
    query: String,
    /// Resolve ids against this graph and print dictionary labels.
    #[arg(long)]
    kg: Option<PathBuf>,
    /// Print token ids instead of the bracketed form.
    #[arg(long)]
    ids: bool,
}

#[derive(Args, Debug)]
struct AnswerArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long, default_value = "train")]
    layer: Layer,
    #[arg(long)]
    query: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Override a configuration key, e.g. `--set epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Per-epoch JSON-lines log.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum EvalMode {
    Entailment,
    Inference,
    Both,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalMode::Both)]
    mode: EvalMode,
    /// Rank against every entity instead of filtering known answers.
    #[arg(long)]
    raw: bool,
    /// Also write one JSON object per metric to this file.
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[group(required = true, multiple = false)]
struct InspectArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

type Outcome = Result<(), Failure>;

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn context<E: std::fmt::Display>(path: &Path) -> impl FnOnce(E) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn short_hash(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn report_hash(h: &str) {
    eprintln!("config hash: {h}");
}

/// Writes to stdout; a closed pipe ends output quietly.
fn emit(text: &str) -> Outcome {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(data(e)),
        _ => Ok(()),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(context(path))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(context(path))
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    read_dataset(open(path)?).map_err(context(path))
}

fn query_types(spec: &str) -> Result<Vec<QueryType>, Failure> {
    let b = builtin_query_types();
    Ok(match spec {
        "fol" => b.in_distribution,
        "fol-ood" => b.out_of_distribution,
        "conj" => b.conjunctive_in,
        "conj-ood" => b.conjunctive_out,
        file => {
            let path = Path::new(file);
            if !path.is_file() {
                return Err(Failure::Usage(format!(
                    "--types must be fol, fol-ood, conj, conj-ood or an existing file, got {file:?}"
                )));
            }
            let mut out = Vec::new();
            for (i, line) in open(path)?.lines().enumerate() {
                let line = line.map_err(context(path))?;
                let f = line.split('#').next().unwrap_or("").trim();
                if f.is_empty() {
                    continue;
                }
                let t = parse_formula(f).map_err(|e| Failure::Data(format!("{file}:{}: {e}", i + 1)))?;
                out.push(t);
            }
            out
        }
    })
}

fn generate(a: &GenerateArgs) -> Outcome {
    let types = query_types(&a.types)?;
    let layers = load_dir(&a.kg).map_err(data)?;
    let cfg =
        SamplerConfig { per_type_count: a.count, seed: a.seed, max_retries: a.max_retries, source_layer: a.layer };
    report_hash(&cfg.hash(&types));
    let name = a.kg.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| a.kg.display().to_string());
    let outcome = sample_dataset(&layers, &types, &cfg, &name);
    for (formula, err) in &outcome.skipped {
        eprintln!("warning: skipped {formula}: {err}");
    }
    let mut w = create(&a.out)?;
    write_dataset(&mut w, &outcome.dataset).map_err(context(&a.out))?;
    w.flush().map_err(context(&a.out))?;
    eprintln!(
        "wrote {} queries over {} types to {}",
        outcome.dataset.records.len(),
        types.len() - outcome.skipped.len(),
        a.out.display()
    );
    Ok(())
}

fn load_label_dict(dir: &Path, name: &str) -> Result<Option<Dictionary>, Failure> {
    let p = dir.join(name);
    p.exists().then(|| Dictionary::load(&p)).transpose().map_err(data)
}

fn linearize_cmd(a: &LinearizeArgs) -> Outcome {
    report_hash(&short_hash(&format!("linearize;query={};kg={:?}", a.query, a.kg)));
    let (q, vocab, rels, ents) = match &a.kg {
        Some(dir) => {
            let layers = load_dir(dir).map_err(data)?;
            let q = parse_grounded_for(&a.query, &layers.test).map_err(data)?;
            let vocab = Vocabulary::for_graph(&layers.test);
            (q, vocab, load_label_dict(dir, RELATION_DICT_FILE)?, load_label_dict(dir, ENTITY_DICT_FILE)?)
        }
        None => {
            let q = parse_grounded(&a.query).map_err(data)?;
            let ne = q.anchors().iter().map(|e| e.index() + 1).max().unwrap_or(0);
            let nr = q.relations().iter().map(|r| r.index() + 1).max().unwrap_or(0);
            (q, Vocabulary::new(ne, nr), None, None)
        }
    };
    let seq = linearize(&q, &vocab).map_err(data)?;
    let text = if a.ids { seq.to_string() } else { seq.render_with(&vocab, rels.as_ref(), ents.as_ref()) };
    emit(&format!("{text}\n"))
}

fn answer_cmd(a: &AnswerArgs) -> Outcome {
    report_hash(&short_hash(&format!("answer;query={};layer={:?}", a.query, a.layer)));
    let layers = load_dir(&a.kg).map_err(data)?;
    let g = layers.get(a.layer);
    let q = parse_grounded_for(&a.query, g).map_err(data)?;
    let text: String = answer(g, &q).iter().map(|e| format!("{}\n", e.0)).collect();
    emit(&text)
}

fn train_cmd(a: &TrainArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.config).map_err(context(&a.config))?;
    let mut cfg = TrainConfig::default();
    cfg.apply(&text).map_err(context(&a.config))?;
    for kv in &a.overrides {
        cfg.apply_override(kv).map_err(|e| Failure::Usage(format!("--set {kv}: {e}")))?;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    report_hash(&cfg.hash());
    let ds = load_dataset(&a.data)?;
    let mut log = a.log.as_deref().map(create).transpose()?;
    let mut log_err = None;
    let outcome = train(&cfg, &ds, |r| {
        match &r.valid_mrr {
            Some(m) => eprintln!("epoch {:>4}  loss {:.6}  valid mrr {:.4}", r.epoch, r.loss, m),
            None => eprintln!("epoch {:>4}  loss {:.6}", r.epoch, r.loss),
        }
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(r).expect("plain data");
            if let Err(e) = writeln!(w, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })
    .map_err(data)?;
    if let Some(e) = log_err {
        return Err(data(e));
    }
    if let Some(mut w) = log {
        w.flush().map_err(data)?;
    }
    let mut w = create(&a.out)?;
    write_checkpoint(&mut w, &outcome.checkpoint).map_err(context(&a.out))?;
    w.flush().map_err(context(&a.out))?;
    eprintln!(
        "trained on {} pairs ({} records without train answers); wrote {}",
        outcome.pairs,
        outcome.skipped_records,
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Outcome {
    let ds = load_dataset(&a.data)?;
    let ckpt = read_checkpoint(open(&a.ckpt)?, Some(&dataset_vocabulary(&ds))).map_err(context(&a.ckpt))?;
    let filtering = if a.raw { Filtering::Raw } else { Filtering::Filtered };
    let modes: &[Mode] = match a.mode {
        EvalMode::Entailment => &[Mode::Entailment],
        EvalMode::Inference => &[Mode::Inference],
        EvalMode::Both => &[Mode::Entailment, Mode::Inference],
    };
    report_hash(&short_hash(&format!("eval;train={};modes={modes:?};filtering={filtering:?}", ckpt.config.hash())));
    let mut jsonl = a.jsonl.as_deref().map(create).transpose()?;
    let mut text = String::new();
    for (i, &mode) in modes.iter().enumerate() {
        let report = evaluate(&ckpt.model, &ds, mode, filtering).map_err(data)?;
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&report.to_table());
        if let Some(w) = jsonl.as_mut() {
            w.write_all(report.to_jsonl().as_bytes()).map_err(data)?;
        }
    }
    if let Some(mut w) = jsonl {
        w.flush().map_err(data)?;
    }
    emit(&text)
}

fn histogram_text(h: &[(usize, usize)]) -> String {
    h.iter()
        .map(|&(b, c)| match b {
            0 | 1 => format!("{b}:{c}"),
            _ => format!("{}-{b}:{c}", b / 2 + 1),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn inspect_cmd(a: &InspectArgs) -> Outcome {
    let mut text = String::new();
    if let Some(path) = &a.data {
        let ds = load_dataset(path)?;
        let p = &ds.provenance;
        report_hash(&p.config_hash);
        let _ = writeln!(
            text,
            "kg {}  seed {}  layer {:?}  entities {}  relations {}  records {}",
            p.kg,
            p.seed,
            p.source_layer,
            p.num_entities,
            p.num_relations,
            ds.records.len()
        );
        let summary = summarize(&ds);
        let _ = writeln!(text, "types {}", summary.len());
        for t in summary {
            let _ = writeln!(
                text,
                "{}\t{}\ttrain[{}]\ttest[{}]",
                t.formula,
                t.count,
                histogram_text(&t.train_histogram),
                histogram_text(&t.test_histogram)
            );
        }
    }
    if let Some(path) = &a.ckpt {
        let c = read_checkpoint(open(path)?, None).map_err(context(path))?;
        report_hash(&c.config.hash());
        let v = c.model.vocab();
        let _ = writeln!(
            text,
            "epoch {}  params {}  entities {}  relations {}  vocab {}",
            c.epoch,
            c.model.num_params(),
            v.num_entities(),
            v.num_relations(),
            v.layout_hash()
        );
        text.push_str(&c.config.to_text());
    }
    emit(&text)
}

fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Linearize(a) => linearize_cmd(a),
        Command::Answer(a) => answer_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Inspect(a) => inspect_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
