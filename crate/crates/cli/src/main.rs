//! `cga`: build datasets, sample queries, train, evaluate and query
//! embedding models for conjunctive graph queries.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use cga_core::dataset::{self, synthetic, DatasetBundle, QueryCounts, QuerySplits, SplitSpec};
use cga_core::eval::{evaluate, AucMode, EvalOptions};
use cga_core::kg::{load_triples, KnowledgeGraph};
use cga_core::operators::rank_answers;
use cga_core::params::ModelParameters;
use cga_core::query::{execute, parse_inline, ConjunctiveQuery, QueryRecord};
use cga_core::selftest::{self, GradSuiteOptions};
use cga_core::training::{history_csv, train, TrainConfig};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser, Debug)]
#[command(name = "cga", version, about = "Embedding-based answering of conjunctive graph queries")]
struct Cli {
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for query sampling and evaluation. Results do not
    /// depend on the count.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Expand seeds, prune and split a raw graph into a dataset directory.
    BuildDataset(BuildArgs),
    /// Generate train/valid/test queries for a dataset directory.
    SampleQueries(SampleArgs),
    /// Train a model and write a checkpoint plus a history CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split's queries.
    Evaluate(EvalArgs),
    /// Rank candidate answers of a query by embedding similarity.
    Answer(AnswerArgs),
    /// Finite-difference gradient checks of every trainable operator.
    Gradcheck(GradArgs),
    /// Run the full property suite.
    Selftest,
    /// Write the planted synthetic graph (raw triples, types, seeds).
    Synthetic(SyntheticArgs),
}

#[derive(Args, Debug)]
struct BuildArgs {
    /// Raw triples, `head<TAB>relation<TAB>tail` per line.
    #[arg(long)]
    triples: PathBuf,
    /// Entity types, `entity<TAB>type` per line.
    #[arg(long)]
    types: PathBuf,
    /// Seed entities, one label per line.
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.90)]
    train: f64,
    #[arg(long, default_value_t = 0.01)]
    valid: f64,
    #[arg(long, default_value_t = 0.09)]
    test: f64,
    /// Minimum degree kept by pruning, counted over base triples.
    #[arg(long, default_value_t = 0)]
    eta: usize,
    /// Comma-separated relation labels to keep; all when absent.
    #[arg(long, value_delimiter = ',')]
    relations: Option<Vec<String>>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Training queries per type (1-chain uses every triple).
    #[arg(long, default_value_t = 1000)]
    train_count: usize,
    #[arg(long, default_value_t = 100)]
    valid_count: usize,
    #[arg(long, default_value_t = 1000)]
    test_count: usize,
    /// Negatives per query.
    #[arg(long, default_value_t = 10)]
    negatives: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key = value` config file; see the README for keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; overrides the config's `dataset`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// History CSV path; defaults to the checkpoint path with a
    /// `.history.csv` extension.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Config override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Which split's queries to score: train, valid or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// `pooled` (one AUC per type over all pairs) or `per-query`.
    #[arg(long, default_value = "pooled")]
    auc_mode: String,
    /// Write the summary as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write per-type bars as CSV.
    #[arg(long)]
    bars: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnswerArgs {
    #[arg(long)]
    model: PathBuf,
    /// Inline query, e.g. `likes(agent_03, ?i), owns(agent_07, ?i)`.
    #[arg(long, conflicts_with = "query_file", required_unless_present = "query_file")]
    query: Option<String>,
    /// JSON query record, or JSON lines with one record per line.
    #[arg(long)]
    query_file: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    top_n: usize,
    /// Also print the exact answers computed on the dataset's full graph.
    #[arg(long, requires = "dataset")]
    oracle: bool,
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradArgs {
    /// Embedding dimension.
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Attention heads.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Probe points per operator.
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    #[arg(long)]
    out: PathBuf,
}

/// A failure that maps to exit code 3.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct NumericalFailure(String);

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os().collect()))
}

fn run(argv: Vec<OsString>) -> u8 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
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
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<NumericalFailure>().is_some() {
        return 3;
    }
    match e.downcast_ref::<cga_core::Error>() {
        Some(err) if err.is_numerical() => 3,
        _ => 2,
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    let workers = cli.workers.max(1);
    match &cli.command {
        Command::BuildDataset(a) => build_dataset(a, seed.unwrap_or(0)),
        Command::SampleQueries(a) => sample_queries(a, seed.unwrap_or(0), workers),
        Command::Train(a) => train_cmd(a, seed, workers),
        Command::Evaluate(a) => evaluate_cmd(a, seed.unwrap_or(0), workers),
        Command::Answer(a) => answer(a),
        Command::Gradcheck(a) => gradcheck(a, seed.unwrap_or(0)),
        Command::Selftest => selftest_cmd(seed.unwrap_or(0)),
        Command::Synthetic(a) => {
            synthetic::generate(seed.unwrap_or(0)).write(&a.out)?;
            println!("wrote {}", a.out.display());
            Ok(())
        }
    }
}

fn build_dataset(a: &BuildArgs, seed: u64) -> anyhow::Result<()> {
    let raw = load_triples(&a.triples, &a.types)?;
    let text = fs::read_to_string(&a.seeds).with_context(|| format!("reading {}", a.seeds.display()))?;
    let seeds = dataset::parse_seeds(&text);
    let spec = SplitSpec {
        train: a.train,
        valid: a.valid,
        test: a.test,
        seed,
        eta: a.eta,
        relations: a.relations.as_ref().map(|r| r.iter().cloned().collect::<BTreeSet<_>>()),
    };
    let bundle = dataset::build_dataset(&raw, &seeds, &spec)?;
    bundle.save(&a.out)?;
    let m = &bundle.manifest;
    println!(
        "{}: {} entities, {} base relations; triples train {} valid {} test {} ({} forced to train)",
        a.out.display(),
        bundle.full.symbols().num_entities(),
        bundle.full.symbols().num_relations() / 2,
        m.train.base_triples,
        m.valid.base_triples,
        m.test.base_triples,
        m.forced_to_train
    );
    Ok(())
}

fn sample_queries(a: &SampleArgs, seed: u64, workers: usize) -> anyhow::Result<()> {
    let mut bundle = DatasetBundle::load(&a.dataset)?;
    let counts =
        QueryCounts { train: a.train_count, valid: a.valid_count, test: a.test_count, negatives: a.negatives };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (queries, warnings) = dataset::generate_queries_parallel(&bundle, &counts, &mut rng, workers);
    queries.attach(&mut bundle, &a.dataset, warnings)?;
    println!(
        "{}: queries train {} valid {} test {}",
        a.dataset.display(),
        queries.train.len(),
        queries.valid.len(),
        queries.test.len()
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: Option<u64>, workers: usize) -> anyhow::Result<()> {
    let mut config = match &a.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::default(),
    };
    for o in &a.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override {o:?} is not KEY=VALUE"))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(d) = &a.dataset {
        config.dataset = Some(d.clone());
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    if workers > 1 {
        config.workers = workers;
    }
    config.validate()?;
    let Some(dir) = config.dataset.clone() else { bail!(cga_core::Error::Config("no dataset given".into())) };
    let bundle = DatasetBundle::load(&dir)?;
    let queries = QuerySplits::load(&dir, &bundle)?;
    let outcome = train(&bundle.train, &queries.train, Some(&queries.valid), &config)?;
    outcome.params.save(&a.out)?;
    let history = a.history.clone().unwrap_or_else(|| a.out.with_extension("history.csv"));
    fs::write(&history, history_csv(&outcome.history)).with_context(|| format!("writing {}", history.display()))?;
    println!(
        "{} trained for {} epochs{}; checkpoint {}, history {}",
        outcome.params.config().tag(),
        outcome.history.len(),
        outcome.best_epoch.map(|e| format!(", best epoch {e}")).unwrap_or_default(),
        a.out.display(),
        history.display()
    );
    if let Some(r) = &outcome.final_validation {
        print!("{}", r.to_table());
    }
    Ok(())
}

fn evaluate_cmd(a: &EvalArgs, seed: u64, workers: usize) -> anyhow::Result<()> {
    let auc_mode = match a.auc_mode.as_str() {
        "pooled" => AucMode::Pooled,
        "per-query" => AucMode::PerQuery,
        other => bail!(cga_core::Error::Config(format!("unknown AUC mode {other:?}"))),
    };
    let params = ModelParameters::load(&a.model)?;
    let bundle = DatasetBundle::load(&a.dataset)?;
    let queries = QuerySplits::load(&a.dataset, &bundle)?;
    let set = match a.split.as_str() {
        "train" => &queries.train,
        "valid" => &queries.valid,
        "test" => &queries.test,
        other => bail!(cga_core::Error::Config(format!("unknown split {other:?}"))),
    };
    ensure_same_symbols(&params, &bundle.full)?;
    let mut report = evaluate(&params, set, EvalOptions { auc_mode, workers })?;
    report.dataset = a.dataset.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    report.seed = seed;
    print!("{}", report.to_table());
    if let Some(p) = &a.csv {
        fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.bars {
        fs::write(p, report.bars_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn ensure_same_symbols(params: &ModelParameters, kg: &KnowledgeGraph) -> anyhow::Result<()> {
    if **params.symbols() != **kg.symbols() {
        bail!(cga_core::Error::Checkpoint("checkpoint vocabulary differs from the dataset's".into()));
    }
    Ok(())
}

fn read_queries(a: &AnswerArgs, params: &ModelParameters) -> anyhow::Result<Vec<ConjunctiveQuery>> {
    let symbols = params.symbols();
    if let Some(text) = &a.query {
        return Ok(vec![parse_inline(text, symbols)?]);
    }
    let path = a.query_file.as_ref().expect("clap requires one of the two");
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let records: Vec<QueryRecord> = match serde_json::from_str::<QueryRecord>(&text) {
        Ok(r) => vec![r],
        Err(_) => text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()
            .map_err(cga_core::Error::from)?,
    };
    Ok(records.iter().map(|r| r.to_query(symbols)).collect::<Result<_, _>>()?)
}

fn answer(a: &AnswerArgs) -> anyhow::Result<()> {
    let params = ModelParameters::load(&a.model)?;
    let symbols = params.symbols().clone();
    let oracle_graph = match (&a.dataset, a.oracle) {
        (Some(dir), true) => {
            let b = DatasetBundle::load(dir)?;
            ensure_same_symbols(&params, &b.full)?;
            Some(b.full)
        }
        _ => None,
    };
    // Validation only needs the vocabulary, so an empty graph suffices.
    let empty = KnowledgeGraph::from_triples(symbols.clone(), []);
    for (qi, q) in read_queries(a, &params)?.iter().enumerate() {
        q.check(&empty)?;
        let ty = q.target_type().expect("validated query has a target");
        let candidates = symbols.roster(ty).to_vec();
        let ranked = rank_answers(&params, q, &candidates)?;
        let truth: Option<BTreeSet<_>> = oracle_graph.as_ref().map(|g| execute(g, q));
        if qi > 0 {
            println!();
        }
        println!("rank\tentity\tscore{}", if truth.is_some() { "\tanswer" } else { "" });
        for (rank, (e, s)) in ranked.iter().take(a.top_n).enumerate() {
            let mark = truth.as_ref().map(|t| if t.contains(e) { "\tyes" } else { "\tno" }).unwrap_or("");
            println!("{}\t{}\t{:.6}{}", rank + 1, symbols.entity_label(*e), s, mark);
        }
        if let Some(t) = truth {
            let labels: Vec<&str> = t.iter().map(|e| symbols.entity_label(*e)).collect();
            println!("oracle answers ({}): {}", labels.len(), labels.join(", "));
        }
    }
    Ok(())
}

fn gradcheck(a: &GradArgs, seed: u64) -> anyhow::Result<()> {
    let options = GradSuiteOptions {
        dims: vec![a.d],
        heads: vec![a.k],
        probes: a.trials,
        tolerance: a.tol,
        h: a.step,
        seed,
        ..Default::default()
    };
    let reports = selftest::gradient_suite(&options)?;
    let mut worst = 0.0f64;
    for r in &reports {
        println!("{:<26} probes {:>4}  max relative error {:.3e}", r.target, r.probes, r.max_rel_error);
        worst = worst.max(r.max_rel_error);
    }
    println!("max relative error {worst:.3e} (tolerance {:e})", a.tol);
    if reports.iter().any(|r| !r.passed()) {
        return Err(NumericalFailure(format!("gradient check failed: {worst:e} >= {:e}", a.tol)).into());
    }
    Ok(())
}

fn selftest_cmd(seed: u64) -> anyhow::Result<()> {
    let results = selftest::run(seed)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(NumericalFailure(format!("{failed} selftest checks failed")).into());
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
