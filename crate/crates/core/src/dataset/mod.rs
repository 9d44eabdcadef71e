//! Dataset construction: seed expansion, degree pruning, a coverage-safe
//! train/valid/test split, and query generation for every query type.
//!
//! Bundle layout:
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/types.tsv
//! <dir>/train.tsv  valid.tsv  test.tsv
//! <dir>/queries/{train,valid,test}/<query-type>.jsonl
//! ```

pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{
    graph_from_labels, parse_triples, parse_type_map, read_file, write_file, EntityId, KgManifest, KnowledgeGraph,
    Triple,
};
use crate::query::{
    check_unanswerable, execute, sample_negatives, sample_query, ConjunctiveQuery, QueryEdge, QueryNode, QuerySample,
    QuerySet, QueryStructure, QueryType,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
    pub seed: u64,
    /// Minimum base-triple degree kept by pruning.
    pub eta: usize,
    /// When set, only triples with these relation labels are kept.
    pub relations: Option<BTreeSet<String>>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.90, valid: 0.01, test: 0.09, seed: 0, eta: 0, relations: None }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be in [0, 1] and sum to 1, got {}/{}/{}",
                self.train, self.valid, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub base_triples: usize,
    pub triples_with_inverses: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub spec: Option<SplitSpec>,
    pub seeds: usize,
    pub raw: Option<KgManifest>,
    pub expanded_triples: usize,
    pub graph: Option<KgManifest>,
    pub train: SplitCounts,
    pub valid: SplitCounts,
    pub test: SplitCounts,
    /// Triples placed in train to keep every entity and relation covered.
    pub forced_to_train: usize,
    pub queries: BTreeMap<String, BTreeMap<String, usize>>,
    pub warnings: Vec<String>,
}

/// A split graph. All four graphs share one symbol table.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub full: KnowledgeGraph,
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
    pub manifest: DatasetManifest,
}

/// Query sets for the three splits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuerySplits {
    pub train: QuerySet,
    pub valid: QuerySet,
    pub test: QuerySet,
}

/// Triples whose head or tail lies within one hop of a seed, i.e. the
/// 1- and 2-degree triples of the seeds, edges followed in both directions.
pub fn expand_seeds(raw: &KnowledgeGraph, seeds: &[EntityId]) -> Vec<Triple> {
    let mut depth: BTreeMap<EntityId, usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &s in seeds {
        if depth.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    while let Some(e) = queue.pop_front() {
        if depth[&e] >= 1 {
            continue;
        }
        for &(_, u) in raw.neighbors(e) {
            if !depth.contains_key(&u) {
                depth.insert(u, depth[&e] + 1);
                queue.push_back(u);
            }
        }
    }
    raw.base_triples()
        .iter()
        .copied()
        .filter(|t| depth.contains_key(&t.head) || depth.contains_key(&t.tail))
        .collect()
}

/// Assignment of each triple to a split, by index into `triples`.
struct Assignment {
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
    forced: usize,
}

/// Shuffles, forces into train one triple for every entity and relation
/// not yet covered, then fills valid and test from the rest.
fn split_triples(triples: &[Triple], spec: &SplitSpec, rng: &mut ChaCha8Rng, warnings: &mut Vec<String>) -> Assignment {
    let n = triples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);

    let mut covered_e: HashSet<EntityId> = HashSet::new();
    let mut covered_r = HashSet::new();
    let mut forced = vec![false; n];
    for &i in &order {
        let t = triples[i];
        let rel = t.relation.base();
        if !covered_e.contains(&t.head) || !covered_e.contains(&t.tail) || !covered_r.contains(&rel) {
            forced[i] = true;
            covered_e.insert(t.head);
            covered_e.insert(t.tail);
            covered_r.insert(rel);
        }
    }
    let forced_count = forced.iter().filter(|f| **f).count();

    let want_valid = (spec.valid * n as f64).round() as usize;
    let want_test = (spec.test * n as f64).round() as usize;
    let free = n - forced_count;
    let (n_valid, n_test) = if want_valid + want_test <= free {
        (want_valid, want_test)
    } else {
        let scale = free as f64 / (want_valid + want_test) as f64;
        let v = ((want_valid as f64) * scale).floor() as usize;
        warnings.push(format!(
            "coverage forces {forced_count} of {n} triples into train; held-out splits shrink to {v} valid and {} test",
            free - v
        ));
        (v, free - v)
    };

    let mut a = Assignment { train: Vec::new(), valid: Vec::new(), test: Vec::new(), forced: forced_count };
    for &i in &order {
        if forced[i] {
            a.train.push(i);
        } else if a.valid.len() < n_valid {
            a.valid.push(i);
        } else if a.test.len() < n_test {
            a.test.push(i);
        } else {
            a.train.push(i);
        }
    }
    a.train.sort_unstable();
    a.valid.sort_unstable();
    a.test.sort_unstable();
    a
}

fn single_occurrence_warnings(g: &KnowledgeGraph, warnings: &mut Vec<String>) {
    let mut per_relation: BTreeMap<u32, usize> = BTreeMap::new();
    for t in g.base_triples() {
        *per_relation.entry(t.relation.0).or_default() += 1;
    }
    for (r, c) in per_relation {
        if c == 1 {
            warnings.push(format!(
                "relation {} occurs once; its triple is kept in train",
                g.symbols().relation_name(crate::kg::RelationId(r))
            ));
        }
    }
}

/// Expands `seeds`, prunes by degree and splits the result.
pub fn build_dataset(raw: &KnowledgeGraph, seeds: &[String], spec: &SplitSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(Error::Dataset("no seed entities given".into()));
    }
    let seed_ids = seeds.iter().map(|s| raw.symbols().entity(s)).collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();

    let filtered: Vec<Triple> = match &spec.relations {
        Some(allow) => raw
            .base_triples()
            .iter()
            .copied()
            .filter(|t| allow.contains(&raw.symbols().relation_info(t.relation).label))
            .collect(),
        None => raw.base_triples().to_vec(),
    };
    let filtered = raw.restrict(filtered);
    let expanded = expand_seeds(&filtered, &seed_ids);
    let expanded_count = expanded.len();
    let pruned = filtered.restrict(expanded).degree_prune(spec.eta.max(1));
    if pruned.base_triples().is_empty() {
        return Err(Error::EmptyAfterPrune);
    }
    single_occurrence_warnings(&pruned, &mut warnings);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = pruned.base_triples();
    let a = split_triples(base, spec, &mut rng, &mut warnings);
    let labels = |idx: &[usize]| -> Vec<(String, String, String)> {
        let s = pruned.symbols();
        idx.iter()
            .map(|&i| {
                let t = base[i];
                (
                    s.entity_label(t.head).to_string(),
                    s.relation_info(t.relation).label.clone(),
                    s.entity_label(t.tail).to_string(),
                )
            })
            .collect()
    };
    let types: BTreeMap<String, String> = pruned
        .symbols()
        .entity_ids()
        .map(|e| (pruned.symbols().entity_label(e).to_string(), pruned.symbols().type_label(pruned.symbols().entity_type(e)).to_string()))
        .collect();
    let mut bundle = assemble(&labels(&a.train), &labels(&a.valid), &labels(&a.test), &types)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    let m = &mut bundle.manifest;
    m.spec = Some(spec.clone());
    m.seeds = seeds.len();
    m.raw = Some(raw.manifest());
    m.expanded_triples = expanded_count;
    m.forced_to_train = a.forced;
    m.warnings = warnings;
    Ok(bundle)
}

fn split_counts(g: &KnowledgeGraph) -> SplitCounts {
    SplitCounts { base_triples: g.base_triples().len(), triples_with_inverses: g.triple_count() }
}

/// Builds the shared-symbol graphs from split label triples, numbering
/// handles by first appearance over train, valid, test.
fn assemble(
    train: &[(String, String, String)],
    valid: &[(String, String, String)],
    test: &[(String, String, String)],
    types: &BTreeMap<String, String>,
) -> Result<DatasetBundle> {
    let all: Vec<_> = train.iter().chain(valid).chain(test).cloned().collect();
    let full = graph_from_labels(&all, types)?;
    let pick = |part: &[(String, String, String)]| -> Result<KnowledgeGraph> {
        let s = full.symbols();
        let triples = part
            .iter()
            .map(|(h, r, t)| {
                let h = s.entity(h)?;
                let t = s.entity(t)?;
                let (dh, dt) = (s.entity_type(h), s.entity_type(t));
                let rel = s
                    .relation_ids()
                    .step_by(2)
                    .find(|&id| {
                        let info = s.relation_info(id);
                        info.label == *r && info.domain == dh && info.range == dt
                    })
                    .ok_or_else(|| Error::UnknownRelation(r.clone()))?;
                Ok(Triple::new(h, rel, t))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(full.restrict(triples))
    };
    let (train_g, valid_g, test_g) = (pick(train)?, pick(valid)?, pick(test)?);
    let manifest = DatasetManifest {
        graph: Some(full.manifest()),
        train: split_counts(&train_g),
        valid: split_counts(&valid_g),
        test: split_counts(&test_g),
        ..Default::default()
    };
    Ok(DatasetBundle { full, train: train_g, valid: valid_g, test: test_g, manifest })
}

impl DatasetBundle {
    /// Writes the graph files and manifest (not the queries).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("types.tsv"), &self.full.types_tsv())?;
        for (name, g) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            write_file(&dir.join(format!("{name}.tsv")), &g.triples_tsv(g.base_triples()))?;
        }
        self.save_manifest(dir)
    }

    pub fn save_manifest(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("manifest.json"), &(serde_json::to_string_pretty(&self.manifest)? + "\n"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let types = parse_type_map(&read_file(&dir.join("types.tsv"))?, "types.tsv")?;
        let read = |name: &str| -> Result<Vec<(String, String, String)>> {
            let path = dir.join(format!("{name}.tsv"));
            parse_triples(&read_file(&path)?, &path.display().to_string())
        };
        let mut bundle = assemble(&read("train")?, &read("valid")?, &read("test")?, &types)?;
        let manifest_path = dir.join("manifest.json");
        if manifest_path.exists() {
            bundle.manifest = serde_json::from_str(&read_file(&manifest_path)?)?;
        }
        Ok(bundle)
    }

    /// Every entity and relation of valid and test also occurs in train.
    pub fn coverage_violations(&self) -> Vec<String> {
        let s = self.full.symbols();
        let mut ents = HashSet::new();
        let mut rels = HashSet::new();
        for t in self.train.base_triples() {
            ents.insert(t.head);
            ents.insert(t.tail);
            rels.insert(t.relation);
        }
        let mut out = Vec::new();
        for t in self.valid.base_triples().iter().chain(self.test.base_triples()) {
            for e in [t.head, t.tail] {
                if !ents.contains(&e) {
                    out.push(format!("entity {} missing from train", s.entity_label(e)));
                }
            }
            if !rels.contains(&t.relation) {
                out.push(format!("relation {} missing from train", s.relation_name(t.relation)));
            }
        }
        out
    }

    /// The union of valid and test triples.
    pub fn held_out(&self) -> Vec<Triple> {
        let mut v: Vec<Triple> = self.valid.base_triples().iter().chain(self.test.base_triples()).copied().collect();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryCounts {
    /// Queries per type other than 1-chain, which uses every triple.
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub negatives: usize,
}

impl Default for QueryCounts {
    fn default() -> Self {
        Self { train: 1000, valid: 100, test: 1000, negatives: 10 }
    }
}

fn one_chain(g: &KnowledgeGraph, t: Triple) -> QuerySample {
    let s = g.symbols();
    QuerySample {
        query: ConjunctiveQuery {
            nodes: vec![QueryNode::anchor(t.head, s.entity_type(t.head)), QueryNode::target(s.entity_type(t.tail))],
            edges: vec![QueryEdge { from: 0, relation: t.relation, to: 1 }],
            structure: Some(QueryStructure::OneChain),
        },
        answer: t.tail,
        negatives: Vec::new(),
        hard: false,
    }
}

fn with_inverses(triples: &[Triple]) -> Vec<Triple> {
    let mut v: Vec<Triple> = triples.iter().flat_map(|&t| [t, t.inverse()]).collect();
    v.sort_unstable();
    v
}

/// Draws queries of type `qt` until `count` are kept or the draw budget
/// runs out. `keep` decides on candidates (with negatives attached).
fn sample_type(
    sample_graph: &KnowledgeGraph,
    negative_graph: &KnowledgeGraph,
    qt: QueryType,
    count: usize,
    negatives: usize,
    rng: &mut ChaCha8Rng,
    keep: &dyn Fn(&QuerySample) -> bool,
) -> Vec<QuerySample> {
    let budget = count.saturating_mul(50).max(200);
    let mut out = Vec::with_capacity(count);
    for _ in 0..budget {
        if out.len() >= count {
            break;
        }
        let Ok(mut s) = sample_query(sample_graph, qt.structure, rng) else { break };
        s.hard = qt.hard;
        let Ok(draw) = sample_negatives(negative_graph, &s, negatives, qt.hard, rng) else { continue };
        if draw.entities.is_empty() {
            continue;
        }
        s.negatives = draw.entities;
        if keep(&s) {
            out.push(s);
        }
    }
    out
}

/// Train queries come from the train graph; valid and test queries from
/// the full graph, kept only when the train graph cannot answer them.
/// 1-chain queries are the split's own triples and their inverses.
pub fn generate_queries(bundle: &DatasetBundle, counts: &QueryCounts, rng: &mut ChaCha8Rng) -> (QuerySplits, Vec<String>) {
    generate_queries_parallel(bundle, counts, rng, 1)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// One (split, type) unit of query generation with its own generator.
struct Task {
    split: Split,
    qt: QueryType,
    seed: u64,
}

fn run_task(bundle: &DatasetBundle, counts: &QueryCounts, task: &Task) -> (Vec<QuerySample>, Option<String>) {
    let (full, train) = (&bundle.full, &bundle.train);
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let held_out = task.split != Split::Train;
    if task.qt.structure == QueryStructure::OneChain {
        let g = match task.split {
            Split::Train => train,
            Split::Valid => &bundle.valid,
            Split::Test => &bundle.test,
        };
        let neg_graph = if held_out { full } else { train };
        let mut out = Vec::new();
        for t in with_inverses(g.base_triples()) {
            let mut s = one_chain(g, t);
            if held_out && !check_unanswerable(train, full, &s.query, s.answer) {
                continue;
            }
            let draw =
                sample_negatives(neg_graph, &s, counts.negatives, false, &mut rng).expect("plain negatives of a valid query");
            if draw.entities.is_empty() {
                continue;
            }
            s.negatives = draw.entities;
            out.push(s);
        }
        return (out, None);
    }
    let count = match task.split {
        Split::Train => counts.train,
        Split::Valid => counts.valid,
        Split::Test => counts.test,
    };
    let samples = if held_out {
        let keep = |s: &QuerySample| check_unanswerable(train, full, &s.query, s.answer);
        sample_type(full, full, task.qt, count, counts.negatives, &mut rng, &keep)
    } else {
        sample_type(train, train, task.qt, count, counts.negatives, &mut rng, &|_| true)
    };
    let warning = (samples.len() < count).then(|| format!("{} {}: {} of {count} queries", task.split.name(), task.qt, samples.len()));
    (samples, warning)
}

/// [`generate_queries`] with the (split, type) units spread over
/// `workers` threads. Every unit draws its generator seed from `rng` in a
/// fixed order, so the output does not depend on `workers`.
pub fn generate_queries_parallel(
    bundle: &DatasetBundle,
    counts: &QueryCounts,
    rng: &mut ChaCha8Rng,
    workers: usize,
) -> (QuerySplits, Vec<String>) {
    let mut tasks = Vec::new();
    for split in [Split::Train, Split::Valid, Split::Test] {
        tasks.push(Task { split, qt: QueryType::new(QueryStructure::OneChain, false), seed: rng.gen() });
    }
    for qt in QueryType::all().into_iter().filter(|t| t.structure != QueryStructure::OneChain) {
        for split in [Split::Train, Split::Valid, Split::Test] {
            tasks.push(Task { split, qt, seed: rng.gen() });
        }
    }

    let workers = workers.clamp(1, tasks.len());
    let mut results: Vec<Option<(Vec<QuerySample>, Option<String>)>> = (0..tasks.len()).map(|_| None).collect();
    if workers == 1 {
        for (slot, task) in results.iter_mut().zip(&tasks) {
            *slot = Some(run_task(bundle, counts, task));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let tasks = &tasks;
                    scope.spawn(move || {
                        (w..tasks.len()).step_by(workers).map(|i| (i, run_task(bundle, counts, &tasks[i]))).collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("query generation worker panicked") {
                    results[i] = Some(r);
                }
            }
        });
    }

    let mut splits = QuerySplits::default();
    let mut warnings = Vec::new();
    for (task, result) in tasks.iter().zip(results) {
        let (samples, warning) = result.expect("every task ran");
        let target = match task.split {
            Split::Train => &mut splits.train,
            Split::Valid => &mut splits.valid,
            Split::Test => &mut splits.test,
        };
        for s in samples {
            target.push(task.qt, s);
        }
        warnings.extend(warning);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    (splits, warnings)
}

impl QuerySplits {
    pub fn save(&self, dir: &Path, bundle: &DatasetBundle) -> Result<()> {
        let s = bundle.full.symbols();
        for (name, set) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            set.write_dir(&dir.join("queries").join(name), s)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path, bundle: &DatasetBundle) -> Result<Self> {
        let s = bundle.full.symbols();
        let read = |name: &str| QuerySet::read_dir(&dir.join("queries").join(name), s);
        Ok(QuerySplits { train: read("train")?, valid: read("valid")?, test: read("test")? })
    }

    /// Writes the query files into a saved bundle directory and records
    /// their counts and generation warnings in its manifest.
    pub fn attach(&self, bundle: &mut DatasetBundle, dir: &Path, warnings: Vec<String>) -> Result<()> {
        self.save(dir, bundle)?;
        self.record_counts(&mut bundle.manifest);
        bundle.manifest.warnings.extend(warnings);
        bundle.save_manifest(dir)
    }

    pub fn record_counts(&self, manifest: &mut DatasetManifest) {
        for (name, set) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            manifest.queries.insert(name.to_string(), set.counts());
        }
    }

    /// Checks every postcondition of generated queries and returns the failures.
    pub fn violations(&self, bundle: &DatasetBundle) -> Vec<String> {
        let mut out = Vec::new();
        let (train, full) = (&bundle.train, &bundle.full);
        for (name, set) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            for (qt, s) in set.iter() {
                let graph = if name == "train" { train } else { full };
                let answers = execute(graph, &s.query);
                if !answers.contains(&s.answer) {
                    out.push(format!("{name} {qt}: answer not produced by the oracle"));
                }
                if name != "train" && execute(train, &s.query).contains(&s.answer) {
                    out.push(format!("{name} {qt}: answerable from train"));
                }
                if s.negatives.iter().any(|n| answers.contains(n)) {
                    out.push(format!("{name} {qt}: a negative is an answer"));
                }
            }
        }
        out
    }
}

/// Reads one entity label per line, skipping blanks and `#` comments.
pub fn parse_seeds(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(text: &str) -> KnowledgeGraph {
        let triples = parse_triples(text, "t").unwrap();
        let mut types = String::new();
        for (h, _, t) in &triples {
            types.push_str(&format!("{h}\tT\n{t}\tT\n"));
        }
        graph_from_labels(&triples, &parse_type_map(&types, "y").unwrap()).unwrap()
    }

    fn ring(n: usize, relations: &[&str]) -> String {
        let mut s = String::new();
        for (k, r) in relations.iter().enumerate() {
            for i in 0..n {
                s.push_str(&format!("e{i}\t{r}\te{}\n", (i + k + 1) % n));
            }
        }
        s
    }

    #[test]
    fn expansion_keeps_two_hop_triples() {
        let g = raw("s\tr\ta\na\tr\tb\nb\tr\tc\nc\tr\td\n");
        let seeds = vec![g.symbols().entity("s").unwrap()];
        let kept = expand_seeds(&g, &seeds);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn split_meets_ratios_and_coverage() {
        let g = raw(&ring(40, &["p", "q", "r"]));
        let spec = SplitSpec { train: 0.8, valid: 0.1, test: 0.1, seed: 4, eta: 0, relations: None };
        let b = build_dataset(&g, &["e0".to_string()], &spec).unwrap();
        let n = b.full.base_triples().len();
        assert!(n > 0);
        let want_valid = (0.1 * n as f64).round() as i64;
        assert!((b.valid.base_triples().len() as i64 - want_valid).abs() <= 1);
        assert!((b.test.base_triples().len() as i64 - want_valid).abs() <= 1);
        assert_eq!(b.train.base_triples().len() + b.valid.base_triples().len() + b.test.base_triples().len(), n);
        assert!(b.coverage_violations().is_empty());
    }

    #[test]
    fn too_high_threshold_empties_the_graph() {
        let g = raw(&ring(10, &["p"]));
        let spec = SplitSpec { eta: 50, ..SplitSpec::default() };
        assert!(matches!(build_dataset(&g, &["e0".to_string()], &spec), Err(Error::EmptyAfterPrune)));
    }

    #[test]
    fn generated_queries_satisfy_postconditions() {
        let g = raw(&ring(12, &["p", "q", "r"]));
        let spec = SplitSpec { train: 0.7, valid: 0.1, test: 0.2, seed: 1, eta: 0, relations: None };
        let b = build_dataset(&g, &["e0".to_string(), "e6".to_string()], &spec).unwrap();
        let counts = QueryCounts { train: 10, valid: 5, test: 5, negatives: 4 };
        let (q, _) = generate_queries(&b, &counts, &mut ChaCha8Rng::seed_from_u64(3));
        assert!(q.violations(&b).is_empty(), "{:?}", q.violations(&b));
        let one = QueryType::new(QueryStructure::OneChain, false);
        assert_eq!(q.train.by_type[&one].len(), 2 * b.train.base_triples().len());
        let (q4, _) = generate_queries_parallel(&b, &counts, &mut ChaCha8Rng::seed_from_u64(3), 4);
        assert_eq!(q4, q);
    }
}
