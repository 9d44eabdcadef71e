//! In-memory knowledge graph with typed entities and explicit inverse relations.
//!
//! Every base relation `r` is paired with an inverse `r^-1`. Base relation
//! `k` (in first-appearance order) gets handle `2k` and its inverse `2k+1`,
//! so inversion is a bit flip. Loading a triple `r(s, o)` also stores
//! `r^-1(o, s)`.
//!
//! A relation is identified by its label together with its (domain, range)
//! type signature. A label used with several signatures yields several
//! relations, named `label[Domain->Range]`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INVERSE_SUFFIX: &str = "^-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TypeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn inverse(self) -> RelationId {
        RelationId(self.0 ^ 1)
    }

    pub fn is_inverse(self) -> bool {
        self.0 & 1 == 1
    }

    pub fn base(self) -> RelationId {
        RelationId(self.0 & !1)
    }
}

/// A directed labeled edge `relation(head, tail)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }

    pub fn inverse(self) -> Triple {
        Triple { head: self.tail, relation: self.relation.inverse(), tail: self.head }
    }

    /// The same fact expressed with its base (non-inverse) relation.
    pub fn canonical(self) -> Triple {
        if self.relation.is_inverse() {
            self.inverse()
        } else {
            self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityInfo {
    pub label: String,
    pub ty: TypeId,
    /// Position among the entities of the same type.
    pub row: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationInfo {
    /// Unique display name; inverse names carry the `^-1` suffix.
    pub name: String,
    /// Label of the base relation as it appeared in the input.
    pub label: String,
    pub domain: TypeId,
    pub range: TypeId,
}

/// Serializable description of a symbol table; the lookup indices are rebuilt.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolData {
    pub types: Vec<String>,
    pub entities: Vec<(String, u32)>,
    /// Base relations as (label, domain, range).
    pub relations: Vec<(String, u32, u32)>,
}

/// Dense handle assignment for entities, relations and types.
#[derive(Clone, Debug)]
pub struct SymbolTable {
    types: Vec<String>,
    entities: Vec<EntityInfo>,
    relations: Vec<RelationInfo>,
    rosters: Vec<Vec<EntityId>>,
    type_index: HashMap<String, TypeId>,
    entity_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
}

impl PartialEq for SymbolTable {
    fn eq(&self, other: &Self) -> bool {
        self.types == other.types && self.entities == other.entities && self.relations == other.relations
    }
}

impl SymbolTable {
    pub fn from_data(data: &SymbolData) -> Result<Self> {
        let n_types = data.types.len() as u32;
        let check = |t: u32| {
            if t < n_types {
                Ok(TypeId(t))
            } else {
                Err(Error::UnknownType(format!("#{t}")))
            }
        };
        let mut entities = Vec::with_capacity(data.entities.len());
        let mut rosters = vec![Vec::new(); data.types.len()];
        for (i, (label, t)) in data.entities.iter().enumerate() {
            let ty = check(*t)?;
            let row = rosters[ty.index()].len();
            rosters[ty.index()].push(EntityId(i as u32));
            entities.push(EntityInfo { label: label.clone(), ty, row });
        }

        let mut signatures: HashMap<&str, usize> = HashMap::new();
        for (label, _, _) in &data.relations {
            *signatures.entry(label.as_str()).or_default() += 1;
        }
        let mut relations = Vec::with_capacity(2 * data.relations.len());
        for (label, dom, ran) in &data.relations {
            let domain = check(*dom)?;
            let range = check(*ran)?;
            let name = if signatures[label.as_str()] > 1 {
                format!("{label}[{}->{}]", data.types[domain.index()], data.types[range.index()])
            } else {
                label.clone()
            };
            relations.push(RelationInfo { name: name.clone(), label: label.clone(), domain, range });
            relations.push(RelationInfo {
                name: format!("{name}{INVERSE_SUFFIX}"),
                label: label.clone(),
                domain: range,
                range: domain,
            });
        }

        let mut table = SymbolTable {
            types: data.types.clone(),
            entities,
            relations,
            rosters,
            type_index: HashMap::new(),
            entity_index: HashMap::new(),
            relation_index: HashMap::new(),
        };
        for (i, t) in table.types.iter().enumerate() {
            if table.type_index.insert(t.clone(), TypeId(i as u32)).is_some() {
                return Err(Error::Config(format!("duplicate type label {t}")));
            }
        }
        for (i, e) in table.entities.iter().enumerate() {
            if table.entity_index.insert(e.label.clone(), EntityId(i as u32)).is_some() {
                return Err(Error::Config(format!("duplicate entity label {}", e.label)));
            }
        }
        for (i, r) in table.relations.iter().enumerate() {
            if table.relation_index.insert(r.name.clone(), RelationId(i as u32)).is_some() {
                return Err(Error::Config(format!("duplicate relation {}", r.name)));
            }
        }
        Ok(table)
    }

    pub fn to_data(&self) -> SymbolData {
        SymbolData {
            types: self.types.clone(),
            entities: self.entities.iter().map(|e| (e.label.clone(), e.ty.0)).collect(),
            relations: self
                .relations
                .iter()
                .step_by(2)
                .map(|r| (r.label.clone(), r.domain.0, r.range.0))
                .collect(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Relation count including inverses.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn entity(&self, label: &str) -> Result<EntityId> {
        self.entity_index.get(label).copied().ok_or_else(|| Error::UnknownEntity(label.to_string()))
    }

    pub fn relation(&self, name: &str) -> Result<RelationId> {
        self.relation_index.get(name).copied().ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn type_id(&self, label: &str) -> Result<TypeId> {
        self.type_index.get(label).copied().ok_or_else(|| Error::UnknownType(label.to_string()))
    }

    pub fn entity_info(&self, e: EntityId) -> &EntityInfo {
        &self.entities[e.index()]
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entities[e.index()].label
    }

    pub fn entity_type(&self, e: EntityId) -> TypeId {
        self.entities[e.index()].ty
    }

    pub fn relation_info(&self, r: RelationId) -> &RelationInfo {
        &self.relations[r.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relations[r.index()].name
    }

    pub fn type_label(&self, t: TypeId) -> &str {
        &self.types[t.index()]
    }

    /// Entities of type `t` in handle order.
    pub fn roster(&self, t: TypeId) -> &[EntityId] {
        &self.rosters[t.index()]
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn type_ids(&self) -> impl Iterator<Item = TypeId> {
        (0..self.types.len() as u32).map(TypeId)
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        e.index() < self.entities.len()
    }

    pub fn contains_relation(&self, r: RelationId) -> bool {
        r.index() < self.relations.len()
    }
}

/// A sampled set of `(relation, neighbor)` pairs with `relation(neighbor, center)`
/// in the inverse-augmented graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub center: EntityId,
    pub pairs: Vec<(RelationId, EntityId)>,
}

/// Counts describing a graph, written next to TSV dumps.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgManifest {
    pub entities: usize,
    pub types: usize,
    pub base_relations: usize,
    pub base_triples: usize,
    pub triples_with_inverses: usize,
}

#[derive(Clone, Debug)]
pub struct KnowledgeGraph {
    symbols: Arc<SymbolTable>,
    base: Vec<Triple>,
    triples: HashSet<Triple>,
    out_index: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    in_index: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    neighbors: Vec<Vec<(RelationId, EntityId)>>,
}

impl KnowledgeGraph {
    /// Builds a graph over `symbols` from base triples; inverses are added here.
    ///
    /// Triples given with an inverse relation are first canonicalized, and
    /// duplicates collapse.
    pub fn from_triples(symbols: Arc<SymbolTable>, triples: impl IntoIterator<Item = Triple>) -> Self {
        let mut base: Vec<Triple> = triples.into_iter().map(Triple::canonical).collect();
        base.sort_unstable();
        base.dedup();

        let mut all = HashSet::with_capacity(base.len() * 2);
        let mut out_index: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut in_index: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        let mut neighbors = vec![Vec::new(); symbols.num_entities()];
        for t in &base {
            for x in [*t, t.inverse()] {
                all.insert(x);
                out_index.entry((x.head, x.relation)).or_default().push(x.tail);
                in_index.entry((x.tail, x.relation)).or_default().push(x.head);
                neighbors[x.tail.index()].push((x.relation, x.head));
            }
        }
        for v in out_index.values_mut().chain(in_index.values_mut()) {
            v.sort_unstable();
        }
        for v in &mut neighbors {
            v.sort_unstable();
        }
        KnowledgeGraph { symbols, base, triples: all, out_index, in_index, neighbors }
    }

    /// A graph over the same symbol table holding only `base` triples.
    pub fn restrict(&self, base: impl IntoIterator<Item = Triple>) -> KnowledgeGraph {
        KnowledgeGraph::from_triples(self.symbols.clone(), base)
    }

    pub fn symbols(&self) -> &Arc<SymbolTable> {
        &self.symbols
    }

    /// Input triples, sorted, without synthesized inverses.
    pub fn base_triples(&self) -> &[Triple] {
        &self.base
    }

    /// Every stored triple including inverses, in sorted order.
    pub fn triples(&self) -> Vec<Triple> {
        let mut v: Vec<Triple> = self.triples.iter().copied().collect();
        v.sort_unstable();
        v
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.triples.contains(&t)
    }

    /// Tails `t` with `r(head, t)`.
    pub fn tails(&self, head: EntityId, r: RelationId) -> &[EntityId] {
        self.out_index.get(&(head, r)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Heads `h` with `r(h, tail)`.
    pub fn heads(&self, tail: EntityId, r: RelationId) -> &[EntityId] {
        self.in_index.get(&(tail, r)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// All `(r, u)` with `r(u, e)`, sorted.
    pub fn neighbors(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.neighbors[e.index()]
    }

    /// Degree in the inverse-augmented graph, which equals the number of
    /// base triples incident to `e`.
    pub fn degree(&self, e: EntityId) -> usize {
        self.neighbors[e.index()].len()
    }

    /// Entities that take part in at least one triple.
    pub fn active_entities(&self) -> Vec<EntityId> {
        self.symbols.entity_ids().filter(|e| self.degree(*e) > 0).collect()
    }

    /// Samples `n` neighbor pairs of `e`: without replacement when the degree
    /// allows, otherwise every true pair plus uniform draws with replacement.
    pub fn sample_neighborhood<R: Rng + ?Sized>(&self, e: EntityId, n: usize, rng: &mut R) -> Result<Neighborhood> {
        let all = self.neighbors(e);
        if all.is_empty() {
            return Err(Error::NoNeighbors(self.symbols.entity_label(e).to_string()));
        }
        if n == 0 {
            return Err(Error::Config("neighborhood size must be at least 1".into()));
        }
        let pairs = if all.len() >= n {
            rand::seq::index::sample(rng, all.len(), n).iter().map(|i| all[i]).collect()
        } else {
            let mut pairs = all.to_vec();
            while pairs.len() < n {
                pairs.push(all[rng.gen_range(0..all.len())]);
            }
            pairs
        };
        Ok(Neighborhood { center: e, pairs })
    }

    /// Repeatedly deletes entities with fewer than `eta` incident base triples
    /// (and those triples) until no entity falls below the threshold.
    ///
    /// The result is renumbered densely, preserving the relative order of
    /// surviving entities, relations and types.
    pub fn degree_prune(&self, eta: usize) -> KnowledgeGraph {
        let n = self.symbols.num_entities();
        let mut alive = vec![true; n];
        let mut triples: Vec<Triple> = self.base.clone();
        loop {
            let mut degree = vec![0usize; n];
            for t in &triples {
                degree[t.head.index()] += 1;
                degree[t.tail.index()] += 1;
            }
            let mut removed = false;
            for e in 0..n {
                if alive[e] && degree[e] < eta {
                    alive[e] = false;
                    removed = true;
                }
            }
            if !removed {
                break;
            }
            triples.retain(|t| alive[t.head.index()] && alive[t.tail.index()]);
        }
        // Entities left with no triples have degree 0 < eta unless eta == 0.
        let mut builder = KgBuilder::new();
        let s = &self.symbols;
        let mut used = vec![false; n];
        for t in &triples {
            used[t.head.index()] = true;
            used[t.tail.index()] = true;
        }
        for e in s.entity_ids() {
            if alive[e.index()] && (used[e.index()] || eta == 0) {
                builder
                    .add_entity(s.entity_label(e), s.type_label(s.entity_type(e)))
                    .expect("labels are unique in the source graph");
            }
        }
        let mut rel_used = vec![false; s.num_relations()];
        for t in &triples {
            rel_used[t.relation.index()] = true;
        }
        for r in s.relation_ids().step_by(2) {
            if rel_used[r.index()] || eta == 0 {
                let info = s.relation_info(r);
                builder
                    .add_relation(&info.label, s.type_label(info.domain), s.type_label(info.range))
                    .expect("types of surviving relations were declared");
            }
        }
        for t in &triples {
            let info = s.relation_info(t.relation);
            builder
                .add_triple_typed(s.entity_label(t.head), &info.label, s.entity_label(t.tail))
                .expect("all endpoints were declared");
        }
        builder.build()
    }

    pub fn manifest(&self) -> KgManifest {
        KgManifest {
            entities: self.symbols.num_entities(),
            types: self.symbols.num_types(),
            base_relations: self.symbols.num_relations() / 2,
            base_triples: self.base.len(),
            triples_with_inverses: self.triples.len(),
        }
    }

    /// Base triples as `head<TAB>relation<TAB>tail` lines.
    pub fn triples_tsv(&self, triples: &[Triple]) -> String {
        let s = &self.symbols;
        let mut out = String::new();
        for t in triples {
            let info = s.relation_info(t.relation);
            out.push_str(&format!("{}\t{}\t{}\n", s.entity_label(t.head), info.label, s.entity_label(t.tail)));
        }
        out
    }

    /// Type map as `entity<TAB>type` lines in handle order.
    pub fn types_tsv(&self) -> String {
        let s = &self.symbols;
        s.entity_ids().map(|e| format!("{}\t{}\n", s.entity_label(e), s.type_label(s.entity_type(e)))).collect()
    }

    /// Writes `triples.tsv`, `types.tsv` and `manifest.json` into `dir`.
    pub fn save_tsv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("triples.tsv"), &self.triples_tsv(&self.base))?;
        write_file(&dir.join("types.tsv"), &self.types_tsv())?;
        let manifest = serde_json::to_string_pretty(&self.manifest())? + "\n";
        write_file(&dir.join("manifest.json"), &manifest)
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Incrementally assembles a [`KnowledgeGraph`] from labels.
#[derive(Debug, Default)]
pub struct KgBuilder {
    types: Vec<String>,
    type_index: HashMap<String, u32>,
    entities: Vec<(String, u32)>,
    entity_index: HashMap<String, u32>,
    relations: Vec<(String, u32, u32)>,
    relation_index: HashMap<(String, u32, u32), u32>,
    triples: Vec<(u32, u32, u32)>,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern_type(&mut self, label: &str) -> u32 {
        if let Some(&t) = self.type_index.get(label) {
            return t;
        }
        let t = self.types.len() as u32;
        self.types.push(label.to_string());
        self.type_index.insert(label.to_string(), t);
        t
    }

    /// Declares an entity; re-declaring with the same type is a no-op.
    pub fn add_entity(&mut self, label: &str, type_label: &str) -> Result<EntityId> {
        if let Some(&e) = self.entity_index.get(label) {
            let existing = &self.types[self.entities[e as usize].1 as usize];
            if existing != type_label {
                return Err(Error::ConflictingType {
                    label: label.to_string(),
                    first: existing.clone(),
                    second: type_label.to_string(),
                });
            }
            return Ok(EntityId(e));
        }
        let t = self.intern_type(type_label);
        let e = self.entities.len() as u32;
        self.entities.push((label.to_string(), t));
        self.entity_index.insert(label.to_string(), e);
        Ok(EntityId(e))
    }

    pub fn has_entity(&self, label: &str) -> bool {
        self.entity_index.contains_key(label)
    }

    /// Declares a base relation with an explicit signature.
    pub fn add_relation(&mut self, label: &str, domain: &str, range: &str) -> Result<RelationId> {
        let d = *self.type_index.get(domain).ok_or_else(|| Error::UnknownType(domain.to_string()))?;
        let r = *self.type_index.get(range).ok_or_else(|| Error::UnknownType(range.to_string()))?;
        Ok(self.intern_relation(label, d, r))
    }

    fn intern_relation(&mut self, label: &str, d: u32, r: u32) -> RelationId {
        let key = (label.to_string(), d, r);
        if let Some(&k) = self.relation_index.get(&key) {
            return RelationId(2 * k);
        }
        let k = self.relations.len() as u32;
        self.relations.push(key.clone());
        self.relation_index.insert(key, k);
        RelationId(2 * k)
    }

    fn entity_handle(&self, label: &str) -> Result<u32> {
        self.entity_index.get(label).copied().ok_or_else(|| Error::UnknownEntity(label.to_string()))
    }

    /// Adds `relation(head, tail)`; both entities must already be declared.
    /// The relation's signature is taken from the endpoint types.
    pub fn add_triple_typed(&mut self, head: &str, relation: &str, tail: &str) -> Result<()> {
        let h = self.entity_handle(head)?;
        let t = self.entity_handle(tail)?;
        let (hd, tr) = (self.entities[h as usize].1, self.entities[t as usize].1);
        let r = self.intern_relation(relation, hd, tr);
        self.triples.push((h, r.0 / 2, t));
        Ok(())
    }

    pub fn build(self) -> KnowledgeGraph {
        let data = SymbolData { types: self.types, entities: self.entities, relations: self.relations };
        let symbols = Arc::new(SymbolTable::from_data(&data).expect("builder keeps labels unique"));
        let triples = self
            .triples
            .into_iter()
            .map(|(h, k, t)| Triple::new(EntityId(h), RelationId(2 * k), EntityId(t)));
        KnowledgeGraph::from_triples(symbols, triples)
    }
}

/// Non-comment, non-blank lines of a TSV text split on tabs, with 1-based line numbers.
pub(crate) fn tsv_records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            None
        } else {
            Some((i + 1, line.split('\t').collect()))
        }
    })
}

/// Parses an `entity<TAB>type` map.
pub fn parse_type_map(text: &str, source: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (line, fields) in tsv_records(text) {
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                message: format!("expected 2 tab-separated fields, found {}", fields.len()),
            });
        }
        if let Some(prev) = map.insert(fields[0].to_string(), fields[1].to_string()) {
            if prev != fields[1] {
                return Err(Error::ConflictingType {
                    label: fields[0].to_string(),
                    first: prev,
                    second: fields[1].to_string(),
                });
            }
        }
    }
    Ok(map)
}

/// Parses `head<TAB>relation<TAB>tail` lines into label triples.
pub fn parse_triples(text: &str, source: &str) -> Result<Vec<(String, String, String)>> {
    tsv_records(text)
        .map(|(line, fields)| {
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            Ok((fields[0].to_string(), fields[1].to_string(), fields[2].to_string()))
        })
        .collect()
}

/// Builds a graph from label triples and a type map. Handles are assigned
/// in first-appearance order over the triples.
pub fn graph_from_labels(
    triples: &[(String, String, String)],
    types: &BTreeMap<String, String>,
) -> Result<KnowledgeGraph> {
    let mut builder = KgBuilder::new();
    let mut missing = Vec::new();
    let mut missing_seen = HashSet::new();
    for (h, _, t) in triples {
        for label in [h, t] {
            if builder.has_entity(label) {
                continue;
            }
            match types.get(label) {
                Some(ty) => {
                    builder.add_entity(label, ty)?;
                }
                None => {
                    if missing_seen.insert(label.clone()) {
                        missing.push(label.clone());
                    }
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingTypes(missing));
    }
    for (h, r, t) in triples {
        builder.add_triple_typed(h, r, t)?;
    }
    Ok(builder.build())
}

/// Loads a triple TSV and an entity-type TSV.
pub fn load_triples(triple_file: &Path, type_map_file: &Path) -> Result<KnowledgeGraph> {
    let types = parse_type_map(&read_file(type_map_file)?, &type_map_file.display().to_string())?;
    let triples = parse_triples(&read_file(triple_file)?, &triple_file.display().to_string())?;
    graph_from_labels(&triples, &types)
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.manifest();
        write!(
            f,
            "{} entities, {} types, {} relations, {} triples ({} with inverses)",
            m.entities, m.types, m.base_relations, m.base_triples, m.triples_with_inverses
        )
    }
}
