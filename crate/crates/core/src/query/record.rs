//! Line-oriented JSON serialization of query samples.
//!
//! One record per line:
//!
//! ```json
//! {"structure":"2-inter","hard":false,
//!  "nodes":[{"kind":"anchor","entity":"a","type":"T"},{"kind":"anchor","entity":"b","type":"T"},{"kind":"target","type":"T"}],
//!  "edges":[{"from":0,"relation":"r","to":2},{"from":1,"relation":"s^-1","to":2}],
//!  "answer":"y","negatives":["x"]}
//! ```
//!
//! Entities, relations and types are written by label so files stay
//! readable and independent of handle numbering.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConjunctiveQuery, NodeKind, QueryEdge, QueryNode, QuerySample, QueryStructure, QueryType};
use crate::error::{Error, Result};
use crate::kg::{read_file, write_file, SymbolTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: usize,
    pub relation: String,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub structure: Option<String>,
    #[serde(default)]
    pub hard: bool,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
}

impl QueryRecord {
    pub fn from_sample(sample: &QuerySample, symbols: &SymbolTable) -> Self {
        let mut record = Self::from_query(&sample.query, symbols);
        record.hard = sample.hard;
        record.answer = Some(symbols.entity_label(sample.answer).to_string());
        record.negatives = sample.negatives.iter().map(|e| symbols.entity_label(*e).to_string()).collect();
        record
    }

    pub fn from_query(q: &ConjunctiveQuery, symbols: &SymbolTable) -> Self {
        let nodes = q
            .nodes
            .iter()
            .map(|n| {
                let (kind, entity) = match n.kind {
                    NodeKind::Anchor(e) => ("anchor", Some(symbols.entity_label(e).to_string())),
                    NodeKind::Bound => ("bound", None),
                    NodeKind::Target => ("target", None),
                };
                NodeRecord { kind: kind.to_string(), entity, ty: symbols.type_label(n.expected_type).to_string() }
            })
            .collect();
        let edges = q
            .edges
            .iter()
            .map(|e| EdgeRecord { from: e.from, relation: symbols.relation_name(e.relation).to_string(), to: e.to })
            .collect();
        QueryRecord {
            structure: q.structure.map(|s| s.name().to_string()),
            hard: false,
            nodes,
            edges,
            answer: None,
            negatives: Vec::new(),
        }
    }

    pub fn to_query(&self, symbols: &SymbolTable) -> Result<ConjunctiveQuery> {
        let structure = self.structure.as_deref().map(str::parse::<QueryStructure>).transpose()?;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for n in &self.nodes {
            let ty = symbols.type_id(&n.ty)?;
            let kind = match (n.kind.as_str(), &n.entity) {
                ("anchor", Some(label)) => NodeKind::Anchor(symbols.entity(label)?),
                ("anchor", None) => return Err(Error::Config("anchor node without an entity".into())),
                ("bound", _) => NodeKind::Bound,
                ("target", _) => NodeKind::Target,
                (other, _) => return Err(Error::Config(format!("unknown node kind {other}"))),
            };
            nodes.push(QueryNode { kind, expected_type: ty });
        }
        let edges = self
            .edges
            .iter()
            .map(|e| Ok(QueryEdge { from: e.from, relation: symbols.relation(&e.relation)?, to: e.to }))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConjunctiveQuery { nodes, edges, structure })
    }

    pub fn to_sample(&self, symbols: &SymbolTable) -> Result<QuerySample> {
        let query = self.to_query(symbols)?;
        let answer = self.answer.as_deref().ok_or_else(|| Error::Config("query record has no answer".into()))?;
        Ok(QuerySample {
            query,
            answer: symbols.entity(answer)?,
            negatives: self.negatives.iter().map(|l| symbols.entity(l)).collect::<Result<Vec<_>>>()?,
            hard: self.hard,
        })
    }
}

pub fn samples_to_jsonl(samples: &[QuerySample], symbols: &SymbolTable) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&QueryRecord::from_sample(s, symbols))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn samples_from_jsonl(text: &str, symbols: &SymbolTable) -> Result<Vec<QuerySample>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<QueryRecord>(l)?.to_sample(symbols))
        .collect()
}

/// Query samples grouped by query type.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuerySet {
    pub by_type: BTreeMap<QueryType, Vec<QuerySample>>,
}

impl QuerySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: QueryType, sample: QuerySample) {
        self.by_type.entry(t).or_default().push(sample);
    }

    pub fn len(&self) -> usize {
        self.by_type.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (QueryType, &QuerySample)> {
        self.by_type.iter().flat_map(|(t, v)| v.iter().map(move |s| (*t, s)))
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        self.by_type.iter().map(|(t, v)| (t.name(), v.len())).collect()
    }

    /// Writes one `<type>.jsonl` file per query type into `dir`.
    pub fn write_dir(&self, dir: &Path, symbols: &SymbolTable) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (t, samples) in &self.by_type {
            write_file(&dir.join(format!("{}.jsonl", t.name())), &samples_to_jsonl(samples, symbols)?)?;
        }
        Ok(())
    }

    /// Reads every `<type>.jsonl` file in `dir`.
    pub fn read_dir(dir: &Path, symbols: &SymbolTable) -> Result<Self> {
        let mut set = QuerySet::new();
        for t in QueryType::all() {
            let path = dir.join(format!("{}.jsonl", t.name()));
            if path.exists() {
                let samples = samples_from_jsonl(&read_file(&path)?, symbols)?;
                for s in &samples {
                    if s.query_type() != Some(t) {
                        return Err(Error::Dataset(format!("{} holds a record of another type", path.display())));
                    }
                }
                set.by_type.insert(t, samples);
            }
        }
        Ok(set)
    }
}
