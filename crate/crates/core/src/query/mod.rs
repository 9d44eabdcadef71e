//! Conjunctive graph queries: representation, validity, exact execution,
//! and sampling of query/answer pairs with negatives.
//!
//! An edge `(from, r, to)` is the basic graph pattern `r(from, to)`. Patterns
//! whose subject is a variable and object an entity are written with the
//! inverse relation so that anchors are always sources of the dependence
//! DAG and the target variable is its unique sink.

mod exec;
mod inline;
mod record;
mod sampling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, TypeId};

pub use exec::{execute, topological_order};
pub use inline::parse_inline;
pub use record::{QueryRecord, QuerySet};
pub use sampling::{
    branch_queries, check_unanswerable, hard_negative_pool, sample_negatives, sample_query, sample_query_with_budget,
    NegativeDraw, MAX_ATTEMPTS,
};

/// The seven DAG shapes sampled for training and evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryStructure {
    #[serde(rename = "1-chain")]
    OneChain,
    #[serde(rename = "2-chain")]
    TwoChain,
    #[serde(rename = "3-chain")]
    ThreeChain,
    #[serde(rename = "2-inter")]
    TwoInter,
    #[serde(rename = "3-inter")]
    ThreeInter,
    /// A direct edge and a 2-chain meeting at the target.
    #[serde(rename = "3-inter_chain")]
    ThreeInterChain,
    /// Two anchors meeting at a variable, then one edge to the target.
    #[serde(rename = "3-chain_inter")]
    ThreeChainInter,
}

/// Node layout of a structure: `node_count` nodes, the last one the
/// target, with edges `(from, to)` in anchor-to-target direction.
#[derive(Clone, Copy, Debug)]
pub struct Template {
    pub node_count: usize,
    pub anchors: &'static [usize],
    pub edges: &'static [(usize, usize)],
}

impl QueryStructure {
    pub const ALL: [QueryStructure; 7] = [
        QueryStructure::OneChain,
        QueryStructure::TwoChain,
        QueryStructure::ThreeChain,
        QueryStructure::TwoInter,
        QueryStructure::ThreeInter,
        QueryStructure::ThreeInterChain,
        QueryStructure::ThreeChainInter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QueryStructure::OneChain => "1-chain",
            QueryStructure::TwoChain => "2-chain",
            QueryStructure::ThreeChain => "3-chain",
            QueryStructure::TwoInter => "2-inter",
            QueryStructure::ThreeInter => "3-inter",
            QueryStructure::ThreeInterChain => "3-inter_chain",
            QueryStructure::ThreeChainInter => "3-chain_inter",
        }
    }

    pub fn template(self) -> Template {
        match self {
            QueryStructure::OneChain => Template { node_count: 2, anchors: &[0], edges: &[(0, 1)] },
            QueryStructure::TwoChain => Template { node_count: 3, anchors: &[0], edges: &[(0, 1), (1, 2)] },
            QueryStructure::ThreeChain => {
                Template { node_count: 4, anchors: &[0], edges: &[(0, 1), (1, 2), (2, 3)] }
            }
            QueryStructure::TwoInter => Template { node_count: 3, anchors: &[0, 1], edges: &[(0, 2), (1, 2)] },
            QueryStructure::ThreeInter => {
                Template { node_count: 4, anchors: &[0, 1, 2], edges: &[(0, 3), (1, 3), (2, 3)] }
            }
            QueryStructure::ThreeInterChain => {
                Template { node_count: 4, anchors: &[0, 1], edges: &[(0, 3), (1, 2), (2, 3)] }
            }
            QueryStructure::ThreeChainInter => {
                Template { node_count: 4, anchors: &[0, 1], edges: &[(0, 2), (1, 2), (2, 3)] }
            }
        }
    }

    /// Whether the shape contains a node with two or more incoming patterns.
    pub fn has_intersection(self) -> bool {
        matches!(
            self,
            QueryStructure::TwoInter
                | QueryStructure::ThreeInter
                | QueryStructure::ThreeInterChain
                | QueryStructure::ThreeChainInter
        )
    }

    pub fn edge_count(self) -> usize {
        self.template().edges.len()
    }
}

impl fmt::Display for QueryStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QueryStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryStructure::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown query structure {s}")))
    }
}

/// A structure plus the negative-sampling regime; eleven in total.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QueryType {
    pub structure: QueryStructure,
    pub hard: bool,
}

impl QueryType {
    pub fn new(structure: QueryStructure, hard: bool) -> Self {
        Self { structure, hard }
    }

    /// The 7 plain types followed by the 4 hard-negative types.
    pub fn all() -> Vec<QueryType> {
        let plain = QueryStructure::ALL.into_iter().map(|s| QueryType::new(s, false));
        let hard = QueryStructure::ALL.into_iter().filter(|s| s.has_intersection()).map(|s| QueryType::new(s, true));
        plain.chain(hard).collect()
    }

    pub fn name(self) -> String {
        if self.hard {
            format!("hard-{}", self.structure.name())
        } else {
            self.structure.name().to_string()
        }
    }
}

impl PartialOrd for QueryType {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueryType {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.hard, self.structure).cmp(&(other.hard, other.structure))
    }
}

impl fmt::Display for QueryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for QueryType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.strip_prefix("hard-") {
            Some(rest) => {
                let structure: QueryStructure = rest.parse()?;
                if !structure.has_intersection() {
                    return Err(Error::Config(format!("{s}: hard negatives need an intersection structure")));
                }
                Ok(QueryType::new(structure, true))
            }
            None => Ok(QueryType::new(s.parse()?, false)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Anchor(EntityId),
    Bound,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QueryNode {
    pub kind: NodeKind,
    pub expected_type: TypeId,
}

impl QueryNode {
    pub fn anchor(e: EntityId, ty: TypeId) -> Self {
        Self { kind: NodeKind::Anchor(e), expected_type: ty }
    }

    pub fn bound(ty: TypeId) -> Self {
        Self { kind: NodeKind::Bound, expected_type: ty }
    }

    pub fn target(ty: TypeId) -> Self {
        Self { kind: NodeKind::Target, expected_type: ty }
    }

    pub fn anchor_entity(&self) -> Option<EntityId> {
        match self.kind {
            NodeKind::Anchor(e) => Some(e),
            _ => None,
        }
    }
}

/// One basic graph pattern `relation(from, to)` over node indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QueryEdge {
    pub from: usize,
    pub relation: RelationId,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ConjunctiveQuery {
    pub nodes: Vec<QueryNode>,
    pub edges: Vec<QueryEdge>,
    /// Shape the query was sampled from; `None` for hand-written queries.
    pub structure: Option<QueryStructure>,
}

/// A broken validity rule, reported by [`ConjunctiveQuery::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoNodes,
    EdgeOutOfRange { edge: usize },
    SelfLoop { edge: usize },
    UnknownRelation { edge: usize },
    UnknownEntity { node: usize },
    NotADag,
    TargetCount(usize),
    TargetNotSink,
    SinkNotTarget { node: usize },
    SourceNotAnchor { node: usize },
    AnchorHasIncoming { node: usize },
    AnchorTypeMismatch { node: usize },
    EdgeTypeMismatch { edge: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNodes => write!(f, "query has no nodes"),
            Violation::EdgeOutOfRange { edge } => write!(f, "edge {edge} refers to a missing node"),
            Violation::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Violation::UnknownRelation { edge } => write!(f, "edge {edge} uses an unknown relation"),
            Violation::UnknownEntity { node } => write!(f, "anchor node {node} names an unknown entity"),
            Violation::NotADag => write!(f, "dependence graph is not a DAG"),
            Violation::TargetCount(n) => write!(f, "expected exactly one target variable, found {n}"),
            Violation::TargetNotSink => write!(f, "target variable has outgoing patterns"),
            Violation::SinkNotTarget { node } => write!(f, "node {node} is a sink but not the target"),
            Violation::SourceNotAnchor { node } => write!(f, "variable node {node} has no incoming pattern"),
            Violation::AnchorHasIncoming { node } => write!(f, "anchor node {node} has incoming patterns"),
            Violation::AnchorTypeMismatch { node } => {
                write!(f, "anchor node {node} entity type differs from its expected type")
            }
            Violation::EdgeTypeMismatch { edge } => {
                write!(f, "edge {edge} relation signature does not match its node types")
            }
        }
    }
}

impl ConjunctiveQuery {
    pub fn target(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.kind == NodeKind::Target)
    }

    pub fn target_type(&self) -> Option<TypeId> {
        self.target().map(|t| self.nodes[t].expected_type)
    }

    /// Incoming edge indices of `node`, in edge order.
    pub fn incoming(&self, node: usize) -> Vec<usize> {
        self.edges.iter().enumerate().filter(|(_, e)| e.to == node).map(|(i, _)| i).collect()
    }

    pub fn outgoing(&self, node: usize) -> Vec<usize> {
        self.edges.iter().enumerate().filter(|(_, e)| e.from == node).map(|(i, _)| i).collect()
    }

    /// Nodes with two or more incoming patterns, in topological order.
    pub fn intersection_nodes(&self) -> Vec<usize> {
        let order = topological_order(self).unwrap_or_default();
        order.into_iter().filter(|&n| self.incoming(n).len() >= 2).collect()
    }

    /// Every broken validity rule; empty when the query is valid against `kg`.
    pub fn validate(&self, kg: &KnowledgeGraph) -> Vec<Violation> {
        let symbols = kg.symbols();
        let mut out = Vec::new();
        if self.nodes.is_empty() {
            out.push(Violation::NoNodes);
            return out;
        }
        let n = self.nodes.len();
        let mut structural_ok = true;
        for (i, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                out.push(Violation::EdgeOutOfRange { edge: i });
                structural_ok = false;
            } else if e.from == e.to {
                out.push(Violation::SelfLoop { edge: i });
            }
            if !symbols.contains_relation(e.relation) {
                out.push(Violation::UnknownRelation { edge: i });
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Anchor(e) = node.kind {
                if !symbols.contains_entity(e) {
                    out.push(Violation::UnknownEntity { node: i });
                } else if symbols.entity_type(e) != node.expected_type {
                    out.push(Violation::AnchorTypeMismatch { node: i });
                }
            }
        }
        if !structural_ok {
            return out;
        }

        if topological_order(self).is_none() {
            out.push(Violation::NotADag);
        }
        let targets: Vec<usize> =
            self.nodes.iter().enumerate().filter(|(_, x)| x.kind == NodeKind::Target).map(|(i, _)| i).collect();
        if targets.len() != 1 {
            out.push(Violation::TargetCount(targets.len()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let indeg = self.edges.iter().filter(|e| e.to == i).count();
            let outdeg = self.edges.iter().filter(|e| e.from == i).count();
            match node.kind {
                NodeKind::Target if outdeg > 0 => out.push(Violation::TargetNotSink),
                NodeKind::Anchor(_) if indeg > 0 => out.push(Violation::AnchorHasIncoming { node: i }),
                NodeKind::Bound | NodeKind::Target if indeg == 0 => {
                    out.push(Violation::SourceNotAnchor { node: i })
                }
                _ => {}
            }
            if outdeg == 0 && node.kind != NodeKind::Target {
                out.push(Violation::SinkNotTarget { node: i });
            }
        }
        for (i, e) in self.edges.iter().enumerate() {
            if !symbols.contains_relation(e.relation) {
                continue;
            }
            let info = symbols.relation_info(e.relation);
            if info.domain != self.nodes[e.from].expected_type || info.range != self.nodes[e.to].expected_type {
                out.push(Violation::EdgeTypeMismatch { edge: i });
            }
        }
        out
    }

    pub fn is_valid(&self, kg: &KnowledgeGraph) -> bool {
        self.validate(kg).is_empty()
    }

    /// `Ok(())` or [`Error::InvalidQuery`] with every violation.
    pub fn check(&self, kg: &KnowledgeGraph) -> Result<(), Error> {
        let v = self.validate(kg);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidQuery(v))
        }
    }
}

/// A query with one true answer and its sampled negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuerySample {
    pub query: ConjunctiveQuery,
    pub answer: EntityId,
    pub negatives: Vec<EntityId>,
    pub hard: bool,
}

impl QuerySample {
    /// Type tag of the sample; hand-written queries without a structure
    /// have none.
    pub fn query_type(&self) -> Option<QueryType> {
        self.query.structure.map(|s| QueryType::new(s, self.hard))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{graph_from_labels, parse_triples, parse_type_map};

    fn fig1_kg() -> KnowledgeGraph {
        let triples = "Alice\tAlmaMater\tUCLA\nAlice\tActedIn\tEscape_Clause\nAlice\tCauseOfDeath\tCancer\n";
        let types = "Alice\tPerson\nUCLA\tUniversity\nEscape_Clause\tFilm\nCancer\tDisease\n";
        graph_from_labels(&parse_triples(triples, "t").unwrap(), &parse_type_map(types, "y").unwrap()).unwrap()
    }

    /// Two anchors meet at ?Person, then one pattern reaches ?Disease.
    pub(crate) fn fig1_query(kg: &KnowledgeGraph) -> ConjunctiveQuery {
        let s = kg.symbols();
        let ucla = s.entity("UCLA").unwrap();
        let film = s.entity("Escape_Clause").unwrap();
        let person = s.type_id("Person").unwrap();
        let disease = s.type_id("Disease").unwrap();
        ConjunctiveQuery {
            nodes: vec![
                QueryNode::anchor(ucla, s.entity_type(ucla)),
                QueryNode::anchor(film, s.entity_type(film)),
                QueryNode::bound(person),
                QueryNode::target(disease),
            ],
            edges: vec![
                QueryEdge { from: 0, relation: s.relation("AlmaMater^-1").unwrap(), to: 2 },
                QueryEdge { from: 1, relation: s.relation("ActedIn^-1").unwrap(), to: 2 },
                QueryEdge { from: 2, relation: s.relation("CauseOfDeath").unwrap(), to: 3 },
            ],
            structure: Some(QueryStructure::ThreeChainInter),
        }
    }

    #[test]
    fn example_query_is_valid_and_answered() {
        let kg = fig1_kg();
        let q = fig1_query(&kg);
        assert_eq!(q.validate(&kg), vec![]);
        let ans = execute(&kg, &q);
        assert_eq!(ans.into_iter().collect::<Vec<_>>(), vec![kg.symbols().entity("Cancer").unwrap()]);
    }

    #[test]
    fn cycle_is_reported() {
        let kg = fig1_kg();
        let mut q = fig1_query(&kg);
        let person = kg.symbols().type_id("Person").unwrap();
        q.nodes.push(QueryNode::bound(person));
        let r = kg.symbols().relation("AlmaMater").unwrap();
        q.edges.push(QueryEdge { from: 2, relation: r, to: 4 });
        q.edges.push(QueryEdge { from: 4, relation: r, to: 2 });
        assert!(q.validate(&kg).contains(&Violation::NotADag));
    }

    #[test]
    fn two_targets_are_reported() {
        let kg = fig1_kg();
        let mut q = fig1_query(&kg);
        q.nodes[2].kind = NodeKind::Target;
        let v = q.validate(&kg);
        assert!(v.contains(&Violation::TargetCount(2)), "{v:?}");
    }

    #[test]
    fn type_mismatch_is_reported() {
        let kg = fig1_kg();
        let mut q = fig1_query(&kg);
        q.edges[2].relation = kg.symbols().relation("AlmaMater").unwrap();
        assert!(q.validate(&kg).contains(&Violation::EdgeTypeMismatch { edge: 2 }));
    }

    #[test]
    fn query_type_inventory() {
        let all = QueryType::all();
        assert_eq!(all.len(), 11);
        assert_eq!(all.iter().filter(|t| t.hard).count(), 4);
        for t in &all {
            assert_eq!(t.name().parse::<QueryType>().unwrap(), *t);
        }
        assert!("hard-2-chain".parse::<QueryType>().is_err());
        let eligible: Vec<_> = QueryStructure::ALL.into_iter().filter(|s| s.has_intersection()).collect();
        assert_eq!(eligible.len(), 4);
        for s in QueryStructure::ALL {
            let t = s.template();
            let target = t.node_count - 1;
            let multi = (0..t.node_count).any(|n| t.edges.iter().filter(|e| e.1 == n).count() >= 2);
            assert_eq!(multi, s.has_intersection());
            assert!(t.edges.iter().all(|e| e.0 != target));
        }
    }
}
