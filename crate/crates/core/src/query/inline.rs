//! A one-line query syntax for the command line:
//!
//! ```text
//! likes(agent_03, ?i), owns(agent_07, ?i)
//! knows(agent_01, ?a), made_by^-1(?a, ?i)
//! ```
//!
//! Each pattern is `relation(from, to)`; terms starting with `?` are
//! variables, anything else is an entity label. The target is the one
//! variable without outgoing patterns. Variable types come from the
//! relation signatures.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kg::SymbolTable;
use crate::query::{ConjunctiveQuery, NodeKind, QueryEdge, QueryNode, Violation};

fn parse_error(text: &str, message: impl Into<String>) -> Error {
    Error::Parse { path: "inline query".into(), line: 1, message: format!("{}: {text:?}", message.into()) }
}

/// Splits `r(a, b), s(c, d)` into `(r, a, b)` triples of trimmed strings.
fn patterns(text: &str) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let open = rest.find('(').ok_or_else(|| parse_error(text, "expected `relation(from, to)`"))?;
        let close = rest[open..].find(')').map(|c| open + c).ok_or_else(|| parse_error(text, "unclosed `(`"))?;
        let name = rest[..open].trim();
        let args: Vec<&str> = rest[open + 1..close].split(',').map(str::trim).collect();
        if name.is_empty() || args.len() != 2 || args.iter().any(|a| a.is_empty()) {
            return Err(parse_error(text, "each pattern needs a relation and two terms"));
        }
        out.push((name.to_string(), args[0].to_string(), args[1].to_string()));
        rest = rest[close + 1..].trim_start();
        rest = rest.strip_prefix(',').or_else(|| rest.strip_prefix('&')).unwrap_or(rest).trim_start();
    }
    if out.is_empty() {
        return Err(parse_error(text, "empty query"));
    }
    Ok(out)
}

pub fn parse_inline(text: &str, symbols: &SymbolTable) -> Result<ConjunctiveQuery> {
    let mut nodes: Vec<QueryNode> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    for (rel, from, to) in patterns(text)? {
        let relation = symbols.relation(&rel)?;
        let info = symbols.relation_info(relation);
        let mut node = |term: &str, ty| -> Result<usize> {
            if let Some(&i) = index.get(term) {
                return Ok(i);
            }
            let n = if term.starts_with('?') {
                QueryNode::bound(ty)
            } else {
                let e = symbols.entity(term)?;
                QueryNode::anchor(e, symbols.entity_type(e))
            };
            index.insert(term.to_string(), nodes.len());
            nodes.push(n);
            Ok(nodes.len() - 1)
        };
        let f = node(&from, info.domain)?;
        let t = node(&to, info.range)?;
        edges.push(QueryEdge { from: f, relation, to: t });
    }
    let sinks: Vec<usize> = (0..nodes.len())
        .filter(|&i| matches!(nodes[i].kind, NodeKind::Bound) && !edges.iter().any(|e| e.from == i))
        .collect();
    if sinks.len() != 1 {
        return Err(Error::InvalidQuery(vec![Violation::TargetCount(sinks.len())]));
    }
    nodes[sinks[0]].kind = NodeKind::Target;
    Ok(ConjunctiveQuery { nodes, edges, structure: None })
}
