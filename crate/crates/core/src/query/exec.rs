//! Exact query execution by constraint propagation over the DAG.

use std::collections::BTreeSet;

use super::{ConjunctiveQuery, NodeKind};
use crate::kg::{EntityId, KnowledgeGraph};

/// Kahn's order over node indices, ties broken by index; `None` on a cycle
/// or an out-of-range edge.
pub fn topological_order(q: &ConjunctiveQuery) -> Option<Vec<usize>> {
    let n = q.nodes.len();
    let mut indeg = vec![0usize; n];
    for e in &q.edges {
        if e.from >= n || e.to >= n {
            return None;
        }
        indeg[e.to] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for e in q.edges.iter().filter(|e| e.from == i) {
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                ready.insert(e.to);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Candidate sets per node from a forward sweep: anchors bind to their
/// entity, every other node to the entities of its expected type reachable
/// through all of its incoming patterns.
fn forward_domains(kg: &KnowledgeGraph, q: &ConjunctiveQuery, order: &[usize]) -> Vec<BTreeSet<EntityId>> {
    let symbols = kg.symbols();
    let mut domains: Vec<BTreeSet<EntityId>> = vec![BTreeSet::new(); q.nodes.len()];
    for &i in order {
        let node = &q.nodes[i];
        if let NodeKind::Anchor(e) = node.kind {
            domains[i].insert(e);
            continue;
        }
        let mut acc: Option<BTreeSet<EntityId>> = None;
        for e in q.edges.iter().filter(|e| e.to == i) {
            let reach: BTreeSet<EntityId> =
                domains[e.from].iter().flat_map(|&u| kg.tails(u, e.relation).iter().copied()).collect();
            acc = Some(match acc {
                None => reach,
                Some(prev) => prev.intersection(&reach).copied().collect(),
            });
        }
        domains[i] = acc
            .unwrap_or_default()
            .into_iter()
            .filter(|&x| symbols.entity_type(x) == node.expected_type)
            .collect();
    }
    domains
}

/// Every entity that can bind the target variable under some assignment of
/// the bound variables satisfying all patterns.
///
/// When each non-target node feeds exactly one pattern (every sampled
/// structure), the forward sweep is already exact. Otherwise a variable
/// shared by several patterns must bind consistently, and the forward
/// domains only prune a backtracking search.
pub fn execute(kg: &KnowledgeGraph, q: &ConjunctiveQuery) -> BTreeSet<EntityId> {
    let Some(order) = topological_order(q) else { return BTreeSet::new() };
    let Some(target) = q.target() else { return BTreeSet::new() };
    let domains = forward_domains(kg, q, &order);
    let tree = (0..q.nodes.len()).filter(|&i| i != target).all(|i| q.outgoing(i).len() == 1);
    if tree {
        return domains[target].clone();
    }

    let mut assignment: Vec<Option<EntityId>> = vec![None; q.nodes.len()];
    let mut answers = BTreeSet::new();
    search(kg, q, &order, &domains, 0, &mut assignment, target, &mut answers);
    answers
}

#[allow(clippy::too_many_arguments)]
fn search(
    kg: &KnowledgeGraph,
    q: &ConjunctiveQuery,
    order: &[usize],
    domains: &[BTreeSet<EntityId>],
    depth: usize,
    assignment: &mut Vec<Option<EntityId>>,
    target: usize,
    answers: &mut BTreeSet<EntityId>,
) {
    if depth == order.len() {
        if let Some(t) = assignment[target] {
            answers.insert(t);
        }
        return;
    }
    let node = order[depth];
    for &candidate in &domains[node] {
        if node == target && answers.contains(&candidate) {
            continue;
        }
        // Incoming endpoints are earlier in topological order, so already bound.
        let consistent = q.edges.iter().filter(|e| e.to == node).all(|e| {
            let head = assignment[e.from].expect("predecessor bound");
            kg.tails(head, e.relation).binary_search(&candidate).is_ok()
        });
        if consistent {
            assignment[node] = Some(candidate);
            search(kg, q, order, domains, depth + 1, assignment, target, answers);
            assignment[node] = None;
        }
    }
}
