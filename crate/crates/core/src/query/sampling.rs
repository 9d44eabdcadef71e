//! Query/answer sampling and negative sampling.

use std::collections::BTreeSet;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::{execute, ConjunctiveQuery, QueryEdge, QueryNode, QuerySample, QueryStructure};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph};

/// Default retry budget of [`sample_query`].
pub const MAX_ATTEMPTS: usize = 100;

/// Negatives drawn for one sample; `shortfall` counts how many of the
/// requested negatives did not exist.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NegativeDraw {
    pub entities: Vec<EntityId>,
    pub shortfall: usize,
}

/// Samples a query of the given shape with one answer, retrying up to
/// [`MAX_ATTEMPTS`] times. The returned sample carries no negatives.
pub fn sample_query<R: Rng + ?Sized>(kg: &KnowledgeGraph, structure: QueryStructure, rng: &mut R) -> Result<QuerySample> {
    sample_query_with_budget(kg, structure, MAX_ATTEMPTS, rng)
}

pub fn sample_query_with_budget<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    structure: QueryStructure,
    attempts: usize,
    rng: &mut R,
) -> Result<QuerySample> {
    let active = kg.active_entities();
    if !active.is_empty() {
        for _ in 0..attempts {
            let answer = active[rng.gen_range(0..active.len())];
            if let Some(query) = walk_back(kg, structure, answer, rng) {
                if query.is_valid(kg) && execute(kg, &query).contains(&answer) {
                    return Ok(QuerySample { query, answer, negatives: Vec::new(), hard: false });
                }
            }
        }
    }
    Err(Error::Unrealizable { structure: structure.name().to_string(), attempts })
}

/// Binds the target to `answer`, then walks the template from the target
/// towards the anchors, choosing distinct incoming triples uniformly at
/// every node.
fn walk_back<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    structure: QueryStructure,
    answer: EntityId,
    rng: &mut R,
) -> Option<ConjunctiveQuery> {
    let template = structure.template();
    let target = template.node_count - 1;
    let mut binding: Vec<Option<EntityId>> = vec![None; template.node_count];
    let mut relations = vec![None; template.edges.len()];
    binding[target] = Some(answer);
    let mut frontier = vec![target];
    while let Some(node) = frontier.pop() {
        let x = binding[node]?;
        let incoming: Vec<usize> =
            template.edges.iter().enumerate().filter(|(_, e)| e.1 == node).map(|(i, _)| i).collect();
        if incoming.is_empty() {
            continue;
        }
        let pairs = kg.neighbors(x);
        if pairs.len() < incoming.len() {
            return None;
        }
        let picks = sample_indices(rng, pairs.len(), incoming.len());
        for (edge, pick) in incoming.iter().zip(picks.iter()) {
            let (r, u) = pairs[pick];
            relations[*edge] = Some(r);
            let from = template.edges[*edge].0;
            binding[from] = Some(u);
            frontier.push(from);
        }
    }

    let symbols = kg.symbols();
    let mut nodes = Vec::with_capacity(template.node_count);
    for (i, b) in binding.iter().enumerate() {
        let e = (*b)?;
        let ty = symbols.entity_type(e);
        nodes.push(if i == target {
            QueryNode::target(ty)
        } else if template.anchors.contains(&i) {
            QueryNode::anchor(e, ty)
        } else {
            QueryNode::bound(ty)
        });
    }
    let edges = template
        .edges
        .iter()
        .zip(&relations)
        .map(|(&(from, to), r)| r.map(|relation| QueryEdge { from, relation, to }))
        .collect::<Option<Vec<_>>>()?;
    Some(ConjunctiveQuery { nodes, edges, structure: Some(structure) })
}

/// Splits `q` at its last intersection node: one subquery per incoming
/// pattern of that node, each keeping the rest of the path to the target.
///
/// Returns the intersection node index and the subqueries.
pub fn branch_queries(q: &ConjunctiveQuery) -> Result<(usize, Vec<ConjunctiveQuery>)> {
    let node = *q.intersection_nodes().last().ok_or(Error::NoIntersection)?;
    let target = q.target().ok_or(Error::NoIntersection)?;
    let incoming = q.incoming(node);
    let mut branches = Vec::with_capacity(incoming.len());
    for &keep in &incoming {
        let kept: Vec<usize> = (0..q.edges.len()).filter(|i| *i == keep || !incoming.contains(i)).collect();
        // Nodes that still reach the target through kept edges.
        let mut live = vec![false; q.nodes.len()];
        live[target] = true;
        let mut changed = true;
        while changed {
            changed = false;
            for &i in &kept {
                let e = q.edges[i];
                if live[e.to] && !live[e.from] {
                    live[e.from] = true;
                    changed = true;
                }
            }
        }
        let mut remap = vec![usize::MAX; q.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in q.nodes.iter().enumerate() {
            if live[i] {
                remap[i] = nodes.len();
                nodes.push(*n);
            }
        }
        let edges = kept
            .iter()
            .map(|&i| q.edges[i])
            .filter(|e| live[e.from] && live[e.to])
            .map(|e| QueryEdge { from: remap[e.from], relation: e.relation, to: remap[e.to] })
            .collect();
        branches.push(ConjunctiveQuery { nodes, edges, structure: None });
    }
    Ok((node, branches))
}

/// Candidate hard negatives: entities answering at least one branch but not all.
pub fn hard_negative_pool(kg: &KnowledgeGraph, q: &ConjunctiveQuery) -> Result<BTreeSet<EntityId>> {
    let (_, branches) = branch_queries(q)?;
    let answers: Vec<BTreeSet<EntityId>> = branches.iter().map(|b| execute(kg, b)).collect();
    let union: BTreeSet<EntityId> = answers.iter().flatten().copied().collect();
    let all = execute(kg, q);
    Ok(union
        .into_iter()
        .filter(|e| !answers.iter().all(|a| a.contains(e)) && !all.contains(e))
        .collect())
}

/// Draws up to `k` negatives for `sample` over `kg`.
///
/// Plain negatives are entities of the target's type outside the answer
/// set. Hard negatives satisfy some but not all branches of the last
/// intersection node. Both are drawn without replacement and returned
/// sorted; a pool smaller than `k` is returned whole with a shortfall.
pub fn sample_negatives<R: Rng + ?Sized>(
    kg: &KnowledgeGraph,
    sample: &QuerySample,
    k: usize,
    hard: bool,
    rng: &mut R,
) -> Result<NegativeDraw> {
    let pool: Vec<EntityId> = if hard {
        hard_negative_pool(kg, &sample.query)?.into_iter().collect()
    } else {
        let ty = sample.query.target_type().ok_or_else(|| Error::InvalidQuery(sample.query.validate(kg)))?;
        let answers = execute(kg, &sample.query);
        kg.symbols()
            .roster(ty)
            .iter()
            .copied()
            .filter(|e| *e != sample.answer && !answers.contains(e))
            .collect()
    };
    if pool.len() <= k {
        return Ok(NegativeDraw { shortfall: k - pool.len(), entities: pool });
    }
    let mut entities: Vec<EntityId> = sample_indices(rng, pool.len(), k).iter().map(|i| pool[i]).collect();
    entities.sort_unstable();
    Ok(NegativeDraw { entities, shortfall: 0 })
}

/// Whether the train graph cannot produce `answer` for `q`, i.e. every
/// match of `q` in the full graph uses at least one held-out triple.
pub fn check_unanswerable(train: &KnowledgeGraph, full: &KnowledgeGraph, q: &ConjunctiveQuery, answer: EntityId) -> bool {
    debug_assert!(execute(full, q).contains(&answer), "query must be answerable in the full graph");
    !execute(train, q).contains(&answer)
}
