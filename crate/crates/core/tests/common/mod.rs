//! Oracles for integration tests, written independently of the library
//! code they check.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use cga_core::kg::{EntityId, KgBuilder, KnowledgeGraph, Triple};
use cga_core::numeric::{Tape, TensorId, Var};
use cga_core::params::ModelParameters;
use cga_core::query::{ConjunctiveQuery, NodeKind};
use rand::Rng;

pub fn synthetic_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

/// Two types X and Y with 2 to 4 entities each and four relations over
/// every signature; each possible triple is present with probability 0.4.
pub fn random_micro_kg<R: Rng>(rng: &mut R) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    let xs: Vec<String> = (0..rng.gen_range(2..=4)).map(|i| format!("x{i}")).collect();
    let ys: Vec<String> = (0..rng.gen_range(2..=4)).map(|i| format!("y{i}")).collect();
    for x in &xs {
        b.add_entity(x, "X").unwrap();
    }
    for y in &ys {
        b.add_entity(y, "Y").unwrap();
    }
    for (r, hs, ts) in [("p", &xs, &ys), ("q", &ys, &xs), ("r", &xs, &xs), ("s", &ys, &ys)] {
        for h in hs.iter() {
            for t in ts.iter() {
                if rng.gen_bool(0.4) {
                    b.add_triple_typed(h, r, t).unwrap();
                }
            }
        }
    }
    b.build()
}

/// Answers by trying every assignment of entities to nodes, each node
/// ranging over its expected type (anchors over themselves only).
pub fn naive_answers(kg: &KnowledgeGraph, q: &ConjunctiveQuery) -> BTreeSet<EntityId> {
    let target = q.nodes.iter().position(|n| n.kind == NodeKind::Target).expect("query has a target");
    let mut answers = BTreeSet::new();
    let mut binding = vec![EntityId(0); q.nodes.len()];
    assign(kg, q, 0, &mut binding, target, &mut answers);
    answers
}

fn assign(
    kg: &KnowledgeGraph,
    q: &ConjunctiveQuery,
    i: usize,
    binding: &mut Vec<EntityId>,
    target: usize,
    answers: &mut BTreeSet<EntityId>,
) {
    if i == q.nodes.len() {
        if q.edges.iter().all(|e| kg.contains(Triple::new(binding[e.from], e.relation, binding[e.to]))) {
            answers.insert(binding[target]);
        }
        return;
    }
    let choices: Vec<EntityId> = match q.nodes[i].kind {
        NodeKind::Anchor(e) => vec![e],
        _ => kg.symbols().entity_ids().filter(|&e| kg.symbols().entity_type(e) == q.nodes[i].expected_type).collect(),
    };
    for e in choices {
        binding[i] = e;
        assign(kg, q, i + 1, binding, target, answers);
    }
}

/// Whether `e` satisfies some but not all branches of the last node of
/// `q` with several incoming patterns. A branch keeps one of those
/// patterns, drops the others, and drops every pattern that no longer
/// leads to the target.
pub fn is_partial_satisfier(kg: &KnowledgeGraph, q: &ConjunctiveQuery, e: EntityId) -> bool {
    let target = q.nodes.iter().position(|n| n.kind == NodeKind::Target).unwrap();
    let meet = (0..q.nodes.len())
        .filter(|&v| q.edges.iter().filter(|x| x.to == v).count() >= 2)
        .max_by_key(|&v| depth_to(q, v, target))
        .expect("query has an intersection");
    let incoming: Vec<usize> = (0..q.edges.len()).filter(|&i| q.edges[i].to == meet).collect();
    let mut hits = 0;
    for &keep in &incoming {
        let mut edges: Vec<_> = q.edges.iter().enumerate().filter(|(i, _)| *i == keep || !incoming.contains(i)).map(|(_, x)| *x).collect();
        loop {
            let before = edges.len();
            let snapshot = edges.clone();
            edges.retain(|x| x.to == target || snapshot.iter().any(|y| y.from == x.to));
            if edges.len() == before {
                break;
            }
        }
        let branch = ConjunctiveQuery { nodes: q.nodes.clone(), edges, structure: None };
        if naive_answers(kg, &branch).contains(&e) {
            hits += 1;
        }
    }
    hits > 0 && hits < incoming.len()
}

/// Number of patterns from `v` to `target`; deeper nodes are earlier.
fn depth_to(q: &ConjunctiveQuery, v: usize, target: usize) -> usize {
    let mut steps = 0;
    let mut cur = v;
    while cur != target {
        cur = q.edges.iter().find(|x| x.from == cur).expect("path to target").to;
        steps += 1;
    }
    usize::MAX - steps
}

/// AUC by counting every (positive, negative) pair, ties as one half.
pub fn pair_auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &p in pos {
        for &n in neg {
            wins += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

/// Central finite differences of `f` over every parameter coordinate
/// against the tape gradient. Returns `None` when the probe lies within
/// `10·h` of a kink. The relative error uses `max(|a|, |n|, floor)` with
/// `floor = 1e-5 · max(1, |f|)`.
pub fn fd_max_rel_error<F>(params: &ModelParameters, h: f64, f: F) -> Option<f64>
where
    F: Fn(&ModelParameters, &mut Tape) -> Var,
{
    let mut tape = Tape::new();
    let out = f(params, &mut tape);
    if tape.kink_margin() < 10.0 * h {
        return None;
    }
    let f0 = tape.scalar(out);
    let grads = tape.backward(out).unwrap();
    let store = params.store();
    let mut analytic: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
    for (slice, g) in grads.iter() {
        for (k, v) in g.iter().enumerate() {
            analytic[slice.tensor.0][slice.offset + k] += v;
        }
    }
    let floor = 1e-5 * f0.abs().max(1.0);
    let eval = |p: &ModelParameters| {
        let mut t = Tape::new();
        let o = f(p, &mut t);
        t.scalar(o)
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (ti, tensor) in store.tensors().iter().enumerate() {
        for k in 0..tensor.data.len() {
            let x = tensor.data[k];
            probe.store_mut().get_mut(TensorId(ti)).data[k] = x + h;
            let up = eval(&probe);
            probe.store_mut().get_mut(TensorId(ti)).data[k] = x - h;
            let down = eval(&probe);
            probe.store_mut().get_mut(TensorId(ti)).data[k] = x;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti][k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
        }
    }
    Some(worst)
}

/// Every permutation of `0..n` (Heap's algorithm).
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut items: Vec<usize> = (0..n).collect();
    let mut out = vec![items.clone()];
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            out.push(items.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}
