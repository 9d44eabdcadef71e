//! Projection and intersection operators and their composition along a
//! query DAG.
//!
//! Intersection inputs are sorted by value before any reduction, so each
//! operator is bit-for-bit invariant under reordering of its inputs.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId, TypeId};
use crate::numeric::{cosine_values, Tape, Var};
use crate::params::{IntersectionParams, ModelParameters, Projection, Psi};
use crate::query::{topological_order, ConjunctiveQuery, NodeKind, Violation};

/// One step of a query embedding, recorded in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Lookup(EntityId),
    Project(RelationId),
    Intersect { ty: TypeId, inputs: usize },
}

/// Intermediate values of one CGA intersection.
#[derive(Clone, Debug)]
pub struct CgaParts {
    pub output: Var,
    pub init: Var,
    /// One softmax vector per head, over the canonically ordered inputs.
    pub alpha: Vec<Var>,
    pub attn: Var,
    pub ln1: Var,
    /// The inputs in the order `alpha` refers to.
    pub order: Vec<Var>,
}

pub fn project(params: &ModelParameters, tape: &mut Tape, e: Var, r: RelationId) -> Result<Var> {
    let id = params.relation_tensor(r)?;
    let d = params.dim();
    let slice = params.store().whole(id);
    Ok(match params.config().projection {
        Projection::Bilinear => {
            let m = tape.param_matrix(params.store(), slice, d, d);
            tape.matvec(m, e)?
        }
        Projection::Translation => {
            let t = tape.param(params.store(), slice);
            tape.add(e, t)?
        }
        Projection::Diagonal => {
            let t = tape.param(params.store(), slice);
            tape.mul(t, e)?
        }
    })
}

/// Inputs sorted lexicographically by value; equal vectors are interchangeable.
pub fn canonical_order(tape: &Tape, inputs: &[Var]) -> Vec<Var> {
    let mut sorted = inputs.to_vec();
    sorted.sort_by(|&a, &b| {
        tape.value(a)
            .iter()
            .zip(tape.value(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    sorted
}

fn psi(tape: &mut Tape, kind: Psi, xs: &[Var]) -> Result<Var> {
    Ok(match kind {
        Psi::Mean => tape.mean_set(xs)?,
        Psi::Min => tape.min_set(xs)?,
    })
}

fn nonempty(inputs: &[Var], op: &'static str) -> Result<()> {
    if inputs.is_empty() {
        return Err(crate::numeric::NumericError::EmptyInput { op }.into());
    }
    Ok(())
}

/// The configured intersection for entities of type `ty`.
pub fn intersect(params: &ModelParameters, tape: &mut Tape, ty: TypeId, inputs: &[Var]) -> Result<Var> {
    match params.intersection(ty) {
        IntersectionParams::Simple => intersect_simple(params, tape, inputs),
        IntersectionParams::Gqe { .. } => intersect_gqe(params, tape, ty, inputs),
        IntersectionParams::Cga { .. } => Ok(intersect_cga(params, tape, ty, inputs)?.output),
    }
}

/// `Ψ(inputs)` with no learned weights.
pub fn intersect_simple(params: &ModelParameters, tape: &mut Tape, inputs: &[Var]) -> Result<Var> {
    nonempty(inputs, "intersect_simple")?;
    let order = canonical_order(tape, inputs);
    psi(tape, params.config().psi, &order)
}

/// `W₁ · Ψ({ReLU(W₂ · eᵢ)})`.
pub fn intersect_gqe(params: &ModelParameters, tape: &mut Tape, ty: TypeId, inputs: &[Var]) -> Result<Var> {
    nonempty(inputs, "intersect_gqe")?;
    let IntersectionParams::Gqe { w1, w2 } = params.intersection(ty) else {
        return Err(Error::Config("model has no GQE intersection parameters".into()));
    };
    let d = params.dim();
    let store = params.store();
    let w1 = tape.param_matrix(store, store.whole(w1), d, d);
    let w2 = tape.param_matrix(store, store.whole(w2), d, d);
    let order = canonical_order(tape, inputs);
    let mut hidden = Vec::with_capacity(order.len());
    for &x in &order {
        let h = tape.matvec(w2, x)?;
        hidden.push(tape.relu(h)?);
    }
    let pooled = psi(tape, params.config().psi, &hidden)?;
    Ok(tape.matvec(w1, pooled)?)
}

/// Multi-head attention over the inputs keyed by their Ψ-aggregate,
/// followed by a residual feed-forward layer; two layer norms.
pub fn intersect_cga(params: &ModelParameters, tape: &mut Tape, ty: TypeId, inputs: &[Var]) -> Result<CgaParts> {
    nonempty(inputs, "intersect_cga")?;
    let IntersectionParams::Cga { attention, w, b, ln1_gain, ln1_bias, ln2_gain, ln2_bias } = params.intersection(ty)
    else {
        return Err(Error::Config("model has no CGA intersection parameters".into()));
    };
    let cfg = params.config();
    let d = cfg.dim;
    let store = params.store();
    let order = canonical_order(tape, inputs);
    let init = psi(tape, cfg.psi, &order)?;

    let mut alpha = Vec::with_capacity(cfg.heads);
    let mut heads = Vec::with_capacity(cfg.heads);
    for k in 0..cfg.heads {
        let a = tape.param(store, store.row_slice(attention, k));
        let mut logits = Vec::with_capacity(order.len());
        for &x in &order {
            let pair = tape.concat(&[init, x])?;
            let s = tape.dot(a, pair)?;
            logits.push(tape.leaky_relu(s, cfg.leaky_slope)?);
        }
        let logits = tape.concat(&logits)?;
        let weights = tape.softmax(logits)?;
        let mut head = tape.weighted_sum(weights, &order)?;
        if cfg.sigmoid_per_head {
            head = tape.sigmoid(head)?;
        }
        alpha.push(weights);
        heads.push(head);
    }
    let mut attn = tape.mean_set(&heads)?;
    if !cfg.sigmoid_per_head {
        attn = tape.sigmoid(attn)?;
    }

    let residual = tape.add(attn, init)?;
    let g1 = tape.param(store, store.whole(ln1_gain));
    let b1 = tape.param(store, store.whole(ln1_bias));
    let ln1 = tape.layer_norm(residual, g1, b1)?;

    let wm = tape.param_matrix(store, store.whole(w), d, d);
    let bias = tape.param(store, store.whole(b));
    let ff = tape.matvec(wm, ln1)?;
    let ff = tape.add(ff, bias)?;
    let ff = tape.add(ff, ln1)?;
    let g2 = tape.param(store, store.whole(ln2_gain));
    let b2 = tape.param(store, store.whole(ln2_bias));
    let output = tape.layer_norm(ff, g2, b2)?;
    Ok(CgaParts { output, init, alpha, attn, ln1, order })
}

/// Embeds the target variable of `q`: anchors by lookup, each edge by a
/// projection, nodes with several incoming edges by an intersection.
/// Each node is computed once and reused by every outgoing edge.
pub fn embed_query(
    params: &ModelParameters,
    tape: &mut Tape,
    q: &ConjunctiveQuery,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<Var> {
    let order = topological_order(q).ok_or_else(|| Error::InvalidQuery(vec![Violation::NotADag]))?;
    let target = q.target().ok_or_else(|| Error::InvalidQuery(vec![Violation::TargetCount(0)]))?;
    let mut values: Vec<Option<Var>> = vec![None; q.nodes.len()];
    let mut log = |event: TraceEvent| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(event);
        }
    };
    for i in order {
        let node = &q.nodes[i];
        let v = match node.kind {
            NodeKind::Anchor(e) => {
                log(TraceEvent::Lookup(e));
                params.lookup(tape, e)?
            }
            NodeKind::Bound | NodeKind::Target => {
                let mut projected = Vec::new();
                for edge in q.edges.iter().filter(|e| e.to == i) {
                    let src = values[edge.from].expect("predecessor embedded first");
                    log(TraceEvent::Project(edge.relation));
                    projected.push(project(params, tape, src, edge.relation)?);
                }
                match projected.len() {
                    0 => return Err(Error::InvalidQuery(vec![Violation::SourceNotAnchor { node: i }])),
                    1 => projected[0],
                    n => {
                        log(TraceEvent::Intersect { ty: node.expected_type, inputs: n });
                        intersect(params, tape, node.expected_type, &projected)?
                    }
                }
            }
        };
        values[i] = Some(v);
    }
    Ok(values[target].expect("target embedded"))
}

/// The target embedding of `q` as plain values.
pub fn query_embedding(params: &ModelParameters, q: &ConjunctiveQuery) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let v = embed_query(params, &mut tape, q, None)?;
    Ok(tape.value(v).to_vec())
}

/// Cosine similarity between a query embedding and an entity embedding.
pub fn score(params: &ModelParameters, query: &[f64], e: EntityId) -> Result<f64> {
    Ok(cosine_values(query, &params.entity_embedding(e)?))
}

/// Candidates with their scores, best first; equal scores keep ascending id order.
pub fn rank_answers(
    params: &ModelParameters,
    q: &ConjunctiveQuery,
    candidates: &[EntityId],
) -> Result<Vec<(EntityId, f64)>> {
    let query = query_embedding(params, q)?;
    let mut scored = candidates.iter().map(|&e| Ok((e, score(params, &query, e)?))).collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{graph_from_labels, parse_triples, parse_type_map, KnowledgeGraph};
    use crate::numeric::{sigmoid, softmax_values};
    use crate::params::{Intersection, ModelConfig};
    use crate::query::{QueryEdge, QueryNode, QueryStructure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kg() -> KnowledgeGraph {
        graph_from_labels(
            &parse_triples("a\tr\tx\nb\ts\tx\nx\tt\ty\n", "t").unwrap(),
            &parse_type_map("a\tT\nb\tT\nx\tT\ny\tT\n", "y").unwrap(),
        )
        .unwrap()
    }

    fn model(g: &KnowledgeGraph, cfg: ModelConfig, seed: u64) -> ModelParameters {
        ModelParameters::init(g.symbols().clone(), cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn set(p: &mut ModelParameters, id: crate::numeric::TensorId, values: &[f64]) {
        p.store_mut().get_mut(id).data.copy_from_slice(values);
    }

    fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
        m.chunks(v.len()).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn projection_variants() {
        let g = kg();
        let r = g.symbols().relation("r").unwrap();
        let cfg = |projection| ModelConfig { dim: 2, projection, ..ModelConfig::default() };

        let mut p = model(&g, cfg(Projection::Bilinear), 0);
        let id = p.relation_tensor(r).unwrap();
        for (m, e, want) in [([1.0, 0.0, 0.0, 1.0], [0.3, -0.7], [0.3, -0.7]), ([0.0, 1.0, 1.0, 0.0], [1.0, 0.0], [0.0, 1.0])] {
            set(&mut p, id, &m);
            let mut tape = Tape::new();
            let x = tape.constant(e.to_vec());
            let y = project(&p, &mut tape, x, r).unwrap();
            assert_eq!(tape.value(y), &want);
        }

        let mut p = model(&g, cfg(Projection::Translation), 0);
        let id = p.relation_tensor(r).unwrap();
        set(&mut p, id, &[0.0, 0.0]);
        let mut tape = Tape::new();
        let x = tape.constant(vec![0.25, 0.5]);
        let y = project(&p, &mut tape, x, r).unwrap();
        assert_eq!(tape.value(y), &[0.25, 0.5]);

        let mut p = model(&g, cfg(Projection::Diagonal), 0);
        let id = p.relation_tensor(r).unwrap();
        set(&mut p, id, &[2.0, -1.0]);
        let mut tape = Tape::new();
        let x = tape.constant(vec![0.25, 0.5]);
        let y = project(&p, &mut tape, x, r).unwrap();
        assert_eq!(tape.value(y), &[0.5, -0.5]);
    }

    #[test]
    fn gqe_single_input_with_identities_is_identity() {
        let g = kg();
        let mut p = model(&g, ModelConfig { dim: 3, intersection: Intersection::Gqe, ..ModelConfig::default() }, 0);
        let t = g.symbols().type_id("T").unwrap();
        let IntersectionParams::Gqe { w1, w2 } = p.intersection(t) else { panic!() };
        let eye = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        set(&mut p, w1, &eye);
        set(&mut p, w2, &eye);
        let mut tape = Tape::new();
        let v = tape.constant(vec![0.1, 0.0, 2.5]);
        let out = intersect_gqe(&p, &mut tape, t, &[v]).unwrap();
        assert_eq!(tape.value(out), &[0.1, 0.0, 2.5]);
    }

    #[test]
    fn gqe_matches_stepwise_recomputation() {
        let g = kg();
        let t = g.symbols().type_id("T").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for psi_kind in [Psi::Mean, Psi::Min] {
            let cfg = ModelConfig { dim: 4, intersection: Intersection::Gqe, psi: psi_kind, ..ModelConfig::default() };
            let p = model(&g, cfg, 5);
            let IntersectionParams::Gqe { w1, w2 } = p.intersection(t) else { panic!() };
            let inputs: Vec<Vec<f64>> = (0..3).map(|_| rand_vec(&mut rng, 4)).collect();
            let hidden: Vec<Vec<f64>> = inputs
                .iter()
                .map(|x| matvec(&p.store().get(w2).data, x).into_iter().map(|v| v.max(0.0)).collect())
                .collect();
            let pooled: Vec<f64> = (0..4)
                .map(|j| match psi_kind {
                    Psi::Mean => hidden.iter().map(|h| h[j]).sum::<f64>() / 3.0,
                    Psi::Min => hidden.iter().map(|h| h[j]).fold(f64::INFINITY, f64::min),
                })
                .collect();
            let want = matvec(&p.store().get(w1).data, &pooled);

            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
            let out = intersect_gqe(&p, &mut tape, t, &vars).unwrap();
            for (a, b) in tape.value(out).iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    fn naive_layer_norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        x.iter().zip(g).zip(b).map(|((v, g), b)| g * (v - mean) / (var + 1e-5).sqrt() + b).collect()
    }

    #[test]
    fn cga_matches_naive_recomputation() {
        let g = kg();
        let t = g.symbols().type_id("T").unwrap();
        let (d, k, n) = (8, 2, 3);
        let cfg = ModelConfig { dim: d, heads: k, intersection: Intersection::Cga, ..ModelConfig::default() };
        let mut p = model(&g, cfg, 21);
        let IntersectionParams::Cga { attention, w, b, ln1_gain, ln1_bias, ln2_gain, ln2_bias } = p.intersection(t)
        else {
            panic!()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for id in [b, ln1_gain, ln1_bias, ln2_gain, ln2_bias] {
            let v = rand_vec(&mut rng, d);
            set(&mut p, id, &v);
        }
        let inputs: Vec<Vec<f64>> = (0..n).map(|_| rand_vec(&mut rng, d)).collect();

        let init: Vec<f64> = (0..d).map(|j| inputs.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min)).collect();
        let a = &p.store().get(attention).data;
        let mut avg = vec![0.0; d];
        for head in 0..k {
            let ak = &a[head * 2 * d..(head + 1) * 2 * d];
            let logits: Vec<f64> = inputs
                .iter()
                .map(|x| {
                    let s: f64 = ak[..d].iter().zip(&init).chain(ak[d..].iter().zip(x)).map(|(p, q)| p * q).sum();
                    if s > 0.0 {
                        s
                    } else {
                        0.2 * s
                    }
                })
                .collect();
            let alpha = softmax_values(&logits);
            for (ai, x) in alpha.iter().zip(&inputs) {
                for j in 0..d {
                    avg[j] += ai * x[j] / k as f64;
                }
            }
        }
        let attn: Vec<f64> = avg.iter().map(|v| sigmoid(*v)).collect();
        let res: Vec<f64> = attn.iter().zip(&init).map(|(x, y)| x + y).collect();
        let st = p.store();
        let ln1 = naive_layer_norm(&res, &st.get(ln1_gain).data, &st.get(ln1_bias).data);
        let ff: Vec<f64> =
            matvec(&st.get(w).data, &ln1).iter().zip(&st.get(b).data).zip(&ln1).map(|((x, y), z)| x + y + z).collect();
        let want = naive_layer_norm(&ff, &st.get(ln2_gain).data, &st.get(ln2_bias).data);

        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
        let parts = intersect_cga(&p, &mut tape, t, &vars).unwrap();
        for (x, y) in tape.value(parts.output).iter().zip(&want) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn identical_inputs_get_uniform_attention() {
        let g = kg();
        let t = g.symbols().type_id("T").unwrap();
        let p = model(&g, ModelConfig { dim: 4, heads: 3, ..ModelConfig::default() }, 2);
        for n in 1..=4 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = (0..n).map(|_| tape.constant(vec![0.3, -0.2, 0.9, 0.1])).collect();
            let parts = intersect_cga(&p, &mut tape, t, &vars).unwrap();
            for a in &parts.alpha {
                for &w in tape.value(*a) {
                    assert!((w - 1.0 / n as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn intersections_ignore_input_order() {
        let g = kg();
        let t = g.symbols().type_id("T").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for inter in [Intersection::Simple, Intersection::Gqe, Intersection::Cga] {
            for psi_kind in [Psi::Mean, Psi::Min] {
                let p = model(&g, ModelConfig { dim: 5, heads: 2, intersection: inter, psi: psi_kind, ..ModelConfig::default() }, 3);
                let inputs: Vec<Vec<f64>> = (0..4).map(|_| rand_vec(&mut rng, 5)).collect();
                let run = |xs: &[Vec<f64>]| {
                    let mut tape = Tape::new();
                    let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
                    let out = intersect(&p, &mut tape, t, &vars).unwrap();
                    tape.value(out).to_vec()
                };
                let base = run(&inputs);
                let mut rev = inputs.clone();
                rev.reverse();
                assert_eq!(run(&rev), base);
                rev.swap(0, 2);
                assert_eq!(run(&rev), base);
            }
        }
    }

    #[test]
    fn empty_intersection_is_an_error() {
        let g = kg();
        let t = g.symbols().type_id("T").unwrap();
        let p = model(&g, ModelConfig { dim: 4, ..ModelConfig::default() }, 2);
        assert!(intersect(&p, &mut Tape::new(), t, &[]).is_err());
    }

    #[test]
    fn trace_of_an_intersect_then_project_query() {
        let g = kg();
        let s = g.symbols();
        let t = s.type_id("T").unwrap();
        let (a, b) = (s.entity("a").unwrap(), s.entity("b").unwrap());
        let (r, rs, rt) = (s.relation("r").unwrap(), s.relation("s").unwrap(), s.relation("t").unwrap());
        let q = ConjunctiveQuery {
            nodes: vec![QueryNode::anchor(a, t), QueryNode::anchor(b, t), QueryNode::bound(t), QueryNode::target(t)],
            edges: vec![
                QueryEdge { from: 0, relation: r, to: 2 },
                QueryEdge { from: 1, relation: rs, to: 2 },
                QueryEdge { from: 2, relation: rt, to: 3 },
            ],
            structure: Some(QueryStructure::ThreeChainInter),
        };
        let p = model(&g, ModelConfig { dim: 4, ..ModelConfig::default() }, 2);
        let mut trace = Vec::new();
        embed_query(&p, &mut Tape::new(), &q, Some(&mut trace)).unwrap();
        assert_eq!(
            trace,
            vec![
                TraceEvent::Lookup(a),
                TraceEvent::Lookup(b),
                TraceEvent::Project(r),
                TraceEvent::Project(rs),
                TraceEvent::Intersect { ty: t, inputs: 2 },
                TraceEvent::Project(rt),
            ]
        );
    }

    #[test]
    fn one_chain_is_a_single_projection() {
        let g = kg();
        let s = g.symbols();
        let t = s.type_id("T").unwrap();
        let a = s.entity("a").unwrap();
        let r = s.relation("r").unwrap();
        let q = ConjunctiveQuery {
            nodes: vec![QueryNode::anchor(a, t), QueryNode::target(t)],
            edges: vec![QueryEdge { from: 0, relation: r, to: 1 }],
            structure: Some(QueryStructure::OneChain),
        };
        let p = model(&g, ModelConfig { dim: 4, ..ModelConfig::default() }, 2);
        let mut tape = Tape::new();
        let got = embed_query(&p, &mut tape, &q, None).unwrap();
        let want = matvec(&p.store().get(p.relation_tensor(r).unwrap()).data, &p.entity_embedding(a).unwrap());
        assert_eq!(tape.value(got), want.as_slice());
    }

    #[test]
    fn ranking_is_sorted_and_order_independent() {
        let g = kg();
        let s = g.symbols();
        let t = s.type_id("T").unwrap();
        let q = ConjunctiveQuery {
            nodes: vec![QueryNode::anchor(s.entity("a").unwrap(), t), QueryNode::target(t)],
            edges: vec![QueryEdge { from: 0, relation: s.relation("r").unwrap(), to: 1 }],
            structure: Some(QueryStructure::OneChain),
        };
        let mut p = model(&g, ModelConfig { dim: 4, ..ModelConfig::default() }, 2);
        let qv = query_embedding(&p, &q).unwrap();
        let y = s.entity("y").unwrap();
        let row = p.store().row_slice(p.entity_table(t), s.entity_info(y).row);
        let scaled: Vec<f64> = qv.iter().map(|v| 3.0 * v).collect();
        p.store_mut().slice_values_mut(row).copy_from_slice(&scaled);

        let all: Vec<EntityId> = s.entity_ids().collect();
        let ranked = rank_answers(&p, &q, &all).unwrap();
        assert_eq!(ranked[0].0, y);
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        let mut rev = all.clone();
        rev.reverse();
        assert_eq!(rank_answers(&p, &q, &rev).unwrap(), ranked);
    }
}
