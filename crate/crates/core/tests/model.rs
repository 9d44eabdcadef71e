//! Gradients, checkpoints, scoring and evaluation on small graphs.

mod common;

use cga_core::eval::{evaluate, evaluate_with, EvalOptions, QueryScores};
use cga_core::kg::{EntityId, KgBuilder, KnowledgeGraph, TypeId};
use cga_core::numeric::{grad_check, NumericError, ParamStore, Tape};
use cga_core::operators::{intersect_cga, query_embedding, rank_answers};
use cga_core::params::{Intersection, ModelConfig, ModelParameters, Psi};
use cga_core::query::{execute, sample_negatives, sample_query, QuerySample, QuerySet, QueryStructure};
use cga_core::training::{loss_qa, train, TrainConfig};
use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ten entities of one type on a ring with two relations.
fn ring() -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    for i in 0..10 {
        b.add_entity(&format!("n{i}"), "N").unwrap();
    }
    for i in 0..10 {
        b.add_triple_typed(&format!("n{i}"), "next", &format!("n{}", (i + 1) % 10)).unwrap();
        b.add_triple_typed(&format!("n{i}"), "skip", &format!("n{}", (i + 3) % 10)).unwrap();
    }
    b.build()
}

fn cga_params(kg: &KnowledgeGraph, dim: usize, heads: usize, seed: u64) -> ModelParameters {
    let config = ModelConfig { dim, heads, intersection: Intersection::Cga, ..ModelConfig::default() };
    ModelParameters::init(kg.symbols().clone(), config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn samples(kg: &KnowledgeGraph, count: usize, negatives: usize, rng: &mut ChaCha8Rng) -> Vec<QuerySample> {
    let mut out = Vec::new();
    while out.len() < count {
        let s = *QueryStructure::ALL.choose(rng).unwrap();
        if let Ok(mut q) = sample_query(kg, s, rng) {
            let draw = sample_negatives(kg, &q, negatives, false, rng).unwrap();
            if !draw.entities.is_empty() {
                q.negatives = draw.entities;
                out.push(q);
            }
        }
    }
    out
}

#[test]
fn lookup_gradient_matches_finite_differences() {
    let kg = ring();
    let params = cga_params(&kg, 8, 1, 1);
    let e = EntityId(4);
    let c: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) / 4.0).collect();
    let table = params.entity_table(TypeId(0));
    let report = grad_check(
        params.store(),
        |tape: &mut Tape, store: &ParamStore| -> Result<_, NumericError> {
            let row = store.row_slice(table, params.symbols().entity_info(e).row);
            let x = tape.param(store, row);
            let cv = tape.constant(c.clone());
            tape.dot(x, cv)
        },
        1e-5,
        1e-6,
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn cga_gradient_on_three_inputs() {
    let kg = ring();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 20 {
        let params = cga_params(&kg, 8, 2, rng.gen());
        let inputs: Vec<EntityId> = kg.symbols().roster(TypeId(0)).choose_multiple(&mut rng, 3).copied().collect();
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let err = fd_max_rel_error(&params, 1e-5, |p, tape| {
            let xs: Vec<_> = inputs.iter().map(|&e| p.lookup(tape, e).unwrap()).collect();
            let y = intersect_cga(p, tape, TypeId(0), &xs).unwrap().output;
            let cv = tape.constant(c.clone());
            tape.dot(cv, y).unwrap()
        });
        if let Some(err) = err {
            assert!(err < 1e-4, "relative error {err}");
            checked += 1;
        }
    }
}

#[test]
fn query_loss_gradient_on_three_samples() {
    let kg = ring();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 10 {
        let params = cga_params(&kg, 8, 2, rng.gen());
        let qs = samples(&kg, 3, 3, &mut rng);
        let refs: Vec<&QuerySample> = qs.iter().collect();
        if let Some(err) = fd_max_rel_error(&params, 1e-5, |p, tape| loss_qa(p, tape, &refs).unwrap().value) {
            assert!(err < 1e-4, "relative error {err}");
            checked += 1;
        }
    }
}

#[test]
fn checkpoint_bytes_survive_a_round_trip() {
    let kg = ring();
    let params = cga_params(&kg, 8, 2, 4);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    params.save(&a).unwrap();
    ModelParameters::load(&a).unwrap().save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn collinear_candidate_ranks_first_with_score_one() {
    let kg = ring();
    let mut params = cga_params(&kg, 8, 1, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sample = sample_query(&kg, QueryStructure::TwoInter, &mut rng).unwrap();
    let q = query_embedding(&params, &sample.query).unwrap();
    let chosen = EntityId(7);
    let table = params.entity_table(TypeId(0));
    let row = params.symbols().entity_info(chosen).row;
    let slice = params.store().row_slice(table, row);
    params.store_mut().slice_values_mut(slice).copy_from_slice(&q.iter().map(|v| 2.5 * v).collect::<Vec<_>>());
    let all: Vec<EntityId> = kg.symbols().roster(TypeId(0)).to_vec();
    let ranked = rank_answers(&params, &sample.query, &all).unwrap();
    assert_eq!(ranked[0].0, chosen);
    assert!((ranked[0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn oracle_scores_give_perfect_metrics() {
    let kg = ring();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut set = QuerySet::new();
    for s in samples(&kg, 60, 4, &mut rng) {
        set.push(s.query_type().unwrap(), s);
    }
    let report = evaluate_with(&set, EvalOptions::default(), |s| {
        let answers = execute(&kg, &s.query);
        let score = |e: EntityId| if answers.contains(&e) { 1.0 } else { 0.0 };
        Ok(QueryScores { positive: score(s.answer), negatives: s.negatives.iter().map(|&e| score(e)).collect() })
    })
    .unwrap();
    assert_eq!(report.auc_all, Some(1.0));
    assert_eq!(report.apr_all, Some(100.0));
    for t in &report.per_type {
        assert_eq!((t.auc, t.apr), (1.0, 100.0), "{}", t.query_type);
    }
}

#[test]
fn aggregates_are_means_of_the_type_rows() {
    let kg = ring();
    let params = cga_params(&kg, 8, 2, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut set = QuerySet::new();
    for s in samples(&kg, 80, 4, &mut rng) {
        set.push(s.query_type().unwrap(), s);
    }
    let report = evaluate(&params, &set, EvalOptions::default()).unwrap();
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let auc_all = mean(report.per_type.iter().map(|t| t.auc).collect());
    let apr_all = mean(report.per_type.iter().map(|t| t.apr).collect());
    assert!((report.auc_all.unwrap() - auc_all).abs() < 1e-12);
    assert!((report.apr_all.unwrap() - apr_all).abs() < 1e-12);
    assert_eq!(report.auc_hneg, None, "no hard queries were scored");
    assert_eq!(report.per_type.iter().map(|t| t.queries).sum::<usize>(), set.len());
}

fn micro_config(seed: u64) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.model = ModelConfig { dim: 16, heads: 1, psi: Psi::Min, intersection: Intersection::Cga, ..ModelConfig::default() };
    c.epochs = 40;
    c.batch_size = 16;
    c.learning_rate = 0.02;
    c.neighborhood_sizes = vec![1, 2];
    c.negatives = 4;
    c.seed = seed;
    c
}

fn training_queries(kg: &KnowledgeGraph, rng: &mut ChaCha8Rng) -> QuerySet {
    let mut set = QuerySet::new();
    for s in samples(kg, 200, 4, rng) {
        set.push(s.query_type().unwrap(), s);
    }
    set
}

#[test]
fn same_seed_trains_identically() {
    let kg = ring();
    let set = training_queries(&kg, &mut ChaCha8Rng::seed_from_u64(8));
    let mut config = micro_config(3);
    config.epochs = 5;
    let a = train(&kg, &set, Some(&set), &config).unwrap();
    let b = train(&kg, &set, Some(&set), &config).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params.to_json().unwrap(), b.params.to_json().unwrap());
}

#[test]
fn trained_one_chain_answers_rank_in_the_top_tenth() {
    let kg = ring();
    let set = training_queries(&kg, &mut ChaCha8Rng::seed_from_u64(9));
    let out = train(&kg, &set, None, &micro_config(0)).unwrap();
    let roster: Vec<EntityId> = kg.symbols().roster(TypeId(0)).to_vec();
    let mut top = 0;
    let triples = kg.base_triples();
    for t in triples {
        let q = cga_core::query::parse_inline(
            &format!("{}({}, ?t)", kg.symbols().relation_name(t.relation), kg.symbols().entity_label(t.head)),
            kg.symbols(),
        )
        .unwrap();
        let ranked = rank_answers(&out.params, &q, &roster).unwrap();
        let cutoff = roster.len().div_ceil(10);
        top += usize::from(ranked.iter().take(cutoff).any(|&(e, _)| e == t.tail));
    }
    assert!(top * 10 >= triples.len() * 9, "{top} of {} answers in the top tenth", triples.len());
}
