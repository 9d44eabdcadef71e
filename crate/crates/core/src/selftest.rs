//! Property checks run by `cga selftest` and `cga gradcheck`: gradient
//! correctness of every trainable composite, permutation invariance and
//! attention normalization of the intersections, executor agreement with
//! brute-force enumeration, and metric identities.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{apr, auc, QueryScores};
use crate::kg::{EntityId, KgBuilder, KnowledgeGraph, Triple, TypeId};
use crate::numeric::{grad_check, GradCheckReport, NumericError, Tape, Var};
use crate::operators::{intersect, intersect_cga, project};
use crate::params::{Intersection, ModelConfig, ModelParameters, Projection, Psi};
use crate::query::{
    branch_queries, execute, sample_negatives, sample_query, ConjunctiveQuery, NodeKind, QuerySample, QueryStructure,
};
use crate::training::{combined_loss, kg_negatives, loss_kg, loss_qa, KgItem};

/// Probe points are redrawn at most this many times per probe when they
/// land next to a kink.
pub const MAX_RESAMPLES: usize = 100;

/// [`grad_check`] over all parameters of a model.
pub fn model_grad_check<F>(params: &ModelParameters, f: F, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&ModelParameters, &mut Tape) -> Result<Var>,
{
    grad_check(
        params.store(),
        |tape, store| {
            let mut probe = params.clone();
            *probe.store_mut() = store.clone();
            f(&probe, tape)
        },
        h,
        tol,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradTarget {
    Projection(Projection),
    Gqe,
    Cga,
    LossKg,
    LossQa,
    Combined,
}

impl GradTarget {
    pub fn all() -> Vec<GradTarget> {
        vec![
            GradTarget::Projection(Projection::Bilinear),
            GradTarget::Projection(Projection::Translation),
            GradTarget::Projection(Projection::Diagonal),
            GradTarget::Gqe,
            GradTarget::Cga,
            GradTarget::LossKg,
            GradTarget::LossQa,
            GradTarget::Combined,
        ]
    }
}

impl fmt::Display for GradTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradTarget::Projection(p) => write!(f, "project[{p}]"),
            GradTarget::Gqe => f.write_str("intersect_gqe"),
            GradTarget::Cga => f.write_str("intersect_cga"),
            GradTarget::LossKg => f.write_str("loss_kg"),
            GradTarget::LossQa => f.write_str("loss_qa"),
            GradTarget::Combined => f.write_str("combined_loss"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradSuiteOptions {
    pub dims: Vec<usize>,
    pub heads: Vec<usize>,
    pub set_sizes: Vec<usize>,
    pub probes: usize,
    pub h: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradSuiteOptions {
    fn default() -> Self {
        Self { dims: vec![4, 8], heads: vec![1, 2, 4], set_sizes: vec![1, 2, 3, 5], probes: 50, h: 1e-5, tolerance: 1e-4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradTargetReport {
    pub target: String,
    pub probes: usize,
    pub resampled: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradTargetReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Two types with six entities each and four relations, every possible
/// triple present with probability 0.4. Every entity has a neighbor.
pub fn probe_graph<R: Rng + ?Sized>(rng: &mut R) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    let labels = |ty: &str| (0..6).map(|i| format!("{}{i}", ty.to_lowercase())).collect::<Vec<_>>();
    let (aa, bb) = (labels("A"), labels("B"));
    for e in &aa {
        b.add_entity(e, "A").expect("fresh entity");
    }
    for e in &bb {
        b.add_entity(e, "B").expect("fresh entity");
    }
    let pairs = [("r", &aa, &bb), ("s", &bb, &bb), ("t", &aa, &aa), ("u", &bb, &aa)];
    for (r, heads, tails) in pairs {
        for h in heads.iter() {
            for t in tails.iter() {
                if h != t && rng.gen_bool(0.4) {
                    b.add_triple_typed(h, r, t).expect("declared entities");
                }
            }
        }
    }
    // A ring of `r` triples keeps every entity connected.
    for i in 0..6 {
        b.add_triple_typed(&aa[i], "r", &bb[(i + 1) % 6]).expect("declared entities");
    }
    let g = b.build();
    let mut seen = BTreeSet::new();
    let base: Vec<Triple> = g.base_triples().iter().copied().filter(|t| seen.insert(*t)).collect();
    g.restrict(base)
}

fn probe_config(target: GradTarget, d: usize, k: usize, rng: &mut ChaCha8Rng) -> ModelConfig {
    let projection = match target {
        GradTarget::Projection(p) => p,
        _ => *[Projection::Bilinear, Projection::Translation, Projection::Diagonal].choose(rng).unwrap(),
    };
    let intersection = match target {
        GradTarget::Gqe => Intersection::Gqe,
        GradTarget::Cga => Intersection::Cga,
        _ => *[Intersection::Gqe, Intersection::Cga].choose(rng).unwrap(),
    };
    ModelConfig {
        dim: d,
        heads: k,
        psi: if rng.gen_bool(0.5) { Psi::Mean } else { Psi::Min },
        projection,
        intersection,
        sigmoid_per_head: rng.gen_bool(0.5),
        ..ModelConfig::default()
    }
}

/// Distinct entities of type A as intersection inputs.
fn distinct_entities(g: &KnowledgeGraph, ty: TypeId, n: usize, rng: &mut ChaCha8Rng) -> Vec<EntityId> {
    let roster = g.symbols().roster(ty);
    roster.choose_multiple(rng, n.min(roster.len())).copied().collect()
}

fn probe_queries(g: &KnowledgeGraph, rng: &mut ChaCha8Rng) -> Vec<QuerySample> {
    let mut out = Vec::new();
    for _ in 0..3 {
        let structure = *QueryStructure::ALL.choose(rng).unwrap();
        if let Ok(mut s) = sample_query(g, structure, rng) {
            if let Ok(draw) = sample_negatives(g, &s, 3, false, rng) {
                s.negatives = draw.entities;
                out.push(s);
            }
        }
    }
    out
}

fn kg_items(params: &ModelParameters, g: &KnowledgeGraph, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<KgItem>> {
    let centers = g.active_entities();
    let mut items = Vec::new();
    for &c in centers.choose_multiple(rng, 3) {
        let neighborhood = g.sample_neighborhood(c, n, rng)?;
        let negatives = kg_negatives(params, c, 3, rng);
        items.push(KgItem { neighborhood, negatives });
    }
    Ok(items)
}

/// One gradient check of `target` at a fresh random probe point.
fn probe_once(
    target: GradTarget,
    d: usize,
    k: usize,
    n: usize,
    options: &GradSuiteOptions,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let g = probe_graph(rng);
    let config = probe_config(target, d, k, rng);
    let params = ModelParameters::init(g.symbols().clone(), config, rng)?;
    let ty = TypeId(0);
    let weights: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let readout = |tape: &mut Tape, v: Var| -> Result<Var> {
        let c = tape.constant(weights.clone());
        Ok(tape.dot(c, v)?)
    };
    let (h, tol) = (options.h, options.tolerance);
    match target {
        GradTarget::Projection(_) => {
            let t = g.base_triples()[rng.gen_range(0..g.base_triples().len())];
            let r = if rng.gen_bool(0.5) { t.relation } else { t.relation.inverse() };
            let e = if r.is_inverse() { t.tail } else { t.head };
            model_grad_check(
                &params,
                |p, tape| {
                    let x = p.lookup(tape, e)?;
                    let y = project(p, tape, x, r)?;
                    readout(tape, y)
                },
                h,
                tol,
            )
        }
        GradTarget::Gqe | GradTarget::Cga => {
            let inputs = distinct_entities(&g, ty, n, rng);
            model_grad_check(
                &params,
                |p, tape| {
                    let xs = inputs.iter().map(|&e| p.lookup(tape, e)).collect::<Result<Vec<_>>>()?;
                    let y = intersect(p, tape, ty, &xs)?;
                    readout(tape, y)
                },
                h,
                tol,
            )
        }
        GradTarget::LossKg => {
            let items = kg_items(&params, &g, n, rng)?;
            model_grad_check(&params, |p, tape| Ok(loss_kg(p, tape, &items)?.value), h, tol)
        }
        GradTarget::LossQa => {
            let qs = probe_queries(&g, rng);
            let refs: Vec<&QuerySample> = qs.iter().collect();
            model_grad_check(&params, |p, tape| Ok(loss_qa(p, tape, &refs)?.value), h, tol)
        }
        GradTarget::Combined => {
            let items = kg_items(&params, &g, n, rng)?;
            let qs = probe_queries(&g, rng);
            let refs: Vec<&QuerySample> = qs.iter().collect();
            let weight = rng.gen_range(0.5..2.0);
            model_grad_check(&params, |p, tape| Ok(combined_loss(p, tape, &items, &refs, weight)?.0), h, tol)
        }
    }
}

/// Finite-difference checks of every target at `options.probes` probe
/// points, cycling through all (d, K, n) combinations.
pub fn gradient_suite(options: &GradSuiteOptions) -> Result<Vec<GradTargetReport>> {
    if options.dims.is_empty() || options.heads.is_empty() || options.set_sizes.is_empty() {
        return Err(Error::Config("gradient suite needs at least one d, K and n".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut reports = Vec::new();
    for target in GradTarget::all() {
        let mut report = GradTargetReport {
            target: target.to_string(),
            probes: 0,
            resampled: 0,
            max_rel_error: 0.0,
            tolerance: options.tolerance,
        };
        for i in 0..options.probes {
            let d = options.dims[i % options.dims.len()];
            let k = options.heads[(i / options.dims.len()) % options.heads.len()];
            let n = options.set_sizes[(i / (options.dims.len() * options.heads.len())) % options.set_sizes.len()];
            let mut attempts = 0;
            loop {
                match probe_once(target, d, k, n, options, &mut rng) {
                    Ok(r) => {
                        report.max_rel_error = report.max_rel_error.max(r.max_rel_error);
                        break;
                    }
                    Err(Error::Numeric(NumericError::KinkAdjacent { margin })) => {
                        attempts += 1;
                        report.resampled += 1;
                        if attempts >= MAX_RESAMPLES {
                            return Err(Error::Numeric(NumericError::KinkAdjacent { margin }));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            report.probes += 1;
        }
        log::debug!("{}: max relative error {:e}", report.target, report.max_rel_error);
        reports.push(report);
    }
    Ok(reports)
}

/// Outcome of one selftest property.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn random_inputs(tape: &mut Tape, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Var> {
    (0..n).map(|_| tape.constant((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Both intersections give bit-identical outputs under every input
/// permutation, for `instances` random configurations with n ≤ 5.
pub fn permutation_check(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = probe_graph(&mut rng);
    let mut mismatches = 0;
    let mut evaluated = 0;
    for _ in 0..instances {
        for intersection in [Intersection::Gqe, Intersection::Cga] {
            let d = *[4usize, 8].choose(&mut rng).unwrap();
            let config = ModelConfig {
                dim: d,
                heads: rng.gen_range(1..=4),
                psi: if rng.gen_bool(0.5) { Psi::Mean } else { Psi::Min },
                intersection,
                ..ModelConfig::default()
            };
            let params = ModelParameters::init(g.symbols().clone(), config, &mut rng)?;
            let n = rng.gen_range(1..=5);
            let values: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let mut reference: Option<Vec<u64>> = None;
            for perm in permutations(n) {
                let mut tape = Tape::new();
                let xs: Vec<Var> = perm.iter().map(|&i| tape.constant(values[i].clone())).collect();
                let y = intersect(&params, &mut tape, TypeId(0), &xs)?;
                let bits: Vec<u64> = tape.value(y).iter().map(|v| v.to_bits()).collect();
                match &reference {
                    None => reference = Some(bits),
                    Some(r) if *r != bits => mismatches += 1,
                    Some(_) => {}
                }
                evaluated += 1;
            }
        }
    }
    Ok(CheckResult {
        name: "permutation invariance".into(),
        passed: mismatches == 0,
        detail: format!("{mismatches} mismatches over {evaluated} permuted evaluations"),
    })
}

/// Attention weights form a strictly positive simplex per head, and n
/// identical inputs get weight 1/n each.
pub fn attention_check(instances: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = probe_graph(&mut rng);
    let (mut worst_sum, mut worst_uniform, mut nonpositive) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..instances {
        let d = *[4usize, 8, 16].choose(&mut rng).unwrap();
        let config = ModelConfig {
            dim: d,
            heads: rng.gen_range(1..=8),
            psi: if rng.gen_bool(0.5) { Psi::Mean } else { Psi::Min },
            intersection: Intersection::Cga,
            sigmoid_per_head: rng.gen_bool(0.5),
            ..ModelConfig::default()
        };
        let params = ModelParameters::init(g.symbols().clone(), config, &mut rng)?;
        let n = rng.gen_range(1..=6);
        let mut tape = Tape::new();
        let xs = random_inputs(&mut tape, n, d, &mut rng);
        let parts = intersect_cga(&params, &mut tape, TypeId(0), &xs)?;
        for &a in &parts.alpha {
            let w = tape.value(a);
            worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
            nonpositive += w.iter().filter(|x| **x <= 0.0).count();
        }
        let same = xs[0];
        let copies = vec![same; n];
        let parts = intersect_cga(&params, &mut tape, TypeId(0), &copies)?;
        for &a in &parts.alpha {
            for w in tape.value(a) {
                worst_uniform = worst_uniform.max((w - 1.0 / n as f64).abs());
            }
        }
    }
    Ok(CheckResult {
        name: "attention simplex".into(),
        passed: worst_sum <= 1e-12 && worst_uniform <= 1e-12 && nonpositive == 0,
        detail: format!(
            "max |sum-1| {worst_sum:e}, max |alpha-1/n| on identical inputs {worst_uniform:e}, {nonpositive} non-positive weights"
        ),
    })
}

/// Random micro graph: two types with 2-4 entities each, four relations,
/// each possible triple present with probability 0.35.
pub fn micro_graph<R: Rng + ?Sized>(rng: &mut R) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    let na = rng.gen_range(2..=4);
    let nb = rng.gen_range(2..=4);
    let aa: Vec<String> = (0..na).map(|i| format!("a{i}")).collect();
    let bb: Vec<String> = (0..nb).map(|i| format!("b{i}")).collect();
    for e in &aa {
        b.add_entity(e, "A").expect("fresh entity");
    }
    for e in &bb {
        b.add_entity(e, "B").expect("fresh entity");
    }
    for (r, heads, tails) in [("r", &aa, &bb), ("s", &bb, &bb), ("t", &aa, &aa), ("u", &bb, &aa)] {
        for h in heads.iter() {
            for t in tails.iter() {
                if rng.gen_bool(0.35) {
                    b.add_triple_typed(h, r, t).expect("declared entities");
                }
            }
        }
    }
    b.build()
}

/// Answers of `q` by trying every assignment of its variables.
pub fn brute_force_answers(kg: &KnowledgeGraph, q: &ConjunctiveQuery) -> BTreeSet<EntityId> {
    let Some(target) = q.target() else { return BTreeSet::new() };
    let s = kg.symbols();
    let domains: Vec<Vec<EntityId>> = q
        .nodes
        .iter()
        .map(|n| match n.kind {
            NodeKind::Anchor(e) => vec![e],
            _ => s.roster(n.expected_type).to_vec(),
        })
        .collect();
    let mut answers = BTreeSet::new();
    let mut idx = vec![0usize; q.nodes.len()];
    if domains.iter().any(Vec::is_empty) {
        return answers;
    }
    loop {
        let holds = q.edges.iter().all(|e| kg.contains(Triple::new(domains[e.from][idx[e.from]], e.relation, domains[e.to][idx[e.to]])));
        if holds {
            answers.insert(domains[target][idx[target]]);
        }
        let mut i = 0;
        loop {
            if i == idx.len() {
                return answers;
            }
            idx[i] += 1;
            if idx[i] < domains[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// `execute` against brute force over random micro graphs and all
/// structures, plus sample postconditions and the hard-negative property.
pub fn oracle_check(graphs: usize, seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut compared, mut mismatches, mut bad_samples) = (0usize, 0usize, 0usize);
    for _ in 0..graphs {
        let g = micro_graph(&mut rng);
        if g.base_triples().is_empty() {
            continue;
        }
        for structure in QueryStructure::ALL {
            let Ok(mut sample) = sample_query(&g, structure, &mut rng) else { continue };
            let answers = execute(&g, &sample.query);
            compared += 1;
            if answers != brute_force_answers(&g, &sample.query) {
                mismatches += 1;
            }
            if !answers.contains(&sample.answer) {
                bad_samples += 1;
            }
            for hard in [false, true] {
                if hard && !structure.has_intersection() {
                    continue;
                }
                let draw = sample_negatives(&g, &sample, 3, hard, &mut rng)?;
                if draw.entities.iter().any(|e| answers.contains(e)) {
                    bad_samples += 1;
                }
                if hard {
                    sample.hard = true;
                    let (_, branches) = branch_queries(&sample.query)?;
                    let sets: Vec<_> = branches.iter().map(|b| brute_force_answers(&g, b)).collect();
                    for e in &draw.entities {
                        let hits = sets.iter().filter(|s| s.contains(e)).count();
                        if hits == 0 || hits == sets.len() {
                            bad_samples += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(CheckResult {
        name: "oracle equivalence".into(),
        passed: mismatches == 0 && bad_samples == 0 && compared > 0,
        detail: format!("{compared} queries, {mismatches} executor mismatches, {bad_samples} bad samples"),
    })
}

/// AUC of random scores is near 0.5, separated scores give AUC 1 and
/// APR 100, and the hand case 0.8 vs {0.9, 0.5, 0.2} gives APR 66.67.
pub fn metric_check(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries: Vec<QueryScores> = (0..2000)
        .map(|_| QueryScores { positive: rng.gen(), negatives: (0..10).map(|_| rng.gen()).collect() })
        .collect();
    let pos: Vec<f64> = queries.iter().map(|q| q.positive).collect();
    let neg: Vec<f64> = queries.iter().flat_map(|q| q.negatives.iter().copied()).collect();
    let random_auc = auc(&pos, &neg)?;
    let separated: Vec<QueryScores> =
        (0..100).map(|i| QueryScores { positive: 2.0 + i as f64, negatives: vec![-1.0, 0.0, 1.0] }).collect();
    let sp: Vec<f64> = separated.iter().map(|q| q.positive).collect();
    let sn: Vec<f64> = separated.iter().flat_map(|q| q.negatives.iter().copied()).collect();
    let (sep_auc, sep_apr) = (auc(&sp, &sn)?, apr(&separated)?);
    let hand = apr(&[QueryScores { positive: 0.8, negatives: vec![0.9, 0.5, 0.2] }])?;
    let passed = (random_auc - 0.5).abs() <= 0.05 && sep_auc == 1.0 && sep_apr == 100.0 && (hand - 66.67).abs() <= 0.01;
    Ok(CheckResult {
        name: "metric identities".into(),
        passed,
        detail: format!("random AUC {random_auc:.4}, separated AUC {sep_auc} APR {sep_apr}, hand APR {hand:.4}"),
    })
}

/// Runs every property check. Gradient targets are reported one per line.
pub fn run(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let options = GradSuiteOptions { seed, ..Default::default() };
    for r in gradient_suite(&options)? {
        out.push(CheckResult {
            name: format!("gradient {}", r.target),
            passed: r.passed(),
            detail: format!("max relative error {:.3e} over {} probes ({} resampled)", r.max_rel_error, r.probes, r.resampled),
        });
    }
    out.push(permutation_check(200, seed)?);
    out.push(attention_check(1000, seed)?);
    out.push(oracle_check(500, seed)?);
    out.push(metric_check(seed)?);
    Ok(out)
}
