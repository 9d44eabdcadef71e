//! Max-margin training over KG neighborhoods and query-answer pairs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::kg::{read_file, EntityId, KnowledgeGraph, Neighborhood};
use crate::numeric::{Gradients, ParamStore, Tape, Var};
use crate::operators::{embed_query, intersect, project};
use crate::params::{ModelConfig, ModelParameters};
use crate::query::{QuerySample, QuerySet};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub neighborhood_sizes: Vec<usize>,
    /// Negatives drawn per KG-phase center.
    pub negatives: usize,
    pub kg_phase: bool,
    pub kg_weight: f64,
    /// KG-phase batches combined with each query batch.
    pub kg_ratio: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub workers: usize,
    pub dataset: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            learning_rate: 0.001,
            batch_size: 512,
            epochs: 100,
            neighborhood_sizes: vec![4, 5, 6, 7],
            negatives: 10,
            kg_phase: true,
            kg_weight: 1.0,
            kg_ratio: 1,
            patience: 10,
            seed: 0,
            workers: 1,
            dataset: None,
        }
    }
}

/// Keys accepted in a config file, in the order [`TrainConfig::to_text`] writes them.
pub const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "dim",
    "heads",
    "psi",
    "projection",
    "intersection",
    "margin",
    "leaky_slope",
    "sigmoid_per_head",
    "learning_rate",
    "batch_size",
    "epochs",
    "neighborhood_sizes",
    "negatives",
    "kg_phase",
    "kg_weight",
    "kg_ratio",
    "patience",
    "seed",
    "workers",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl TrainConfig {
    /// Sets one key; dashes in the key are read as underscores.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let value = value.trim();
        let m = &mut self.model;
        match key.as_str() {
            "dataset" => self.dataset = Some(PathBuf::from(value)),
            "dim" => m.dim = parse_value(&key, value)?,
            "heads" => m.heads = parse_value(&key, value)?,
            "psi" => m.psi = value.parse()?,
            "projection" => m.projection = value.parse()?,
            "intersection" => m.intersection = value.parse()?,
            "margin" => m.margin = parse_value(&key, value)?,
            "leaky_slope" => m.leaky_slope = parse_value(&key, value)?,
            "sigmoid_per_head" => m.sigmoid_per_head = parse_bool(&key, value)?,
            "learning_rate" => self.learning_rate = parse_value(&key, value)?,
            "batch_size" => self.batch_size = parse_value(&key, value)?,
            "epochs" => self.epochs = parse_value(&key, value)?,
            "neighborhood_sizes" => {
                self.neighborhood_sizes =
                    value.split(',').map(|v| parse_value(&key, v.trim())).collect::<Result<Vec<usize>>>()?
            }
            "negatives" => self.negatives = parse_value(&key, value)?,
            "kg_phase" => self.kg_phase = parse_bool(&key, value)?,
            "kg_weight" => self.kg_weight = parse_value(&key, value)?,
            "kg_ratio" => self.kg_ratio = parse_value(&key, value)?,
            "patience" => self.patience = parse_value(&key, value)?,
            "seed" => self.seed = parse_value(&key, value)?,
            "workers" => self.workers = parse_value(&key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment. A relative
    /// `dataset` path is resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        if let (Some(base), Some(ds)) = (base_dir, cfg.dataset.as_ref()) {
            if ds.is_relative() {
                cfg.dataset = Some(base.join(ds));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&read_file(path)?, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be non-negative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("at least one negative per positive is required".into()));
        }
        if self.kg_phase && (self.neighborhood_sizes.is_empty() || self.neighborhood_sizes.contains(&0)) {
            return Err(Error::Config("neighborhood sizes must be positive".into()));
        }
        if !self.kg_weight.is_finite() || self.kg_weight < 0.0 {
            return Err(Error::Config("kg weight must be non-negative".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let mut out = String::new();
        if let Some(ds) = &self.dataset {
            let _ = writeln!(out, "dataset = {}", ds.display());
        }
        let sizes: Vec<String> = self.neighborhood_sizes.iter().map(ToString::to_string).collect();
        for (k, v) in [
            ("dim", m.dim.to_string()),
            ("heads", m.heads.to_string()),
            ("psi", m.psi.to_string()),
            ("projection", m.projection.to_string()),
            ("intersection", m.intersection.to_string()),
            ("margin", m.margin.to_string()),
            ("leaky_slope", m.leaky_slope.to_string()),
            ("sigmoid_per_head", m.sigmoid_per_head.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("neighborhood_sizes", sizes.join(",")),
            ("negatives", self.negatives.to_string()),
            ("kg_phase", self.kg_phase.to_string()),
            ("kg_weight", self.kg_weight.to_string()),
            ("kg_ratio", self.kg_ratio.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

/// A KG-phase training item: a sampled neighborhood and negatives for its center.
#[derive(Clone, Debug, PartialEq)]
pub struct KgItem {
    pub neighborhood: Neighborhood,
    pub negatives: Vec<EntityId>,
}

/// A summed hinge loss on a tape with the number of (positive, negative) pairs.
#[derive(Clone, Copy, Debug)]
pub struct LossTerm {
    pub value: Var,
    pub pairs: usize,
}

/// Reconstructs the center of a neighborhood: every `(r, u)` pair is
/// projected from `u` along `r`, and the results are intersected.
pub fn kg_phase_embedding(params: &ModelParameters, tape: &mut Tape, nbhd: &Neighborhood) -> Result<Var> {
    let mut projected = Vec::with_capacity(nbhd.pairs.len());
    for &(r, u) in &nbhd.pairs {
        let e = params.lookup(tape, u)?;
        projected.push(project(params, tape, e, r)?);
    }
    let ty = params.symbols().entity_type(nbhd.center);
    intersect(params, tape, ty, &projected)
}

fn hinge_terms(
    params: &ModelParameters,
    tape: &mut Tape,
    embedding: Var,
    positive: EntityId,
    negatives: &[EntityId],
    out: &mut Vec<Var>,
) -> Result<()> {
    if negatives.is_empty() {
        return Ok(());
    }
    let margin = params.config().margin;
    let pos = params.lookup(tape, positive)?;
    let pos = tape.cosine_similarity(embedding, pos)?;
    for &n in negatives {
        let neg = params.lookup(tape, n)?;
        let neg = tape.cosine_similarity(embedding, neg)?;
        out.push(tape.hinge(margin, pos, neg)?);
    }
    Ok(())
}

/// Σ over centers and their negatives of `max(0, Δ − Φ(H(e), e) + Φ(H(e), e⁻))`.
pub fn loss_kg(params: &ModelParameters, tape: &mut Tape, items: &[KgItem]) -> Result<LossTerm> {
    let mut terms = Vec::new();
    for item in items {
        let h = kg_phase_embedding(params, tape, &item.neighborhood)?;
        hinge_terms(params, tape, h, item.neighborhood.center, &item.negatives, &mut terms)?;
    }
    Ok(LossTerm { value: tape.sum(&terms)?, pairs: terms.len() })
}

/// Σ over queries and their negatives of `max(0, Δ − Φ(q, a) + Φ(q, a⁻))`.
pub fn loss_qa(params: &ModelParameters, tape: &mut Tape, samples: &[&QuerySample]) -> Result<LossTerm> {
    let mut terms = Vec::new();
    for s in samples {
        if s.negatives.is_empty() {
            continue;
        }
        let q = embed_query(params, tape, &s.query, None)?;
        hinge_terms(params, tape, q, s.answer, &s.negatives, &mut terms)?;
    }
    Ok(LossTerm { value: tape.sum(&terms)?, pairs: terms.len() })
}

/// `weight · L_KG + L_QA` on one tape; either part may be absent.
pub fn combined_loss(
    params: &ModelParameters,
    tape: &mut Tape,
    kg_items: &[KgItem],
    qa: &[&QuerySample],
    kg_weight: f64,
) -> Result<(Var, LossTerm, LossTerm)> {
    let kg = loss_kg(params, tape, kg_items)?;
    let qa = loss_qa(params, tape, qa)?;
    let weighted = tape.scale(kg.value, kg_weight)?;
    let total = tape.sum(&[weighted, qa.value])?;
    Ok((total, kg, qa))
}

/// Entities of the same type as `center`, excluding it, drawn without
/// replacement; fewer than `k` when the type is small.
pub fn kg_negatives<R: Rng + ?Sized>(
    params: &ModelParameters,
    center: EntityId,
    k: usize,
    rng: &mut R,
) -> Vec<EntityId> {
    let symbols = params.symbols();
    let roster = symbols.roster(symbols.entity_type(center));
    let pool: Vec<EntityId> = roster.iter().copied().filter(|&e| e != center).collect();
    let take = k.min(pool.len());
    let mut picked: Vec<EntityId> = index::sample(rng, pool.len(), take).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    picked
}

/// Adam applied only to the parameter slices that received a gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: store.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
            v: store.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (slice, g) in grads.iter() {
            let m = &mut self.m[slice.tensor.0][slice.offset..slice.offset + slice.len];
            let v = &mut self.v[slice.tensor.0][slice.offset..slice.offset + slice.len];
            let p = store.slice_values_mut(*slice);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= self.learning_rate * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean hinge per (positive, negative) pair.
    pub loss_kg: Option<f64>,
    pub loss_qa: Option<f64>,
    pub val_auc_all: Option<f64>,
    pub val_auc_hneg: Option<f64>,
    pub val_apr_all: Option<f64>,
    pub val_apr_hneg: Option<f64>,
}

pub fn history_csv(history: &[EpochStats]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
    let mut out = String::from("epoch,loss_kg,loss_qa,val_auc_all,val_auc_hneg,val_apr_all,val_apr_hneg\n");
    for h in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            h.epoch,
            f(h.loss_kg),
            f(h.loss_qa),
            f(h.val_auc_all),
            f(h.val_auc_hneg),
            f(h.val_apr_all),
            f(h.val_apr_hneg)
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept, when validation drove the choice.
    pub best_epoch: Option<usize>,
    pub final_validation: Option<EvalReport>,
}

/// Initializes parameters from `config.seed` and trains them.
pub fn train(kg: &KnowledgeGraph, queries: &QuerySet, valid: Option<&QuerySet>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = ModelParameters::init(kg.symbols().clone(), config.model.clone(), &mut rng)?;
    train_from(params, kg, queries, valid, config, &mut rng)
}

/// Continues training `params`, drawing all randomness from `rng`.
pub fn train_from(
    mut params: ModelParameters,
    kg: &KnowledgeGraph,
    queries: &QuerySet,
    valid: Option<&QuerySet>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut qa_items: Vec<&QuerySample> = queries.iter().map(|(_, s)| s).collect();

    // Neighborhoods are drawn once per size; negatives are redrawn per batch.
    let mut kg_batches: Vec<Vec<Neighborhood>> = Vec::new();
    if config.kg_phase {
        let centers = kg.active_entities();
        for &n in &config.neighborhood_sizes {
            let bucket = centers.iter().map(|&e| kg.sample_neighborhood(e, n, rng)).collect::<Result<Vec<_>>>()?;
            kg_batches.extend(bucket.chunks(config.batch_size).map(<[Neighborhood]>::to_vec));
        }
    }
    let use_kg = config.kg_phase && !kg_batches.is_empty();
    let qa_steps = qa_items.len().div_ceil(config.batch_size);
    let steps_per_epoch = if qa_steps > 0 { qa_steps } else if use_kg { kg_batches.len().div_ceil(config.kg_ratio.max(1)) } else { 0 };
    if steps_per_epoch == 0 {
        return Err(Error::Config("nothing to train on: no queries and no KG phase".into()));
    }

    let mut adam = Adam::new(params.store(), config.learning_rate);
    let eval_options = EvalOptions { workers: config.workers, ..Default::default() };
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParameters, EvalReport)> = None;
    let mut stale = 0usize;
    let mut kg_cursor = 0usize;

    for epoch in 1..=config.epochs {
        qa_items.shuffle(rng);
        if use_kg {
            kg_batches.shuffle(rng);
        }
        let (mut kg_sum, mut kg_pairs, mut qa_sum, mut qa_pairs) = (0.0, 0usize, 0.0, 0usize);
        for step in 0..steps_per_epoch {
            let qa_batch: &[&QuerySample] = if qa_steps > 0 {
                let lo = step * config.batch_size;
                &qa_items[lo..(lo + config.batch_size).min(qa_items.len())]
            } else {
                &[]
            };
            let mut kg_items = Vec::new();
            if use_kg {
                for _ in 0..config.kg_ratio.max(1) {
                    let batch = &kg_batches[kg_cursor % kg_batches.len()];
                    kg_cursor += 1;
                    for nb in batch {
                        let negatives = kg_negatives(&params, nb.center, config.negatives, rng);
                        kg_items.push(KgItem { neighborhood: nb.clone(), negatives });
                    }
                }
            }

            let mut tape = Tape::new();
            let (total, kg, qa) = combined_loss(&params, &mut tape, &kg_items, qa_batch, config.kg_weight)?;
            let loss = tape.scalar(total);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step, detail: format!("loss is {loss}") });
            }
            kg_sum += tape.scalar(kg.value);
            kg_pairs += kg.pairs;
            qa_sum += tape.scalar(qa.value);
            qa_pairs += qa.pairs;

            let grads = tape.backward(total)?;
            adam.step(params.store_mut(), &grads);
            if let Some(name) = params.store().first_non_finite() {
                return Err(Error::Divergence { epoch, step, detail: format!("tensor {name} became non-finite") });
            }
        }

        let mut stats = EpochStats {
            epoch,
            loss_kg: (kg_pairs > 0).then(|| kg_sum / kg_pairs as f64),
            loss_qa: (qa_pairs > 0).then(|| qa_sum / qa_pairs as f64),
            val_auc_all: None,
            val_auc_hneg: None,
            val_apr_all: None,
            val_apr_hneg: None,
        };
        let mut stop = false;
        if let Some(v) = valid.filter(|v| !v.is_empty()) {
            let report = evaluate(&params, v, eval_options)?;
            stats.val_auc_all = report.auc_all;
            stats.val_auc_hneg = report.auc_hneg;
            stats.val_apr_all = report.apr_all;
            stats.val_apr_hneg = report.apr_hneg;
            if let Some(score) = report.auc_all {
                if best.as_ref().map_or(true, |b| score > b.0) {
                    best = Some((score, epoch, params.clone(), report));
                    stale = 0;
                } else {
                    stale += 1;
                    stop = config.patience > 0 && stale >= config.patience;
                }
            }
        }
        log::info!(
            "epoch {epoch}: loss_kg {} loss_qa {} val_auc {}",
            stats.loss_kg.map_or("-".into(), |x| format!("{x:.5}")),
            stats.loss_qa.map_or("-".into(), |x| format!("{x:.5}")),
            stats.val_auc_all.map_or("-".into(), |x| format!("{x:.4}"))
        );
        history.push(stats);
        if stop {
            log::info!("no validation improvement for {stale} epochs, stopping");
            break;
        }
    }

    Ok(match best {
        Some((_, epoch, best_params, report)) => TrainOutcome {
            params: best_params,
            history,
            best_epoch: Some(epoch),
            final_validation: Some(report),
        },
        None => TrainOutcome { params, history, best_epoch: None, final_validation: None },
    })
}
