//! ROC AUC and average percentile rank, per query type and macro-averaged.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::cosine_values;
use crate::operators::query_embedding;
use crate::params::ModelParameters;
use crate::query::{QuerySample, QuerySet, QueryType};

/// Score of the answer and of each stored negative for one query.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryScores {
    pub positive: f64,
    pub negatives: Vec<f64>,
}

/// Mann-Whitney estimate of P(pos > neg), ties counted half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() {
        return Err(Error::EmptyScores("positive"));
    }
    if neg.is_empty() {
        return Err(Error::EmptyScores("negative"));
    }
    let mut neg_sorted = neg.to_vec();
    neg_sorted.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &p in pos {
        let below = neg_sorted.partition_point(|&n| n < p);
        let not_above = neg_sorted.partition_point(|&n| n <= p);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

/// Percentile of the answer among its negatives, 0 to 100.
pub fn percentile(pos: f64, neg: &[f64]) -> Result<f64> {
    if neg.is_empty() {
        return Err(Error::EmptyScores("negative"));
    }
    let below = neg.iter().filter(|&&n| n < pos).count() as f64;
    let ties = neg.iter().filter(|&&n| n == pos).count() as f64;
    Ok(100.0 * (below + 0.5 * ties) / neg.len() as f64)
}

/// Mean percentile over queries.
pub fn apr(per_query: &[QueryScores]) -> Result<f64> {
    if per_query.is_empty() {
        return Err(Error::EmptyScores("query"));
    }
    let mut total = 0.0;
    for q in per_query {
        total += percentile(q.positive, &q.negatives)?;
    }
    Ok(total / per_query.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AucMode {
    /// One AUC over every (answer, negative) pair of the type.
    #[default]
    Pooled,
    /// Mean of per-query AUCs.
    PerQuery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeMetrics {
    pub query_type: String,
    pub hard: bool,
    pub queries: usize,
    /// Fraction in [0, 1].
    pub auc: f64,
    /// Percentage in [0, 100].
    pub apr: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub seed: u64,
    pub per_type: Vec<TypeMetrics>,
    pub auc_all: Option<f64>,
    pub auc_hneg: Option<f64>,
    pub apr_all: Option<f64>,
    pub apr_hneg: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalReport {
    pub fn from_types(per_type: Vec<TypeMetrics>) -> Self {
        let auc_all = mean(per_type.iter().map(|t| t.auc));
        let apr_all = mean(per_type.iter().map(|t| t.apr));
        let auc_hneg = mean(per_type.iter().filter(|t| t.hard).map(|t| t.auc));
        let apr_hneg = mean(per_type.iter().filter(|t| t.hard).map(|t| t.apr));
        EvalReport { per_type, auc_all, auc_hneg, apr_all, apr_hneg, ..Default::default() }
    }

    pub fn type_metrics(&self, t: QueryType) -> Option<&TypeMetrics> {
        let name = t.name();
        self.per_type.iter().find(|m| m.query_type == name)
    }

    /// Per-type rows followed by the four aggregates.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut out = String::from("model,dataset,seed,query_type,hard,queries,auc,apr\n");
        for t in &self.per_type {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.6},{:.6}",
                self.model, self.dataset, self.seed, t.query_type, t.hard, t.queries, t.auc, t.apr
            );
        }
        for (name, auc, apr) in [("all", self.auc_all, self.apr_all), ("h-neg", self.auc_hneg, self.apr_hneg)] {
            let _ = writeln!(out, "{},{},{},{name},,,{},{}", self.model, self.dataset, self.seed, fmt(auc), fmt(apr));
        }
        out
    }

    /// AUC and APR per query type, one row per type, for bar charts.
    pub fn bars_csv(&self) -> String {
        let mut out = String::from("index,query_type,auc,apr\n");
        for (i, t) in self.per_type.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.4},{:.4}", i + 1, t.query_type, 100.0 * t.auc, t.apr);
        }
        out
    }

    /// Aligned table with AUC and APR over All and H-Neg, both in percent.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>, scale: f64| v.map(|x| format!("{:.2}", scale * x)).unwrap_or_else(|| "-".into());
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:>8} {:>8} {:>8} {:>8}", "", "AUC", "", "APR", "");
        let _ = writeln!(out, "{:<24} {:>8} {:>8} {:>8} {:>8}", "model", "All", "H-Neg", "All", "H-Neg");
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>8} {:>8} {:>8}",
            self.model,
            pct(self.auc_all, 100.0),
            pct(self.auc_hneg, 100.0),
            pct(self.apr_all, 1.0),
            pct(self.apr_hneg, 1.0)
        );
        out.push('\n');
        let _ = writeln!(out, "{:<24} {:>8} {:>8} {:>8}", "query type", "queries", "AUC", "APR");
        for t in &self.per_type {
            let _ = writeln!(out, "{:<24} {:>8} {:>8.2} {:>8.2}", t.query_type, t.queries, 100.0 * t.auc, t.apr);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    pub auc_mode: AucMode,
    pub workers: usize,
}

/// Cosine scores of the answer and the stored negatives under `params`.
pub fn score_sample(params: &ModelParameters, sample: &QuerySample) -> Result<QueryScores> {
    let q = query_embedding(params, &sample.query)?;
    let score = |e| -> Result<f64> { Ok(cosine_values(&q, &params.entity_embedding(e)?)) };
    Ok(QueryScores {
        positive: score(sample.answer)?,
        negatives: sample.negatives.iter().map(|&e| score(e)).collect::<Result<_>>()?,
    })
}

/// Scores every query with `scorer`, spread over `workers` threads. The
/// result does not depend on the worker count.
pub fn score_all<F>(samples: &[&QuerySample], workers: usize, scorer: &F) -> Result<Vec<QueryScores>>
where
    F: Fn(&QuerySample) -> Result<QueryScores> + Sync,
{
    let workers = workers.max(1).min(samples.len().max(1));
    if workers == 1 {
        return samples.iter().map(|s| scorer(s)).collect();
    }
    let chunk = samples.len().div_ceil(workers);
    let parts: Vec<Result<Vec<QueryScores>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(|s| scorer(s)).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scoring worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Metrics for each query type present in `set`. Queries without negatives
/// are skipped, and types left empty are omitted from the aggregates.
pub fn evaluate_with<F>(set: &QuerySet, options: EvalOptions, scorer: F) -> Result<EvalReport>
where
    F: Fn(&QuerySample) -> Result<QueryScores> + Sync,
{
    let mut per_type = Vec::new();
    for t in QueryType::all() {
        let samples: Vec<&QuerySample> = match set.by_type.get(&t) {
            Some(v) => v.iter().filter(|s| !s.negatives.is_empty()).collect(),
            None => Vec::new(),
        };
        let total = set.by_type.get(&t).map_or(0, Vec::len);
        if samples.len() < total {
            log::warn!("{t}: {} queries without negatives skipped", total - samples.len());
        }
        if samples.is_empty() {
            if total > 0 || set.by_type.contains_key(&t) {
                log::warn!("{t}: no scorable queries, omitted from the aggregates");
            }
            continue;
        }
        let scores = score_all(&samples, options.workers, &scorer)?;
        per_type.push(type_metrics(t, &scores, options.auc_mode)?);
    }
    Ok(EvalReport::from_types(per_type))
}

fn type_metrics(t: QueryType, scores: &[QueryScores], mode: AucMode) -> Result<TypeMetrics> {
    let auc_value = match mode {
        AucMode::Pooled => {
            let pos: Vec<f64> = scores.iter().map(|s| s.positive).collect();
            let neg: Vec<f64> = scores.iter().flat_map(|s| s.negatives.iter().copied()).collect();
            auc(&pos, &neg)?
        }
        AucMode::PerQuery => {
            let mut total = 0.0;
            for s in scores {
                total += auc(&[s.positive], &s.negatives)?;
            }
            total / scores.len() as f64
        }
    };
    Ok(TypeMetrics { query_type: t.name(), hard: t.hard, queries: scores.len(), auc: auc_value, apr: apr(scores)? })
}

pub fn evaluate(params: &ModelParameters, set: &QuerySet, options: EvalOptions) -> Result<EvalReport> {
    let mut report = evaluate_with(set, options, |s| score_sample(params, s))?;
    report.model = params.config().tag();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap(), 0.5);
        assert!((auc(&[0.8], &[0.9, 0.5, 0.2]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(auc(&[], &[1.0]), Err(Error::EmptyScores(_))));
        assert!(matches!(auc(&[1.0], &[]), Err(Error::EmptyScores(_))));
    }

    #[test]
    fn apr_examples() {
        let q = |p: f64, n: &[f64]| QueryScores { positive: p, negatives: n.to_vec() };
        assert_eq!(apr(&[q(1.0, &[0.1, 0.2, 0.3, 0.4])]).unwrap(), 100.0);
        assert_eq!(apr(&[q(0.0, &[0.1, 0.2])]).unwrap(), 0.0);
        assert!((apr(&[q(0.8, &[0.9, 0.5, 0.2])]).unwrap() - 200.0 / 3.0).abs() < 1e-12);
        assert!(apr(&[q(0.8, &[])]).is_err());
    }

    #[test]
    fn auc_ignores_monotone_transforms() {
        let pos = [0.3, -0.1, 0.7, 0.7];
        let neg = [0.2, 0.7, -0.5, 0.0, 0.31];
        let f = |x: f64| (3.0 * x).exp() - 4.0;
        let a = auc(&pos, &neg).unwrap();
        let b = auc(&pos.map(f), &neg.map(f)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregates_are_unweighted_means() {
        let m = |name: &str, hard, auc, apr| TypeMetrics { query_type: name.into(), hard, queries: 3, auc, apr };
        let r = EvalReport::from_types(vec![m("1-chain", false, 0.5, 50.0), m("hard-2-inter", true, 1.0, 90.0)]);
        assert_eq!(r.auc_all, Some(0.75));
        assert_eq!(r.auc_hneg, Some(1.0));
        assert_eq!(r.apr_all, Some(70.0));
        assert!(r.to_csv().lines().count() == 5);
        assert!(r.to_table().contains("75.00"));
    }
}
