//! Top-K ranking evaluation: HR@K and NDCG@K over a split's test instances.
//!
//! Ranking is over the full item catalog by default (no sampled negatives).
//! The ground-truth rank is computed without materializing a sort: it is the
//! number of candidates scoring strictly higher, plus tied candidates with a
//! smaller item id, plus one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::index::TemporalIndex;
use crate::models::{self, ScorerConfig};
use crate::splits::{EvalInstance, Split, SplitManifest};
use crate::{Error, ItemId, Result, Timestamp, UserId};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePolicy {
    /// Every item in the catalog is rankable at every query.
    #[default]
    AllItems,
    /// Only items whose release time is at or before the query time.
    ReleasedBeforeT0,
    /// Everything except items the user already interacted with in train.
    ExcludeTrainSeen,
    /// Both restrictions.
    ReleasedAndUnseen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_values: Vec<usize>,
    pub candidate_policy: CandidatePolicy,
    pub scorer: ScorerConfig,
}

impl EvalConfig {
    pub fn new(scorer: ScorerConfig) -> EvalConfig {
        EvalConfig {
            k_values: vec![5, 10],
            candidate_policy: CandidatePolicy::AllItems,
            scorer,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() {
            return Err(Error::Config("k_values must not be empty".into()));
        }
        if self.k_values.iter().any(|&k| k < 1) {
            return Err(Error::Config("every K must be >= 1".into()));
        }
        self.scorer.validate()
    }
}

/// Catalog-side context for candidate policies: release times and per-user
/// train-seen items.
#[derive(Debug, Clone)]
pub struct CandidateContext {
    n_items: usize,
    release_time: Vec<Timestamp>,
    seen: Vec<Vec<ItemId>>,
}

impl CandidateContext {
    /// Build from a split. `release_time` is indexed by dense item id; items
    /// that never appear anywhere may carry `Timestamp::MAX`.
    pub fn new(
        n_users: usize,
        n_items: usize,
        release_time: Vec<Timestamp>,
        split: &Split,
    ) -> CandidateContext {
        assert_eq!(release_time.len(), n_items);
        let mut seen = vec![Vec::new(); n_users];
        for it in &split.train {
            seen[it.user as usize].push(it.item);
        }
        for items in &mut seen {
            items.sort_unstable();
            items.dedup();
        }
        CandidateContext {
            n_items,
            release_time,
            seen,
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn release_time(&self, item: ItemId) -> Timestamp {
        self.release_time[item as usize]
    }

    fn user_seen(&self, user: UserId, item: ItemId) -> bool {
        self.seen
            .get(user as usize)
            .map(|s| s.binary_search(&item).is_ok())
            .unwrap_or(false)
    }

    pub fn is_candidate(
        &self,
        policy: CandidatePolicy,
        user: UserId,
        item: ItemId,
        t0: Timestamp,
    ) -> bool {
        match policy {
            CandidatePolicy::AllItems => true,
            CandidatePolicy::ReleasedBeforeT0 => self.release_time(item) <= t0,
            CandidatePolicy::ExcludeTrainSeen => !self.user_seen(user, item),
            CandidatePolicy::ReleasedAndUnseen => {
                self.release_time(item) <= t0 && !self.user_seen(user, item)
            }
        }
    }

    /// Materialize the candidate set for one query, ascending by item id.
    pub fn candidates(&self, policy: CandidatePolicy, user: UserId, t0: Timestamp) -> Vec<ItemId> {
        (0..self.n_items as ItemId)
            .filter(|&i| self.is_candidate(policy, user, i, t0))
            .collect()
    }
}

/// Per-instance outcome. `rank` is the 1-based position of the ground-truth
/// item, absent when the item is outside the candidate set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub instance: EvalInstance,
    pub rank: Option<usize>,
}

impl EvalRecord {
    pub fn hit_at(&self, k: usize) -> bool {
        self.rank.map(|r| r <= k).unwrap_or(false)
    }

    /// `1 / log2(rank + 1)` for a hit within the top K, 0 otherwise.
    pub fn ndcg_at(&self, k: usize) -> f64 {
        match self.rank {
            Some(r) if r <= k => 1.0 / ((r as f64) + 1.0).log2(),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub split: SplitManifest,
    pub n_instances: usize,
    /// K -> mean hit rate over all instances.
    pub hr: BTreeMap<usize, f64>,
    /// K -> mean NDCG over all instances.
    pub ndcg: BTreeMap<usize, f64>,
    /// Instances whose ground truth was not rankable under the policy;
    /// they contribute zero to both metrics.
    pub misses_outside_candidates: usize,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// Flat metric map keyed like report JSON: "HR@5", "NDCG@10", ...
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (&k, &v) in &self.hr {
            out.insert(format!("HR@{k}"), v);
        }
        for (&k, &v) in &self.ndcg {
            out.insert(format!("NDCG@{k}"), v);
        }
        out
    }

    /// The serializable report document (per-instance records excluded).
    pub fn doc(&self) -> ReportDoc {
        ReportDoc {
            config: self.config.clone(),
            split: self.split.clone(),
            n_instances: self.n_instances,
            metrics: self.metrics(),
            misses_outside_candidates: self.misses_outside_candidates,
        }
    }
}

/// The on-disk report schema (`report.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub config: EvalConfig,
    pub split: SplitManifest,
    pub n_instances: usize,
    pub metrics: BTreeMap<String, f64>,
    pub misses_outside_candidates: usize,
}

/// Rank of the instance's ground-truth item among the candidates under the
/// configured scorer, or `None` when the item is not a candidate.
pub fn rank_of(
    index: &TemporalIndex,
    ctx: &CandidateContext,
    cfg: &EvalConfig,
    instance: &EvalInstance,
) -> Option<usize> {
    let EvalInstance { user, item, t0 } = *instance;
    if !ctx.is_candidate(cfg.candidate_policy, user, item, t0) {
        return None;
    }
    let scorer = models::PreparedScorer::new(index, &cfg.scorer);
    let gt_score = scorer.score(item, t0);
    let mut better = 0usize;
    let mut tied_smaller = 0usize;
    for other in 0..ctx.n_items() as ItemId {
        if other == item || !ctx.is_candidate(cfg.candidate_policy, user, other, t0) {
            continue;
        }
        let s = scorer.score(other, t0);
        if s > gt_score {
            better += 1;
        } else if s == gt_score && other < item {
            tied_smaller += 1;
        }
    }
    Some(better + tied_smaller + 1)
}

/// Evaluate a scorer over every test instance of a split.
///
/// The index must have been built from the split's training interactions
/// only; this is asserted, not assumed. Instances evaluate in parallel and
/// aggregates reduce in instance order, so results are independent of the
/// worker count.
pub fn evaluate(
    split: &Split,
    index: &TemporalIndex,
    ctx: &CandidateContext,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    if index.total_interactions() != split.train.len() {
        return Err(Error::Leakage(format!(
            "index holds {} interactions but the training set has {}; \
             the index must be built from split.train only",
            index.total_interactions(),
            split.train.len()
        )));
    }
    let records = evaluate_instances(index, ctx, cfg, &split.test);
    Ok(aggregate(records, cfg, SplitManifest::of(split)))
}

/// Score and rank a batch of instances in parallel. Records come back in
/// instance order regardless of the worker count.
pub fn evaluate_instances(
    index: &TemporalIndex,
    ctx: &CandidateContext,
    cfg: &EvalConfig,
    instances: &[EvalInstance],
) -> Vec<EvalRecord> {
    instances
        .par_iter()
        .map(|instance| EvalRecord {
            instance: *instance,
            rank: rank_of(index, ctx, cfg, instance),
        })
        .collect()
}

/// Fold per-instance records into a report. Exposed so callers can restrict
/// records to sub-populations (per-group analysis) without re-scoring.
pub fn aggregate(records: Vec<EvalRecord>, cfg: &EvalConfig, split: SplitManifest) -> EvalReport {
    let n = records.len();
    let mut hr = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in &cfg.k_values {
        let hits: u64 = records.iter().filter(|r| r.hit_at(k)).count() as u64;
        let gain: f64 = records.iter().map(|r| r.ndcg_at(k)).sum();
        let denom = if n == 0 { 1.0 } else { n as f64 };
        hr.insert(k, hits as f64 / denom);
        ndcg.insert(k, gain / denom);
    }
    let misses = records.iter().filter(|r| r.rank.is_none()).count();
    EvalReport {
        config: cfg.clone(),
        split,
        n_instances: n,
        hr,
        ndcg,
        misses_outside_candidates: misses,
        records,
    }
}

/// One row of a model comparison: relative improvement of a report over the
/// baseline on one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub baseline: f64,
    pub value: f64,
    /// `(value - baseline) / baseline`.
    pub improvement: f64,
}

/// Relative per-metric improvement of each report over the baseline.
///
/// Reports must share the split manifest and K list.
pub fn compare(baseline: &ReportDoc, others: &[&ReportDoc]) -> Result<Vec<Vec<ComparisonRow>>> {
    for r in others {
        if r.split != baseline.split {
            return Err(Error::Config(
                "compared reports come from different splits".into(),
            ));
        }
        if r.config.k_values != baseline.config.k_values {
            return Err(Error::Config(
                "compared reports use different K lists".into(),
            ));
        }
    }
    Ok(others
        .iter()
        .map(|r| {
            r.metrics
                .iter()
                .map(|(metric, &value)| {
                    let b = baseline.metrics[metric];
                    ComparisonRow {
                        metric: metric.clone(),
                        baseline: b,
                        value,
                        improvement: if b == 0.0 { f64::NAN } else { (value - b) / b },
                    }
                })
                .collect()
        })
        .collect())
}
