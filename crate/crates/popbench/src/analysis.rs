//! User-behavior analyses over a corpus: cohort selection, log-scaled user
//! grouping, popular-item tendency, per-group accuracy and per-day release /
//! last-interaction curves.
//!
//! Everything here is descriptive. Popular sets are therefore derived from
//! *all* interactions strictly before the query time, not from a train-only
//! index; predictive evaluation stays in the `eval` module.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::Corpus;
use crate::eval::{self, CandidateContext, EvalConfig, EvalReport};
use crate::index::TemporalIndex;
use crate::models::{self, ScorerConfig};
use crate::splits::Split;
use crate::{Error, ItemId, Result, Timestamp, UserId};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Users whose earliest interaction falls inside `[start, end)`, ascending
/// by dense user id.
pub fn select_cohort(corpus: &Corpus, window: (Timestamp, Timestamp)) -> Result<Vec<UserId>> {
    let (start, end) = window;
    if start >= end {
        return Err(Error::Config(format!(
            "cohort window start {start} must be < end {end}"
        )));
    }
    let mut first = vec![Timestamp::MAX; corpus.n_users()];
    for it in &corpus.interactions {
        let slot = &mut first[it.user as usize];
        *slot = (*slot).min(it.timestamp);
    }
    let cohort: Vec<UserId> = (0..corpus.n_users() as UserId)
        .filter(|&u| {
            let t = first[u as usize];
            t >= start && t < end
        })
        .collect();
    if cohort.is_empty() {
        return Err(Error::Degenerate(format!(
            "no user has a first interaction inside [{start}, {end})"
        )));
    }
    Ok(cohort)
}

/// Per-cohort-user interaction counts restricted to the window, in cohort
/// order.
pub fn cohort_counts(
    corpus: &Corpus,
    cohort: &[UserId],
    window: (Timestamp, Timestamp),
) -> Vec<(UserId, u64)> {
    let mut counts: HashMap<UserId, u64> = cohort.iter().map(|&u| (u, 0)).collect();
    for it in &corpus.interactions {
        if it.timestamp >= window.0 && it.timestamp < window.1 {
            if let Some(c) = counts.get_mut(&it.user) {
                *c += 1;
            }
        }
    }
    cohort.iter().map(|&u| (u, counts[&u])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserGroupSpec {
    pub n_groups: usize,
    pub scale: Scale,
}

impl Default for UserGroupSpec {
    fn default() -> Self {
        UserGroupSpec {
            n_groups: 10,
            scale: Scale::Log,
        }
    }
}

/// Group assignment over bin edges spaced between the observed min and max
/// count. Bins are half-open except the last, which includes the maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// `n_groups + 1` edges; first and last are exactly the observed
    /// min / max counts.
    pub edges: Vec<f64>,
    pub assignment: HashMap<UserId, usize>,
    pub group_sizes: Vec<u64>,
    /// All users share one count; only one bin is occupied.
    pub degenerate: bool,
}

impl Grouping {
    pub fn n_groups(&self) -> usize {
        self.group_sizes.len()
    }

    pub fn group_of(&self, user: UserId) -> Option<usize> {
        self.assignment.get(&user).copied()
    }
}

/// Partition users into `n_groups` bins with geometrically (log scale) or
/// evenly (linear scale) spaced edges between the min and max count.
pub fn group_users(counts: &[(UserId, u64)], spec: &UserGroupSpec) -> Result<Grouping> {
    if spec.n_groups < 2 {
        return Err(Error::Config("n_groups must be >= 2".into()));
    }
    if counts.is_empty() {
        return Err(Error::Degenerate("cannot group an empty cohort".into()));
    }
    if counts.iter().any(|&(_, c)| c == 0) {
        return Err(Error::Config(
            "every cohort user must have count >= 1".into(),
        ));
    }
    let min = counts.iter().map(|&(_, c)| c).min().unwrap() as f64;
    let max = counts.iter().map(|&(_, c)| c).max().unwrap() as f64;
    let n = spec.n_groups;
    let degenerate = min == max;
    let mut edges = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let frac = j as f64 / n as f64;
        let e = match spec.scale {
            Scale::Log => (min.ln() + frac * (max.ln() - min.ln())).exp(),
            Scale::Linear => min + frac * (max - min),
        };
        edges.push(e);
    }
    // endpoints exact regardless of rounding in the interpolation
    edges[0] = min;
    edges[n] = max;

    let mut assignment = HashMap::with_capacity(counts.len());
    let mut group_sizes = vec![0u64; n];
    for &(user, c) in counts {
        let c = c as f64;
        // number of interior edges <= c, capped so the max lands in the
        // last bin
        let bin = edges[1..n].partition_point(|&e| e <= c).min(n - 1);
        assignment.insert(user, bin);
        group_sizes[bin] += 1;
    }
    Ok(Grouping {
        edges,
        assignment,
        group_sizes,
        degenerate,
    })
}

/// Cached top-N popular sets at quantized query times.
///
/// The set at quantized time `q` ranks items released strictly before `q`
/// by their DecayPop score at `q`; an item first rated at the query instant
/// is not yet popular. Granularity is configurable so tests can drive it to
/// one second, where cached answers equal exact recomputation.
#[derive(Debug)]
pub struct PopularSetCache {
    granularity: i64,
    top_n: usize,
    sets: HashMap<i64, Vec<ItemId>>,
}

impl PopularSetCache {
    /// Build sets for every distinct quantized time among `query_times`.
    /// `index` must cover all interactions (descriptive use).
    pub fn build(
        index: &TemporalIndex,
        release_time: &[Timestamp],
        query_times: &[Timestamp],
        scorer: &ScorerConfig,
        granularity: i64,
        top_n: usize,
    ) -> Result<PopularSetCache> {
        if granularity <= 0 {
            return Err(Error::Config("cache granularity must be positive".into()));
        }
        if top_n == 0 {
            return Err(Error::Config("top_n must be >= 1".into()));
        }
        scorer.validate()?;
        let mut buckets: Vec<i64> = query_times
            .iter()
            .map(|&t| t.div_euclid(granularity))
            .collect();
        buckets.sort_unstable();
        buckets.dedup();
        let sets: HashMap<i64, Vec<ItemId>> = buckets
            .par_iter()
            .map(|&bucket| {
                let t = bucket * granularity;
                let candidates =
                    (0..release_time.len() as ItemId).filter(|&i| release_time[i as usize] < t);
                let mut ids: Vec<ItemId> = models::top_k(index, t, top_n, candidates, scorer)
                    .into_iter()
                    .map(|s| s.item)
                    .collect();
                ids.sort_unstable();
                (bucket, ids)
            })
            .collect();
        Ok(PopularSetCache {
            granularity,
            top_n,
            sets,
        })
    }

    pub fn granularity(&self) -> i64 {
        self.granularity
    }

    pub fn top_n(&self) -> usize {
        self.top_n
    }

    pub fn n_sets(&self) -> usize {
        self.sets.len()
    }

    /// Is `item` in the popular set at (quantized) time `t`?
    pub fn contains(&self, t: Timestamp, item: ItemId) -> bool {
        self.sets
            .get(&t.div_euclid(self.granularity))
            .map(|ids| ids.binary_search(&item).is_ok())
            .unwrap_or(false)
    }

    pub fn set_at(&self, t: Timestamp) -> Option<&[ItemId]> {
        self.sets
            .get(&t.div_euclid(self.granularity))
            .map(|v| v.as_slice())
    }
}

/// One heatmap cell: users of `group` whose share of popular ratings falls
/// in the decile `pct_bucket` (0 => [0%,10%), ..., 9 => [90%,100%]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TendencyCell {
    pub group: usize,
    pub pct_bucket: usize,
    pub user_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TendencyHeatmap {
    pub cells: Vec<TendencyCell>,
    /// Ratings that happened less than one scorer horizon after corpus
    /// start; they were evaluated against whatever history existed.
    pub ratings_before_full_horizon: u64,
}

/// For each cohort user, the fraction of their in-window ratings whose item
/// was in the concurrent popular set, bucketed into deciles per group.
pub fn tendency_heatmap(
    corpus: &Corpus,
    grouping: &Grouping,
    cache: &PopularSetCache,
    window: (Timestamp, Timestamp),
    scorer: &ScorerConfig,
) -> TendencyHeatmap {
    let mut per_user: HashMap<UserId, Vec<(Timestamp, ItemId)>> = grouping
        .assignment
        .keys()
        .map(|&u| (u, Vec::new()))
        .collect();
    let horizon_end = corpus
        .time_span()
        .map(|(t_min, _)| t_min + i64::from(scorer.horizon_months) * scorer.month_seconds)
        .unwrap_or(i64::MIN);
    let mut early = 0u64;
    for it in &corpus.interactions {
        if it.timestamp < window.0 || it.timestamp >= window.1 {
            continue;
        }
        if let Some(evs) = per_user.get_mut(&it.user) {
            evs.push((it.timestamp, it.item));
            if it.timestamp < horizon_end {
                early += 1;
            }
        }
    }
    let n_groups = grouping.n_groups();
    let band_counts: Vec<Vec<u64>> = per_user
        .par_iter()
        .map(|(&user, evs)| {
            let mut local = vec![vec![0u64; 10]; n_groups];
            if evs.is_empty() {
                return local;
            }
            let hits = evs
                .iter()
                .filter(|&&(t, item)| cache.contains(t, item))
                .count();
            let pct = 100.0 * hits as f64 / evs.len() as f64;
            let band = ((pct / 10.0).floor() as usize).min(9);
            let group = grouping.group_of(user).expect("cohort user is grouped");
            local[group][band] += 1;
            local
        })
        .reduce(
            || vec![vec![0u64; 10]; n_groups],
            |mut a, b| {
                for (ga, gb) in a.iter_mut().zip(b) {
                    for (ca, cb) in ga.iter_mut().zip(gb) {
                        *ca += cb;
                    }
                }
                a
            },
        );
    let mut cells = Vec::with_capacity(n_groups * 10);
    for (group, bands) in band_counts.iter().enumerate() {
        for (pct_bucket, &user_count) in bands.iter().enumerate() {
            cells.push(TendencyCell {
                group,
                pct_bucket,
                user_count,
            });
        }
    }
    TendencyHeatmap {
        cells,
        ratings_before_full_horizon: early,
    }
}

/// Chance of hitting one of `n` popular items by picking uniformly among
/// the items released by `window_start`.
pub fn chance_baseline(corpus: &Corpus, window_start: Timestamp, n: usize) -> Result<f64> {
    if n < 1 {
        return Err(Error::Config("n must be >= 1".into()));
    }
    let released = corpus
        .release_times()
        .iter()
        .filter(|&&t| t <= window_start)
        .count();
    if released == 0 {
        return Err(Error::Degenerate(format!(
            "no item released by {window_start}"
        )));
    }
    Ok(n as f64 / released as f64)
}

#[derive(Debug)]
pub struct PerGroupEval {
    /// Metrics over all grouped test instances.
    pub overall: EvalReport,
    /// One report per group, in group order; empty groups keep zero metrics.
    pub groups: Vec<EvalReport>,
}

/// Evaluate on the split's test instances restricted to grouped users, then
/// slice the per-instance records by group.
pub fn per_group_eval(
    split: &Split,
    index: &TemporalIndex,
    ctx: &CandidateContext,
    cfg: &EvalConfig,
    grouping: &Grouping,
) -> Result<PerGroupEval> {
    cfg.validate()?;
    if index.total_interactions() != split.train.len() {
        return Err(Error::Leakage(format!(
            "index holds {} interactions but the training set has {}",
            index.total_interactions(),
            split.train.len()
        )));
    }
    let instances: Vec<_> = split
        .test
        .iter()
        .filter(|e| grouping.group_of(e.user).is_some())
        .copied()
        .collect();
    let records = eval::evaluate_instances(index, ctx, cfg, &instances);
    let manifest = crate::splits::SplitManifest::of(split);
    let mut per_group: Vec<Vec<eval::EvalRecord>> = vec![Vec::new(); grouping.n_groups()];
    for rec in &records {
        let g = grouping
            .group_of(rec.instance.user)
            .expect("instances were filtered to grouped users");
        per_group[g].push(*rec);
    }
    let overall = eval::aggregate(records, cfg, manifest.clone());
    let groups = per_group
        .into_iter()
        .map(|records| eval::aggregate(records, cfg, manifest.clone()))
        .collect();
    Ok(PerGroupEval { overall, groups })
}

/// One day of the release / last-interaction series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DailyCount {
    /// UTC day start, seconds since epoch.
    pub day_start: Timestamp,
    /// Items whose release time falls on this day.
    pub releases: u64,
    /// Test instances whose t0 falls on this day.
    pub last_interactions: u64,
}

impl DailyCount {
    /// "YYYY-MM-DD" for the CSV output.
    pub fn date(&self) -> String {
        chrono::DateTime::from_timestamp(self.day_start, 0)
            .map(|dt| dt.date_naive().to_string())
            .unwrap_or_else(|| self.day_start.to_string())
    }
}

/// Per-UTC-day counts of item releases and of test-instance query times,
/// over every day of the corpus span (zero rows included).
pub fn daily_curves(corpus: &Corpus, split: &Split) -> Vec<DailyCount> {
    let Some((t_min, t_max)) = corpus.time_span() else {
        return Vec::new();
    };
    let first_day = t_min.div_euclid(SECONDS_PER_DAY);
    let last_day = t_max.div_euclid(SECONDS_PER_DAY);
    let n_days = (last_day - first_day + 1) as usize;
    let mut releases = vec![0u64; n_days];
    for &t in corpus.release_times() {
        releases[(t.div_euclid(SECONDS_PER_DAY) - first_day) as usize] += 1;
    }
    let mut last_interactions = vec![0u64; n_days];
    for e in &split.test {
        let day = e.t0.div_euclid(SECONDS_PER_DAY);
        if (first_day..=last_day).contains(&day) {
            last_interactions[(day - first_day) as usize] += 1;
        }
    }
    (0..n_days)
        .map(|d| DailyCount {
            day_start: (first_day + d as i64) * SECONDS_PER_DAY,
            releases: releases[d],
            last_interactions: last_interactions[d],
        })
        .collect()
}
