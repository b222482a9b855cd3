//! The three popularity scorers behind one uniform interface:
//! `score(index, item, t0, cfg) -> f64`.
//!
//! All scorers are pure functions over an immutable [`TemporalIndex`] and can
//! run arbitrarily parallel. Query time `t0` is passed explicitly so the same
//! machinery serves evaluation (`t0` = test timestamp) and analysis (`t0` =
//! each rating's timestamp).

use serde::{Deserialize, Serialize};

use crate::index::{TemporalIndex, Window};
use crate::{Error, ItemId, Result, Timestamp};

/// 30-day month. Calendar months would make bucket widths data-dependent.
pub const MONTH_SECONDS: i64 = 2_592_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    MostPop,
    RecentPop,
    DecayPop,
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScorerKind::MostPop => write!(f, "most_pop"),
            ScorerKind::RecentPop => write!(f, "recent_pop"),
            ScorerKind::DecayPop => write!(f, "decay_pop"),
        }
    }
}

/// Weight function over month index `m in 1..=horizon`, `m = 1` being the
/// most recent month.
///
/// Serialized as the string `"exp"` or an explicit weight list.
#[derive(Debug, Clone, PartialEq)]
pub enum Decay {
    /// `w(m) = e^{-m}`.
    Exp,
    /// Explicit per-month weights, `weights[0]` for the most recent month.
    Weights(Vec<f64>),
}

impl Serialize for Decay {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Decay::Exp => s.serialize_str("exp"),
            Decay::Weights(w) => w.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Decay {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Tag(String),
            Weights(Vec<f64>),
        }
        match Raw::deserialize(d)? {
            Raw::Tag(t) if t == "exp" => Ok(Decay::Exp),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("unknown decay {t:?}"))),
            Raw::Weights(w) => Ok(Decay::Weights(w)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// RecentPop window length in seconds.
    pub delta_t_seconds: i64,
    /// DecayPop lookback in months.
    pub horizon_months: u32,
    pub month_seconds: i64,
    pub decay: Decay,
}

impl ScorerConfig {
    pub fn most_pop() -> ScorerConfig {
        ScorerConfig {
            kind: ScorerKind::MostPop,
            ..ScorerConfig::default()
        }
    }

    pub fn recent_pop() -> ScorerConfig {
        ScorerConfig {
            kind: ScorerKind::RecentPop,
            ..ScorerConfig::default()
        }
    }

    pub fn decay_pop() -> ScorerConfig {
        ScorerConfig {
            kind: ScorerKind::DecayPop,
            ..ScorerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta_t_seconds <= 0 {
            return Err(Error::Config(format!(
                "delta_t_seconds must be positive, got {}",
                self.delta_t_seconds
            )));
        }
        if self.horizon_months < 1 {
            return Err(Error::Config("horizon_months must be >= 1".into()));
        }
        if self.month_seconds <= 0 {
            return Err(Error::Config(format!(
                "month_seconds must be positive, got {}",
                self.month_seconds
            )));
        }
        if let Decay::Weights(w) = &self.decay {
            if w.len() != self.horizon_months as usize {
                return Err(Error::Config(format!(
                    "decay weights length {} != horizon_months {}",
                    w.len(),
                    self.horizon_months
                )));
            }
            if w.iter().any(|&x| x <= 0.0 || !x.is_finite()) {
                return Err(Error::Config(
                    "decay weights must be strictly positive".into(),
                ));
            }
            if w.windows(2).any(|p| p[1] > p[0]) {
                return Err(Error::Config("decay weights must be non-increasing".into()));
            }
        }
        Ok(())
    }

    /// Weight of month index `m in 1..=horizon_months`.
    pub fn weight(&self, m: u32) -> f64 {
        match &self.decay {
            Decay::Exp => (-(m as f64)).exp(),
            Decay::Weights(w) => w[(m - 1) as usize],
        }
    }

    /// Weight table for months `1..=horizon_months`, hoisted out of scoring
    /// loops.
    pub fn month_weights(&self) -> Vec<f64> {
        (1..=self.horizon_months).map(|m| self.weight(m)).collect()
    }
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            kind: ScorerKind::MostPop,
            delta_t_seconds: MONTH_SECONDS,
            horizon_months: 6,
            month_seconds: MONTH_SECONDS,
            decay: Decay::Exp,
        }
    }
}

/// Number of interactions in the entire training set; independent of `t0`.
pub fn most_pop_score(index: &TemporalIndex, item: ItemId) -> f64 {
    index.total_count(item) as f64
}

/// Number of interactions in the trailing window `[t0 - dt, t0)`.
pub fn recent_pop_score(
    index: &TemporalIndex,
    item: ItemId,
    t0: Timestamp,
    cfg: &ScorerConfig,
) -> f64 {
    index.count_in(item, Window::new(t0 - cfg.delta_t_seconds, t0)) as f64
}

/// Weighted sum of monthly interaction counts over the lookback horizon:
/// `sum over m of w(m) * count([t0 - m*month, t0 - (m-1)*month))`.
///
/// The weight is constant within each monthly bucket.
pub fn decay_pop_score(
    index: &TemporalIndex,
    item: ItemId,
    t0: Timestamp,
    cfg: &ScorerConfig,
) -> f64 {
    decay_score_weighted(index, item, t0, cfg.month_seconds, &cfg.month_weights())
}

/// DecayPop with a precomputed weight table (`weights[0]` is the most recent
/// month). This is the hot path behind ranking loops.
pub fn decay_score_weighted(
    index: &TemporalIndex,
    item: ItemId,
    t0: Timestamp,
    month_seconds: i64,
    weights: &[f64],
) -> f64 {
    let ts = index.item_times(item);
    let mut score = 0.0;
    // Month buckets share boundaries, so each bound is searched once,
    // within the shrinking prefix below the previous bound.
    let mut hi = ts.partition_point(|&t| t < t0);
    for (i, &w) in weights.iter().enumerate() {
        if hi == 0 {
            break;
        }
        let start = t0 - (i as i64 + 1) * month_seconds;
        let lo = ts[..hi].partition_point(|&t| t < start);
        score += w * (hi - lo) as f64;
        hi = lo;
    }
    score
}

/// Dispatch on the configured scorer kind.
pub fn score(index: &TemporalIndex, item: ItemId, t0: Timestamp, cfg: &ScorerConfig) -> f64 {
    match cfg.kind {
        ScorerKind::MostPop => most_pop_score(index, item),
        ScorerKind::RecentPop => recent_pop_score(index, item, t0, cfg),
        ScorerKind::DecayPop => decay_pop_score(index, item, t0, cfg),
    }
}

/// A scorer with its derived tables resolved once, for tight ranking loops.
/// Produces bit-identical scores to [`score`].
pub struct PreparedScorer<'a> {
    index: &'a TemporalIndex,
    cfg: &'a ScorerConfig,
    month_weights: Vec<f64>,
}

impl<'a> PreparedScorer<'a> {
    pub fn new(index: &'a TemporalIndex, cfg: &'a ScorerConfig) -> PreparedScorer<'a> {
        PreparedScorer {
            index,
            cfg,
            month_weights: cfg.month_weights(),
        }
    }

    pub fn score(&self, item: ItemId, t0: Timestamp) -> f64 {
        match self.cfg.kind {
            ScorerKind::MostPop => most_pop_score(self.index, item),
            ScorerKind::RecentPop => recent_pop_score(self.index, item, t0, self.cfg),
            ScorerKind::DecayPop => decay_score_weighted(
                self.index,
                item,
                t0,
                self.cfg.month_seconds,
                &self.month_weights,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredItem {
    pub item: ItemId,
    pub score: f64,
}

/// Ranking order: score descending, ties broken by item id ascending.
pub fn rank_order(a: &ScoredItem, b: &ScoredItem) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.item.cmp(&b.item))
}

/// The `k` highest-scoring candidates, descending by score with ties broken
/// by item id ascending. Shorter than `k` iff fewer candidates exist.
pub fn top_k(
    index: &TemporalIndex,
    t0: Timestamp,
    k: usize,
    candidates: impl IntoIterator<Item = ItemId>,
    cfg: &ScorerConfig,
) -> Vec<ScoredItem> {
    assert!(k >= 1, "k must be >= 1");
    let scorer = PreparedScorer::new(index, cfg);
    let mut scored: Vec<ScoredItem> = candidates
        .into_iter()
        .map(|item| ScoredItem {
            item,
            score: scorer.score(item, t0),
        })
        .collect();
    scored.sort_unstable_by(rank_order);
    scored.truncate(k);
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Interaction;

    fn index_of(data: &[(u32, i64)], n_items: usize) -> TemporalIndex {
        let mut train: Vec<Interaction> = data
            .iter()
            .map(|&(item, timestamp)| Interaction {
                user: 0,
                item,
                timestamp,
                rating: None,
            })
            .collect();
        train.sort_by_key(|it| it.timestamp);
        TemporalIndex::build(&train, n_items)
    }

    #[test]
    fn most_pop_is_total_count() {
        let index = index_of(&[(0, 5), (0, 10), (0, 10), (0, 20)], 2);
        assert_eq!(most_pop_score(&index, 0), 4.0);
        assert_eq!(most_pop_score(&index, 1), 0.0);
        assert_eq!(most_pop_score(&index, 42), 0.0);
    }

    #[test]
    fn recent_pop_counts_trailing_window() {
        let index = index_of(&[(0, 5), (0, 50), (0, 95)], 1);
        let cfg = ScorerConfig {
            delta_t_seconds: 60,
            ..ScorerConfig::recent_pop()
        };
        assert_eq!(recent_pop_score(&index, 0, 100, &cfg), 2.0);
        let narrow = ScorerConfig {
            delta_t_seconds: 4,
            ..ScorerConfig::recent_pop()
        };
        assert_eq!(recent_pop_score(&index, 0, 100, &narrow), 0.0);
    }

    #[test]
    fn decay_pop_weights_monthly_buckets() {
        let month = MONTH_SECONDS;
        let t0 = 10 * month;
        // 10 interactions in the most recent month
        let recent: Vec<(u32, i64)> = (0..10).map(|i| (0, t0 - month + 1 + i)).collect();
        let index = index_of(&recent, 1);
        let cfg = ScorerConfig::decay_pop();
        let got = decay_pop_score(&index, 0, t0, &cfg);
        assert!((got - 10.0 * (-1.0f64).exp()).abs() < 1e-12);
        assert!((got - 3.6787944117144233).abs() < 1e-10);

        // 27 interactions in the oldest of the 6 months rank below
        let old: Vec<(u32, i64)> = (0..27).map(|i| (0, t0 - 6 * month + 1 + i)).collect();
        let index_old = index_of(&old, 1);
        let got_old = decay_pop_score(&index_old, 0, t0, &cfg);
        assert!((got_old - 27.0 * (-6.0f64).exp()).abs() < 1e-12);
        assert!((got_old - 0.066921).abs() < 1e-5);
        assert!(got_old < got);
    }

    #[test]
    fn decay_pop_outside_horizon_is_zero() {
        let month = MONTH_SECONDS;
        let t0 = 10 * month;
        let index = index_of(&[(0, t0 - 7 * month)], 1);
        assert_eq!(
            decay_pop_score(&index, 0, t0, &ScorerConfig::decay_pop()),
            0.0
        );
    }

    #[test]
    fn decay_buckets_match_explicit_windows() {
        // cross-check the shared-boundary search against count_in per bucket
        let month = MONTH_SECONDS;
        let t0 = 20 * month + 12_345;
        let events: Vec<(u32, i64)> = (0..500)
            .map(|i| (0, t0 - 7 * month + (i * 7919) % (7 * month)))
            .collect();
        let index = index_of(&events, 1);
        let cfg = ScorerConfig::decay_pop();
        let mut expected = 0.0;
        for m in 1..=cfg.horizon_months {
            let w = Window::new(t0 - i64::from(m) * month, t0 - i64::from(m - 1) * month);
            expected += cfg.weight(m) * index.count_in(0, w) as f64;
        }
        assert_eq!(decay_pop_score(&index, 0, t0, &cfg), expected);
    }

    #[test]
    fn most_pop_top_k_invariant_to_query_time() {
        let events: Vec<(u32, i64)> = (0..300)
            .map(|i| ((i % 13) as u32, 1 + (i * 6_151) % 90_000))
            .collect();
        let index = index_of(&events, 13);
        let cfg = ScorerConfig::most_pop();
        let reference = top_k(&index, 1, 13, 0..13, &cfg);
        for t0 in [50, 10_000, 90_001, 5_000_000] {
            assert_eq!(top_k(&index, t0, 13, 0..13, &cfg), reference);
        }
    }

    #[test]
    fn top_k_breaks_ties_by_item_id() {
        // counts: item 0 -> 3, item 1 -> 5, item 2 -> 5
        let mut data = vec![];
        data.extend((0..3).map(|i| (0u32, 10 + i)));
        data.extend((0..5).map(|i| (1u32, 10 + i)));
        data.extend((0..5).map(|i| (2u32, 10 + i)));
        let index = index_of(&data, 3);
        let top = top_k(&index, 100, 2, 0..3, &ScorerConfig::most_pop());
        let items: Vec<u32> = top.iter().map(|s| s.item).collect();
        assert_eq!(items, vec![1, 2]);
    }

    #[test]
    fn top_k_larger_than_catalog_returns_everything() {
        let index = index_of(&[(0, 1), (1, 2)], 2);
        let top = top_k(&index, 100, 10, 0..2, &ScorerConfig::most_pop());
        assert_eq!(top.len(), 2);
    }

    #[test]
    fn top_k_empty_candidates() {
        let index = index_of(&[(0, 1)], 1);
        let top = top_k(
            &index,
            100,
            5,
            std::iter::empty(),
            &ScorerConfig::most_pop(),
        );
        assert!(top.is_empty());
    }

    #[test]
    fn scaling_decay_weights_preserves_order() {
        let month = MONTH_SECONDS;
        let t0 = 12 * month;
        let events: Vec<(u32, i64)> = (0..200)
            .map(|i| ((i % 7) as u32, t0 - 6 * month + (i * 104_729) % (6 * month)))
            .collect();
        let index = index_of(&events, 7);
        let base = ScorerConfig::decay_pop();
        let weights: Vec<f64> = (1..=6).map(|m| base.weight(m)).collect();
        let scaled = ScorerConfig {
            decay: Decay::Weights(weights.iter().map(|w| w * 17.5).collect()),
            ..base.clone()
        };
        scaled.validate().unwrap();
        let a = top_k(&index, t0, 7, 0..7, &base);
        let b = top_k(&index, t0, 7, 0..7, &scaled);
        let items_a: Vec<u32> = a.iter().map(|s| s.item).collect();
        let items_b: Vec<u32> = b.iter().map(|s| s.item).collect();
        assert_eq!(items_a, items_b);
    }

    #[test]
    fn validate_rejects_bad_weights() {
        let mut cfg = ScorerConfig::decay_pop();
        cfg.decay = Decay::Weights(vec![1.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        assert!(cfg.validate().is_err());
        cfg.decay = Decay::Weights(vec![1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert!(cfg.validate().is_err());
        cfg.decay = Decay::Weights(vec![1.0, 0.5, 0.25]);
        assert!(cfg.validate().is_err()); // wrong length for horizon 6
    }

    #[test]
    fn scorer_config_json_round_trip() {
        let cfg = ScorerConfig::decay_pop();
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(json.contains("\"decay\":\"exp\""));
        let back: ScorerConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);

        let cfg = ScorerConfig {
            decay: Decay::Weights(vec![1.0, 0.5]),
            horizon_months: 2,
            ..ScorerConfig::decay_pop()
        };
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ScorerConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }
}
