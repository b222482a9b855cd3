//! Seeded synthetic interaction corpora with controllable popularity drift.
//!
//! Time is divided into `epochs` equal slices; within each slice item choice
//! follows a geometric preference over a freshly shuffled item order, so the
//! popular set rotates from epoch to epoch. With `regime_sharpness = 0` item
//! choice is uniform and time-stationary. The generator exists to make
//! properties testable, not to clone any real dataset.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, CorpusBuilder};
use crate::{Error, Result, Timestamp};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_users: u32,
    pub n_items: u32,
    /// First generated timestamp.
    pub start_time: Timestamp,
    /// Length of the generated time range in seconds.
    pub span: i64,
    /// Number of popularity regimes.
    pub epochs: u32,
    /// How concentrated each epoch's popular set is: the item at shuffled
    /// rank r is drawn with weight `e^{-sharpness * r}`. 0 means uniform.
    pub regime_sharpness: f64,
    /// Minimum interactions per user (mirrors the MovieLens floor of 20).
    pub activity_floor: u32,
    /// Pareto tail exponent of the per-user interaction-count law.
    pub activity_exponent: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 1_000,
            n_items: 200,
            start_time: 1_000_000_000,
            span: 6 * 30 * 86_400,
            epochs: 3,
            regime_sharpness: 0.0,
            activity_floor: 20,
            activity_exponent: 2.5,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 {
            return Err(Error::Config("n_users and n_items must be positive".into()));
        }
        if self.span <= 0 || self.start_time <= 0 {
            return Err(Error::Config("span and start_time must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.regime_sharpness < 0.0 || !self.regime_sharpness.is_finite() {
            return Err(Error::Config("regime_sharpness must be >= 0".into()));
        }
        if self.activity_floor == 0 {
            return Err(Error::Config("activity_floor must be >= 1".into()));
        }
        if self.activity_exponent <= 1.0 {
            return Err(Error::Config("activity_exponent must be > 1".into()));
        }
        Ok(())
    }
}

/// One epoch's item preference: a shuffled order plus the cumulative weight
/// table `e^{-s * rank}` for inverse-CDF sampling.
struct Regime {
    order: Vec<u32>,
    cumulative: Vec<f64>,
}

impl Regime {
    fn new(n_items: u32, sharpness: f64, rng: &mut ChaCha8Rng) -> Regime {
        let mut order: Vec<u32> = (1..=n_items).collect();
        order.shuffle(rng);
        let mut cumulative = Vec::with_capacity(n_items as usize);
        let mut acc = 0.0;
        for rank in 0..n_items {
            acc += (-sharpness * rank as f64).exp();
            cumulative.push(acc);
        }
        Regime { order, cumulative }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> u32 {
        let total = *self.cumulative.last().expect("non-empty catalog");
        let x: f64 = rng.random_range(0.0..total);
        let rank = self.cumulative.partition_point(|&c| c <= x);
        self.order[rank.min(self.order.len() - 1)]
    }
}

/// Generate a corpus. Deterministic given the config (including seed).
pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let regimes: Vec<Regime> = (0..cfg.epochs)
        .map(|_| Regime::new(cfg.n_items, cfg.regime_sharpness, &mut rng))
        .collect();
    let epoch_of = |t: Timestamp| -> usize {
        let offset = (t - cfg.start_time).clamp(0, cfg.span - 1);
        ((offset as u128 * cfg.epochs as u128) / cfg.span as u128) as usize
    };

    let max_activity = cfg
        .activity_floor
        .saturating_mul(500)
        .max(cfg.activity_floor);
    let mut builder = CorpusBuilder::new();
    for user in 1..=cfg.n_users {
        // Pareto-tailed activity with a hard floor
        let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let raw = cfg.activity_floor as f64 * u.powf(-1.0 / (cfg.activity_exponent - 1.0));
        let n_interactions = (raw.floor() as u32).clamp(cfg.activity_floor, max_activity);

        // active span: two uniform draws, widened to at least 1% of the range
        // so a user's interactions never collapse onto one instant
        let a = rng.random_range(0..cfg.span);
        let b = rng.random_range(0..cfg.span);
        let (mut lo, mut hi) = (a.min(b), a.max(b));
        let min_width = (cfg.span / 100).max(1);
        if hi - lo < min_width {
            hi = (lo + min_width).min(cfg.span - 1);
            lo = hi - min_width;
        }

        let user_id = user.to_string();
        for _ in 0..n_interactions {
            let t = cfg.start_time + rng.random_range(lo..=hi);
            let item = regimes[epoch_of(t)].draw(&mut rng);
            let rating = (rng.random_range(1..=10) as f32) * 0.5;
            builder.push(&user_id, &item.to_string(), t, Some(rating));
        }
    }
    let (corpus, _duplicates) = builder.finish();
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn corpus_invariants_hold() {
        let corpus = generate(&SynthConfig {
            n_users: 100,
            n_items: 30,
            epochs: 4,
            regime_sharpness: 0.3,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(corpus.interactions.windows(2).all(
            |w| (w[0].timestamp, w[0].user, w[0].item) < (w[1].timestamp, w[1].user, w[1].item)
        ));
        for it in &corpus.interactions {
            assert!(it.timestamp > 0);
            assert!(corpus.release_times()[it.item as usize] <= it.timestamp);
        }
        // floor respected (post-dedup counts can only shrink, so allow a
        // small deficit)
        let stats = corpus.stats();
        assert!(stats.users == 100);
        assert!(*stats.interactions_per_user.keys().next().unwrap() >= 18);
    }

    #[test]
    fn stationary_when_sharpness_zero() {
        let cfg = SynthConfig {
            n_users: 300,
            n_items: 50,
            epochs: 3,
            regime_sharpness: 0.0,
            seed: 7,
            ..SynthConfig::default()
        };
        let corpus = generate(&cfg).unwrap();
        // chi-square of per-epoch item counts against the pooled expectation
        let epochs = cfg.epochs as usize;
        let n_items = cfg.n_items as usize;
        let mut counts = vec![vec![0f64; n_items]; epochs];
        let mut epoch_totals = vec![0f64; epochs];
        let mut item_totals = vec![0f64; n_items];
        let mut total = 0f64;
        for it in &corpus.interactions {
            let offset = it.timestamp - cfg.start_time;
            let e = ((offset as u128 * cfg.epochs as u128) / cfg.span as u128) as usize;
            let e = e.min(epochs - 1);
            counts[e][it.item as usize] += 1.0;
            epoch_totals[e] += 1.0;
            item_totals[it.item as usize] += 1.0;
            total += 1.0;
        }
        let mut chi2 = 0.0;
        for e in 0..epochs {
            for i in 0..n_items {
                let expected = epoch_totals[e] * item_totals[i] / total;
                if expected > 0.0 {
                    let d = counts[e][i] - expected;
                    chi2 += d * d / expected;
                }
            }
        }
        // df = (3-1)(50-1) = 98; mean 98, sd ~14. Very loose bound.
        assert!(chi2 < 98.0 + 6.0 * 14.0, "chi2 = {chi2}");
    }

    #[test]
    fn high_sharpness_rotates_top_item() {
        let cfg = SynthConfig {
            n_users: 400,
            n_items: 60,
            epochs: 3,
            regime_sharpness: 0.5,
            seed: 3,
            ..SynthConfig::default()
        };
        let corpus = generate(&cfg).unwrap();
        let mut top = Vec::new();
        for e in 0..3usize {
            let lo = cfg.start_time + (cfg.span * e as i64) / 3;
            let hi = cfg.start_time + (cfg.span * (e as i64 + 1)) / 3;
            let mut counts = vec![0u64; cfg.n_items as usize + 1];
            for it in &corpus.interactions {
                if it.timestamp >= lo && it.timestamp < hi {
                    counts[it.item as usize] += 1;
                }
            }
            let best = counts
                .iter()
                .enumerate()
                .max_by_key(|&(i, &c)| (c, std::cmp::Reverse(i)))
                .unwrap()
                .0;
            top.push(best);
        }
        assert!(
            top[0] != top[1] || top[1] != top[2],
            "top item never rotated: {top:?}"
        );
    }

    #[test]
    fn csv_round_trip() {
        use crate::corpus::{ingest, IngestOptions};
        let corpus = generate(&SynthConfig {
            n_users: 50,
            n_items: 20,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        corpus.write_csv(&mut buf).unwrap();
        let (again, report) = ingest(buf.as_slice(), &IngestOptions::default()).unwrap();
        assert_eq!(report.duplicates_dropped, 0);
        assert_eq!(corpus, again);
    }
}
