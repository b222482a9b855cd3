//! Train/test partitioning under the three common schemes, plus the
//! evaluation-window filter.
//!
//! Every scheme preserves the partition property: train and test together
//! are exactly the corpus interactions (until `filter_eval_window` removes
//! test instances, which is the point of that operation). Randomized schemes
//! are deterministic given their seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, CorpusBuilder, Vocab};
use crate::{Error, Interaction, ItemId, Result, Timestamp, UserId};

/// One held-out interaction: the ground-truth item and the query time `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalInstance {
    pub user: UserId,
    pub item: ItemId,
    pub t0: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Scheme {
    LeaveOneOut,
    RandomHoldout { ratio: f64, seed: u64 },
    PerUserHoldout { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Interaction>,
    pub test: Vec<EvalInstance>,
    pub scheme: Scheme,
    pub eval_window: Option<(Timestamp, Timestamp)>,
    /// Users with too few interactions to contribute a test instance; all
    /// their interactions stay in train.
    pub excluded_users: u64,
    /// Test instances dropped by `filter_eval_window`.
    pub removed_by_window: u64,
}

fn check_ratio(ratio: f64) -> Result<()> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    Ok(())
}

/// `floor(ratio * n)` with a nudge for the representation error of ratios
/// like 0.7 that have no exact binary form.
fn floor_ratio(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Hold out each user's chronologically last interaction as test.
///
/// Ties at the maximum timestamp keep the larger item id as the held-out
/// instance. Users with a single interaction are excluded from test (their
/// interaction stays in train) and counted.
pub fn leave_one_out(corpus: &Corpus) -> Split {
    let n_users = corpus.n_users();
    let mut counts = vec![0u64; n_users];
    // corpus order is (timestamp, user, item) ascending, so the last scan
    // hit per user is exactly the max-timestamp, max-item interaction
    let mut last = vec![usize::MAX; n_users];
    for (pos, it) in corpus.interactions.iter().enumerate() {
        counts[it.user as usize] += 1;
        last[it.user as usize] = pos;
    }
    let mut held_out = vec![false; corpus.interactions.len()];
    let mut excluded_users = 0u64;
    for u in 0..n_users {
        if counts[u] >= 2 {
            held_out[last[u]] = true;
        } else if counts[u] == 1 {
            excluded_users += 1;
        }
    }
    let mut train = Vec::with_capacity(corpus.interactions.len());
    let mut test = Vec::new();
    for (pos, it) in corpus.interactions.iter().enumerate() {
        if held_out[pos] {
            test.push(EvalInstance {
                user: it.user,
                item: it.item,
                t0: it.timestamp,
            });
        } else {
            train.push(*it);
        }
    }
    sort_test(&mut test);
    Split {
        train,
        test,
        scheme: Scheme::LeaveOneOut,
        eval_window: None,
        excluded_users,
        removed_by_window: 0,
    }
}

/// Randomly sample `floor(ratio * N)` interactions as train; the rest become
/// test instances with `t0` equal to their own timestamp.
pub fn random_holdout(corpus: &Corpus, ratio: f64, seed: u64) -> Result<Split> {
    check_ratio(ratio)?;
    let n = corpus.interactions.len();
    let n_train = floor_ratio(ratio, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut in_train = vec![false; n];
    for &pos in &order[..n_train] {
        in_train[pos] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (pos, it) in corpus.interactions.iter().enumerate() {
        if in_train[pos] {
            train.push(*it);
        } else {
            test.push(EvalInstance {
                user: it.user,
                item: it.item,
                t0: it.timestamp,
            });
        }
    }
    sort_test(&mut test);
    Ok(Split {
        train,
        test,
        scheme: Scheme::RandomHoldout { ratio, seed },
        eval_window: None,
        excluded_users: 0,
        removed_by_window: 0,
    })
}

/// Per user, the earliest `floor(ratio * n)` interactions (by timestamp,
/// ties by item id) go to train, the rest to test. Single-interaction users
/// keep their interaction in train and are counted as excluded.
pub fn per_user_holdout(corpus: &Corpus, ratio: f64) -> Result<Split> {
    check_ratio(ratio)?;
    let n_users = corpus.n_users();
    // positions per user in corpus order, which is already (timestamp, item)
    // ascending within a user
    let mut per_user: Vec<Vec<usize>> = vec![Vec::new(); n_users];
    for (pos, it) in corpus.interactions.iter().enumerate() {
        per_user[it.user as usize].push(pos);
    }
    let mut held_out = vec![false; corpus.interactions.len()];
    let mut excluded_users = 0u64;
    for positions in &per_user {
        match positions.len() {
            0 => {}
            1 => excluded_users += 1,
            n => {
                let n_train = floor_ratio(ratio, n);
                for &pos in &positions[n_train..] {
                    held_out[pos] = true;
                }
            }
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (pos, it) in corpus.interactions.iter().enumerate() {
        if held_out[pos] {
            test.push(EvalInstance {
                user: it.user,
                item: it.item,
                t0: it.timestamp,
            });
        } else {
            train.push(*it);
        }
    }
    sort_test(&mut test);
    Ok(Split {
        train,
        test,
        scheme: Scheme::PerUserHoldout { ratio },
        eval_window: None,
        excluded_users,
        removed_by_window: 0,
    })
}

fn sort_test(test: &mut [EvalInstance]) {
    test.sort_unstable_by_key(|e| (e.t0, e.user, e.item));
}

/// Retain only test instances with `start <= t0 < end`. Train is untouched.
pub fn filter_eval_window(mut split: Split, window: (Timestamp, Timestamp)) -> Result<Split> {
    let (start, end) = window;
    if start >= end {
        return Err(Error::Config(format!(
            "eval window start {start} must be < end {end}"
        )));
    }
    let before = split.test.len();
    split.test.retain(|e| e.t0 >= start && e.t0 < end);
    split.removed_by_window += (before - split.test.len()) as u64;
    split.eval_window = Some(window);
    if split.test.is_empty() {
        return Err(Error::Degenerate(format!(
            "no test instances fall inside eval window [{start}, {end})"
        )));
    }
    Ok(split)
}

/// Split manifest persisted next to the train/test CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub scheme: Scheme,
    pub eval_window: Option<(Timestamp, Timestamp)>,
    pub n_train: u64,
    pub n_test: u64,
    pub excluded_users: u64,
    pub removed_by_window: u64,
}

impl SplitManifest {
    pub fn of(split: &Split) -> SplitManifest {
        SplitManifest {
            scheme: split.scheme,
            eval_window: split.eval_window,
            n_train: split.train.len() as u64,
            n_test: split.test.len() as u64,
            excluded_users: split.excluded_users,
            removed_by_window: split.removed_by_window,
        }
    }
}

/// Write `train.csv`, `test.csv` and `split.json` into `dir`.
///
/// Both CSVs carry external ids so a split directory is self-contained.
pub fn write_split(dir: &Path, corpus: &Corpus, split: &Split) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut train = BufWriter::new(fs::File::create(dir.join("train.csv"))?);
    writeln!(train, "userId,movieId,rating,timestamp")?;
    for it in &split.train {
        let rating = it.rating.map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            train,
            "{},{},{},{}",
            corpus.users.external(it.user),
            corpus.items.external(it.item),
            rating,
            it.timestamp
        )?;
    }
    train.flush()?;

    let mut test = BufWriter::new(fs::File::create(dir.join("test.csv"))?);
    writeln!(test, "userId,movieId,t0")?;
    for e in &split.test {
        writeln!(
            test,
            "{},{},{}",
            corpus.users.external(e.user),
            corpus.items.external(e.item),
            e.t0
        )?;
    }
    test.flush()?;

    let manifest = SplitManifest::of(split);
    fs::write(
        dir.join("split.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// A split re-read from disk, with vocabularies rebuilt over the union of
/// train and test ids so the full catalog is recoverable.
#[derive(Debug)]
pub struct LoadedSplit {
    pub split: Split,
    pub users: Vocab,
    pub items: Vocab,
    /// Earliest timestamp observed per item across train and test.
    pub release_time: Vec<Timestamp>,
    pub manifest: SplitManifest,
}

/// Load a split directory written by [`write_split`].
pub fn load_split(dir: &Path) -> Result<LoadedSplit> {
    let manifest: SplitManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("split.json"))?)?;

    // Vocabularies are rebuilt over the union of both files so test-only
    // users and items stay in the catalog.
    let mut builder = CorpusBuilder::new();
    let raw_test = read_test_csv(&dir.join("test.csv"))?;
    for (user, item, t0) in &raw_test {
        builder.push(user, item, *t0, None);
    }
    let n_test_rows = raw_test.len();
    let train_rows = read_train_csv(&dir.join("train.csv"))?;
    for (user, item, ts, rating) in &train_rows {
        builder.push(user, item, *ts, *rating);
    }
    let (merged, _dups) = builder.finish();

    // Split merged interactions back apart is fragile; instead re-map the raw
    // rows through the merged vocabularies directly.
    let mut train: Vec<Interaction> = train_rows
        .iter()
        .map(|(user, item, ts, rating)| Interaction {
            user: merged.users.get(user).expect("train user interned"),
            item: merged.items.get(item).expect("train item interned"),
            timestamp: *ts,
            rating: *rating,
        })
        .collect();
    train.sort_unstable_by_key(|it| (it.timestamp, it.user, it.item));
    let mut test: Vec<EvalInstance> = raw_test
        .iter()
        .map(|(user, item, t0)| EvalInstance {
            user: merged.users.get(user).expect("test user interned"),
            item: merged.items.get(item).expect("test item interned"),
            t0: *t0,
        })
        .collect();
    sort_test(&mut test);

    let mut release_time = vec![Timestamp::MAX; merged.items.len()];
    for it in &train {
        let slot = &mut release_time[it.item as usize];
        *slot = (*slot).min(it.timestamp);
    }
    for e in &test {
        let slot = &mut release_time[e.item as usize];
        *slot = (*slot).min(e.t0);
    }

    if train.len() as u64 != manifest.n_train || n_test_rows as u64 != manifest.n_test {
        return Err(Error::Config(format!(
            "split manifest counts (train {}, test {}) disagree with files (train {}, test {})",
            manifest.n_train,
            manifest.n_test,
            train.len(),
            n_test_rows
        )));
    }

    Ok(LoadedSplit {
        split: Split {
            train,
            test,
            scheme: manifest.scheme,
            eval_window: manifest.eval_window,
            excluded_users: manifest.excluded_users,
            removed_by_window: manifest.removed_by_window,
        },
        users: merged.users,
        items: merged.items,
        release_time,
        manifest,
    })
}

type TrainRow = (String, String, Timestamp, Option<f32>);

fn read_train_csv(path: &Path) -> Result<Vec<TrainRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::Row {
                line,
                msg: format!("missing field {i}"),
            })
        };
        let rating = match field(2)? {
            "" => None,
            raw => Some(raw.parse().map_err(|_| Error::Row {
                line,
                msg: format!("bad rating {raw:?}"),
            })?),
        };
        rows.push((
            field(0)?.to_string(),
            field(1)?.to_string(),
            field(3)?.parse().map_err(|_| Error::Row {
                line,
                msg: "bad timestamp".into(),
            })?,
            rating,
        ));
    }
    Ok(rows)
}

fn read_test_csv(path: &Path) -> Result<Vec<(String, String, Timestamp)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Row {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::Row {
                line,
                msg: format!("missing field {i}"),
            })
        };
        rows.push((
            field(0)?.to_string(),
            field(1)?.to_string(),
            field(2)?.parse().map_err(|_| Error::Row {
                line,
                msg: "bad t0".into(),
            })?,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ingest, IngestOptions};
    use std::collections::BTreeMap;

    fn corpus_from(rows: &[(&str, &str, i64)]) -> Corpus {
        let mut body = String::from("userId,movieId,rating,timestamp\n");
        for (u, i, t) in rows {
            body.push_str(&format!("{u},{i},,{t}\n"));
        }
        ingest(body.as_bytes(), &IngestOptions::default())
            .unwrap()
            .0
    }

    type TripleCounts = BTreeMap<(u32, u32, i64), u64>;

    fn multiset(corpus: &Corpus, split: &Split) -> (TripleCounts, TripleCounts) {
        let mut all = BTreeMap::new();
        for it in &corpus.interactions {
            *all.entry((it.user, it.item, it.timestamp)).or_insert(0u64) += 1;
        }
        let mut joined = BTreeMap::new();
        for it in &split.train {
            *joined
                .entry((it.user, it.item, it.timestamp))
                .or_insert(0u64) += 1;
        }
        for e in &split.test {
            *joined.entry((e.user, e.item, e.t0)).or_insert(0u64) += 1;
        }
        (all, joined)
    }

    #[test]
    fn leave_one_out_holds_out_last() {
        let corpus = corpus_from(&[("1", "10", 10), ("1", "20", 20), ("1", "30", 30)]);
        let split = leave_one_out(&corpus);
        assert_eq!(split.test.len(), 1);
        let gt = split.test[0];
        assert_eq!(corpus.items.external(gt.item), "30");
        assert_eq!(gt.t0, 30);
        assert_eq!(split.train.len(), 2);
    }

    #[test]
    fn leave_one_out_tie_takes_larger_item_id() {
        let corpus = corpus_from(&[("1", "10", 50), ("1", "20", 50), ("1", "5", 10)]);
        let split = leave_one_out(&corpus);
        assert_eq!(split.test.len(), 1);
        assert_eq!(corpus.items.external(split.test[0].item), "20");
    }

    #[test]
    fn leave_one_out_excludes_singletons() {
        let corpus = corpus_from(&[("1", "10", 10), ("1", "20", 20), ("2", "10", 15)]);
        let split = leave_one_out(&corpus);
        assert_eq!(split.excluded_users, 1);
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.train.len(), 2); // user 2's single interaction stays
        let (all, joined) = multiset(&corpus, &split);
        assert_eq!(all, joined);
    }

    #[test]
    fn leave_one_out_matches_per_user_max_oracle() {
        let mut rows = Vec::new();
        for u in 0..50u32 {
            for k in 0..(1 + (u * 7) % 9) {
                rows.push((
                    u,
                    (u * 13 + k * 5) % 30,
                    1 + ((u * 31 + k * 17) % 100) as i64,
                ));
            }
        }
        let strings: Vec<(String, String, i64)> = rows
            .iter()
            .map(|&(u, i, t)| (u.to_string(), i.to_string(), t))
            .collect();
        let refs: Vec<(&str, &str, i64)> = strings
            .iter()
            .map(|(u, i, t)| (u.as_str(), i.as_str(), *t))
            .collect();
        let corpus = corpus_from(&refs);
        let split = leave_one_out(&corpus);

        // oracle: per user, max (timestamp, item)
        let mut expected: BTreeMap<u32, (i64, u32)> = BTreeMap::new();
        let mut counts: BTreeMap<u32, u64> = BTreeMap::new();
        for it in &corpus.interactions {
            *counts.entry(it.user).or_insert(0) += 1;
            let e = expected.entry(it.user).or_insert((i64::MIN, 0));
            if (it.timestamp, it.item) > *e {
                *e = (it.timestamp, it.item);
            }
        }
        let eligible: BTreeMap<u32, (i64, u32)> = expected
            .into_iter()
            .filter(|(u, _)| counts[u] >= 2)
            .collect();
        assert_eq!(split.test.len(), eligible.len());
        for e in &split.test {
            assert_eq!(eligible[&e.user], (e.t0, e.item));
        }
        // every user's max train timestamp <= test t0
        for it in &split.train {
            if let Some(&(t0, _)) = eligible.get(&it.user) {
                assert!(it.timestamp <= t0);
            }
        }
        let (all, joined) = multiset(&corpus, &split);
        assert_eq!(all, joined);
    }

    #[test]
    fn random_holdout_sizes_and_determinism() {
        let rows: Vec<(String, String, i64)> = (0..10)
            .map(|k| (format!("{}", k % 3), format!("{}", k % 4), 10 + k as i64))
            .collect();
        let refs: Vec<(&str, &str, i64)> = rows
            .iter()
            .map(|(u, i, t)| (u.as_str(), i.as_str(), *t))
            .collect();
        let corpus = corpus_from(&refs);
        let a = random_holdout(&corpus, 0.8, 42).unwrap();
        assert_eq!(a.train.len(), 8);
        assert_eq!(a.test.len(), 2);
        let b = random_holdout(&corpus, 0.8, 42).unwrap();
        assert_eq!(a, b);
        let (all, joined) = multiset(&corpus, &a);
        assert_eq!(all, joined);
    }

    #[test]
    fn per_user_holdout_takes_latest() {
        let corpus = corpus_from(&[
            ("1", "10", 10),
            ("1", "20", 20),
            ("1", "30", 30),
            ("1", "40", 40),
            ("1", "50", 50),
        ]);
        let split = per_user_holdout(&corpus, 0.8).unwrap();
        assert_eq!(split.train.len(), 4);
        assert_eq!(split.test.len(), 1);
        assert_eq!(split.test[0].t0, 50);
    }

    #[test]
    fn per_user_holdout_exact_ratio() {
        // 0.7 * 10 must give exactly 7 despite binary representation error
        let rows: Vec<(String, String, i64)> = (0..10)
            .map(|k| ("1".to_string(), format!("{k}"), 10 + k as i64))
            .collect();
        let refs: Vec<(&str, &str, i64)> = rows
            .iter()
            .map(|(u, i, t)| (u.as_str(), i.as_str(), *t))
            .collect();
        let corpus = corpus_from(&refs);
        let split = per_user_holdout(&corpus, 0.7).unwrap();
        assert_eq!(split.train.len(), 7);
        assert_eq!(split.test.len(), 3);
    }

    #[test]
    fn per_user_holdout_matches_sort_oracle() {
        let mut rows = Vec::new();
        for u in 0..20u32 {
            for k in 0..(2 + (u % 7)) {
                rows.push((
                    u.to_string(),
                    ((u + k * 3) % 15).to_string(),
                    1 + ((u * 11 + k * 23) % 60) as i64,
                ));
            }
        }
        let refs: Vec<(&str, &str, i64)> = rows
            .iter()
            .map(|(u, i, t)| (u.as_str(), i.as_str(), *t))
            .collect();
        let corpus = corpus_from(&refs);
        let split = per_user_holdout(&corpus, 0.8).unwrap();
        // oracle: sort each user's interactions, earliest floor(0.8 n) in train
        let mut per_user: BTreeMap<u32, Vec<(i64, u32)>> = BTreeMap::new();
        for it in &corpus.interactions {
            per_user
                .entry(it.user)
                .or_default()
                .push((it.timestamp, it.item));
        }
        let mut expected_test: Vec<(u32, u32, i64)> = Vec::new();
        for (u, mut evs) in per_user {
            evs.sort_unstable();
            let n_train = ((0.8 * evs.len() as f64) + 1e-9).floor() as usize;
            for &(t, i) in &evs[n_train..] {
                expected_test.push((u, i, t));
            }
        }
        let mut got: Vec<(u32, u32, i64)> =
            split.test.iter().map(|e| (e.user, e.item, e.t0)).collect();
        got.sort_unstable();
        expected_test.sort_unstable();
        assert_eq!(got, expected_test);
        let (all, joined) = multiset(&corpus, &split);
        assert_eq!(all, joined);
    }

    #[test]
    fn filter_window_keeps_inside() {
        let corpus = corpus_from(&[
            ("1", "10", 10),
            ("1", "20", 100),
            ("2", "10", 20),
            ("2", "20", 200),
        ]);
        let split = leave_one_out(&corpus);
        assert_eq!(split.test.len(), 2);
        let filtered = filter_eval_window(split, (150, 300)).unwrap();
        assert_eq!(filtered.test.len(), 1);
        assert_eq!(filtered.removed_by_window, 1);
        assert_eq!(filtered.test[0].t0, 200);
        assert_eq!(filtered.train.len(), 2);
    }

    #[test]
    fn filter_window_identity_when_covering() {
        let corpus = corpus_from(&[
            ("1", "10", 10),
            ("1", "20", 100),
            ("2", "10", 20),
            ("2", "30", 99),
        ]);
        let split = leave_one_out(&corpus);
        let n = split.test.len();
        let filtered = filter_eval_window(split, (1, 1_000)).unwrap();
        assert_eq!(filtered.test.len(), n);
        assert_eq!(filtered.removed_by_window, 0);
    }

    #[test]
    fn filter_window_before_all_data_errors() {
        let corpus = corpus_from(&[("1", "10", 100), ("1", "20", 200)]);
        let split = leave_one_out(&corpus);
        match filter_eval_window(split, (1, 50)) {
            Err(Error::Degenerate(_)) => {}
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn split_round_trips_through_disk() {
        let corpus = corpus_from(&[
            ("1", "10", 10),
            ("1", "20", 20),
            ("2", "10", 15),
            ("2", "30", 25),
            ("3", "40", 5),
            ("3", "10", 30),
        ]);
        let split = leave_one_out(&corpus);
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), &corpus, &split).unwrap();
        let loaded = load_split(dir.path()).unwrap();
        assert_eq!(loaded.split.train.len(), split.train.len());
        assert_eq!(loaded.split.test.len(), split.test.len());
        assert_eq!(loaded.manifest.scheme, Scheme::LeaveOneOut);
        // external ids agree
        for (a, b) in split.test.iter().zip(loaded.split.test.iter()) {
            assert_eq!(corpus.users.external(a.user), loaded.users.external(b.user));
            assert_eq!(corpus.items.external(a.item), loaded.items.external(b.item));
            assert_eq!(a.t0, b.t0);
        }
        // release times: min over train+test per item
        let item10 = loaded.items.get("10").unwrap();
        assert_eq!(loaded.release_time[item10 as usize], 10);
    }
}
