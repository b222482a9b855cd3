//! Ingestion and normalization of timestamped interaction logs.
//!
//! A [`Corpus`] is a validated, time-sorted interaction log with interned
//! user/item vocabularies and per-item release times (the timestamp of the
//! item's first interaction). Ratings are carried through untouched but every
//! model in this crate treats the data as implicit feedback.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, ItemId, Result, Timestamp, UserId};

/// One (user, item, timestamp) event, the atomic unit of every computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub timestamp: Timestamp,
    /// Carried but unused by the models.
    pub rating: Option<f32>,
}

/// Interned vocabulary mapping external string ids to dense indices.
///
/// External ids are sorted numerically (they are validated as integers at
/// ingest), so dense indices are stable across runs and independent of the
/// order in which ids appear in the source file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    externals: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_sorted(externals: Vec<String>) -> Vocab {
        let index = externals
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Vocab { externals, index }
    }

    pub fn len(&self) -> usize {
        self.externals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.externals.is_empty()
    }

    pub fn get(&self, external: &str) -> Option<u32> {
        self.index.get(external).copied()
    }

    pub fn external(&self, idx: u32) -> &str {
        &self.externals[idx as usize]
    }
}

/// Numeric-aware id ordering: numeric ids sort by value, anything else
/// lexicographically after all numerics. Ties (e.g. "007" vs "7") fall back
/// to the string form so the order stays total.
fn id_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Validated, time-sorted interaction log.
///
/// Invariants established at construction:
/// * interactions sorted ascending by (timestamp, user, item);
/// * exact duplicate (user, item, timestamp) triples collapsed to one;
/// * `release_time[i]` is the minimum timestamp over interactions of item `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub interactions: Vec<Interaction>,
    pub users: Vocab,
    pub items: Vocab,
    release_time: Vec<Timestamp>,
    time_span: Option<(Timestamp, Timestamp)>,
}

impl Corpus {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Per-item earliest interaction timestamp, indexed by dense item id.
    pub fn release_times(&self) -> &[Timestamp] {
        &self.release_time
    }

    /// `[min, max]` timestamp over all interactions; `None` when empty.
    pub fn time_span(&self) -> Option<(Timestamp, Timestamp)> {
        self.time_span
    }

    pub fn stats(&self) -> CorpusStats {
        let mut per_user = vec![0u64; self.n_users()];
        for it in &self.interactions {
            per_user[it.user as usize] += 1;
        }
        let mut histogram = BTreeMap::new();
        for &n in &per_user {
            *histogram.entry(n).or_insert(0u64) += 1;
        }
        CorpusStats {
            users: self.n_users() as u64,
            items: self.n_items() as u64,
            interactions: self.interactions.len() as u64,
            t_min: self.time_span.map(|(a, _)| a).unwrap_or(0),
            t_max: self.time_span.map(|(_, b)| b).unwrap_or(0),
            interactions_per_user: histogram,
        }
    }

    /// Write the normalized CSV snapshot (same schema ingestion consumes).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = std::io::BufWriter::new(w);
        writeln!(out, "userId,movieId,rating,timestamp")?;
        for it in &self.interactions {
            let rating = it.rating.map(|r| r.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                self.users.external(it.user),
                self.items.external(it.item),
                rating,
                it.timestamp
            )?;
        }
        Ok(())
    }
}

/// Summary counts over a corpus. The histogram maps per-user interaction
/// count to the number of users with that count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub users: u64,
    pub items: u64,
    pub interactions: u64,
    pub t_min: Timestamp,
    pub t_max: Timestamp,
    #[serde(skip)]
    pub interactions_per_user: BTreeMap<u64, u64>,
}

/// Incremental corpus builder: interns ids on the fly, normalizes in
/// [`CorpusBuilder::finish`].
#[derive(Debug, Default)]
pub struct CorpusBuilder {
    users: InternTable,
    items: InternTable,
    rows: Vec<Interaction>,
}

#[derive(Debug, Default)]
struct InternTable {
    map: HashMap<String, u32>,
    externals: Vec<String>,
}

impl InternTable {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.map.get(id) {
            return idx;
        }
        let idx = self.externals.len() as u32;
        self.externals.push(id.to_string());
        self.map.insert(id.to_string(), idx);
        idx
    }

    /// Sort externals and return the old-index -> new-index remapping.
    fn into_sorted(mut self) -> (Vocab, Vec<u32>) {
        let mut order: Vec<u32> = (0..self.externals.len() as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            id_order(&self.externals[a as usize], &self.externals[b as usize])
        });
        let mut remap = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut sorted = vec![String::new(); order.len()];
        for (new, &old) in order.iter().enumerate() {
            sorted[new] = std::mem::take(&mut self.externals[old as usize]);
        }
        (Vocab::from_sorted(sorted), remap)
    }
}

impl CorpusBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, user: &str, item: &str, timestamp: Timestamp, rating: Option<f32>) {
        let user = self.users.intern(user);
        let item = self.items.intern(item);
        self.rows.push(Interaction {
            user,
            item,
            timestamp,
            rating,
        });
    }

    /// Normalize into a [`Corpus`]: remap ids to sorted order, sort by
    /// (timestamp, user, item), drop exact duplicate triples. Returns the
    /// corpus and the number of duplicates dropped.
    pub fn finish(self) -> (Corpus, u64) {
        let CorpusBuilder { users, items, rows } = self;
        let (users, user_remap) = users.into_sorted();
        let (items, item_remap) = items.into_sorted();
        let mut rows: Vec<Interaction> = rows
            .into_iter()
            .map(|mut it| {
                it.user = user_remap[it.user as usize];
                it.item = item_remap[it.item as usize];
                it
            })
            .collect();
        // Rating participates in the sort key only to make the surviving
        // duplicate deterministic.
        rows.sort_unstable_by_key(|it| {
            (
                it.timestamp,
                it.user,
                it.item,
                it.rating.is_some(),
                it.rating.unwrap_or(0.0).to_bits(),
            )
        });
        let before = rows.len();
        rows.dedup_by_key(|it| (it.user, it.item, it.timestamp));
        let duplicates = (before - rows.len()) as u64;

        let mut release_time = vec![Timestamp::MAX; items.len()];
        for it in &rows {
            let slot = &mut release_time[it.item as usize];
            if *slot == Timestamp::MAX {
                *slot = it.timestamp;
            }
        }
        let time_span = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => Some((a.timestamp, b.timestamp)),
            _ => None,
        };
        (
            Corpus {
                interactions: rows,
                users,
                items,
                release_time,
                time_span,
            },
            duplicates,
        )
    }
}

/// Source schema for ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    /// Published MovieLens schema: header `userId,movieId,rating,timestamp`,
    /// timestamps in integer seconds UTC.
    MovieLens,
    /// Any CSV with the named columns.
    Generic {
        user_col: String,
        item_col: String,
        timestamp_col: String,
        rating_col: Option<String>,
    },
}

impl Format {
    fn expected(&self) -> String {
        match self {
            Format::MovieLens => "userId,movieId,rating,timestamp".to_string(),
            Format::Generic {
                user_col,
                item_col,
                timestamp_col,
                rating_col,
            } => {
                let mut cols = vec![user_col.clone(), item_col.clone(), timestamp_col.clone()];
                if let Some(r) = rating_col {
                    cols.push(r.clone());
                }
                cols.join(",")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub format: Format,
    /// Skip malformed rows (counted) instead of failing on the first one.
    pub lenient: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            format: Format::MovieLens,
            lenient: false,
        }
    }
}

/// Row accounting for one ingestion run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    /// Data rows read from the source (header excluded).
    pub rows_read: u64,
    pub duplicates_dropped: u64,
    pub malformed_rows: u64,
}

struct Columns {
    user: usize,
    item: usize,
    timestamp: usize,
    rating: Option<usize>,
}

fn resolve_columns(headers: &csv::StringRecord, format: &Format) -> Result<Columns> {
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |format: &Format| Error::Header {
        expected: format.expected(),
        found: headers.iter().collect::<Vec<_>>().join(","),
    };
    match format {
        Format::MovieLens => {
            let user = find("userId").ok_or_else(|| missing(format))?;
            let item = find("movieId").ok_or_else(|| missing(format))?;
            let rating = find("rating").ok_or_else(|| missing(format))?;
            let timestamp = find("timestamp").ok_or_else(|| missing(format))?;
            Ok(Columns {
                user,
                item,
                timestamp,
                rating: Some(rating),
            })
        }
        Format::Generic {
            user_col,
            item_col,
            timestamp_col,
            rating_col,
        } => {
            let user = find(user_col).ok_or_else(|| missing(format))?;
            let item = find(item_col).ok_or_else(|| missing(format))?;
            let timestamp = find(timestamp_col).ok_or_else(|| missing(format))?;
            let rating = match rating_col {
                Some(name) => Some(find(name).ok_or_else(|| missing(format))?),
                None => None,
            };
            Ok(Columns {
                user,
                item,
                timestamp,
                rating,
            })
        }
    }
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &Columns,
    line: u64,
) -> std::result::Result<(String, String, Timestamp, Option<f32>), Error> {
    let row_err = |msg: String| Error::Row { line, msg };
    let field = |idx: usize| {
        record
            .get(idx)
            .map(str::trim)
            .ok_or_else(|| row_err(format!("missing field {}", idx)))
    };
    let user = field(cols.user)?;
    if user.parse::<u64>().is_err() {
        return Err(row_err(format!("non-numeric user id {:?}", user)));
    }
    let item = field(cols.item)?;
    if item.parse::<u64>().is_err() {
        return Err(row_err(format!("non-numeric item id {:?}", item)));
    }
    let ts_raw = field(cols.timestamp)?;
    let timestamp: Timestamp = ts_raw
        .parse()
        .map_err(|_| row_err(format!("non-numeric timestamp {:?}", ts_raw)))?;
    if timestamp <= 0 {
        return Err(row_err(format!("non-positive timestamp {}", timestamp)));
    }
    let rating = match cols.rating {
        Some(idx) => {
            let raw = field(idx)?;
            if raw.is_empty() {
                None
            } else {
                let r: f32 = raw
                    .parse()
                    .map_err(|_| row_err(format!("non-numeric rating {:?}", raw)))?;
                if !r.is_finite() {
                    return Err(row_err(format!("non-finite rating {:?}", raw)));
                }
                Some(r)
            }
        }
        None => None,
    };
    Ok((user.to_string(), item.to_string(), timestamp, rating))
}

/// Ingest a CSV byte stream into a normalized [`Corpus`].
///
/// The first line must be a header row. Malformed rows fail fast by default;
/// with `lenient` they are skipped and counted in the report.
pub fn ingest<R: Read>(reader: R, options: &IngestOptions) -> Result<(Corpus, IngestReport)> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = csv_reader
        .headers()
        .map_err(|e| Error::Header {
            expected: options.format.expected(),
            found: e.to_string(),
        })?
        .clone();
    let cols = resolve_columns(&headers, &options.format)?;

    let mut builder = CorpusBuilder::new();
    let mut report = IngestReport::default();
    let mut record = csv::StringRecord::new();
    loop {
        let more = csv_reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Row {
                line,
                msg: e.to_string(),
            }
        })?;
        if !more {
            break;
        }
        report.rows_read += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, &cols, line) {
            Ok((user, item, timestamp, rating)) => {
                builder.push(&user, &item, timestamp, rating);
            }
            Err(e) => {
                if options.lenient {
                    report.malformed_rows += 1;
                } else {
                    return Err(e);
                }
            }
        }
    }
    let (corpus, duplicates) = builder.finish();
    report.duplicates_dropped = duplicates;
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn movielens(body: &str) -> String {
        format!("userId,movieId,rating,timestamp\n{}", body)
    }

    fn ingest_str(data: &str) -> (Corpus, IngestReport) {
        ingest(data.as_bytes(), &IngestOptions::default()).unwrap()
    }

    #[test]
    fn parses_valid_rows() {
        let (corpus, report) = ingest_str(&movielens("1,10,3.5,100\n2,10,4.0,50\n1,20,1.0,70\n"));
        assert_eq!(corpus.interactions.len(), 3);
        assert_eq!(corpus.n_users(), 2);
        assert_eq!(corpus.n_items(), 2);
        assert_eq!(report.rows_read, 3);
        assert_eq!(report.duplicates_dropped, 0);
        assert_eq!(report.malformed_rows, 0);
        // sorted by (timestamp, user, item)
        let ts: Vec<_> = corpus.interactions.iter().map(|i| i.timestamp).collect();
        assert_eq!(ts, vec![50, 70, 100]);
    }

    #[test]
    fn duplicate_triples_collapse() {
        let (corpus, report) = ingest_str(&movielens("1,10,3.5,100\n1,10,3.5,100\n"));
        assert_eq!(corpus.interactions.len(), 1);
        assert_eq!(report.duplicates_dropped, 1);
    }

    #[test]
    fn duplicate_triple_with_different_rating_still_collapses() {
        let (corpus, report) = ingest_str(&movielens("1,10,3.5,100\n1,10,5.0,100\n"));
        assert_eq!(corpus.interactions.len(), 1);
        assert_eq!(report.duplicates_dropped, 1);
        // deterministic survivor: smallest rating bits
        assert_eq!(corpus.interactions[0].rating, Some(3.5));
    }

    #[test]
    fn malformed_header_is_a_format_error() {
        let err = ingest("user,movie\n1,2\n".as_bytes(), &IngestOptions::default()).unwrap_err();
        match err {
            Error::Header { expected, .. } => {
                assert_eq!(expected, "userId,movieId,rating,timestamp")
            }
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn bad_row_fails_fast_with_line_number() {
        let err = ingest(
            movielens("1,10,3.5,100\n1,oops,3.5,100\n").as_bytes(),
            &IngestOptions::default(),
        )
        .unwrap_err();
        match err {
            Error::Row { line, .. } => assert_eq!(line, 3),
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn lenient_mode_skips_and_counts() {
        let data = movielens("1,10,3.5,100\nx,10,3.5,100\n1,20,,-5\n2,30,,40\n");
        let (corpus, report) = ingest(
            data.as_bytes(),
            &IngestOptions {
                lenient: true,
                ..IngestOptions::default()
            },
        )
        .unwrap();
        assert_eq!(report.rows_read, 4);
        assert_eq!(report.malformed_rows, 2);
        assert_eq!(corpus.interactions.len(), 2);
    }

    #[test]
    fn generic_format_maps_columns() {
        let data = "when,who,what\n100,7,3\n200,8,3\n";
        let format = Format::Generic {
            user_col: "who".into(),
            item_col: "what".into(),
            timestamp_col: "when".into(),
            rating_col: None,
        };
        let (corpus, _) = ingest(
            data.as_bytes(),
            &IngestOptions {
                format,
                lenient: false,
            },
        )
        .unwrap();
        assert_eq!(corpus.interactions.len(), 2);
        assert_eq!(corpus.n_items(), 1);
        assert!(corpus.interactions.iter().all(|i| i.rating.is_none()));
    }

    #[test]
    fn release_times_are_per_item_minima() {
        let (corpus, _) = ingest_str(&movielens("1,10,1,100\n2,10,1,50\n3,10,1,70\n1,20,1,9\n"));
        let item10 = corpus.items.get("10").unwrap();
        let item20 = corpus.items.get("20").unwrap();
        assert_eq!(corpus.release_times()[item10 as usize], 50);
        assert_eq!(corpus.release_times()[item20 as usize], 9);
    }

    #[test]
    fn vocab_sorts_numerically() {
        let (corpus, _) = ingest_str(&movielens("10,2,1,5\n9,2,1,6\n100,2,1,7\n"));
        assert_eq!(corpus.users.external(0), "9");
        assert_eq!(corpus.users.external(1), "10");
        assert_eq!(corpus.users.external(2), "100");
        assert_eq!(corpus.users.get("100"), Some(2));
    }

    #[test]
    fn stats_counts() {
        let (corpus, _) = ingest_str(&movielens(
            "1,10,1,100\n1,20,1,110\n2,10,1,120\n2,20,1,130\n3,10,1,140\n3,20,1,150\n",
        ));
        let stats = corpus.stats();
        assert_eq!(stats.users, 3);
        assert_eq!(stats.items, 2);
        assert_eq!(stats.interactions, 6);
        assert_eq!((stats.t_min, stats.t_max), (100, 150));
        assert_eq!(stats.interactions_per_user.get(&2), Some(&3));
    }

    #[test]
    fn empty_corpus_stats_are_zero() {
        let (corpus, _) = ingest_str(&movielens(""));
        let stats = corpus.stats();
        assert_eq!(stats.users, 0);
        assert_eq!(stats.items, 0);
        assert_eq!(stats.interactions, 0);
        assert_eq!((stats.t_min, stats.t_max), (0, 0));
        assert!(corpus.time_span().is_none());
    }

    #[test]
    fn ingest_is_idempotent_over_snapshot() {
        let (corpus, _) = ingest_str(&movielens(
            "5,10,3.5,100\n2,10,,50\n5,11,0.5,100\n2,11,4,60\n2,10,1.0,50\n",
        ));
        let mut snapshot = Vec::new();
        corpus.write_csv(&mut snapshot).unwrap();
        let (again, report) = ingest(snapshot.as_slice(), &IngestOptions::default()).unwrap();
        assert_eq!(report.duplicates_dropped, 0);
        assert_eq!(corpus, again);
    }

    #[test]
    fn release_times_match_brute_force_on_random_corpus() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(17);
        let mut body = String::new();
        let mut rows = Vec::new();
        for _ in 0..1_000 {
            let u: u32 = rng.random_range(1..60);
            let i: u32 = rng.random_range(1..40);
            let t: i64 = rng.random_range(1..5_000);
            rows.push((i.to_string(), t));
            body.push_str(&format!("{u},{i},,{t}\n"));
        }
        let (corpus, _) = ingest_str(&movielens(&body));
        let mut expected: HashMap<String, i64> = HashMap::new();
        for (item, t) in rows {
            expected
                .entry(item)
                .and_modify(|m| *m = (*m).min(t))
                .or_insert(t);
        }
        assert_eq!(corpus.n_items(), expected.len());
        for (item, min_t) in expected {
            let idx = corpus.items.get(&item).unwrap();
            assert_eq!(corpus.release_times()[idx as usize], min_t, "item {item}");
        }
        // stats recount
        let stats = corpus.stats();
        assert_eq!(stats.interactions, corpus.interactions.len() as u64);
        let histogram_users: u64 = stats.interactions_per_user.values().sum();
        assert_eq!(histogram_users, stats.users);
    }

    proptest::proptest! {
        /// Normalization permutes the row multiset (minus counted dups).
        #[test]
        fn normalization_preserves_multiset(
            rows in proptest::collection::vec((1u32..20, 1u32..15, 1i64..200), 0..120)
        ) {
            let mut body = String::new();
            for &(u, i, t) in &rows {
                body.push_str(&format!("{u},{i},,{t}\n"));
            }
            let (corpus, report) = ingest_str(&movielens(&body));
            let mut input: std::collections::BTreeMap<(String, String, i64), u64> =
                std::collections::BTreeMap::new();
            for &(u, i, t) in &rows {
                *input.entry((u.to_string(), i.to_string(), t)).or_insert(0) += 1;
            }
            let mut output = std::collections::BTreeMap::new();
            for it in &corpus.interactions {
                *output
                    .entry((
                        corpus.users.external(it.user).to_string(),
                        corpus.items.external(it.item).to_string(),
                        it.timestamp,
                    ))
                    .or_insert(0u64) += 1;
            }
            // every distinct triple survives exactly once
            proptest::prop_assert_eq!(output.len(), input.len());
            proptest::prop_assert!(output.values().all(|&c| c == 1));
            let dup_total: u64 = input.values().map(|&c| c - 1).sum();
            proptest::prop_assert_eq!(report.duplicates_dropped, dup_total);
        }
    }
}
