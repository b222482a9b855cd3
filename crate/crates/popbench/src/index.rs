//! Immutable index over training interactions answering exact per-item
//! windowed counts.
//!
//! Timestamps are stored per item in one contiguous ascending array (CSR
//! layout), so `count_in` is two binary searches and the built index is
//! freely shareable across parallel evaluation workers.

use crate::{Interaction, ItemId, Timestamp};

/// Half-open time window `[start, end)`.
///
/// The half-open convention makes consecutive monthly buckets partition
/// exactly with no double counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Window {
    pub fn new(start: Timestamp, end: Timestamp) -> Window {
        assert!(start < end, "window start {} must be < end {}", start, end);
        Window { start, end }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalIndex {
    /// `offsets[i]..offsets[i+1]` delimits item i's timestamps in `times`.
    offsets: Vec<usize>,
    times: Vec<Timestamp>,
    build_span: Option<(Timestamp, Timestamp)>,
}

impl TemporalIndex {
    /// Build from training interactions. `n_items` sizes the index; items
    /// without training interactions get empty timestamp arrays.
    pub fn build(training: &[Interaction], n_items: usize) -> TemporalIndex {
        let mut counts = vec![0usize; n_items];
        for it in training {
            counts[it.item as usize] += 1;
        }
        let mut offsets = vec![0usize; n_items + 1];
        for i in 0..n_items {
            offsets[i + 1] = offsets[i] + counts[i];
        }
        let mut times = vec![0 as Timestamp; training.len()];
        let mut cursor = offsets.clone();
        let mut span: Option<(Timestamp, Timestamp)> = None;
        for it in training {
            times[cursor[it.item as usize]] = it.timestamp;
            cursor[it.item as usize] += 1;
            span = Some(match span {
                None => (it.timestamp, it.timestamp),
                Some((lo, hi)) => (lo.min(it.timestamp), hi.max(it.timestamp)),
            });
        }
        // Time-sorted input yields sorted segments for free; repair if the
        // caller handed us unsorted data.
        for i in 0..n_items {
            let seg = &mut times[offsets[i]..offsets[i + 1]];
            if !seg.is_sorted() {
                seg.sort_unstable();
            }
        }
        TemporalIndex {
            offsets,
            times,
            build_span: span,
        }
    }

    pub fn n_items(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_interactions(&self) -> usize {
        self.times.len()
    }

    /// `[min, max]` timestamp of the indexed data; `None` when empty.
    pub fn build_span(&self) -> Option<(Timestamp, Timestamp)> {
        self.build_span
    }

    /// Ascending timestamps of one item; empty for unknown items.
    pub fn item_times(&self, item: ItemId) -> &[Timestamp] {
        let i = item as usize;
        if i >= self.n_items() {
            return &[];
        }
        &self.times[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Exact number of indexed timestamps `t` of `item` with
    /// `w.start <= t < w.end`. Unknown items count 0.
    pub fn count_in(&self, item: ItemId, w: Window) -> usize {
        let ts = self.item_times(item);
        let lo = ts.partition_point(|&t| t < w.start);
        let hi = ts.partition_point(|&t| t < w.end);
        hi - lo
    }

    /// Total interaction count of `item` in the indexed data.
    pub fn total_count(&self, item: ItemId) -> usize {
        self.item_times(item).len()
    }
}
