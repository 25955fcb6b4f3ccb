use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::RankedResult;
use crate::segment::SegmentStore;

/// Counts of `t_query - t_hit` over equal-width bins spanning `[-range, range]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub range: usize,
    /// `bins + 1` edges, from `-range` to `range`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(range: usize, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidArgument("bins must be >= 1".into()));
        }
        if range == 0 {
            return Err(Error::InvalidArgument("range must be >= 1".into()));
        }
        let lo = -(range as f64);
        let width = 2.0 * range as f64 / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        Ok(Self {
            range,
            edges,
            counts: vec![0; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin of a difference; the top edge belongs to the last bin.
    pub fn bin_of(&self, diff: i64) -> Result<usize> {
        let r = self.range as i64;
        if diff < -r || diff > r {
            return Err(Error::OutOfRange {
                index: diff.unsigned_abs() as usize,
                valid: format!("time differences within [-{r}, {r}]"),
            });
        }
        let bins = self.bins() as i128;
        let b = ((diff + r) as i128 * bins / (2 * r) as i128).min(bins - 1);
        Ok(b as usize)
    }

    pub fn add(&mut self, diff: i64) -> Result<()> {
        let b = self.bin_of(diff)?;
        self.counts[b] += 1;
        Ok(())
    }

    /// `bin_start,bin_end,count` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_start,bin_end,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        s
    }
}

/// Widest possible time difference between two segments of `store`.
pub fn time_span(store: &SegmentStore) -> usize {
    let mut t = store.time_indices();
    let first = t.next().unwrap_or(0);
    let last = t.last().unwrap_or(first);
    (last - first).max(1)
}

/// Histogram of `t_query - t_hit` over the top `k` hits of every result.
///
/// With `relevant_only`, hits whose label differs from the query's are skipped.
pub fn time_difference_histogram(
    results: &[RankedResult],
    store: &SegmentStore,
    k: usize,
    bins: usize,
    relevant_only: bool,
    range: usize,
) -> Result<Histogram> {
    if results.is_empty() {
        return Err(Error::Empty("no retrieval results".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let mut h = Histogram::new(range, bins)?;
    for r in results {
        if r.hits.len() < k {
            return Err(Error::NotEnough {
                requested: k,
                available: r.hits.len(),
            });
        }
        let ql = if relevant_only {
            Some(store.segment_label(r.query)?)
        } else {
            None
        };
        for hit in &r.hits[..k] {
            if let Some(ql) = ql {
                if store.segment_label(hit.time)? != ql {
                    continue;
                }
            }
            h.add(r.query as i64 - hit.time as i64)?;
        }
    }
    Ok(h)
}
