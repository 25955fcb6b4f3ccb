//! Sliding-window segments and query selection.
//!
//! Time indices are 0-based and name the LAST row of a window, so the valid
//! range is `K-1..=T-1`. In 1-based terms that is `w_K..w_T`.

use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TimeSeries;

/// A set of equal-length vectors addressed by position, each tied to a time index.
///
/// Retrieval and training are written against this trait so they run equally
/// over raw segments and over embedded segments.
pub trait VectorSet: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> usize;

    fn vector(&self, pos: usize) -> &[f64];

    /// Time index (last row of the window) of position `pos`.
    fn time_of(&self, pos: usize) -> usize;

    /// Window length, used for overlap exclusion.
    fn window(&self) -> usize;

    /// Position whose time index is `t`, if any.
    fn position_of(&self, t: usize) -> Option<usize>;
}

/// Windows of `K` consecutive rows over a [`TimeSeries`], borrowed lazily.
#[derive(Debug, Clone)]
pub struct SegmentStore {
    source: TimeSeries,
    window: usize,
    stride: usize,
    count: usize,
}

impl SegmentStore {
    pub fn new(source: TimeSeries, window: usize, stride: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidArgument("window length must be >= 1".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        if window > source.len() {
            return Err(Error::InvalidArgument(format!(
                "window length {window} exceeds series length {}",
                source.len()
            )));
        }
        let count = (source.len() - window) / stride + 1;
        Ok(Self {
            source,
            window,
            stride,
            count,
        })
    }

    pub fn source(&self) -> &TimeSeries {
        &self.source
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn sensors(&self) -> usize {
        self.source.sensors()
    }

    /// All valid time indices in ascending order.
    pub fn time_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.count).map(|p| self.time_of(p))
    }

    /// The concatenated window ending at time `t`.
    pub fn segment_vector(&self, t: usize) -> Result<&[f64]> {
        let pos = self.position_of(t).ok_or_else(|| self.out_of_range(t))?;
        Ok(self.vector(pos))
    }

    /// Label of the window ending at `t`, i.e. the label of row `t`.
    pub fn segment_label(&self, t: usize) -> Result<i64> {
        let labels = self.source.labels().ok_or(Error::MissingLabels)?;
        self.position_of(t).ok_or_else(|| self.out_of_range(t))?;
        Ok(labels[t])
    }

    /// Labels of every segment, by position.
    pub fn labels(&self) -> Result<Vec<i64>> {
        let labels = self.source.labels().ok_or(Error::MissingLabels)?;
        Ok(self.time_indices().map(|t| labels[t]).collect())
    }

    /// Copy every segment into an N×(mK) matrix.
    pub fn materialize(&self) -> Array2<f64> {
        let d = self.dim();
        let mut flat = Vec::with_capacity(self.count * d);
        for p in 0..self.count {
            flat.extend_from_slice(self.vector(p));
        }
        Array2::from_shape_vec((self.count, d), flat).expect("shape matches")
    }

    fn out_of_range(&self, t: usize) -> Error {
        Error::OutOfRange {
            index: t,
            valid: format!(
                "{}..={} step {}",
                self.window - 1,
                self.time_of(self.count - 1),
                self.stride
            ),
        }
    }
}

impl VectorSet for SegmentStore {
    fn len(&self) -> usize {
        self.count
    }

    fn dim(&self) -> usize {
        self.window * self.source.sensors()
    }

    #[inline]
    fn vector(&self, pos: usize) -> &[f64] {
        let m = self.source.sensors();
        let start = pos * self.stride;
        &self.source.as_slice()[start * m..(start + self.window) * m]
    }

    #[inline]
    fn time_of(&self, pos: usize) -> usize {
        pos * self.stride + self.window - 1
    }

    fn window(&self) -> usize {
        self.window
    }

    fn position_of(&self, t: usize) -> Option<usize> {
        let off = t.checked_sub(self.window - 1)?;
        (off % self.stride == 0 && off / self.stride < self.count).then_some(off / self.stride)
    }
}

/// Build the sliding-window view of `ts`.
pub fn build_segments(ts: TimeSeries, window: usize, stride: usize) -> Result<SegmentStore> {
    SegmentStore::new(ts, window, stride)
}

/// Whether the windows ending at `t1` and `t2` share a time step.
#[inline]
pub fn overlaps(t1: usize, t2: usize, window: usize) -> bool {
    t1.abs_diff(t2) < window.max(1)
}

/// How queries are chosen from a store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum QuerySpec {
    /// Every segment carrying `label`, in time order.
    AllWithLabel { label: i64 },
    /// `n` segments drawn uniformly without replacement.
    RandomN { n: usize, seed: u64 },
    /// As `RandomN`, after removing segments labelled `exclude`.
    RandomNExcludingLabel { n: usize, exclude: i64, seed: u64 },
}

impl QuerySpec {
    /// Same selection rule under a different seed; label-based specs are unchanged.
    pub fn reseeded(&self, new_seed: u64) -> Self {
        match *self {
            QuerySpec::AllWithLabel { label } => QuerySpec::AllWithLabel { label },
            QuerySpec::RandomN { n, .. } => QuerySpec::RandomN { n, seed: new_seed },
            QuerySpec::RandomNExcludingLabel { n, exclude, .. } => {
                QuerySpec::RandomNExcludingLabel {
                    n,
                    exclude,
                    seed: new_seed,
                }
            }
        }
    }
}

/// Pick query time indices. Random modes return indices in ascending order.
pub fn select_queries(store: &SegmentStore, spec: &QuerySpec) -> Result<Vec<usize>> {
    match *spec {
        QuerySpec::AllWithLabel { label } => {
            let labels = store.labels()?;
            Ok(store
                .time_indices()
                .zip(labels)
                .filter_map(|(t, l)| (l == label).then_some(t))
                .collect())
        }
        QuerySpec::RandomN { n, seed } => {
            let eligible: Vec<usize> = store.time_indices().collect();
            sample_sorted(&eligible, n, seed)
        }
        QuerySpec::RandomNExcludingLabel { n, exclude, seed } => {
            let labels = store.labels()?;
            let eligible: Vec<usize> = store
                .time_indices()
                .zip(labels)
                .filter_map(|(t, l)| (l != exclude).then_some(t))
                .collect();
            sample_sorted(&eligible, n, seed)
        }
    }
}

fn sample_sorted(eligible: &[usize], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("query count must be >= 1".into()));
    }
    if n > eligible.len() {
        return Err(Error::NotEnough {
            requested: n,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Write one time index per line.
pub fn write_query_file(path: &Path, queries: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(queries.len() * 6);
    for q in queries {
        text.push_str(&q.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_query_file(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: "query".into(),
                value: l.to_string(),
            })
        })
        .collect()
}
