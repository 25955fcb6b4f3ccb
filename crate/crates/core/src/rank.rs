//! Top-k ranking shared by every retriever.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::segment::{overlaps, VectorSet};

/// Positions scored per work item.
pub(crate) const SCORE_CHUNK: usize = 1024;

/// One retrieved segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub time: usize,
    pub distance: f64,
}

/// Hits for one query, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query: usize,
    pub hits: Vec<Hit>,
}

impl RankedResult {
    pub fn times(&self) -> impl Iterator<Item = usize> + '_ {
        self.hits.iter().map(|h| h.time)
    }
}

/// Anything that answers top-k queries by time index.
pub trait Retriever: Sync {
    fn retrieve(&self, query: usize, k: usize) -> Result<RankedResult>;
}

/// Positions whose windows share no time step with the query window.
pub fn eligible_positions(set: &(impl VectorSet + ?Sized), query: usize) -> Vec<usize> {
    let k = set.window();
    (0..set.len())
        .filter(|&p| !overlaps(query, set.time_of(p), k))
        .collect()
}

/// Ascending distance, then ascending time.
#[inline]
pub fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then_with(|| a.time.cmp(&b.time))
}

/// The `k` best hits of `all`, sorted.
pub fn top_k(mut all: Vec<Hit>, k: usize) -> Vec<Hit> {
    if k < all.len() {
        all.select_nth_unstable_by(k, hit_order);
        all.truncate(k);
    }
    all.sort_unstable_by(hit_order);
    all
}

/// Score every eligible position with `score` (called on chunks of
/// positions) and keep the `k` nearest.
pub fn rank_with<S, F>(set: &S, query: usize, k: usize, score: F) -> Result<RankedResult>
where
    S: VectorSet + ?Sized,
    F: Fn(&[usize]) -> Result<Vec<f64>> + Sync + Send,
{
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    set.position_of(query).ok_or_else(|| Error::OutOfRange {
        index: query,
        valid: "segment time indices".into(),
    })?;
    let eligible = eligible_positions(set, query);
    if eligible.len() < k {
        return Err(Error::NotEnough {
            requested: k,
            available: eligible.len(),
        });
    }
    let parts = exec::map_chunks(eligible.len(), SCORE_CHUNK, |r| -> Result<Vec<Hit>> {
        let pos = &eligible[r];
        let d = score(pos)?;
        debug_assert_eq!(d.len(), pos.len());
        Ok(pos
            .iter()
            .zip(d)
            .map(|(&p, distance)| Hit {
                time: set.time_of(p),
                distance,
            })
            .collect::<Vec<_>>())
    });
    let mut all: Vec<Hit> = Vec::with_capacity(eligible.len());
    for part in parts {
        all.extend(part?);
    }
    Ok(RankedResult {
        query,
        hits: top_k(all, k),
    })
}

/// Gather the vectors at `positions` into a matrix, one per row.
pub fn gather(set: &(impl VectorSet + ?Sized), positions: &[usize]) -> Array2<f64> {
    let d = set.dim();
    let mut flat = Vec::with_capacity(positions.len() * d);
    for &p in positions {
        flat.extend_from_slice(set.vector(p));
    }
    Array2::from_shape_vec((positions.len(), d), flat).expect("gathered shape")
}

#[inline]
pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rank by Euclidean distance to the vector of `query` within `set`.
pub fn euclidean_rank<S: VectorSet + ?Sized>(
    set: &S,
    query: usize,
    k: usize,
    squared: bool,
) -> Result<RankedResult> {
    let qpos = set.position_of(query).ok_or_else(|| Error::OutOfRange {
        index: query,
        valid: "segment time indices".into(),
    })?;
    let q = set.vector(qpos);
    rank_with(set, query, k, |pos| {
        Ok(pos
            .iter()
            .map(|&p| {
                let d2 = squared_euclidean(q, set.vector(p));
                if squared {
                    d2
                } else {
                    d2.sqrt()
                }
            })
            .collect())
    })
}

/// Vectors held in memory with their time indices; e.g. embedded segments.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSet {
    vectors: Array2<f64>,
    times: Vec<usize>,
    window: usize,
}

impl EmbeddedSet {
    pub fn new(vectors: Array2<f64>, times: Vec<usize>, window: usize) -> Result<Self> {
        if vectors.nrows() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: vectors.nrows(),
                got: times.len(),
            });
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("time indices must increase".into()));
        }
        Ok(Self {
            vectors: vectors.as_standard_layout().into_owned(),
            times,
            window,
        })
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn times(&self) -> &[usize] {
        &self.times
    }
}

impl VectorSet for EmbeddedSet {
    fn len(&self) -> usize {
        self.times.len()
    }

    fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    fn vector(&self, pos: usize) -> &[f64] {
        let d = self.vectors.ncols();
        &self.vectors.as_slice().expect("standard layout")[pos * d..(pos + 1) * d]
    }

    fn time_of(&self, pos: usize) -> usize {
        self.times[pos]
    }

    fn window(&self) -> usize {
        self.window
    }

    fn position_of(&self, t: usize) -> Option<usize> {
        self.times.binary_search(&t).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_break_by_time() {
        let hits = vec![
            Hit { time: 9, distance: 1.0 },
            Hit { time: 2, distance: 1.0 },
            Hit { time: 5, distance: 0.5 },
            Hit { time: 1, distance: 3.0 },
        ];
        let top = top_k(hits.clone(), 2);
        assert_eq!(top.iter().map(|h| h.time).collect::<Vec<_>>(), vec![5, 2]);
        let all = top_k(hits, 10);
        assert_eq!(all.iter().map(|h| h.time).collect::<Vec<_>>(), vec![5, 2, 9, 1]);
    }

    #[test]
    fn embedded_set_lookup() {
        let v = Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64);
        let set = EmbeddedSet::new(v, vec![4, 5, 6], 5).unwrap();
        assert_eq!(set.position_of(5), Some(1));
        assert_eq!(set.position_of(7), None);
        assert_eq!(set.vector(2), &[4.0, 5.0]);
        assert!(EmbeddedSet::new(Array2::zeros((2, 1)), vec![3, 3], 1).is_err());
    }
}
