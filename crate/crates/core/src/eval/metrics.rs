use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::RankedResult;
use crate::segment::{overlaps, SegmentStore, VectorSet};

/// Denominator of AP@k.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApNormalizer {
    /// Number of relevant hits within the top k (0 when there are none).
    #[default]
    RelevantInTopK,
    /// `min(k, total relevant for the query)`.
    MinKTotalRelevant,
}

/// Whether the segments at `query` and `hit` carry the same label.
pub fn relevance(store: &SegmentStore, query: usize, hit: usize) -> Result<bool> {
    Ok(store.segment_label(query)? == store.segment_label(hit)?)
}

/// Relevance flags of every hit, in rank order.
pub fn relevance_vector(result: &RankedResult, store: &SegmentStore) -> Result<Vec<bool>> {
    let ql = store.segment_label(result.query)?;
    result
        .times()
        .map(|t| Ok(store.segment_label(t)? == ql))
        .collect()
}

/// Relevant segments the query could retrieve: same label, no overlap.
pub fn total_relevant(store: &SegmentStore, query: usize) -> Result<usize> {
    let ql = store.segment_label(query)?;
    let labels = store.source().labels().ok_or(Error::MissingLabels)?;
    let k = store.window();
    Ok(store
        .time_indices()
        .filter(|&t| !overlaps(query, t, k) && labels[t] == ql)
        .count())
}

fn check_k(k: usize, len: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if k > len {
        return Err(Error::NotEnough {
            requested: k,
            available: len,
        });
    }
    Ok(())
}

/// Relevant hits among the first `k`.
pub fn hits_at(rel: &[bool], k: usize) -> Result<usize> {
    check_k(k, rel.len())?;
    Ok(rel[..k].iter().filter(|&&r| r).count())
}

pub fn precision_from_relevance(rel: &[bool], k: usize) -> Result<f64> {
    Ok(hits_at(rel, k)? as f64 / k as f64)
}

pub fn recall_from_relevance(rel: &[bool], k: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidArgument(
            "recall undefined: query has no relevant segments".into(),
        ));
    }
    Ok(hits_at(rel, k)? as f64 / total as f64)
}

pub fn average_precision_from_relevance(
    rel: &[bool],
    k: usize,
    normalizer: ApNormalizer,
    total: usize,
) -> Result<f64> {
    check_k(k, rel.len())?;
    let mut found = 0usize;
    let mut sum = 0.0;
    for (i, &r) in rel[..k].iter().enumerate() {
        if r {
            found += 1;
            sum += found as f64 / (i + 1) as f64;
        }
    }
    let denom = match normalizer {
        ApNormalizer::RelevantInTopK => found,
        ApNormalizer::MinKTotalRelevant => k.min(total),
    };
    Ok(if denom == 0 { 0.0 } else { sum / denom as f64 })
}

/// Share of the top `k` hits that are relevant.
pub fn precision_at_k(result: &RankedResult, store: &SegmentStore, k: usize) -> Result<f64> {
    precision_from_relevance(&relevance_vector(result, store)?, k)
}

/// Share of the query's relevant segments found in the top `k`.
pub fn recall_at_k(result: &RankedResult, store: &SegmentStore, k: usize) -> Result<f64> {
    let total = total_relevant(store, result.query)?;
    recall_from_relevance(&relevance_vector(result, store)?, k, total)
}

/// AP@k with the default normalizer.
pub fn average_precision_at_k(result: &RankedResult, store: &SegmentStore, k: usize) -> Result<f64> {
    average_precision_with(result, store, k, ApNormalizer::RelevantInTopK)
}

pub fn average_precision_with(
    result: &RankedResult,
    store: &SegmentStore,
    k: usize,
    normalizer: ApNormalizer,
) -> Result<f64> {
    let total = match normalizer {
        ApNormalizer::RelevantInTopK => 0,
        ApNormalizer::MinKTotalRelevant => total_relevant(store, result.query)?,
    };
    average_precision_from_relevance(&relevance_vector(result, store)?, k, normalizer, total)
}

/// Mean of AP@k over queries.
pub fn mean_average_precision(
    results: &[RankedResult],
    store: &SegmentStore,
    k: usize,
    normalizer: ApNormalizer,
) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no queries".into()));
    }
    let mut sum = 0.0;
    for r in results {
        sum += average_precision_with(r, store, k, normalizer)?;
    }
    Ok(sum / results.len() as f64)
}
