use ddmm_core::eval::{
    average_precision_at_k, average_precision_from_relevance, precision_at_k,
    precision_from_relevance, recall_at_k, recall_from_relevance, time_difference_histogram,
    time_span, ApNormalizer,
};
use ddmm_core::ingest::TimeSeries;
use ddmm_core::rank::{Hit, RankedResult};
use ddmm_core::segment::build_segments;

const LEN: usize = 10;

fn pattern(bits: u32) -> Vec<bool> {
    (0..LEN).map(|i| bits >> i & 1 == 1).collect()
}

// Brute-force definitions, written from the formulas without sharing code.
fn oracle_precision(rel: &[bool], k: usize) -> f64 {
    let mut hits = 0;
    for r in rel.iter().take(k) {
        if *r {
            hits += 1;
        }
    }
    hits as f64 / k as f64
}

fn oracle_ap(rel: &[bool], k: usize, denom_total: Option<usize>) -> f64 {
    let mut sum = 0.0;
    let mut relevant = 0;
    for i in 1..=k {
        if rel[i - 1] {
            relevant += 1;
            let mut seen = 0;
            for r in &rel[..i] {
                seen += usize::from(*r);
            }
            sum += seen as f64 / i as f64;
        }
    }
    let denom = match denom_total {
        None => relevant,
        Some(total) => k.min(total),
    };
    if denom == 0 {
        0.0
    } else {
        sum / denom as f64
    }
}

#[test]
fn metrics_agree_with_oracle_on_every_pattern() {
    for bits in 0..(1u32 << LEN) {
        let rel = pattern(bits);
        let total = rel.iter().filter(|r| **r).count() + 3;
        for k in 1..=LEN {
            let p = precision_from_relevance(&rel, k).unwrap();
            assert_eq!(p, oracle_precision(&rel, k), "P@{k} {bits:010b}");
            assert_eq!((p * k as f64).fract(), 0.0);
            let r = recall_from_relevance(&rel, k, total).unwrap();
            assert_eq!(r, (p * k as f64).round() / total as f64);
            let ap = average_precision_from_relevance(&rel, k, ApNormalizer::RelevantInTopK, 0).unwrap();
            assert_eq!(ap, oracle_ap(&rel, k, None), "AP@{k} {bits:010b}");
            assert!((0.0..=1.0).contains(&ap));
            // With this normalizer AP@k = 1 exactly when the relevant hits
            // form a non-empty prefix of the ranking.
            let found = rel[..k].iter().filter(|r| **r).count();
            assert_eq!(ap == 1.0, found > 0 && rel[..found].iter().all(|r| *r));
            let alt = average_precision_from_relevance(&rel, k, ApNormalizer::MinKTotalRelevant, total)
                .unwrap();
            assert_eq!(alt, oracle_ap(&rel, k, Some(total)));
            let plenty = average_precision_from_relevance(&rel, k, ApNormalizer::MinKTotalRelevant, LEN)
                .unwrap();
            assert_eq!(plenty == 1.0, rel[..k].iter().all(|r| *r));
        }
    }
}

/// The store-facing API must agree with the bit-pattern one. Labels are
/// laid out so that the hit at time `20 + i` is relevant iff bit `i` is set.
#[test]
fn store_metrics_follow_labels() {
    for bits in [0u32, 1, 0b1010110011, 0b1111111111, 0b0100000000] {
        let rel = pattern(bits);
        let mut labels = vec![0i64; 40];
        for (i, r) in rel.iter().enumerate() {
            labels[20 + i] = if *r { 0 } else { 1 };
        }
        let rows: Vec<Vec<f64>> = (0..40).map(|t| vec![t as f64]).collect();
        let store = build_segments(TimeSeries::from_rows(&rows, Some(labels.clone())).unwrap(), 2, 1).unwrap();
        let result = RankedResult {
            query: 3,
            hits: (0..LEN).map(|i| Hit { time: 20 + i, distance: i as f64 }).collect(),
        };
        // Eligible relevant: label 0 at t in 1..=39 with |t - 3| >= 2.
        let total = (1usize..40).filter(|&t| t.abs_diff(3) >= 2 && labels[t] == 0).count();
        for k in 1..=LEN {
            assert_eq!(precision_at_k(&result, &store, k).unwrap(), oracle_precision(&rel, k));
            assert_eq!(average_precision_at_k(&result, &store, k).unwrap(), oracle_ap(&rel, k, None));
            let hits = rel[..k].iter().filter(|r| **r).count();
            assert_eq!(recall_at_k(&result, &store, k).unwrap(), hits as f64 / total as f64);
        }
        let h = time_difference_histogram(&[result.clone(), result], &store, 7, 9, false, time_span(&store))
            .unwrap();
        assert_eq!(h.total(), 14);
    }
}
