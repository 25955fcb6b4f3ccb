//! Ranking metrics, time-difference histograms and the multi-seed benchmark.

mod benchmark;
mod histogram;
mod metrics;

pub use benchmark::{
    evaluate, run_benchmark, run_benchmark_with_queries, BenchmarkSpec, Failure, Method,
    EuclideanMarker, MethodReport, MetricsReport, QueryMetrics, SeedMetrics, TrainedMethod,
    DEFAULT_SEEDS,
};
pub use histogram::{time_difference_histogram, time_span, Histogram};
pub use metrics::{
    average_precision_at_k, average_precision_from_relevance, average_precision_with, hits_at,
    mean_average_precision, precision_at_k, precision_from_relevance, recall_at_k,
    recall_from_relevance, relevance, relevance_vector, total_relevant, ApNormalizer,
};
