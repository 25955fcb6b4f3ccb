use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{
    average_precision_from_relevance, precision_from_relevance, recall_from_relevance,
    relevance_vector, total_relevant, ApNormalizer,
};
use crate::baselines::{train_ae_baseline, AeEmbedder, EmbeddingIndex, EuclideanIndex};
use crate::ddmm::{
    train_ae_ddmm, train_comparison_model, train_ddmm, ComparisonModel, DdmmConfig, DdmmModel,
    InputSpace, TrainConfig, TrainReport, Trained,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{ModelFile, ModelKind, ModelMetadata};
use crate::rank::{RankedResult, Retriever};
use crate::segment::{select_queries, QuerySpec, SegmentStore, VectorSet};

/// Seeds used when none are given.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

/// Retrieval methods the benchmark can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "eu")]
    Euclidean,
    #[serde(rename = "ae")]
    Ae,
    #[serde(rename = "ddmm")]
    Ddmm,
    #[serde(rename = "ae-ddmm")]
    AeDdmm,
    #[serde(rename = "comparison")]
    Comparison,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Euclidean,
        Method::Ae,
        Method::Ddmm,
        Method::AeDdmm,
        Method::Comparison,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Euclidean => "eu",
            Method::Ae => "ae",
            Method::Ddmm => "ddmm",
            Method::AeDdmm => "ae-ddmm",
            Method::Comparison => "comparison",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a benchmark needs besides the segments and the seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub methods: Vec<Method>,
    /// Training of the difference autoencoder and the comparison model.
    pub train: TrainConfig,
    /// Training of the baseline autoencoder (also the AE+DDMM front end).
    pub ae_train: TrainConfig,
    pub ddmm: DdmmConfig,
    pub comparison: DdmmConfig,
    pub queries: QuerySpec,
    /// Cutoffs for MAP@k.
    pub ks: Vec<usize>,
    /// Precision/Recall curves cover k = 1..=curve_max_k.
    pub curve_max_k: usize,
    pub normalizer: ApNormalizer,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            methods: vec![Method::Euclidean, Method::Ddmm],
            train: TrainConfig::default(),
            ae_train: TrainConfig::default(),
            ddmm: DdmmConfig::default(),
            comparison: DdmmConfig::default(),
            queries: QuerySpec::RandomN { n: 500, seed: 0 },
            ks: vec![1, 10],
            curve_max_k: 100,
            normalizer: ApNormalizer::RelevantInTopK,
        }
    }
}

impl BenchmarkSpec {
    /// Hits retrieved per query.
    pub fn depth(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(1).max(self.curve_max_k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidArgument("ks must be non-empty and >= 1".into()));
        }
        self.train.validate()?;
        self.ae_train.validate()
    }
}

/// Metrics of one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query: usize,
    /// AP@k, one entry per configured k.
    pub ap: Vec<f64>,
}

/// One method under one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    /// MAP@k, one entry per configured k.
    pub map: Vec<f64>,
    /// Mean Precision@k for k = 1..=curve_max_k.
    pub precision: Vec<f64>,
    /// Mean Recall@k over queries with at least one relevant segment.
    pub recall: Vec<f64>,
    pub queries: Vec<QueryMetrics>,
    #[serde(skip)]
    pub results: Vec<RankedResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub seeds: Vec<SeedMetrics>,
    pub failures: Vec<Failure>,
}

impl MethodReport {
    /// Seed-averaged MAP@k, one entry per configured k; `None` if every seed failed.
    pub fn mean_map(&self) -> Option<Vec<f64>> {
        mean_rows(self.seeds.iter().map(|s| &s.map))
    }

    /// Population standard deviation of MAP@k across seeds.
    pub fn std_map(&self) -> Option<Vec<f64>> {
        let mean = self.mean_map()?;
        let n = self.seeds.len() as f64;
        Some(
            mean.iter()
                .enumerate()
                .map(|(i, m)| {
                    (self.seeds.iter().map(|s| (s.map[i] - m).powi(2)).sum::<f64>() / n).sqrt()
                })
                .collect(),
        )
    }

    pub fn mean_precision(&self) -> Option<Vec<f64>> {
        mean_rows(self.seeds.iter().map(|s| &s.precision))
    }

    pub fn mean_recall(&self) -> Option<Vec<f64>> {
        mean_rows(self.seeds.iter().map(|s| &s.recall))
    }
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a Vec<f64>>) -> Option<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    let mut n = 0usize;
    for r in rows {
        n += 1;
        match &mut acc {
            None => acc = Some(r.clone()),
            Some(a) => a.iter_mut().zip(r).for_each(|(x, y)| *x += y),
        }
    }
    acc.map(|a| a.into_iter().map(|x| x / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seeds: Vec<u64>,
    pub ks: Vec<usize>,
    pub curve_max_k: usize,
    pub methods: Vec<MethodReport>,
}

impl MetricsReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn has_failures(&self) -> bool {
        self.methods.iter().any(|m| !m.failures.is_empty())
    }

    /// `method,seed,k,map` rows; seed `mean` and `std` rows close each method.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("method,seed,k,map\n");
        for m in &self.methods {
            for sm in &m.seeds {
                for (k, v) in self.ks.iter().zip(&sm.map) {
                    let _ = writeln!(s, "{},{},{},{}", m.method, sm.seed, k, v);
                }
            }
            for (tag, vals) in [("mean", m.mean_map()), ("std", m.std_map())] {
                if let Some(vals) = vals {
                    for (k, v) in self.ks.iter().zip(vals) {
                        let _ = writeln!(s, "{},{},{},{}", m.method, tag, k, v);
                    }
                }
            }
        }
        s
    }

    /// `method,seed,query,k,ap` rows.
    pub fn per_query_csv(&self) -> String {
        let mut s = String::from("method,seed,query,k,ap\n");
        for m in &self.methods {
            for sm in &m.seeds {
                for q in &sm.queries {
                    for (k, v) in self.ks.iter().zip(&q.ap) {
                        let _ = writeln!(s, "{},{},{},{},{}", m.method, sm.seed, q.query, k, v);
                    }
                }
            }
        }
        s
    }

    /// Seed-averaged `method,k,precision,recall` rows.
    pub fn curves_csv(&self) -> String {
        let mut s = String::from("method,k,precision,recall\n");
        for m in &self.methods {
            if let (Some(p), Some(r)) = (m.mean_precision(), m.mean_recall()) {
                for (i, (p, r)) in p.iter().zip(&r).enumerate() {
                    let _ = writeln!(s, "{},{},{},{}", m.method, i + 1, p, r);
                }
            }
        }
        s
    }

    /// Fixed-width table of seed-averaged MAP@k.
    pub fn table(&self) -> String {
        let mut s = format!("{:<12}", "method");
        for k in &self.ks {
            let _ = write!(s, " {:>18}", format!("MAP@{k}"));
        }
        s.push('\n');
        for m in &self.methods {
            let _ = write!(s, "{:<12}", m.method.name());
            match (m.mean_map(), m.std_map()) {
                (Some(mean), Some(std)) => {
                    for (a, b) in mean.iter().zip(&std) {
                        let _ = write!(s, " {:>18}", format!("{a:.3} ± {b:.3}"));
                    }
                }
                _ => s.push_str(" failed"),
            }
            s.push('\n');
            for f in &m.failures {
                let _ = writeln!(s, "  seed {}: {}", f.seed, f.message);
            }
        }
        s
    }

}

fn check_shape(window: usize, sensors: usize, store: &SegmentStore) -> Result<()> {
    if window != store.window() || sensors != store.sensors() {
        return Err(Error::Metadata(format!(
            "model expects K={window} m={sensors}, store has K={} m={}",
            store.window(),
            store.sensors()
        )));
    }
    Ok(())
}

/// A model trained for one benchmark method.
#[derive(Debug, Clone)]
pub enum TrainedMethod {
    Euclidean(EuclideanMarker),
    Ae(AeEmbedder),
    Ddmm(DdmmModel),
    Comparison(ComparisonModel),
}

/// The training-free Euclidean baseline, remembered by its shape only.
#[derive(Debug, Clone, PartialEq)]
pub struct EuclideanMarker {
    pub window: usize,
    pub sensors: usize,
    pub seed: u64,
}

impl TrainedMethod {
    /// Train `method` with every training seed set to `seed`.
    pub fn train(
        store: &SegmentStore,
        spec: &BenchmarkSpec,
        method: Method,
        seed: u64,
    ) -> Result<Trained<Self>> {
        let train = TrainConfig {
            seed,
            ..spec.train.clone()
        };
        let ae_train = TrainConfig {
            seed,
            ..spec.ae_train.clone()
        };
        fn wrap<M>(t: Trained<M>, f: impl FnOnce(M) -> TrainedMethod) -> Trained<TrainedMethod> {
            Trained {
                model: f(t.model),
                report: t.report,
            }
        }
        Ok(match method {
            Method::Euclidean => Trained {
                model: Self::Euclidean(EuclideanMarker {
                    window: store.window(),
                    sensors: store.sensors(),
                    seed,
                }),
                report: TrainReport::default(),
            },
            Method::Ae => wrap(train_ae_baseline(store, &ae_train)?, Self::Ae),
            Method::Ddmm => wrap(train_ddmm(store, &train, &spec.ddmm)?, Self::Ddmm),
            Method::AeDdmm => wrap(train_ae_ddmm(store, &ae_train, &train, &spec.ddmm)?, Self::Ddmm),
            Method::Comparison => wrap(
                train_comparison_model(store, &train, &spec.comparison)?,
                Self::Comparison,
            ),
        })
    }

    pub fn method(&self) -> Method {
        match self {
            Self::Euclidean(_) => Method::Euclidean,
            Self::Ae(_) => Method::Ae,
            Self::Ddmm(m) => match m.space {
                InputSpace::Segment => Method::Ddmm,
                InputSpace::Embedding(_) => Method::AeDdmm,
            },
            Self::Comparison(_) => Method::Comparison,
        }
    }

    /// Bind to `store` and hand the resulting retriever to `f`.
    pub fn with_retriever<R>(
        &self,
        store: &SegmentStore,
        f: impl FnOnce(&dyn Retriever) -> Result<R>,
    ) -> Result<R> {
        match self {
            Self::Euclidean(m) => {
                check_shape(m.window, m.sensors, store)?;
                f(&EuclideanIndex::new(store))
            }
            Self::Ae(e) => {
                check_shape(e.window, e.sensors, store)?;
                f(&EmbeddingIndex::new(e, store)?)
            }
            Self::Ddmm(m) => f(&m.index(store)?),
            Self::Comparison(m) => f(&m.index(store)?),
        }
    }

    /// Bind to `store` and score `queries`.
    pub fn evaluate(
        &self,
        store: &SegmentStore,
        queries: &[usize],
        spec: &BenchmarkSpec,
        seed: u64,
    ) -> Result<SeedMetrics> {
        self.with_retriever(store, |r| evaluate(r, store, queries, spec, seed))
    }

    pub fn to_model_file(&self) -> ModelFile {
        match self {
            Self::Euclidean(m) => ModelFile {
                metadata: ModelMetadata::new(ModelKind::Euclidean, m.window, m.sensors, m.seed),
                networks: Vec::new(),
            },
            Self::Ae(e) => e.to_model_file(),
            Self::Ddmm(m) => m.to_model_file(),
            Self::Comparison(m) => m.to_model_file(),
        }
    }

    pub fn from_model_file(file: ModelFile) -> Result<Self> {
        Ok(match file.metadata.kind {
            ModelKind::Euclidean => {
                if !file.networks.is_empty() {
                    return Err(Error::Metadata("Euclidean marker carries networks".into()));
                }
                Self::Euclidean(EuclideanMarker {
                    window: file.metadata.window,
                    sensors: file.metadata.sensors,
                    seed: file.metadata.seed,
                })
            }
            ModelKind::AeBaseline => Self::Ae(AeEmbedder::from_model_file(file)?),
            ModelKind::Ddmm | ModelKind::AeDdmm => Self::Ddmm(DdmmModel::from_model_file(file)?),
            ModelKind::Comparison => Self::Comparison(ComparisonModel::from_model_file(file)?),
        })
    }
}

/// Retrieve for every query and score the rankings.
pub fn evaluate(
    retriever: &dyn Retriever,
    store: &SegmentStore,
    queries: &[usize],
    spec: &BenchmarkSpec,
    seed: u64,
) -> Result<SeedMetrics> {
    if queries.is_empty() {
        return Err(Error::Empty("no queries".into()));
    }
    let depth = spec.depth();
    let per_query = exec::map_ordered(queries, |&q| -> Result<_> {
        let r = retriever.retrieve(q, depth)?;
        let rel = relevance_vector(&r, store)?;
        let total = total_relevant(store, q)?;
        let ap = spec
            .ks
            .iter()
            .map(|&k| average_precision_from_relevance(&rel, k, spec.normalizer, total))
            .collect::<Result<Vec<_>>>()?;
        let precision = (1..=spec.curve_max_k)
            .map(|k| precision_from_relevance(&rel, k))
            .collect::<Result<Vec<_>>>()?;
        let recall = if total == 0 {
            None
        } else {
            Some(
                (1..=spec.curve_max_k)
                    .map(|k| recall_from_relevance(&rel, k, total))
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        Ok((r, ap, precision, recall))
    });

    let nk = spec.ks.len();
    let mut map = vec![0.0; nk];
    let mut precision = vec![0.0; spec.curve_max_k];
    let mut recall = vec![0.0; spec.curve_max_k];
    let mut with_relevant = 0usize;
    let mut rows = Vec::with_capacity(queries.len());
    let mut results = Vec::with_capacity(queries.len());
    for item in per_query {
        let (r, ap, p, rc) = item?;
        map.iter_mut().zip(&ap).for_each(|(a, b)| *a += b);
        precision.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        if let Some(rc) = rc {
            with_relevant += 1;
            recall.iter_mut().zip(&rc).for_each(|(a, b)| *a += b);
        }
        rows.push(QueryMetrics { query: r.query, ap });
        results.push(r);
    }
    let n = queries.len() as f64;
    map.iter_mut().for_each(|v| *v /= n);
    precision.iter_mut().for_each(|v| *v /= n);
    if with_relevant > 0 {
        recall.iter_mut().for_each(|v| *v /= with_relevant as f64);
    }
    Ok(SeedMetrics {
        seed,
        map,
        precision,
        recall,
        queries: rows,
        results,
    })
}

/// Run every method under every seed. A method failing under one seed is
/// recorded and the run moves on.
pub fn run_benchmark(store: &SegmentStore, spec: &BenchmarkSpec, seeds: &[u64]) -> Result<MetricsReport> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let query_sets = seeds
        .iter()
        .map(|&s| select_queries(store, &spec.queries.reseeded(s)))
        .collect::<Result<Vec<_>>>()?;
    run_benchmark_with_queries(store, spec, seeds, &query_sets)
}

/// Like [`run_benchmark`] with one explicit query set per seed.
pub fn run_benchmark_with_queries(
    store: &SegmentStore,
    spec: &BenchmarkSpec,
    seeds: &[u64],
    query_sets: &[Vec<usize>],
) -> Result<MetricsReport> {
    spec.validate()?;
    if seeds.len() != query_sets.len() {
        return Err(Error::DimensionMismatch {
            expected: seeds.len(),
            got: query_sets.len(),
        });
    }
    let mut methods = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let mut report = MethodReport {
            method,
            seeds: Vec::new(),
            failures: Vec::new(),
        };
        for (&seed, queries) in seeds.iter().zip(query_sets) {
            let outcome = TrainedMethod::train(store, spec, method, seed)
                .and_then(|t| t.model.evaluate(store, queries, spec, seed));
            match outcome {
                Ok(m) => report.seeds.push(m),
                Err(e) => report.failures.push(Failure {
                    seed,
                    message: e.to_string(),
                }),
            }
        }
        methods.push(report);
    }
    Ok(MetricsReport {
        seeds: seeds.to_vec(),
        ks: spec.ks.clone(),
        curve_max_k: spec.curve_max_k,
        methods,
    })
}
