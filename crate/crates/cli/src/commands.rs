//! Subcommand implementations. Each writes its artifacts and a manifest into
//! the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddmm_core::eval::{
    run_benchmark_with_queries, time_difference_histogram, time_span, MetricsReport,
    TrainedMethod,
};
use ddmm_core::ingest::{
    load_csv, sidecar_path, write_csv, NormalizationParams, Pipeline, PreprocessMetadata,
    TimeSeries,
};
use ddmm_core::nn::ModelFile;
use ddmm_core::segment::{
    build_segments, read_query_file, select_queries, write_query_file, SegmentStore,
};

use crate::config::RunConfig;
use crate::manifest::{compare_artifacts, ArtifactWriter, Axis, Invocation, Manifest};

/// A dataset after its preprocessing pipeline.
pub struct Dataset {
    pub series: TimeSeries,
    pub normalization: Option<NormalizationParams>,
    pub pipeline: Pipeline,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.dataset;
    if d.path.as_os_str().is_empty() {
        bail!("dataset.path is not set");
    }
    let raw = load_csv(&d.path, &d.csv_options())
        .with_context(|| format!("loading {}", d.path.display()))?;
    let pipeline = d.pipeline();
    let out = pipeline.apply(&raw)?;
    Ok(Dataset {
        series: out.series,
        normalization: out.normalization,
        pipeline,
    })
}

pub fn segment(cfg: &RunConfig, ds: &Dataset) -> Result<SegmentStore> {
    Ok(build_segments(
        ds.series.clone(),
        cfg.segments.window,
        cfg.segments.stride,
    )?)
}

/// Result of one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub output: PathBuf,
    /// Sub-steps that failed without aborting the run.
    pub failures: Vec<String>,
    /// Artifacts that differ from the manifest a rerun was driven by.
    pub mismatches: Vec<String>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty() && self.mismatches.is_empty()
    }
}

/// Execute `invocation` and write its manifest.
pub fn run(invocation: &Invocation, cfg: &RunConfig) -> Result<Outcome> {
    let mut manifest = Manifest::new(invocation.clone(), cfg);
    let mut out = ArtifactWriter::new(&cfg.output)?;
    let failures = match invocation {
        Invocation::Preprocess => preprocess(cfg, &mut manifest, &mut out)?,
        Invocation::Train { seed } => train(cfg, *seed, &mut manifest, &mut out)?,
        Invocation::Retrieve { model, queries, k } => {
            retrieve(cfg, model, queries, *k, &mut manifest, &mut out)?
        }
        Invocation::Benchmark => failure_lines(&benchmark_into(cfg, &mut manifest, &mut out, "")?),
        Invocation::Sweep { axis, values } => sweep(cfg, *axis, values, &mut manifest, &mut out)?,
    };
    manifest.artifacts = out.into_hashes();
    manifest.save(&cfg.output)?;
    Ok(Outcome {
        output: cfg.output.clone(),
        failures,
        mismatches: Vec::new(),
    })
}

/// Repeat the run recorded in `manifest_path`, optionally into another
/// directory, and compare every artifact hash with the recorded one.
pub fn rerun(manifest_path: &Path, output: Option<PathBuf>) -> Result<Outcome> {
    let recorded = Manifest::load(manifest_path)?;
    let mut cfg = recorded.config.clone();
    if let Some(o) = output {
        cfg.output = o;
    }
    for (path, hash) in &recorded.inputs {
        let now = crate::manifest::hash_file(Path::new(path))?;
        if &now != hash {
            bail!("input {path} changed since the manifest was written");
        }
    }
    let mut outcome = run(&recorded.invocation, &cfg)?;
    let fresh = Manifest::load(&cfg.output.join(crate::manifest::MANIFEST_FILE))?;
    outcome.mismatches = compare_artifacts(&recorded.artifacts, &fresh.artifacts);
    Ok(outcome)
}

fn preprocess(cfg: &RunConfig, manifest: &mut Manifest, out: &mut ArtifactWriter) -> Result<Vec<String>> {
    manifest.record_input(&cfg.dataset.path)?;
    let ds = load_dataset(cfg)?;
    if ds.series.is_empty() {
        bail!("preprocessing left no rows");
    }
    let mut csv = Vec::new();
    write_csv(&ds.series, &mut csv)?;
    let data = out.write("preprocessed.csv", &csv)?;
    let meta = PreprocessMetadata {
        source: cfg.dataset.path.display().to_string(),
        rows: ds.series.len(),
        sensors: ds.series.sensors(),
        label_column: ds.series.label_name().map(String::from),
        pipeline: ds.pipeline,
        normalization: ds.normalization,
    };
    let sidecar = sidecar_path(&data);
    let name = sidecar.file_name().expect("file name").to_string_lossy().into_owned();
    out.write(&name, meta.to_toml()?)?;
    eprintln!(
        "preprocessed {} rows x {} sensors -> {}",
        meta.rows,
        meta.sensors,
        data.display()
    );
    Ok(Vec::new())
}

fn train(cfg: &RunConfig, seed: u64, manifest: &mut Manifest, out: &mut ArtifactWriter) -> Result<Vec<String>> {
    manifest.record_input(&cfg.dataset.path)?;
    let ds = load_dataset(cfg)?;
    let store = segment(cfg, &ds)?;
    let spec = cfg.benchmark_spec();
    let trained = TrainedMethod::train(&store, &spec, cfg.method, seed)?;
    let mut file = trained.model.to_model_file();
    file.metadata.normalization = ds.normalization.clone();
    file.metadata.epochs = match cfg.method {
        ddmm_core::eval::Method::Euclidean => None,
        _ => Some(trained.report.epochs.len()),
    };
    let path = out.write("model.ddmm", file.to_bytes()?)?;
    out.write("train_loss.csv", trained.report.to_csv())?;
    eprintln!("trained {} (seed {seed}) -> {}", cfg.method, path.display());
    Ok(Vec::new())
}

/// Reject a model whose shape or scaling differs from the dataset's.
pub fn check_compatible(file: &ModelFile, store: &SegmentStore, ds: &Dataset) -> Result<()> {
    use ddmm_core::segment::VectorSet;
    let meta = &file.metadata;
    if meta.window != store.window() || meta.sensors != store.sensors() {
        bail!(
            "model was trained with K={} m={}, dataset gives K={} m={}",
            meta.window,
            meta.sensors,
            store.window(),
            store.sensors()
        );
    }
    if meta.normalization != ds.normalization {
        bail!("model normalization does not match the dataset's preprocessing");
    }
    Ok(())
}

fn retrieve(
    cfg: &RunConfig,
    model: &Path,
    queries: &[usize],
    k: usize,
    manifest: &mut Manifest,
    out: &mut ArtifactWriter,
) -> Result<Vec<String>> {
    manifest.record_input(&cfg.dataset.path)?;
    manifest.record_input(model)?;
    let file = ModelFile::load(model)?;
    let ds = load_dataset(cfg)?;
    let store = segment(cfg, &ds)?;
    check_compatible(&file, &store, &ds)?;
    let trained = TrainedMethod::from_model_file(file)?;
    let results = trained.with_retriever(&store, |r| {
        queries.iter().map(|&q| r.retrieve(q, k)).collect::<ddmm_core::Result<Vec<_>>>()
    })?;
    let mut csv = String::from("query,rank,time,distance\n");
    for r in &results {
        for (i, h) in r.hits.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", r.query, i + 1, h.time, h.distance);
        }
    }
    let path = out.write("rankings.csv", &csv)?;
    eprintln!("{} queries x {k} hits -> {}", results.len(), path.display());
    Ok(Vec::new())
}

fn failure_lines(report: &MetricsReport) -> Vec<String> {
    report
        .methods
        .iter()
        .flat_map(|m| {
            m.failures
                .iter()
                .map(move |f| format!("{} seed {}: {}", m.method, f.seed, f.message))
        })
        .collect()
}

/// Query set per seed: from files when configured, else drawn and written out.
fn query_sets(cfg: &RunConfig, store: &SegmentStore, out: &mut ArtifactWriter, prefix: &str) -> Result<Vec<Vec<usize>>> {
    if !cfg.query_files.is_empty() {
        return cfg
            .query_files
            .iter()
            .map(|p| read_query_file(p).with_context(|| format!("reading {}", p.display())))
            .collect();
    }
    let mut sets = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let q = select_queries(store, &cfg.queries.reseeded(seed))?;
        let name = format!("{prefix}queries/seed{seed}.txt");
        let path = out.path(&name);
        std::fs::create_dir_all(path.parent().expect("parent"))?;
        write_query_file(&path, &q)?;
        out.write(&name, std::fs::read(&path)?)?;
        sets.push(q);
    }
    Ok(sets)
}

/// Run the benchmark and write its reports with file names under `prefix`.
fn benchmark_into(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    out: &mut ArtifactWriter,
    prefix: &str,
) -> Result<MetricsReport> {
    manifest.record_input(&cfg.dataset.path)?;
    for p in &cfg.query_files {
        manifest.record_input(p)?;
    }
    let ds = load_dataset(cfg)?;
    let store = segment(cfg, &ds)?;
    let queries = query_sets(cfg, &store, out, prefix)?;
    let spec = cfg.benchmark_spec();
    let report = run_benchmark_with_queries(&store, &spec, &cfg.seeds, &queries)?;

    out.write(&format!("{prefix}summary.csv"), report.summary_csv())?;
    out.write(&format!("{prefix}per_query.csv"), report.per_query_csv())?;
    out.write(&format!("{prefix}curves.csv"), report.curves_csv())?;
    out.write(&format!("{prefix}report.json"), serde_json::to_string_pretty(&report)?)?;
    let table = report.table();
    out.write(&format!("{prefix}table.txt"), &table)?;
    print!("{table}");

    let hk = cfg.metrics.histogram_k;
    if hk > 0 && hk <= spec.depth() {
        for m in &report.methods {
            let results: Vec<_> = m.seeds.iter().flat_map(|s| s.results.iter().cloned()).collect();
            if results.is_empty() {
                continue;
            }
            for (suffix, relevant_only) in [("", false), ("_relevant", true)] {
                let h = time_difference_histogram(
                    &results,
                    &store,
                    hk,
                    cfg.metrics.histogram_bins,
                    relevant_only,
                    time_span(&store),
                )?;
                out.write(&format!("{prefix}histograms/{}{suffix}.csv", m.method), h.to_csv())?;
            }
        }
    }
    Ok(report)
}

fn sweep(
    cfg: &RunConfig,
    axis: Axis,
    values: &[usize],
    manifest: &mut Manifest,
    out: &mut ArtifactWriter,
) -> Result<Vec<String>> {
    if values.is_empty() {
        bail!("sweep needs at least one axis value");
    }
    let mut csv = format!("{},method,k,map_mean,map_std\n", axis.name());
    let mut failures = Vec::new();
    for &v in values {
        let mut point = cfg.clone();
        match axis {
            Axis::Window => point.segments.window = v,
            Axis::Epochs => {
                point.train.epochs = v;
                point.ae_train.epochs = v;
            }
        }
        point.validate()?;
        let prefix = format!("{}={v}/", axis.name());
        eprintln!("sweep point {}", prefix.trim_end_matches('/'));
        let report = benchmark_into(&point, manifest, out, &prefix)?;
        failures.extend(failure_lines(&report).into_iter().map(|f| format!("{prefix} {f}")));
        for m in &report.methods {
            if let (Some(mean), Some(std)) = (m.mean_map(), m.std_map()) {
                for ((k, a), b) in report.ks.iter().zip(&mean).zip(&std) {
                    let _ = writeln!(csv, "{v},{},{k},{a},{b}", m.method);
                }
            }
        }
    }
    out.write("sweep.csv", &csv)?;
    Ok(failures)
}
