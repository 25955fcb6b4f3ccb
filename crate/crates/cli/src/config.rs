//! Run configuration: a TOML file plus `key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ddmm_core::ddmm::{DdmmConfig, TrainConfig};
use ddmm_core::eval::{ApNormalizer, BenchmarkSpec, Method, DEFAULT_SEEDS};
use ddmm_core::ingest::{CsvOptions, Pipeline, PreprocessStep};
use ddmm_core::segment::QuerySpec;
use serde::{Deserialize, Serialize};

/// Dataset-specific preprocessing presets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Eeg,
    Pamap2,
    Pulp,
    /// Runs `steps` as given; none means the file is used as-is.
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub profile: Profile,
    /// Overrides the profile's label column.
    pub label_column: Option<String>,
    /// Overrides the profile's ignored columns.
    pub skip_columns: Option<Vec<String>>,
    pub heart_rate_column: String,
    /// Steps of the generic profile.
    pub steps: Vec<PreprocessStep>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            profile: Profile::Generic,
            label_column: None,
            skip_columns: None,
            heart_rate_column: "heart_rate".into(),
            steps: Vec::new(),
        }
    }
}

impl DatasetConfig {
    pub fn csv_options(&self) -> CsvOptions {
        let (label, skip): (Option<&str>, &[&str]) = match self.profile {
            Profile::Eeg => (Some("eyeDetection"), &[]),
            Profile::Pamap2 => (Some("activityID"), &["timestamp"]),
            Profile::Pulp => (Some("y"), &["time"]),
            Profile::Generic => (None, &[]),
        };
        CsvOptions {
            label_column: self.label_column.clone().or(label.map(String::from)),
            skip_columns: self
                .skip_columns
                .clone()
                .unwrap_or_else(|| skip.iter().map(|s| s.to_string()).collect()),
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        match self.profile {
            Profile::Eeg => Pipeline::eeg(),
            Profile::Pamap2 => Pipeline::pamap2(&self.heart_rate_column),
            Profile::Pulp => Pipeline::pulp(),
            Profile::Generic => Pipeline {
                steps: self.steps.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self { window: 10, stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub ks: Vec<usize>,
    pub curve_max_k: usize,
    pub normalizer: ApNormalizer,
    /// Hits per query entering the time-difference histograms.
    pub histogram_k: usize,
    pub histogram_bins: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 10],
            curve_max_k: 100,
            normalizer: ApNormalizer::RelevantInTopK,
            histogram_k: 10,
            histogram_bins: 100,
        }
    }
}

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Method used by `train`.
    pub method: Method,
    /// Methods compared by `benchmark` and `sweep`.
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// One query file per seed; when set, these replace `queries`.
    pub query_files: Vec<PathBuf>,
    pub dataset: DatasetConfig,
    pub segments: SegmentConfig,
    pub train: TrainConfig,
    pub ae_train: TrainConfig,
    pub ddmm: DdmmConfig,
    pub comparison: DdmmConfig,
    pub queries: QuerySpec,
    pub metrics: MetricsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Ddmm,
            methods: vec![Method::Euclidean, Method::Ddmm],
            seeds: DEFAULT_SEEDS.to_vec(),
            output: PathBuf::from("runs/latest"),
            query_files: Vec::new(),
            dataset: DatasetConfig::default(),
            segments: SegmentConfig::default(),
            train: TrainConfig::default(),
            ae_train: TrainConfig::default(),
            ddmm: DdmmConfig::default(),
            comparison: DdmmConfig::default(),
            queries: QuerySpec::RandomN { n: 500, seed: 0 },
            metrics: MetricsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Read `path` (if any), apply `overrides`, validate.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(value)
            .try_into()
            .context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.segments.window == 0 {
            bail!("segments.window must be >= 1");
        }
        if !self.query_files.is_empty() && self.query_files.len() != self.seeds.len() {
            bail!(
                "{} query files given for {} seeds",
                self.query_files.len(),
                self.seeds.len()
            );
        }
        self.train.validate()?;
        self.ae_train.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn benchmark_spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            methods: self.methods.clone(),
            train: self.train.clone(),
            ae_train: self.ae_train.clone(),
            ddmm: self.ddmm.clone(),
            comparison: self.comparison.clone(),
            queries: self.queries.clone(),
            ks: self.metrics.ks.clone(),
            curve_max_k: self.metrics.curve_max_k,
            normalizer: self.metrics.normalizer,
        }
    }
}

/// Set a dotted key, e.g. `train.epochs=200` or `seeds=[1,2]`. Values are
/// parsed as TOML and fall back to plain strings.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override `{assignment}` is not key=value"))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut table = root;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .with_context(|| format!("`{p}` in `{key}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let overrides = [
            "train.epochs=7".to_string(),
            "seeds=[4, 5]".to_string(),
            "dataset.path=data/x.csv".to_string(),
            "dataset.profile=eeg".to_string(),
            "methods=[\"eu\", \"ae-ddmm\"]".to_string(),
        ];
        let cfg = RunConfig::load(None, &overrides).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.seeds, vec![4, 5]);
        assert_eq!(cfg.dataset.path, PathBuf::from("data/x.csv"));
        assert_eq!(cfg.dataset.profile, Profile::Eeg);
        assert_eq!(cfg.methods, vec![Method::Euclidean, Method::AeDdmm]);
        assert_eq!(cfg.train.batch_size, 256);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig {
            queries: QuerySpec::RandomNExcludingLabel { n: 40, exclude: 0, seed: 3 },
            ..RunConfig::default()
        };
        cfg.dataset.steps = vec![PreprocessStep::DropNanRows, PreprocessStep::NormalizeMinMax];
        let text = cfg.to_toml().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn profiles_pick_columns() {
        let mut d = DatasetConfig {
            profile: Profile::Pulp,
            ..DatasetConfig::default()
        };
        let o = d.csv_options();
        assert_eq!(o.label_column.as_deref(), Some("y"));
        assert_eq!(o.skip_columns, vec!["time".to_string()]);
        d.label_column = Some("state".into());
        assert_eq!(d.csv_options().label_column.as_deref(), Some("state"));
        assert!(RunConfig::load(None, &["seeds=[]".into()]).is_err());
    }
}
