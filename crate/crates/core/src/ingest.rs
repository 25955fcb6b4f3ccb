//! CSV ingestion and the cleansing / resampling / scaling steps applied before
//! segmentation.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A T×m matrix of readings, optionally labelled per row.
///
/// Rows are time steps and columns are sensors. The matrix is always kept in
/// standard (row-major) layout so that consecutive rows form one contiguous
/// slice, which is what lets segments be borrowed without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Array2<f64>,
    labels: Option<Vec<i64>>,
    sensor_names: Vec<String>,
    label_name: Option<String>,
}

impl TimeSeries {
    pub fn new(
        values: Array2<f64>,
        labels: Option<Vec<i64>>,
        sensor_names: Vec<String>,
    ) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 {
            return Err(Error::Empty("series has no rows".into()));
        }
        if cols == 0 {
            return Err(Error::Empty("series has no sensors".into()));
        }
        if sensor_names.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: sensor_names.len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != rows {
                return Err(Error::DimensionMismatch {
                    expected: rows,
                    got: l.len(),
                });
            }
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Self {
            values,
            labels,
            sensor_names,
            label_name: None,
        })
    }

    /// Build from row vectors with generated sensor names `s0, s1, ...`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<i64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * m);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} values, expected {m}",
                    r.len()
                )));
            }
            flat.extend_from_slice(r);
        }
        let values = Array2::from_shape_vec((rows.len(), m), flat)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let names = (0..m).map(|j| format!("s{j}")).collect();
        Self::new(values, labels, names)
    }

    pub fn with_label_name(mut self, name: impl Into<String>) -> Self {
        self.label_name = Some(name.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn sensors(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// The whole matrix as one row-major slice.
    pub fn as_slice(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("time series values are kept in standard layout")
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.sensors();
        &self.as_slice()[t * m..(t + 1) * m]
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn sensor_names(&self) -> &[String] {
        &self.sensor_names
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label_name.as_deref()
    }

    fn keep_rows(&self, keep: &[bool], op: &str) -> Result<Self> {
        let idx: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect();
        if idx.is_empty() {
            return Err(Error::Empty(format!("{op} removed every row")));
        }
        let values = self.values.select(Axis(0), &idx).as_standard_layout().into_owned();
        let labels = self
            .labels
            .as_ref()
            .map(|l| idx.iter().map(|&i| l[i]).collect());
        Ok(Self {
            values,
            labels,
            sensor_names: self.sensor_names.clone(),
            label_name: self.label_name.clone(),
        })
    }
}

/// Per-sensor range used for min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    /// Column-wise range of a matrix.
    pub fn fit(values: &Array2<f64>) -> Self {
        let (min, max) = values
            .axis_iter(Axis(1))
            .map(|col| {
                col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
            })
            .unzip();
        Self { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Scale one value of column `j`; constant columns map to 0.
    #[inline]
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span > 0.0 {
            (v - self.min[j]) / span
        } else {
            0.0
        }
    }

    /// Scale every row of `values` in place.
    pub fn apply(&self, values: &mut Array2<f64>) -> Result<()> {
        if values.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: values.ncols(),
            });
        }
        for mut row in values.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.scale(j, *v);
            }
        }
        Ok(())
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Column holding integer class ids, split out from the values.
    pub label_column: Option<String>,
    /// Columns ignored entirely (timestamps and other non-numeric fields).
    pub skip_columns: Vec<String>,
}

impl CsvOptions {
    pub fn labelled(column: impl Into<String>) -> Self {
        Self {
            label_column: Some(column.into()),
            skip_columns: Vec::new(),
        }
    }
}

fn parse_value(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    s.parse().ok()
}

/// Read a headered CSV file. Empty cells and `NaN` become NaN.
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, options)
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, options: &CsvOptions) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let label_idx = match &options.label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?,
        ),
        None => None,
    };
    for skip in &options.skip_columns {
        if !headers.contains(skip) {
            return Err(Error::MissingColumn(skip.clone()));
        }
    }
    let value_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| Some(i) != label_idx && !options.skip_columns.contains(&headers[i]))
        .collect();

    let mut flat = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut rows = 0usize;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for &c in &value_cols {
            let raw = record.get(c).unwrap_or("");
            let v = parse_value(raw).ok_or_else(|| Error::Parse {
                row,
                column: headers[c].clone(),
                value: raw.to_string(),
            })?;
            flat.push(v);
        }
        if let (Some(li), Some(labels)) = (label_idx, labels.as_mut()) {
            let raw = record.get(li).unwrap_or("");
            let v: i64 = raw.trim().parse().map_err(|_| Error::Parse {
                row,
                column: headers[li].clone(),
                value: raw.to_string(),
            })?;
            labels.push(v);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, value_cols.len()), flat)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let names = value_cols.iter().map(|&c| headers[c].clone()).collect();
    let ts = TimeSeries::new(values, labels, names)?;
    Ok(match &options.label_column {
        Some(n) => ts.with_label_name(n.clone()),
        None => ts,
    })
}

/// Write `ts` as CSV with the same layout [`load_csv`] reads.
///
/// Floats are written in shortest round-trip form, so output is byte-stable.
pub fn write_csv<W: std::io::Write>(ts: &TimeSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let label_name = ts.label_name().unwrap_or("label");
    let mut header: Vec<&str> = ts.sensor_names().iter().map(String::as_str).collect();
    if ts.labels().is_some() {
        header.push(label_name);
    }
    w.write_record(&header)?;
    let mut buf: Vec<String> = Vec::with_capacity(header.len());
    for t in 0..ts.len() {
        buf.clear();
        buf.extend(ts.row(t).iter().map(|v| v.to_string()));
        if let Some(l) = ts.labels() {
            buf.push(l[t].to_string());
        }
        w.write_record(&buf)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Remove every row holding at least one NaN.
pub fn drop_nan_rows(ts: &TimeSeries) -> Result<TimeSeries> {
    let keep: Vec<bool> = ts
        .values
        .rows()
        .into_iter()
        .map(|r| !r.iter().any(|v| v.is_nan()))
        .collect();
    ts.keep_rows(&keep, "drop_nan_rows")
}

/// Remove one sensor column by name.
pub fn drop_sensor(ts: &TimeSeries, name: &str) -> Result<TimeSeries> {
    let j = ts
        .sensor_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::UnknownSensor(name.to_string()))?;
    if ts.sensors() == 1 {
        return Err(Error::Empty(format!("dropping {name:?} leaves no sensors")));
    }
    let cols: Vec<usize> = (0..ts.sensors()).filter(|&c| c != j).collect();
    let mut names = ts.sensor_names.clone();
    names.remove(j);
    Ok(TimeSeries {
        values: ts.values.select(Axis(1), &cols).as_standard_layout().into_owned(),
        labels: ts.labels.clone(),
        sensor_names: names,
        label_name: ts.label_name.clone(),
    })
}

/// Default pulse thresholds for the EEG eye-state recordings.
pub const EEG_PULSE_LOW: f64 = 3000.0;
pub const EEG_PULSE_HIGH: f64 = 5000.0;

/// Remove rows where any sensor lies strictly below `low` or strictly above `high`.
pub fn remove_pulse_rows(ts: &TimeSeries, low: f64, high: f64) -> Result<TimeSeries> {
    if low.partial_cmp(&high) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidArgument(format!(
            "pulse thresholds need low < high, got {low} and {high}"
        )));
    }
    let keep: Vec<bool> = ts
        .values
        .rows()
        .into_iter()
        .map(|r| r.iter().all(|&v| v >= low && v <= high))
        .collect();
    ts.keep_rows(&keep, "remove_pulse_rows")
}

/// Block-minimum downsampling; the trailing partial block is kept and each
/// block takes the label of its first row.
pub fn downsample_block_min(ts: &TimeSeries, factor: usize) -> Result<TimeSeries> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsampling factor must be >= 1".into()));
    }
    let (t, m) = ts.values.dim();
    let blocks = t.div_ceil(factor);
    let mut out = Array2::from_elem((blocks, m), f64::INFINITY);
    for (b, mut row) in out.rows_mut().into_iter().enumerate() {
        for src in b * factor..((b + 1) * factor).min(t) {
            for (o, &v) in row.iter_mut().zip(ts.row(src)) {
                // f64::min skips NaN, same as a NaN-skipping block reduction.
                *o = o.min(v);
            }
        }
    }
    let labels = ts
        .labels
        .as_ref()
        .map(|l| (0..blocks).map(|b| l[b * factor]).collect());
    Ok(TimeSeries {
        values: out,
        labels,
        sensor_names: ts.sensor_names.clone(),
        label_name: ts.label_name.clone(),
    })
}

/// Scale each sensor to [0, 1] by its own range; constant sensors become 0.
pub fn normalize_min_max(ts: &TimeSeries) -> Result<(TimeSeries, NormalizationParams)> {
    if ts.values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument(
            "normalize_min_max requires NaN-free input".into(),
        ));
    }
    let params = NormalizationParams::fit(&ts.values);
    let mut values = ts.values.clone();
    params.apply(&mut values)?;
    Ok((
        TimeSeries {
            values,
            labels: ts.labels.clone(),
            sensor_names: ts.sensor_names.clone(),
            label_name: ts.label_name.clone(),
        },
        params,
    ))
}

/// One recorded preprocessing operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum PreprocessStep {
    DropSensor { name: String },
    DropNanRows,
    RemovePulseRows { low: f64, high: f64 },
    DownsampleBlockMin { factor: usize },
    NormalizeMinMax,
}

/// An ordered chain of preprocessing steps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub steps: Vec<PreprocessStep>,
}

/// Output of [`Pipeline::apply`].
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub series: TimeSeries,
    pub normalization: Option<NormalizationParams>,
}

impl Pipeline {
    /// Pulse removal with the EEG thresholds, then scaling.
    pub fn eeg() -> Self {
        Self {
            steps: vec![
                PreprocessStep::RemovePulseRows {
                    low: EEG_PULSE_LOW,
                    high: EEG_PULSE_HIGH,
                },
                PreprocessStep::NormalizeMinMax,
            ],
        }
    }

    /// Drop the heart-rate channel and NaN rows, reduce 100 Hz to 10 Hz, scale.
    pub fn pamap2(heart_rate_column: &str) -> Self {
        Self {
            steps: vec![
                PreprocessStep::DropSensor {
                    name: heart_rate_column.to_string(),
                },
                PreprocessStep::DropNanRows,
                PreprocessStep::DownsampleBlockMin { factor: 10 },
                PreprocessStep::NormalizeMinMax,
            ],
        }
    }

    pub fn pulp() -> Self {
        Self {
            steps: vec![PreprocessStep::NormalizeMinMax],
        }
    }

    pub fn apply(&self, ts: &TimeSeries) -> Result<Preprocessed> {
        let mut cur = ts.clone();
        let mut normalization = None;
        for step in &self.steps {
            cur = match step {
                PreprocessStep::DropSensor { name } => drop_sensor(&cur, name)?,
                PreprocessStep::DropNanRows => drop_nan_rows(&cur)?,
                PreprocessStep::RemovePulseRows { low, high } => {
                    remove_pulse_rows(&cur, *low, *high)?
                }
                PreprocessStep::DownsampleBlockMin { factor } => {
                    downsample_block_min(&cur, *factor)?
                }
                PreprocessStep::NormalizeMinMax => {
                    let (ts, p) = normalize_min_max(&cur)?;
                    normalization = Some(p);
                    ts
                }
            };
        }
        Ok(Preprocessed {
            series: cur,
            normalization,
        })
    }
}

/// Sidecar written next to a preprocessed CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessMetadata {
    pub source: String,
    pub rows: usize,
    pub sensors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    pub pipeline: Pipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationParams>,
}

impl PreprocessMetadata {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Metadata(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Metadata(e.to_string()))
    }
}

/// Path of the metadata sidecar for a data file: `data.csv` -> `data.meta.toml`.
pub fn sidecar_path(data: &Path) -> std::path::PathBuf {
    data.with_extension("meta.toml")
}
