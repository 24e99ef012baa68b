//! Dataset loading, per-feature min–max scaling and mini-batch slicing.
//!
//! Two input formats are read:
//!
//! * CSV: comma separated, label in the first column, decimal floats, no
//!   header unless [`LoadOptions::skip_header`] is set.
//! * LIBSVM: `label index:value ...` with 1-based indices; absent indices are
//!   zero.
//!
//! Raw labels are arbitrary tokens. A [`LabelMap`] assigns them dense class
//! ids `0..K`, numerically sorted when every token parses as a number and
//! lexicographically otherwise.

use std::fmt::Write as _;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Dense feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, num_features: usize, num_classes: usize) -> Result<Self> {
        if num_features == 0 {
            return Err(invalid("datasets need at least one feature"));
        }
        if features.len() != labels.len() * num_features {
            return Err(invalid(format!(
                "{} feature values do not fill {} rows of {num_features}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite feature value"));
        }
        if let Some(&label) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self {
            features,
            num_features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features.chunks_exact(self.num_features).zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            num_features: self.num_features,
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Pad every row with zero features up to `num_features`.
    pub fn widen(&mut self, num_features: usize) -> Result<()> {
        if num_features < self.num_features {
            return Err(invalid("cannot narrow a dataset"));
        }
        if num_features == self.num_features {
            return Ok(());
        }
        let mut features = Vec::with_capacity(self.len() * num_features);
        for (row, _) in self.rows() {
            features.extend_from_slice(row);
            features.extend(std::iter::repeat_n(0.0, num_features - self.num_features));
        }
        self.features = features;
        self.num_features = num_features;
        Ok(())
    }

    /// Label-first CSV using the shortest decimal that round-trips each value.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (row, y) in self.rows() {
            write!(out, "{y}").unwrap();
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Libsvm,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "libsvm" | "svmlight" => Ok(Format::Libsvm),
            other => Err(invalid(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub format: Format,
    /// Ignore the first line of a CSV file.
    pub skip_header: bool,
    /// Expected feature count. LIBSVM files otherwise use the largest index.
    pub num_features: Option<usize>,
}

impl LoadOptions {
    pub fn new(format: Format) -> Self {
        Self {
            format,
            skip_header: false,
            num_features: None,
        }
    }
}

/// Parsed file contents with labels still in their raw textual form.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    pub features: Vec<f64>,
    pub num_features: usize,
    pub labels: Vec<String>,
}

/// Dense mapping between raw label tokens and class ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    raw: Vec<String>,
}

impl LabelMap {
    pub fn fit<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut raw: Vec<String> = labels.into_iter().map(str::to_owned).collect();
        raw.sort();
        raw.dedup();
        let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
        if let Some(values) = numeric {
            let mut paired: Vec<_> = values.into_iter().zip(raw).collect();
            paired.sort_by(|a, b| a.0.total_cmp(&b.0));
            raw = paired.into_iter().map(|(_, s)| s).collect();
        }
        Self { raw }
    }

    pub fn from_raw(raw: Vec<String>) -> Self {
        Self { raw }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn class_of(&self, raw: &str) -> Option<usize> {
        self.raw.iter().position(|r| r == raw)
    }

    pub fn raw_of(&self, class: usize) -> Option<&str> {
        self.raw.get(class).map(String::as_str)
    }

    pub fn raw_labels(&self) -> &[String] {
        &self.raw
    }
}

#[derive(Clone, Debug)]
pub enum LabelPolicy {
    /// Build the map from the labels present in the file.
    Dense,
    /// Use a map fitted elsewhere, e.g. on the union of train and test.
    Fixed(LabelMap),
}

impl RawDataset {
    pub fn encode(&self, map: &LabelMap) -> Result<Dataset> {
        let labels = self
            .labels
            .iter()
            .map(|l| map.class_of(l).ok_or_else(|| invalid(format!("label {l:?} missing from label map"))))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.features.clone(), labels, self.num_features, map.len().max(1))
    }
}

/// Parse a dataset file and encode its labels.
pub fn load_dataset(path: &Path, options: &LoadOptions, policy: LabelPolicy) -> Result<(Dataset, LabelMap)> {
    let raw = load_raw(path, options)?;
    let map = match policy {
        LabelPolicy::Dense => LabelMap::fit(raw.labels.iter().map(String::as_str)),
        LabelPolicy::Fixed(map) => map,
    };
    let data = raw.encode(&map)?;
    Ok((data, map))
}

pub fn load_raw(path: &Path, options: &LoadOptions) -> Result<RawDataset> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    parse_raw(&text, path, options)
}

/// Parse dataset text; `path` only labels error messages.
pub fn parse_raw(text: &str, path: &Path, options: &LoadOptions) -> Result<RawDataset> {
    let raw = match options.format {
        Format::Csv => parse_csv(text, path, options)?,
        Format::Libsvm => parse_libsvm(text, path, options)?,
    };
    if raw.labels.is_empty() {
        return Err(parse_error(path, 0, "no data rows"));
    }
    Ok(raw)
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn parse_value(path: &Path, line: usize, token: &str) -> Result<f64> {
    let v: f64 = token
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("cannot parse {token:?} as a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("non-finite value {token:?}")));
    }
    Ok(v)
}

fn parse_csv(text: &str, path: &Path, options: &LoadOptions) -> Result<RawDataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = options.num_features;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if i == 0 && options.skip_header {
            continue;
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label = fields.next().unwrap_or_default().trim();
        if label.is_empty() {
            return Err(parse_error(path, lineno, "missing label"));
        }
        let start = features.len();
        for token in fields {
            features.push(parse_value(path, lineno, token)?);
        }
        let count = features.len() - start;
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(parse_error(path, lineno, format!("expected {w} features, found {count}")));
            }
            Some(_) => {}
        }
        labels.push(label.to_owned());
    }
    let num_features = width.unwrap_or(0);
    if num_features == 0 && !labels.is_empty() {
        return Err(parse_error(path, 1, "rows carry no features"));
    }
    Ok(RawDataset {
        features,
        num_features,
        labels,
    })
}

fn parse_libsvm(text: &str, path: &Path, options: &LoadOptions) -> Result<RawDataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = tokens.next().expect("nonempty line");
        let mut row = Vec::new();
        for token in tokens {
            let (idx, val) = token
                .split_once(':')
                .ok_or_else(|| parse_error(path, lineno, format!("expected index:value, found {token:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("bad feature index {idx:?}")))?;
            if idx == 0 {
                return Err(parse_error(path, lineno, "feature indices start at 1"));
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, parse_value(path, lineno, val)?));
        }
        rows.push(row);
        labels.push(label.to_owned());
    }
    let num_features = match options.num_features {
        Some(d) if d < max_index => {
            return Err(parse_error(path, 0, format!("feature index {max_index} exceeds {d} features")));
        }
        Some(d) => d,
        None => max_index,
    };
    if num_features == 0 && !labels.is_empty() {
        return Err(parse_error(path, 1, "rows carry no features"));
    }
    let mut features = vec![0.0; rows.len() * num_features];
    for (r, row) in rows.iter().enumerate() {
        for &(d, v) in row {
            features[r * num_features + d] = v;
        }
    }
    Ok(RawDataset {
        features,
        num_features,
        labels,
    })
}

/// Per-feature offsets and ranges fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: Vec<f64>,
    pub range: Vec<f64>,
}

pub fn fit_scaling(train: &Dataset) -> Scaling {
    let d = train.num_features();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for (row, _) in train.rows() {
        for k in 0..d {
            min[k] = min[k].min(row[k]);
            max[k] = max[k].max(row[k]);
        }
    }
    if train.is_empty() {
        min.fill(0.0);
        max.fill(0.0);
    }
    let range = min.iter().zip(&max).map(|(lo, hi)| hi - lo).collect();
    Scaling { min, range }
}

/// `(x - min) / range` per feature. Constant features map to zero and values
/// outside the training range are left unclipped.
pub fn apply_scaling(scaling: &Scaling, data: &Dataset) -> Result<Dataset> {
    if scaling.min.len() != data.num_features() {
        return Err(Error::DimensionMismatch {
            expected: scaling.min.len(),
            actual: data.num_features(),
        });
    }
    let d = data.num_features();
    let features = data
        .features()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let k = i % d;
            if scaling.range[k] > 0.0 {
                (v - scaling.min[k]) / scaling.range[k]
            } else {
                0.0
            }
        })
        .collect();
    Dataset::new(features, data.labels().to_vec(), d, data.num_classes())
}

impl Scaling {
    pub fn apply_point(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.range))
            .map(|(&v, (&lo, &r))| if r > 0.0 { (v - lo) / r } else { 0.0 })
            .collect()
    }
}

/// A shuffled order of row indices cut into contiguous batches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Minibatches {
    pub order: Vec<usize>,
    pub ranges: Vec<Range<usize>>,
}

impl Minibatches {
    pub fn batch(&self, i: usize) -> &[usize] {
        &self.order[self.ranges[i].clone()]
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// Split `n` rows into `num_batches` batches whose sizes differ by at most
/// one, after a seeded shuffle (`None` keeps file order).
pub fn make_minibatches(n: usize, num_batches: usize, shuffle_seed: Option<u64>) -> Result<Minibatches> {
    if num_batches == 0 || num_batches > n {
        return Err(invalid(format!("cannot cut {n} rows into {num_batches} batches")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let base = n / num_batches;
    let extra = n % num_batches;
    let mut ranges = Vec::with_capacity(num_batches);
    let mut start = 0;
    for b in 0..num_batches {
        let size = base + usize::from(b < extra);
        ranges.push(start..start + size);
        start += size;
    }
    Ok(Minibatches { order, ranges })
}

/// Scaling vectors and label map recorded next to a run's outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetadata {
    pub scaling: Scaling,
    pub labels: LabelMap,
}

impl RunMetadata {
    const HEADER: &'static str = "# mondrian run metadata v1";

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", Self::HEADER).unwrap();
        writeln!(out, "num_features {}", self.scaling.min.len()).unwrap();
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "scaling_min {}", join(&self.scaling.min)).unwrap();
        writeln!(out, "scaling_range {}", join(&self.scaling.range)).unwrap();
        for (k, raw) in self.labels.raw_labels().iter().enumerate() {
            writeln!(out, "label {k} {raw}").unwrap();
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == Self::HEADER => {}
            _ => return Err(parse_error(path, 1, "missing metadata header")),
        }
        let mut min = None;
        let mut range = None;
        let mut labels = Vec::new();
        let mut num_features = None;
        for (i, line) in lines {
            let lineno = i + 1;
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let floats = |rest: &str| -> Result<Vec<f64>> {
                rest.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| parse_error(path, lineno, format!("bad number {t:?}"))))
                    .collect()
            };
            match key {
                "num_features" => {
                    num_features = Some(rest.trim().parse::<usize>().map_err(|_| parse_error(path, lineno, "bad feature count"))?)
                }
                "scaling_min" => min = Some(floats(rest)?),
                "scaling_range" => range = Some(floats(rest)?),
                "label" => {
                    let (k, raw) = rest.split_once(' ').ok_or_else(|| parse_error(path, lineno, "bad label line"))?;
                    let k: usize = k.parse().map_err(|_| parse_error(path, lineno, "bad class id"))?;
                    if k != labels.len() {
                        return Err(parse_error(path, lineno, "class ids must be listed in order"));
                    }
                    labels.push(raw.to_owned());
                }
                "" => {}
                other => return Err(parse_error(path, lineno, format!("unknown key {other:?}"))),
            }
        }
        let min = min.ok_or_else(|| parse_error(path, 0, "missing scaling_min"))?;
        let range = range.ok_or_else(|| parse_error(path, 0, "missing scaling_range"))?;
        let d = num_features.unwrap_or(min.len());
        if min.len() != d || range.len() != d {
            return Err(parse_error(path, 0, "scaling vectors disagree with num_features"));
        }
        Ok(Self {
            scaling: Scaling { min, range },
            labels: LabelMap::from_raw(labels),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(Error::io(path))?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(Error::io(path))?, path)
    }
}
