//! The streaming evaluation protocol.
//!
//! Features are rescaled to `[0, 1]` with the minimum and range of the full
//! training split, computed before streaming starts. A strictly streaming
//! learner would not know these in advance; the protocol accepts that to
//! keep inputs on a common scale. Test values outside the training range are
//! not clipped.
//!
//! The training split is shuffled with the run seed (unless disabled) and cut
//! into mini-batches. The online run feeds the batches to one forest in turn,
//! timing only the training calls, and scores the full test split after each
//! batch. The batch run refits a fresh forest on each prefix of the shuffled
//! training order.

use std::path::{Path, PathBuf};
use std::time::Instant;

use mondrian_forest::data::{apply_scaling, fit_scaling, load_raw, make_minibatches, RunMetadata};
use mondrian_forest::{Dataset, Error, ForestConfig, LabelMap, LoadOptions, MondrianForest, Result};

use crate::record::RunRecord;

/// Forest and protocol settings shared by the evaluation commands.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub num_trees: usize,
    pub lifetime: f64,
    pub gamma_multiplier: f64,
    pub use_pausing: bool,
    /// First seed; seed `i` of a multi-seed run is `seed + i`.
    pub seed: u64,
    pub num_seeds: usize,
    pub num_batches: usize,
    pub shuffle: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_trees: 100,
            lifetime: f64::INFINITY,
            gamma_multiplier: 10.0,
            use_pausing: true,
            seed: 0,
            num_seeds: 5,
            num_batches: 100,
            shuffle: true,
        }
    }
}

impl RunConfig {
    pub fn forest_config(&self, seed: u64, num_features: usize, num_classes: usize) -> ForestConfig {
        ForestConfig {
            num_trees: self.num_trees,
            lifetime: self.lifetime,
            gamma_multiplier: self.gamma_multiplier,
            seed,
            use_pausing: self.use_pausing,
            num_classes,
            num_features,
        }
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> {
        let first = self.seed;
        (0..self.num_seeds as u64).map(move |i| first.wrapping_add(i))
    }

    fn record(&self, mode: &str, seed: u64, step: usize, points: usize, total: usize) -> RunRecord {
        RunRecord {
            mode: mode.into(),
            seed,
            step,
            fraction_seen: points as f64 / total as f64,
            points_seen: points,
            cumulative_train_seconds: 0.0,
            test_accuracy: 0.0,
            mean_weighted_depth: 0.0,
            num_trees: self.num_trees,
            lifetime: self.lifetime,
            gamma_multiplier: self.gamma_multiplier,
            use_pausing: self.use_pausing,
        }
    }
}

/// Scaled train and test splits sharing one label map and feature count.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub metadata: RunMetadata,
}

/// Load both splits, assign class ids over the union of their labels, pad
/// LIBSVM rows to a common width and rescale with the training statistics.
pub fn load_split(train_path: &Path, test_path: &Path, options: &LoadOptions) -> Result<Split> {
    let raw_train = load_raw(train_path, options)?;
    let raw_test = load_raw(test_path, options)?;
    if raw_train.labels.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no rows", train_path.display())));
    }
    if raw_test.labels.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no rows", test_path.display())));
    }
    let labels = LabelMap::fit(raw_train.labels.iter().chain(&raw_test.labels).map(String::as_str));
    if labels.len() < 2 {
        return Err(Error::InvalidArgument("need at least two distinct labels".into()));
    }
    let mut train = raw_train.encode(&labels)?;
    let mut test = raw_test.encode(&labels)?;
    let width = train.num_features().max(test.num_features());
    if train.num_features() != test.num_features() && options.format == mondrian_forest::Format::Csv {
        return Err(Error::DimensionMismatch {
            expected: train.num_features(),
            actual: test.num_features(),
        });
    }
    train.widen(width)?;
    test.widen(width)?;
    Ok(prepare_split(train, test, labels))
}

/// Rescale already-encoded splits with the training statistics.
pub fn prepare_split(train: Dataset, test: Dataset, labels: LabelMap) -> Split {
    let scaling = fit_scaling(&train);
    let train = apply_scaling(&scaling, &train).expect("scaling fitted on train");
    let test = apply_scaling(&scaling, &test).expect("test shares train's width");
    Split {
        train,
        test,
        metadata: RunMetadata { scaling, labels },
    }
}

/// Metadata file written next to a snapshot.
pub fn metadata_path(snapshot: &Path) -> PathBuf {
    let mut name = snapshot.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

fn training_order(cfg: &RunConfig, n: usize, seed: u64) -> Result<mondrian_forest::data::Minibatches> {
    make_minibatches(n, cfg.num_batches.min(n).max(1), cfg.shuffle.then_some(seed))
}

/// One online run: returns a record per mini-batch and the final forest.
pub fn eval_online_seed(split: &Split, cfg: &RunConfig, seed: u64) -> Result<(Vec<RunRecord>, MondrianForest)> {
    let train = &split.train;
    let batches = training_order(cfg, train.len(), seed)?;
    let mut forest = MondrianForest::new(cfg.forest_config(seed, train.num_features(), train.num_classes()))?;
    let mut records = Vec::with_capacity(batches.len());
    let mut seconds = 0.0;
    let mut seen = 0;
    for b in 0..batches.len() {
        let rows = batches.batch(b);
        let batch: Vec<_> = rows.iter().map(|&i| (train.row(i).to_vec(), train.labels()[i])).collect();
        let start = Instant::now();
        forest.partial_fit(&batch)?;
        seconds += start.elapsed().as_secs_f64();
        seen += rows.len();
        let mut r = cfg.record("online", seed, b + 1, seen, train.len());
        r.cumulative_train_seconds = seconds;
        r.test_accuracy = forest.accuracy(&split.test)?;
        r.mean_weighted_depth = forest.mean_weighted_depth();
        records.push(r);
    }
    Ok((records, forest))
}

pub fn eval_online(split: &Split, cfg: &RunConfig) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for seed in cfg.seeds() {
        out.extend(eval_online_seed(split, cfg, seed)?.0);
    }
    Ok(out)
}

/// One batch run: a fresh forest fitted on the first `f * N` points of the
/// shuffled training order for each fraction `f`.
pub fn eval_batch_seed(
    split: &Split,
    cfg: &RunConfig,
    seed: u64,
    fractions: &[f64],
) -> Result<(Vec<RunRecord>, Option<MondrianForest>)> {
    let train = &split.train;
    if fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::InvalidArgument("fractions must lie in (0, 1]".into()));
    }
    if fractions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("fractions must be strictly increasing".into()));
    }
    let order = training_order(cfg, train.len(), seed)?.order;
    let mut records = Vec::with_capacity(fractions.len());
    let mut last = None;
    for (step, &f) in fractions.iter().enumerate() {
        let count = ((f * train.len() as f64).round() as usize).clamp(1, train.len());
        let subset = train.select(&order[..count]);
        let mut forest = MondrianForest::new(cfg.forest_config(seed, train.num_features(), train.num_classes()))?;
        let start = Instant::now();
        forest.fit(&subset)?;
        let seconds = start.elapsed().as_secs_f64();
        let mut r = cfg.record("batch", seed, step + 1, count, train.len());
        r.fraction_seen = f;
        r.cumulative_train_seconds = seconds;
        r.test_accuracy = forest.accuracy(&split.test)?;
        r.mean_weighted_depth = forest.mean_weighted_depth();
        records.push(r);
        last = Some(forest);
    }
    Ok((records, last))
}

pub fn eval_batch(split: &Split, cfg: &RunConfig, fractions: &[f64]) -> Result<Vec<RunRecord>> {
    let mut out = Vec::new();
    for seed in cfg.seeds() {
        out.extend(eval_batch_seed(split, cfg, seed, fractions)?.0);
    }
    Ok(out)
}

/// Data-weighted depth of a forest trained online on a full split.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthReport {
    pub num_points: usize,
    pub mean: f64,
    pub std: f64,
    pub log2_n: f64,
    pub per_tree: Vec<f64>,
}

impl std::fmt::Display for DepthReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "N = {}: data-weighted depth {:.3} ± {:.3} over {} trees (log2 N = {:.3})",
            self.num_points,
            self.mean,
            self.std,
            self.per_tree.len(),
            self.log2_n
        )
    }
}

pub fn depth_stats(train: &Dataset, cfg: &RunConfig, seed: u64) -> Result<DepthReport> {
    let batches = training_order(cfg, train.len(), seed)?;
    let mut forest = MondrianForest::new(cfg.forest_config(seed, train.num_features(), train.num_classes()))?;
    for b in 0..batches.len() {
        forest.partial_fit_dataset(&train.select(batches.batch(b)))?;
    }
    let per_tree: Vec<f64> = forest.tree_stats().iter().map(|s| s.data_weighted_depth).collect();
    let (mean, std) = mondrian_forest::stats::mean_std(&per_tree);
    Ok(DepthReport {
        num_points: train.len(),
        mean,
        std,
        log2_n: (train.len() as f64).log2(),
        per_tree,
    })
}

/// Class probabilities for one raw feature vector, with labels mapped back
/// to their original tokens.
pub fn predict_point(forest: &MondrianForest, metadata: &RunMetadata, raw: &[f64]) -> Result<Vec<(String, f64)>> {
    if raw.len() != metadata.scaling.min.len() {
        return Err(Error::DimensionMismatch {
            expected: metadata.scaling.min.len(),
            actual: raw.len(),
        });
    }
    let x = metadata.scaling.apply_point(raw);
    let p = forest.predict_proba(&x)?;
    Ok(p.probs()
        .iter()
        .enumerate()
        .map(|(k, &v)| (metadata.labels.raw_of(k).unwrap_or("?").to_owned(), v))
        .collect())
}
