//! Statistical and structural self-checks of the forest implementation.
//!
//! Each check returns a report that prints a human-readable summary and
//! knows whether it passed.

use std::fmt;
use std::time::Instant;

use mondrian_forest::data::make_minibatches;
use mondrian_forest::posterior::{posterior_path, recompute_counts};
use mondrian_forest::predict::branch_off_probability;
use mondrian_forest::stats::{ks_two_sample, linear_fit, mean_std, median, KsResult, LinearFit};
use mondrian_forest::{
    predict_tree, predict_tree_mc_oracle, Dataset, MondrianForest, MondrianTree, PointId, PointStore, PosteriorParams,
    Result, RngStream, TreeSettings,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::protocol::{self, RunConfig, Split};
use crate::record;
use crate::synth;

/// Below this many seeds per mode the KS p-values carry little information.
pub const MIN_RELIABLE_SEEDS: usize = 100;

fn store_of(data: &Dataset) -> PointStore {
    let mut store = PointStore::new(data.num_features(), data.num_classes());
    for (x, y) in data.rows() {
        store.push(x, y).expect("dataset rows are valid");
    }
    store
}

/// Tree summaries compared between constructions.
#[derive(Clone, Debug, Default)]
struct TreeSample {
    num_leaves: Vec<f64>,
    max_depth: Vec<f64>,
    root_time: Vec<f64>,
}

impl TreeSample {
    fn from_trees(trees: Vec<MondrianTree>) -> Self {
        let mut s = Self::default();
        for t in trees {
            let st = t.stats();
            s.num_leaves.push(st.num_leaves as f64);
            s.max_depth.push(st.max_depth as f64);
            s.root_time.push(t.node(t.root()).split_time());
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct EquivalenceConfig {
    pub num_points: usize,
    pub num_seeds: usize,
    pub lifetime: f64,
    pub alpha: f64,
    pub data_seed: u64,
    /// Disable new-parent insertion during extension. Self-check of the
    /// test itself: the broken sampler must be rejected.
    pub broken_extension: bool,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            num_points: 50,
            num_seeds: 2000,
            lifetime: f64::INFINITY,
            alpha: 0.01,
            data_seed: 0,
            broken_extension: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    pub title: String,
    pub num_seeds: usize,
    pub lifetime: f64,
    pub alpha: f64,
    pub tests: Vec<(&'static str, KsResult)>,
    pub warning: Option<String>,
}

impl EquivalenceReport {
    fn new(title: String, cfg: &EquivalenceConfig, a: &TreeSample, b: &TreeSample) -> Self {
        let tests = vec![
            ("num_leaves", ks_two_sample(&a.num_leaves, &b.num_leaves)),
            ("max_depth", ks_two_sample(&a.max_depth, &b.max_depth)),
            ("root_split_time", ks_two_sample(&a.root_time, &b.root_time)),
        ]
        .into_iter()
        .map(|(name, r)| (name, r.expect("non-empty samples")))
        .collect();
        let warning = (cfg.num_seeds < MIN_RELIABLE_SEEDS).then(|| {
            format!(
                "insufficient samples: {} seeds per mode (at least {MIN_RELIABLE_SEEDS} recommended)",
                cfg.num_seeds
            )
        });
        Self {
            title,
            num_seeds: cfg.num_seeds,
            lifetime: cfg.lifetime,
            alpha: cfg.alpha,
            tests,
            warning,
        }
    }

    pub fn passed(&self) -> bool {
        self.tests.iter().all(|(_, r)| !r.rejects(self.alpha))
    }

    pub fn min_p_value(&self) -> f64 {
        self.tests.iter().map(|(_, r)| r.p_value).fold(1.0, f64::min)
    }
}

impl fmt::Display for EquivalenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} ({} seeds per mode, lifetime {})", self.title, self.num_seeds, self.lifetime)?;
        if let Some(w) = &self.warning {
            writeln!(f, "  warning: {w}")?;
        }
        for (name, r) in &self.tests {
            let verdict = if r.rejects(self.alpha) { "reject" } else { "ok" };
            writeln!(f, "  {name:<16} D = {:.4}  p = {:.4}  {verdict}", r.statistic, r.p_value)?;
        }
        write!(
            f,
            "  {} at alpha = {}",
            if self.passed() { "indistinguishable" } else { "distributions differ" },
            self.alpha
        )
    }
}

fn online_trees(store: &PointStore, order: &[PointId], settings: &TreeSettings, seeds: usize, stream: u64) -> Vec<MondrianTree> {
    (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            let mut tree = MondrianTree::sample(store, &order[..1], settings.clone(), RngStream::new(seed, stream))
                .expect("valid settings");
            for &p in &order[1..] {
                tree.extend(store, p).expect("point in store");
            }
            tree
        })
        .collect()
}

fn equivalence_setup(cfg: &EquivalenceConfig) -> Result<(PointStore, TreeSettings)> {
    let data = synth::uniform_random_labels(cfg.num_points, 2, 2, cfg.data_seed)?;
    let mut settings = TreeSettings::new(cfg.lifetime, 2, false);
    settings.skip_parent_insertion = cfg.broken_extension;
    Ok((store_of(&data), settings))
}

/// Trees grown point by point against trees sampled in one batch.
pub fn online_vs_batch(cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let (store, settings) = equivalence_setup(cfg)?;
    let ids: Vec<PointId> = store.ids().collect();
    let mut batch_settings = settings.clone();
    batch_settings.skip_parent_insertion = false;
    let batch: Vec<MondrianTree> = (0..cfg.num_seeds as u64)
        .into_par_iter()
        .map(|seed| MondrianTree::sample(&store, &ids, batch_settings.clone(), RngStream::new(seed, 0)).expect("valid settings"))
        .collect();
    let online = online_trees(&store, &ids, &settings, cfg.num_seeds, 1);
    let title = if cfg.broken_extension {
        "online vs batch, broken extension"
    } else {
        "online vs batch"
    };
    Ok(EquivalenceReport::new(
        title.into(),
        cfg,
        &TreeSample::from_trees(batch),
        &TreeSample::from_trees(online),
    ))
}

/// Trees grown online from two different random insertion orders.
pub fn order_invariance(cfg: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let (store, settings) = equivalence_setup(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data_seed ^ 0x5eed);
    let mut first: Vec<PointId> = store.ids().collect();
    let mut second = first.clone();
    first.shuffle(&mut rng);
    second.shuffle(&mut rng);
    let a = online_trees(&store, &first, &settings, cfg.num_seeds, 1);
    let b = online_trees(&store, &second, &settings, cfg.num_seeds, 2);
    Ok(EquivalenceReport::new(
        "insertion order A vs B".into(),
        cfg,
        &TreeSample::from_trees(a),
        &TreeSample::from_trees(b),
    ))
}

#[derive(Clone, Debug)]
pub struct McConfig {
    pub num_fixtures: usize,
    pub num_samples: usize,
    pub num_points: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            num_fixtures: 20,
            num_samples: 100_000,
            num_points: 40,
            tolerance: 0.01,
            seed: 0,
        }
    }
}

/// One tree with an exterior and an interior test point.
#[derive(Clone, Debug)]
pub struct McFixture {
    pub lifetime: f64,
    pub use_pausing: bool,
    pub path_len: usize,
    pub exterior: Vec<f64>,
    /// Branch-off rate and probability at the root for the exterior point.
    pub root_eta: f64,
    pub root_p_split: f64,
    /// Largest branch-off probability along the exterior point's path.
    pub max_p_split: f64,
    pub exterior_deviation: f64,
    pub interior_deviation: f64,
}

#[derive(Clone, Debug)]
pub struct McReport {
    pub num_samples: usize,
    pub tolerance: f64,
    pub fixtures: Vec<McFixture>,
}

impl McReport {
    pub fn max_exterior_deviation(&self) -> f64 {
        self.fixtures.iter().map(|f| f.exterior_deviation).fold(0.0, f64::max)
    }

    pub fn max_interior_deviation(&self) -> f64 {
        self.fixtures.iter().map(|f| f.interior_deviation).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        !self.fixtures.is_empty() && self.max_exterior_deviation() < self.tolerance && self.max_interior_deviation() == 0.0
    }
}

impl fmt::Display for McReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "analytic vs Monte Carlo prediction ({} samples per point)", self.num_samples)?;
        writeln!(f, "  fixture  lifetime  pausing  path  root_eta  root_p_s  max_p_s  ext_dev   int_dev")?;
        for (i, x) in self.fixtures.iter().enumerate() {
            writeln!(
                f,
                "  {i:>7}  {:>8}  {:>7}  {:>4}  {:>8.4}  {:>8.4}  {:>7.4}  {:>.2e}  {:.1e}",
                x.lifetime, x.use_pausing, x.path_len, x.root_eta, x.root_p_split, x.max_p_split, x.exterior_deviation, x.interior_deviation
            )?;
        }
        write!(
            f,
            "  max exterior deviation {:.2e} (tolerance {}), max interior deviation {:.1e}",
            self.max_exterior_deviation(),
            self.tolerance,
            self.max_interior_deviation()
        )
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Compare the closed-form predictive distribution with its Monte Carlo
/// oracle on random trees.
pub fn mc_check(cfg: &McConfig) -> Result<McReport> {
    const LIFETIMES: [f64; 4] = [f64::INFINITY, 1.0, 3.0, 10.0];
    let fixtures = (0..cfg.num_fixtures)
        .into_par_iter()
        .map(|i| -> Result<McFixture> {
            let seed = cfg.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let num_classes = 3;
            let data = synth::uniform_random_labels(cfg.num_points.max(2), 2, num_classes, seed)?;
            let store = store_of(&data);
            let lifetime = LIFETIMES[i % LIFETIMES.len()];
            let use_pausing = i % 2 == 1;
            let ids: Vec<PointId> = store.ids().collect();
            let half = ids.len() / 2;
            let mut tree = MondrianTree::sample(&store, &ids[..half], TreeSettings::new(lifetime, num_classes, use_pausing), RngStream::new(seed, 0))?;
            for &p in &ids[half..] {
                tree.extend(&store, p)?;
            }
            let params = PosteriorParams::uniform(10.0 * 2.0, num_classes)?;

            // Exterior: outside the extent of the leaf it routes to.
            let exterior = loop {
                let x = vec![rng.random_range(-0.5..1.5), rng.random_range(-0.5..1.5)];
                let leaf = tree.route_to_leaf(&x)?;
                if branch_off_probability(&tree, leaf, &x).eta > 0.0 {
                    break x;
                }
            };
            let path = tree.path(&exterior)?;
            let branch: Vec<_> = path.iter().map(|&j| branch_off_probability(&tree, j, &exterior)).collect();
            let exact = predict_tree(&tree, &params, &exterior)?;
            let mc = predict_tree_mc_oracle(&tree, &params, &exterior, cfg.num_samples, seed ^ 0xa5a5)?;

            // Interior: a training point lies inside every extent on its path.
            let interior = store.features(ids[rng.random_range(0..ids.len())]).to_vec();
            let exact_in = predict_tree(&tree, &params, &interior)?;
            let mc_in = predict_tree_mc_oracle(&tree, &params, &interior, 1000, seed)?;

            Ok(McFixture {
                lifetime,
                use_pausing,
                path_len: path.len(),
                root_eta: branch[0].eta,
                root_p_split: branch[0].p_split,
                max_p_split: branch.iter().map(|b| b.p_split).fold(0.0, f64::max),
                exterior_deviation: max_abs_diff(exact.probs(), mc.probs()),
                interior_deviation: max_abs_diff(exact_in.probs(), mc_in.probs()),
                exterior,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(McReport {
        num_samples: cfg.num_samples,
        tolerance: cfg.tolerance,
        fixtures,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountsReport {
    pub sequences: usize,
    pub extends: usize,
    pub count_mismatches: usize,
    pub means_checked: usize,
    pub max_sum_error: f64,
    pub tolerance: f64,
}

impl CountsReport {
    pub fn passed(&self) -> bool {
        self.count_mismatches == 0 && self.max_sum_error <= self.tolerance && self.means_checked > 0
    }
}

impl fmt::Display for CountsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "posterior counts: {} sequences, {} extends, {} mismatches against full recomputation; \
             {} posterior means, max |sum - 1| = {:.2e} (tolerance {:.0e})",
            self.sequences, self.extends, self.count_mismatches, self.means_checked, self.max_sum_error, self.tolerance
        )
    }
}

/// Incremental label counts against a from-scratch recomputation after every
/// extension of random trees, and normalization of every posterior mean.
pub fn counts_check(sequences: usize, seed: u64) -> Result<CountsReport> {
    let per_sequence = (0..sequences as u64)
        .into_par_iter()
        .map(|s| -> Result<(usize, usize, usize, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s));
            let dim = rng.random_range(1..=4);
            let k = rng.random_range(2..=5);
            let n = rng.random_range(2..=60);
            let lifetime = if rng.random_bool(0.5) {
                f64::INFINITY
            } else {
                rng.random_range(0.5..5.0)
            };
            let pausing = rng.random_bool(0.5);
            let mut store = PointStore::new(dim, k);
            for _ in 0..n {
                // Coarse grid so duplicate coordinates occur.
                let x: Vec<f64> = (0..dim).map(|_| (rng.random_range(0..8) as f64) / 7.0).collect();
                store.push(&x, rng.random_range(0..k))?;
            }
            let mut ids: Vec<PointId> = store.ids().collect();
            ids.shuffle(&mut rng);
            let initial = rng.random_range(1..=n / 2);
            let mut tree = MondrianTree::sample(&store, &ids[..initial], TreeSettings::new(lifetime, k, pausing), RngStream::new(s, 0))?;
            let mut mismatches = usize::from(recompute_counts(&tree, &store) != *tree.posterior());
            for &p in &ids[initial..] {
                tree.extend(&store, p)?;
                mismatches += usize::from(recompute_counts(&tree, &store) != *tree.posterior());
            }
            let params = PosteriorParams::uniform(10.0 * dim as f64, k)?;
            let mut means = 0;
            let mut worst: f64 = 0.0;
            for leaf in tree.leaves() {
                for m in posterior_path(&tree, &params, leaf) {
                    means += 1;
                    worst = worst.max((m.iter().sum::<f64>() - 1.0).abs());
                }
            }
            Ok((n - initial, mismatches, means, worst))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CountsReport {
        sequences,
        extends: per_sequence.iter().map(|r| r.0).sum(),
        count_mismatches: per_sequence.iter().map(|r| r.1).sum(),
        means_checked: per_sequence.iter().map(|r| r.2).sum(),
        max_sum_error: per_sequence.iter().map(|r| r.3).fold(0.0, f64::max),
        tolerance: 1e-12,
    })
}

#[derive(Clone, Debug)]
pub struct DepthScalingReport {
    pub sizes: Vec<usize>,
    pub depths: Vec<protocol::DepthReport>,
    pub fit: Option<LinearFit>,
}

impl DepthScalingReport {
    pub fn passed(&self) -> bool {
        self.fit.is_some_and(|f| f.r_squared > 0.95 && (0.5..=2.5).contains(&f.slope))
    }
}

impl fmt::Display for DepthScalingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "depth scaling on uniform synthetic data")?;
        for d in &self.depths {
            writeln!(f, "  {d}")?;
        }
        match self.fit {
            Some(fit) => write!(
                f,
                "  depth ~ {:.3} + {:.3} log2 N, R^2 = {:.4} (need R^2 > 0.95, slope in [0.5, 2.5])",
                fit.intercept, fit.slope, fit.r_squared
            ),
            None => write!(f, "  not enough sizes to fit a line"),
        }
    }
}

/// Mean data-weighted depth for growing training sets, regressed on log2 N.
pub fn depth_scaling(sizes: &[usize], cfg: &RunConfig) -> Result<DepthScalingReport> {
    let mut depths = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let data = synth::uniform_random_labels(n, 2, 2, cfg.seed.wrapping_add(1000 + i as u64))?;
        depths.push(protocol::depth_stats(&data, cfg, cfg.seed)?);
    }
    let x: Vec<f64> = depths.iter().map(|d| d.log2_n).collect();
    let y: Vec<f64> = depths.iter().map(|d| d.mean).collect();
    Ok(DepthScalingReport {
        sizes: sizes.to_vec(),
        fit: linear_fit(&x, &y),
        depths,
    })
}

#[derive(Clone, Debug)]
pub struct ComplexityReport {
    pub small: usize,
    pub large: usize,
    pub small_seconds: Vec<f64>,
    pub large_seconds: Vec<f64>,
    pub budget: f64,
}

impl ComplexityReport {
    pub fn ratio(&self) -> f64 {
        median(&mut self.large_seconds.clone()) / median(&mut self.small_seconds.clone())
    }

    pub fn passed(&self) -> bool {
        self.ratio() < self.budget
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (n1, n2) = (self.small as f64, self.large as f64);
        write!(
            f,
            "single-tree online training: median {:.4}s for N = {}, {:.4}s for N = {}; ratio {:.3} \
             (N log N predicts {:.3}, budget {})",
            median(&mut self.small_seconds.clone()),
            self.small,
            median(&mut self.large_seconds.clone()),
            self.large,
            self.ratio(),
            n2 * n2.ln() / (n1 * n1.ln()),
            self.budget
        )
    }
}

fn time_online_tree(store: &PointStore, n: usize, settings: &TreeSettings, seed: u64) -> Result<f64> {
    let start = Instant::now();
    let mut tree = MondrianTree::sample(store, &[PointId(0)], settings.clone(), RngStream::new(seed, 0))?;
    for i in 1..n {
        tree.extend(store, PointId(i as u32))?;
    }
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(tree.num_nodes());
    Ok(seconds)
}

/// Wall-clock cost of growing one tree online on `small` and `large` points.
pub fn complexity(small: usize, large: usize, runs: usize, cfg: &RunConfig) -> Result<ComplexityReport> {
    let data = synth::uniform_random_labels(large, 2, 2, cfg.seed)?;
    let store = store_of(&data);
    let settings = TreeSettings::new(cfg.lifetime, 2, cfg.use_pausing);
    // Warm-up so the first timed run does not pay for page faults.
    time_online_tree(&store, small, &settings, u64::MAX)?;
    let mut small_seconds = Vec::with_capacity(runs);
    let mut large_seconds = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        small_seconds.push(time_online_tree(&store, small, &settings, cfg.seed.wrapping_add(r))?);
        large_seconds.push(time_online_tree(&store, large, &settings, cfg.seed.wrapping_add(r))?);
    }
    Ok(ComplexityReport {
        small,
        large,
        small_seconds,
        large_seconds,
        budget: 3.0,
    })
}

#[derive(Clone, Debug)]
pub struct ParityReport {
    pub online: Vec<f64>,
    pub batch: Vec<f64>,
    pub tolerance: f64,
}

impl ParityReport {
    pub fn gap(&self) -> f64 {
        mean_std(&self.online).0 - mean_std(&self.batch).0
    }

    pub fn passed(&self) -> bool {
        self.gap().abs() <= self.tolerance
    }
}

impl fmt::Display for ParityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (mo, so) = mean_std(&self.online);
        let (mb, sb) = mean_std(&self.batch);
        write!(
            f,
            "final test accuracy over {} seeds: online {:.4} ± {:.4}, batch {:.4} ± {:.4}; gap {:+.4} (tolerance {})",
            self.online.len(),
            mo,
            so,
            mb,
            sb,
            self.gap(),
            self.tolerance
        )
    }
}

/// Final accuracy of online training over mini-batches against one batch fit
/// on the whole training split, for each seed of `cfg`.
pub fn batch_parity(split: &Split, cfg: &RunConfig) -> Result<ParityReport> {
    let train = &split.train;
    let mut online = Vec::new();
    let mut batch = Vec::new();
    for seed in cfg.seeds() {
        let forest_cfg = cfg.forest_config(seed, train.num_features(), train.num_classes());
        let batches = make_minibatches(train.len(), cfg.num_batches.min(train.len()), cfg.shuffle.then_some(seed))?;
        let mut forest = MondrianForest::new(forest_cfg.clone())?;
        for b in 0..batches.len() {
            forest.partial_fit_dataset(&train.select(batches.batch(b)))?;
        }
        online.push(forest.accuracy(&split.test)?);

        let mut fitted = MondrianForest::new(forest_cfg)?;
        fitted.fit(&train.select(&batches.order))?;
        batch.push(fitted.accuracy(&split.test)?);
    }
    Ok(ParityReport {
        online,
        batch,
        tolerance: 0.02,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeterminismReport {
    pub snapshot_bytes: usize,
    pub snapshots_identical: bool,
    pub csv_rows: usize,
    pub csv_identical: bool,
}

impl DeterminismReport {
    pub fn passed(&self) -> bool {
        self.snapshots_identical && self.csv_identical
    }
}

impl fmt::Display for DeterminismReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "repeat run with the same seed: snapshots ({} bytes) {}, {} CSV rows without timing {}",
            self.snapshot_bytes,
            if self.snapshots_identical { "identical" } else { "DIFFER" },
            self.csv_rows,
            if self.csv_identical { "identical" } else { "DIFFER" }
        )
    }
}

/// Run the online protocol twice with the same seed, once with trees trained
/// in parallel and once serially, and compare the outputs.
pub fn determinism(split: &Split, cfg: &RunConfig) -> Result<DeterminismReport> {
    let run = |parallel: bool| -> Result<(Vec<u8>, String)> {
        let (records, forest) = if parallel {
            protocol::eval_online_seed(split, cfg, cfg.seed)?
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .expect("thread pool")
                .install(|| protocol::eval_online_seed(split, cfg, cfg.seed))?
        };
        Ok((forest.to_snapshot()?, record::to_csv(&records)?))
    };
    let (snap_a, csv_a) = run(true)?;
    let (snap_b, csv_b) = run(false)?;
    let rows_a = record::without_timing(&csv_a);
    Ok(DeterminismReport {
        snapshot_bytes: snap_a.len(),
        snapshots_identical: snap_a == snap_b,
        csv_rows: rows_a.len(),
        csv_identical: rows_a == record::without_timing(&csv_b),
    })
}
