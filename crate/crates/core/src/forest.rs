use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::points::{PointId, PointStore};
use crate::posterior::PosteriorParams;
use crate::predict::{predict_tree, PredictiveDistribution};
use crate::rng::RngStream;
use crate::tree::{MondrianTree, TreeSettings, TreeStats};

/// Hyper-parameters of a [`MondrianForest`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub num_trees: usize,
    /// Split-time budget; `f64::INFINITY` grows trees until blocks are pure
    /// or cannot be split.
    pub lifetime: f64,
    /// The smoothing time-scale is `gamma_multiplier * num_features`.
    pub gamma_multiplier: f64,
    pub seed: u64,
    pub use_pausing: bool,
    pub num_classes: usize,
    pub num_features: usize,
}

impl ForestConfig {
    /// Defaults: 100 trees, infinite lifetime, `gamma = 10 * D`, pausing on.
    pub fn new(num_features: usize, num_classes: usize) -> Self {
        Self {
            num_trees: 100,
            lifetime: f64::INFINITY,
            gamma_multiplier: 10.0,
            seed: 0,
            use_pausing: true,
            num_classes,
            num_features,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_multiplier * self.num_features as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(invalid("num_trees must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(invalid("num_classes must be >= 2"));
        }
        if self.num_features == 0 {
            return Err(invalid("num_features must be >= 1"));
        }
        if !(self.lifetime >= 0.0) {
            return Err(invalid("lifetime must be >= 0"));
        }
        if !(self.gamma_multiplier > 0.0) || !self.gamma_multiplier.is_finite() {
            return Err(invalid("gamma multiplier must be positive and finite"));
        }
        Ok(())
    }

    pub fn tree_settings(&self) -> TreeSettings {
        TreeSettings::new(self.lifetime, self.num_classes, self.use_pausing)
    }
}

/// An ensemble of independent Mondrian trees sharing one point store.
///
/// Tree `i` draws from stream `i` of the configured seed, so results do not
/// depend on whether trees are trained in parallel.
#[derive(Clone, Debug)]
pub struct MondrianForest {
    config: ForestConfig,
    params: PosteriorParams,
    store: PointStore,
    trees: Vec<MondrianTree>,
    parallel: bool,
    skip_parent_insertion: bool,
}

impl MondrianForest {
    pub fn new(config: ForestConfig) -> Result<Self> {
        config.validate()?;
        let params = PosteriorParams::uniform(config.gamma(), config.num_classes)?;
        let store = PointStore::new(config.num_features, config.num_classes);
        Ok(Self {
            config,
            params,
            store,
            trees: Vec::new(),
            parallel: true,
            skip_parent_insertion: false,
        })
    }

    pub(crate) fn from_parts(config: ForestConfig, store: PointStore, trees: Vec<MondrianTree>) -> Result<Self> {
        let mut forest = Self::new(config)?;
        forest.store = store;
        forest.trees = trees;
        Ok(forest)
    }

    /// Train trees across the rayon pool (the default) or one after another.
    pub fn set_parallel(&mut self, parallel: bool) {
        self.parallel = parallel;
    }

    #[doc(hidden)]
    pub fn set_skip_parent_insertion(&mut self, skip: bool) {
        self.skip_parent_insertion = skip;
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn params(&self) -> &PosteriorParams {
        &self.params
    }

    pub fn store(&self) -> &PointStore {
        &self.store
    }

    pub fn trees(&self) -> &[MondrianTree] {
        &self.trees
    }

    pub fn is_fitted(&self) -> bool {
        !self.trees.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.store.len()
    }

    fn settings(&self) -> TreeSettings {
        let mut settings = self.config.tree_settings();
        settings.skip_parent_insertion = self.skip_parent_insertion;
        settings
    }

    fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.num_features() != self.config.num_features {
            return Err(Error::DimensionMismatch {
                expected: self.config.num_features,
                actual: data.num_features(),
            });
        }
        Ok(())
    }

    fn append(&mut self, points: impl IntoIterator<Item = (Vec<f64>, usize)>) -> Result<Vec<PointId>> {
        // Validate everything before touching the store so a bad batch
        // leaves the forest unchanged.
        let points: Vec<_> = points.into_iter().collect();
        let mut probe = PointStore::new(self.config.num_features, self.config.num_classes);
        for (x, y) in &points {
            probe.push(x, *y)?;
        }
        points.iter().map(|(x, y)| self.store.push(x, *y)).collect()
    }

    /// Discard any previous state and sample every tree on `data` in batch.
    pub fn fit(&mut self, data: &Dataset) -> Result<()> {
        self.check_dataset(data)?;
        if data.is_empty() {
            return Err(invalid("cannot fit on an empty dataset"));
        }
        self.store = PointStore::new(self.config.num_features, self.config.num_classes);
        self.trees.clear();
        let ids = self.append(data.rows().map(|(x, y)| (x.to_vec(), y)))?;
        let settings = self.settings();
        let seed = self.config.seed;
        let store = &self.store;
        let build = |i: usize| MondrianTree::sample(store, &ids, settings.clone(), RngStream::new(seed, i as u64));
        let trees: Result<Vec<_>> = if self.parallel {
            (0..self.config.num_trees).into_par_iter().map(build).collect()
        } else {
            (0..self.config.num_trees).map(build).collect()
        };
        self.trees = trees?;
        Ok(())
    }

    /// Extend every tree with every point of `batch`, in order.
    ///
    /// On an unfitted forest the first point seeds each tree.
    pub fn partial_fit(&mut self, batch: &[(Vec<f64>, usize)]) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        let ids = self.append(batch.iter().cloned())?;
        let mut rest = &ids[..];
        if self.trees.is_empty() {
            let settings = self.settings();
            let seed = self.config.seed;
            let first = [ids[0]];
            let store = &self.store;
            let build = |i: usize| MondrianTree::sample(store, &first, settings.clone(), RngStream::new(seed, i as u64));
            let trees: Result<Vec<_>> = if self.parallel {
                (0..self.config.num_trees).into_par_iter().map(build).collect()
            } else {
                (0..self.config.num_trees).map(build).collect()
            };
            self.trees = trees?;
            rest = &ids[1..];
        }
        let store = &self.store;
        let grow = |tree: &mut MondrianTree| -> Result<()> {
            for &id in rest {
                tree.extend(store, id)?;
            }
            Ok(())
        };
        if self.parallel {
            self.trees.par_iter_mut().try_for_each(grow)
        } else {
            self.trees.iter_mut().try_for_each(grow)
        }
    }

    /// Rows of `data` fed through [`MondrianForest::partial_fit`].
    pub fn partial_fit_dataset(&mut self, data: &Dataset) -> Result<()> {
        self.check_dataset(data)?;
        let batch: Vec<_> = data.rows().map(|(x, y)| (x.to_vec(), y)).collect();
        self.partial_fit(&batch)
    }

    /// Mean of the per-tree predictive distributions.
    pub fn predict_proba(&self, x: &[f64]) -> Result<PredictiveDistribution> {
        if self.trees.is_empty() {
            return Err(Error::NotFitted);
        }
        let mut probs = vec![0.0; self.config.num_classes];
        for tree in &self.trees {
            let p = predict_tree(tree, &self.params, x)?;
            for (s, v) in probs.iter_mut().zip(p.probs()) {
                *s += v;
            }
        }
        let m = self.trees.len() as f64;
        probs.iter_mut().for_each(|p| *p /= m);
        Ok(PredictiveDistribution::new(probs))
    }

    /// Most probable class, ties to the smallest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.predict_proba(x).map(|p| p.argmax())
    }

    /// Class predictions for every row, computed in parallel.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>> {
        let rows: Vec<_> = data.rows().collect();
        rows.par_iter().map(|(x, _)| self.predict(x)).collect()
    }

    /// Fraction of rows whose predicted class equals the label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(invalid("cannot score an empty dataset"));
        }
        let predicted = self.predict_dataset(data)?;
        let hits = predicted.iter().zip(data.labels()).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn tree_stats(&self) -> Vec<TreeStats> {
        self.trees.iter().map(MondrianTree::stats).collect()
    }

    /// Mean data-weighted leaf depth across trees.
    pub fn mean_weighted_depth(&self) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let total: f64 = self.trees.iter().map(|t| t.stats().data_weighted_depth).sum();
        total / self.trees.len() as f64
    }
}
