//! Predictive label distributions at arbitrary test points.
//!
//! A test point inside its leaf's extent gets that leaf's posterior mean.
//! Outside, the point could have been cut off into its own block by a split
//! inserted above any node on its path. [`predict_tree`] averages over all of
//! those extensions in closed form; [`predict_tree_mc_oracle`] samples them
//! one at a time and is kept as an independent check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::posterior::{discount, posterior_mean, posterior_mean_from_counts, PosteriorParams};
use crate::rng::truncated_discount;
use crate::tree::{MondrianTree, NodeId};

/// Length-K class probability vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    probs: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Most probable class; ties go to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }
}

/// Rate `eta` at which `x` would be split off from `node`'s extent, and the
/// probability `p_s` that this happens within the node's time gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BranchOff {
    pub eta: f64,
    pub p_split: f64,
}

pub fn branch_off_probability(tree: &MondrianTree, node: NodeId, x: &[f64]) -> BranchOff {
    let eta = extra_extent(tree.lower(node), tree.upper(node), x);
    let gap = tree.node(node).split_time() - tree.parent_time(node);
    BranchOff {
        eta,
        p_split: split_probability(eta, gap),
    }
}

pub(crate) fn extra_extent(lower: &[f64], upper: &[f64], x: &[f64]) -> f64 {
    lower
        .iter()
        .zip(upper)
        .zip(x)
        .map(|((&lo, &hi), &v)| (v - hi).max(0.0) + (lo - v).max(0.0))
        .sum()
}

fn split_probability(eta: f64, gap: f64) -> f64 {
    if eta == 0.0 || gap == 0.0 {
        0.0
    } else if gap.is_infinite() {
        1.0
    } else {
        -(-gap * eta).exp_m1()
    }
}

/// Posterior mean of the node inserted above `j` when `x` is cut off there,
/// with the split time averaged out.
///
/// The new node's customers are `j`'s tables, so `counts = tables = min(c_j, 1)`.
fn cut_off_mean(tree: &MondrianTree, j: NodeId, discount: f64, parent_mean: &[f64]) -> Vec<f64> {
    let tables = tree.posterior().tables(j);
    let counts: Vec<u32> = tables.iter().map(|&t| t as u32).collect();
    posterior_mean_from_counts(&counts, tables, discount, parent_mean)
}

/// Predictive distribution of one tree at `x`, averaged analytically over
/// every way the tree could be extended to include `x`.
pub fn predict_tree(tree: &MondrianTree, params: &PosteriorParams, x: &[f64]) -> Result<PredictiveDistribution> {
    check_inputs(tree, params, x)?;
    let k_count = tree.num_classes();
    let mut probs = vec![0.0; k_count];
    let mut not_separated = 1.0;
    let mut parent_mean = params.base().to_vec();
    let mut j = tree.root();
    loop {
        let gap = tree.node(j).split_time() - tree.parent_time(j);
        let BranchOff { eta, p_split } = branch_off_probability(tree, j, x);
        if p_split > 0.0 {
            let d = truncated_discount(eta, params.gamma(), gap);
            let cut = cut_off_mean(tree, j, d, &parent_mean);
            let w = not_separated * p_split;
            for (s, g) in probs.iter_mut().zip(cut) {
                *s += w * g;
            }
        }
        let mean = posterior_mean(tree, params, j, &parent_mean);
        match tree.child_towards(j, x) {
            None => {
                let w = not_separated * (1.0 - p_split);
                for (s, g) in probs.iter_mut().zip(mean) {
                    *s += w * g;
                }
                return Ok(PredictiveDistribution::new(probs));
            }
            Some(child) => {
                not_separated *= 1.0 - p_split;
                parent_mean = mean;
                j = child;
            }
        }
    }
}

/// Monte-Carlo estimate of [`predict_tree`].
///
/// Each sample walks `x`'s path, drawing at every node the waiting time of a
/// split that would cut `x` off. The first node where that split precedes the
/// node's own split hosts the new parent, whose posterior uses the sampled
/// gap; if none fires, the sample reads the leaf's posterior.
pub fn predict_tree_mc_oracle(
    tree: &MondrianTree,
    params: &PosteriorParams,
    x: &[f64],
    num_samples: usize,
    seed: u64,
) -> Result<PredictiveDistribution> {
    check_inputs(tree, params, x)?;
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Path and node posteriors do not depend on the draws.
    let path = tree.path(x)?;
    let mut means = Vec::with_capacity(path.len());
    let mut etas = Vec::with_capacity(path.len());
    for &j in &path {
        let parent = means.last().map_or(params.base(), |m: &Vec<f64>| m.as_slice());
        let m = posterior_mean(tree, params, j, parent);
        etas.push(extra_extent(tree.lower(j), tree.upper(j), x));
        means.push(m);
    }

    let k_count = tree.num_classes();
    // Samples that reach the leaf all read the same distribution, so they are
    // counted rather than summed; a point that is never cut off then gets
    // the leaf posterior without rounding.
    let mut cut_sums = vec![0.0; k_count];
    let mut at_leaf = 0usize;
    for _ in 0..num_samples {
        let mut chosen: Option<Vec<f64>> = None;
        for (i, &j) in path.iter().enumerate() {
            let eta = etas[i];
            if eta == 0.0 {
                continue;
            }
            let wait = rng.sample::<f64, _>(Exp1) / eta;
            let gap = tree.node(j).split_time() - tree.parent_time(j);
            if wait < gap {
                let parent = if i == 0 { params.base() } else { means[i - 1].as_slice() };
                chosen = Some(cut_off_mean(tree, j, discount(params.gamma(), wait), parent));
                break;
            }
        }
        match chosen {
            Some(g) => cut_sums.iter_mut().zip(&g).for_each(|(s, v)| *s += v),
            None => at_leaf += 1,
        }
    }
    let n = num_samples as f64;
    let leaf_weight = at_leaf as f64 / n;
    let leaf = means.last().expect("nonempty path");
    Ok(PredictiveDistribution::new(
        cut_sums.iter().zip(leaf).map(|(s, g)| s / n + leaf_weight * g).collect(),
    ))
}

fn check_inputs(tree: &MondrianTree, params: &PosteriorParams, x: &[f64]) -> Result<()> {
    tree.check_dim(x)?;
    if params.base().len() != tree.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "base distribution has {} classes, tree has {}",
            params.base().len(),
            tree.num_classes()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite test point".into()));
    }
    Ok(())
}
