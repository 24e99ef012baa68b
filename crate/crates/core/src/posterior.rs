//! Hierarchical label smoothing with interpolated Kneser–Ney counts.
//!
//! Every node carries a label distribution drawn around its parent's; the
//! root is centred on a uniform base distribution. Posterior means follow
//! from two per-node count vectors: customers `c[j,k]` and tables
//! `tab[j,k] = min(c[j,k], 1)`. A leaf's customers are its training labels;
//! an internal node's customers are its children's tables.
//!
//! The discount `d_j = exp(-gamma * (tau_j - tau_parent))` interpolates: a
//! node whose split came shortly after its parent's (small gap, `d` near 1)
//! defers to the parent, one separated by a long gap trusts its own counts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::points::PointStore;
use crate::tree::{MondrianTree, NodeId};

/// Per-node customer and table counts, stored flat alongside the node arena.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosteriorCounts {
    num_classes: usize,
    counts: Vec<u32>,
    tables: Vec<u8>,
}

impl PosteriorCounts {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub(crate) fn push_node(&mut self) {
        self.counts.extend(std::iter::repeat_n(0, self.num_classes));
        self.tables.extend(std::iter::repeat_n(0, self.num_classes));
    }

    pub fn counts(&self, j: NodeId) -> &[u32] {
        let s = j.index() * self.num_classes;
        &self.counts[s..s + self.num_classes]
    }

    pub fn tables(&self, j: NodeId) -> &[u8] {
        let s = j.index() * self.num_classes;
        &self.tables[s..s + self.num_classes]
    }

    fn slot(&self, j: NodeId, k: usize) -> usize {
        j.index() * self.num_classes + k
    }
}

/// Smoothing hyper-parameters: discount time-scale and base distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorParams {
    gamma: f64,
    base: Vec<f64>,
}

impl PosteriorParams {
    /// Uniform base distribution over `num_classes` labels.
    pub fn uniform(gamma: f64, num_classes: usize) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(invalid(format!("gamma must be positive and finite, got {gamma}")));
        }
        if num_classes == 0 {
            return Err(invalid("num_classes must be >= 1"));
        }
        Ok(Self {
            gamma,
            base: vec![1.0 / num_classes as f64; num_classes],
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn base(&self) -> &[f64] {
        &self.base
    }
}

/// `exp(-gamma * (tau_j - tau_parent))`, zero when `tau_j` is infinite.
pub fn node_discount(params: &PosteriorParams, tau_j: f64, tau_parent: f64) -> Result<f64> {
    if tau_j.is_nan() || tau_parent.is_nan() || tau_j < tau_parent {
        return Err(invalid(format!("split time {tau_j} precedes parent time {tau_parent}")));
    }
    Ok(discount(params.gamma, tau_j - tau_parent))
}

pub(crate) fn discount(gamma: f64, gap: f64) -> f64 {
    if gap.is_infinite() {
        0.0
    } else {
        (-gamma * gap).exp()
    }
}

/// Set a leaf's customers from its labels, then refresh customers and
/// tables on every ancestor up to the root.
pub fn initialize_posterior_counts(tree: &mut MondrianTree, store: &PointStore, leaf: NodeId) {
    let k_count = tree.posterior.num_classes;
    let start = tree.posterior.slot(leaf, 0);
    tree.posterior.counts[start..start + k_count].fill(0);
    for &p in &tree.nodes[leaf.index()].points {
        tree.posterior.counts[start + store.label(p)] += 1;
    }
    let mut j = leaf;
    loop {
        if let Some([l, r]) = tree.nodes[j.index()].children {
            for k in 0..k_count {
                let c = tree.posterior.tables[tree.posterior.slot(l, k)] as u32
                    + tree.posterior.tables[tree.posterior.slot(r, k)] as u32;
                let s = tree.posterior.slot(j, k);
                tree.posterior.counts[s] = c;
            }
        }
        for k in 0..k_count {
            let s = tree.posterior.slot(j, k);
            tree.posterior.tables[s] = tree.posterior.counts[s].min(1) as u8;
        }
        match tree.nodes[j.index()].parent {
            Some(p) => j = p,
            None => return,
        }
    }
}

/// Record one more point with label `y` at `leaf` and propagate upwards.
///
/// A parent's customer count for `y` is the number of its children with a
/// table for `y`, so it moves only when a child opens a new table. The walk
/// refreshes each ancestor's count and stops at the first node whose table
/// for `y` was already open.
pub fn update_posterior_counts(tree: &mut MondrianTree, leaf: NodeId, y: usize) {
    let s = tree.posterior.slot(leaf, y);
    tree.posterior.counts[s] += 1;
    let mut j = leaf;
    loop {
        let s = tree.posterior.slot(j, y);
        if let Some([l, r]) = tree.nodes[j.index()].children {
            tree.posterior.counts[s] = tree.posterior.tables[tree.posterior.slot(l, y)] as u32
                + tree.posterior.tables[tree.posterior.slot(r, y)] as u32;
        }
        if tree.posterior.tables[s] == 1 {
            return;
        }
        tree.posterior.tables[s] = tree.posterior.counts[s].min(1) as u8;
        match tree.nodes[j.index()].parent {
            Some(p) => j = p,
            None => return,
        }
    }
}

/// Counts rebuilt from scratch with one bottom-up pass over the whole tree.
pub fn recompute_counts(tree: &MondrianTree, store: &PointStore) -> PosteriorCounts {
    let k_count = tree.num_classes();
    let mut fresh = PosteriorCounts::new(k_count);
    for _ in 0..tree.num_nodes() {
        fresh.push_node();
    }
    // Post-order traversal: children before parents.
    let mut order = Vec::with_capacity(tree.num_nodes());
    let mut stack = vec![tree.root()];
    while let Some(j) = stack.pop() {
        order.push(j);
        if let Some((l, r)) = tree.node(j).children() {
            stack.push(l);
            stack.push(r);
        }
    }
    for &j in order.iter().rev() {
        match tree.node(j).children() {
            Some((l, r)) => {
                for k in 0..k_count {
                    let c = fresh.tables[fresh.slot(l, k)] as u32 + fresh.tables[fresh.slot(r, k)] as u32;
                    let s = fresh.slot(j, k);
                    fresh.counts[s] = c;
                }
            }
            None => {
                for &p in tree.node(j).points() {
                    let s = fresh.slot(j, store.label(p));
                    fresh.counts[s] += 1;
                }
            }
        }
        for k in 0..k_count {
            let s = fresh.slot(j, k);
            fresh.tables[s] = fresh.counts[s].min(1) as u8;
        }
    }
    fresh
}

/// Posterior mean label distribution at a node given its customer and table
/// counts, its discount and its parent's posterior mean.
///
/// With no customers the node simply inherits `parent_mean`.
pub fn posterior_mean_from_counts(counts: &[u32], tables: &[u8], discount: f64, parent_mean: &[f64]) -> Vec<f64> {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return parent_mean.to_vec();
    }
    let total = total as f64;
    let tables_total: f64 = tables.iter().map(|&t| t as f64).sum();
    let mass_to_parent = discount * tables_total;
    counts
        .iter()
        .zip(tables)
        .zip(parent_mean)
        .map(|((&c, &t), &g)| (c as f64 - discount * t as f64 + mass_to_parent * g) / total)
        .collect()
}

/// Posterior mean at node `j` of `tree`, given the posterior mean of its
/// parent (the base distribution for the root).
pub fn posterior_mean(tree: &MondrianTree, params: &PosteriorParams, j: NodeId, parent_mean: &[f64]) -> Vec<f64> {
    let d = discount(params.gamma, tree.node(j).split_time() - tree.parent_time(j));
    posterior_mean_from_counts(tree.posterior.counts(j), tree.posterior.tables(j), d, parent_mean)
}

/// Posterior means along the root-to-`j` path, root first.
pub fn posterior_path(tree: &MondrianTree, params: &PosteriorParams, j: NodeId) -> Vec<Vec<f64>> {
    let mut path = vec![j];
    let mut n = j;
    while let Some(p) = tree.node(n).parent() {
        path.push(p);
        n = p;
    }
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(path.len());
    for &n in path.iter().rev() {
        let parent = means.last().map_or(params.base(), |m| m.as_slice());
        let mean = posterior_mean(tree, params, n, parent);
        means.push(mean);
    }
    means
}
