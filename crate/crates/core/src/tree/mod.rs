//! Mondrian trees: a node arena with split times and per-node data extents.
//!
//! A node `j` owns a split `(split_dim, split_loc)` that applies only inside
//! its extent box `[lower, upper]`, the smallest box enclosing the training
//! points routed through it. Split times strictly increase from parent to
//! child; leaves carry the lifetime as their time.
//!
//! Trees grow in two ways, both drawing from the tree's own [`RngStream`]:
//! [`MondrianTree::sample`] builds a tree from a batch of points and
//! [`MondrianTree::extend`] adds one point, possibly inserting a new split
//! above an existing node. Both produce the same distribution over trees.

mod extend;
mod sample;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{PointId, PointStore};
use crate::posterior::PosteriorCounts;
use crate::rng::{RngStream, SplitDraws};

/// Dense index into a tree's node arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Growth settings shared by every tree of a forest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSettings {
    /// Upper bound on split times; `f64::INFINITY` for unbounded trees.
    pub lifetime: f64,
    pub num_classes: usize,
    /// Suspend splitting of leaves whose labels are all identical.
    pub use_pausing: bool,
    /// Harness self-check only: never insert a split above an existing node.
    /// This breaks the online sampler on purpose.
    #[doc(hidden)]
    #[serde(default)]
    pub skip_parent_insertion: bool,
}

impl TreeSettings {
    pub fn new(lifetime: f64, num_classes: usize, use_pausing: bool) -> Self {
        Self {
            lifetime,
            num_classes,
            use_pausing,
            skip_parent_insertion: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lifetime >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lifetime must be >= 0, got {}",
                self.lifetime
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MondrianNode {
    pub(crate) parent: Option<NodeId>,
    pub(crate) children: Option<[NodeId; 2]>,
    pub(crate) split_dim: usize,
    pub(crate) split_loc: f64,
    pub(crate) split_time: f64,
    pub(crate) paused: bool,
    /// Training points held by a leaf; always empty for internal nodes.
    pub(crate) points: Vec<PointId>,
}

impl MondrianNode {
    fn new(parent: Option<NodeId>) -> Self {
        Self {
            parent,
            children: None,
            split_dim: 0,
            split_loc: 0.0,
            split_time: 0.0,
            paused: false,
            points: Vec::new(),
        }
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> Option<(NodeId, NodeId)> {
        self.children.map(|[l, r]| (l, r))
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn split_dim(&self) -> usize {
        self.split_dim
    }

    pub fn split_loc(&self) -> f64 {
        self.split_loc
    }

    pub fn split_time(&self) -> f64 {
        self.split_time
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn points(&self) -> &[PointId] {
        &self.points
    }
}

/// Summary statistics of a trained tree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeStats {
    pub num_leaves: usize,
    /// Leaf depth averaged with weights proportional to each leaf's point count.
    pub data_weighted_depth: f64,
    pub max_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MondrianTree {
    pub(crate) settings: TreeSettings,
    pub(crate) dim: usize,
    pub(crate) nodes: Vec<MondrianNode>,
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) posterior: PosteriorCounts,
    pub(crate) root: NodeId,
    pub(crate) rng: RngStream,
    pub(crate) num_points: usize,
}

impl MondrianTree {
    /// Sample a tree over `points` using the tree's own random stream.
    pub fn sample(store: &PointStore, points: &[PointId], settings: TreeSettings, rng: RngStream) -> Result<Self> {
        let mut tree = Self::empty(store, settings, rng)?;
        let mut rng = tree.rng.clone();
        tree.sample_root(store, points, &mut rng)?;
        tree.rng = rng;
        Ok(tree)
    }

    /// Like [`MondrianTree::sample`] but with an external draw source.
    pub fn sample_with<D: SplitDraws + ?Sized>(
        store: &PointStore,
        points: &[PointId],
        settings: TreeSettings,
        rng: RngStream,
        draws: &mut D,
    ) -> Result<Self> {
        let mut tree = Self::empty(store, settings, rng)?;
        tree.sample_root(store, points, draws)?;
        Ok(tree)
    }

    fn empty(store: &PointStore, settings: TreeSettings, rng: RngStream) -> Result<Self> {
        settings.validate()?;
        if store.num_classes() != settings.num_classes {
            return Err(Error::InvalidArgument(format!(
                "store has {} classes, tree expects {}",
                store.num_classes(),
                settings.num_classes
            )));
        }
        Ok(Self {
            posterior: PosteriorCounts::new(settings.num_classes),
            settings,
            dim: store.dim(),
            nodes: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            root: NodeId(0),
            rng,
            num_points: 0,
        })
    }

    fn sample_root<D: SplitDraws + ?Sized>(&mut self, store: &PointStore, points: &[PointId], draws: &mut D) -> Result<()> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("cannot sample a tree on zero points".into()));
        }
        if let Some(bad) = points.iter().find(|p| p.index() >= store.len()) {
            return Err(Error::InvalidArgument(format!("unknown point id {}", bad.0)));
        }
        self.root = self.push_node(None);
        self.num_points = points.len();
        self.sample_block(store, self.root, points.to_vec(), draws);
        Ok(())
    }

    /// Add one training point, keeping the tree distributed as if it had been
    /// sampled in batch on all points seen so far.
    pub fn extend(&mut self, store: &PointStore, point: PointId) -> Result<()> {
        let mut rng = self.rng.clone();
        let out = self.extend_with(store, point, &mut rng);
        self.rng = rng;
        out
    }

    pub fn extend_with<D: SplitDraws + ?Sized>(&mut self, store: &PointStore, point: PointId, draws: &mut D) -> Result<()> {
        if store.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: store.dim(),
            });
        }
        if point.index() >= store.len() {
            return Err(Error::InvalidArgument(format!("unknown point id {}", point.0)));
        }
        self.extend_block(store, point, draws);
        Ok(())
    }

    pub fn settings(&self) -> &TreeSettings {
        &self.settings
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.settings.num_classes
    }

    pub fn lifetime(&self) -> f64 {
        self.settings.lifetime
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    pub fn node(&self, id: NodeId) -> &MondrianNode {
        &self.nodes[id.index()]
    }

    pub fn lower(&self, id: NodeId) -> &[f64] {
        let start = id.index() * self.dim;
        &self.lower[start..start + self.dim]
    }

    pub fn upper(&self, id: NodeId) -> &[f64] {
        let start = id.index() * self.dim;
        &self.upper[start..start + self.dim]
    }

    pub fn posterior(&self) -> &PosteriorCounts {
        &self.posterior
    }

    /// Split time of `id`'s parent, zero for the root.
    pub fn parent_time(&self, id: NodeId) -> f64 {
        self.node(id).parent.map_or(0.0, |p| self.node(p).split_time)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.node_ids().filter(|&j| self.node(j).is_leaf())
    }

    /// Child of internal node `j` on `x`'s side of the split; ties go left.
    pub fn child_towards(&self, j: NodeId, x: &[f64]) -> Option<NodeId> {
        let node = self.node(j);
        node.children
            .map(|[l, r]| if x[node.split_dim] <= node.split_loc { l } else { r })
    }

    /// The unique leaf whose block contains `x`.
    pub fn route_to_leaf(&self, x: &[f64]) -> Result<NodeId> {
        self.check_dim(x)?;
        let mut j = self.root;
        while let Some(child) = self.child_towards(j, x) {
            j = child;
        }
        Ok(j)
    }

    /// Root-to-leaf path followed by `x`.
    pub fn path(&self, x: &[f64]) -> Result<Vec<NodeId>> {
        self.check_dim(x)?;
        let mut path = vec![self.root];
        let mut j = self.root;
        while let Some(child) = self.child_towards(j, x) {
            path.push(child);
            j = child;
        }
        Ok(path)
    }

    pub fn depth(&self, mut j: NodeId) -> usize {
        let mut depth = 0;
        while let Some(p) = self.node(j).parent {
            depth += 1;
            j = p;
        }
        depth
    }

    pub fn stats(&self) -> TreeStats {
        let mut num_leaves = 0;
        let mut max_depth = 0;
        let mut weighted = 0.0;
        let mut stack = vec![(self.root, 0usize)];
        while let Some((j, depth)) = stack.pop() {
            let node = self.node(j);
            match node.children {
                Some([l, r]) => {
                    stack.push((r, depth + 1));
                    stack.push((l, depth + 1));
                }
                None => {
                    num_leaves += 1;
                    max_depth = max_depth.max(depth);
                    weighted += node.points.len() as f64 * depth as f64;
                }
            }
        }
        let total = self.num_points.max(1) as f64;
        TreeStats {
            num_leaves,
            data_weighted_depth: weighted / total,
            max_depth,
        }
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn push_node(&mut self, parent: Option<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(MondrianNode::new(parent));
        self.lower.extend(std::iter::repeat_n(0.0, self.dim));
        self.upper.extend(std::iter::repeat_n(0.0, self.dim));
        self.posterior.push_node();
        id
    }

    fn extent_mut(&mut self, id: NodeId) -> (&mut [f64], &mut [f64]) {
        let start = id.index() * self.dim;
        let end = start + self.dim;
        (&mut self.lower[start..end], &mut self.upper[start..end])
    }

    /// Grow `id`'s extent to include `x`.
    pub(crate) fn absorb_extent(&mut self, id: NodeId, x: &[f64]) {
        let (lower, upper) = self.extent_mut(id);
        for ((lo, hi), &v) in lower.iter_mut().zip(upper.iter_mut()).zip(x) {
            *lo = lo.min(v);
            *hi = hi.max(v);
        }
    }

    /// Check structural, temporal, extent and count invariants against a
    /// full recomputation. Returns a description of the first violation.
    pub fn validate(&self, store: &PointStore) -> std::result::Result<(), String> {
        let root = self.node(self.root);
        if root.parent.is_some() {
            return Err("root has a parent".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        let mut total_points = 0;
        while let Some(j) = stack.pop() {
            if std::mem::replace(&mut seen[j.index()], true) {
                return Err(format!("node {} reachable twice", j.0));
            }
            let node = self.node(j);
            let tau_parent = self.parent_time(j);
            if let Some(p) = node.parent {
                let pnode = self.node(p);
                match pnode.children {
                    Some([l, r]) if l == j || r == j => {}
                    _ => return Err(format!("node {} not a child of its parent {}", j.0, p.0)),
                }
            }
            let (lo, hi) = (self.lower(j), self.upper(j));
            if lo.iter().zip(hi).any(|(a, b)| a > b) {
                return Err(format!("node {} has inverted extent", j.0));
            }
            if let Some(p) = node.parent {
                let (plo, phi) = (self.lower(p), self.upper(p));
                if lo.iter().zip(plo).any(|(c, p)| c < p) || hi.iter().zip(phi).any(|(c, p)| c > p) {
                    return Err(format!("node {} extent escapes its parent", j.0));
                }
            }
            match node.children {
                Some([l, r]) => {
                    if !node.points.is_empty() {
                        return Err(format!("internal node {} holds points", j.0));
                    }
                    if node.paused {
                        return Err(format!("internal node {} is paused", j.0));
                    }
                    if !(node.split_time > tau_parent) {
                        return Err(format!("node {} split time does not exceed its parent's", j.0));
                    }
                    if !(node.split_time < self.settings.lifetime) {
                        return Err(format!("internal node {} splits after the lifetime", j.0));
                    }
                    let d = node.split_dim;
                    if d >= self.dim || node.split_loc < lo[d] || node.split_loc > hi[d] {
                        return Err(format!("node {} split lies outside its extent", j.0));
                    }
                    for (c, left) in [(l, true), (r, false)] {
                        if self.node(c).parent != Some(j) {
                            return Err(format!("child {} of {} has wrong parent", c.0, j.0));
                        }
                        let (clo, chi) = (self.lower(c), self.upper(c));
                        let ok = if left { chi[d] <= node.split_loc } else { clo[d] > node.split_loc };
                        if !ok {
                            return Err(format!("child {} of {} straddles the split", c.0, j.0));
                        }
                        stack.push(c);
                    }
                }
                None => {
                    if node.points.is_empty() {
                        return Err(format!("leaf {} holds no points", j.0));
                    }
                    if node.split_time != self.settings.lifetime {
                        return Err(format!("leaf {} time differs from lifetime", j.0));
                    }
                    let first = store.label(node.points[0]);
                    let homogeneous = node.points.iter().all(|&p| store.label(p) == first);
                    if node.paused && !(self.settings.use_pausing && homogeneous) {
                        return Err(format!("paused leaf {} has mixed labels", j.0));
                    }
                    if self.settings.use_pausing && homogeneous && !node.paused {
                        return Err(format!("homogeneous leaf {} is not paused", j.0));
                    }
                    total_points += node.points.len();
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err("arena holds unreachable nodes".into());
        }
        if total_points != self.num_points {
            return Err(format!("leaves hold {total_points} points, tree counts {}", self.num_points));
        }
        self.validate_extents(store)?;
        self.validate_counts(store)
    }

    fn validate_extents(&self, store: &PointStore) -> std::result::Result<(), String> {
        let (lo, hi) = self.recompute_extents(store);
        if lo != self.lower || hi != self.upper {
            return Err("stored extents differ from the min/max of routed points".into());
        }
        Ok(())
    }

    /// Extents recomputed from the points held in each subtree.
    fn recompute_extents(&self, store: &PointStore) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.lower.len()];
        let mut hi = vec![f64::NEG_INFINITY; self.upper.len()];
        for leaf in self.leaves() {
            for &p in &self.node(leaf).points {
                let x = store.features(p);
                let mut j = Some(leaf);
                while let Some(n) = j {
                    let s = n.index() * self.dim;
                    for d in 0..self.dim {
                        lo[s + d] = lo[s + d].min(x[d]);
                        hi[s + d] = hi[s + d].max(x[d]);
                    }
                    j = self.node(n).parent;
                }
            }
        }
        (lo, hi)
    }

    fn validate_counts(&self, store: &PointStore) -> std::result::Result<(), String> {
        let fresh = crate::posterior::recompute_counts(self, store);
        if fresh != self.posterior {
            return Err("posterior counts differ from a full recomputation".into());
        }
        Ok(())
    }
}
