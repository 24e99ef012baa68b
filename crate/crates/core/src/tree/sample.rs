use super::{MondrianTree, NodeId};
use crate::points::{PointId, PointStore};
use crate::posterior::initialize_posterior_counts;
use crate::rng::{exponential_or_inf, SplitDraws};

impl MondrianTree {
    /// Recursively expand the unexpanded node `j` over `points`.
    ///
    /// The block's extent is the bounding box of its points. A split fires
    /// after an exponential wait whose rate is the box's linear dimension; if
    /// the split time falls inside the lifetime, a dimension is chosen in
    /// proportion to side length and the location uniformly along it.
    /// Otherwise `j` becomes a leaf. With pausing on, a block whose labels
    /// all agree becomes a paused leaf without drawing anything.
    ///
    /// Blocks are expanded depth first, left before right, so the bottom-up
    /// count initialization at each new leaf leaves every ancestor correct
    /// once the whole subtree is done.
    pub(crate) fn sample_block<D: SplitDraws + ?Sized>(
        &mut self,
        store: &PointStore,
        j: NodeId,
        points: Vec<PointId>,
        draws: &mut D,
    ) {
        let lifetime = self.settings.lifetime;
        let mut lengths = vec![0.0; self.dim];
        let mut stack = vec![(j, points)];
        while let Some((j, points)) = stack.pop() {
            debug_assert!(!points.is_empty());
            self.set_extent(store, j, &points);
            let tau_parent = self.parent_time(j);

            let homogeneous = self.settings.use_pausing && {
                let first = store.label(points[0]);
                points.iter().all(|&p| store.label(p) == first)
            };
            let split_time = if homogeneous {
                lifetime
            } else {
                for (d, len) in lengths.iter_mut().enumerate() {
                    *len = self.upper(j)[d] - self.lower(j)[d];
                }
                let rate: f64 = lengths.iter().sum();
                tau_parent + exponential_or_inf(draws, rate)
            };

            if split_time < lifetime {
                let dim = draws.categorical(&lengths);
                let loc = draws.uniform(self.lower(j)[dim], self.upper(j)[dim]);
                let (left_pts, right_pts): (Vec<_>, Vec<_>) =
                    points.into_iter().partition(|&p| store.features(p)[dim] <= loc);
                debug_assert!(!left_pts.is_empty() && !right_pts.is_empty());
                let left = self.push_node(Some(j));
                let right = self.push_node(Some(j));
                let node = &mut self.nodes[j.index()];
                node.children = Some([left, right]);
                node.split_dim = dim;
                node.split_loc = loc;
                node.split_time = split_time;
                node.paused = false;
                stack.push((right, right_pts));
                stack.push((left, left_pts));
            } else {
                let node = &mut self.nodes[j.index()];
                node.children = None;
                node.split_time = lifetime;
                node.paused = homogeneous;
                node.points = points;
                initialize_posterior_counts(self, store, j);
            }
        }
    }

    fn set_extent(&mut self, store: &PointStore, j: NodeId, points: &[PointId]) {
        let (lower, upper) = self.extent_mut(j);
        lower.copy_from_slice(store.features(points[0]));
        upper.copy_from_slice(store.features(points[0]));
        for &p in &points[1..] {
            for ((lo, hi), &v) in lower.iter_mut().zip(upper.iter_mut()).zip(store.features(p)) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
    }
}
