use super::{MondrianTree, NodeId};
use crate::points::{PointId, PointStore};
use crate::posterior::update_posterior_counts;
use crate::rng::{exponential_or_inf, SplitDraws};

impl MondrianTree {
    /// Walk from the root towards `point`, at each node either inserting a new
    /// split above it or stretching its extent and descending.
    ///
    /// At node `j` the point sticks out of the extent by `e` (zero inside).
    /// A split separating the point fires after `Exp(sum(e))`; if that happens
    /// before `j`'s own split time, a new parent is inserted above `j` with a
    /// fresh leaf for the point. Paused leaves instead absorb the point and
    /// stay paused on a matching label, or re-sample their block on a new one.
    pub(crate) fn extend_block<D: SplitDraws + ?Sized>(&mut self, store: &PointStore, point: PointId, draws: &mut D) {
        let x = store.features(point);
        let y = store.label(point);
        self.num_points += 1;
        let mut extra = vec![0.0; self.dim];
        let mut j = self.root;
        loop {
            if self.nodes[j.index()].paused {
                self.absorb_extent(j, x);
                let node = &mut self.nodes[j.index()];
                let paused_label = store.label(node.points[0]);
                node.points.push(point);
                if y == paused_label {
                    update_posterior_counts(self, j, y);
                } else {
                    let points = std::mem::take(&mut node.points);
                    node.paused = false;
                    self.sample_block(store, j, points, draws);
                }
                return;
            }

            let (lower, upper) = (self.lower(j), self.upper(j));
            for d in 0..self.dim {
                extra[d] = (lower[d] - x[d]).max(0.0) + (x[d] - upper[d]).max(0.0);
            }
            let rate: f64 = extra.iter().sum();
            let tau_parent = self.parent_time(j);
            let wait = exponential_or_inf(draws, rate);
            let split_time = tau_parent + wait;
            if split_time < self.nodes[j.index()].split_time && !self.settings.skip_parent_insertion {
                self.insert_parent(store, j, point, split_time, &extra, draws);
                return;
            }

            self.absorb_extent(j, x);
            match self.child_towards(j, x) {
                Some(child) => j = child,
                None => {
                    self.nodes[j.index()].points.push(point);
                    update_posterior_counts(self, j, y);
                    return;
                }
            }
        }
    }

    /// Insert a new node above `j` whose split separates `point` from `j`'s
    /// extent, plus a sibling leaf holding `point`.
    fn insert_parent<D: SplitDraws + ?Sized>(
        &mut self,
        store: &PointStore,
        j: NodeId,
        point: PointId,
        split_time: f64,
        extra: &[f64],
        draws: &mut D,
    ) {
        let x = store.features(point);
        let dim = draws.categorical(extra);
        let (lo_j, hi_j) = (self.lower(j)[dim], self.upper(j)[dim]);
        // The drawn dimension has positive extra extent, so x is strictly
        // outside [lo_j, hi_j] along it and the interval below cannot reach
        // into j's extent.
        let loc = if x[dim] > hi_j {
            draws.uniform(hi_j, x[dim])
        } else {
            assert!(x[dim] < lo_j, "split dimension drawn with zero extra extent");
            draws.uniform(x[dim], lo_j)
        };

        let grandparent = self.nodes[j.index()].parent;
        let parent = self.push_node(grandparent);
        let leaf = self.push_node(Some(parent));

        let start = j.index() * self.dim;
        let pstart = parent.index() * self.dim;
        self.lower.copy_within(start..start + self.dim, pstart);
        self.upper.copy_within(start..start + self.dim, pstart);
        self.absorb_extent(parent, x);

        let children = if x[dim] <= loc { [leaf, j] } else { [j, leaf] };
        let pnode = &mut self.nodes[parent.index()];
        pnode.split_dim = dim;
        pnode.split_loc = loc;
        pnode.split_time = split_time;
        pnode.children = Some(children);

        match grandparent {
            Some(g) => {
                let slots = self.nodes[g.index()].children.as_mut().expect("parent is internal");
                let slot = slots.iter_mut().find(|c| **c == j).expect("child link");
                *slot = parent;
            }
            None => self.root = parent,
        }
        self.nodes[j.index()].parent = Some(parent);

        self.sample_block(store, leaf, vec![point], draws);
    }
}
