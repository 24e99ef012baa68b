use mondrian_forest::posterior::recompute_counts;
use mondrian_forest::{MondrianTree, PointId, PointStore, RngStream, SplitDraws, TreeSettings};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform_store(n: usize, dim: usize, num_classes: usize, seed: u64) -> PointStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = PointStore::new(dim, num_classes);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        store.push(&x, rng.random_range(0..num_classes)).unwrap();
    }
    store
}

fn ids(n: usize) -> Vec<PointId> {
    (0..n as u32).map(PointId).collect()
}

#[test]
fn single_point_is_a_leaf() {
    let store = uniform_store(1, 3, 2, 0);
    for lifetime in [0.5, f64::INFINITY] {
        let tree = MondrianTree::sample(&store, &ids(1), TreeSettings::new(lifetime, 2, false), RngStream::new(1, 0)).unwrap();
        assert_eq!(tree.num_nodes(), 1);
        let s = tree.stats();
        assert_eq!((s.num_leaves, s.data_weighted_depth, s.max_depth), (1, 0.0, 0));
        assert_eq!(tree.route_to_leaf(&[5.0, -3.0, 0.2]).unwrap(), tree.root());
    }
}

#[test]
fn empty_sample_is_rejected() {
    let store = uniform_store(3, 2, 2, 0);
    let out = MondrianTree::sample(&store, &[], TreeSettings::new(1.0, 2, false), RngStream::new(1, 0));
    assert!(out.is_err());
}

#[test]
fn duplicate_points_never_split() {
    let mut store = PointStore::new(2, 2);
    for y in [0, 1, 0, 1] {
        store.push(&[0.3, 0.3], y).unwrap();
    }
    let tree = MondrianTree::sample(&store, &ids(4), TreeSettings::new(f64::INFINITY, 2, true), RngStream::new(3, 0)).unwrap();
    assert_eq!(tree.num_nodes(), 1);
    assert_eq!(tree.node(tree.root()).points().len(), 4);
    assert!(!tree.node(tree.root()).is_paused());
}

#[test]
fn homogeneous_block_is_paused_without_draws() {
    let mut store = PointStore::new(2, 2);
    for x in [[0.1, 0.2], [0.7, 0.4], [0.5, 0.9]] {
        store.push(&x, 1).unwrap();
    }
    let rng = RngStream::new(9, 0);
    let tree = MondrianTree::sample(&store, &ids(3), TreeSettings::new(f64::INFINITY, 2, true), rng.clone()).unwrap();
    let root = tree.node(tree.root());
    assert!(root.is_leaf() && root.is_paused());
    assert!(root.split_time().is_infinite());
    assert_eq!(tree.rng(), &rng);
    tree.validate(&store).unwrap();
}

#[test]
fn paused_leaf_absorbs_matching_label() {
    let mut store = PointStore::new(2, 2);
    for x in [[0.1, 0.2], [0.7, 0.4], [0.5, 0.9], [0.3, 0.3]] {
        store.push(&x, 1).unwrap();
    }
    let mut tree = MondrianTree::sample(&store, &ids(3), TreeSettings::new(f64::INFINITY, 2, true), RngStream::new(9, 0)).unwrap();
    tree.extend(&store, PointId(3)).unwrap();
    assert_eq!(tree.num_nodes(), 1);
    let root = tree.node(tree.root());
    assert!(root.is_paused());
    assert_eq!(root.points().len(), 4);
    assert_eq!(tree.posterior().counts(tree.root()), &[0, 4]);
    tree.validate(&store).unwrap();
}

#[test]
fn new_label_unpauses_leaf() {
    // Three points labelled 1 sit in one paused leaf; a label-0 point arrives
    // inside their box, so no split can fire above the leaf and the block is
    // re-sampled over all four distinct points.
    let mut store = PointStore::new(2, 2);
    for x in [[0.1, 0.2], [0.7, 0.4], [0.5, 0.9]] {
        store.push(&x, 1).unwrap();
    }
    store.push(&[0.4, 0.5], 0).unwrap();
    for seed in 0..50 {
        let mut tree = MondrianTree::sample(&store, &ids(3), TreeSettings::new(f64::INFINITY, 2, true), RngStream::new(seed, 0)).unwrap();
        let old_root = tree.root();
        tree.extend(&store, PointId(3)).unwrap();
        assert_eq!(tree.root(), old_root, "leaf id is reused as the subtree root");
        let root = tree.node(old_root);
        assert!(!root.is_leaf() && !root.is_paused());
        assert!(root.split_time().is_finite());
        let leaf = tree.route_to_leaf(&[0.4, 0.5]).unwrap();
        assert_eq!(tree.posterior().counts(leaf)[0], 1);
        tree.validate(&store).unwrap();
    }
}

#[test]
fn interior_point_splits_unpaused_leaf() {
    let mut store = PointStore::new(2, 2);
    store.push(&[0.0, 0.0], 0).unwrap();
    store.push(&[1.0, 1.0], 0).unwrap();
    store.push(&[0.5, 0.5], 0).unwrap();
    let mut tree = MondrianTree::sample(&store, &ids(1), TreeSettings::new(f64::INFINITY, 2, false), RngStream::new(2, 0)).unwrap();
    tree.extend(&store, PointId(1)).unwrap();
    tree.extend(&store, PointId(2)).unwrap();
    assert_eq!(tree.stats().num_leaves, 3);
    tree.validate(&store).unwrap();
}

#[test]
fn stats_examples() {
    // Root with leaves holding three points and one point: split on x0 at a
    // scripted location.
    struct Fixed;
    impl SplitDraws for Fixed {
        fn exponential(&mut self, _: f64) -> f64 {
            0.1
        }
        fn categorical(&mut self, w: &[f64]) -> usize {
            w.iter().position(|&v| v > 0.0).unwrap()
        }
        fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
            0.5 * (lo + hi)
        }
    }
    let mut store = PointStore::new(1, 2);
    for x in [0.0, 0.1, 0.2, 1.0] {
        store.push(&[x], 0).unwrap();
    }
    // Lifetime 0.15 allows exactly one split level.
    let tree = MondrianTree::sample_with(&store, &ids(4), TreeSettings::new(0.15, 2, false), RngStream::new(0, 0), &mut Fixed).unwrap();
    let s = tree.stats();
    assert_eq!((s.num_leaves, s.data_weighted_depth, s.max_depth), (2, 1.0, 1));

    // Evenly spaced points split at midpoints give a balanced tree.
    let mut store = PointStore::new(1, 2);
    for x in [0.0, 1.0, 2.0, 3.0] {
        store.push(&[x], 0).unwrap();
    }
    let tree = MondrianTree::sample_with(&store, &ids(4), TreeSettings::new(0.25, 2, false), RngStream::new(0, 0), &mut Fixed).unwrap();
    let s = tree.stats();
    assert_eq!((s.num_leaves, s.data_weighted_depth, s.max_depth), (4, 2.0, 2));
    tree.validate(&store).unwrap();
}

#[test]
fn split_dimension_follows_side_lengths() {
    // Box with side lengths [3, 1]: the first split falls on dimension 0 with
    // probability 3/4.
    let mut store = PointStore::new(2, 2);
    store.push(&[0.0, 0.0], 0).unwrap();
    store.push(&[3.0, 1.0], 1).unwrap();
    let n = 100_000;
    let mut hits = 0;
    let mut rng = RngStream::new(77, 0);
    for _ in 0..n {
        let tree = MondrianTree::sample(&store, &ids(2), TreeSettings::new(f64::INFINITY, 2, false), rng.clone()).unwrap();
        rng = tree.rng().clone();
        hits += usize::from(tree.node(tree.root()).split_dim() == 0);
    }
    let p = hits as f64 / n as f64;
    let se = (0.75f64 * 0.25 / n as f64).sqrt();
    assert!((p - 0.75).abs() < 3.0 * se, "frequency {p}");
}

/// Direct transcription of the batch sampler over plain vectors, sharing no
/// code with the library, returning the number of leaves.
fn reference_leaf_count(points: &[[f64; 2]], lifetime: f64, rng: &mut ChaCha8Rng) -> usize {
    fn block(points: Vec<[f64; 2]>, tau_parent: f64, lifetime: f64, rng: &mut ChaCha8Rng) -> usize {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let len = [hi[0] - lo[0], hi[1] - lo[1]];
        let rate = len[0] + len[1];
        if rate == 0.0 {
            return 1;
        }
        let e = -(1.0 - rng.random::<f64>()).ln() / rate;
        let tau = tau_parent + e;
        if tau >= lifetime {
            return 1;
        }
        let d = if rng.random::<f64>() * rate < len[0] { 0 } else { 1 };
        let xi = lo[d] + rng.random::<f64>() * len[d];
        let (l, r): (Vec<_>, Vec<_>) = points.into_iter().partition(|p| p[d] <= xi);
        if l.is_empty() || r.is_empty() {
            // Measure-zero boundary draw; treat as the corresponding split.
            return block(if l.is_empty() { r } else { l }, tau, lifetime, rng) + 1;
        }
        block(l, tau, lifetime, rng) + block(r, tau, lifetime, rng)
    }
    block(points.to_vec(), 0.0, lifetime, rng)
}

fn leaf_count_comparison(lifetime: f64) -> (f64, f64, f64) {
    let n = 200;
    let mut prng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [prng.random(), prng.random()]).collect();
    let mut store = PointStore::new(2, 2);
    for p in &pts {
        store.push(p, 0).unwrap();
    }
    let seeds = 2000;
    let mut ours = Vec::with_capacity(seeds);
    let mut theirs = Vec::with_capacity(seeds);
    let mut oracle_rng = ChaCha8Rng::seed_from_u64(1234);
    for seed in 0..seeds as u64 {
        let tree = MondrianTree::sample(&store, &ids(n), TreeSettings::new(lifetime, 2, false), RngStream::new(seed, 0)).unwrap();
        ours.push(tree.stats().num_leaves as f64);
        theirs.push(reference_leaf_count(&pts, lifetime, &mut oracle_rng) as f64);
    }
    let (m1, s1) = mondrian_forest::stats::mean_std(&ours);
    let (m2, s2) = mondrian_forest::stats::mean_std(&theirs);
    let se = ((s1 * s1 + s2 * s2) / seeds as f64).sqrt();
    (m1, m2, se)
}

#[test]
fn leaf_count_matches_reference_sampler() {
    // Unbounded lifetime: distinct points always end in singleton leaves.
    let (m1, m2, se) = leaf_count_comparison(f64::INFINITY);
    assert_eq!((m1, m2, se), (200.0, 200.0, 0.0));

    // A finite lifetime makes the count genuinely random.
    let (m1, m2, se) = leaf_count_comparison(3.0);
    assert!(se > 0.0);
    assert!((m1 - m2).abs() < 3.0 * se, "{m1} vs {m2} (se {se})");
}

#[derive(Clone, Debug)]
struct Scenario {
    points: Vec<(Vec<f64>, usize)>,
    initial: usize,
    lifetime: f64,
    pausing: bool,
    seed: u64,
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (1usize..4, 2usize..4).prop_flat_map(|(dim, k)| {
        let point = (prop::collection::vec(prop_oneof![(-2.0..2.0f64), Just(0.5)], dim), 0..k);
        (
            prop::collection::vec(point, 1..40),
            1usize..10,
            prop_oneof![Just(f64::INFINITY), 0.5..8.0f64],
            any::<bool>(),
            any::<u64>(),
        )
            .prop_map(|(points, initial, lifetime, pausing, seed)| Scenario {
                initial: initial.min(points.len()),
                points,
                lifetime,
                pausing,
                seed,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn invariants_hold_after_every_extend(s in scenario()) {
        let dim = s.points[0].0.len();
        let k = s.points.iter().map(|p| p.1).max().unwrap() + 1;
        let mut store = PointStore::new(dim, k.max(2));
        for (x, y) in &s.points {
            store.push(x, *y).unwrap();
        }
        let settings = TreeSettings::new(s.lifetime, k.max(2), s.pausing);
        let mut tree = MondrianTree::sample(&store, &ids(s.initial), settings, RngStream::new(s.seed, 3)).unwrap();
        tree.validate(&store).map_err(TestCaseError::fail)?;
        for i in s.initial..s.points.len() {
            tree.extend(&store, PointId(i as u32)).unwrap();
            tree.validate(&store).map_err(TestCaseError::fail)?;
        }
        prop_assert_eq!(tree.num_points(), s.points.len());
        let recomputed = recompute_counts(&tree, &store);
        prop_assert_eq!(&recomputed, tree.posterior());

        // Every training point routes to the leaf that stores it.
        for id in store.ids() {
            let leaf = tree.route_to_leaf(store.features(id)).unwrap();
            prop_assert!(tree.node(leaf).points().contains(&id));
        }
    }

    #[test]
    fn routing_reaches_a_leaf_containing_nothing_else(x in prop::collection::vec(-3.0..3.0f64, 2), seed in any::<u64>()) {
        let store = uniform_store(30, 2, 2, seed);
        let tree = MondrianTree::sample(&store, &ids(30), TreeSettings::new(f64::INFINITY, 2, false), RngStream::new(seed, 0)).unwrap();
        let path = tree.path(&x).unwrap();
        prop_assert_eq!(path[0], tree.root());
        let leaf = *path.last().unwrap();
        prop_assert!(tree.node(leaf).is_leaf());
        prop_assert_eq!(leaf, tree.route_to_leaf(&x).unwrap());
        for w in path.windows(2) {
            prop_assert_eq!(tree.node(w[1]).parent(), Some(w[0]));
        }
    }
}
