//! Random forests and extremely randomized trees with leaf membership queries.
//!
//! Leaves keep the (deduplicated) training row indices that reached them, so
//! a forest answers "which training rows share a leaf with `x` in tree `k`".

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{NafError, Result};
use crate::par::map_indexed;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForestKind {
    /// Bootstrap samples, exhaustive best split.
    #[serde(rename = "rf")]
    RandomForest,
    /// Full sample, one random threshold per feature.
    #[serde(rename = "ert")]
    ExtraTrees,
}

impl ForestKind {
    pub fn short_name(self) -> &'static str {
        match self {
            ForestKind::RandomForest => "rf",
            ForestKind::ExtraTrees => "ert",
        }
    }
}

impl fmt::Display for ForestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ForestKind::RandomForest => "RF",
            ForestKind::ExtraTrees => "ERT",
        })
    }
}

impl FromStr for ForestKind {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf" => Ok(ForestKind::RandomForest),
            "ert" => Ok(ForestKind::ExtraTrees),
            other => Err(NafError::Config(format!(
                "unknown forest kind {other:?}; expected rf or ert"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub kind: ForestKind,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestConfig {
    /// The conventional pairing: RF bootstraps, ERT uses the full sample.
    pub fn new(kind: ForestKind, n_trees: usize, min_leaf_size: usize, seed: u64) -> Self {
        Self {
            n_trees,
            kind,
            min_leaf_size,
            max_depth: None,
            bootstrap: kind == ForestKind::RandomForest,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(NafError::Config("n_trees must be >= 1".into()));
        }
        if self.min_leaf_size == 0 {
            return Err(NafError::Config("min_leaf_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Sorted, deduplicated training row indices.
        indices: Vec<usize>,
        /// Mean target over `indices`.
        mean: f64,
    },
}

/// A binary regression tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Leaf node id for every training row the tree was fitted on.
    membership: Vec<Option<usize>>,
}

impl Tree {
    /// Assemble a tree from its arena, checking structural invariants.
    pub fn from_nodes(nodes: Vec<Node>, n_rows: usize) -> Result<Self> {
        let bad = |msg: String| Err(NafError::ModelFormat(msg));
        if nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut membership = vec![None; n_rows];
        let mut reached = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if reached[id] {
                return bad(format!("node {id} reached twice"));
            }
            reached[id] = true;
            match &nodes[id] {
                Node::Split { left, right, .. } => {
                    for &c in [left, right] {
                        if c >= nodes.len() || c == id {
                            return bad(format!("node {id} has invalid child {c}"));
                        }
                        stack.push(c);
                    }
                }
                Node::Leaf { indices, .. } => {
                    if indices.is_empty() {
                        return bad(format!("leaf {id} is empty"));
                    }
                    for &i in indices {
                        if i >= n_rows {
                            return bad(format!("leaf {id} references row {i} >= {n_rows}"));
                        }
                        if membership[i].replace(id).is_some() {
                            return bad(format!("row {i} appears in two leaves"));
                        }
                    }
                }
            }
        }
        if reached.iter().any(|r| !r) {
            return bad("tree has unreachable nodes".into());
        }
        Ok(Self { nodes, membership })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Node id of the leaf reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn leaf_indices(&self, leaf: usize) -> &[usize] {
        match &self.nodes[leaf] {
            Node::Leaf { indices, .. } => indices,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    pub fn leaf_mean(&self, leaf: usize) -> f64 {
        match &self.nodes[leaf] {
            Node::Leaf { mean, .. } => *mean,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    /// Leaf containing training row `row`, if the tree was fitted on it.
    pub fn leaf_of_row(&self, row: usize) -> Option<usize> {
        self.membership.get(row).copied().flatten()
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, &[usize])> {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            Node::Leaf { indices, .. } => Some((id, indices.as_slice())),
            Node::Split { .. } => None,
        })
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

/// One tree's sentence for a training word: the members of the leaf holding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sentence<'a> {
    pub tree: usize,
    pub leaf: usize,
    pub members: &'a [usize],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    config: ForestConfig,
    n_features: usize,
    n_rows: usize,
}

impl Forest {
    pub fn from_parts(
        trees: Vec<Tree>,
        config: ForestConfig,
        n_features: usize,
        n_rows: usize,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(NafError::ModelFormat("forest has no trees".into()));
        }
        if trees.iter().any(|t| t.membership.len() != n_rows) {
            return Err(NafError::ModelFormat(
                "tree row count disagrees with forest".into(),
            ));
        }
        Ok(Self {
            trees,
            config,
            n_features,
            n_rows,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Training rows sharing tree `k`'s leaf with `x`.
    pub fn leaf_lookup(&self, k: usize, x: &[f64]) -> &[usize] {
        let tree = &self.trees[k];
        tree.leaf_indices(tree.leaf_of(x))
    }

    /// Uniform average of the reached leaf means.
    pub fn plain_predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_mean(t.leaf_of(x))).sum();
        sum / self.trees.len() as f64
    }

    /// Sentences containing training row `w`, one per tree that was fitted
    /// on `w`. Trees whose bootstrap sample omitted `w` are skipped.
    pub fn sentences(&self, w: usize) -> Vec<Sentence<'_>> {
        self.trees
            .iter()
            .enumerate()
            .filter_map(|(k, t)| {
                t.leaf_of_row(w).map(|leaf| Sentence {
                    tree: k,
                    leaf,
                    members: t.leaf_indices(leaf),
                })
            })
            .collect()
    }
}

pub fn build_forest(dataset: &Dataset, config: &ForestConfig) -> Result<Forest> {
    config.validate()?;
    let n = dataset.n_rows();
    if n < 2 * config.min_leaf_size {
        return Err(NafError::TooSmall(format!(
            "{n} rows cannot form two leaves of at least {} rows",
            config.min_leaf_size
        )));
    }
    let trees = map_indexed(config.n_trees, |k| {
        let mut rng = stream_rng(config.seed, k as u64);
        let sample: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut grower = Grower {
            data: dataset,
            config,
            rng,
            nodes: Vec::new(),
        };
        grower.grow(sample, 0);
        Tree::from_nodes(grower.nodes, n)
    });
    let trees = trees.into_iter().collect::<Result<Vec<_>>>()?;
    Forest::from_parts(trees, config.clone(), dataset.n_features(), n)
}

struct Grower<'a> {
    data: &'a Dataset,
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let y = self.data.targets();
        let mean = sample.iter().map(|&i| y[i]).sum::<f64>() / sample.len() as f64;
        let sse: f64 = sample.iter().map(|&i| (y[i] - mean).powi(2)).sum();

        let can_split = sample.len() >= 2 * self.config.min_leaf_size
            && self.config.max_depth.is_none_or(|m| depth < m)
            && sse > 0.0;
        let split = if can_split {
            match self.config.kind {
                ForestKind::RandomForest => self.best_exhaustive(&sample, sse),
                ForestKind::ExtraTrees => self.best_random(&sample, sse),
            }
        } else {
            None
        };

        match split {
            Some(s) if s.gain > 1e-12 * sse => {
                let (left, right): (Vec<usize>, Vec<usize>) = sample
                    .iter()
                    .partition(|&&i| self.data.row(i)[s.feature] <= s.threshold);
                self.nodes.push(Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: 0,
                    right: 0,
                });
                let l = self.grow(left, depth + 1);
                let r = self.grow(right, depth + 1);
                if let Node::Split { left, right, .. } = &mut self.nodes[id] {
                    *left = l;
                    *right = r;
                }
            }
            _ => {
                let mut indices = sample;
                indices.sort_unstable();
                indices.dedup();
                let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64;
                self.nodes.push(Node::Leaf { indices, mean });
            }
        }
        id
    }

    /// Best variance-reducing midpoint split over all features.
    fn best_exhaustive(&self, sample: &[usize], sse: f64) -> Option<Split> {
        let y = self.data.targets();
        let m = sample.len();
        let min_leaf = self.config.min_leaf_size;
        let total: f64 = sample.iter().map(|&i| y[i]).sum();
        let total_sq: f64 = sample.iter().map(|&i| y[i] * y[i]).sum();
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for f in 0..self.data.n_features() {
            pairs.clear();
            pairs.extend(sample.iter().map(|&i| (self.data.row(i)[f], y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut sum_l, mut sq_l) = (0.0, 0.0);
            for pos in 1..m {
                let (v_prev, y_prev) = pairs[pos - 1];
                sum_l += y_prev;
                sq_l += y_prev * y_prev;
                if pos < min_leaf || m - pos < min_leaf || pairs[pos].0 <= v_prev {
                    continue;
                }
                let (nl, nr) = (pos as f64, (m - pos) as f64);
                let sum_r = total - sum_l;
                let sse_l = (sq_l - sum_l * sum_l / nl).max(0.0);
                let sse_r = ((total_sq - sq_l) - sum_r * sum_r / nr).max(0.0);
                let gain = sse - sse_l - sse_r;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let v_next = pairs[pos].0;
                    let mut threshold = v_prev + (v_next - v_prev) / 2.0;
                    if threshold >= v_next {
                        threshold = v_prev;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    /// One uniform threshold per feature; keep the feature that reduces
    /// variance the most.
    fn best_random(&mut self, sample: &[usize], sse: f64) -> Option<Split> {
        let y = self.data.targets();
        let min_leaf = self.config.min_leaf_size;
        let mut best: Option<Split> = None;
        for f in 0..self.data.n_features() {
            let (lo, hi) = sample
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = self.data.row(i)[f];
                    (lo.min(v), hi.max(v))
                });
            if hi <= lo {
                continue;
            }
            let u: f64 = self.rng.random();
            let threshold = lo + u * (hi - lo);
            if threshold <= lo || threshold >= hi {
                continue;
            }
            let (mut nl, mut sl, mut ql, mut sr, mut qr) = (0usize, 0.0, 0.0, 0.0, 0.0);
            for &i in sample {
                if self.data.row(i)[f] <= threshold {
                    nl += 1;
                    sl += y[i];
                    ql += y[i] * y[i];
                } else {
                    sr += y[i];
                    qr += y[i] * y[i];
                }
            }
            let nr = sample.len() - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let sse_l = (ql - sl * sl / nl as f64).max(0.0);
            let sse_r = (qr - sr * sr / nr as f64).max(0.0);
            let gain = sse - sse_l - sse_r;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_friedman, FriedmanVariant};
    use proptest::prelude::*;
    use rand::Rng;

    fn single_tree(kind: ForestKind, min_leaf: usize) -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            kind,
            min_leaf_size: min_leaf,
            max_depth: None,
            bootstrap: false,
            seed: 0,
        }
    }

    #[test]
    fn two_separable_points() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let forest = build_forest(&ds, &single_tree(kind, 1)).unwrap();
            let tree = &forest.trees()[0];
            assert!(matches!(tree.nodes()[0], Node::Split { feature: 0, .. }));
            assert_eq!(forest.plain_predict(&[0.0]), 0.0);
            assert_eq!(forest.plain_predict(&[1.0]), 1.0);
            assert_eq!(forest.leaf_lookup(0, &[0.9]), &[1]);
        }
        let forest = build_forest(&ds, &single_tree(ForestKind::RandomForest, 1)).unwrap();
        match forest.trees()[0].nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 0.5),
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_targets_make_single_leaf() {
        let rows = (0..20).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let ds = Dataset::new(rows, vec![3.5; 20]).unwrap();
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let forest = build_forest(&ds, &single_tree(kind, 1)).unwrap();
            assert_eq!(forest.trees()[0].nodes().len(), 1);
            let s = forest.sentences(4);
            assert_eq!(s.len(), 1);
            assert_eq!(s[0].members, (0..20).collect::<Vec<_>>().as_slice());
        }
    }

    #[test]
    fn single_leaf_mean_and_uniform_average() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0]], vec![2.0, 4.0]).unwrap();
        let mut cfg = single_tree(ForestKind::RandomForest, 1);
        cfg.max_depth = Some(0);
        let forest = build_forest(&ds, &cfg).unwrap();
        assert_eq!(forest.plain_predict(&[0.3]), 3.0);
    }

    #[test]
    fn plain_predict_averages_leaf_means() {
        let leaf = |mean: f64| {
            Tree::from_nodes(
                vec![Node::Leaf {
                    indices: vec![0],
                    mean,
                }],
                1,
            )
            .unwrap()
        };
        let cfg = ForestConfig::new(ForestKind::ExtraTrees, 3, 1, 0);
        let forest = Forest::from_parts(vec![leaf(1.0), leaf(2.0), leaf(6.0)], cfg, 1, 1).unwrap();
        assert_eq!(forest.plain_predict(&[0.0]), 3.0);
    }

    #[test]
    fn too_small_dataset_is_rejected() {
        let ds = Dataset::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            build_forest(&ds, &single_tree(ForestKind::RandomForest, 2)),
            Err(NafError::TooSmall(_))
        ));
    }

    #[test]
    fn min_leaf_respected_without_bootstrap() {
        let ds = gen_friedman(FriedmanVariant::One, 150, 0.5, 11).unwrap();
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let mut cfg = ForestConfig::new(kind, 8, 10, 3);
            cfg.bootstrap = false;
            let forest = build_forest(&ds, &cfg).unwrap();
            for t in forest.trees() {
                assert!(t.leaves().all(|(_, idx)| idx.len() >= 10));
            }
            let mut rng = stream_rng(99, 0);
            for _ in 0..100 {
                let q: Vec<f64> = (0..10).map(|_| rng.random::<f64>() * 1.4 - 0.2).collect();
                for k in 0..forest.n_trees() {
                    assert!(forest.leaf_lookup(k, &q).len() >= 10);
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let ds = gen_friedman(FriedmanVariant::Two, 60, 0.0, 1).unwrap();
        for kind in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            let cfg = ForestConfig::new(kind, 5, 3, 17);
            assert_eq!(build_forest(&ds, &cfg).unwrap(), build_forest(&ds, &cfg).unwrap());
        }
    }

    #[test]
    fn malformed_arena_rejected() {
        assert!(Tree::from_nodes(
            vec![Node::Leaf {
                indices: vec![],
                mean: 0.0
            }],
            1
        )
        .is_err());
        let dup = vec![
            Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 1,
                right: 2,
            },
            Node::Leaf {
                indices: vec![0],
                mean: 0.0,
            },
            Node::Leaf {
                indices: vec![0],
                mean: 0.0,
            },
        ];
        assert!(Tree::from_nodes(dup, 1).is_err());
    }

    fn check_ert_thresholds(tree: &Tree, ds: &Dataset) {
        // Recompute every node's row set by routing and check the threshold
        // lies strictly inside that node's feature range.
        fn walk(tree: &Tree, ds: &Dataset, id: usize, rows: Vec<usize>) {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = tree.nodes()[id]
            {
                let vals: Vec<f64> = rows.iter().map(|&i| ds.row(i)[feature]).collect();
                let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo < threshold && threshold < hi);
                let (l, r) = rows.into_iter().partition(|&i| ds.row(i)[feature] <= threshold);
                walk(tree, ds, left, l);
                walk(tree, ds, right, r);
            }
        }
        walk(tree, ds, 0, (0..ds.n_rows()).collect());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn leaves_partition_fitted_rows(seed in any::<u64>(), min_leaf in 1usize..6, rf in any::<bool>()) {
            let ds = gen_friedman(FriedmanVariant::One, 40, 1.0, seed).unwrap();
            let kind = if rf { ForestKind::RandomForest } else { ForestKind::ExtraTrees };
            let forest = build_forest(&ds, &ForestConfig::new(kind, 4, min_leaf, seed)).unwrap();
            for tree in forest.trees() {
                let mut all: Vec<usize> = tree.leaves().flat_map(|(_, idx)| idx.iter().copied()).collect();
                all.sort_unstable();
                let fitted: Vec<usize> = (0..40).filter(|&i| tree.leaf_of_row(i).is_some()).collect();
                prop_assert_eq!(&all, &fitted);
                // routing a fitted row lands in the leaf that lists it
                for &i in &fitted {
                    prop_assert_eq!(tree.leaf_of(ds.row(i)), tree.leaf_of_row(i).unwrap());
                }
                if !rf {
                    prop_assert_eq!(fitted.len(), 40);
                    check_ert_thresholds(tree, &ds);
                }
            }
            for w in 0..40 {
                for s in forest.sentences(w) {
                    prop_assert!(s.members.contains(&w));
                }
            }
        }

        #[test]
        fn plain_predict_matches_brute_force(seed in any::<u64>()) {
            let ds = gen_friedman(FriedmanVariant::Three, 50, 0.1, seed).unwrap();
            let forest = build_forest(&ds, &ForestConfig::new(ForestKind::RandomForest, 6, 2, seed)).unwrap();
            let q = ds.row(7);
            let mut total = 0.0;
            for tree in forest.trees() {
                let mut id = 0;
                let leaf_mean = loop {
                    match &tree.nodes()[id] {
                        Node::Split { feature, threshold, left, right } => {
                            id = if q[*feature] <= *threshold { *left } else { *right };
                        }
                        Node::Leaf { indices, .. } => {
                            break indices.iter().map(|&i| ds.targets()[i]).sum::<f64>() / indices.len() as f64;
                        }
                    }
                };
                total += leaf_mean;
            }
            prop_assert_eq!(forest.plain_predict(q), total / forest.n_trees() as f64);
        }
    }
}
