//! Random forest of CART trees (Gini impurity, bootstrap sampling, random
//! feature subsets) with out-of-bag accuracy and stratified k-fold
//! cross-validation.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{degenerate, invalid, Error, Result};

pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    /// Round(√d) features per split.
    Sqrt,
    All,
    Count(usize),
}

impl FeatureSubsample {
    fn count(&self, dim: usize) -> usize {
        let m = match self {
            Self::Sqrt => (dim as f64).sqrt().round() as usize,
            Self::All => dim,
            Self::Count(n) => *n,
        };
        m.clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Samples with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { histogram: Vec<f64> },
}

/// Nodes in creation order; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf<'a>(&'a self, x: &[f64]) -> &'a [f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { histogram } => return histogram,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub version: u32,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub config: ForestConfig,
    pub trees: Vec<Tree>,
    /// Absent when bootstrap sampling is off.
    pub oob_accuracy: Option<f64>,
}

impl ForestModel {
    /// Checks feature indices, child links and leaf normalization, e.g. after
    /// loading a model file.
    pub fn validate(&self) -> Result<()> {
        if self.version != FOREST_VERSION {
            return Err(invalid(alloc::format!(
                "forest model version {} is not supported",
                self.version
            )));
        }
        if self.trees.is_empty() {
            return Err(Error::Empty);
        }
        for tree in &self.trees {
            let n = tree.nodes.len();
            for node in &tree.nodes {
                match node {
                    Node::Split {
                        feature,
                        left,
                        right,
                        threshold,
                    } => {
                        if *feature >= self.feature_dim || *left >= n || *right >= n {
                            return Err(invalid("forest node refers outside its tree"));
                        }
                        if !threshold.is_finite() {
                            return Err(Error::NonFinite);
                        }
                    }
                    Node::Leaf { histogram } => {
                        if histogram.len() != self.n_classes
                            || (histogram.iter().sum::<f64>() - 1.0).abs() > 1e-9
                        {
                            return Err(invalid("forest leaf histogram is not a distribution"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Mean leaf histogram and its argmax; ties go to the lowest class.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        if x.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: x.len(),
            });
        }
        let mut p = alloc::vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (acc, v) in p.iter_mut().zip(tree.leaf(x)) {
                *acc += v;
            }
        }
        let n = self.trees.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        let class = crate::math::argmax(&p).unwrap_or(0);
        Ok((class, p))
    }

    pub fn accuracy(&self, x: &[Vec<f64>], y: &[usize]) -> Result<f64> {
        if x.is_empty() {
            return Err(Error::Empty);
        }
        let mut correct = 0;
        for (row, label) in x.iter().zip(y) {
            if self.predict(row)?.0 == *label {
                correct += 1;
            }
        }
        Ok(correct as f64 / x.len() as f64)
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    config: &'a ForestConfig,
    features_per_split: usize,
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

impl Builder<'_> {
    fn histogram(&self, idx: &[usize]) -> Vec<f64> {
        let mut h = alloc::vec![0.0; self.n_classes];
        for &i in idx {
            h[self.y[i]] += 1.0;
        }
        h
    }

    /// Best (weighted child impurity, feature, threshold) over a random
    /// feature subset.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(f64, usize, f64)> {
        let dim = self.x[0].len();
        let min_leaf = self.config.min_leaf.max(1);
        let n = idx.len() as f64;
        let total = self.histogram(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<usize> = idx.to_vec();
        for f in sample(rng, dim, self.features_per_split).into_iter() {
            order.sort_by(|a, b| self.x[*a][f].total_cmp(&self.x[*b][f]));
            let mut left = alloc::vec![0.0; self.n_classes];
            for k in 0..order.len() - 1 {
                left[self.y[order[k]]] += 1.0;
                let nl = k + 1;
                let (a, b) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if nl < min_leaf || order.len() - nl < min_leaf || !(b > a) {
                    continue;
                }
                let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let (nlf, nrf) = (nl as f64, n - nl as f64);
                let score = (nlf * gini(&left, nlf) + nrf * gini(&right, nrf)) / n;
                if best.is_none_or(|(s, _, _)| score < s) {
                    let mut threshold = 0.5 * (a + b);
                    if !(threshold < b) {
                        threshold = a;
                    }
                    best = Some((score, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&self, root: Vec<usize>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes: Vec<Node> = alloc::vec![Node::Leaf {
            histogram: Vec::new()
        }];
        let mut stack = alloc::vec![(0usize, root, 0usize)];
        while let Some((slot, idx, depth)) = stack.pop() {
            let hist = self.histogram(&idx);
            let pure = hist.iter().filter(|c| **c > 0.0).count() <= 1;
            let too_deep = self.config.max_depth.is_some_and(|d| depth >= d);
            let split = if pure || too_deep || idx.len() < 2 * self.config.min_leaf.max(1) {
                None
            } else {
                self.best_split(&idx, rng)
            };
            match split {
                Some((_, feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    let placeholder = Node::Leaf {
                        histogram: Vec::new(),
                    };
                    nodes.push(placeholder.clone());
                    nodes.push(placeholder);
                    nodes[slot] = Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    };
                    stack.push((right, r, depth + 1));
                    stack.push((left, l, depth + 1));
                }
                None => {
                    let n = idx.len() as f64;
                    nodes[slot] = Node::Leaf {
                        histogram: hist.iter().map(|c| c / n).collect(),
                    };
                }
            }
        }
        Tree { nodes }
    }
}

fn check_dataset(x: &[Vec<f64>], y: &[usize]) -> Result<(usize, usize)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let dim = x.first().ok_or(Error::Empty)?.len();
    if dim == 0 || x.iter().any(|r| r.len() != dim) {
        return Err(invalid("feature rows must share one non-zero length"));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    Ok((dim, n_classes))
}

/// Trains a forest on rows `x` with class indices `y` (classes `0..=max(y)`).
pub fn train_forest(x: &[Vec<f64>], y: &[usize], config: &ForestConfig) -> Result<ForestModel> {
    let (dim, n_classes) = check_dataset(x, y)?;
    let distinct = {
        let mut seen = alloc::vec![false; n_classes];
        y.iter().for_each(|c| seen[*c] = true);
        seen.iter().filter(|s| **s).count()
    };
    if distinct < 2 {
        return Err(degenerate("training data contains a single class"));
    }
    if config.n_trees == 0 {
        return Err(invalid("forest needs at least one tree"));
    }
    if x.len() < 2 * config.min_leaf.max(1) {
        return Err(Error::TooShort {
            needed: 2 * config.min_leaf.max(1),
            got: x.len(),
        });
    }
    let builder = Builder {
        x,
        y,
        n_classes,
        config,
        features_per_split: config.feature_subsample.count(dim),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = x.len();
    let mut trees = Vec::with_capacity(config.n_trees);
    let mut oob_votes = alloc::vec![alloc::vec![0.0; n_classes]; n];
    for _ in 0..config.n_trees {
        let idx: Vec<usize> = if config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let tree = builder.grow(idx.clone(), &mut rng);
        if config.bootstrap {
            let mut in_bag = alloc::vec![false; n];
            idx.iter().for_each(|i| in_bag[*i] = true);
            for i in (0..n).filter(|i| !in_bag[*i]) {
                for (acc, v) in oob_votes[i].iter_mut().zip(tree.leaf(&x[i])) {
                    *acc += v;
                }
            }
        }
        trees.push(tree);
    }
    let oob_accuracy = if config.bootstrap {
        let scored: Vec<bool> = oob_votes
            .iter()
            .zip(y)
            .filter(|(v, _)| v.iter().any(|p| *p > 0.0))
            .map(|(v, label)| crate::math::argmax(v) == Some(*label))
            .collect();
        (!scored.is_empty())
            .then(|| scored.iter().filter(|c| **c).count() as f64 / scored.len() as f64)
    } else {
        None
    };
    Ok(ForestModel {
        version: FOREST_VERSION,
        n_classes,
        feature_dim: dim,
        config: *config,
        trees,
        oob_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
}

/// Stratified `k`-fold cross-validation. Samples of each class are shuffled
/// and dealt to folds in turn, continuing the deal across classes so fold
/// sizes differ by at most one.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    config: &ForestConfig,
) -> Result<CvReport> {
    let (_, n_classes) = check_dataset(x, y)?;
    if k < 2 || k > x.len() {
        return Err(invalid(alloc::format!(
            "{k} folds for {} samples",
            x.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_f01d);
    let mut fold_of = alloc::vec![0usize; x.len()];
    let mut dealt = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|i| y[*i] == class).collect();
        for i in (1..members.len()).rev() {
            members.swap(i, rng.random_range(0..=i));
        }
        for m in members {
            fold_of[m] = dealt % k;
            dealt += 1;
        }
    }
    let mut fold_accuracies = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..x.len() {
            if fold_of[i] == fold {
                vx.push(x[i].clone());
                vy.push(y[i]);
            } else {
                tx.push(x[i].clone());
                ty.push(y[i]);
            }
        }
        let model = train_forest(&tx, &ty, config)?;
        let mut correct = 0;
        for (row, label) in vx.iter().zip(&vy) {
            let (_, p) = model.predict(row)?;
            // Classes absent from the training fold get probability 0.
            if crate::math::argmax(&p) == Some(*label) {
                correct += 1;
            }
        }
        fold_accuracies.push(correct as f64 / vx.len() as f64);
    }
    let mean = crate::math::mean(&fold_accuracies);
    Ok(CvReport {
        fold_accuracies,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use alloc::vec;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn blobs(n_per: usize, classes: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dim).map(|_| sep * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
            .collect();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..n_per {
                x.push(
                    center
                        .iter()
                        .map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect(),
                );
                y.push(c);
            }
        }
        (x, y)
    }

    fn small() -> ForestConfig {
        ForestConfig {
            n_trees: 30,
            seed: 7,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn separable_blobs_528d() {
        let (x, y) = blobs(40, 2, 528, 1.5, 1);
        let m = train_forest(&x, &y, &small()).unwrap();
        m.validate().unwrap();
        assert!(m.oob_accuracy.unwrap() >= 0.95, "{:?}", m.oob_accuracy);
        let (class, p) = m.predict(&x[0]).unwrap();
        assert_eq!(class, 0);
        assert!(p[0] > 0.9, "{p:?}");
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(m.predict(&x[0][..527]).is_err());
    }

    #[test]
    fn determinism_and_serialization() {
        let (x, y) = blobs(20, 3, 16, 2.0, 2);
        let a = serde_json::to_string(&train_forest(&x, &y, &small()).unwrap()).unwrap();
        let b = serde_json::to_string(&train_forest(&x, &y, &small()).unwrap()).unwrap();
        assert_eq!(a, b);
        let back: ForestModel = serde_json::from_str(&a).unwrap();
        back.validate().unwrap();
        let other = ForestConfig { seed: 8, ..small() };
        let c = serde_json::to_string(&train_forest(&x, &y, &other).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_class_errors() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            train_forest(&x, &[1, 1, 1], &small()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn uniform_leaves_tie_to_class_zero() {
        let m = ForestModel {
            version: FOREST_VERSION,
            n_classes: 3,
            feature_dim: 2,
            config: ForestConfig::default(),
            trees: vec![Tree {
                nodes: vec![Node::Leaf {
                    histogram: vec![1.0 / 3.0; 3],
                }],
            }],
            oob_accuracy: None,
        };
        m.validate().unwrap();
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap().0, 0);
    }

    #[test]
    fn cross_validation_oracles() {
        let (x, y) = blobs(30, 4, 20, 2.0, 3);
        let r = cross_validate(&x, &y, 5, &small()).unwrap();
        assert_eq!(r.fold_accuracies.len(), 5);
        assert!(r.mean >= 0.95, "{r:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let shuffled: Vec<usize> = (0..y.len()).map(|_| rng.random_range(0..4)).collect();
        let chance = cross_validate(&x, &shuffled, 5, &small()).unwrap();
        assert!((chance.mean - 0.25).abs() <= 0.1, "{chance:?}");

        let (tx, ty) = blobs(3, 2, 4, 3.0, 4);
        let loo = cross_validate(&tx, &ty, tx.len(), &small()).unwrap();
        assert_eq!(loo.fold_accuracies.len(), 6);
        assert!(loo.fold_accuracies.iter().all(|a| *a == 0.0 || *a == 1.0));
        assert!(cross_validate(&tx, &ty, 7, &small()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn single_full_tree_fits_training_data(
            rows in prop::collection::btree_map(prop::collection::vec(-50i32..50, 3), 0usize..4, 2..40)
        ) {
            let x: Vec<Vec<f64>> = rows.keys().map(|r| r.iter().map(|v| *v as f64).collect()).collect();
            let y: Vec<usize> = rows.values().copied().collect();
            prop_assume!(y.iter().any(|c| *c != y[0]));
            let cfg = ForestConfig {
                n_trees: 1,
                bootstrap: false,
                feature_subsample: FeatureSubsample::All,
                max_depth: None,
                ..ForestConfig::default()
            };
            let m = train_forest(&x, &y, &cfg).unwrap();
            prop_assert_eq!(m.accuracy(&x, &y).unwrap(), 1.0);
            for row in &x {
                let (_, p) = m.predict(row).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
