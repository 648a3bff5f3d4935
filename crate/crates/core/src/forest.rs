//! Random-forest classifier for binary callback labels.
//!
//! Each tree is grown on a bootstrap resample of the training rows (drawn
//! with replacement, same size as the training set) using Gini impurity.
//! At every node a random subset of `max_features` columns is examined
//! (default `ceil(sqrt(d))`); if none of them yields a split that strictly
//! lowers impurity, the remaining columns are tried in the same random
//! order before the node is declared a leaf. Depth is unbounded: growth
//! stops only on purity, `min_samples_split`, `min_samples_leaf`, or zero
//! impurity gain. Sample counts are bootstrap multiplicities.
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values present at the node. Among splits of equal gain the lowest
//! feature index wins, then the lowest threshold. Rows go left when
//! `x[feature] <= threshold`.
//!
//! Tree `t` draws its bootstrap and feature order from its own ChaCha
//! stream keyed by `(seed, t)`, so the fitted model does not depend on how
//! many worker threads built it.
//!
//! # Serialized form
//!
//! [`ForestModel`] serializes (via serde, usually to JSON) as:
//!
//! ```text
//! { "n_features": d,
//!   "params": { "n_estimators", "min_samples_split", "min_samples_leaf",
//!               "max_features", "seed" },
//!   "trees": [ { "nodes": [ node, ... ] }, ... ] }
//! ```
//!
//! where each node is either `{"Leaf": {"posterior", "samples"}}` or
//! `{"Split": {"feature", "threshold", "left", "right", "impurity_decrease"}}`
//! and `left`/`right` index into the same tree's `nodes` array. Node 0 is
//! the root.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::FeatureMatrix;
use crate::rng::stream;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Columns examined per node; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 50,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn feature_subset_size(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }

    fn validate(&self) -> Result<(), ForestError> {
        if self.n_estimators == 0 {
            return Err(ForestError::InvalidParams("n_estimators must be positive".into()));
        }
        if self.min_samples_split < 2 {
            return Err(ForestError::InvalidParams("min_samples_split must be at least 2".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be positive".into()));
        }
        if self.max_features == Some(0) {
            return Err(ForestError::InvalidParams("max_features must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        /// Fraction of (bootstrap-weighted) samples at the leaf with label 1.
        posterior: f64,
        samples: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Weighted Gini decrease achieved by this split; always > 0.
        impurity_decrease: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// A tree consisting of a single leaf.
    pub fn leaf(posterior: f64) -> Tree {
        Tree {
            nodes: vec![TreeNode::Leaf {
                posterior,
                samples: 1.0,
            }],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { posterior, .. } => return *posterior,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Assembles a model from hand-built trees.
    pub fn from_trees(n_features: usize, trees: Vec<Tree>) -> ForestModel {
        ForestModel {
            n_features,
            params: ForestParams {
                n_estimators: trees.len(),
                ..ForestParams::default()
            },
            trees,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        sum / self.trees.len() as f64
    }

    /// Checks the structural invariants: leaf posteriors in [0, 1], every
    /// internal node has two in-range children, split features in range, and
    /// every split has positive impurity decrease.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.trees.len() != self.params.n_estimators {
            return Err("tree count differs from n_estimators".into());
        }
        for (t, tree) in self.trees.iter().enumerate() {
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Leaf { posterior, .. } => {
                        if !(0.0..=1.0).contains(posterior) {
                            return Err(format!("tree {t} node {i}: posterior {posterior}"));
                        }
                    }
                    TreeNode::Split {
                        feature,
                        left,
                        right,
                        impurity_decrease,
                        ..
                    } => {
                        if *feature >= self.n_features
                            || *left >= tree.nodes.len()
                            || *right >= tree.nodes.len()
                            || left == right
                        {
                            return Err(format!("tree {t} node {i}: malformed split"));
                        }
                        if *impurity_decrease <= 0.0 {
                            return Err(format!("tree {t} node {i}: non-positive gain"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-column sorted distinct values and each row's index into them.
struct BinnedColumns {
    values: Vec<Vec<f64>>,
    codes: Vec<Vec<u32>>,
}

impl BinnedColumns {
    fn new(x: &FeatureMatrix) -> Self {
        let mut values = Vec::with_capacity(x.n_cols);
        let mut codes = Vec::with_capacity(x.n_cols);
        for j in 0..x.n_cols {
            let col: Vec<f64> = (0..x.n_rows).map(|i| x.get(i, j)).collect();
            let mut uniq = col.clone();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            let c = col
                .iter()
                .map(|v| uniq.binary_search_by(|u| u.total_cmp(v)).unwrap() as u32)
                .collect();
            values.push(uniq);
            codes.push(c);
        }
        BinnedColumns { values, codes }
    }
}

#[derive(Clone, Copy)]
struct Sample {
    row: u32,
    weight: u32,
}

struct SplitChoice {
    feature: usize,
    code: u32,
    threshold: f64,
    gain: f64,
}

struct TreeBuilder<'a> {
    bins: &'a BinnedColumns,
    y: &'a [bool],
    min_split: f64,
    min_leaf: f64,
    m: usize,
    hist_w: Vec<f64>,
    hist_p: Vec<f64>,
}

fn gini_proxy(w: f64, p: f64) -> f64 {
    // sum over classes of count^2 / n; larger is purer.
    (p * p + (w - p) * (w - p)) / w
}

impl<'a> TreeBuilder<'a> {
    fn best_split_on(&mut self, feature: usize, samples: &[Sample], w: f64) -> Option<SplitChoice> {
        let codes = &self.bins.codes[feature];
        let values = &self.bins.values[feature];
        let nb = values.len();
        if nb < 2 {
            return None;
        }
        // (code, weight, positives) per distinct code present at the node, ascending
        let mut present: Vec<(u32, f64, f64)> = Vec::new();
        if nb <= 4 * samples.len() {
            self.hist_w[..nb].iter_mut().for_each(|v| *v = 0.0);
            self.hist_p[..nb].iter_mut().for_each(|v| *v = 0.0);
            for s in samples {
                let c = codes[s.row as usize] as usize;
                let sw = f64::from(s.weight);
                self.hist_w[c] += sw;
                if self.y[s.row as usize] {
                    self.hist_p[c] += sw;
                }
            }
            for c in 0..nb {
                if self.hist_w[c] > 0.0 {
                    present.push((c as u32, self.hist_w[c], self.hist_p[c]));
                }
            }
        } else {
            let mut v: Vec<(u32, f64, f64)> = samples
                .iter()
                .map(|s| {
                    let sw = f64::from(s.weight);
                    let p = if self.y[s.row as usize] { sw } else { 0.0 };
                    (codes[s.row as usize], sw, p)
                })
                .collect();
            v.sort_by_key(|e| e.0);
            for (c, sw, p) in v {
                match present.last_mut() {
                    Some(last) if last.0 == c => {
                        last.1 += sw;
                        last.2 += p;
                    }
                    _ => present.push((c, sw, p)),
                }
            }
        }
        if present.len() < 2 {
            return None;
        }
        let total_p: f64 = present.iter().map(|e| e.2).sum();
        let parent = gini_proxy(w, total_p);
        let mut best: Option<SplitChoice> = None;
        let (mut lw, mut lp) = (0.0, 0.0);
        for k in 0..present.len() - 1 {
            lw += present[k].1;
            lp += present[k].2;
            let rw = w - lw;
            let rp = total_p - lp;
            if lw < self.min_leaf || rw < self.min_leaf {
                continue;
            }
            let gain = gini_proxy(lw, lp) + gini_proxy(rw, rp) - parent;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let a = values[present[k].0 as usize];
                let b = values[present[k + 1].0 as usize];
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b || !threshold.is_finite() {
                    threshold = a;
                }
                best = Some(SplitChoice {
                    feature,
                    code: present[k].0,
                    threshold,
                    gain,
                });
            }
        }
        best
    }

    fn build(&mut self, mut samples: Vec<Sample>, rng: &mut impl Rng) -> Tree {
        let n_features = self.bins.values.len();
        let mut nodes: Vec<TreeNode> = Vec::new();
        // (range into `samples`, slot to fill)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        nodes.push(TreeNode::Leaf {
            posterior: 0.0,
            samples: 0.0,
        });
        stack.push((0, samples.len(), 0));
        let mut order: Vec<usize> = (0..n_features).collect();
        while let Some((start, end, slot)) = stack.pop() {
            let node_samples = &samples[start..end];
            let w: f64 = node_samples.iter().map(|s| f64::from(s.weight)).sum();
            let p: f64 = node_samples
                .iter()
                .filter(|s| self.y[s.row as usize])
                .map(|s| f64::from(s.weight))
                .sum();
            let leaf = TreeNode::Leaf {
                posterior: if w > 0.0 { p / w } else { 0.0 },
                samples: w,
            };
            if w < self.min_split || w < 2.0 * self.min_leaf || p == 0.0 || p == w {
                nodes[slot] = leaf;
                continue;
            }
            // tolerance on the gain so that float noise never counts as a split
            let eps = 1e-9 * w.max(1.0);
            let mut best: Option<SplitChoice> = None;
            let mut visited = 0;
            // Lazy Fisher-Yates over feature indices.
            for i in 0..n_features {
                let j = rng.gen_range(i..n_features);
                order.swap(i, j);
                let f = order[i];
                let Some(cand) = self.best_split_on(f, node_samples, w) else {
                    continue;
                };
                visited += 1;
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tol = 1e-12 * b.gain.abs().max(1e-300);
                        if (cand.gain - b.gain).abs() <= tol {
                            (cand.feature, cand.threshold) < (b.feature, b.threshold)
                        } else {
                            cand.gain > b.gain
                        }
                    }
                };
                if better {
                    best = Some(cand);
                }
                if visited >= self.m && best.as_ref().is_some_and(|b| b.gain > eps) {
                    break;
                }
            }
            let Some(split) = best.filter(|b| b.gain > eps) else {
                nodes[slot] = leaf;
                continue;
            };
            assert!(split.gain > 0.0, "split must strictly decrease impurity");
            // partition: code <= split.code goes left
            let codes = &self.bins.codes[split.feature];
            let region = &mut samples[start..end];
            let mut mid = 0;
            for i in 0..region.len() {
                if codes[region[i].row as usize] <= split.code {
                    region.swap(i, mid);
                    mid += 1;
                }
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(TreeNode::Leaf {
                posterior: 0.0,
                samples: 0.0,
            });
            nodes.push(TreeNode::Leaf {
                posterior: 0.0,
                samples: 0.0,
            });
            nodes[slot] = TreeNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
                impurity_decrease: split.gain,
            };
            stack.push((start + mid, end, right));
            stack.push((start, start + mid, left));
        }
        Tree { nodes }
    }
}

pub fn fit_forest(
    x: &FeatureMatrix,
    y: &[bool],
    params: &ForestParams,
) -> Result<ForestModel, ForestError> {
    params.validate()?;
    if x.n_rows != y.len() {
        return Err(ForestError::ShapeMismatch {
            expected: x.n_rows,
            got: y.len(),
        });
    }
    if x.n_rows == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    let n = x.n_rows;
    let bins = BinnedColumns::new(x);
    let max_bins = bins.values.iter().map(Vec::len).max().unwrap_or(0);
    let m = params.feature_subset_size(x.n_cols);
    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(params.seed, "forest-tree", t as u64);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            let samples: Vec<Sample> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| Sample {
                    row: i as u32,
                    weight: c,
                })
                .collect();
            let mut builder = TreeBuilder {
                bins: &bins,
                y,
                min_split: params.min_samples_split as f64,
                min_leaf: params.min_samples_leaf as f64,
                m,
                hist_w: vec![0.0; max_bins],
                hist_p: vec![0.0; max_bins],
            };
            builder.build(samples, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        n_features: x.n_cols,
        params: params.clone(),
        trees,
    })
}

/// Mean leaf posterior across trees for every row.
pub fn predict_proba(model: &ForestModel, x: &FeatureMatrix) -> Result<Vec<f64>, ForestError> {
    if x.n_cols != model.n_features {
        return Err(ForestError::ShapeMismatch {
            expected: model.n_features,
            got: x.n_cols,
        });
    }
    Ok(x.rows().map(|row| model.predict_row(row)).collect())
}

/// Shuffles `items` with the forest's RNG conventions; exposed for tests
/// that need a reproducible permutation.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, "permutation", 0));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_rows(&values.iter().map(|&v| vec![v]).collect::<Vec<_>>())
    }

    #[test]
    fn axis_aligned_threshold_is_learned() {
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let y: Vec<bool> = xs.iter().map(|&v| v > 0.5).collect();
        let x = column(&xs);
        let model = fit_forest(&x, &y, &ForestParams::default()).unwrap();
        let p = predict_proba(&model, &x).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, y)| (**p > 0.5) == **y).count();
        assert_eq!(acc, 200);
        model.check_invariants().unwrap();
        // root splits are grid midpoints near the class boundary
        for t in &model.trees {
            if let TreeNode::Split { threshold, .. } = &t.nodes[0] {
                let doubled = threshold * 2.0 * 199.0;
                assert!((doubled - doubled.round()).abs() < 1e-6);
                assert!(*threshold > 0.4 && *threshold < 0.6, "{threshold}");
            }
        }
    }

    #[test]
    fn single_class_predicts_zero() {
        let x = column(&[0.1, 0.2, 0.3, 0.4]);
        let y = vec![false; 4];
        let model = fit_forest(&x, &y, &ForestParams::default()).unwrap();
        assert!(predict_proba(&model, &x).unwrap().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn mean_of_tree_posteriors() {
        let model = ForestModel::from_trees(1, vec![Tree::leaf(0.2), Tree::leaf(0.6)]);
        let p = model.predict_row(&[0.0]);
        assert!((p - 0.4).abs() < 1e-15);
        let one = ForestModel::from_trees(1, vec![Tree::leaf(1.0)]);
        assert_eq!(one.predict_row(&[3.0]), 1.0);
    }

    #[test]
    fn shape_errors() {
        let x = column(&[0.0, 1.0]);
        assert_eq!(
            fit_forest(&x, &[true], &ForestParams::default()),
            Err(ForestError::ShapeMismatch { expected: 2, got: 1 })
        );
        let empty = FeatureMatrix::from_rows(&[]);
        assert_eq!(
            fit_forest(&empty, &[], &ForestParams::default()),
            Err(ForestError::EmptyTrainingSet)
        );
        let model = fit_forest(&x, &[true, false], &ForestParams::default()).unwrap();
        let wide = FeatureMatrix::from_rows(&[vec![0.0, 1.0]]);
        assert!(matches!(
            predict_proba(&model, &wide),
            Err(ForestError::ShapeMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn conflicting_duplicates_terminate_as_leaf() {
        let x = column(&[1.0; 10]);
        let y: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let model = fit_forest(&x, &y, &ForestParams::default()).unwrap();
        assert!(model.trees.iter().all(|t| t.nodes.len() == 1));
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // two identical columns: every split must use column 0
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 4) as f64, (i % 4) as f64]).collect();
        let y: Vec<bool> = (0..40).map(|i| i % 4 >= 2).collect();
        let x = FeatureMatrix::from_rows(&rows);
        let params = ForestParams {
            max_features: Some(2),
            ..ForestParams::default()
        };
        let model = fit_forest(&x, &y, &params).unwrap();
        for t in &model.trees {
            for n in &t.nodes {
                if let TreeNode::Split { feature, .. } = n {
                    assert_eq!(*feature, 0);
                }
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<Vec<f64>> = (0..300)
            .map(|i| vec![(i * 37 % 101) as f64, (i % 7) as f64, (i % 3) as f64])
            .collect();
        let y: Vec<bool> = (0..300).map(|i| (i * 37 % 101) % 3 == 0 || i % 7 == 2).collect();
        let x = FeatureMatrix::from_rows(&rows);
        let p = ForestParams::default().with_seed(11);
        let a = fit_forest(&x, &y, &p).unwrap();
        let b = fit_forest(&x, &y, &p).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&x, &y, &ForestParams::default().with_seed(12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let x = column(&[0.0, 1.0]);
        let bad = ForestParams {
            n_estimators: 0,
            ..ForestParams::default()
        };
        assert!(matches!(fit_forest(&x, &[true, false], &bad), Err(ForestError::InvalidParams(_))));
    }
}
