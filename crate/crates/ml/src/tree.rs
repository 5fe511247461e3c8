//! Multi-label CART trees and bagged forests.
//!
//! Splits are thresholds on one feature, chosen to minimize the Gini impurity
//! summed over all labels. For a node of `n` samples with per-label positive
//! counts `c_l`, the weighted impurity is `2 * (sum c_l - sum c_l^2 / n)`, so
//! both children can be scored in constant time while scanning a sorted
//! feature by keeping `sum a_l`, `sum a_l^2` and `sum c_l * a_l` for the left
//! counts `a_l`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::MlError;

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaxFeatures {
    All,
    Sqrt,
}

impl MaxFeatures {
    pub fn count(self, dim: usize) -> usize {
        match self {
            MaxFeatures::All => dim,
            MaxFeatures::Sqrt => ((dim as f64).sqrt() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { min_samples_leaf: 1, max_features: MaxFeatures::All }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            bootstrap: true,
            tree: TreeParams { min_samples_leaf: 1, max_features: MaxFeatures::Sqrt },
        }
    }
}

/// Training matrix with per-feature dense ranks.
pub struct TrainingSet<'a> {
    rows: &'a [Vec<f64>],
    /// Positive label indices of every sample.
    labels: Vec<Vec<u32>>,
    n_labels: usize,
    /// `ranks[f][i]`: rank of sample `i` among the distinct values of feature `f`.
    ranks: Vec<Vec<u32>>,
    /// Sorted distinct values of every feature.
    values: Vec<Vec<f64>>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(rows: &'a [Vec<f64>], labels: &[Vec<bool>]) -> Result<Self, MlError> {
        if rows.is_empty() {
            return Err(MlError::TooFewExamples { need: 1, got: 0 });
        }
        if rows.len() != labels.len() {
            return Err(MlError::Dimension(format!("{} rows, {} label vectors", rows.len(), labels.len())));
        }
        let (dim, n_labels) = (rows[0].len(), labels[0].len());
        if let Some(i) = (0..rows.len()).find(|&i| rows[i].len() != dim || labels[i].len() != n_labels) {
            return Err(MlError::Dimension(format!("training example {i} has a different shape")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MlError::Invalid("non-finite feature value".into()));
        }
        let mut ranks = Vec::with_capacity(dim);
        let mut values = Vec::with_capacity(dim);
        for f in 0..dim {
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
            let mut rank = vec![0u32; rows.len()];
            let mut distinct: Vec<f64> = Vec::new();
            for &i in &order {
                if distinct.last() != Some(&rows[i][f]) {
                    distinct.push(rows[i][f]);
                }
                rank[i] = (distinct.len() - 1) as u32;
            }
            ranks.push(rank);
            values.push(distinct);
        }
        let labels = labels
            .iter()
            .map(|y| y.iter().enumerate().filter(|(_, &b)| b).map(|(l, _)| l as u32).collect())
            .collect();
        Ok(TrainingSet { rows, labels, n_labels, ranks, values })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.ranks.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Node {
    /// Split feature, or `LEAF`.
    feature: u32,
    threshold: f64,
    /// Left child, or the leaf index for leaves.
    left: u32,
    right: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub dim: usize,
    pub n_labels: usize,
    nodes: Vec<Node>,
    /// Fraction of positive samples per label, one row per leaf.
    leaves: Vec<f32>,
}

struct Split {
    feature: usize,
    /// Highest rank sent left.
    rank: u32,
    score: f64,
}

struct Builder<'s, 'a> {
    data: &'s TrainingSet<'a>,
    params: TreeParams,
    rng: ChaCha8Rng,
    counts: Vec<u64>,
    left: Vec<u64>,
    keys: Vec<u64>,
    scratch: Vec<u32>,
}

impl Builder<'_, '_> {
    fn node_counts(&mut self, samples: &[u32]) -> (u64, u64) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        for &s in samples {
            for &l in &self.data.labels[s as usize] {
                self.counts[l as usize] += 1;
            }
        }
        let c1 = self.counts.iter().sum();
        let c2 = self.counts.iter().map(|c| c * c).sum();
        (c1, c2)
    }

    fn best_split(&mut self, samples: &[u32], c1: u64, c2: u64) -> Option<Split> {
        let data = self.data;
        let n = samples.len() as u64;
        let min_leaf = self.params.min_samples_leaf.max(1) as u64;
        let dim = data.dim();
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(&mut self.rng);
        let wanted = self.params.max_features.count(dim);
        let mut visited = 0;
        let mut best: Option<Split> = None;
        for &f in &order {
            if visited == wanted {
                break;
            }
            let ranks = &data.ranks[f];
            self.keys.clear();
            self.keys.extend(samples.iter().map(|&s| ((ranks[s as usize] as u64) << 32) | s as u64));
            self.keys.sort_unstable();
            if self.keys[0] >> 32 == self.keys[self.keys.len() - 1] >> 32 {
                continue;
            }
            visited += 1;
            self.left.iter_mut().for_each(|a| *a = 0);
            let (mut a1, mut a2, mut ca) = (0u64, 0u64, 0u64);
            for (i, &key) in self.keys.iter().enumerate() {
                for &l in &data.labels[(key & 0xffff_ffff) as usize] {
                    let a = &mut self.left[l as usize];
                    a2 += 2 * *a + 1;
                    *a += 1;
                    a1 += 1;
                    ca += self.counts[l as usize];
                }
                let nl = i as u64 + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf || self.keys[i + 1] >> 32 == key >> 32 {
                    continue;
                }
                let (r1, r2) = (c1 - a1, c2 + a2 - 2 * ca);
                let score = (a1 as f64 - a2 as f64 / nl as f64) + (r1 as f64 - r2 as f64 / nr as f64);
                if best.as_ref().map_or(true, |b| score < b.score) {
                    best = Some(Split { feature: f, rank: (key >> 32) as u32, score });
                }
            }
        }
        best
    }

    fn leaf(&self, n: usize, leaves: &mut Vec<f32>) -> u32 {
        let index = leaves.len() / self.data.n_labels.max(1);
        leaves.extend(self.counts.iter().map(|&c| (c as f64 / n as f64) as f32));
        index as u32
    }

    fn build(mut self, mut samples: Vec<u32>) -> Tree {
        let data = self.data;
        let mut nodes = vec![Node { feature: LEAF, threshold: 0.0, left: 0, right: 0 }];
        let mut leaves = Vec::new();
        let mut stack = vec![(0usize, 0usize, samples.len())];
        let min_leaf = self.params.min_samples_leaf.max(1);
        while let Some((id, lo, hi)) = stack.pop() {
            let n = hi - lo;
            let (c1, c2) = self.node_counts(&samples[lo..hi]);
            let pure = self.counts.iter().all(|&c| c == 0 || c == n as u64);
            let split = if pure || n < 2 * min_leaf { None } else { self.best_split(&samples[lo..hi], c1, c2) };
            let Some(split) = split else {
                nodes[id].left = self.leaf(n, &mut leaves);
                continue;
            };
            let ranks = &data.ranks[split.feature];
            self.scratch.clear();
            let mut w = lo;
            for i in lo..hi {
                let s = samples[i];
                if ranks[s as usize] <= split.rank {
                    samples[w] = s;
                    w += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            samples[w..hi].copy_from_slice(&self.scratch);
            let values = &data.values[split.feature];
            let (lower, upper) = (values[split.rank as usize], values[split.rank as usize + 1]);
            let mut threshold = lower + (upper - lower) / 2.0;
            if !(threshold >= lower && threshold < upper) {
                threshold = lower;
            }
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0 });
            nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0 });
            nodes[id] = Node { feature: split.feature as u32, threshold, left: l as u32, right: r as u32 };
            stack.push((r, w, hi));
            stack.push((l, lo, w));
        }
        Tree { dim: self.data.dim(), n_labels: self.data.n_labels, nodes, leaves }
    }
}

impl Tree {
    pub fn fit(data: &TrainingSet, params: TreeParams, seed: u64) -> Self {
        Self::fit_samples(data, (0..data.len() as u32).collect(), params, seed)
    }

    /// Grows a tree on the given sample indices, which may repeat.
    pub fn fit_samples(data: &TrainingSet, samples: Vec<u32>, params: TreeParams, seed: u64) -> Self {
        let builder = Builder {
            data,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counts: vec![0; data.n_labels],
            left: vec![0; data.n_labels],
            keys: Vec::with_capacity(samples.len()),
            scratch: Vec::with_capacity(samples.len()),
        };
        builder.build(samples)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, d)) = stack.pop() {
            deepest = deepest.max(d);
            let node = self.nodes[id];
            if node.feature != LEAF {
                stack.push((node.left as usize, d + 1));
                stack.push((node.right as usize, d + 1));
            }
        }
        deepest
    }

    /// Per-label positive fraction of the leaf reached by `x`.
    pub fn leaf_values(&self, x: &[f64]) -> &[f32] {
        let mut node = self.nodes[0];
        while node.feature != LEAF {
            let next = if x[node.feature as usize] <= node.threshold { node.left } else { node.right };
            node = self.nodes[next as usize];
        }
        let i = node.left as usize * self.n_labels;
        &self.leaves[i..i + self.n_labels]
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.leaf_values(x).iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Tree `t` is grown from seed `seed + t`.
    pub fn fit(data: &TrainingSet, params: ForestParams, seed: u64) -> Result<Self, MlError> {
        if params.n_trees == 0 {
            return Err(MlError::Invalid("a forest needs at least one tree".into()));
        }
        let n = data.len();
        let trees = (0..params.n_trees as u64)
            .map(|t| {
                let tree_seed = seed.wrapping_add(t);
                let samples = if params.bootstrap {
                    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
                    rng.set_stream(1);
                    (0..n).map(|_| rng.gen_range(0..n as u32)).collect()
                } else {
                    (0..n as u32).collect()
                };
                Tree::fit_samples(data, samples, params.tree, tree_seed)
            })
            .collect();
        Ok(Forest { params, trees })
    }

    /// Fraction of trees whose leaf holds a strict majority for each label.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let n_labels = self.trees[0].n_labels;
        let mut votes = vec![0usize; n_labels];
        for tree in &self.trees {
            for (v, &p) in votes.iter_mut().zip(tree.leaf_values(x)) {
                *v += (p > 0.5) as usize;
            }
        }
        votes.iter().map(|&v| v as f64 / self.trees.len() as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_and_distinct_values() {
        let rows = vec![vec![3.0], vec![1.0], vec![3.0], vec![2.0]];
        let labels = vec![vec![true]; 4];
        let data = TrainingSet::new(&rows, &labels).unwrap();
        assert_eq!(data.ranks[0], vec![2, 0, 2, 1]);
        assert_eq!(data.values[0], vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn split_score_matches_direct_gini() {
        // Two labels; split x <= 1.5 separates {a: 11, b: 10} from {c: 01, d: 01}.
        let rows = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let labels = vec![vec![true, true], vec![true, false], vec![false, true], vec![false, true]];
        let data = TrainingSet::new(&rows, &labels).unwrap();
        let mut b = Builder {
            data: &data,
            params: TreeParams::default(),
            rng: ChaCha8Rng::seed_from_u64(0),
            counts: vec![0; 2],
            left: vec![0; 2],
            keys: Vec::new(),
            scratch: Vec::new(),
        };
        let samples = [0, 1, 2, 3];
        let (c1, c2) = b.node_counts(&samples);
        let s = b.best_split(&samples, c1, c2).unwrap();
        // left: n=2, counts (2,1): sum c - sum c^2/n = 3 - 5/2; right: (0,2): 2 - 4/2
        assert_eq!(s.score, 0.5);
        let gini = |n: f64, c: &[f64]| c.iter().map(|&k| 2.0 * (k / n) * (1.0 - k / n)).sum::<f64>() * n;
        assert_eq!(2.0 * s.score, gini(2.0, &[2.0, 1.0]) + gini(2.0, &[0.0, 2.0]));
        assert_eq!((s.feature, s.rank), (0, 0));
    }

    #[test]
    fn threshold_is_midpoint_and_partition_is_exact() {
        let rows = vec![vec![0.0], vec![10.0]];
        let labels = vec![vec![false], vec![true]];
        let data = TrainingSet::new(&rows, &labels).unwrap();
        let t = Tree::fit(&data, TreeParams::default(), 0);
        assert_eq!(t.nodes[0].threshold, 5.0);
        assert_eq!(t.predict_proba(&[5.0]), vec![0.0]);
        assert_eq!(t.predict_proba(&[5.000001]), vec![1.0]);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn min_samples_leaf_limits_growth() {
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let labels: Vec<Vec<bool>> = (0..8).map(|i| vec![i % 2 == 0]).collect();
        let data = TrainingSet::new(&rows, &labels).unwrap();
        let t = Tree::fit(&data, TreeParams { min_samples_leaf: 4, max_features: MaxFeatures::All }, 0);
        assert_eq!(t.n_nodes(), 3);
        let full = Tree::fit(&data, TreeParams::default(), 0);
        assert!((0..8).all(|i| full.predict_proba(&[i as f64]) == vec![(i % 2 == 0) as u8 as f64]));
    }

    #[test]
    fn sqrt_features() {
        assert_eq!(MaxFeatures::Sqrt.count(60), 7);
        assert_eq!(MaxFeatures::Sqrt.count(1), 1);
        assert_eq!(MaxFeatures::All.count(60), 60);
    }

    #[test]
    fn zero_trees_rejected() {
        let rows = vec![vec![0.0]];
        let labels = vec![vec![true]];
        let data = TrainingSet::new(&rows, &labels).unwrap();
        assert!(Forest::fit(&data, ForestParams { n_trees: 0, ..ForestParams::default() }, 0).is_err());
        assert!(TrainingSet::new(&[vec![f64::NAN]], &labels).is_err());
    }
}
