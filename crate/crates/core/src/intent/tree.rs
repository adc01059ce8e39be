//! Binary CART trees (Gini for classification, squared error for the
//! regression trees used by boosting) and the bagged random forest.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A fitted binary tree. Classification trees store the Go fraction of each
/// leaf; regression trees store whatever the caller assigned to the leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 6, min_leaf: 2 }
    }
}

/// Split quality of a candidate partition; larger is better.
trait Criterion {
    /// Running statistics of one side of a split.
    type Acc: Copy + Default;
    fn add(acc: &mut Self::Acc, target: f64);
    fn remove(acc: &mut Self::Acc, target: f64);
    /// Impurity times sample count (lower is better).
    fn cost(acc: &Self::Acc, n: usize) -> f64;
}

struct Gini;

impl Criterion for Gini {
    type Acc = f64; // positives

    fn add(acc: &mut f64, y: f64) {
        *acc += y;
    }
    fn remove(acc: &mut f64, y: f64) {
        *acc -= y;
    }
    fn cost(pos: &f64, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let p = pos / n as f64;
        n as f64 * 2.0 * p * (1.0 - p)
    }
}

struct SquaredError;

impl Criterion for SquaredError {
    type Acc = (f64, f64); // sum, sum of squares

    fn add(acc: &mut (f64, f64), y: f64) {
        acc.0 += y;
        acc.1 += y * y;
    }
    fn remove(acc: &mut (f64, f64), y: f64) {
        acc.0 -= y;
        acc.1 -= y * y;
    }
    fn cost(acc: &(f64, f64), n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        (acc.1 - acc.0 * acc.0 / n as f64).max(0.0)
    }
}

struct Builder<'a, C: Criterion> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
    _criterion: std::marker::PhantomData<C>,
}

impl<C: Criterion> Builder<'_, C> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let d = self.x.first().map_or(0, |r| r.len());
        let mut features: Vec<usize> = (0..d).collect();
        if self.max_features < d {
            if let Some(rng) = self.rng.as_mut() {
                features.shuffle(rng);
                features.truncate(self.max_features);
                features.sort_unstable();
            }
        }
        features
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64, f64)> {
        let n = idx.len();
        let mut total = C::Acc::default();
        for &i in idx {
            C::add(&mut total, self.y[i]);
        }
        let parent = C::cost(&total, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = idx.to_vec();
        for f in self.candidate_features() {
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = C::Acc::default();
            let mut right = total;
            for k in 0..n - 1 {
                let i = sorted[k];
                C::add(&mut left, self.y[i]);
                C::remove(&mut right, self.y[i]);
                let (lo, hi) = (self.x[i][f], self.x[sorted[k + 1]][f]);
                let n_left = k + 1;
                if lo == hi || n_left < self.params.min_leaf || n - n_left < self.params.min_leaf {
                    continue;
                }
                let gain = parent - C::cost(&left, n_left) - C::cost(&right, n - n_left);
                if gain > 1e-12 && best.map_or(true, |(_, _, g)| gain > g + 1e-12) {
                    best = Some((f, lo + 0.5 * (hi - lo), gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, leaf: &dyn Fn(&[usize]) -> f64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: leaf(&idx) });
        if depth >= self.params.max_depth || idx.len() < 2 * self.params.min_leaf.max(1) {
            return id;
        }
        let Some((feature, threshold, _)) = self.best_split(&idx) else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, leaf);
        let right = self.grow(r, depth + 1, leaf);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

fn build<C: Criterion>(
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    params: TreeParams,
    max_features: usize,
    rng: Option<ChaCha8Rng>,
    leaf: &dyn Fn(&[usize]) -> f64,
) -> Tree {
    let mut b = Builder::<C> { x, y, params, max_features, rng, nodes: Vec::new(), _criterion: std::marker::PhantomData };
    b.grow(idx, 0, leaf);
    Tree { nodes: b.nodes }
}

impl Tree {
    /// Classification tree on 0/1 targets; leaves hold the Go fraction.
    pub fn fit_classifier(x: &[Vec<f64>], y: &[f64], params: TreeParams) -> Tree {
        let idx: Vec<usize> = (0..x.len()).collect();
        let d = x.first().map_or(0, |r| r.len());
        build::<Gini>(x, y, idx, params, d, None, &|s| mean(y, s))
    }

    /// Regression tree on `targets` whose leaf values come from `leaf`.
    pub fn fit_regressor(x: &[Vec<f64>], targets: &[f64], params: TreeParams, leaf: &dyn Fn(&[usize]) -> f64) -> Tree {
        let idx: Vec<usize> = (0..x.len()).collect();
        let d = x.first().map_or(0, |r| r.len());
        build::<SquaredError>(x, targets, idx, params, d, None, leaf)
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    id = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

fn mean(y: &[f64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    /// Features considered per split; `None` means ⌊√d⌋ (at least 1).
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, tree: TreeParams::default(), bootstrap: true, max_features: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
}

impl Forest {
    pub fn fit(x: &[Vec<f64>], y: &[f64], params: ForestParams, seed: u64) -> Forest {
        let d = x.first().map_or(0, |r| r.len());
        let max_features = params.max_features.unwrap_or(((d as f64).sqrt().floor() as usize).max(1)).clamp(1, d.max(1));
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let idx: Vec<usize> = if params.bootstrap {
                    (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                build::<Gini>(x, y, idx, params.tree, max_features, Some(rng), &|s| mean(y, s))
            })
            .collect();
        Forest { trees }
    }

    /// Fraction of trees voting Go.
    pub fn vote_fraction(&self, row: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        let go = self.trees.iter().filter(|t| t.predict(row) > 0.5).count();
        go as f64 / self.trees.len() as f64
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }
}
