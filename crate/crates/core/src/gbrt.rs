//! Histogram gradient-boosted regression trees with least-squares loss.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gains at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbrtParams {
    pub n_bins: usize,
    pub max_iterations: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
    /// Share of samples held out for early stopping; 0 disables it.
    pub early_stopping_fraction: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GbrtParams {
    fn default() -> Self {
        Self {
            n_bins: 256,
            max_iterations: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            min_samples_leaf: 20,
            l2_regularization: 0.0,
            early_stopping_fraction: 0.1,
            patience: 10,
            seed: 0,
        }
    }
}

impl GbrtParams {
    pub fn validate(&self) -> Result<()> {
        if !(2..=256).contains(&self.n_bins) {
            return Err(Error::Config("n_bins must lie in [2, 256]".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must lie in (0, 1]".into()));
        }
        if self.max_leaves < 2 {
            return Err(Error::Config("max_leaves must be at least 2".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be positive".into()));
        }
        if !(self.l2_regularization >= 0.0) {
            return Err(Error::Config("l2_regularization must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.early_stopping_fraction) {
            return Err(Error::Config("early_stopping_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One tree node. Leaves have no children; internal nodes send a sample left
/// when its bin index is at most `threshold_bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: usize,
    pub threshold_bin: u32,
    pub left: Option<u32>,
    pub right: Option<u32>,
    pub leaf_value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self {
            feature: 0,
            threshold_bin: 0,
            left: None,
            right: None,
            leaf_value: value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, bins: &[u8]) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            match (node.left, node.right) {
                (Some(l), Some(r)) => {
                    i = if (bins[node.feature] as u32) <= node.threshold_bin { l } else { r } as usize;
                }
                _ => return node.leaf_value,
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbrtModel {
    pub n_features: usize,
    /// Per feature, strictly increasing cut points; bin `b` holds values in `(edge[b-1], edge[b]]`.
    pub bin_edges: Vec<Vec<f64>>,
    pub base_prediction: f64,
    pub trees: Vec<Tree>,
}

#[inline]
fn bin_of(edges: &[f64], v: f64) -> u8 {
    edges.partition_point(|&e| e < v) as u8
}

impl GbrtModel {
    /// A model with no trees predicting `value` everywhere.
    pub fn constant(n_features: usize, value: f64) -> Self {
        Self {
            n_features,
            bin_edges: vec![Vec::new(); n_features],
            base_prediction: value,
            trees: Vec::new(),
        }
    }

    pub fn bin(&self, x: &[f64]) -> Result<Vec<u8>> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(x.iter().zip(&self.bin_edges).map(|(&v, e)| bin_of(e, v)).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let bins = self.bin(x)?;
        Ok(self.base_prediction + self.trees.iter().map(|t| t.eval(&bins)).sum::<f64>())
    }

    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.len() != self.n_features {
            return Err(Error::Validation("bin_edges must have one entry per feature".into()));
        }
        if !self.base_prediction.is_finite() {
            return Err(Error::Validation("base_prediction must be finite".into()));
        }
        for edges in &self.bin_edges {
            if edges.len() > 255 || edges.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Validation("bin edges must be strictly increasing, at most 255".into()));
            }
        }
        for (ti, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::Validation(format!("tree {ti} is empty")));
            }
            for node in &tree.nodes {
                match (node.left, node.right) {
                    (Some(l), Some(r)) => {
                        if node.feature >= self.n_features
                            || l as usize >= tree.nodes.len()
                            || r as usize >= tree.nodes.len()
                        {
                            return Err(Error::Validation(format!("tree {ti} has a dangling node")));
                        }
                    }
                    (None, None) => {
                        if !node.leaf_value.is_finite() {
                            return Err(Error::Validation(format!("tree {ti} has a non-finite leaf")));
                        }
                    }
                    _ => return Err(Error::Validation(format!("tree {ti} has a half-split node"))),
                }
            }
        }
        Ok(())
    }
}

/// Quantile cut points for one feature; repeated quantiles collapse into one edge.
pub fn quantile_edges(values: &[f64], n_bins: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() <= n_bins {
        return sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) * 0.5).collect();
    }
    let mut all: Vec<f64> = values.to_vec();
    all.sort_by(f64::total_cmp);
    let n = all.len();
    let mut edges: Vec<f64> = (1..n_bins)
        .map(|k| {
            let pos = k as f64 * (n - 1) as f64 / n_bins as f64;
            let i = pos.floor() as usize;
            let t = pos - i as f64;
            all[i] + (all[(i + 1).min(n - 1)] - all[i]) * t
        })
        .collect();
    edges.dedup();
    // The largest value must not be an edge or the top bin would be empty.
    if edges.last() == Some(&all[n - 1]) {
        edges.pop();
    }
    edges
}

struct Binned {
    /// Column-major bin indices.
    cols: Vec<Vec<u8>>,
    n_bins: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: u32,
    gain: f64,
}

struct Candidate {
    node: usize,
    samples: Vec<u32>,
    grad_sum: f64,
    split: Option<Split>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        let g = |c: &Candidate| c.split.map_or(f64::NEG_INFINITY, |s| s.gain);
        // Earlier nodes win ties so growth order is deterministic.
        g(self).total_cmp(&g(other)).then(other.node.cmp(&self.node))
    }
}

fn best_split(data: &Binned, residual: &[f64], samples: &[u32], params: &GbrtParams) -> Option<Split> {
    let n = samples.len();
    let min_leaf = params.min_samples_leaf;
    if n < 2 * min_leaf {
        return None;
    }
    let lambda = params.l2_regularization;
    let g_total: f64 = samples.iter().map(|&i| residual[i as usize]).sum();
    let parent = g_total * g_total / (n as f64 + lambda);
    let mut best: Option<Split> = None;
    let mut grad = [0.0f64; 256];
    let mut count = [0usize; 256];
    for (f, col) in data.cols.iter().enumerate() {
        let nb = data.n_bins[f];
        if nb < 2 {
            continue;
        }
        grad[..nb].fill(0.0);
        count[..nb].fill(0);
        for &i in samples {
            let b = col[i as usize] as usize;
            grad[b] += residual[i as usize];
            count[b] += 1;
        }
        let (mut gl, mut nl) = (0.0, 0usize);
        for b in 0..nb - 1 {
            gl += grad[b];
            nl += count[b];
            let nr = n - nl;
            if nl < min_leaf {
                continue;
            }
            if nr < min_leaf {
                break;
            }
            let gr = g_total - gl;
            let gain = gl * gl / (nl as f64 + lambda) + gr * gr / (nr as f64 + lambda) - parent;
            if gain > MIN_GAIN && best.map_or(true, |s| gain > s.gain) {
                best = Some(Split {
                    feature: f,
                    threshold: b as u32,
                    gain,
                });
            }
        }
    }
    best
}

fn grow_tree(data: &Binned, residual: &[f64], samples: Vec<u32>, params: &GbrtParams) -> Option<Tree> {
    let lambda = params.l2_regularization;
    let leaf_value = |g: f64, n: usize| params.learning_rate * g / (n as f64 + lambda);
    let g_root: f64 = samples.iter().map(|&i| residual[i as usize]).sum();
    let root_split = best_split(data, residual, &samples, params)?;
    let mut nodes = vec![Node::leaf(leaf_value(g_root, samples.len()))];
    let mut heap = BinaryHeap::new();
    heap.push(Candidate {
        node: 0,
        samples,
        grad_sum: g_root,
        split: Some(root_split),
    });
    let mut leaves = 1;
    while leaves < params.max_leaves {
        let Some(cand) = heap.pop() else { break };
        let Some(split) = cand.split else { break };
        let col = &data.cols[split.feature];
        let (left, right): (Vec<u32>, Vec<u32>) = cand
            .samples
            .iter()
            .partition(|&&i| (col[i as usize] as u32) <= split.threshold);
        let gl: f64 = left.iter().map(|&i| residual[i as usize]).sum();
        let gr = cand.grad_sum - gl;
        let (li, ri) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::leaf(leaf_value(gl, left.len())));
        nodes.push(Node::leaf(leaf_value(gr, right.len())));
        let parent = &mut nodes[cand.node];
        parent.feature = split.feature;
        parent.threshold_bin = split.threshold;
        parent.left = Some(li as u32);
        parent.right = Some(ri as u32);
        parent.leaf_value = 0.0;
        leaves += 1;
        for (node, s, g) in [(li, left, gl), (ri, right, gr)] {
            let split = best_split(data, residual, &s, params);
            heap.push(Candidate {
                node,
                samples: s,
                grad_sum: g,
                split,
            });
        }
    }
    Some(Tree { nodes })
}

/// Per-iteration record of a fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitHistory {
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    /// Number of trees kept.
    pub best_iteration: usize,
}

fn check_inputs(x: &[Vec<f64>], y: &[f64], params: &GbrtParams) -> Result<usize> {
    params.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Training(format!(
            "need matching non-empty inputs, got {} rows and {} targets",
            x.len(),
            y.len()
        )));
    }
    let nf = x[0].len();
    if nf == 0 || x.iter().any(|r| r.len() != nf) {
        return Err(Error::Training("rows must share a non-zero feature count".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Training("inputs must be finite".into()));
    }
    if x.len() < 2 * params.min_samples_leaf {
        return Err(Error::Training(format!(
            "{} samples is fewer than twice min_samples_leaf ({})",
            x.len(),
            params.min_samples_leaf
        )));
    }
    Ok(nf)
}

pub fn fit(x: &[Vec<f64>], y: &[f64], params: &GbrtParams) -> Result<GbrtModel> {
    fit_with_history(x, y, params).map(|(m, _)| m)
}

/// Boosting with early stopping on a seeded hold-out split. The returned model
/// keeps the trees up to the iteration with the lowest validation loss.
pub fn fit_with_history(x: &[Vec<f64>], y: &[f64], params: &GbrtParams) -> Result<(GbrtModel, FitHistory)> {
    let nf = check_inputs(x, y, params)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    let n_val = if params.early_stopping_fraction > 0.0 {
        let v = (n as f64 * params.early_stopping_fraction).round() as usize;
        if n - v >= 2 * params.min_samples_leaf && v > 0 { v } else { 0 }
    } else {
        0
    };
    if n_val > 0 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let bin_edges: Vec<Vec<f64>> = (0..nf)
        .map(|f| {
            let vals: Vec<f64> = train_idx.iter().map(|&i| x[i][f]).collect();
            quantile_edges(&vals, params.n_bins)
        })
        .collect();
    let bin_all = |idx: &[usize]| Binned {
        cols: (0..nf)
            .map(|f| idx.iter().map(|&i| bin_of(&bin_edges[f], x[i][f])).collect())
            .collect(),
        n_bins: bin_edges.iter().map(|e| e.len() + 1).collect(),
    };
    let train = bin_all(&train_idx);
    let val = bin_all(&val_idx);
    let y_train: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
    let y_val: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();

    let base = y_train.iter().sum::<f64>() / y_train.len() as f64;
    let mut pred_train = vec![base; y_train.len()];
    let mut pred_val = vec![base; y_val.len()];
    let mse = |p: &[f64], t: &[f64]| {
        if t.is_empty() {
            0.0
        } else {
            p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64
        }
    };
    let row_bins = |data: &Binned, i: usize| -> Vec<u8> { data.cols.iter().map(|c| c[i]).collect() };

    let mut trees = Vec::new();
    let mut history = FitHistory::default();
    let mut best_val = mse(&pred_val, &y_val);
    let mut best_iter = 0;
    let all: Vec<u32> = (0..y_train.len() as u32).collect();
    for _ in 0..params.max_iterations {
        let residual: Vec<f64> = y_train.iter().zip(&pred_train).map(|(t, p)| t - p).collect();
        let Some(tree) = grow_tree(&train, &residual, all.clone(), params) else {
            break;
        };
        for (i, p) in pred_train.iter_mut().enumerate() {
            *p += tree.eval(&row_bins(&train, i));
        }
        for (i, p) in pred_val.iter_mut().enumerate() {
            *p += tree.eval(&row_bins(&val, i));
        }
        trees.push(tree);
        history.train_mse.push(mse(&pred_train, &y_train));
        if n_val > 0 {
            let v = mse(&pred_val, &y_val);
            history.validation_mse.push(v);
            if v < best_val {
                best_val = v;
                best_iter = trees.len();
            } else if trees.len() - best_iter >= params.patience {
                break;
            }
        } else {
            best_iter = trees.len();
        }
    }
    trees.truncate(best_iter);
    history.best_iteration = best_iter;
    let model = GbrtModel {
        n_features: nf,
        bin_edges,
        base_prediction: base,
        trees,
    };
    Ok((model, history))
}
