//! Regression trees grown by exhaustive variance-reduction splits.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    LevelWise,
    LeafWise,
}

/// Settings shared by the plain tree, forest members and boosting stages.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct GrowSpec {
    pub max_depth: Option<usize>,
    pub max_leaves: Option<usize>,
    pub min_samples_split: usize,
    pub reg_lambda: f64,
    pub reg_alpha: f64,
    pub feature_fraction: f64,
    pub growth: Growth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted reduction of the node's score.
    pub gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Node {
    pub split: Option<(usize, f64)>,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

/// Flat binary tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NodeRecord", try_from = "NodeRecord")]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

/// Nested node form used for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<Box<NodeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<Box<NodeRecord>>,
    pub leaf_value: f64,
}

impl From<Tree> for NodeRecord {
    fn from(t: Tree) -> Self {
        fn build(t: &Tree, i: usize) -> NodeRecord {
            let n = &t.nodes[i];
            match n.split {
                Some((f, thr)) => NodeRecord {
                    feature: Some(f),
                    threshold: Some(thr),
                    left: Some(Box::new(build(t, n.left))),
                    right: Some(Box::new(build(t, n.right))),
                    leaf_value: n.value,
                },
                None => NodeRecord {
                    feature: None,
                    threshold: None,
                    left: None,
                    right: None,
                    leaf_value: n.value,
                },
            }
        }
        build(&t, 0)
    }
}

impl TryFrom<NodeRecord> for Tree {
    type Error = Error;
    fn try_from(root: NodeRecord) -> Result<Self> {
        fn push(nodes: &mut Vec<Node>, r: NodeRecord) -> Result<usize> {
            let id = nodes.len();
            nodes.push(Node {
                split: None,
                left: 0,
                right: 0,
                value: r.leaf_value,
            });
            match (r.feature, r.threshold, r.left, r.right) {
                (None, None, None, None) => {}
                (Some(f), Some(thr), Some(l), Some(rt)) => {
                    let left = push(nodes, *l)?;
                    let right = push(nodes, *rt)?;
                    nodes[id] = Node {
                        split: Some((f, thr)),
                        left,
                        right,
                        value: r.leaf_value,
                    };
                }
                _ => return Err(Error::Parse("tree node must be a full split or a leaf".into())),
            }
            Ok(id)
        }
        let mut nodes = Vec::new();
        push(&mut nodes, root)?;
        Ok(Tree { nodes })
    }
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.split {
                Some((f, thr)) => i = if row[f] <= thr { n.left } else { n.right },
                None => return n.value,
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, i: usize) -> usize {
            match t.nodes[i].split {
                Some(_) => 1 + d(t, t.nodes[i].left).max(d(t, t.nodes[i].right)),
                None => 0,
            }
        }
        d(self, 0)
    }

    /// Root split as (feature, threshold), if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        self.nodes[0].split
    }

    /// Renumbers nodes in depth-first preorder, the layout produced when
    /// reading the nested form back.
    fn preorder(self) -> Tree {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(0usize, None::<(usize, bool)>)];
        while let Some((i, parent)) = stack.pop() {
            let id = out.len();
            let n = self.nodes[i];
            out.push(Node { left: 0, right: 0, ..n });
            if let Some((p, is_left)) = parent {
                if is_left {
                    out[p].left = id;
                } else {
                    out[p].right = id;
                }
            }
            if n.split.is_some() {
                stack.push((n.right, Some((id, false))));
                stack.push((n.left, Some((id, true))));
            }
        }
        Tree { nodes: out }
    }

    pub(crate) fn map_values(&mut self, f: impl Fn(f64) -> f64) {
        for n in &mut self.nodes {
            n.value = f(n.value);
        }
    }
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

fn score(g: f64, n: usize, lambda: f64, alpha: f64) -> f64 {
    let s = soft_threshold(g, alpha);
    s * s / (n as f64 + lambda)
}

fn leaf_value(t: &[f64], rows: &[usize], lambda: f64, alpha: f64) -> f64 {
    let g: f64 = rows.iter().map(|&r| t[r]).sum();
    soft_threshold(g, alpha) / (rows.len() as f64 + lambda)
}

/// Exhaustive scan over midpoints between consecutive distinct values.
/// Features are visited in the given order and thresholds in ascending
/// order; a candidate only replaces the incumbent when it is better by more
/// than a rounding tolerance, so ties resolve to the earliest feature and
/// lowest threshold.
fn find_split(
    x: &[Vec<f64>],
    t: &[f64],
    rows: &[usize],
    features: &[usize],
    min_samples_split: usize,
    lambda: f64,
    alpha: f64,
) -> Option<Split> {
    let n = rows.len();
    if n < min_samples_split.max(2) {
        return None;
    }
    let g: f64 = rows.iter().map(|&r| t[r]).sum();
    let sum_sq: f64 = rows.iter().map(|&r| t[r] * t[r]).sum();
    let tol = 1e-12 * sum_sq;
    let parent = score(g, n, lambda, alpha);
    let mut best: Option<Split> = None;
    let mut sorted = rows.to_vec();
    for &f in features {
        sorted.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut gl = 0.0;
        for k in 0..n - 1 {
            gl += t[sorted[k]];
            let (v, w) = (x[sorted[k]][f], x[sorted[k + 1]][f]);
            if v >= w {
                continue;
            }
            let gain = score(gl, k + 1, lambda, alpha) + score(g - gl, n - k - 1, lambda, alpha) - parent;
            if gain <= tol || best.is_some_and(|b| gain <= b.gain + tol) {
                continue;
            }
            let mid = v + (w - v) / 2.0;
            let threshold = if mid < w { mid } else { v };
            best = Some(Split {
                feature: f,
                threshold,
                gain,
            });
        }
    }
    best
}

/// Best single split of `rows` by weighted variance reduction.
///
/// Returns the split with `gain` expressed as the reduction in population
/// variance of `y`, or `None` when no split reduces it.
pub fn tree_best_split(
    x: &[Vec<f64>],
    y: &[f64],
    rows: &[usize],
    features: &[usize],
    min_samples_split: usize,
) -> Option<Split> {
    if rows.is_empty() {
        return None;
    }
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64;
    let t: Vec<f64> = y.iter().map(|v| v - mean).collect();
    find_split(x, &t, rows, features, min_samples_split, 0.0, 0.0).map(|s| Split {
        gain: s.gain / rows.len() as f64,
        ..s
    })
}

fn candidate_features(d: usize, fraction: f64, rng: &mut Option<&mut StreamRng>) -> Vec<usize> {
    let k = ((fraction * d as f64).round() as usize).clamp(1, d);
    match rng {
        Some(r) if k < d => {
            let mut f = sample(r, d, k).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..d).collect(),
    }
}

fn partition(x: &[Vec<f64>], rows: &[usize], s: &Split) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&r| x[r][s.feature] <= s.threshold)
}

/// Grows a tree on targets `t` (already centered or residualized) over
/// `rows`. Leaf values are `soft(G, alpha) / (n + lambda)`.
pub(crate) fn grow(
    x: &[Vec<f64>],
    t: &[f64],
    rows: Vec<usize>,
    spec: &GrowSpec,
    mut rng: Option<&mut StreamRng>,
) -> Tree {
    let d = x.first().map_or(0, |r| r.len());
    let (lambda, alpha) = (spec.reg_lambda, spec.reg_alpha);
    let mut nodes = vec![Node {
        split: None,
        left: 0,
        right: 0,
        value: leaf_value(t, &rows, lambda, alpha),
    }];
    let split_node = |nodes: &mut Vec<Node>, id: usize, s: &Split, l: &[usize], r: &[usize]| {
        let left = nodes.len();
        nodes.push(Node {
            split: None,
            left: 0,
            right: 0,
            value: leaf_value(t, l, lambda, alpha),
        });
        nodes.push(Node {
            split: None,
            left: 0,
            right: 0,
            value: leaf_value(t, r, lambda, alpha),
        });
        nodes[id].split = Some((s.feature, s.threshold));
        nodes[id].left = left;
        nodes[id].right = left + 1;
    };
    if d == 0 {
        return Tree { nodes };
    }
    let depth_ok = |depth: usize| spec.max_depth.is_none_or(|m| depth < m);

    match spec.growth {
        Growth::LevelWise => {
            let mut frontier = vec![(0usize, rows)];
            let mut depth = 0;
            while !frontier.is_empty() && depth_ok(depth) {
                let mut next = Vec::new();
                for (id, rows) in frontier {
                    let feats = candidate_features(d, spec.feature_fraction, &mut rng);
                    if let Some(s) = find_split(x, t, &rows, &feats, spec.min_samples_split, lambda, alpha) {
                        let (l, r) = partition(x, &rows, &s);
                        split_node(&mut nodes, id, &s, &l, &r);
                        let left = nodes[id].left;
                        next.push((left, l));
                        next.push((left + 1, r));
                    }
                }
                frontier = next;
                depth += 1;
            }
        }
        Growth::LeafWise => {
            let max_leaves = spec.max_leaves.unwrap_or(usize::MAX);
            let mut pending: Vec<(usize, Vec<usize>, usize, Split)> = Vec::new();
            let evaluate =
                |rows: Vec<usize>, id: usize, depth: usize, rng: &mut Option<&mut StreamRng>, pending: &mut Vec<_>| {
                    if !depth_ok(depth) {
                        return;
                    }
                    let feats = candidate_features(d, spec.feature_fraction, rng);
                    if let Some(s) = find_split(x, t, &rows, &feats, spec.min_samples_split, lambda, alpha) {
                        pending.push((id, rows, depth, s));
                    }
                };
            evaluate(rows, 0, 0, &mut rng, &mut pending);
            let mut leaves = 1;
            while leaves < max_leaves && !pending.is_empty() {
                let mut best = 0;
                for (i, p) in pending.iter().enumerate() {
                    let b = &pending[best];
                    if p.3.gain > b.3.gain || (p.3.gain == b.3.gain && p.0 < b.0) {
                        best = i;
                    }
                }
                let (id, rows, depth, s) = pending.swap_remove(best);
                let (l, r) = partition(x, &rows, &s);
                split_node(&mut nodes, id, &s, &l, &r);
                leaves += 1;
                let left = nodes[id].left;
                evaluate(l, left, depth + 1, &mut rng, &mut pending);
                evaluate(r, left + 1, depth + 1, &mut rng, &mut pending);
            }
        }
    }
    Tree { nodes }.preorder()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_split: 2,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::config("max_depth must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split must be >= 2"));
        }
        Ok(())
    }

    pub(crate) fn spec(&self, feature_fraction: f64) -> GrowSpec {
        GrowSpec {
            max_depth: Some(self.max_depth),
            max_leaves: None,
            min_samples_split: self.min_samples_split,
            reg_lambda: 0.0,
            reg_alpha: 0.0,
            feature_fraction,
            growth: Growth::LevelWise,
        }
    }
}

pub(crate) fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Fits a tree on `rows` whose leaves hold `c + mean(y - c)`, with `c` the
/// mean target over `rows`.
pub(crate) fn fit_centered(
    x: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    spec: &GrowSpec,
    rng: Option<&mut StreamRng>,
) -> Tree {
    let c = mean(rows.iter().map(|&r| y[r]));
    let t: Vec<f64> = y.iter().map(|v| v - c).collect();
    let mut tree = grow(x, &t, rows, spec, rng);
    tree.map_values(|v| c + v);
    tree
}

pub fn fit_tree(params: &TreeParams, x: &[Vec<f64>], y: &[f64]) -> Result<Tree> {
    params.validate()?;
    if y.is_empty() {
        return Err(Error::EmptyDataset("cannot fit a tree on zero rows".into()));
    }
    Ok(fit_centered(x, y, (0..y.len()).collect(), &params.spec(1.0), None))
}
