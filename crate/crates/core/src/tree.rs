//! Binary regression trees: least-squares base learners and the
//! least-absolute-deviation initializer (LADTree).
//!
//! Induction is greedy and top-down. At every node each feature is scanned
//! in sorted order; candidate thresholds are midpoints between consecutive
//! distinct values, and a split is admissible only if both children keep at
//! least `min_node` rows. Ties in impurity go to the lowest feature index and
//! then the lowest threshold, so fits are deterministic.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::importance::trim_validation;
use crate::stats::{median, median_in_place};

/// Relative window within which two candidate impurities count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Sum of squared deviations from child means; leaves hold means.
    LeastSquares,
    /// Sum of absolute deviations from child medians; leaves hold medians.
    LeastAbsolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn collect_features(&self, out: &mut Vec<usize>) {
        if let Node::Split {
            feature, left, right, ..
        } = self
        {
            out.push(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
    pub max_depth: usize,
    pub min_node: usize,
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Tree {
            root: Node::Leaf { value },
            max_depth: 0,
            min_node: 1,
        }
    }

    /// Routes `x` to a leaf: `x[feature] <= threshold` goes left.
    ///
    /// Rows must hold finite values for every feature the tree references.
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Checked prediction: missing or NaN features on the routing path are errors.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return Ok(*value),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = *x.get(*feature).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "row has {} features but tree splits on feature {feature}",
                            x.len()
                        ))
                    })?;
                    if v.is_nan() {
                        return Err(Error::NonFinite {
                            context: "feature value",
                            value: v,
                        });
                    }
                    node = if v <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Sorted, de-duplicated feature indices used by any split.
    pub fn features_used(&self) -> Vec<usize> {
        let mut f = Vec::new();
        self.root.collect_features(&mut f);
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn uses_feature(&self, j: usize) -> bool {
        fn walk(n: &Node, j: usize) -> bool {
            match n {
                Node::Leaf { .. } => false,
                Node::Split {
                    feature, left, right, ..
                } => *feature == j || walk(left, j) || walk(right, j),
            }
        }
        walk(&self.root, j)
    }
}

/// Per-feature row orders sorted by (value, row index), computed once per
/// design matrix and reused by every tree fitted on it.
#[derive(Debug, Clone)]
pub struct SortedFeatures {
    orders: Vec<Vec<u32>>,
}

impl SortedFeatures {
    pub fn new(x: &Matrix) -> Self {
        let orders = (0..x.n_cols())
            .map(|j| {
                let mut idx: Vec<u32> = (0..x.n_rows() as u32).collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, j)
                        .total_cmp(&x.get(b as usize, j))
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self { orders }
    }
}

/// Fits a tree from scratch.
pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    criterion: SplitCriterion,
    max_depth: usize,
    min_node: usize,
) -> Result<Tree> {
    let sorted = SortedFeatures::new(x);
    fit_tree_sorted(x, &sorted, y, criterion, max_depth, min_node)
}

/// Fits a tree reusing precomputed feature orders for `x`.
pub fn fit_tree_sorted(
    x: &Matrix,
    sorted: &SortedFeatures,
    y: &[f64],
    criterion: SplitCriterion,
    max_depth: usize,
    min_node: usize,
) -> Result<Tree> {
    if y.is_empty() || x.n_rows() == 0 {
        return Err(Error::Empty("training data"));
    }
    if x.n_rows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} responses",
            x.n_rows(),
            y.len()
        )));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "tree response",
            value: *bad,
        });
    }
    if let Some(bad) = x.as_slice().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "tree features",
            value: *bad,
        });
    }
    let min_node = min_node.max(1);
    let mut builder = Builder {
        x,
        sorted,
        y,
        criterion,
        max_depth,
        min_node,
        in_node: vec![false; y.len()],
        ordered: Vec::with_capacity(y.len()),
        centered: Vec::with_capacity(y.len()),
        prefix: Vec::with_capacity(y.len() + 1),
    };
    let rows: Vec<usize> = (0..y.len()).collect();
    let root = builder.build(rows, 0);
    Ok(Tree {
        root,
        max_depth,
        min_node,
    })
}

struct Builder<'a> {
    x: &'a Matrix,
    sorted: &'a SortedFeatures,
    y: &'a [f64],
    criterion: SplitCriterion,
    max_depth: usize,
    min_node: usize,
    in_node: Vec<bool>,
    ordered: Vec<usize>,
    centered: Vec<f64>,
    prefix: Vec<f64>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
}

impl Builder<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        match self.criterion {
            SplitCriterion::LeastSquares => {
                rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64
            }
            SplitCriterion::LeastAbsolute => {
                let mut v: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
                median_in_place(&mut v)
            }
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> Node {
        let value = self.leaf_value(&rows);
        let first = self.y[rows[0]];
        let constant = rows.iter().all(|&i| self.y[i] == first);
        if depth >= self.max_depth || rows.len() < 2 * self.min_node || constant {
            return Node::Leaf { value };
        }
        let Some(best) = self.best_split(&rows, value) else {
            return Node::Leaf { value };
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        drop(rows);
        let left = self.build(left, depth + 1);
        let right = self.build(right, depth + 1);
        Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Fills `self.ordered` with the node's rows sorted by feature `j`.
    fn order_rows(&mut self, rows: &[usize], j: usize) {
        self.ordered.clear();
        let n = self.y.len();
        if rows.len() * 16 < n {
            self.ordered.extend_from_slice(rows);
            let x = self.x;
            self.ordered
                .sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)).then(a.cmp(&b)));
        } else {
            let in_node = &self.in_node;
            self.ordered.extend(
                self.sorted.orders[j]
                    .iter()
                    .map(|&i| i as usize)
                    .filter(|&i| in_node[i]),
            );
        }
    }

    fn best_split(&mut self, rows: &[usize], node_value: f64) -> Option<Candidate> {
        for &i in rows {
            self.in_node[i] = true;
        }
        let best = match self.criterion {
            SplitCriterion::LeastSquares => self.best_ls_split(rows, node_value),
            SplitCriterion::LeastAbsolute => self.best_lad_split(rows, node_value),
        };
        for &i in rows {
            self.in_node[i] = false;
        }
        best
    }

    fn best_ls_split(&mut self, rows: &[usize], mean: f64) -> Option<Candidate> {
        let m = rows.len();
        // Centred responses: the between-child score then equals the SSE reduction.
        let parent_sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        if !(parent_sse > 0.0) {
            return None;
        }
        let total: f64 = rows.iter().map(|&i| self.y[i] - mean).sum();
        let base = total * total / m as f64;
        let mut best_score = f64::NEG_INFINITY;
        let mut best: Option<Candidate> = None;
        for j in 0..self.x.n_cols() {
            self.order_rows(rows, j);
            let mut left_sum = 0.0;
            for k in 1..m {
                let prev = self.ordered[k - 1];
                left_sum += self.y[prev] - mean;
                if k < self.min_node || m - k < self.min_node {
                    continue;
                }
                let a = self.x.get(prev, j);
                let b = self.x.get(self.ordered[k], j);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (m - k) as f64;
                if best.is_none() || score > best_score + TIE_TOLERANCE * best_score.abs() {
                    best_score = score;
                    best = Some(Candidate {
                        feature: j,
                        threshold: midpoint(a, b),
                    });
                }
            }
        }
        if best_score - base > TIE_TOLERANCE * parent_sse {
            best
        } else {
            None
        }
    }

    fn best_lad_split(&mut self, rows: &[usize], med: f64) -> Option<Candidate> {
        let m = rows.len();
        let parent_sad: f64 = rows.iter().map(|&i| (self.y[i] - med).abs()).sum();
        if !(parent_sad > 0.0) {
            return None;
        }
        let mut best_sad = f64::INFINITY;
        let mut best: Option<Candidate> = None;
        for j in 0..self.x.n_cols() {
            self.order_rows(rows, j);
            self.centered.clear();
            self.centered
                .extend(self.ordered.iter().map(|&i| self.y[i] - med));
            // prefix[k] = SAD of the first k ordered rows about their median
            self.prefix.clear();
            self.prefix.push(0.0);
            let mut run = RunningMedian::default();
            for &v in &self.centered {
                run.push(v);
                self.prefix.push(run.sad());
            }
            let mut suffix = RunningMedian::default();
            // walk k from m−1 down to 1; suffix holds rows k..m
            let mut best_here: Option<(f64, usize)> = None;
            for k in (1..m).rev() {
                suffix.push(self.centered[k]);
                if k < self.min_node || m - k < self.min_node {
                    continue;
                }
                let a = self.x.get(self.ordered[k - 1], j);
                let b = self.x.get(self.ordered[k], j);
                if a == b {
                    continue;
                }
                let sad = self.prefix[k] + suffix.sad();
                // descending scan: ties prefer the smaller threshold
                if best_here.map_or(true, |(s, _)| sad <= s + TIE_TOLERANCE * s) {
                    best_here = Some((sad, k));
                }
            }
            if let Some((sad, k)) = best_here {
                if best.is_none() || sad < best_sad - TIE_TOLERANCE * best_sad {
                    best_sad = sad;
                    let a = self.x.get(self.ordered[k - 1], j);
                    let b = self.x.get(self.ordered[k], j);
                    best = Some(Candidate {
                        feature: j,
                        threshold: midpoint(a, b),
                    });
                }
            }
        }
        if best_sad < parent_sad - TIE_TOLERANCE * parent_sad {
            best
        } else {
            None
        }
    }
}

/// Threshold between two consecutive distinct sorted values `a < b`.
#[inline]
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let t = (a + b) / 2.0;
    if t >= b || t < a {
        a
    } else {
        t
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Total(f64);

impl Eq for Total {}

impl PartialOrd for Total {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Total {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Streaming sum of absolute deviations about the median.
#[derive(Default)]
struct RunningMedian {
    lower: BinaryHeap<Total>,
    upper: BinaryHeap<Reverse<Total>>,
    sum_lower: f64,
    sum_upper: f64,
}

impl RunningMedian {
    fn push(&mut self, v: f64) {
        match self.lower.peek() {
            Some(top) if v > top.0 => {
                self.upper.push(Reverse(Total(v)));
                self.sum_upper += v;
            }
            _ => {
                self.lower.push(Total(v));
                self.sum_lower += v;
            }
        }
        if self.lower.len() > self.upper.len() + 1 {
            let Total(t) = self.lower.pop().expect("non-empty");
            self.sum_lower -= t;
            self.upper.push(Reverse(Total(t)));
            self.sum_upper += t;
        } else if self.upper.len() > self.lower.len() {
            let Reverse(Total(t)) = self.upper.pop().expect("non-empty");
            self.sum_upper -= t;
            self.lower.push(Total(t));
            self.sum_lower += t;
        }
    }

    /// Σ|v − median| over everything pushed so far.
    fn sad(&self) -> f64 {
        let d = self.sum_upper - self.sum_lower;
        if self.lower.len() > self.upper.len() {
            d + self.lower.peek().map_or(0.0, |t| t.0)
        } else {
            d
        }
    }
}

/// Outcome of choosing the robust initializer.
#[derive(Debug, Clone)]
pub struct InitSelection {
    pub tree: Tree,
    pub depth: usize,
    pub min_node: usize,
    /// Validation rows kept after trimming against the depth-0 fit.
    pub kept: Vec<usize>,
    pub trimmed_rmse: f64,
}

/// Picks the LADTree initializer with the smallest trimmed validation RMSE.
///
/// Validation rows whose residual against the depth-0 (median) fit deviates
/// from the residual median by more than 3 MAD are excluded before scoring.
/// Ties go to the smaller depth, then the smaller `min_node`.
pub fn select_init_tree(
    train: &Dataset,
    val: &Dataset,
    depths: &[usize],
    min_nodes: &[usize],
) -> Result<InitSelection> {
    if !depths.contains(&0) {
        return Err(Error::InvalidArgument(
            "initializer depth set must include 0".into(),
        ));
    }
    if val.n_rows() == 0 {
        return Err(Error::Empty("validation set"));
    }
    let sorted = SortedFeatures::new(&train.x);
    let base = fit_tree_sorted(&train.x, &sorted, &train.y, SplitCriterion::LeastAbsolute, 0, 1)?;
    let base_pred = base.predict_matrix(&val.x);
    let kept = trim_validation(&base_pred, &val.y)?;
    if kept.is_empty() {
        return Err(Error::EmptyTrimmedSet);
    }
    let score = |tree: &Tree| -> f64 {
        let sse: f64 = kept
            .iter()
            .map(|&i| (tree.predict_row(val.x.row(i)) - val.y[i]).powi(2))
            .sum();
        (sse / kept.len() as f64).sqrt()
    };

    let mut d_sorted: Vec<usize> = depths.iter().copied().filter(|&d| d > 0).collect();
    d_sorted.sort_unstable();
    d_sorted.dedup();
    let mut m_sorted: Vec<usize> = min_nodes.to_vec();
    m_sorted.sort_unstable();
    m_sorted.dedup();

    let mut best = InitSelection {
        trimmed_rmse: score(&base),
        tree: base,
        depth: 0,
        min_node: 1,
        kept: kept.clone(),
    };
    for &d in &d_sorted {
        for &m in &m_sorted {
            let tree = fit_tree_sorted(&train.x, &sorted, &train.y, SplitCriterion::LeastAbsolute, d, m)?;
            let s = score(&tree);
            if s < best.trimmed_rmse {
                best = InitSelection {
                    tree,
                    depth: d,
                    min_node: m,
                    kept: kept.clone(),
                    trimmed_rmse: s,
                };
            }
        }
    }
    Ok(best)
}

/// Median of `y`, the depth-0 LADTree.
pub fn median_tree(y: &[f64]) -> Tree {
    Tree::constant(median(y))
}
