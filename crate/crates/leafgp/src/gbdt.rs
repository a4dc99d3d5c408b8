//! Gradient-boosted regression trees, written from scratch so the rest of
//! the pipeline can see their structure.
//!
//! Boosting is plain squared-error: each round fits a depth-capped tree to
//! the current residuals and folds `learning_rate · mean residual` into the
//! leaf values (base score is zero — targets are standardized upstream).
//! Split search is exact: every midpoint of adjacent distinct feature values
//! is scored by variance reduction; categorical features are searched over
//! prefix partitions of categories ordered by mean residual. All ties break
//! toward the lowest feature index, then the lowest threshold / shortest
//! left subset, so training is deterministic.
//!
//! Beyond training and prediction, this module exposes what the kernel and
//! the acquisition solver consume: per-tree leaf assignment, per-feature
//! ordered split thresholds, and the axis-aligned box of any leaf.

use crate::error::{Error, Result};
use crate::space::{BoxDim, BoxRegion, Dataset, FeatureSpace, Interval, Point};

/// A split rule at an internal node. Continuous (and integer) splits are
/// left-inclusive: `x ≤ threshold` goes left. Categorical splits send
/// members of `left_categories` left; unseen categories go right.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub kind: SplitKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SplitKind {
    Continuous { threshold: f64 },
    Categorical { left_categories: Vec<usize> },
}

/// Tree node; nodes live in a flat arena, root at index 0.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Internal { split: Split, left: usize, right: usize },
    Leaf { leaf: u32, value: f64 },
}

/// One regression tree. Leaf ids are dense `0..n_leaves`, assigned in
/// construction (breadth-first) order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    n_leaves: u32,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> u32 {
        self.n_leaves
    }

    /// Route `x` to its leaf id.
    pub fn assign_leaf(&self, x: &Point) -> u32 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { leaf, .. } => return *leaf,
                Node::Internal { split, left, right } => {
                    at = if split_goes_left(split, x.get(split.feature)) { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_value(&self, leaf: u32) -> f64 {
        for n in &self.nodes {
            if let Node::Leaf { leaf: l, value } = n {
                if *l == leaf {
                    return *value;
                }
            }
        }
        panic!("leaf {leaf} not present in tree");
    }

    /// Axis-aligned region of a leaf: the domain box intersected with every
    /// split condition on the root-to-leaf path. Right branches of
    /// continuous splits produce left-open intervals.
    pub fn leaf_box(&self, leaf: u32, space: &FeatureSpace) -> BoxRegion {
        let mut path = Vec::new();
        let found = self.path_to_leaf(0, leaf, &mut path);
        assert!(found, "leaf {leaf} not present in tree");
        let mut dims: Vec<BoxDim> = BoxRegion::full_domain(space).dims().to_vec();
        for (node, went_left) in path {
            let Node::Internal { split, .. } = &self.nodes[node] else { unreachable!() };
            match (&split.kind, &mut dims[split.feature]) {
                (SplitKind::Continuous { threshold }, BoxDim::Interval(iv)) => {
                    if went_left {
                        iv.hi = iv.hi.min(*threshold);
                    } else if *threshold >= iv.lo {
                        *iv = Interval { lo: *threshold, hi: iv.hi, lo_open: true };
                    }
                }
                (SplitKind::Categorical { left_categories }, BoxDim::Cats(cats)) => {
                    cats.retain(|c| left_categories.contains(c) == went_left);
                }
                _ => unreachable!("split kind disagrees with feature kind"),
            }
        }
        BoxRegion::new(dims)
    }

    fn path_to_leaf(&self, node: usize, target: u32, path: &mut Vec<(usize, bool)>) -> bool {
        match &self.nodes[node] {
            Node::Leaf { leaf, .. } => *leaf == target,
            Node::Internal { left, right, .. } => {
                path.push((node, true));
                if self.path_to_leaf(*left, target, path) {
                    return true;
                }
                path.pop();
                path.push((node, false));
                if self.path_to_leaf(*right, target, path) {
                    return true;
                }
                path.pop();
                false
            }
        }
    }
}

fn split_goes_left(split: &Split, v: f64) -> bool {
    match &split.kind {
        SplitKind::Continuous { threshold } => v <= *threshold,
        SplitKind::Categorical { left_categories } => left_categories.contains(&(v as usize)),
    }
}

/// Trained ensemble. Prediction is the sum of leaf values (learning rate
/// already folded in; base score zero).
#[derive(Clone, Debug)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    space: FeatureSpace,
    /// Column offset of each tree's leaves in the flattened leaf indexing.
    leaf_offsets: Vec<usize>,
    total_leaves: usize,
}

impl TreeEnsemble {
    fn from_trees(trees: Vec<Tree>, space: FeatureSpace) -> Self {
        let mut leaf_offsets = Vec::with_capacity(trees.len());
        let mut total = 0usize;
        for t in &trees {
            leaf_offsets.push(total);
            total += t.n_leaves() as usize;
        }
        TreeEnsemble { trees, space, leaf_offsets, total_leaves: total }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn total_leaves(&self) -> usize {
        self.total_leaves
    }

    /// Flat column index of `(tree, leaf)` across all trees.
    pub fn leaf_column(&self, tree: usize, leaf: u32) -> usize {
        self.leaf_offsets[tree] + leaf as usize
    }

    pub fn predict(&self, x: &Point) -> f64 {
        self.trees.iter().map(|t| t.leaf_value(t.assign_leaf(x))).sum()
    }

    /// Active leaf per tree — the cell coordinates of `x` in the partition.
    pub fn assign_cell(&self, x: &Point) -> Vec<u32> {
        self.trees.iter().map(|t| t.assign_leaf(x)).collect()
    }

    /// Per-feature sorted, deduplicated split thresholds across all trees.
    pub fn split_index(&self) -> SplitIndex {
        let n = self.space.n();
        let mut dims: Vec<SplitIndexDim> = self
            .space
            .features()
            .iter()
            .map(|f| {
                if f.is_categorical() {
                    SplitIndexDim::Categories(f.n_categories())
                } else {
                    SplitIndexDim::Thresholds(Vec::new())
                }
            })
            .collect();
        for t in &self.trees {
            for node in t.nodes() {
                if let Node::Internal { split, .. } = node {
                    if let SplitKind::Continuous { threshold } = &split.kind {
                        if let SplitIndexDim::Thresholds(v) = &mut dims[split.feature] {
                            v.push(*threshold);
                        }
                    }
                }
            }
        }
        for d in dims.iter_mut().take(n) {
            if let SplitIndexDim::Thresholds(v) = d {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
        }
        SplitIndex { dims }
    }

    /// Line-oriented text form, one node per line; floats use the shortest
    /// round-trip decimal form, so parsing reproduces them bit-exactly.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (ti, t) in self.trees.iter().enumerate() {
            for (ni, node) in t.nodes().iter().enumerate() {
                match node {
                    Node::Leaf { leaf, value } => {
                        writeln!(out, "tree {ti} node {ni} leaf {leaf} value {value}").unwrap();
                    }
                    Node::Internal { split, left, right } => match &split.kind {
                        SplitKind::Continuous { threshold } => writeln!(
                            out,
                            "tree {ti} node {ni} split {} le {threshold} left {left} right {right}",
                            split.feature
                        )
                        .unwrap(),
                        SplitKind::Categorical { left_categories } => {
                            let cats = left_categories
                                .iter()
                                .map(|c| c.to_string())
                                .collect::<Vec<_>>()
                                .join(",");
                            writeln!(
                                out,
                                "tree {ti} node {ni} split {} in {cats} left {left} right {right}",
                                split.feature
                            )
                            .unwrap()
                        }
                    },
                }
            }
        }
        out
    }

    /// Parse the [`to_text`](Self::to_text) format.
    pub fn from_text(text: &str, space: FeatureSpace) -> Result<TreeEnsemble> {
        let bad = |line: &str, why: &str| Error::Parse(format!("bad ensemble line ({why}): {line}"));
        let mut trees: Vec<Vec<(usize, Node)>> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() < 6 || tok[0] != "tree" || tok[2] != "node" {
                return Err(bad(line, "expected 'tree I node J ...'"));
            }
            let ti: usize = tok[1].parse().map_err(|_| bad(line, "tree id"))?;
            let ni: usize = tok[3].parse().map_err(|_| bad(line, "node id"))?;
            let node = match tok[4] {
                "leaf" => {
                    if tok.len() != 8 || tok[6] != "value" {
                        return Err(bad(line, "leaf payload"));
                    }
                    let leaf: u32 = tok[5].parse().map_err(|_| bad(line, "leaf id"))?;
                    let value: f64 = tok[7].parse().map_err(|_| bad(line, "leaf value"))?;
                    Node::Leaf { leaf, value }
                }
                "split" => {
                    if tok.len() != 12 || tok[8] != "left" || tok[10] != "right" {
                        return Err(bad(line, "split payload"));
                    }
                    let feature: usize = tok[5].parse().map_err(|_| bad(line, "feature"))?;
                    let kind = match tok[6] {
                        "le" => SplitKind::Continuous {
                            threshold: tok[7].parse().map_err(|_| bad(line, "threshold"))?,
                        },
                        "in" => SplitKind::Categorical {
                            left_categories: tok[7]
                                .split(',')
                                .map(|c| c.parse().map_err(|_| bad(line, "category")))
                                .collect::<Result<Vec<usize>>>()?,
                        },
                        other => return Err(bad(line, &format!("split kind {other}"))),
                    };
                    let left: usize = tok[9].parse().map_err(|_| bad(line, "left child"))?;
                    let right: usize = tok[11].parse().map_err(|_| bad(line, "right child"))?;
                    Node::Internal { split: Split { feature, kind }, left, right }
                }
                other => return Err(bad(line, &format!("node kind {other}"))),
            };
            if ti >= trees.len() {
                trees.resize_with(ti + 1, Vec::new);
            }
            trees[ti].push((ni, node));
        }
        let mut built = Vec::with_capacity(trees.len());
        for (ti, mut nodes) in trees.into_iter().enumerate() {
            if nodes.is_empty() {
                return Err(Error::Parse(format!("tree {ti} has no nodes")));
            }
            nodes.sort_by_key(|(ni, _)| *ni);
            for (expect, (ni, _)) in nodes.iter().enumerate() {
                if *ni != expect {
                    return Err(Error::Parse(format!("tree {ti} node ids not dense at {ni}")));
                }
            }
            let arena: Vec<Node> = nodes.into_iter().map(|(_, n)| n).collect();
            let n_leaves =
                arena.iter().filter(|n| matches!(n, Node::Leaf { .. })).count() as u32;
            built.push(Tree { nodes: arena, n_leaves });
        }
        Ok(TreeEnsemble::from_trees(built, space))
    }
}

/// Ordered split thresholds per non-categorical feature; category counts
/// for categorical features.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitIndexDim {
    Thresholds(Vec<f64>),
    Categories(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitIndex {
    dims: Vec<SplitIndexDim>,
}

impl SplitIndex {
    pub fn dims(&self) -> &[SplitIndexDim] {
        &self.dims
    }

    /// Thresholds of feature `i` (empty when never split or categorical).
    pub fn thresholds(&self, i: usize) -> &[f64] {
        match &self.dims[i] {
            SplitIndexDim::Thresholds(v) => v,
            SplitIndexDim::Categories(_) => &[],
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbdtConfig {
    pub max_depth: usize,
    pub num_boost_rounds: usize,
    pub learning_rate: f64,
    pub min_data_in_leaf: usize,
    pub min_data_per_group: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            max_depth: 3,
            num_boost_rounds: 50,
            learning_rate: 0.1,
            min_data_in_leaf: 1,
            min_data_per_group: 1,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.num_boost_rounds < 1 {
            return Err(Error::InvalidConfig("num_boost_rounds must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.min_data_in_leaf < 1 {
            return Err(Error::InvalidConfig("min_data_in_leaf must be >= 1".into()));
        }
        if self.min_data_per_group < 1 {
            return Err(Error::InvalidConfig("min_data_per_group must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train an ensemble on (already standardized) targets. Training is exact
/// and deterministic: no sampling, no histogram binning.
pub fn train(dataset: &Dataset, space: &FeatureSpace, cfg: &GbdtConfig) -> Result<TreeEnsemble> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.len() < 2 * cfg.min_data_in_leaf {
        return Err(Error::InvalidConfig(format!(
            "need at least {} rows for min_data_in_leaf {}, got {}",
            2 * cfg.min_data_in_leaf,
            cfg.min_data_in_leaf,
            dataset.len()
        )));
    }
    for x in &dataset.x {
        space.check(x)?;
    }

    let m = dataset.len();
    let mut preds = vec![0.0f64; m];
    let mut residuals = vec![0.0f64; m];
    let mut trees = Vec::with_capacity(cfg.num_boost_rounds);
    for _ in 0..cfg.num_boost_rounds {
        for i in 0..m {
            residuals[i] = dataset.y[i] - preds[i];
        }
        let tree = grow_tree(dataset, space, cfg, &residuals);
        for i in 0..m {
            preds[i] += tree.leaf_value(tree.assign_leaf(&dataset.x[i]));
        }
        trees.push(tree);
    }
    Ok(TreeEnsemble::from_trees(trees, space.clone()))
}

/// Candidate split with its routing of the node's rows.
struct Candidate {
    split: Split,
    left_rows: Vec<usize>,
    right_rows: Vec<usize>,
}

fn grow_tree(dataset: &Dataset, space: &FeatureSpace, cfg: &GbdtConfig, residuals: &[f64]) -> Tree {
    struct Pending {
        slot: usize,
        rows: Vec<usize>,
        depth: usize,
    }
    let mut nodes: Vec<Node> = vec![Node::Leaf { leaf: 0, value: 0.0 }];
    let mut n_leaves = 0u32;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(Pending { slot: 0, rows: (0..dataset.len()).collect(), depth: 0 });
    while let Some(p) = queue.pop_front() {
        let candidate = if p.depth < cfg.max_depth {
            best_split(dataset, space, cfg, residuals, &p.rows)
        } else {
            None
        };
        match candidate {
            Some(c) => {
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { leaf: 0, value: 0.0 });
                nodes.push(Node::Leaf { leaf: 0, value: 0.0 });
                nodes[p.slot] = Node::Internal { split: c.split, left, right };
                queue.push_back(Pending { slot: left, rows: c.left_rows, depth: p.depth + 1 });
                queue.push_back(Pending { slot: right, rows: c.right_rows, depth: p.depth + 1 });
            }
            None => {
                let mean =
                    p.rows.iter().map(|&i| residuals[i]).sum::<f64>() / p.rows.len() as f64;
                nodes[p.slot] = Node::Leaf { leaf: n_leaves, value: cfg.learning_rate * mean };
                n_leaves += 1;
            }
        }
    }
    Tree { nodes, n_leaves }
}

/// Exact greedy split search over one node's rows. Returns the candidate
/// with the strictly largest variance-reduction gain; scan order (features
/// ascending, thresholds ascending, prefixes shortest-first) plus
/// strict-improvement acceptance implements the tie-breaking rules.
fn best_split(
    dataset: &Dataset,
    space: &FeatureSpace,
    cfg: &GbdtConfig,
    residuals: &[f64],
    rows: &[usize],
) -> Option<Candidate> {
    let n = rows.len() as f64;
    let total: f64 = rows.iter().map(|&i| residuals[i]).sum();
    let parent_score = total * total / n;
    let mut best: Option<Candidate> = None;
    let mut best_gain = 0.0f64;

    for f in space.features() {
        if f.is_categorical() {
            // Per-category stats among this node's rows.
            let k = f.n_categories();
            let mut count = vec![0usize; k];
            let mut sum = vec![0.0f64; k];
            for &i in rows {
                let c = dataset.x[i].get(f.index) as usize;
                count[c] += 1;
                sum[c] += residuals[i];
            }
            // Categories with enough support, ordered by mean residual
            // (ties by index); the rest always route right.
            let mut movable: Vec<usize> = (0..k)
                .filter(|&c| count[c] >= cfg.min_data_per_group)
                .collect();
            movable.sort_by(|&a, &b| {
                let ma = sum[a] / count[a] as f64;
                let mb = sum[b] / count[b] as f64;
                ma.total_cmp(&mb).then(a.cmp(&b))
            });
            let mut left_count = 0usize;
            let mut left_sum = 0.0f64;
            for p in 0..movable.len().saturating_sub(1) {
                left_count += count[movable[p]];
                left_sum += sum[movable[p]];
                let right_count = rows.len() - left_count;
                if left_count < cfg.min_data_in_leaf || right_count < cfg.min_data_in_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / left_count as f64
                    + right_sum * right_sum / right_count as f64
                    - parent_score;
                if gain > best_gain {
                    let mut left_categories: Vec<usize> = movable[..=p].to_vec();
                    left_categories.sort_unstable();
                    let split =
                        Split { feature: f.index, kind: SplitKind::Categorical { left_categories } };
                    let (lr, rr) = route(dataset, rows, &split);
                    best_gain = gain;
                    best = Some(Candidate { split, left_rows: lr, right_rows: rr });
                }
            }
        } else {
            // Sort this node's rows by feature value (then row index for a
            // platform-independent order) and scan distinct-value gaps.
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| {
                dataset.x[a]
                    .get(f.index)
                    .total_cmp(&dataset.x[b].get(f.index))
                    .then(a.cmp(&b))
            });
            let mut prefix = 0.0f64;
            for k in 1..order.len() {
                prefix += residuals[order[k - 1]];
                let lo = dataset.x[order[k - 1]].get(f.index);
                let hi = dataset.x[order[k]].get(f.index);
                if lo == hi {
                    continue;
                }
                let threshold = 0.5 * (lo + hi);
                if !(threshold > lo && threshold < hi) {
                    continue; // adjacent floats; no representable midpoint
                }
                if k < cfg.min_data_in_leaf || order.len() - k < cfg.min_data_in_leaf {
                    continue;
                }
                let right_sum = total - prefix;
                let gain = prefix * prefix / k as f64
                    + right_sum * right_sum / (order.len() - k) as f64
                    - parent_score;
                if gain > best_gain {
                    let split = Split {
                        feature: f.index,
                        kind: SplitKind::Continuous { threshold },
                    };
                    best_gain = gain;
                    best = Some(Candidate {
                        split,
                        left_rows: order[..k].to_vec(),
                        right_rows: order[k..].to_vec(),
                    });
                }
            }
        }
    }
    best
}

fn route(dataset: &Dataset, rows: &[usize], split: &Split) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in rows {
        if split_goes_left(split, dataset.x[i].get(split.feature)) {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}
