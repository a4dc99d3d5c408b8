//! ε-global maximization of the acquisition over the tree partition.
//!
//! The search space is the lattice of boxes spanned by the ensemble's
//! split thresholds: per non-categorical feature the thresholds cut the
//! domain into segments, and a node of the branch-and-bound tree is a
//! contiguous segment range per feature (a category subset for categorical
//! features). Descending every tree over a node box yields the reachable
//! leaves per tree; from those we compute
//!
//! * a mean bound — μ is separable across trees (μ(z) = σ0²|T|⁻¹ Σ_t
//!   w_t(z_t) with w_t(l) the sum of α over training rows active in leaf
//!   l), so maximizing each tree's contribution over its reachable leaves
//!   bounds μ from above;
//! * a deviation bound — the per-row kernel entries k_i range over an
//!   interval determined by the reachable leaves, and σ² = σ0² − kᵀQ⁻¹k is
//!   concave in k, so projected-gradient ascent over that k-box plus a
//!   first-order certificate upper-bounds σ.
//!
//! Nodes are explored best-first; infeasible boxes are pruned by interval
//! arithmetic on the polynomial constraints, and candidate cells are
//! certified by attempting a feasibility projection. An exhaustive cell
//! enumerator provides an independent optimum for small instances.

use crate::acq::{AcquisitionProblem, Cell, CAP_TOLERANCE};
use crate::error::{Error, Result};
use crate::gbdt::{Node as TreeNode, SplitKind, Tree, TreeEnsemble};
use crate::propose;
use crate::space::{BoxDim, BoxRegion, ConstraintSet, Interval};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::time::Instant;

/// Slack added to interval constraint screening, matching the feasibility
/// tolerance points are later held to.
const SCREEN_TOLERANCE: f64 = 1e-6;
/// Relative slack added to node bounds so float rounding in the bound
/// arithmetic can never prune the true optimum.
const BOUND_SLACK: f64 = 1e-12;
/// Additive slack on the deviation bound.
const SIGMA_SLACK: f64 = 1e-8;
/// A random diversification cell is tried once per this many nodes.
const RANDOM_CELL_PERIOD: u64 = 100;

/// Termination state of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapLimit => "gap_limit",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
        })
    }
}

/// Search limits. `workers` is validated for forward compatibility; the
/// search itself runs sequentially, which is also the only mode with a
/// determinism guarantee.
#[derive(Clone, Copy, Debug, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub time_limit_s: f64,
    pub rel_gap: f64,
    pub max_nodes: u64,
    pub workers: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { time_limit_s: 100.0, rel_gap: 1e-4, max_nodes: u64::MAX, workers: 1 }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_limit_s > 0.0) {
            return Err(Error::InvalidConfig("time_limit_s must be positive".into()));
        }
        if !(self.rel_gap >= 0.0) {
            return Err(Error::InvalidConfig("rel_gap must be nonnegative".into()));
        }
        if self.max_nodes == 0 {
            return Err(Error::InvalidConfig("max_nodes must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be positive".into()));
        }
        Ok(())
    }
}

/// Best cell found: its active leaves, the exact box they induce, the
/// acquisition value (standardized units), and the optimality gap
/// (best_bound − objective) / max(1, |objective|).
#[derive(Clone, Debug)]
pub struct BoxSolution {
    pub status: SolveStatus,
    pub cell: Option<Cell>,
    pub objective: f64,
    pub gap: f64,
    pub nodes_explored: u64,
}

impl BoxSolution {
    fn infeasible(nodes: u64) -> BoxSolution {
        BoxSolution {
            status: SolveStatus::Infeasible,
            cell: None,
            objective: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes_explored: nodes,
        }
    }

    /// Active leaf per tree (panics when infeasible).
    pub fn leaves(&self) -> &[u32] {
        self.cell.as_ref().expect("infeasible solution has no cell").leaves()
    }

    /// The solution box (panics when infeasible).
    pub fn region(&self) -> &BoxRegion {
        self.cell.as_ref().expect("infeasible solution has no cell").region()
    }
}

/// One line of the optional solve log, recorded per explored node.
#[derive(Clone, Copy, Debug)]
pub struct NodeLog {
    pub bound: f64,
    pub incumbent: f64,
    pub depth: u32,
}

/// Render a solve log with its fixed CSV columns.
pub fn solve_log_csv(rows: &[NodeLog]) -> String {
    let mut out = String::from("bound,incumbent,depth\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.bound, r.incumbent, r.depth));
    }
    out
}

/// Per-feature extent of a search node: a contiguous range of threshold
/// segments (segment j lies between thresholds j−1 and j), or a category
/// subset.
#[derive(Clone, Debug, PartialEq)]
enum NodeDim {
    /// Inclusive segment index range into the feature's threshold chain.
    Segments { lo: u32, hi: u32 },
    Cats(Vec<usize>),
}

/// A branch-and-bound node: a box over the split lattice plus the bound
/// computed for it. Reachable leaves are recomputed by tree descent.
#[derive(Clone, Debug)]
pub struct BnbNode {
    dims: Vec<NodeDim>,
    depth: u32,
    bound: f64,
}

impl BnbNode {
    /// The root node spanning the whole domain.
    pub fn root(p: &AcquisitionProblem) -> BnbNode {
        let space = p.ensemble().space();
        let idx = p.split_index();
        let dims = space
            .features()
            .iter()
            .map(|f| {
                if f.is_categorical() {
                    NodeDim::Cats((0..f.n_categories()).collect())
                } else {
                    NodeDim::Segments { lo: 0, hi: idx.thresholds(f.index).len() as u32 }
                }
            })
            .collect();
        let mut node = BnbNode { dims, depth: 0, bound: f64::INFINITY };
        node.bound = bound(p, &node);
        node
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn bound_value(&self) -> f64 {
        self.bound
    }

    /// The node box as a concrete region.
    fn region(&self, p: &AcquisitionProblem) -> BoxRegion {
        let space = p.ensemble().space();
        let idx = p.split_index();
        let dims = self
            .dims
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                NodeDim::Cats(c) => BoxDim::Cats(c.clone()),
                NodeDim::Segments { lo, hi } => {
                    let thr = idx.thresholds(i);
                    let (dlo, dhi) = space.feature(i).numeric_bounds().unwrap();
                    BoxDim::Interval(Interval {
                        lo: if *lo == 0 { dlo } else { thr[*lo as usize - 1] },
                        hi: if *hi as usize == thr.len() { dhi } else { thr[*hi as usize] },
                        lo_open: *lo > 0,
                    })
                }
            })
            .collect();
        BoxRegion::new(dims)
    }
}

/// Branchable action at a node: a threshold index of a feature, or the
/// category-subset split of a categorical feature.
type Action = (usize, u32);
const CAT_ACTION: u32 = u32::MAX;

/// Immutable per-solve tables.
struct Precomp {
    /// Per tree, per tree-node: split-index position of the node's
    /// threshold (undefined entries for leaves/categorical splits).
    thr_pos: Vec<Vec<u32>>,
    /// Per tree, per leaf: Σ α_i over training rows active in that leaf.
    w: Vec<Vec<f64>>,
    /// Projected-gradient step 1/L for the deviation ascent.
    pg_step: f64,
}

impl Precomp {
    fn new(p: &AcquisitionProblem) -> Precomp {
        let ens = p.ensemble();
        let idx = p.split_index();
        let mut thr_pos = Vec::with_capacity(ens.n_trees());
        for tree in ens.trees() {
            assert!(
                tree.n_leaves() <= 128,
                "solver supports trees with at most 128 leaves (got {})",
                tree.n_leaves()
            );
            let mut pos = vec![0u32; tree.nodes().len()];
            for (ni, node) in tree.nodes().iter().enumerate() {
                if let TreeNode::Internal { split, .. } = node {
                    if let SplitKind::Continuous { threshold } = &split.kind {
                        let thr = idx.thresholds(split.feature);
                        pos[ni] = thr
                            .binary_search_by(|v| v.total_cmp(threshold))
                            .expect("split threshold missing from index")
                            as u32;
                    }
                }
            }
            thr_pos.push(pos);
        }
        let alpha = p.posterior().alpha();
        let act = p.posterior().activation();
        let mut w: Vec<Vec<f64>> = ens
            .trees()
            .iter()
            .map(|t| vec![0.0; t.n_leaves() as usize])
            .collect();
        for i in 0..p.n_data() {
            let cell = act.cell(i);
            for (t, &leaf) in cell.iter().enumerate() {
                w[t][leaf as usize] += alpha[i];
            }
        }
        let q = p.qinv();
        let mut max_row = 0.0f64;
        for i in 0..q.nrows() {
            let s: f64 = (0..q.ncols()).map(|j| q[(i, j)].abs()).sum();
            max_row = max_row.max(s);
        }
        let lips = 2.0 * max_row;
        Precomp { thr_pos, w, pg_step: if lips > 0.0 { 1.0 / lips } else { 1.0 } }
    }
}

/// Reachability summary of one node.
struct NodeScan {
    /// Bitmask of reachable leaves per tree.
    reach: Vec<u128>,
    /// Ambiguous split actions and how many trees each would resolve.
    ambiguous: HashMap<Action, u32>,
    /// Set when every tree is resolved to a single leaf.
    resolved: Option<Vec<u32>>,
}

fn scan_node(p: &AcquisitionProblem, pre: &Precomp, node: &BnbNode) -> NodeScan {
    let ens = p.ensemble();
    let mut reach = Vec::with_capacity(ens.n_trees());
    let mut ambiguous: HashMap<Action, u32> = HashMap::new();
    let mut per_tree: Vec<Action> = Vec::new();
    let mut resolved_leaves = Vec::with_capacity(ens.n_trees());
    let mut all_resolved = true;
    for (t, tree) in ens.trees().iter().enumerate() {
        per_tree.clear();
        let mask = scan_tree(tree, &pre.thr_pos[t], &node.dims, &mut per_tree);
        per_tree.sort_unstable();
        per_tree.dedup();
        for &a in &per_tree {
            *ambiguous.entry(a).or_insert(0) += 1;
        }
        if mask.count_ones() == 1 {
            resolved_leaves.push(mask.trailing_zeros());
        } else {
            all_resolved = false;
        }
        reach.push(mask);
    }
    NodeScan {
        reach,
        ambiguous,
        resolved: all_resolved.then_some(resolved_leaves),
    }
}

/// Descend one tree over the node box, returning the reachable-leaf mask
/// and recording splits that cut the box.
fn scan_tree(tree: &Tree, thr_pos: &[u32], dims: &[NodeDim], ambiguous: &mut Vec<Action>) -> u128 {
    let mut mask = 0u128;
    let mut stack = vec![0usize];
    while let Some(n) = stack.pop() {
        match &tree.nodes()[n] {
            TreeNode::Leaf { leaf, .. } => mask |= 1u128 << leaf,
            TreeNode::Internal { split, left, right } => match &split.kind {
                SplitKind::Continuous { .. } => {
                    let idx = thr_pos[n];
                    let NodeDim::Segments { lo, hi } = &dims[split.feature] else {
                        unreachable!("continuous split on categorical dim")
                    };
                    if *hi <= idx {
                        stack.push(*left);
                    } else if *lo > idx {
                        stack.push(*right);
                    } else {
                        ambiguous.push((split.feature, idx));
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
                SplitKind::Categorical { left_categories } => {
                    let NodeDim::Cats(cats) = &dims[split.feature] else {
                        unreachable!("categorical split on numeric dim")
                    };
                    let any_left = cats.iter().any(|c| left_categories.contains(c));
                    let any_right = cats.iter().any(|c| !left_categories.contains(c));
                    if any_left && any_right {
                        ambiguous.push((split.feature, CAT_ACTION));
                        stack.push(*left);
                        stack.push(*right);
                    } else if any_left {
                        stack.push(*left);
                    } else {
                        stack.push(*right);
                    }
                }
            },
        }
    }
    mask
}

/// Per-row kernel ranges implied by the reachable leaves: the row's active
/// leaf still reachable makes agreement possible; a tree pinned to that
/// leaf makes it certain.
fn kernel_ranges(p: &AcquisitionProblem, reach: &[u128]) -> (Vec<f64>, Vec<f64>, Vec<u32>) {
    let act = p.posterior().activation();
    let t = reach.len();
    let s0 = p.posterior().params().sigma0_sq;
    let m = p.n_data();
    let mut klo = Vec::with_capacity(m);
    let mut khi = Vec::with_capacity(m);
    let mut clo_counts = Vec::with_capacity(m);
    for i in 0..m {
        let cell = act.cell(i);
        let mut chi = 0u32;
        let mut clo = 0u32;
        for (tt, &leaf) in cell.iter().enumerate() {
            let bit = 1u128 << leaf;
            if reach[tt] & bit != 0 {
                chi += 1;
                if reach[tt] == bit {
                    clo += 1;
                }
            }
        }
        klo.push(crate::tkgp::scale_count(clo, t, s0));
        khi.push(crate::tkgp::scale_count(chi, t, s0));
        clo_counts.push(clo);
    }
    (klo, khi, clo_counts)
}

/// Separable upper bound on the posterior mean over the node.
fn mean_upper_bound(p: &AcquisitionProblem, pre: &Precomp, reach: &[u128]) -> f64 {
    let t = reach.len();
    let s0 = p.posterior().params().sigma0_sq;
    let mut total = 0.0;
    for (tt, &mask) in reach.iter().enumerate() {
        let w = &pre.w[tt];
        let mut best = f64::NEG_INFINITY;
        let mut bits = mask;
        while bits != 0 {
            let leaf = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if w[leaf] > best {
                best = w[leaf];
            }
        }
        total += best;
    }
    s0 * (total / t as f64)
}

/// Upper bound on the acquisition deviation term over the k-box:
/// projected-gradient ascent on the concave σ0² − kᵀQ⁻¹k, made a certified
/// upper bound by the first-order (gradient) envelope at the final
/// iterate.
fn sigma_upper_bound(
    qinv: &DMatrix<f64>,
    sigma0_sq: f64,
    step: f64,
    klo: &[f64],
    khi: &[f64],
) -> f64 {
    let m = klo.len();
    let mut k: Vec<f64> = klo.to_vec();
    let mut qk = vec![0.0; m];
    let mut knew = vec![0.0; m];
    for _ in 0..200 {
        matvec(qinv, &k, &mut qk);
        let mut moved = 0.0f64;
        for i in 0..m {
            let v = (k[i] - 2.0 * step * qk[i]).clamp(klo[i], khi[i]);
            moved = moved.max((v - k[i]).abs());
            knew[i] = v;
        }
        std::mem::swap(&mut k, &mut knew);
        if moved <= 1e-12 * sigma0_sq.max(1e-300) {
            break;
        }
    }
    matvec(qinv, &k, &mut qk);
    let mut value = sigma0_sq;
    for i in 0..m {
        value -= k[i] * qk[i];
    }
    // First-order concavity certificate: f(k*) ≤ f(k̂) + ∇f(k̂)ᵀ(k*−k̂),
    // maximized coordinate-wise over the box.
    let mut cert = value;
    for i in 0..m {
        let g = -2.0 * qk[i];
        cert += (g * (klo[i] - k[i])).max(g * (khi[i] - k[i]));
    }
    cert.clamp(0.0, sigma0_sq).sqrt() + SIGMA_SLACK
}

fn matvec(q: &DMatrix<f64>, k: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (j, &kj) in k.iter().enumerate() {
        if kj != 0.0 {
            let col = q.column(j);
            for i in 0..out.len() {
                out[i] += col[i] * kj;
            }
        }
    }
}

/// Valid upper bound on the acquisition over every cell below the node.
/// Exact (no slack) when the node is resolved to a single cell.
pub fn bound(p: &AcquisitionProblem, node: &BnbNode) -> f64 {
    let pre = Precomp::new(p);
    bound_impl(p, &pre, node, f64::NEG_INFINITY)
}

/// `prune_below`: once the bound provably cannot exceed this value the
/// caller will discard the node, so the deviation ascent may be skipped.
fn bound_impl(p: &AcquisitionProblem, pre: &Precomp, node: &BnbNode, prune_below: f64) -> f64 {
    let scan = scan_node(p, pre, node);
    if let Some(cell) = &scan.resolved {
        return p.evaluate_leaves(cell);
    }
    node_bound_from_scan(p, pre, &scan, prune_below).unwrap_or(f64::NEG_INFINITY)
}

/// Bound from an existing scan; `None` when the agreement cap proves every
/// cell under the node infeasible.
fn node_bound_from_scan(
    p: &AcquisitionProblem,
    pre: &Precomp,
    scan: &NodeScan,
    prune_below: f64,
) -> Option<f64> {
    let mu_ub = mean_upper_bound(p, pre, &scan.reach);
    let slack = |v: f64| v + BOUND_SLACK * (1.0 + v.abs());
    if let Some(r) = p.agreement_cap() {
        let (_, _, clo) = kernel_ranges(p, &scan.reach);
        let t = scan.reach.len() as f64;
        if clo.iter().any(|&c| c as f64 / t > r + CAP_TOLERANCE) {
            return None;
        }
        return Some(slack(mu_ub));
    }
    if p.kappa() == 0.0 {
        return Some(slack(mu_ub));
    }
    let sigma0_sq = p.posterior().params().sigma0_sq;
    // σ ≤ σ0 always; skip the ascent when even that cannot reach the
    // pruning threshold.
    let cheap = mu_ub + p.kappa() * (sigma0_sq.sqrt() + SIGMA_SLACK);
    if slack(cheap) <= prune_below {
        return Some(slack(cheap));
    }
    let (klo, khi, _) = kernel_ranges(p, &scan.reach);
    let sig = sigma_upper_bound(p.qinv(), sigma0_sq, pre.pg_step, &klo, &khi);
    Some(slack(mu_ub + p.kappa() * sig))
}

struct HeapEntry {
    node: BnbNode,
    seq: u64,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.node.bound == other.node.bound && self.seq == other.seq
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap on bound; FIFO among equal bounds.
        self.node
            .bound
            .total_cmp(&other.node.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Maximize the acquisition. Returns the best certified-feasible cell with
/// its gap; `Infeasible` when constraint screening and certification
/// eliminate every cell.
pub fn solve<R: Rng + ?Sized>(
    p: &AcquisitionProblem,
    opts: &SolveOptions,
    rng: &mut R,
) -> BoxSolution {
    solve_full(p, opts, &[], rng, None)
}

/// [`solve`] that refuses the given cells (active-leaf vectors); used to
/// re-solve after a downstream projection failure.
pub fn solve_excluding<R: Rng + ?Sized>(
    p: &AcquisitionProblem,
    opts: &SolveOptions,
    excluded: &[Vec<u32>],
    rng: &mut R,
) -> BoxSolution {
    solve_full(p, opts, excluded, rng, None)
}

/// [`solve`] that records one log row per explored node.
pub fn solve_with_log<R: Rng + ?Sized>(
    p: &AcquisitionProblem,
    opts: &SolveOptions,
    rng: &mut R,
    log: &mut Vec<NodeLog>,
) -> BoxSolution {
    solve_full(p, opts, &[], rng, Some(log))
}

fn solve_full<R: Rng + ?Sized>(
    p: &AcquisitionProblem,
    opts: &SolveOptions,
    excluded: &[Vec<u32>],
    rng: &mut R,
    mut log: Option<&mut Vec<NodeLog>>,
) -> BoxSolution {
    opts.validate().expect("invalid solve options");
    let start = Instant::now();
    let pre = Precomp::new(p);
    let mut state = SearchState {
        p,
        pre: &pre,
        excluded: excluded.iter().cloned().collect(),
        incumbent: None,
        cert_cache: HashMap::new(),
    };

    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();
    let mut seq = 0u64;
    let root = BnbNode::root_unbounded(p);
    if let Some(entry) = state.admit(root, f64::NEG_INFINITY) {
        heap.push(HeapEntry { node: entry, seq });
        seq += 1;
    }

    let mut nodes = 0u64;
    let mut status = SolveStatus::Optimal;
    let mut final_best_bound = f64::NEG_INFINITY;
    while let Some(HeapEntry { node, .. }) = heap.pop() {
        let threshold = state.prune_threshold(opts.rel_gap);
        if node.bound <= threshold {
            final_best_bound = node.bound;
            break; // best-first order: nothing left can beat the incumbent
        }
        if nodes >= opts.max_nodes {
            status = SolveStatus::GapLimit;
            final_best_bound = node.bound;
            break;
        }
        if start.elapsed().as_secs_f64() > opts.time_limit_s {
            status = SolveStatus::TimeLimit;
            final_best_bound = node.bound;
            break;
        }
        nodes += 1;
        if let Some(log) = log.as_deref_mut() {
            log.push(NodeLog {
                bound: node.bound,
                incumbent: state.incumbent.as_ref().map_or(f64::NEG_INFINITY, |(_, v)| *v),
                depth: node.depth,
            });
        }

        let scan = scan_node(p, &pre, &node);
        if let Some(cell) = scan.resolved {
            state.try_incumbent(cell, rng);
            continue;
        }
        // Incumbent heuristics: the cell at the node-box midpoint, plus a
        // random cell for diversification once per period.
        let region = node.region(p);
        let mid = propose::midpoint_in_box(&region, p.ensemble().space(), rng);
        state.try_incumbent(p.ensemble().assign_cell(&mid), rng);
        if nodes % RANDOM_CELL_PERIOD == 0 {
            let x = region.sample_uniform(p.ensemble().space(), rng);
            state.try_incumbent(p.ensemble().assign_cell(&x), rng);
        }

        let Some(&(feature, code)) = scan
            .ambiguous
            .iter()
            .max_by(|(a, ca), (b, cb)| {
                ca.cmp(cb).then_with(|| b.0.cmp(&a.0)).then_with(|| b.1.cmp(&a.1))
            })
            .map(|(a, _)| a)
        else {
            unreachable!("unresolved node must have an ambiguous split");
        };
        let threshold = state.prune_threshold(opts.rel_gap);
        for child_dims in branch(&node.dims, feature, code) {
            let child = BnbNode {
                dims: child_dims,
                depth: node.depth + 1,
                bound: node.bound,
            };
            if let Some(mut admitted) = state.admit(child, threshold) {
                admitted.bound = admitted.bound.min(node.bound);
                if admitted.bound > threshold {
                    heap.push(HeapEntry { node: admitted, seq });
                    seq += 1;
                }
            }
        }
    }

    let Some((leaves, objective)) = state.incumbent else {
        return BoxSolution::infeasible(nodes);
    };
    let best_bound = heap
        .peek()
        .map(|e| e.node.bound)
        .unwrap_or(f64::NEG_INFINITY)
        .max(final_best_bound)
        .max(objective);
    let gap = ((best_bound - objective) / objective.abs().max(1.0)).max(0.0);
    if status == SolveStatus::Optimal && gap > opts.rel_gap {
        // Terminated by limits before reaching the gap (only via breaks).
        status = SolveStatus::GapLimit;
    }
    let cell = Cell::new(p.ensemble(), leaves).expect("incumbent cell is consistent");
    BoxSolution { status, cell: Some(cell), objective, gap, nodes_explored: nodes }
}

impl BnbNode {
    /// Root dims without computing a bound (internal).
    fn root_unbounded(p: &AcquisitionProblem) -> BnbNode {
        let space = p.ensemble().space();
        let idx = p.split_index();
        let dims = space
            .features()
            .iter()
            .map(|f| {
                if f.is_categorical() {
                    NodeDim::Cats((0..f.n_categories()).collect())
                } else {
                    NodeDim::Segments { lo: 0, hi: idx.thresholds(f.index).len() as u32 }
                }
            })
            .collect();
        BnbNode { dims, depth: 0, bound: f64::INFINITY }
    }
}

/// The two children produced by branching on an action.
fn branch(dims: &[NodeDim], feature: usize, code: u32) -> Vec<Vec<NodeDim>> {
    let mut left = dims.to_vec();
    let mut right = dims.to_vec();
    match &dims[feature] {
        NodeDim::Segments { lo, hi } => {
            debug_assert!(*lo <= code && code < *hi);
            left[feature] = NodeDim::Segments { lo: *lo, hi: code };
            right[feature] = NodeDim::Segments { lo: code + 1, hi: *hi };
        }
        NodeDim::Cats(cats) => {
            debug_assert!(code == CAT_ACTION && cats.len() >= 2);
            left[feature] = NodeDim::Cats(vec![cats[0]]);
            right[feature] = NodeDim::Cats(cats[1..].to_vec());
        }
    }
    vec![left, right]
}

struct SearchState<'a> {
    p: &'a AcquisitionProblem,
    pre: &'a Precomp,
    excluded: HashSet<Vec<u32>>,
    incumbent: Option<(Vec<u32>, f64)>,
    cert_cache: HashMap<Vec<u32>, bool>,
}

impl<'a> SearchState<'a> {
    fn prune_threshold(&self, rel_gap: f64) -> f64 {
        match &self.incumbent {
            Some((_, v)) => v + rel_gap * v.abs().max(1.0),
            None => f64::NEG_INFINITY,
        }
    }

    /// Screen a fresh node; returns it with its bound when it survives.
    fn admit(&mut self, mut node: BnbNode, threshold: f64) -> Option<BnbNode> {
        let space = self.p.ensemble().space();
        let region = node.region(self.p);
        // Integer dimensions may have been cut down to a gap with no
        // integer points.
        for (i, d) in region.dims().iter().enumerate() {
            if let BoxDim::Interval(iv) = d {
                if space.feature(i).is_integer() && !iv.contains_integer() {
                    return None;
                }
            }
        }
        if !screen_region(self.p.constraints(), &region) {
            return None;
        }
        let scan = scan_node(self.p, self.pre, &node);
        if let Some(cell) = &scan.resolved {
            node.bound = self.p.evaluate_leaves(cell);
        } else {
            node.bound = node_bound_from_scan(self.p, self.pre, &scan, threshold)?;
        }
        Some(node)
    }

    /// Consider a cell as the new incumbent: it must beat the current one,
    /// not be excluded, satisfy the agreement cap, and contain a certified
    /// feasible point.
    fn try_incumbent<R: Rng + ?Sized>(&mut self, leaves: Vec<u32>, rng: &mut R) {
        let value = self.p.evaluate_leaves(&leaves);
        if let Some((_, best)) = &self.incumbent {
            if value <= *best {
                return;
            }
        }
        if self.excluded.contains(&leaves) || !self.p.cell_within_cap(&leaves) {
            return;
        }
        let feasible = match self.cert_cache.get(&leaves) {
            Some(&f) => f,
            None => {
                let f = self.certify(&leaves, rng);
                self.cert_cache.insert(leaves.clone(), f);
                f
            }
        };
        if feasible {
            self.incumbent = Some((leaves, value));
        }
    }

    fn certify<R: Rng + ?Sized>(&self, leaves: &[u32], rng: &mut R) -> bool {
        let cs = self.p.constraints();
        if cs.is_empty() {
            return true;
        }
        let cell = Cell::new(self.p.ensemble(), leaves.to_vec())
            .expect("candidate cell must be consistent");
        if !screen_region(cs, cell.region()) {
            return false;
        }
        let space = self.p.ensemble().space();
        propose::find_feasible_in_box(cell.region(), space, cs, rng).is_some()
    }
}

/// Interval-arithmetic feasibility screening: false when some inequality
/// is provably violated everywhere in the region or an equality provably
/// misses zero.
pub fn screen_region(cs: &ConstraintSet, region: &BoxRegion) -> bool {
    for g in &cs.inequalities {
        let (lo, _) = g.interval_eval(region);
        if lo > SCREEN_TOLERANCE {
            return false;
        }
    }
    for h in &cs.equalities {
        let (lo, hi) = h.interval_eval(region);
        if lo > SCREEN_TOLERANCE || hi < -SCREEN_TOLERANCE {
            return false;
        }
    }
    true
}

/// Exhaustive oracle: evaluate every consistent cell (≤ 10⁶ by leaf-count
/// product), screened the same way the solver screens, and return the
/// exact maximizer; ties go to the lexicographically smallest leaf vector.
pub fn enumerate_exact(p: &AcquisitionProblem) -> Result<BoxSolution> {
    let ens = p.ensemble();
    let mut product: u128 = 1;
    for t in ens.trees() {
        product = product.saturating_mul(t.n_leaves() as u128);
        if product > 1_000_000 {
            return Err(Error::CellCountOverflow { limit: 1_000_000 });
        }
    }
    let space = ens.space();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut nodes = 0u64;
    let mut leaves: Vec<u32> = Vec::new();

    fn visit<R: Rng + ?Sized>(
        p: &AcquisitionProblem,
        t: usize,
        region: &BoxRegion,
        leaves: &mut Vec<u32>,
        best: &mut Option<(Vec<u32>, f64)>,
        nodes: &mut u64,
        rng: &mut R,
    ) {
        let ens = p.ensemble();
        let space = ens.space();
        if t == ens.n_trees() {
            *nodes += 1;
            if !screen_region(p.constraints(), region) || !p.cell_within_cap(leaves) {
                return;
            }
            if !p.constraints().is_empty()
                && propose::find_feasible_in_box(region, space, p.constraints(), rng).is_none()
            {
                return;
            }
            let value = p.evaluate_leaves(leaves);
            let better = match best {
                None => true,
                Some((bl, bv)) => value > *bv || (value == *bv && leaves < bl),
            };
            if better {
                *best = Some((leaves.clone(), value));
            }
            return;
        }
        for leaf in 0..ens.trees()[t].n_leaves() {
            let lb = ens.trees()[t].leaf_box(leaf, space);
            if let Some(next) = region.intersect(&lb, space) {
                leaves.push(leaf);
                visit(p, t + 1, &next, leaves, best, nodes, rng);
                leaves.pop();
            }
        }
    }
    visit(
        p,
        0,
        &BoxRegion::full_domain(space),
        &mut leaves,
        &mut best,
        &mut nodes,
        &mut rng,
    );
    match best {
        None => Ok(BoxSolution::infeasible(nodes)),
        Some((leaves, objective)) => {
            let cell = Cell::new(ens, leaves)?;
            Ok(BoxSolution {
                status: SolveStatus::Optimal,
                cell: Some(cell),
                objective,
                gap: 0.0,
                nodes_explored: nodes,
            })
        }
    }
}

/// All consistent cells of the partition (unscreened); test helper for
/// small instances.
pub fn enumerate_cells(p: &AcquisitionProblem) -> Result<Vec<Cell>> {
    let ens = p.ensemble();
    let mut product: u128 = 1;
    for t in ens.trees() {
        product = product.saturating_mul(t.n_leaves() as u128);
        if product > 1_000_000 {
            return Err(Error::CellCountOverflow { limit: 1_000_000 });
        }
    }
    let space = ens.space();
    let mut out = Vec::new();
    let mut leaves = Vec::new();
    fn recurse(
        ens: &TreeEnsemble,
        space: &crate::space::FeatureSpace,
        t: usize,
        region: &BoxRegion,
        leaves: &mut Vec<u32>,
        out: &mut Vec<Cell>,
    ) {
        if t == ens.n_trees() {
            out.push(
                Cell::new(ens, leaves.clone()).expect("intersection-pruned cell is consistent"),
            );
            return;
        }
        for leaf in 0..ens.trees()[t].n_leaves() {
            if let Some(next) = region.intersect(&ens.trees()[t].leaf_box(leaf, space), space) {
                leaves.push(leaf);
                recurse(ens, space, t + 1, &next, leaves, out);
                leaves.pop();
            }
        }
    }
    recurse(ens, space, 0, &BoxRegion::full_domain(space), &mut leaves, &mut out);
    Ok(out)
}
