//! Acquisition problem over the tree partition.
//!
//! On any cell of the ensemble's partition — one active leaf per tree —
//! the GP mean, variance, and hence the UCB objective μ + κσ are constant,
//! because the cross-kernel vector k depends on the input only through its
//! leaf assignment. This module materializes that piecewise-constant
//! optimization problem: the cross-kernel is a linear function of the
//! active-leaf indicators (coefficient σ0²/|T| on each of data point i's
//! active leaves), so evaluating a cell reduces to counting per-tree
//! agreements with each training row. The agreement counts are scaled
//! through [`scale_count`], which makes the reconstruction bitwise-equal
//! to a direct kernel evaluation.
//!
//! The agreement-capped variant keeps the same machinery but maximizes the
//! mean only and declares a cell feasible when its leaf-overlap ratio with
//! every training row is at most R.

use crate::error::{Error, Result};
use crate::gbdt::{SplitIndex, TreeEnsemble};
use crate::space::{BoxRegion, ConstraintSet, Point};
use crate::tkgp::{scale_count, GpPosterior};
use nalgebra::{DMatrix, DVector};

/// Tolerance for the agreement-cap comparison overlap ≤ R.
pub const CAP_TOLERANCE: f64 = 1e-12;

/// One region of the ensemble partition: an active leaf per tree and the
/// nonempty box obtained by intersecting those leaves' boxes with the
/// domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    leaves: Vec<u32>,
    region: BoxRegion,
}

impl Cell {
    /// Build a cell from leaf choices, checking mutual consistency.
    pub fn new(ens: &TreeEnsemble, leaves: Vec<u32>) -> Result<Cell> {
        if leaves.len() != ens.n_trees() {
            return Err(Error::DimensionMismatch { expected: ens.n_trees(), got: leaves.len() });
        }
        let space = ens.space();
        let mut region = BoxRegion::full_domain(space);
        for (t, tree) in ens.trees().iter().enumerate() {
            if leaves[t] >= tree.n_leaves() {
                return Err(Error::InconsistentCell(format!(
                    "tree {t} has no leaf {}",
                    leaves[t]
                )));
            }
            let lb = tree.leaf_box(leaves[t], space);
            region = region.intersect(&lb, space).ok_or_else(|| {
                Error::InconsistentCell(format!(
                    "leaf choices disagree at tree {t} (empty intersection)"
                ))
            })?;
        }
        Ok(Cell { leaves, region })
    }

    /// The cell containing a concrete point (always consistent).
    pub fn from_point(ens: &TreeEnsemble, x: &Point) -> Cell {
        let leaves = ens.assign_cell(x);
        Cell::new(ens, leaves).expect("cell of a concrete point cannot be empty")
    }

    pub fn leaves(&self) -> &[u32] {
        &self.leaves
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }
}

/// Which Gram matrix feeds the acquisition variance. The posterior itself
/// always adds observation noise; this switch exists for sensitivity
/// checks of the acquisition term only.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum VarianceMode {
    /// σ²(x) = σ0² − kᵀ(K + σy²I)⁻¹k (default).
    #[default]
    Noisy,
    /// σ²(x) = σ0² − kᵀK⁻¹k with jitter as needed.
    NoiseFree,
}

/// The UCB maximization problem over the partition, with polynomial
/// constraints screened geometrically by the solver.
#[derive(Clone, Debug)]
pub struct AcquisitionProblem {
    posterior: GpPosterior,
    kappa: f64,
    constraints: ConstraintSet,
    split_index: SplitIndex,
    qinv: DMatrix<f64>,
    agreement_cap: Option<f64>,
}

/// Build the acquisition problem from a posterior. κ must be nonnegative.
pub fn encode(post: &GpPosterior, kappa: f64, constraints: ConstraintSet) -> AcquisitionProblem {
    encode_with_mode(post, kappa, constraints, VarianceMode::Noisy)
        .expect("noisy Gram inverse cannot fail after posterior construction")
}

/// [`encode`] with an explicit variance mode; the noise-free mode can fail
/// to factor a rank-deficient Gram even after jitter.
pub fn encode_with_mode(
    post: &GpPosterior,
    kappa: f64,
    constraints: ConstraintSet,
    mode: VarianceMode,
) -> Result<AcquisitionProblem> {
    assert!(kappa >= 0.0, "kappa must be nonnegative, got {kappa}");
    for c in constraints.inequalities.iter().chain(&constraints.equalities) {
        c.check_against(post.ensemble().space())?;
    }
    let mut qinv = match mode {
        VarianceMode::Noisy => post.gram_inverse(),
        VarianceMode::NoiseFree => post.gram_inverse_noise_free()?,
    };
    // Symmetrize to wash out factorization rounding; the variance bound
    // logic downstream relies on Qinv being symmetric.
    let qt = qinv.transpose();
    qinv += qt;
    qinv *= 0.5;
    Ok(AcquisitionProblem {
        posterior: post.clone(),
        kappa,
        constraints,
        split_index: post.ensemble().split_index(),
        qinv,
        agreement_cap: None,
    })
}

impl AcquisitionProblem {
    pub fn posterior(&self) -> &GpPosterior {
        &self.posterior
    }

    pub fn ensemble(&self) -> &TreeEnsemble {
        self.posterior.ensemble()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn split_index(&self) -> &SplitIndex {
        &self.split_index
    }

    pub fn qinv(&self) -> &DMatrix<f64> {
        &self.qinv
    }

    pub fn agreement_cap(&self) -> Option<f64> {
        self.agreement_cap
    }

    /// Number of training rows behind the posterior.
    pub fn n_data(&self) -> usize {
        self.posterior.len()
    }

    /// Per-tree agreement counts between a leaf assignment and every
    /// training row — the integer core of the cross-kernel.
    pub fn agreement_counts(&self, leaves: &[u32]) -> Vec<u32> {
        self.posterior.activation().agreement_counts(leaves)
    }

    /// Cross-kernel row K_{x,X} reconstructed from a leaf assignment.
    /// Counts agreements per data point and scales once, so every entry is
    /// bitwise-equal to `kernel` evaluated at any point of the cell.
    pub fn reconstruct_kernel_row(&self, leaves: &[u32]) -> DVector<f64> {
        let t = self.ensemble().n_trees();
        let s0 = self.posterior.params().sigma0_sq;
        let counts = self.agreement_counts(leaves);
        DVector::from_iterator(counts.len(), counts.into_iter().map(|c| scale_count(c, t, s0)))
    }

    /// Nonzero linear coefficients of data point i's kernel row over the
    /// flattened leaf indicators: σ0²/|T| at each of i's active leaves.
    pub fn kernel_coeff(&self, i: usize) -> Vec<(usize, f64)> {
        let ens = self.ensemble();
        let t = ens.n_trees();
        let per_leaf = self.posterior.params().sigma0_sq / t as f64;
        self.posterior
            .activation()
            .cell(i)
            .iter()
            .enumerate()
            .map(|(tree, &leaf)| (ens.leaf_column(tree, leaf), per_leaf))
            .collect()
    }

    /// UCB value of an arbitrary cross-kernel vector: kᵀα + κ·√(σ0²−kᵀQ⁻¹k)
    /// in standardized units (mean only when the agreement cap is active).
    pub fn ucb_of_kvec(&self, k: &DVector<f64>) -> f64 {
        let mu = k.dot(self.posterior.alpha());
        if self.agreement_cap.is_some() {
            return mu;
        }
        mu + self.kappa * self.variance_of_kvec(k).sqrt()
    }

    /// σ²-part of the acquisition for a cross-kernel vector, clamped at 0.
    pub fn variance_of_kvec(&self, k: &DVector<f64>) -> f64 {
        let s0 = self.posterior.params().sigma0_sq;
        (s0 - (k.transpose() * &self.qinv * k)[(0, 0)]).max(0.0)
    }

    /// Acquisition value of a leaf assignment (cell interior irrelevant).
    pub fn evaluate_leaves(&self, leaves: &[u32]) -> f64 {
        self.ucb_of_kvec(&self.reconstruct_kernel_row(leaves))
    }

    /// Acquisition value of a consistent cell, in standardized units.
    pub fn evaluate_cell(&self, cell: &Cell) -> f64 {
        self.evaluate_leaves(cell.leaves())
    }

    /// Whether a leaf assignment satisfies the agreement cap against every
    /// training row (vacuously true without a cap).
    pub fn cell_within_cap(&self, leaves: &[u32]) -> bool {
        let Some(r) = self.agreement_cap else { return true };
        let t = self.ensemble().n_trees() as f64;
        self.agreement_counts(leaves)
            .into_iter()
            .all(|c| c as f64 / t <= r + CAP_TOLERANCE)
    }
}

/// Variant problem that maximizes the posterior mean subject to a tree
/// agreement ratio of at most R against every training row. R ∈ (0, 1].
pub fn with_agreement_cap(p: &AcquisitionProblem, r: f64) -> AcquisitionProblem {
    assert!(r > 0.0 && r <= 1.0, "agreement cap must lie in (0, 1], got {r}");
    let mut capped = p.clone();
    capped.agreement_cap = Some(r);
    capped
}
