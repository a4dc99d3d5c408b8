//! Gaussian process with a tree-ensemble kernel.
//!
//! The kernel between two points is the fraction of trees that route them
//! to the same leaf, scaled by a signal variance: k(x, x') =
//! σ0² · |T|⁻¹ · #{t : leaf_t(x) = leaf_t(x')}. Collecting the active
//! leaves of the training rows into a binary activation matrix A gives the
//! Gram matrix as σ0²|T|⁻¹·A·Aᵀ. Posterior inference is the standard exact
//! GP formulae with a σy² noise diagonal; hyperparameters (σ0, σy) are fit
//! by adaptive-moment gradient ascent on the log marginal likelihood in
//! log coordinates.
//!
//! Numerical note: kernel, Gram, and every downstream consumer compute
//! σ0² · (count / |T|) through [`scale_count`] with the same operation
//! order, so identities like "Gram entry == kernel value" hold bitwise,
//! not merely within tolerance.

use crate::error::{Error, Result};
use crate::gbdt::TreeEnsemble;
use crate::space::{Dataset, Point, Standardization};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Shared arithmetic for turning a tree-agreement count into a kernel
/// value. Every kernel-valued quantity in the crate goes through this.
#[inline]
pub fn scale_count(count: u32, n_trees: usize, sigma0_sq: f64) -> f64 {
    sigma0_sq * (count as f64 / n_trees as f64)
}

/// Signal and noise variances of the GP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub sigma0_sq: f64,
    pub sigma_y_sq: f64,
}

impl KernelParams {
    pub fn new(sigma0_sq: f64, sigma_y_sq: f64) -> Self {
        KernelParams { sigma0_sq, sigma_y_sq }
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0_sq.sqrt()
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y_sq.sqrt()
    }

    pub fn within(&self, bounds: &KernelBounds) -> bool {
        let (s0, sy) = (self.sigma0(), self.sigma_y());
        s0 >= bounds.sigma0.0 && s0 <= bounds.sigma0.1
            && sy >= bounds.sigma_y.0 && sy <= bounds.sigma_y.1
    }
}

/// Box bounds for the hyperparameter search, expressed on the standard
/// deviations (not the variances).
#[derive(Clone, Copy, Debug, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelBounds {
    pub sigma0: (f64, f64),
    pub sigma_y: (f64, f64),
}

impl Default for KernelBounds {
    fn default() -> Self {
        KernelBounds { sigma0: (5e-4, 0.2), sigma_y: (0.05, 20.0) }
    }
}

/// Active-leaf table of a set of points: row i holds the leaf chosen by
/// each tree for point i. Viewed as a binary matrix over all leaf columns,
/// each row has exactly one 1 per tree.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    cells: Vec<Vec<u32>>,
    n_trees: usize,
    total_leaves: usize,
    leaf_offsets: Vec<usize>,
}

impl ActivationMatrix {
    pub fn rows(&self) -> usize {
        self.cells.len()
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn total_leaves(&self) -> usize {
        self.total_leaves
    }

    pub fn cell(&self, i: usize) -> &[u32] {
        &self.cells[i]
    }

    /// Trees on which rows i and j agree.
    pub fn agreement(&self, i: usize, j: usize) -> u32 {
        count_agreement(&self.cells[i], &self.cells[j])
    }

    /// Agreement of every row with an external cell (active-leaf vector).
    pub fn agreement_counts(&self, cell: &[u32]) -> Vec<u32> {
        self.cells.iter().map(|c| count_agreement(c, cell)).collect()
    }

    /// Dense 0/1 matrix, m × total_leaves.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.cells.len(), self.total_leaves);
        for (i, cell) in self.cells.iter().enumerate() {
            for (t, &leaf) in cell.iter().enumerate() {
                a[(i, self.leaf_offsets[t] + leaf as usize)] = 1.0;
            }
        }
        a
    }
}

#[inline]
fn count_agreement(a: &[u32], b: &[u32]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x == y).count() as u32
}

/// Tree-kernel value between two points.
pub fn kernel(ens: &TreeEnsemble, sigma0_sq: f64, x: &Point, x2: &Point) -> f64 {
    let mut count = 0u32;
    for t in ens.trees() {
        if t.assign_leaf(x) == t.assign_leaf(x2) {
            count += 1;
        }
    }
    scale_count(count, ens.n_trees(), sigma0_sq)
}

/// Active-leaf table for a batch of points.
pub fn activation_matrix(ens: &TreeEnsemble, xs: &[Point]) -> ActivationMatrix {
    let cells = xs.iter().map(|x| ens.assign_cell(x)).collect();
    let mut leaf_offsets = Vec::with_capacity(ens.n_trees());
    for t in 0..ens.n_trees() {
        leaf_offsets.push(ens.leaf_column(t, 0));
    }
    ActivationMatrix {
        cells,
        n_trees: ens.n_trees(),
        total_leaves: ens.total_leaves(),
        leaf_offsets,
    }
}

/// Pairwise agreement counts (the integer core of the Gram matrix).
fn count_matrix(act: &ActivationMatrix) -> DMatrix<f64> {
    let m = act.rows();
    let mut c = DMatrix::zeros(m, m);
    for i in 0..m {
        c[(i, i)] = act.n_trees() as f64;
        for j in 0..i {
            let v = act.agreement(i, j) as f64;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Noisy Gram matrix K + σy²I with entries built by [`scale_count`]
/// arithmetic.
pub fn noisy_gram(act: &ActivationMatrix, params: &KernelParams) -> DMatrix<f64> {
    let m = act.rows();
    let t = act.n_trees();
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            q[(i, j)] = scale_count(if i == j { t as u32 } else { act.agreement(i, j) }, t, params.sigma0_sq);
        }
        q[(i, i)] += params.sigma_y_sq;
    }
    q
}

/// Cholesky with escalating diagonal jitter (1e−8·σ0² up to 1e−4·σ0²).
/// Returns the factor and the jitter that was required.
fn factor_with_jitter(q: &DMatrix<f64>, sigma0_sq: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if let Some(c) = Cholesky::new(q.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = 1e-8 * sigma0_sq;
    while jitter <= 1e-4 * sigma0_sq {
        let mut qj = q.clone();
        for i in 0..q.nrows() {
            qj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(qj) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Factorization(format!(
        "Gram factorization failed up to jitter {:.3e}",
        1e-4 * sigma0_sq
    )))
}

/// Log marginal likelihood and its gradient with respect to
/// (log σ0, log σy). `b` is the agreement-fraction matrix C/|T|; `y` the
/// standardized targets.
fn lml_grad_core(b: &DMatrix<f64>, y: &DVector<f64>, u0: f64, u1: f64) -> Result<(f64, [f64; 2])> {
    let m = y.len();
    let sigma0_sq = (2.0 * u0).exp();
    let sigma_y_sq = (2.0 * u1).exp();
    let mut q = b * sigma0_sq;
    for i in 0..m {
        q[(i, i)] += sigma_y_sq;
    }
    let (chol, _) = factor_with_jitter(&q, sigma0_sq)?;
    let alpha = chol.solve(y);
    let l = chol.l();
    let mut log_det_half = 0.0;
    for i in 0..m {
        log_det_half += l[(i, i)].ln();
    }
    let lml = -0.5 * y.dot(&alpha) - log_det_half - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();

    let qinv = chol.inverse();
    let mut tr_qinv_b = 0.0;
    let mut tr_qinv = 0.0;
    for i in 0..m {
        tr_qinv += qinv[(i, i)];
        for j in 0..m {
            tr_qinv_b += qinv[(i, j)] * b[(j, i)];
        }
    }
    let a_b_a = alpha.dot(&(b * &alpha));
    let g0 = sigma0_sq * (a_b_a - tr_qinv_b);
    let gy = sigma_y_sq * (alpha.dot(&alpha) - tr_qinv);
    Ok((lml, [g0, gy]))
}

/// Log marginal likelihood of standardized targets under given params.
pub fn log_marginal_likelihood(
    ens: &TreeEnsemble,
    xs: &[Point],
    y_std: &[f64],
    params: &KernelParams,
) -> Result<f64> {
    let (lml, _) = lml_and_grad(ens, xs, y_std, params)?;
    Ok(lml)
}

/// Log marginal likelihood and gradient in (log σ0, log σy) coordinates.
pub fn lml_and_grad(
    ens: &TreeEnsemble,
    xs: &[Point],
    y_std: &[f64],
    params: &KernelParams,
) -> Result<(f64, [f64; 2])> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let act = activation_matrix(ens, xs);
    let b = count_matrix(&act) / ens.n_trees() as f64;
    let y = DVector::from_column_slice(y_std);
    lml_grad_core(&b, &y, params.sigma0_sq.ln() * 0.5, params.sigma_y_sq.ln() * 0.5)
}

/// Fit (σ0, σy) by 200 steps of adaptive-moment gradient ascent on the log
/// marginal likelihood, in log coordinates, projected onto `bounds` after
/// every step. Starts at the geometric midpoint of the bounds and returns
/// the best iterate seen, so the result never scores below the start.
pub fn fit_hyperparams(
    ens: &TreeEnsemble,
    xs: &[Point],
    y_std: &[f64],
    bounds: &KernelBounds,
) -> Result<KernelParams> {
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if xs.len() != y_std.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: y_std.len() });
    }
    let act = activation_matrix(ens, xs);
    let b = count_matrix(&act) / ens.n_trees() as f64;
    let y = DVector::from_column_slice(y_std);

    let lo = [bounds.sigma0.0.ln(), bounds.sigma_y.0.ln()];
    let hi = [bounds.sigma0.1.ln(), bounds.sigma_y.1.ln()];
    let mut u = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];

    const STEPS: usize = 200;
    const LR: f64 = 0.05;
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let mut mom = [0.0f64; 2];
    let mut vel = [0.0f64; 2];
    let mut best_u = u;
    let mut best_lml = f64::NEG_INFINITY;
    for step in 1..=STEPS + 1 {
        let (lml, grad) = lml_grad_core(&b, &y, u[0], u[1])?;
        if lml > best_lml {
            best_lml = lml;
            best_u = u;
        }
        if step > STEPS {
            break; // final evaluation only scores the last projected iterate
        }
        for d in 0..2 {
            mom[d] = BETA1 * mom[d] + (1.0 - BETA1) * grad[d];
            vel[d] = BETA2 * vel[d] + (1.0 - BETA2) * grad[d] * grad[d];
            let m_hat = mom[d] / (1.0 - BETA1.powi(step as i32));
            let v_hat = vel[d] / (1.0 - BETA2.powi(step as i32));
            u[d] += LR * m_hat / (v_hat.sqrt() + EPS);
            u[d] = u[d].clamp(lo[d], hi[d]);
        }
    }
    Ok(KernelParams::new((2.0 * best_u[0]).exp(), (2.0 * best_u[1]).exp()))
}

/// Exact GP posterior over a fixed training set.
#[derive(Clone, Debug)]
pub struct GpPosterior {
    ensemble: TreeEnsemble,
    params: KernelParams,
    activation: ActivationMatrix,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    stz: Standardization,
    jitter: f64,
}

impl GpPosterior {
    /// Build from explicitly standardized targets and their statistics.
    pub fn from_standardized(
        ens: &TreeEnsemble,
        params: KernelParams,
        xs: &[Point],
        y_std: &[f64],
        stz: Standardization,
    ) -> Result<GpPosterior> {
        if xs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if xs.len() != y_std.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: y_std.len() });
        }
        let activation = activation_matrix(ens, xs);
        let q = noisy_gram(&activation, &params);
        let (chol, jitter) = factor_with_jitter(&q, params.sigma0_sq)?;
        let y = DVector::from_column_slice(y_std);
        let alpha = chol.solve(&y);
        Ok(GpPosterior { ensemble: ens.clone(), params, activation, chol, alpha, stz, jitter })
    }

    pub fn ensemble(&self) -> &TreeEnsemble {
        &self.ensemble
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn activation(&self) -> &ActivationMatrix {
        &self.activation
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn standardization(&self) -> &Standardization {
        &self.stz
    }

    pub fn len(&self) -> usize {
        self.activation.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.activation.rows() == 0
    }

    /// Diagonal jitter that factorization required (usually zero).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular Cholesky factor of K + σy²I (+ jitter).
    pub fn chol_l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Explicit inverse of the noisy Gram (used by the acquisition stage).
    pub fn gram_inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Inverse of the noise-free Gram K, jittered as needed. K is often
    /// rank-deficient (rank is capped by the leaf count), so this can fail
    /// even after jitter escalation.
    pub fn gram_inverse_noise_free(&self) -> Result<DMatrix<f64>> {
        let m = self.activation.rows();
        let t = self.activation.n_trees();
        let mut k = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                k[(i, j)] = scale_count(
                    if i == j { t as u32 } else { self.activation.agreement(i, j) },
                    t,
                    self.params.sigma0_sq,
                );
            }
        }
        let (chol, _) = factor_with_jitter(&k, self.params.sigma0_sq)?;
        Ok(chol.inverse())
    }

    /// Noisy Gram matrix as factored (without jitter).
    pub fn noisy_gram(&self) -> DMatrix<f64> {
        noisy_gram(&self.activation, &self.params)
    }

    /// Cross-kernel vector between an active-leaf cell and the training set.
    pub fn kvec(&self, cell: &[u32]) -> DVector<f64> {
        let t = self.activation.n_trees();
        let counts = self.activation.agreement_counts(cell);
        DVector::from_iterator(
            counts.len(),
            counts.into_iter().map(|c| scale_count(c, t, self.params.sigma0_sq)),
        )
    }

    /// Posterior mean (standardized units) and variance at a point.
    pub fn mean_var_std(&self, x: &Point) -> (f64, f64) {
        let cell = self.ensemble.assign_cell(x);
        let k = self.kvec(&cell);
        let mu = k.dot(&self.alpha);
        let qk = self.chol.solve(&k);
        let var = (self.params.sigma0_sq - k.dot(&qk)).clamp(0.0, self.params.sigma0_sq);
        (mu, var)
    }

    /// Posterior mean in original target units, and variance (standardized
    /// units, clamped to [0, σ0²]).
    pub fn mean_var(&self, x: &Point) -> (f64, f64) {
        let (mu_std, var) = self.mean_var_std(x);
        (self.stz.invert(mu_std), var)
    }

    /// Text dump of the noisy Gram, one row per line.
    pub fn gram_to_text(&self) -> String {
        let q = self.noisy_gram();
        let mut out = String::new();
        for i in 0..q.nrows() {
            let row: Vec<String> = (0..q.ncols()).map(|j| format!("{}", q[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Text dump of alpha, one entry per line.
    pub fn alpha_to_text(&self) -> String {
        self.alpha.iter().map(|v| format!("{v}\n")).collect()
    }
}

/// Build the posterior from a raw dataset; targets are standardized
/// internally (degenerate spread falls back to unit scale).
pub fn build_posterior(
    ens: &TreeEnsemble,
    params: KernelParams,
    dataset: &Dataset,
) -> Result<GpPosterior> {
    let stz = Standardization::fit(&dataset.y);
    let y_std = stz.apply_all(&dataset.y);
    GpPosterior::from_standardized(ens, params, &dataset.x, &y_std, stz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::{train, GbdtConfig};
    use crate::space::{FeatureKind, FeatureSpace};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space1d() -> FeatureSpace {
        FeatureSpace::continuous(&[(0.0, 1.0)]).unwrap()
    }

    /// Ensemble of stump trees splitting feature 0 at the given thresholds.
    fn stump_ensemble(thresholds: &[f64]) -> TreeEnsemble {
        let mut lines = String::new();
        for (t, thr) in thresholds.iter().enumerate() {
            lines.push_str(&format!("tree {t} node 0 split 0 le {thr} left 1 right 2\n"));
            lines.push_str(&format!("tree {t} node 1 leaf 0 value -1\n"));
            lines.push_str(&format!("tree {t} node 2 leaf 1 value 1\n"));
        }
        TreeEnsemble::from_text(&lines, space1d()).unwrap()
    }

    fn random_instance(seed: u64, m: usize) -> (FeatureSpace, Vec<Point>, Vec<f64>, TreeEnsemble) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = FeatureSpace::new(vec![
            FeatureKind::Continuous { lb: 0.0, ub: 1.0 },
            FeatureKind::Continuous { lb: -1.0, ub: 1.0 },
        ])
        .unwrap();
        let xs: Vec<Point> = (0..m).map(|_| space.sample_uniform(&mut rng)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|p| (5.0 * p.get(0)).sin() + p.get(1) + rng.random_range(-0.1..0.1))
            .collect();
        let stz = Standardization::fit(&y);
        let y_std = stz.apply_all(&y);
        let data = Dataset::new(xs.clone(), y_std.clone()).unwrap();
        let cfg = GbdtConfig { num_boost_rounds: 8, ..GbdtConfig::default() };
        let ens = train(&data, &space, &cfg).unwrap();
        (space, xs, y_std, ens)
    }

    #[test]
    fn kernel_identical_inputs_is_signal_variance() {
        let (_, xs, _, ens) = random_instance(3, 12);
        for x in &xs {
            assert_eq!(kernel(&ens, 0.04, x, x), 0.04, "full agreement must give σ0² exactly");
        }
    }

    #[test]
    fn kernel_disjoint_leaves_is_zero() {
        let ens = stump_ensemble(&[0.5]);
        let k = kernel(&ens, 1.0, &Point::new(vec![0.2]), &Point::new(vec![0.7]));
        assert_eq!(k, 0.0);
    }

    #[test]
    fn kernel_counts_agreeing_trees() {
        // Trees split at 0.5, 0.5, 0.3; x=0.2 and x2=0.4 share a side of the
        // first two and straddle the third.
        let ens = stump_ensemble(&[0.5, 0.5, 0.3]);
        let k = kernel(&ens, 1.0, &Point::new(vec![0.2]), &Point::new(vec![0.4]));
        assert_eq!(k, 1.0 * (2.0 / 3.0));
    }

    #[test]
    fn kernel_symmetry_and_range() {
        let (space, _, _, ens) = random_instance(7, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let a = space.sample_uniform(&mut rng);
            let b = space.sample_uniform(&mut rng);
            let kab = kernel(&ens, 0.01, &a, &b);
            assert_eq!(kab, kernel(&ens, 0.01, &b, &a));
            assert!((0.0..=0.01).contains(&kab));
        }
    }

    #[test]
    fn activation_one_tree_two_points() {
        let ens = stump_ensemble(&[0.5]);
        let act = activation_matrix(&ens, &[Point::new(vec![0.2]), Point::new(vec![0.7])]);
        let dense = act.to_dense();
        assert_eq!(dense, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn activation_duplicate_rows_and_row_sums() {
        let (space, _, _, ens) = random_instance(9, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = space.sample_uniform(&mut rng);
        let act = activation_matrix(&ens, &[p.clone(), p.clone()]);
        assert_eq!(act.cell(0), act.cell(1));
        let dense = act.to_dense();
        for i in 0..dense.nrows() {
            assert_eq!(dense.row(i).sum(), ens.n_trees() as f64, "one active leaf per tree");
        }
    }

    #[test]
    fn gram_identity_is_exact() {
        let (_, xs, _, ens) = random_instance(11, 14);
        let act = activation_matrix(&ens, &xs);
        let a = act.to_dense();
        let aat = &a * a.transpose();
        let sigma0_sq = 0.0169;
        for i in 0..xs.len() {
            for j in 0..xs.len() {
                let via_a = scale_count(aat[(i, j)] as u32, ens.n_trees(), sigma0_sq);
                let direct = kernel(&ens, sigma0_sq, &xs[i], &xs[j]);
                assert_eq!(via_a.to_bits(), direct.to_bits(), "Gram identity at ({i},{j})");
            }
        }
    }

    #[test]
    fn lml_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..20 {
            let (_, xs, y, ens) = random_instance(100 + trial, 3 + (trial as usize % 6));
            let s0 = rng.random_range(-6.0..-2.0f64).exp();
            let sy = rng.random_range(-2.0..1.0f64).exp();
            let params = KernelParams::new(s0 * s0, sy * sy);
            let (_, grad) = lml_and_grad(&ens, &xs, &y, &params).unwrap();
            let h = 1e-5;
            for d in 0..2 {
                let at = |delta: f64| {
                    let (ls0, lsy) = (s0.ln(), sy.ln());
                    let (u0, u1) = if d == 0 { (ls0 + delta, lsy) } else { (ls0, lsy + delta) };
                    let p = KernelParams::new((2.0 * u0).exp(), (2.0 * u1).exp());
                    log_marginal_likelihood(&ens, &xs, &y, &p).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                assert!(
                    (grad[d] - fd).abs() <= 1e-4 * (fd.abs() + 1e-6),
                    "trial {trial} coord {d}: analytic {} vs fd {fd}",
                    grad[d]
                );
            }
        }
    }

    #[test]
    fn fit_single_zero_observation_reaches_small_corner() {
        // With one observation y=0 the likelihood is a zero-mean Gaussian, so
        // it strictly improves as total variance σ0²+σy² shrinks; the ascent
        // must end at the lower bound corner.
        let ens = stump_ensemble(&[0.5]);
        let bounds = KernelBounds::default();
        let params = fit_hyperparams(&ens, &[Point::new(vec![0.3])], &[0.0], &bounds).unwrap();
        assert_relative_eq!(params.sigma0(), bounds.sigma0.0, max_relative = 1e-9);
        assert_relative_eq!(params.sigma_y(), bounds.sigma_y.0, max_relative = 1e-9);
        let corner = KernelParams::new(bounds.sigma0.0.powi(2), bounds.sigma_y.0.powi(2));
        let expected = -0.5
            * (2.0 * std::f64::consts::PI * (corner.sigma0_sq + corner.sigma_y_sq)).ln();
        let got =
            log_marginal_likelihood(&ens, &[Point::new(vec![0.3])], &[0.0], &params).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-9);
    }

    #[test]
    fn fit_returns_params_within_bounds_and_no_worse_than_init() {
        let bounds = KernelBounds::default();
        for seed in 0..6 {
            let (_, xs, y, ens) = random_instance(200 + seed, 12);
            let params = fit_hyperparams(&ens, &xs, &y, &bounds).unwrap();
            assert!(params.within(&bounds), "fit left the bounds: {params:?}");
            let init = KernelParams::new(
                bounds.sigma0.0 * bounds.sigma0.1,
                bounds.sigma_y.0 * bounds.sigma_y.1,
            );
            let at_init = log_marginal_likelihood(&ens, &xs, &y, &init).unwrap();
            let at_fit = log_marginal_likelihood(&ens, &xs, &y, &params).unwrap();
            assert!(
                at_fit >= at_init - 1e-12,
                "fit ({at_fit}) scored below initialization ({at_init})"
            );
        }
    }

    #[test]
    fn posterior_single_point_alpha() {
        let ens = stump_ensemble(&[0.5]);
        let params = KernelParams::new(1.0, 1.0);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &[Point::new(vec![0.3])],
            &[1.0],
            Standardization { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        assert_relative_eq!(post.alpha()[0], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn posterior_disjoint_points_give_diagonal_factor() {
        let ens = stump_ensemble(&[0.5, 0.5]);
        let params = KernelParams::new(0.04, 0.01);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &[Point::new(vec![0.2]), Point::new(vec![0.8])],
            &[1.0, -1.0],
            Standardization { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let l = post.chol_l();
        assert_eq!(l[(1, 0)], 0.0, "disjoint leaves → diagonal Gram → diagonal factor");
    }

    #[test]
    fn factorization_reproduces_gram() {
        let (_, xs, y, ens) = random_instance(17, 16);
        let params = KernelParams::new(0.01, 0.0025);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &xs,
            &y,
            Standardization { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let l = post.chol_l();
        let rebuilt = &l * l.transpose();
        let q = post.noisy_gram();
        for i in 0..q.nrows() {
            for j in 0..q.ncols() {
                assert!(
                    (rebuilt[(i, j)] - q[(i, j)]).abs() <= 1e-10 * q[(i, i)].abs().max(1.0),
                    "chol·cholᵀ drifted at ({i},{j})"
                );
            }
        }
        let alpha = post.alpha();
        let resid = &q * alpha - DVector::from_column_slice(&y);
        assert!(resid.amax() <= 1e-8, "alpha residual {}", resid.amax());
    }

    #[test]
    fn mean_var_single_shared_point() {
        let ens = stump_ensemble(&[0.5]);
        let params = KernelParams::new(1.0, 1.0);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &[Point::new(vec![0.3])],
            &[1.0],
            Standardization { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let (mu, var) = post.mean_var(&Point::new(vec![0.4]));
        assert_relative_eq!(mu, 0.5, max_relative = 1e-12);
        assert_relative_eq!(var, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn mean_var_disjoint_point_is_prior() {
        let ens = stump_ensemble(&[0.5]);
        let params = KernelParams::new(0.09, 1.0);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &[Point::new(vec![0.3])],
            &[1.0],
            Standardization { mean: 2.0, std: 3.0 },
        )
        .unwrap();
        let (mu_std, var) = post.mean_var_std(&Point::new(vec![0.9]));
        assert_eq!(mu_std, 0.0);
        assert_eq!(var, 0.09, "no shared leaves → prior variance");
        let (mu, _) = post.mean_var(&Point::new(vec![0.9]));
        assert_eq!(mu, 2.0, "de-standardized prior mean is the target mean");
    }

    #[test]
    fn mean_var_matches_dense_reference() {
        let (space, xs, y, ens) = random_instance(19, 18);
        let params = KernelParams::new(0.02, 0.3);
        let stz = Standardization { mean: 0.4, std: 1.7 };
        let post = GpPosterior::from_standardized(&ens, params, &xs, &y, stz).unwrap();
        let q = post.noisy_gram();
        let qinv = q.try_inverse().expect("dense inverse");
        let yv = DVector::from_column_slice(&y);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = space.sample_uniform(&mut rng);
            let k = DVector::from_iterator(
                xs.len(),
                xs.iter().map(|xi| kernel(&ens, params.sigma0_sq, &x, xi)),
            );
            let mu_ref = stz.invert((k.transpose() * &qinv * &yv)[(0, 0)]);
            let var_ref = params.sigma0_sq - (k.transpose() * &qinv * &k)[(0, 0)];
            let (mu, var) = post.mean_var(&x);
            assert_relative_eq!(mu, mu_ref, epsilon = 1e-8);
            assert_relative_eq!(var, var_ref.clamp(0.0, params.sigma0_sq), epsilon = 1e-8);
        }
    }

    #[test]
    fn variance_stays_in_range() {
        let (space, xs, y, ens) = random_instance(23, 20);
        let params = KernelParams::new(0.01, 0.0025);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &xs,
            &y,
            Standardization { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let x = space.sample_uniform(&mut rng);
            let (_, var) = post.mean_var(&x);
            assert!((0.0..=params.sigma0_sq + 1e-12).contains(&var));
        }
    }

    #[test]
    fn gram_rank_bounded_by_leaf_count() {
        // One stump = 2 leaves total; with 10 training points the Gram has
        // rank ≤ 2, so singular values past the 2nd must vanish.
        let ens = stump_ensemble(&[0.5]);
        let xs: Vec<Point> = (0..10).map(|i| Point::new(vec![i as f64 / 9.0])).collect();
        let act = activation_matrix(&ens, &xs);
        let t = act.n_trees();
        let k = DMatrix::from_fn(10, 10, |i, j| {
            scale_count(if i == j { t as u32 } else { act.agreement(i, j) }, t, 1.0)
        });
        let svd = k.svd(false, false);
        let s = svd.singular_values;
        assert!(s[0] > 0.1);
        for i in ens.total_leaves()..10 {
            assert!(s[i] <= 1e-10 * s[0], "rank exceeded leaf count: σ_{i} = {}", s[i]);
        }
    }

    #[test]
    fn isolated_training_point_shrinkage() {
        // Both points are alone in their leaves in every tree, so the
        // posterior mean at each is exactly the scalar shrinkage
        // σ0²/(σ0²+σy²)·y.
        let ens = stump_ensemble(&[0.5, 0.5, 0.5]);
        for &(s0sq, sysq) in &[(1.0, 0.25), (0.04, 0.01), (0.01, 4.0)] {
            let post = GpPosterior::from_standardized(
                &ens,
                KernelParams::new(s0sq, sysq),
                &[Point::new(vec![0.2]), Point::new(vec![0.8])],
                &[1.0, -2.0],
                Standardization { mean: 0.0, std: 1.0 },
            )
            .unwrap();
            for (x, y) in [(0.2, 1.0f64), (0.8, -2.0)] {
                let (mu_std, _) = post.mean_var_std(&Point::new(vec![x]));
                let bound = sysq / (s0sq + sysq) * y.abs();
                assert!(
                    (mu_std - y).abs() <= bound + 1e-10,
                    "shrinkage bound violated: |{mu_std} - {y}| > {bound}"
                );
            }
        }
    }

    #[test]
    fn posterior_text_dumps_parse_back() {
        let (_, xs, y, ens) = random_instance(29, 6);
        let params = KernelParams::new(0.01, 0.25);
        let post = GpPosterior::from_standardized(
            &ens,
            params,
            &xs,
            &y,
            Standardization { mean: 0.0, std: 1.0 },
        )
        .unwrap();
        let gram = post.gram_to_text();
        let rows: Vec<Vec<f64>> = gram
            .lines()
            .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 6);
        let q = post.noisy_gram();
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), 6);
            for (j, v) in row.iter().enumerate() {
                assert_eq!(v.to_bits(), q[(i, j)].to_bits(), "gram dump not bit-exact");
            }
        }
        let alpha: Vec<f64> =
            post.alpha_to_text().lines().map(|l| l.parse().unwrap()).collect();
        assert_eq!(alpha.len(), 6);
        assert_eq!(alpha[0].to_bits(), post.alpha()[0].to_bits());
    }
}
