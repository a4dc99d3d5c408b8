//! Turning an optimal cell into a concrete query point.
//!
//! The acquisition is constant on a cell, so any interior point is an
//! equally good query; we take the box midpoint, resolving fractional
//! integer midpoints by a fair coin and drawing categorical coordinates
//! uniformly from the cell's subset. If the midpoint violates the
//! polynomial constraints it is projected: minimize the squared distance
//! to the midpoint over the cell box subject to g ≤ 0 and h = 0, via a
//! multi-start augmented-Lagrangian method with projected-gradient inner
//! steps and a Gauss–Newton feasibility polish for nearly tangent active
//! sets. Integer coordinates are relaxed during the minimization, then
//! rounded (nearest first, then the floor/ceiling cross product) and
//! re-verified.
//!
//! These functions operate on plain boxes; thin wrappers over solver
//! solutions live alongside the solver types.

use crate::error::{Error, Result};
use crate::space::{BoxDim, BoxRegion, ConstraintSet, FeatureSpace, Point};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A concrete next query: the point, whether projection had to move it,
/// and how far it moved (Euclidean, numeric coordinates).
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub x: Point,
    pub projected: bool,
    pub distance_moved: f64,
}

const MULTI_STARTS: usize = 20;
const OUTER_ROUNDS: usize = 12;
const INNER_ITERS: usize = 200;
const INNER_TOL: f64 = 1e-10;
const RHO_START: f64 = 10.0;
const RHO_GROWTH: f64 = 10.0;
const RHO_MAX: f64 = 1e12;
/// Gauss–Newton feasibility-polish iterations after a stalled outer loop.
const POLISH_ITERS: usize = 30;
/// Violation target as a fraction of the acceptance tolerance. Kept well
/// below 1 so accepted points sit essentially on the constraint surface
/// instead of anywhere in the tolerance band: a point that undercuts the
/// true projection by exploiting the band would distort distances by
/// O(tolerance), which callers comparing squared distances would see.
const POLISH_TARGET_FRACTION: f64 = 1e-3;
/// Integer dimensions an exhaustive floor/ceiling cross product covers.
const MAX_CROSS_DIMS: usize = 8;
/// Category combinations tried before giving up (constraints cannot touch
/// categorical features, so combinations beyond the first only matter if
/// that ever changes).
const MAX_CAT_COMBOS: usize = 64;

/// Center of a box: interval midpoints, fractional integer midpoints
/// resolved to floor or ceiling uniformly at random, categorical
/// coordinates drawn uniformly from the subset.
pub fn midpoint_in_box<R: Rng + ?Sized>(
    region: &BoxRegion,
    space: &FeatureSpace,
    rng: &mut R,
) -> Point {
    let mut coords = Vec::with_capacity(space.n());
    for (i, dim) in region.dims().iter().enumerate() {
        match dim {
            BoxDim::Cats(cats) => {
                coords.push(cats[rng.random_range(0..cats.len())] as f64);
            }
            BoxDim::Interval(iv) => {
                if space.feature(i).is_integer() {
                    let lo = iv.first_integer().expect("integer-empty box dimension");
                    let hi = iv.hi.floor() as i64;
                    let mid = iv.midpoint();
                    let v = if mid.fract() == 0.0 {
                        mid as i64
                    } else if rng.random_bool(0.5) {
                        mid.floor() as i64
                    } else {
                        mid.ceil() as i64
                    };
                    coords.push(v.clamp(lo, hi) as f64);
                } else {
                    coords.push(iv.midpoint());
                }
            }
        }
    }
    Point::new(coords)
}

/// Project a midpoint onto the constraint set inside its box. Already
/// feasible points are returned unchanged. The returned point is the best
/// (smallest squared distance, ties broken lexicographically) over the
/// multi-start budget; exhausting the budget without a feasible point is
/// the `ProjectionFailed` error.
pub fn project_in_box<R: Rng + ?Sized>(
    x_mid: &Point,
    region: &BoxRegion,
    space: &FeatureSpace,
    constraints: &ConstraintSet,
    rng: &mut R,
) -> Result<Proposal> {
    project_impl(x_mid, region, space, constraints, rng, false)
}

/// Midpoint of a solver solution's box. Panics when the solution is
/// infeasible (it has no box).
pub fn midpoint<R: Rng + ?Sized>(
    sol: &crate::solver::BoxSolution,
    space: &FeatureSpace,
    rng: &mut R,
) -> Point {
    midpoint_in_box(sol.region(), space, rng)
}

/// Project a point into the feasible part of a solver solution's box.
pub fn project<R: Rng + ?Sized>(
    x_mid: &Point,
    sol: &crate::solver::BoxSolution,
    space: &FeatureSpace,
    constraints: &ConstraintSet,
    rng: &mut R,
) -> Result<Proposal> {
    project_in_box(x_mid, sol.region(), space, constraints, rng)
}

/// Existence-only variant for cell certification: identical search, but
/// the first feasible point short-circuits the remaining starts. Succeeds
/// exactly when [`project_in_box`] would.
pub fn find_feasible_in_box<R: Rng + ?Sized>(
    region: &BoxRegion,
    space: &FeatureSpace,
    constraints: &ConstraintSet,
    rng: &mut R,
) -> Option<Point> {
    let mid = midpoint_in_box(region, space, rng);
    project_impl(&mid, region, space, constraints, rng, true).ok().map(|p| p.x)
}

fn project_impl<R: Rng + ?Sized>(
    x_mid: &Point,
    region: &BoxRegion,
    space: &FeatureSpace,
    constraints: &ConstraintSet,
    rng: &mut R,
    first_hit: bool,
) -> Result<Proposal> {
    debug_assert!(region.contains(x_mid), "midpoint must lie inside its box");
    if constraints.is_feasible(x_mid) {
        return Ok(Proposal { x: x_mid.clone(), projected: false, distance_moved: 0.0 });
    }

    let cat_dims: Vec<usize> =
        (0..space.n()).filter(|&i| space.feature(i).is_categorical()).collect();
    let combos = category_combos(x_mid, region, &cat_dims, rng);
    for combo in combos {
        let mut base = x_mid.clone();
        for (&d, &c) in cat_dims.iter().zip(&combo) {
            base.coords_mut()[d] = c as f64;
        }
        if let Some((x, dist_sq)) =
            project_numeric(&base, x_mid, region, space, constraints, rng, first_hit)
        {
            return Ok(Proposal { x, projected: true, distance_moved: dist_sq.sqrt() });
        }
    }
    Err(Error::ProjectionFailed)
}

/// Category assignments to attempt: the midpoint's own draw first, then
/// the remaining combinations of the box subsets in random order.
fn category_combos<R: Rng + ?Sized>(
    x_mid: &Point,
    region: &BoxRegion,
    cat_dims: &[usize],
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let first: Vec<usize> = cat_dims.iter().map(|&d| x_mid.get(d) as usize).collect();
    let mut combos = vec![first.clone()];
    if cat_dims.is_empty() {
        return combos;
    }
    let mut rest: Vec<Vec<usize>> = vec![Vec::new()];
    for &d in cat_dims {
        let cats = region.cats(d);
        rest = rest
            .iter()
            .flat_map(|prefix| {
                cats.iter().map(move |&c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .take(MAX_CAT_COMBOS)
            .collect();
    }
    rest.retain(|c| *c != first);
    // Uniform random order for the retries.
    for i in (1..rest.len()).rev() {
        rest.swap(i, rng.random_range(0..=i));
    }
    combos.extend(rest.into_iter().take(MAX_CAT_COMBOS - 1));
    combos
}

/// The numeric subproblem under fixed categories. `base` carries the fixed
/// categorical coordinates; distances are measured against `x_mid`.
fn project_numeric<R: Rng + ?Sized>(
    base: &Point,
    x_mid: &Point,
    region: &BoxRegion,
    space: &FeatureSpace,
    constraints: &ConstraintSet,
    rng: &mut R,
    first_hit: bool,
) -> Option<(Point, f64)> {
    let prob = AlProblem::new(base, region, space, constraints);
    if prob.numeric.is_empty() {
        return constraints.is_feasible(base).then(|| (base.clone(), 0.0));
    }
    let mut best: Option<(Point, f64)> = None;
    for start_idx in 0..MULTI_STARTS {
        let mut x = if start_idx == 0 {
            base.clone()
        } else {
            let mut s = region.sample_uniform(space, rng);
            for &d in &prob.cat_fixed {
                s.coords_mut()[d] = base.get(d);
            }
            s
        };
        prob.clamp(&mut x);
        prob.solve_from(&mut x);
        for cand in prob.integer_candidates(&x, constraints) {
            let d = dist_sq_numeric(&cand, x_mid, &prob.numeric);
            let better = match &best {
                None => true,
                Some((bx, bd)) => {
                    d < bd - 1e-15
                        || ((d - bd).abs() <= 1e-15
                            && cand.lex_cmp(bx) == std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some((cand, d));
            }
        }
        if first_hit && best.is_some() {
            break;
        }
    }
    best
}

fn dist_sq_numeric(a: &Point, b: &Point, numeric: &[usize]) -> f64 {
    numeric.iter().map(|&i| (a.get(i) - b.get(i)) * (a.get(i) - b.get(i))).sum()
}

/// Augmented-Lagrangian machinery for one fixed-category subproblem.
struct AlProblem<'a> {
    numeric: Vec<usize>,
    integer: Vec<usize>,
    cat_fixed: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    target: Vec<f64>,
    constraints: &'a ConstraintSet,
    grad_buf: std::cell::RefCell<Vec<f64>>,
}

impl<'a> AlProblem<'a> {
    fn new(
        base: &Point,
        region: &BoxRegion,
        space: &FeatureSpace,
        constraints: &'a ConstraintSet,
    ) -> AlProblem<'a> {
        let mut numeric = Vec::new();
        let mut integer = Vec::new();
        let mut cat_fixed = Vec::new();
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let mut target = Vec::new();
        for (i, dim) in region.dims().iter().enumerate() {
            match dim {
                BoxDim::Cats(_) => cat_fixed.push(i),
                BoxDim::Interval(iv) => {
                    numeric.push(i);
                    target.push(base.get(i));
                    if space.feature(i).is_integer() {
                        integer.push(i);
                        lo.push(iv.first_integer().expect("integer-empty box dimension") as f64);
                        hi.push(iv.hi.floor());
                    } else if iv.lo_open {
                        // The cell excludes its lower edge; shave a sliver
                        // so clamped iterates stay inside.
                        let nudge = (1e-9 * (1.0 + iv.lo.abs())).min(0.5 * (iv.hi - iv.lo));
                        lo.push(iv.lo + nudge);
                        hi.push(iv.hi);
                    } else {
                        lo.push(iv.lo);
                        hi.push(iv.hi);
                    }
                }
            }
        }
        let n = space.n();
        AlProblem {
            numeric,
            integer,
            cat_fixed,
            lo,
            hi,
            target,
            constraints,
            grad_buf: std::cell::RefCell::new(vec![0.0; n]),
        }
    }

    fn clamp(&self, x: &mut Point) {
        for (j, &i) in self.numeric.iter().enumerate() {
            let c = x.get(i).clamp(self.lo[j], self.hi[j]);
            x.coords_mut()[i] = c;
        }
    }

    fn al_value(&self, x: &Point, lambda: &[f64], mu: &[f64], rho: f64) -> f64 {
        let mut v = 0.0;
        for (j, &i) in self.numeric.iter().enumerate() {
            let d = x.get(i) - self.target[j];
            v += d * d;
        }
        for (l, h) in lambda.iter().zip(&self.constraints.equalities) {
            let hv = h.eval(x);
            v += l * hv + 0.5 * rho * hv * hv;
        }
        for (m, g) in mu.iter().zip(&self.constraints.inequalities) {
            let s = (m / rho + g.eval(x)).max(0.0);
            v += 0.5 * rho * s * s;
        }
        v
    }

    fn al_grad(&self, x: &Point, lambda: &[f64], mu: &[f64], rho: f64, out: &mut [f64]) {
        out.fill(0.0);
        for (j, &i) in self.numeric.iter().enumerate() {
            out[j] = 2.0 * (x.get(i) - self.target[j]);
        }
        let mut buf = self.grad_buf.borrow_mut();
        for (l, h) in lambda.iter().zip(&self.constraints.equalities) {
            let w = l + rho * h.eval(x);
            h.gradient(x, &mut buf);
            for (j, &i) in self.numeric.iter().enumerate() {
                out[j] += w * buf[i];
            }
        }
        for (m, g) in mu.iter().zip(&self.constraints.inequalities) {
            let s = (m / rho + g.eval(x)).max(0.0);
            if s > 0.0 {
                g.gradient(x, &mut buf);
                for (j, &i) in self.numeric.iter().enumerate() {
                    out[j] += rho * s * buf[i];
                }
            }
        }
    }

    /// Full augmented-Lagrangian loop from one start (relaxed integers).
    fn solve_from(&self, x: &mut Point) {
        let n_eq = self.constraints.equalities.len();
        let n_in = self.constraints.inequalities.len();
        let mut lambda = vec![0.0; n_eq];
        let mut mu = vec![0.0; n_in];
        let mut rho = RHO_START;
        let mut prev_viol = f64::INFINITY;
        for _ in 0..OUTER_ROUNDS {
            self.minimize_inner(x, &lambda, &mu, rho);
            let viol = self.constraints.max_violation(x);
            if viol <= POLISH_TARGET_FRACTION * self.constraints.eq_tolerance {
                return;
            }
            for (l, h) in lambda.iter_mut().zip(&self.constraints.equalities) {
                *l += rho * h.eval(x);
            }
            for (m, g) in mu.iter_mut().zip(&self.constraints.inequalities) {
                *m = (*m + rho * g.eval(x)).max(0.0);
            }
            if viol > 0.25 * prev_viol {
                rho = (rho * RHO_GROWTH).min(RHO_MAX);
            }
            prev_viol = viol;
        }
        self.polish(x);
    }

    /// Damped Gauss–Newton on the violated constraint residuals. The
    /// first-order loop stalls when the active surfaces are nearly
    /// tangent (anti-parallel gradients make the penalty Hessian
    /// arbitrarily ill-conditioned); the least-squares Newton step is
    /// immune to that and closes the final gap quadratically. Steps must
    /// strictly reduce the true violation, so the polish can only help.
    fn polish(&self, x: &mut Point) {
        let nd = self.numeric.len();
        for _ in 0..POLISH_ITERS {
            let viol = self.constraints.max_violation(x);
            if viol <= POLISH_TARGET_FRACTION * self.constraints.eq_tolerance {
                return;
            }
            let mut jac_rows: Vec<Vec<f64>> = Vec::new();
            let mut res: Vec<f64> = Vec::new();
            {
                let mut buf = self.grad_buf.borrow_mut();
                for h in &self.constraints.equalities {
                    res.push(h.eval(x));
                    h.gradient(x, &mut buf);
                    jac_rows.push(self.numeric.iter().map(|&i| buf[i]).collect());
                }
                for g in &self.constraints.inequalities {
                    let gv = g.eval(x);
                    if gv > 0.0 {
                        res.push(gv);
                        g.gradient(x, &mut buf);
                        jac_rows.push(self.numeric.iter().map(|&i| buf[i]).collect());
                    }
                }
            }
            if res.is_empty() {
                return;
            }
            let m = res.len();
            let jac = DMatrix::from_fn(m, nd, |r, c| jac_rows[r][c]);
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * DVector::from_vec(res);
            let ridge = 1e-12 * (1.0 + jtj.trace() / nd as f64);
            let lhs = jtj + DMatrix::identity(nd, nd) * ridge;
            let Some(chol) = lhs.cholesky() else { return };
            let delta = chol.solve(&jtr);
            let mut s = 1.0;
            let mut improved = false;
            while s >= 1e-6 {
                let mut cand = x.clone();
                for (j, &i) in self.numeric.iter().enumerate() {
                    let v = (x.get(i) - s * delta[j]).clamp(self.lo[j], self.hi[j]);
                    cand.coords_mut()[i] = v;
                }
                if self.constraints.max_violation(&cand) < viol {
                    *x = cand;
                    improved = true;
                    break;
                }
                s *= 0.5;
            }
            if !improved {
                return;
            }
        }
    }

    /// Projected-gradient descent with backtracking on the AL objective.
    fn minimize_inner(&self, x: &mut Point, lambda: &[f64], mu: &[f64], rho: f64) {
        let nd = self.numeric.len();
        let mut grad = vec![0.0; nd];
        let mut t = 1.0;
        let mut value = self.al_value(x, lambda, mu, rho);
        for _ in 0..INNER_ITERS {
            self.al_grad(x, lambda, mu, rho, &mut grad);
            let mut accepted = false;
            while t >= 1e-18 {
                let mut cand = x.clone();
                let mut step_sq = 0.0;
                for (j, &i) in self.numeric.iter().enumerate() {
                    let v = (x.get(i) - t * grad[j]).clamp(self.lo[j], self.hi[j]);
                    let d = v - x.get(i);
                    step_sq += d * d;
                    cand.coords_mut()[i] = v;
                }
                if step_sq == 0.0 {
                    return; // stationary on the box
                }
                let cand_value = self.al_value(&cand, lambda, mu, rho);
                if cand_value <= value - 1e-4 * step_sq / t {
                    let small = step_sq.sqrt() <= INNER_TOL * (1.0 + norm_inf(x, &self.numeric));
                    *x = cand;
                    value = cand_value;
                    accepted = true;
                    if small {
                        return;
                    }
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return; // line search collapsed
            }
            t = (t * 1.5).min(1e6);
        }
    }

    /// Round the relaxed solution's integer coordinates: nearest integer
    /// in the box first, then the floor/ceiling cross product, keeping
    /// feasible candidates only.
    fn integer_candidates(&self, x: &Point, constraints: &ConstraintSet) -> Vec<Point> {
        if self.integer.is_empty() {
            return if constraints.is_feasible(x) { vec![x.clone()] } else { vec![] };
        }
        let bound = |i: usize| {
            let j = self.numeric.iter().position(|&d| d == i).unwrap();
            (self.lo[j], self.hi[j])
        };
        let mut nearest = x.clone();
        for &i in &self.integer {
            let (lo, hi) = bound(i);
            nearest.coords_mut()[i] = x.get(i).round().clamp(lo, hi);
        }
        if constraints.is_feasible(&nearest) {
            return vec![nearest];
        }
        if self.integer.len() > MAX_CROSS_DIMS {
            return vec![];
        }
        // Floor/ceiling cross product over the integer coordinates.
        let per_dim: Vec<Vec<f64>> = self
            .integer
            .iter()
            .map(|&i| {
                let (lo, hi) = bound(i);
                let mut opts = vec![x.get(i).floor().clamp(lo, hi), x.get(i).ceil().clamp(lo, hi)];
                opts.dedup();
                opts
            })
            .collect();
        let mut combos: Vec<Vec<f64>> = vec![Vec::new()];
        for opts in &per_dim {
            combos = combos
                .iter()
                .flat_map(|prefix| {
                    opts.iter().map(move |&v| {
                        let mut c = prefix.clone();
                        c.push(v);
                        c
                    })
                })
                .collect();
        }
        let mut out = Vec::new();
        for combo in combos {
            let mut cand = x.clone();
            for (&i, &v) in self.integer.iter().zip(&combo) {
                cand.coords_mut()[i] = v;
            }
            if constraints.is_feasible(&cand) {
                out.push(cand);
            }
        }
        out
    }
}

fn norm_inf(x: &Point, dims: &[usize]) -> f64 {
    dims.iter().map(|&i| x.get(i).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{FeatureKind, Interval, PolyConstraint, Sense};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_square() -> (FeatureSpace, BoxRegion) {
        let space = FeatureSpace::continuous(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        let region = BoxRegion::full_domain(&space);
        (space, region)
    }

    fn leq(terms: &[(usize, f64)], constant: f64) -> PolyConstraint {
        PolyConstraint::linear(terms, constant, Sense::LeqZero).unwrap()
    }

    #[test]
    fn midpoint_continuous_interval() {
        let space = FeatureSpace::continuous(&[(0.0, 1.0)]).unwrap();
        let region = BoxRegion::new(vec![BoxDim::Interval(Interval::closed(0.2, 0.6))]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(midpoint_in_box(&region, &space, &mut rng).get(0), 0.4);
    }

    #[test]
    fn midpoint_integer_fair_coin() {
        let space = FeatureSpace::new(vec![FeatureKind::Integer { lb: 0, ub: 10 }]).unwrap();
        let region = BoxRegion::new(vec![BoxDim::Interval(Interval::closed(1.0, 4.0))]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut seen = [0usize; 2];
        for _ in 0..2000 {
            let v = midpoint_in_box(&region, &space, &mut rng).get(0);
            assert!(v == 2.0 || v == 3.0, "midpoint of [1,4] must round to 2 or 3, got {v}");
            seen[(v as usize) - 2] += 1;
        }
        for count in seen {
            assert!((800..=1200).contains(&count), "floor/ceiling draw far from fair: {seen:?}");
        }
    }

    #[test]
    fn midpoint_integer_exact_center() {
        let space = FeatureSpace::new(vec![FeatureKind::Integer { lb: 0, ub: 10 }]).unwrap();
        let region = BoxRegion::new(vec![BoxDim::Interval(Interval::closed(2.0, 6.0))]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(midpoint_in_box(&region, &space, &mut rng).get(0), 4.0);
        }
    }

    #[test]
    fn midpoint_categorical_uniform_over_subset() {
        let space = FeatureSpace::new(vec![FeatureKind::Categorical {
            categories: vec!["a".into(), "b".into(), "c".into()],
        }])
        .unwrap();
        let region = BoxRegion::new(vec![BoxDim::Cats(vec![0, 2])]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut seen = [0usize; 3];
        for _ in 0..3000 {
            let v = midpoint_in_box(&region, &space, &mut rng).get(0) as usize;
            seen[v] += 1;
        }
        assert_eq!(seen[1], 0, "category b is outside the subset");
        assert!((1200..=1800).contains(&seen[0]) && (1200..=1800).contains(&seen[2]), "{seen:?}");
    }

    #[test]
    fn feasible_midpoint_returned_unchanged() {
        let (space, region) = unit_square();
        let cs = ConstraintSet::new(vec![leq(&[(0, 1.0), (1, 1.0)], -1.0)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Point::new(vec![0.3, 0.3]);
        let p = project_in_box(&x, &region, &space, &cs, &mut rng).unwrap();
        assert_eq!(p.x, x);
        assert!(!p.projected);
        assert_eq!(p.distance_moved, 0.0);
    }

    #[test]
    fn halfspace_projection_closed_form() {
        // min ‖x − (0.8, 0.8)‖² s.t. x0 + x1 ≤ 1 in [0,1]² → (0.5, 0.5).
        let (space, region) = unit_square();
        let cs = ConstraintSet::new(vec![leq(&[(0, 1.0), (1, 1.0)], -1.0)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = project_in_box(&Point::new(vec![0.8, 0.8]), &region, &space, &cs, &mut rng)
            .unwrap();
        assert!(p.projected);
        assert_relative_eq!(p.x.get(0), 0.5, epsilon = 1e-6);
        assert_relative_eq!(p.x.get(1), 0.5, epsilon = 1e-6);
        assert_relative_eq!(p.distance_moved, 0.18f64.sqrt(), epsilon = 1e-6);
        assert!(cs.is_feasible(&p.x));
    }

    #[test]
    fn empty_feasible_set_fails() {
        // x0 = 0.25 has no solution when the box caps x0 at 0.2.
        let space = FeatureSpace::continuous(&[(0.0, 0.2)]).unwrap();
        let region = BoxRegion::full_domain(&space);
        let h = PolyConstraint::linear(&[(0, 1.0)], -0.25, Sense::EqZero).unwrap();
        let cs = ConstraintSet::new(vec![], vec![h]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = project_in_box(&Point::new(vec![0.1]), &region, &space, &cs, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::ProjectionFailed));
    }

    #[test]
    fn equality_projection_on_a_line() {
        // Project (0.9, 0.1) onto x0 − x1 = 0 inside [0,1]² → (0.5, 0.5).
        let (space, region) = unit_square();
        let h = PolyConstraint::linear(&[(0, 1.0), (1, -1.0)], 0.0, Sense::EqZero).unwrap();
        let cs = ConstraintSet::new(vec![], vec![h]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = project_in_box(&Point::new(vec![0.9, 0.1]), &region, &space, &cs, &mut rng)
            .unwrap();
        assert_relative_eq!(p.x.get(0), 0.5, epsilon = 1e-6);
        assert_relative_eq!(p.x.get(1), 0.5, epsilon = 1e-6);
        assert!(cs.max_violation(&p.x) <= 1e-6);
    }

    #[test]
    fn quadratic_equality_projection() {
        // Project onto the circle x0² + x1² = 1 from inside.
        let space = FeatureSpace::continuous(&[(-2.0, 2.0), (-2.0, 2.0)]).unwrap();
        let region = BoxRegion::full_domain(&space);
        let h = PolyConstraint::new(
            vec![(1.0, vec![(0, 2)]), (1.0, vec![(1, 2)]), (-1.0, vec![])],
            Sense::EqZero,
        )
        .unwrap();
        let cs = ConstraintSet::new(vec![], vec![h]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0 = Point::new(vec![0.3, 0.4]);
        let p = project_in_box(&x0, &region, &space, &cs, &mut rng).unwrap();
        // Nearest point on the circle from (0.3, 0.4) is (0.6, 0.8).
        assert_relative_eq!(p.x.get(0), 0.6, epsilon = 1e-5);
        assert_relative_eq!(p.x.get(1), 0.8, epsilon = 1e-5);
        assert_relative_eq!(p.distance_moved, 0.5, epsilon = 1e-5);
    }

    #[test]
    fn integer_rounding_crosses_to_feasibility() {
        // Relaxed optimum is x0 = 2.3; nearest integer 2 is infeasible, so
        // the ceiling 3 must be returned.
        let space = FeatureSpace::new(vec![FeatureKind::Integer { lb: 0, ub: 10 }]).unwrap();
        let region = BoxRegion::full_domain(&space);
        let cs = ConstraintSet::new(vec![leq(&[(0, -1.0)], 2.3)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = project_in_box(&Point::new(vec![1.0]), &region, &space, &cs, &mut rng).unwrap();
        assert_eq!(p.x.get(0), 3.0);
        assert!(cs.is_feasible(&p.x));
        assert_relative_eq!(p.distance_moved, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn projection_is_idempotent() {
        let (space, region) = unit_square();
        let cs = ConstraintSet::new(vec![leq(&[(0, 1.0), (1, 1.0)], -1.0)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p1 = project_in_box(&Point::new(vec![0.9, 0.9]), &region, &space, &cs, &mut rng)
            .unwrap();
        let p2 = project_in_box(&p1.x, &region, &space, &cs, &mut rng).unwrap();
        assert_eq!(p2.x, p1.x, "projecting a projection must be a no-op");
        assert!(!p2.projected);
    }

    #[test]
    fn output_respects_box_bounds() {
        let space = FeatureSpace::continuous(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..30 {
            let lo = 0.3 * (trial as f64 % 3.0) / 3.0;
            let region = BoxRegion::new(vec![
                BoxDim::Interval(Interval { lo, hi: lo + 0.4, lo_open: trial % 2 == 0 }),
                BoxDim::Interval(Interval::closed(0.1, 0.9)),
                BoxDim::Interval(Interval::closed(0.0, 1.0)),
            ]);
            let cs = ConstraintSet::new(
                vec![leq(&[(0, 1.0), (1, 1.0), (2, 1.0)], -0.9)],
                vec![],
            );
            let mid = midpoint_in_box(&region, &space, &mut rng);
            match project_in_box(&mid, &region, &space, &cs, &mut rng) {
                Ok(p) => {
                    assert!(region.contains(&p.x), "projection escaped the box: {:?}", p.x);
                    assert!(cs.is_feasible(&p.x));
                }
                Err(Error::ProjectionFailed) => {
                    // Legitimate when the slice misses the feasible set.
                }
                Err(e) => panic!("unexpected error {e}"),
            }
        }
    }

    #[test]
    fn find_feasible_matches_project_verdict() {
        let (space, region) = unit_square();
        let feasible_cs = ConstraintSet::new(vec![leq(&[(0, 1.0), (1, 1.0)], -1.9)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let found = find_feasible_in_box(&region, &space, &feasible_cs, &mut rng);
        assert!(found.is_some());
        assert!(feasible_cs.is_feasible(&found.unwrap()));

        let h = PolyConstraint::linear(&[(0, 1.0)], -3.0, Sense::EqZero).unwrap();
        let impossible = ConstraintSet::new(vec![], vec![h]);
        assert!(find_feasible_in_box(&region, &space, &impossible, &mut rng).is_none());
    }

    #[test]
    fn thin_crescent_between_near_tangent_circles() {
        // Feasible set: outside the circle of radius 10 at (5,5) and
        // inside the circle of radius 9.1 at (6,5) — a sliver whose cusp
        // has nearly anti-parallel constraint gradients. First-order
        // descent stalls there; the polish must reach feasibility.
        let space = FeatureSpace::continuous(&[(13.0, 100.0), (0.0, 100.0)]).unwrap();
        let region = BoxRegion::full_domain(&space);
        let outside = PolyConstraint::new(
            vec![
                (100.0, vec![]),
                (-1.0, vec![(0, 2)]),
                (10.0, vec![(0, 1)]),
                (-25.0, vec![]),
                (-1.0, vec![(1, 2)]),
                (10.0, vec![(1, 1)]),
                (-25.0, vec![]),
            ],
            Sense::LeqZero,
        )
        .unwrap();
        let inside = PolyConstraint::new(
            vec![
                (1.0, vec![(0, 2)]),
                (-12.0, vec![(0, 1)]),
                (36.0, vec![]),
                (1.0, vec![(1, 2)]),
                (-10.0, vec![(1, 1)]),
                (25.0, vec![]),
                (-82.81, vec![]),
            ],
            Sense::LeqZero,
        )
        .unwrap();
        let cs = ConstraintSet::new(vec![outside, inside], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..5 {
            let x = find_feasible_in_box(&region, &space, &cs, &mut rng)
                .expect("crescent projection must succeed");
            assert!(cs.max_violation(&x) <= 1e-6, "viol {}", cs.max_violation(&x));
        }
    }

    #[test]
    fn category_retry_reaches_other_combo() {
        // Constraints cannot reference categoricals, so the first combo
        // always decides; this exercises the retry plumbing shape only.
        let space = FeatureSpace::new(vec![
            FeatureKind::Continuous { lb: 0.0, ub: 1.0 },
            FeatureKind::Categorical { categories: vec!["a".into(), "b".into()] },
        ])
        .unwrap();
        let region = BoxRegion::full_domain(&space);
        let cs = ConstraintSet::new(vec![leq(&[(0, 1.0)], -0.2)], vec![]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mid = Point::new(vec![0.9, 1.0]);
        let p = project_in_box(&mid, &region, &space, &cs, &mut rng).unwrap();
        assert_relative_eq!(p.x.get(0), 0.2, epsilon = 1e-6);
        assert_eq!(p.x.get(1), 1.0, "category stays at the sampled draw");
    }
}
