//! Shared helpers for the integration suites: random trained instances,
//! an active-set QP projection oracle, rank statistics, and the criterion
//! reporting format.

use leafgp::gbdt::{train, GbdtConfig};
use leafgp::space::{Dataset, FeatureKind, FeatureSpace, Point, PolyConstraint, Sense};
use leafgp::tkgp::{GpPosterior, KernelParams};
use leafgp::space::Standardization;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::time::Duration;

/// A trained surrogate plus the data it was fit on.
pub struct Instance {
    pub xs: Vec<Point>,
    pub y_std: Vec<f64>,
    pub post: GpPosterior,
}

/// Random mixed-kind space: always at least one continuous dimension, and
/// (when `mixed`) integer/categorical dimensions with positive probability.
pub fn random_space<R: Rng + ?Sized>(rng: &mut R, dims: std::ops::RangeInclusive<usize>, mixed: bool) -> FeatureSpace {
    let n = rng.random_range(dims);
    let kinds = (0..n)
        .map(|i| {
            let roll = if mixed && i > 0 { rng.random_range(0..4) } else { 0 };
            match roll {
                1 => FeatureKind::Integer { lb: 0, ub: rng.random_range(2..=6) },
                2 => {
                    let k = rng.random_range(2..=4);
                    FeatureKind::Categorical {
                        categories: (0..k).map(|c| format!("c{c}")).collect(),
                    }
                }
                _ => {
                    let lo = rng.random_range(-2.0..0.0);
                    let hi = lo + rng.random_range(0.5..3.0);
                    FeatureKind::Continuous { lb: lo, ub: hi }
                }
            }
        })
        .collect();
    FeatureSpace::new(kinds).expect("generated space is valid")
}

/// Train an ensemble on random data and wrap it in a posterior with random
/// (valid) kernel hyperparameters.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    dims: std::ops::RangeInclusive<usize>,
    max_m: usize,
    max_trees: usize,
    max_depth: usize,
    mixed: bool,
) -> Instance {
    let space = random_space(rng, dims, mixed);
    let m = rng.random_range(3..=max_m.max(3));
    let xs: Vec<Point> = (0..m).map(|_| space.sample_uniform(rng)).collect();
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let stz = Standardization::fit(&y);
    let y_std = stz.apply_all(&y);
    let cfg = GbdtConfig {
        max_depth: rng.random_range(1..=max_depth.max(1)),
        num_boost_rounds: rng.random_range(1..=max_trees.max(1)),
        ..GbdtConfig::default()
    };
    let data = Dataset::new(xs.clone(), y_std.clone()).expect("consistent dataset");
    let ens = train(&data, &space, &cfg).expect("training succeeds");
    let params = KernelParams::new(
        rng.random_range(0.001..0.04),
        rng.random_range(0.01..1.0),
    );
    let post = GpPosterior::from_standardized(&ens, params, &xs, &y_std, stz)
        .expect("posterior factorization succeeds");
    Instance { xs, y_std, post }
}

/// A random linear inequality cutting off `x_mid` (so projection has work
/// to do) while keeping part of the domain feasible.
pub fn cutting_constraint<R: Rng + ?Sized>(
    space: &FeatureSpace,
    x_mid: &Point,
    rng: &mut R,
) -> PolyConstraint {
    let numeric: Vec<usize> =
        (0..space.n()).filter(|&i| !space.feature(i).is_categorical()).collect();
    let coeffs: Vec<(usize, f64)> = numeric
        .iter()
        .map(|&i| (i, rng.random_range(-1.0f64..1.0)))
        .filter(|(_, a)| a.abs() > 0.05)
        .collect();
    let coeffs = if coeffs.is_empty() { vec![(numeric[0], 1.0)] } else { coeffs };
    let at_mid: f64 = coeffs.iter().map(|&(i, a)| a * x_mid.get(i)).sum();
    let delta = rng.random_range(0.05..0.5);
    // a·x ≤ a·x_mid − δ.
    PolyConstraint::linear(&coeffs, -(at_mid - delta), Sense::LeqZero).expect("valid constraint")
}

/// Exact projection oracle: minimize ‖x − x0‖² subject to `rows` (aᵀx ≤ b
/// or aᵀx = b) plus box bounds, by enumerating KKT active sets. Returns
/// the optimal squared distance, or None when infeasible.
pub struct OracleRow {
    pub a: Vec<f64>,
    pub b: f64,
    pub equality: bool,
}

pub fn qp_project(x0: &[f64], lo: &[f64], hi: &[f64], rows: &[OracleRow]) -> Option<f64> {
    let n = x0.len();
    // Uniform row list: user rows first, then box faces lo ≤ x (as −x ≤ −lo)
    // and x ≤ hi.
    let mut all: Vec<OracleRow> = Vec::new();
    for r in rows {
        all.push(OracleRow { a: r.a.clone(), b: r.b, equality: r.equality });
    }
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = -1.0;
        all.push(OracleRow { a, b: -lo[i], equality: false });
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        all.push(OracleRow { a, b: hi[i], equality: false });
    }
    let eq_idx: Vec<usize> = (0..all.len()).filter(|&i| all[i].equality).collect();
    let opt_idx: Vec<usize> = (0..all.len()).filter(|&i| !all[i].equality).collect();

    let feas_tol = 1e-9;
    let mut best: Option<f64> = None;
    let max_extra = n.saturating_sub(eq_idx.len());
    for subset in subsets_up_to(&opt_idx, max_extra) {
        let active: Vec<usize> = eq_idx.iter().chain(subset.iter()).copied().collect();
        let x = if active.is_empty() {
            DVector::from_column_slice(x0)
        } else {
            let k = active.len();
            let c = DMatrix::from_fn(k, n, |r, j| all[active[r]].a[j]);
            let d = DVector::from_fn(k, |r, _| all[active[r]].b);
            let x0v = DVector::from_column_slice(x0);
            let cct = &c * c.transpose();
            let Some(inv) = cct.try_inverse() else { continue };
            let nu = &inv * (&c * &x0v - &d);
            // Dual feasibility for the inequality rows in the active set.
            let mut dual_ok = true;
            for (r, &idx) in active.iter().enumerate() {
                if !all[idx].equality && nu[r] < -feas_tol {
                    dual_ok = false;
                    break;
                }
            }
            if !dual_ok {
                continue;
            }
            x0v - c.transpose() * nu
        };
        // Primal feasibility of every row.
        let feasible = all.iter().all(|row| {
            let v: f64 = row.a.iter().zip(x.iter()).map(|(a, xi)| a * xi).sum();
            if row.equality { (v - row.b).abs() <= feas_tol } else { v <= row.b + feas_tol }
        });
        if !feasible {
            continue;
        }
        let d2: f64 = x.iter().zip(x0).map(|(xi, x0i)| (xi - x0i) * (xi - x0i)).sum();
        if best.is_none_or(|b| d2 < b) {
            best = Some(d2);
        }
    }
    best
}

fn subsets_up_to(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    assert!(items.len() <= 20, "oracle subset enumeration kept small by design");
    let mut out = Vec::new();
    for mask in 0u32..(1 << items.len()) {
        if (mask.count_ones() as usize) <= max_size {
            out.push(
                items
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect(),
            );
        }
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Median of a non-empty slice (linear-interpolation definition).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Failure collector that keeps the report readable: the first dozen
/// messages verbatim, the rest as a count.
pub struct FailureLog {
    lines: Vec<String>,
    suppressed: usize,
}

impl FailureLog {
    pub fn new() -> FailureLog {
        FailureLog { lines: Vec::new(), suppressed: 0 }
    }

    pub fn push(&mut self, msg: String) {
        if self.lines.len() < 12 {
            self.lines.push(msg);
        } else {
            self.suppressed += 1;
        }
    }

    pub fn into_vec(mut self) -> Vec<String> {
        if self.suppressed > 0 {
            self.lines.push(format!("... and {} more failures", self.suppressed));
        }
        self.lines
    }
}

/// Print the one-line verdict for a criterion and panic on failure.
pub fn report(criterion: &str, elapsed: Duration, budget: Duration, failures: Vec<String>) {
    let within = elapsed <= budget;
    let ok = failures.is_empty() && within;
    println!(
        "ACCEPTANCE {criterion}: {} ({:.1} s, budget {:.0} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
    );
    for f in &failures {
        println!("  - {f}");
    }
    if !within {
        println!("  - exceeded runtime budget");
    }
    assert!(ok, "{criterion} failed");
}
