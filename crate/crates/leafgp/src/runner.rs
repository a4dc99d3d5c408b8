//! The Bayesian-optimization driver and its baselines: the full
//! tree-kernel pipeline with globally solved acquisitions, a variant that
//! replaces the solver with random acquisition sampling, a feasible-random
//! search baseline, optional quadratic penalty wrapping for
//! constraint-unaware ablations, run configs, history logging, and
//! seeded multi-run aggregation.

use crate::acq::encode;
use crate::bench::{self, BenchmarkProblem};
use crate::error::{Error, Result};
use crate::gbdt::{train, GbdtConfig};
use crate::propose;
use crate::solver::{solve_excluding, SolveOptions, SolveStatus};
use crate::space::{
    BoxRegion, ConstraintSet, Dataset, FeatureSpace, Point, Standardization,
};
use crate::tkgp::{fit_hyperparams, GpPosterior, KernelBounds};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

/// Uniform draws per initial point before initialization gives up.
const INIT_ATTEMPTS: usize = 1_000;
/// Cells excluded per iteration before the driver aborts.
const MAX_EXCLUSIONS: usize = 10;
/// Acquisition samples for the random-acquisition variant.
pub const RND_ACQ_SAMPLES: usize = 2_000;

/// Which proposal mechanism drives the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Surrogate + branch-and-bound acquisition solve (the full method).
    LeafGp,
    /// Surrogate + random acquisition sampling.
    LeafGpRnd,
    /// No surrogate: random draws projected to feasibility.
    FeasRandom,
}

impl Default for Algorithm {
    fn default() -> Self {
        Algorithm::LeafGp
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::LeafGp => "leaf-gp",
            Algorithm::LeafGpRnd => "leaf-gp-rnd",
            Algorithm::FeasRandom => "feas-random",
        })
    }
}

/// One experiment: a benchmark, a seed, and every knob of the pipeline.
/// Unknown keys in the config file are rejected.
#[derive(Clone, Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: String,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub gbdt: GbdtConfig,
    #[serde(default)]
    pub kernel_bounds: KernelBounds,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub algorithm: Algorithm,
    /// When set, constraints are moved into the objective as a quadratic
    /// penalty and the acquisition runs constraint-free (ablation mode).
    #[serde(default)]
    pub penalty_lambda: Option<f64>,
}

fn default_n_init() -> usize {
    5
}
fn default_n_iter() -> usize {
    60
}
fn default_seed() -> u64 {
    101
}
fn default_kappa() -> f64 {
    1.96
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        bench::get(&self.benchmark)?;
        if self.n_init < 2 {
            return Err(Error::InvalidConfig(
                "n_init must be at least 2 (training needs twice min_data_in_leaf)".into(),
            ));
        }
        if self.n_iter < 1 {
            return Err(Error::InvalidConfig("n_iter must be at least 1".into()));
        }
        if !(self.kappa >= 0.0) {
            return Err(Error::InvalidConfig("kappa must be nonnegative".into()));
        }
        if let Some(l) = self.penalty_lambda {
            if !(l > 0.0) {
                return Err(Error::InvalidConfig("penalty_lambda must be positive".into()));
            }
        }
        let kb = &self.kernel_bounds;
        if !(kb.sigma0.0 > 0.0 && kb.sigma0.0 <= kb.sigma0.1)
            || !(kb.sigma_y.0 > 0.0 && kb.sigma_y.0 <= kb.sigma_y.1)
        {
            return Err(Error::InvalidConfig("kernel bounds must be positive and ordered".into()));
        }
        self.gbdt.validate()?;
        self.solver.validate()?;
        Ok(())
    }
}

/// One evaluated proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub x: Point,
    pub objective: f64,
    pub feasible: bool,
    pub best_feasible: f64,
    pub status: String,
    pub gap: f64,
    pub solve_ms: f64,
}

/// A full run: the best initial objective (initial points are feasible by
/// construction) and one row per BO iteration. `best_feasible` is
/// non-decreasing and tracks feasible evaluations only.
#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub seed: u64,
    pub n_dims: usize,
    pub initial_best: f64,
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn best_final(&self) -> f64 {
        self.rows.last().map_or(self.initial_best, |r| r.best_feasible)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,iter");
        for i in 0..self.n_dims {
            s.push_str(&format!(",x_{i}"));
        }
        s.push_str(",objective,feasible,best_feasible,status,gap,solve_ms\n");
        for r in &self.rows {
            s.push_str(&format!("{},{}", self.seed, r.iter));
            for c in r.x.coords() {
                s.push_str(&format!(",{c}"));
            }
            s.push_str(&format!(
                ",{},{},{},{},{},{:.3}\n",
                r.objective, r.feasible as u8, r.best_feasible, r.status, r.gap, r.solve_ms
            ));
        }
        s
    }

    /// Parse a history CSV written by [`History::to_csv`]. The initial
    /// best is not part of the CSV interface, so it is reconstructed as
    /// −∞; aggregation only reads the per-iteration rows.
    pub fn from_csv(text: &str) -> Result<History> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty history csv".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 9 || cols[0] != "seed" || cols[1] != "iter" {
            return Err(Error::Parse(format!("unexpected history header: {header}")));
        }
        let n_dims = cols.len() - 8;
        for (i, c) in cols[2..2 + n_dims].iter().enumerate() {
            if *c != format!("x_{i}") {
                return Err(Error::Parse(format!("unexpected coordinate column: {c}")));
            }
        }
        if cols[2 + n_dims..] != ["objective", "feasible", "best_feasible", "status", "gap", "solve_ms"]
        {
            return Err(Error::Parse(format!("unexpected history header: {header}")));
        }
        let mut seed = 0u64;
        let mut rows = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(Error::Parse(format!("ragged history row: {line}")));
            }
            seed = f[0].parse().map_err(|_| Error::Parse(format!("bad seed: {}", f[0])))?;
            let iter = f[1].parse().map_err(|_| Error::Parse(format!("bad iter: {}", f[1])))?;
            let coords = f[2..2 + n_dims]
                .iter()
                .map(|v| parse_f64(v))
                .collect::<Result<Vec<f64>>>()?;
            let rest = &f[2 + n_dims..];
            rows.push(HistoryRow {
                iter,
                x: Point::new(coords),
                objective: parse_f64(rest[0])?,
                feasible: rest[1] == "1",
                best_feasible: parse_f64(rest[2])?,
                status: rest[3].to_string(),
                gap: parse_f64(rest[4])?,
                solve_ms: parse_f64(rest[5])?,
            });
        }
        Ok(History { seed, n_dims, initial_best: f64::NEG_INFINITY, rows })
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("bad number: {s}")))
}

/// Feasible initial design: uniform draws projected against the full
/// domain, objective evaluated at each. Fails if any point exhausts its
/// attempt budget.
pub fn initialize<R: Rng + ?Sized>(
    problem: &BenchmarkProblem,
    n_init: usize,
    rng: &mut R,
) -> Result<Dataset> {
    let space = problem.space();
    let domain = BoxRegion::full_domain(space);
    let mut xs = Vec::with_capacity(n_init);
    for _ in 0..n_init {
        let mut found = None;
        for _ in 0..INIT_ATTEMPTS {
            let draw = space.sample_uniform(rng);
            match propose::project_in_box(&draw, &domain, space, problem.constraints(), rng) {
                Ok(p) => {
                    found = Some(p.x);
                    break;
                }
                Err(Error::ProjectionFailed) => continue,
                Err(e) => return Err(e),
            }
        }
        match found {
            Some(x) => xs.push(x),
            None => return Err(Error::ProjectionFailed),
        }
    }
    let y = xs.iter().map(|x| problem.evaluate(x)).collect();
    Dataset::new(xs, y)
}

/// Quadratic penalty under the maximization convention: the objective
/// minus λ·(Σ max(g,0)² + Σ h²).
pub fn penalty(objective_value: f64, g_values: &[f64], h_values: &[f64], lambda: f64) -> f64 {
    let gp: f64 = g_values.iter().map(|&g| g.max(0.0).powi(2)).sum();
    let hp: f64 = h_values.iter().map(|&h| h * h).sum();
    objective_value - lambda * (gp + hp)
}

fn penalized(cons: &ConstraintSet, x: &Point, objective: f64, lambda: f64) -> f64 {
    let g: Vec<f64> = cons.inequalities.iter().map(|c| c.eval(x)).collect();
    let h: Vec<f64> = cons.equalities.iter().map(|c| c.eval(x)).collect();
    penalty(objective, &g, &h, lambda)
}

/// Random-sampling acquisition: argmax of the pointwise UCB over uniform
/// domain draws, discarding (not projecting) constraint-violating draws.
pub fn rnd_acquisition<R: Rng + ?Sized>(
    post: &GpPosterior,
    kappa: f64,
    space: &FeatureSpace,
    constraints: &ConstraintSet,
    n_samples: usize,
    rng: &mut R,
) -> Result<Point> {
    assert!(n_samples >= 1, "n_samples must be at least 1");
    let mut best: Option<(Point, f64)> = None;
    for _ in 0..n_samples {
        let x = space.sample_uniform(rng);
        if !constraints.is_feasible(&x) {
            continue;
        }
        let (mu, var) = post.mean_var_std(&x);
        let ucb = mu + kappa * var.sqrt();
        if best.as_ref().is_none_or(|(_, b)| ucb > *b) {
            best = Some((x, ucb));
        }
    }
    best.map(|(x, _)| x).ok_or_else(|| {
        Error::Infeasible("every random acquisition sample violates the constraints".into())
    })
}

/// One step of the feasible-random baseline: a uniform draw projected to
/// the feasible set.
pub fn feas_random_step<R: Rng + ?Sized>(
    problem: &BenchmarkProblem,
    rng: &mut R,
) -> Result<Point> {
    let space = problem.space();
    let domain = BoxRegion::full_domain(space);
    let draw = space.sample_uniform(rng);
    propose::project_in_box(&draw, &domain, space, problem.constraints(), rng).map(|p| p.x)
}

/// Run one seeded experiment. Each iteration re-standardizes the grown
/// dataset, retrains the ensemble, refits kernel hyperparameters, and
/// proposes via the configured algorithm. With `penalty_lambda` set the
/// surrogate is trained on penalized values and the acquisition runs
/// constraint-free, but the history always records the true objective and
/// true feasibility. `solve_ms` is the wall time of the whole proposal
/// computation (model fit + acquisition).
pub fn run_bo(cfg: &RunConfig) -> Result<History> {
    let problem = bench::get(&cfg.benchmark)?;
    let space = problem.space();
    let true_cons = problem.constraints();
    let acq_cons =
        if cfg.penalty_lambda.is_some() { ConstraintSet::empty() } else { true_cons.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let init = initialize(&problem, cfg.n_init, &mut rng)?;
    let mut xs = init.x;
    let mut y_true = init.y;
    let mut best = y_true.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let initial_best = best;
    let mut y_train: Vec<f64> = match cfg.penalty_lambda {
        None => y_true.clone(),
        Some(l) => {
            xs.iter().zip(&y_true).map(|(x, &y)| penalized(true_cons, x, y, l)).collect()
        }
    };

    let mut rows = Vec::with_capacity(cfg.n_iter);
    for iter in 1..=cfg.n_iter {
        let t0 = Instant::now();
        let (x_next, status, gap) = match cfg.algorithm {
            Algorithm::FeasRandom => {
                (feas_random_step(&problem, &mut rng)?, "random".to_string(), 0.0)
            }
            Algorithm::LeafGp | Algorithm::LeafGpRnd => {
                let stz = Standardization::fit(&y_train);
                let y_std = stz.apply_all(&y_train);
                let data = Dataset::new(xs.clone(), y_std.clone())?;
                let ens = train(&data, space, &cfg.gbdt)?;
                let params = fit_hyperparams(&ens, &xs, &y_std, &cfg.kernel_bounds)?;
                let post = GpPosterior::from_standardized(&ens, params, &xs, &y_std, stz)?;
                if cfg.algorithm == Algorithm::LeafGpRnd {
                    let x = rnd_acquisition(
                        &post,
                        cfg.kappa,
                        space,
                        &acq_cons,
                        RND_ACQ_SAMPLES,
                        &mut rng,
                    )?;
                    (x, "sampled".to_string(), 0.0)
                } else {
                    let acq = encode(&post, cfg.kappa, acq_cons.clone());
                    let mut excluded: Vec<Vec<u32>> = Vec::new();
                    loop {
                        let sol = solve_excluding(&acq, &cfg.solver, &excluded, &mut rng);
                        if sol.status == SolveStatus::Infeasible {
                            return Err(Error::Infeasible(format!(
                                "no feasible acquisition cell at iteration {iter}"
                            )));
                        }
                        let mid = propose::midpoint(&sol, space, &mut rng);
                        match propose::project(&mid, &sol, space, &acq_cons, &mut rng) {
                            Ok(p) => break (p.x, sol.status.to_string(), sol.gap),
                            Err(Error::ProjectionFailed) => {
                                excluded.push(sol.leaves().to_vec());
                                if excluded.len() >= MAX_EXCLUSIONS {
                                    return Err(Error::ProjectionFailed);
                                }
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
        };
        let solve_ms = t0.elapsed().as_secs_f64() * 1e3;
        let objective = problem.evaluate(&x_next);
        let feasible = true_cons.is_feasible(&x_next);
        if feasible && objective > best {
            best = objective;
        }
        let y_tr = match cfg.penalty_lambda {
            None => objective,
            Some(l) => penalized(true_cons, &x_next, objective, l),
        };
        xs.push(x_next.clone());
        y_true.push(objective);
        y_train.push(y_tr);
        rows.push(HistoryRow {
            iter,
            x: x_next,
            objective,
            feasible,
            best_feasible: best,
            status,
            gap,
            solve_ms,
        });
    }
    Ok(History { seed: cfg.seed, n_dims: space.n(), initial_best, rows })
}

/// Run the same config across seeds, sequentially (seeds are independent;
/// callers wanting parallelism launch separate processes).
pub fn run_sweep(cfg: &RunConfig, seeds: &[u64]) -> Result<Vec<History>> {
    seeds
        .iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.seed = s;
            run_bo(&c)
        })
        .collect()
}

/// Quartiles of `best_feasible` across runs, per iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateRow {
    pub iter: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub n_runs: usize,
}

/// Aggregate equal-length histories into per-iteration quartiles.
pub fn aggregate(histories: &[History]) -> Result<Vec<AggregateRow>> {
    let Some(first) = histories.first() else { return Ok(Vec::new()) };
    let len = first.rows.len();
    if histories.iter().any(|h| h.rows.len() != len) {
        return Err(Error::InvalidConfig("histories must have equal lengths".into()));
    }
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let mut vals: Vec<f64> = histories.iter().map(|h| h.rows[i].best_feasible).collect();
        vals.sort_by(f64::total_cmp);
        out.push(AggregateRow {
            iter: first.rows[i].iter,
            median: quantile(&vals, 0.5),
            q1: quantile(&vals, 0.25),
            q3: quantile(&vals, 0.75),
            n_runs: vals.len(),
        });
    }
    Ok(out)
}

/// Linear-interpolation quantile between adjacent order statistics.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n - 1) as f64 * q;
    let i = h.floor() as usize;
    if i + 1 >= n {
        return sorted[n - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(
        "# quantiles: linear interpolation between adjacent order statistics\n\
         iter,median,q1,q3,n_runs\n",
    );
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.iter, r.median, r.q1, r.q3, r.n_runs));
    }
    s
}
