//! Feature spaces, points, datasets, axis-aligned boxes, and polynomial
//! constraints with interval-arithmetic enclosures.
//!
//! Every value is carried as an `f64`: integer features hold integral values
//! and categorical features hold a category index. [`FeatureSpace::validate`]
//! enforces the per-kind domain rules, so downstream code can do plain
//! arithmetic without unwrapping a value enum.
//!
//! Boxes track a left-open flag per interval because tree splits are
//! left-inclusive (`x ≤ v` goes left): the region right of a split is
//! `(v, hi]`. Interval arithmetic ignores openness — a closed enclosure of a
//! half-open interval is still an enclosure.

use crate::error::{Error, Result};
use rand::Rng;

/// Domain of a single dimension.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureKind {
    Continuous { lb: f64, ub: f64 },
    Integer { lb: i64, ub: i64 },
    Categorical { categories: Vec<String> },
}

/// One dimension of the search space.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub index: usize,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn is_integer(&self) -> bool {
        matches!(self.kind, FeatureKind::Integer { .. })
    }

    /// Number of categories; zero for non-categorical features.
    pub fn n_categories(&self) -> usize {
        match &self.kind {
            FeatureKind::Categorical { categories } => categories.len(),
            _ => 0,
        }
    }

    /// Real bounds of a non-categorical feature.
    pub fn numeric_bounds(&self) -> Option<(f64, f64)> {
        match &self.kind {
            FeatureKind::Continuous { lb, ub } => Some((*lb, *ub)),
            FeatureKind::Integer { lb, ub } => Some((*lb as f64, *ub as f64)),
            FeatureKind::Categorical { .. } => None,
        }
    }
}

/// Ordered collection of features; dimension indices are 0..n contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSpace {
    features: Vec<Feature>,
}

impl FeatureSpace {
    pub fn new(kinds: Vec<FeatureKind>) -> Result<Self> {
        let features: Vec<Feature> = kinds
            .into_iter()
            .enumerate()
            .map(|(index, kind)| Feature { index, kind })
            .collect();
        for f in &features {
            match &f.kind {
                FeatureKind::Continuous { lb, ub } => {
                    if !(lb.is_finite() && ub.is_finite() && lb < ub) {
                        return Err(Error::InvalidConfig(format!(
                            "continuous feature {} needs finite lb < ub, got [{lb}, {ub}]",
                            f.index
                        )));
                    }
                }
                FeatureKind::Integer { lb, ub } => {
                    if lb > ub {
                        return Err(Error::InvalidConfig(format!(
                            "integer feature {} needs lb <= ub, got [{lb}, {ub}]",
                            f.index
                        )));
                    }
                }
                FeatureKind::Categorical { categories } => {
                    if categories.len() < 2 {
                        return Err(Error::InvalidConfig(format!(
                            "categorical feature {} needs >= 2 categories",
                            f.index
                        )));
                    }
                    for (a, cat) in categories.iter().enumerate() {
                        if categories[..a].contains(cat) {
                            return Err(Error::InvalidConfig(format!(
                                "categorical feature {} has duplicate label {cat:?}",
                                f.index
                            )));
                        }
                    }
                }
            }
        }
        Ok(FeatureSpace { features })
    }

    /// Convenience constructor for an all-continuous space.
    pub fn continuous(bounds: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            bounds
                .iter()
                .map(|&(lb, ub)| FeatureKind::Continuous { lb, ub })
                .collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &Feature {
        &self.features[i]
    }

    /// True iff every coordinate is inside its feature domain.
    pub fn validate(&self, x: &Point) -> bool {
        if x.len() != self.n() {
            return false;
        }
        self.features.iter().zip(x.coords()).all(|(f, &v)| match &f.kind {
            FeatureKind::Continuous { lb, ub } => v.is_finite() && *lb <= v && v <= *ub,
            FeatureKind::Integer { lb, ub } => {
                v.is_finite() && v.fract() == 0.0 && *lb as f64 <= v && v <= *ub as f64
            }
            FeatureKind::Categorical { categories } => {
                v.is_finite() && v.fract() == 0.0 && v >= 0.0 && (v as usize) < categories.len()
            }
        })
    }

    /// Like [`validate`](Self::validate) but explains the first violation.
    pub fn check(&self, x: &Point) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: x.len() });
        }
        if self.validate(x) {
            Ok(())
        } else {
            for (f, &v) in self.features.iter().zip(x.coords()) {
                let ok = self.validate_coord(f, v);
                if !ok {
                    return Err(Error::InvalidPoint(format!(
                        "coordinate {} = {v} outside domain of feature {:?}",
                        f.index, f.kind
                    )));
                }
            }
            unreachable!("validate() false but every coordinate passed");
        }
    }

    fn validate_coord(&self, f: &Feature, v: f64) -> bool {
        match &f.kind {
            FeatureKind::Continuous { lb, ub } => v.is_finite() && *lb <= v && v <= *ub,
            FeatureKind::Integer { lb, ub } => {
                v.is_finite() && v.fract() == 0.0 && *lb as f64 <= v && v <= *ub as f64
            }
            FeatureKind::Categorical { categories } => {
                v.is_finite() && v.fract() == 0.0 && v >= 0.0 && (v as usize) < categories.len()
            }
        }
    }

    /// One uniform draw: continuous uniform on `[lb, ub]`, integer uniform on
    /// `{lb..ub}`, categorical uniform over categories.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let coords = self
            .features
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Continuous { lb, ub } => rng.random_range(*lb..=*ub),
                FeatureKind::Integer { lb, ub } => rng.random_range(*lb..=*ub) as f64,
                FeatureKind::Categorical { categories } => {
                    rng.random_range(0..categories.len()) as f64
                }
            })
            .collect();
        Point::new(coords)
    }
}

/// A location in the feature space. Integer coordinates are integral floats;
/// categorical coordinates are category indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Total order for deterministic tie-breaking (coordinates are finite).
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Observations: one target per point.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub x: Vec<Point>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Vec<Point>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
        }
        Ok(Dataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn push(&mut self, x: Point, y: f64) {
        self.x.push(x);
        self.y.push(y);
    }
}

/// Closed-or-left-open real interval. `hi` is always attained; `lo` is
/// excluded when `lo_open` (the region right of a left-inclusive split).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Interval { lo, hi, lo_open: false }
    }

    pub fn contains(&self, v: f64) -> bool {
        (if self.lo_open { v > self.lo } else { v >= self.lo }) && v <= self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Intersection, `None` when empty as a set of reals.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_open) = match self.lo.partial_cmp(&other.lo).expect("finite bounds") {
            std::cmp::Ordering::Greater => (self.lo, self.lo_open),
            std::cmp::Ordering::Less => (other.lo, other.lo_open),
            std::cmp::Ordering::Equal => (self.lo, self.lo_open || other.lo_open),
        };
        let hi = self.hi.min(other.hi);
        if lo > hi || (lo == hi && lo_open) {
            None
        } else {
            Some(Interval { lo, hi, lo_open })
        }
    }

    /// Smallest integer inside the interval, if any.
    pub fn first_integer(&self) -> Option<i64> {
        let lo_int = if self.lo_open { self.lo.floor() as i64 + 1 } else { self.lo.ceil() as i64 };
        let hi_int = self.hi.floor() as i64;
        (lo_int <= hi_int).then_some(lo_int)
    }

    /// False for integer features when no integer lies inside.
    pub fn contains_integer(&self) -> bool {
        self.first_integer().is_some()
    }
}

/// One box dimension: a real interval or a category subset (sorted indices).
#[derive(Clone, Debug, PartialEq)]
pub enum BoxDim {
    Interval(Interval),
    Cats(Vec<usize>),
}

/// Axis-aligned region: an interval per non-categorical feature, a nonempty
/// category subset per categorical feature.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxRegion {
    dims: Vec<BoxDim>,
}

impl BoxRegion {
    pub fn new(dims: Vec<BoxDim>) -> Self {
        BoxRegion { dims }
    }

    /// The whole domain of `space`.
    pub fn full_domain(space: &FeatureSpace) -> Self {
        let dims = space
            .features()
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Continuous { lb, ub } => BoxDim::Interval(Interval::closed(*lb, *ub)),
                FeatureKind::Integer { lb, ub } => {
                    BoxDim::Interval(Interval::closed(*lb as f64, *ub as f64))
                }
                FeatureKind::Categorical { categories } => {
                    BoxDim::Cats((0..categories.len()).collect())
                }
            })
            .collect();
        BoxRegion { dims }
    }

    pub fn dims(&self) -> &[BoxDim] {
        &self.dims
    }

    pub fn dim(&self, i: usize) -> &BoxDim {
        &self.dims[i]
    }

    pub fn interval(&self, i: usize) -> &Interval {
        match &self.dims[i] {
            BoxDim::Interval(iv) => iv,
            BoxDim::Cats(_) => panic!("feature {i} is categorical"),
        }
    }

    pub fn cats(&self, i: usize) -> &[usize] {
        match &self.dims[i] {
            BoxDim::Cats(c) => c,
            BoxDim::Interval(_) => panic!("feature {i} is not categorical"),
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.dims.iter().zip(x.coords()).all(|(d, &v)| match d {
            BoxDim::Interval(iv) => iv.contains(v),
            BoxDim::Cats(c) => c.binary_search(&(v as usize)).is_ok(),
        })
    }

    /// Componentwise intersection; `None` when any dimension empties out.
    /// Integer dimensions additionally require a representable integer
    /// (tree thresholds on integers can meet at fractional gaps).
    pub fn intersect(&self, other: &BoxRegion, space: &FeatureSpace) -> Option<BoxRegion> {
        let mut dims = Vec::with_capacity(self.dims.len());
        for (i, (a, b)) in self.dims.iter().zip(&other.dims).enumerate() {
            match (a, b) {
                (BoxDim::Interval(ia), BoxDim::Interval(ib)) => {
                    let iv = ia.intersect(ib)?;
                    if space.feature(i).is_integer() && !iv.contains_integer() {
                        return None;
                    }
                    dims.push(BoxDim::Interval(iv));
                }
                (BoxDim::Cats(ca), BoxDim::Cats(cb)) => {
                    let merged: Vec<usize> =
                        ca.iter().copied().filter(|c| cb.binary_search(c).is_ok()).collect();
                    if merged.is_empty() {
                        return None;
                    }
                    dims.push(BoxDim::Cats(merged));
                }
                _ => panic!("box dimension kinds disagree at feature {i}"),
            }
        }
        Some(BoxRegion { dims })
    }

    /// A point inside the box usable as a witness / descent anchor:
    /// interval midpoints (snapped to an in-box integer for integer
    /// features), first category for categorical dimensions.
    pub fn witness(&self, space: &FeatureSpace) -> Point {
        let coords = self
            .dims
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                BoxDim::Interval(iv) => {
                    if space.feature(i).is_integer() {
                        let mid = iv.midpoint();
                        let fl = mid.floor();
                        if iv.contains(fl) {
                            fl
                        } else {
                            iv.first_integer().expect("integer box dimension nonempty") as f64
                        }
                    } else {
                        iv.midpoint()
                    }
                }
                BoxDim::Cats(c) => c[0] as f64,
            })
            .collect();
        Point::new(coords)
    }

    /// Uniform draw inside the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, space: &FeatureSpace, rng: &mut R) -> Point {
        let coords = self
            .dims
            .iter()
            .enumerate()
            .map(|(i, d)| match d {
                BoxDim::Interval(iv) => {
                    if space.feature(i).is_integer() {
                        let lo = iv.first_integer().expect("integer box dimension nonempty");
                        let hi = iv.hi.floor() as i64;
                        rng.random_range(lo..=hi) as f64
                    } else {
                        rng.random_range(iv.lo..=iv.hi)
                    }
                }
                BoxDim::Cats(c) => c[rng.random_range(0..c.len())] as f64,
            })
            .collect();
        Point::new(coords)
    }
}

/// Constraint sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// `p(x) ≤ 0`
    LeqZero,
    /// `p(x) = 0`
    EqZero,
}

/// One term `coeff · Π x_i^{e_i}` of a polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    /// `(feature index, exponent ≥ 1)`, sorted by feature, no duplicates.
    pub powers: Vec<(usize, u32)>,
}

/// Polynomial constraint over continuous/integer features.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyConstraint {
    terms: Vec<Term>,
    sense: Sense,
}

impl PolyConstraint {
    /// Terms are canonicalized: powers of the same feature are merged by
    /// summing exponents and sorted by feature index.
    pub fn new(terms: Vec<(f64, Vec<(usize, u32)>)>, sense: Sense) -> Result<Self> {
        let mut canon = Vec::with_capacity(terms.len());
        for (coeff, powers) in terms {
            if !coeff.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "non-finite constraint coefficient {coeff}"
                )));
            }
            let mut merged: Vec<(usize, u32)> = Vec::with_capacity(powers.len());
            for (feat, exp) in powers {
                if exp == 0 {
                    return Err(Error::InvalidConfig(
                        "monomial exponent must be >= 1".to_string(),
                    ));
                }
                match merged.iter_mut().find(|(f, _)| *f == feat) {
                    Some((_, e)) => *e += exp,
                    None => merged.push((feat, exp)),
                }
            }
            merged.sort_by_key(|&(f, _)| f);
            canon.push(Term { coeff, powers: merged });
        }
        Ok(PolyConstraint { terms: canon, sense })
    }

    /// Linear constraint `coeffs·x + constant (sense) 0`.
    pub fn linear(coeffs: &[(usize, f64)], constant: f64, sense: Sense) -> Result<Self> {
        let mut terms: Vec<(f64, Vec<(usize, u32)>)> =
            coeffs.iter().map(|&(i, c)| (c, vec![(i, 1)])).collect();
        if constant != 0.0 {
            terms.push((constant, vec![]));
        }
        Self::new(terms, sense)
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Every feature index referenced by the polynomial.
    pub fn features(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .terms
            .iter()
            .flat_map(|t| t.powers.iter().map(|&(f, _)| f))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Structural validity against a space: referenced features exist and
    /// none is categorical.
    pub fn check_against(&self, space: &FeatureSpace) -> Result<()> {
        for f in self.features() {
            if f >= space.n() {
                return Err(Error::InvalidConfig(format!(
                    "constraint references feature {f}, space has {}",
                    space.n()
                )));
            }
            if space.feature(f).is_categorical() {
                return Err(Error::CategoricalInConstraint { feature: f });
            }
        }
        Ok(())
    }

    /// Polynomial value at `x`.
    pub fn eval(&self, x: &Point) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .map(|&(f, e)| x.get(f).powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Gradient at `x` (dense over the space dimension).
    pub fn gradient(&self, x: &Point, out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.terms {
            for (k, &(f, e)) in t.powers.iter().enumerate() {
                let mut partial = t.coeff * e as f64 * x.get(f).powi(e as i32 - 1);
                for (j, &(f2, e2)) in t.powers.iter().enumerate() {
                    if j != k {
                        partial *= x.get(f2).powi(e2 as i32);
                    }
                }
                out[f] += partial;
            }
        }
    }

    /// Interval enclosure of the polynomial over `boxr`. Sound (never
    /// excludes an attained value); exact power rules keep even powers
    /// nonnegative over sign-crossing intervals.
    pub fn interval_eval(&self, boxr: &BoxRegion) -> (f64, f64) {
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for t in &self.terms {
            let (mut tlo, mut thi) = (1.0f64, 1.0f64);
            for &(f, e) in &t.powers {
                let iv = boxr.interval(f);
                let (plo, phi) = ipow(iv.lo, iv.hi, e);
                let (a, b) = imul(tlo, thi, plo, phi);
                tlo = a;
                thi = b;
            }
            let (a, b) = imul(tlo, thi, t.coeff, t.coeff);
            lo += a;
            hi += b;
        }
        (lo, hi)
    }
}

/// Interval power with exact sign handling.
fn ipow(lo: f64, hi: f64, e: u32) -> (f64, f64) {
    let e = e as i32;
    let (plo, phi) = (lo.powi(e), hi.powi(e));
    if e % 2 == 1 {
        (plo, phi)
    } else if lo >= 0.0 {
        (plo, phi)
    } else if hi <= 0.0 {
        (phi, plo)
    } else {
        (0.0, plo.max(phi))
    }
}

/// Interval product (four-corner rule).
fn imul(alo: f64, ahi: f64, blo: f64, bhi: f64) -> (f64, f64) {
    let c = [alo * blo, alo * bhi, ahi * blo, ahi * bhi];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

/// Inequalities `g ≤ 0` and equalities `h = 0` with a shared tolerance.
#[derive(Clone, Debug)]
pub struct ConstraintSet {
    pub inequalities: Vec<PolyConstraint>,
    pub equalities: Vec<PolyConstraint>,
    pub eq_tolerance: f64,
}

/// Feasibility tolerance used everywhere a point is accepted.
pub const DEFAULT_EQ_TOLERANCE: f64 = 1e-6;

impl ConstraintSet {
    pub fn new(inequalities: Vec<PolyConstraint>, equalities: Vec<PolyConstraint>) -> Self {
        debug_assert!(inequalities.iter().all(|c| c.sense() == Sense::LeqZero));
        debug_assert!(equalities.iter().all(|c| c.sense() == Sense::EqZero));
        ConstraintSet { inequalities, equalities, eq_tolerance: DEFAULT_EQ_TOLERANCE }
    }

    pub fn empty() -> Self {
        ConstraintSet::new(Vec::new(), Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.inequalities.is_empty() && self.equalities.is_empty()
    }

    pub fn len(&self) -> usize {
        self.inequalities.len() + self.equalities.len()
    }

    /// Largest violation at `x`: max over `g_j(x)` clamped at 0 and `|h_k(x)|`.
    pub fn max_violation(&self, x: &Point) -> f64 {
        let gv = self
            .inequalities
            .iter()
            .map(|c| c.eval(x).max(0.0))
            .fold(0.0f64, f64::max);
        let hv = self
            .equalities
            .iter()
            .map(|c| c.eval(x).abs())
            .fold(0.0f64, f64::max);
        gv.max(hv)
    }

    /// Feasible iff all inequalities ≤ tol and all |equalities| ≤ tol.
    pub fn is_feasible(&self, x: &Point) -> bool {
        self.max_violation(x) <= self.eq_tolerance
    }
}

/// Standardization statistics for targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    /// Zero-mean unit-variance statistics; a degenerate std (< 1e−12) is
    /// replaced by 1 so constant targets standardize to zero.
    pub fn fit(y: &[f64]) -> Self {
        let m = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / m;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let std = var.sqrt();
        Standardization { mean, std: if std < 1e-12 { 1.0 } else { std } }
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn apply_all(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}
