//! Input spaces: Euclidean vectors, functions in `L^p(λ)` sampled on a
//! quadrature grid, and finitely supported signed measures over either.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{domain, shape, Result};

/// Nodes and positive weights discretizing integration against `λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    domain: (f64, f64),
}

impl QuadratureGrid {
    /// Explicit nodes and weights. The domain is `[nodes[0], nodes[last]]`.
    ///
    /// A single node is allowed; it represents a point mass `λ = w δ_x`.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let domain = match (nodes.first(), nodes.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(domain("quadrature grid needs at least one node")),
        };
        Self::with_domain(nodes, weights, domain)
    }

    pub fn with_domain(nodes: Vec<f64>, weights: Vec<f64>, domain: (f64, f64)) -> Result<Self> {
        if nodes.len() != weights.len() {
            return Err(shape(format!(
                "grid has {} nodes but {} weights",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes.is_empty() {
            return Err(self::domain("quadrature grid needs at least one node"));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(self::domain("grid nodes must be finite"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(self::domain("grid nodes must be strictly increasing"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(self::domain("grid weights must be finite and > 0"));
        }
        let (a, b) = domain;
        if !(a <= nodes[0] && nodes[nodes.len() - 1] <= b) {
            return Err(self::domain(format!("nodes fall outside the domain [{a}, {b}]")));
        }
        Ok(QuadratureGrid { nodes, weights, domain })
    }

    /// Composite trapezoid rule for Lebesgue measure on a uniform grid of
    /// `m ≥ 2` nodes over `[a, b]`.
    pub fn trapezoid(a: f64, b: f64, m: usize) -> Result<Self> {
        if m < 2 {
            return Err(domain("trapezoid grid needs at least 2 nodes"));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(domain(format!("invalid interval [{a}, {b}]")));
        }
        let h = (b - a) / (m - 1) as f64;
        let mut nodes: Vec<f64> = (0..m).map(|i| a + i as f64 * h).collect();
        nodes[m - 1] = b;
        let mut weights = vec![h; m];
        weights[0] = h / 2.0;
        weights[m - 1] = h / 2.0;
        Self::with_domain(nodes, weights, (a, b))
    }

    /// Trapezoid rule on `[0, 1]`.
    pub fn unit_trapezoid(m: usize) -> Result<Self> {
        Self::trapezoid(0.0, 1.0, m)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// A function in `L^p(λ)` represented by its values on the grid nodes.
#[derive(Debug, Clone)]
pub struct FunctionSample {
    grid: Arc<QuadratureGrid>,
    values: Vec<f64>,
}

impl FunctionSample {
    pub fn new(grid: Arc<QuadratureGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(shape(format!(
                "function has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(domain("function values must be finite"));
        }
        Ok(FunctionSample { grid, values })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(grid: Arc<QuadratureGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: Arc<QuadratureGrid>, c: f64) -> Result<Self> {
        let values = vec![c; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl PartialEq for FunctionSample {
    fn eq(&self, other: &Self) -> bool {
        same_grid(&self.grid, &other.grid) && self.values == other.values
    }
}

pub(crate) fn same_grid(a: &Arc<QuadratureGrid>, b: &Arc<QuadratureGrid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// An element of a [`PointSpace`].
#[derive(Debug, Clone, PartialEq)]
pub enum Point {
    Vector(Vec<f64>),
    Function(FunctionSample),
    Measure(DiscreteMeasure),
}

impl Point {
    pub fn scalar(x: f64) -> Self {
        Point::Vector(vec![x])
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Point::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_function(&self) -> Option<&FunctionSample> {
        match self {
            Point::Function(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_measure(&self) -> Option<&DiscreteMeasure> {
        match self {
            Point::Measure(m) => Some(m),
            _ => None,
        }
    }

    /// A total order used to canonicalize argument order in kernel
    /// evaluation, so that `k(x, y)` and `k(y, x)` follow the same
    /// arithmetic path.
    pub(crate) fn canonical_cmp(&self, other: &Point) -> Ordering {
        fn rank(p: &Point) -> u8 {
            match p {
                Point::Vector(_) => 0,
                Point::Function(_) => 1,
                Point::Measure(_) => 2,
            }
        }
        fn slices(a: &[f64], b: &[f64]) -> Ordering {
            for (x, y) in a.iter().zip(b) {
                match x.total_cmp(y) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            a.len().cmp(&b.len())
        }
        match (self, other) {
            (Point::Vector(a), Point::Vector(b)) => slices(a, b),
            (Point::Function(a), Point::Function(b)) => slices(a.values(), b.values()),
            (Point::Measure(a), Point::Measure(b)) => {
                for ((pa, wa), (pb, wb)) in a.atoms().zip(b.atoms()) {
                    match pa.canonical_cmp(pb).then(wa.total_cmp(&wb)) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                a.len().cmp(&b.len())
            }
            _ => rank(self).cmp(&rank(other)),
        }
    }
}

/// The space a kernel is defined on.
#[derive(Debug, Clone)]
pub enum PointSpace {
    /// `ℝ^d`.
    Euclidean { dim: usize },
    /// `L^p(λ)` discretized on a quadrature grid.
    FuncLp { grid: Arc<QuadratureGrid>, p: f64 },
    /// Finitely supported measures over a base space (no further nesting).
    MeasurePoints { base: Box<PointSpace> },
}

impl PartialEq for PointSpace {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (PointSpace::Euclidean { dim: a }, PointSpace::Euclidean { dim: b }) => a == b,
            (PointSpace::FuncLp { grid: ga, p: pa }, PointSpace::FuncLp { grid: gb, p: pb }) => {
                pa == pb && same_grid(ga, gb)
            }
            (PointSpace::MeasurePoints { base: a }, PointSpace::MeasurePoints { base: b }) => a == b,
            _ => false,
        }
    }
}

impl fmt::Display for PointSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointSpace::Euclidean { dim } => write!(f, "R^{dim}"),
            PointSpace::FuncLp { grid, p } => write!(f, "L^{p}({} nodes)", grid.len()),
            PointSpace::MeasurePoints { base } => write!(f, "M({base})"),
        }
    }
}

impl PointSpace {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(domain("Euclidean dimension must be positive"));
        }
        Ok(PointSpace::Euclidean { dim })
    }

    /// `L^p(λ)` on `grid`; `p` must lie in `(1, ∞)`.
    pub fn func_lp(grid: Arc<QuadratureGrid>, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(domain(format!("L^p space needs p in (1, inf), got {p}")));
        }
        Ok(PointSpace::FuncLp { grid, p })
    }

    pub fn measures_over(base: PointSpace) -> Result<Self> {
        if matches!(base, PointSpace::MeasurePoints { .. }) {
            return Err(domain("measure spaces may not be nested more than once"));
        }
        Ok(PointSpace::MeasurePoints { base: Box::new(base) })
    }

    /// Checks that `x` is an element of this space.
    pub fn check_point(&self, x: &Point) -> Result<()> {
        match (self, x) {
            (PointSpace::Euclidean { dim }, Point::Vector(v)) => {
                if v.len() != *dim {
                    return Err(shape(format!("expected a point in R^{dim}, got length {}", v.len())));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return Err(domain("point coordinates must be finite"));
                }
                Ok(())
            }
            (PointSpace::FuncLp { grid, .. }, Point::Function(f)) => {
                if !same_grid(grid, f.grid()) {
                    return Err(shape("function sampled on a different grid"));
                }
                Ok(())
            }
            (PointSpace::MeasurePoints { base }, Point::Measure(m)) => {
                if m.space() != base.as_ref() {
                    return Err(shape(format!(
                        "measure lives on {} but the space expects measures over {base}",
                        m.space()
                    )));
                }
                Ok(())
            }
            _ => Err(shape(format!("point kind does not belong to {self}"))),
        }
    }
}

/// A finitely supported signed measure `Σ wᵢ δ_{zᵢ}`. Duplicate support
/// points are allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    space: PointSpace,
    points: Vec<Point>,
    weights: Vec<f64>,
}

const MASS_TOL: f64 = 1e-12;

impl DiscreteMeasure {
    pub fn new(space: PointSpace, points: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(shape(format!(
                "measure has {} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(domain("a measure needs at least one support point"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(domain("measure weights must be finite"));
        }
        for p in &points {
            space.check_point(p)?;
        }
        Ok(DiscreteMeasure { space, points, weights })
    }

    pub fn dirac(space: PointSpace, x: Point) -> Result<Self> {
        Self::new(space, vec![x], vec![1.0])
    }

    /// Equal-weight empirical measure of a sample.
    pub fn empirical(space: PointSpace, points: Vec<Point>) -> Result<Self> {
        let n = points.len();
        Self::new(space, points, vec![1.0 / n.max(1) as f64; n])
    }

    /// Measure on `ℝ^1` with the given locations.
    pub fn on_line(locations: &[f64], weights: Vec<f64>) -> Result<Self> {
        let points = locations.iter().map(|&x| Point::scalar(x)).collect();
        Self::new(PointSpace::Euclidean { dim: 1 }, points, weights)
    }

    pub fn space(&self) -> &PointSpace {
        &self.space
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }

    /// `Σ wᵢ`, summed left to right.
    pub fn total_mass(&self) -> f64 {
        self.weights.iter().fold(0.0, |acc, w| acc + w)
    }

    pub fn abs_mass(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }

    pub fn is_probability(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0) && (self.total_mass() - 1.0).abs() <= MASS_TOL
    }

    pub fn is_zero_mass(&self) -> bool {
        self.total_mass().abs() <= MASS_TOL
    }

    pub(crate) fn require_probability(&self, what: &str) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(domain(format!(
                "{what} must be a probability measure (positive weights summing to 1), total mass {}",
                self.total_mass()
            )))
        }
    }

    /// `a·μ`.
    pub fn scaled(&self, a: f64) -> DiscreteMeasure {
        DiscreteMeasure {
            space: self.space.clone(),
            points: self.points.clone(),
            weights: self.weights.iter().map(|w| a * w).collect(),
        }
    }
}

/// `(Σ λᵢ |fᵢ|^p)^{1/p}`. Accepts any `p ≥ 1`.
pub fn lp_norm(f: &FunctionSample, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(domain(format!("lp_norm needs p in [1, inf), got {p}")));
    }
    Ok(lp_norm_of_values(f.grid().weights(), f.values().iter().copied(), p))
}

fn lp_norm_of_values(weights: &[f64], values: impl Iterator<Item = f64>, p: f64) -> f64 {
    let s: f64 = weights.iter().zip(values).map(|(w, v)| w * v.abs().powf(p)).sum();
    s.powf(1.0 / p)
}

/// `Σ λᵢ (fᵢ - gᵢ)²`, the squared `L²(λ)` distance.
pub fn sq_dist_l2(f: &FunctionSample, g: &FunctionSample) -> Result<f64> {
    if !same_grid(f.grid(), g.grid()) {
        return Err(shape("functions are sampled on different grids"));
    }
    Ok(weighted_sq_dist(f.grid().weights(), f.values(), g.values()))
}

pub(crate) fn weighted_sq_dist(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| {
            let d = x - y;
            w * d * d
        })
        .sum()
}

pub(crate) fn euclidean_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Metrics of strong negative type admitted by the distance-based kernels.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpec {
    /// Euclidean distance on `ℝ^d`.
    Euclidean { dim: usize },
    /// `‖f - g‖_{L^p(λ)}` with `1 < p ≤ 2`.
    Lp { grid: Arc<QuadratureGrid>, p: f64 },
}

impl MetricSpec {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(domain("Euclidean dimension must be positive"));
        }
        Ok(MetricSpec::Euclidean { dim })
    }

    /// The `L^p` metric, whitelisted for `1 < p ≤ 2` only.
    pub fn lp(grid: Arc<QuadratureGrid>, p: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(domain(format!(
                "the L^p metric is of strong negative type only for 1 < p <= 2, got p = {p}"
            )));
        }
        Ok(MetricSpec::Lp { grid, p })
    }

    pub fn space(&self) -> PointSpace {
        match self {
            MetricSpec::Euclidean { dim } => PointSpace::Euclidean { dim: *dim },
            MetricSpec::Lp { grid, p } => PointSpace::FuncLp { grid: grid.clone(), p: *p },
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            MetricSpec::Euclidean { dim } => Self::euclidean(*dim).map(|_| ()),
            MetricSpec::Lp { grid, p } => Self::lp(grid.clone(), *p).map(|_| ()),
        }
    }

    /// `ρ(x, y)`.
    pub fn dist(&self, x: &Point, y: &Point) -> Result<f64> {
        let space = self.space();
        space.check_point(x)?;
        space.check_point(y)?;
        Ok(self.dist_unchecked(x, y))
    }

    pub(crate) fn dist_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match (self, x, y) {
            (MetricSpec::Euclidean { .. }, Point::Vector(a), Point::Vector(b)) => {
                euclidean_sq_dist(a, b).sqrt()
            }
            (MetricSpec::Lp { grid, p }, Point::Function(f), Point::Function(g)) => {
                let diff = f.values().iter().zip(g.values()).map(|(a, b)| a - b);
                if *p == 2.0 {
                    weighted_sq_dist(grid.weights(), f.values(), g.values()).sqrt()
                } else {
                    lp_norm_of_values(grid.weights(), diff, *p)
                }
            }
            _ => unreachable!("points checked against the metric space"),
        }
    }
}

/// `μ - ν` as a signed measure on the concatenated support.
pub fn measure_difference(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    if mu.space() != nu.space() {
        return Err(shape(format!(
            "cannot subtract a measure on {} from one on {}",
            nu.space(),
            mu.space()
        )));
    }
    let mut points = Vec::with_capacity(mu.len() + nu.len());
    points.extend_from_slice(mu.points());
    points.extend_from_slice(nu.points());
    let mut weights = Vec::with_capacity(mu.len() + nu.len());
    weights.extend_from_slice(mu.weights());
    weights.extend(nu.weights().iter().map(|w| -w));
    Ok(DiscreteMeasure { space: mu.space.clone(), points, weights })
}
