//! Kernel constructions.
//!
//! Every constructor returns a [`KernelSpec`]: an immutable evaluation rule
//! on a [`PointSpace`]. Rules built from a radial profile require the profile
//! to be in the strictly positive definite class; the distance kernel is the
//! only rule without one.
//!
//! | rule              | `k(x, y)`                                        | space           |
//! |-------------------|--------------------------------------------------|-----------------|
//! | `radial_hilbert`  | `φ(‖x - y‖²)`                                    | `ℝ^d`, `L²(λ)`  |
//! | `tee_radial`      | `φ(‖T x - T y‖²)`, `T` injective                 | `ℝ^d`, `L^p(λ)` |
//! | `lp_operator`     | `φ(∫∫ k₁(s,t) h(s) h(t) dλ dλ)`, `h = x - y`     | `L^p(λ)`        |
//! | `metric_phi`      | `φ(ρ(x, y))`                                     | metric space    |
//! | `distance`        | `ρ(x,z₀) + ρ(y,z₀) - ρ(x,y)`                     | metric space    |
//! | `mixture`         | `Σ wᵢ kᵢ(x, y)`                                  | shared space    |
//! | `kme_measure`     | `φ(‖Φ_{k₁}(μ) - Φ_{k₁}(ν)‖²)`                    | measures        |
//! | `fourier_measure` | `φ(Σ_s w_s |μ̂(s) - ν̂(s)|²)`                      | measures on ℝ^d |
//! | `quantile_monge`  | `φ(∫₀¹ (F_μ⁻¹ - F_ν⁻¹)²)`                          | prob. on ℝ      |

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, shape, Error, Result};
use crate::phi::PhiProfile;
use crate::spaces::{
    euclidean_sq_dist, measure_difference, weighted_sq_dist, DiscreteMeasure, MetricSpec, Point,
    PointSpace, QuadratureGrid,
};

/// Relative threshold for the numerical rank checks on feature maps and on
/// the weighted base-kernel matrix of the `L^p` operator kernel.
pub const RANK_TOL: f64 = 1e-10;

const FREQ_WEIGHT_TOL: f64 = 1e-12;

/// A map `T` into a Hilbert space used by [`make_tee_radial`].
#[derive(Debug, Clone, PartialEq)]
pub enum MapSpec {
    Identity,
    /// Coordinate-wise scaling; all factors nonzero.
    DiagonalScale { factors: Vec<f64> },
    /// A linear map applied to vector coordinates or grid values.
    LinearGridMap { matrix: DMatrix<f64> },
}

impl MapSpec {
    fn validate(&self, space: &PointSpace) -> Result<()> {
        let input_dim = match space {
            PointSpace::Euclidean { dim } => *dim,
            PointSpace::FuncLp { grid, .. } => grid.len(),
            PointSpace::MeasurePoints { .. } => {
                return Err(Error::Unsupported("maps on measure spaces".into()))
            }
        };
        match self {
            MapSpec::Identity => Ok(()),
            MapSpec::DiagonalScale { factors } => {
                if factors.len() != input_dim {
                    return Err(shape(format!(
                        "diagonal map has {} factors for input dimension {input_dim}",
                        factors.len()
                    )));
                }
                if let Some(f) = factors.iter().find(|f| !f.is_finite() || **f == 0.0) {
                    return Err(Error::Injectivity(format!(
                        "diagonal factor {f} makes the map non-injective"
                    )));
                }
                Ok(())
            }
            MapSpec::LinearGridMap { matrix } => {
                if matrix.ncols() != input_dim {
                    return Err(shape(format!(
                        "linear map has {} columns for input dimension {input_dim}",
                        matrix.ncols()
                    )));
                }
                if matches!(space, PointSpace::FuncLp { .. }) && matrix.nrows() != input_dim {
                    return Err(shape("a linear map on grid values must be square"));
                }
                if matrix.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("linear map has non-finite entries".into()));
                }
                if matrix.nrows() < matrix.ncols() {
                    return Err(Error::Injectivity("linear map has more columns than rows".into()));
                }
                let sv = matrix.singular_values();
                let max = sv.max();
                let min = sv.min();
                if !(max > 0.0 && min > RANK_TOL * max) {
                    return Err(Error::Injectivity(format!(
                        "linear map is numerically rank deficient (singular values {min:e} / {max:e})"
                    )));
                }
                Ok(())
            }
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            MapSpec::Identity => v.to_vec(),
            MapSpec::DiagonalScale { factors } => {
                v.iter().zip(factors).map(|(x, f)| f * x).collect()
            }
            MapSpec::LinearGridMap { matrix } => (0..matrix.nrows())
                .map(|r| (0..matrix.ncols()).map(|c| matrix[(r, c)] * v[c]).sum())
                .collect(),
        }
    }
}

/// The evaluation rule of a kernel.
#[derive(Debug, Clone)]
pub enum KernelRule {
    RadialHilbert {
        phi: PhiProfile,
    },
    TeeRadial {
        phi: PhiProfile,
        map: MapSpec,
    },
    LpOperator {
        phi: PhiProfile,
        k1: Box<KernelSpec>,
        grid: Arc<QuadratureGrid>,
        p: f64,
        /// `Mᵢⱼ = λᵢ k₁(xᵢ, xⱼ) λⱼ`.
        form: DMatrix<f64>,
    },
    MetricPhi {
        phi: PhiProfile,
        metric: MetricSpec,
    },
    DistanceKernel {
        metric: MetricSpec,
        z0: Point,
    },
    Mixture {
        components: Vec<(KernelSpec, f64)>,
    },
    KmeMeasure {
        phi: PhiProfile,
        k1: Box<KernelSpec>,
    },
    FourierMeasure {
        phi: PhiProfile,
        freqs: Vec<(Vec<f64>, f64)>,
    },
    QuantileMonge {
        phi: PhiProfile,
        u_grid: Arc<QuadratureGrid>,
    },
}

impl KernelRule {
    pub fn kind(&self) -> &'static str {
        match self {
            KernelRule::RadialHilbert { .. } => "radial_hilbert",
            KernelRule::TeeRadial { .. } => "tee_radial",
            KernelRule::LpOperator { .. } => "lp_operator",
            KernelRule::MetricPhi { .. } => "metric_phi",
            KernelRule::DistanceKernel { .. } => "distance",
            KernelRule::Mixture { .. } => "mixture",
            KernelRule::KmeMeasure { .. } => "kme_measure",
            KernelRule::FourierMeasure { .. } => "fourier_measure",
            KernelRule::QuantileMonge { .. } => "quantile_monge",
        }
    }

    fn phi(&self) -> Option<&PhiProfile> {
        match self {
            KernelRule::RadialHilbert { phi }
            | KernelRule::TeeRadial { phi, .. }
            | KernelRule::LpOperator { phi, .. }
            | KernelRule::MetricPhi { phi, .. }
            | KernelRule::KmeMeasure { phi, .. }
            | KernelRule::FourierMeasure { phi, .. }
            | KernelRule::QuantileMonge { phi, .. } => Some(phi),
            KernelRule::DistanceKernel { .. } | KernelRule::Mixture { .. } => None,
        }
    }
}

/// A symmetric positive definite kernel on a point space.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    space: PointSpace,
    rule: KernelRule,
}

impl KernelSpec {
    pub fn space(&self) -> &PointSpace {
        &self.space
    }

    pub fn rule(&self) -> &KernelRule {
        &self.rule
    }

    pub fn kind(&self) -> &'static str {
        self.rule.kind()
    }

    /// The radial profile, for rules that have one.
    pub fn phi(&self) -> Option<&PhiProfile> {
        self.rule.phi()
    }

    /// The constant diagonal value `k(x, x)`, when the rule has one: `φ(0)`
    /// for profile-based rules, the weighted sum for mixtures of such rules.
    pub fn diagonal_value(&self) -> Option<f64> {
        match &self.rule {
            KernelRule::DistanceKernel { .. } => None,
            KernelRule::Mixture { components } => components
                .iter()
                .map(|(k, w)| k.diagonal_value().map(|d| w * d))
                .sum(),
            rule => rule.phi().map(PhiProfile::at_zero),
        }
    }

    /// True for every rule whose profile must be strictly positive definite,
    /// i.e. the rule is expected to be integrally strictly positive definite.
    pub fn is_strict(&self) -> bool {
        match &self.rule {
            KernelRule::DistanceKernel { .. } => false,
            KernelRule::Mixture { components } => components.iter().all(|(k, _)| k.is_strict()),
            _ => true,
        }
    }

    pub fn is_bounded(&self) -> bool {
        match &self.rule {
            KernelRule::DistanceKernel { .. } => false,
            KernelRule::Mixture { components } => components.iter().all(|(k, _)| k.is_bounded()),
            _ => true,
        }
    }

    /// Checks that `x` is a valid argument, including rule-specific
    /// requirements (probability measures for the quantile kernel).
    pub fn check_point(&self, x: &Point) -> Result<()> {
        self.space.check_point(x)?;
        if let KernelRule::QuantileMonge { .. } = &self.rule {
            let m = x.as_measure().expect("checked by space");
            m.require_probability("quantile kernel argument")?;
        }
        Ok(())
    }

    /// `k(x, y)`.
    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.eval_unchecked(x, y))
    }

    /// Evaluation after argument checks. Arguments are put in a canonical
    /// order first so that the result is exactly symmetric.
    pub(crate) fn eval_unchecked(&self, x: &Point, y: &Point) -> f64 {
        if x.canonical_cmp(y) == Ordering::Greater {
            self.eval_ordered(y, x)
        } else {
            self.eval_ordered(x, y)
        }
    }

    fn eval_ordered(&self, x: &Point, y: &Point) -> f64 {
        match &self.rule {
            KernelRule::RadialHilbert { phi } => phi.eval_unchecked(self.sq_dist(x, y)),
            KernelRule::TeeRadial { phi, map } => {
                let t = match map {
                    MapSpec::Identity => self.sq_dist(x, y),
                    _ => {
                        let (a, b) = (map.apply(raw_values(x)), map.apply(raw_values(y)));
                        match &self.space {
                            PointSpace::FuncLp { grid, .. } => weighted_sq_dist(grid.weights(), &a, &b),
                            _ => euclidean_sq_dist(&a, &b),
                        }
                    }
                };
                phi.eval_unchecked(t)
            }
            KernelRule::LpOperator { phi, form, .. } => {
                let h: Vec<f64> = raw_values(x).iter().zip(raw_values(y)).map(|(a, b)| a - b).collect();
                phi.eval_unchecked(quadratic_form(form, &h).max(0.0))
            }
            KernelRule::MetricPhi { phi, metric } => phi.eval_unchecked(metric.dist_unchecked(x, y)),
            KernelRule::DistanceKernel { metric, z0 } => {
                metric.dist_unchecked(x, z0) + metric.dist_unchecked(y, z0) - metric.dist_unchecked(x, y)
            }
            KernelRule::Mixture { components } => components
                .iter()
                .map(|(k, w)| w * k.eval_ordered(x, y))
                .sum(),
            KernelRule::KmeMeasure { phi, k1 } => {
                let (mu, nu) = (measure_of(x), measure_of(y));
                if mu == nu {
                    return phi.at_zero();
                }
                let diff = measure_difference(mu, nu).expect("same base space");
                let q = crate::embeddings::double_sum(k1, &diff, &diff);
                phi.eval_unchecked(q.max(0.0))
            }
            KernelRule::FourierMeasure { phi, freqs } => {
                phi.eval_unchecked(fourier_sq_distance(freqs, measure_of(x), measure_of(y)))
            }
            KernelRule::QuantileMonge { phi, .. } => {
                phi.eval_unchecked(quantile_sq_distance(measure_of(x), measure_of(y)))
            }
        }
    }

    /// Squared Hilbert distance on `ℝ^d` or `L²(λ)`.
    fn sq_dist(&self, x: &Point, y: &Point) -> f64 {
        match (&self.space, x, y) {
            (PointSpace::FuncLp { grid, .. }, Point::Function(f), Point::Function(g)) => {
                weighted_sq_dist(grid.weights(), f.values(), g.values())
            }
            (_, Point::Vector(a), Point::Vector(b)) => euclidean_sq_dist(a, b),
            _ => unreachable!("points checked against the kernel space"),
        }
    }
}

fn raw_values(x: &Point) -> &[f64] {
    match x {
        Point::Vector(v) => v,
        Point::Function(f) => f.values(),
        Point::Measure(_) => unreachable!("measure points have no coordinate vector"),
    }
}

fn measure_of(x: &Point) -> &DiscreteMeasure {
    x.as_measure().expect("checked by space")
}

/// `Σᵢ Σⱼ Mᵢⱼ hᵢ hⱼ`, row-major.
fn quadratic_form(m: &DMatrix<f64>, h: &[f64]) -> f64 {
    let n = h.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * h[j];
        }
        total += h[i] * row;
    }
    total
}

fn require_space_eq(a: &PointSpace, b: &PointSpace, what: &str) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(shape(format!("{what}: {a} vs {b}")))
    }
}

/// `k(x, y) = φ(‖x - y‖²)` on `ℝ^d` or `L²(λ)`.
pub fn make_radial_hilbert(phi: PhiProfile, space: PointSpace) -> Result<KernelSpec> {
    phi.require_strict()?;
    match &space {
        PointSpace::Euclidean { dim } if *dim > 0 => {}
        PointSpace::FuncLp { p, .. } if *p == 2.0 => {}
        PointSpace::FuncLp { p, .. } => {
            return Err(domain(format!(
                "radial Hilbert kernels need p = 2 (the L^{p} norm is not a Hilbert norm)"
            )))
        }
        other => return Err(Error::Unsupported(format!("radial Hilbert kernel on {other}"))),
    }
    Ok(KernelSpec { space, rule: KernelRule::RadialHilbert { phi } })
}

/// `k(x, y) = φ(‖T x - T y‖²)` for an injective map `T`.
pub fn make_tee_radial(phi: PhiProfile, map: MapSpec, space: PointSpace) -> Result<KernelSpec> {
    phi.require_strict()?;
    if let PointSpace::FuncLp { p, .. } = &space {
        if !(*p > 1.0 && p.is_finite()) {
            return Err(domain(format!("L^p space needs p in (1, inf), got {p}")));
        }
    }
    map.validate(&space)?;
    Ok(KernelSpec { space, rule: KernelRule::TeeRadial { phi, map } })
}

fn grid_points(grid: &QuadratureGrid) -> Vec<Point> {
    grid.nodes().iter().map(|&x| Point::scalar(x)).collect()
}

fn weighted_base_matrix(k1: &KernelSpec, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
    require_space_eq(
        k1.space(),
        &PointSpace::Euclidean { dim: 1 },
        "the base kernel must live on the real line",
    )?;
    let pts = grid_points(grid);
    let lam = grid.weights();
    let m = pts.len();
    let mut out = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = lam[i] * k1.eval_unchecked(&pts[i], &pts[j]) * lam[j];
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("weighted base kernel matrix is not finite".into()));
    }
    Ok(out)
}

/// `Σᵢ λᵢ k₁(xᵢ, xᵢ)^{q/2}`, the discrete form of the integrability
/// condition on the base kernel's diagonal.
pub fn check_kernelqint(k1: &KernelSpec, q: f64, grid: &QuadratureGrid) -> Result<f64> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(domain(format!("q must lie in (1, inf), got {q}")));
    }
    require_space_eq(
        k1.space(),
        &PointSpace::Euclidean { dim: 1 },
        "the base kernel must live on the real line",
    )?;
    let mut total = 0.0;
    for (&x, &w) in grid.nodes().iter().zip(grid.weights()) {
        let p = Point::scalar(x);
        let d = k1.eval_unchecked(&p, &p);
        if d < 0.0 {
            return Err(Error::Numeric(format!("negative kernel diagonal {d} at node {x}")));
        }
        total += w * d.powf(q / 2.0);
    }
    if !total.is_finite() {
        return Err(Error::Numeric("integrability sum overflowed".into()));
    }
    Ok(total)
}

/// Discrete surrogate of strict positivity of `∫∫ k₁ g g dλ dλ`: the
/// smallest eigenvalue of `λᵢ k₁(xᵢ, xⱼ) λⱼ` must exceed `1e-10 · trace`.
///
/// Smooth base kernels (Gaussian) are numerically rank deficient on fine
/// grids and are rejected there; the Laplace kernel `exp(-|s - t|)` is
/// well conditioned.
pub fn check_lp_nondegeneracy(k1: &KernelSpec, grid: &QuadratureGrid) -> Result<bool> {
    let m = weighted_base_matrix(k1, grid)?;
    Ok(form_is_nondegenerate(&m))
}

fn form_is_nondegenerate(m: &DMatrix<f64>) -> bool {
    let trace = m.trace();
    let min = SymmetricEigen::new(m.clone()).eigenvalues.min();
    trace > 0.0 && min > RANK_TOL * trace
}

/// `k₂(f, g) = φ(ΣᵢΣⱼ λᵢλⱼ k₁(xᵢ,xⱼ) hᵢhⱼ)` with `h = f - g`, on `L^p(λ)`.
pub fn make_lp_operator(
    phi: PhiProfile,
    k1: KernelSpec,
    grid: Arc<QuadratureGrid>,
    p: f64,
) -> Result<KernelSpec> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(domain(format!(
            "the L^p operator kernel needs 1 < p < inf; p = {p} is excluded"
        )));
    }
    phi.require_strict()?;
    let q = p / (p - 1.0);
    check_kernelqint(&k1, q, &grid)?;
    let form = weighted_base_matrix(&k1, &grid)?;
    if !form_is_nondegenerate(&form) {
        return Err(Error::NonDegeneracy(
            "the base kernel's weighted Gram matrix is numerically singular on this grid".into(),
        ));
    }
    let space = PointSpace::func_lp(grid.clone(), p)?;
    Ok(KernelSpec {
        space,
        rule: KernelRule::LpOperator { phi, k1: Box::new(k1), grid, p, form },
    })
}

/// `k(x, y) = φ(ρ(x, y))` with the metric unsquared.
pub fn make_metric_phi(phi: PhiProfile, metric: MetricSpec) -> Result<KernelSpec> {
    metric.validate()?;
    phi.require_strict()?;
    Ok(KernelSpec { space: metric.space(), rule: KernelRule::MetricPhi { phi, metric } })
}

/// `k(x, y) = ρ(x, z₀) + ρ(y, z₀) - ρ(x, y)`.
pub fn make_distance_kernel(metric: MetricSpec, z0: Point) -> Result<KernelSpec> {
    metric.validate()?;
    let space = metric.space();
    space.check_point(&z0)?;
    Ok(KernelSpec { space, rule: KernelRule::DistanceKernel { metric, z0 } })
}

/// `k = Σ wᵢ kᵢ` for positive weights and kernels on a common space.
pub fn make_mixture(components: Vec<(KernelSpec, f64)>) -> Result<KernelSpec> {
    let first = components.first().ok_or_else(|| domain("a mixture needs at least one component"))?;
    let space = first.0.space().clone();
    for (k, w) in &components {
        if !(w.is_finite() && *w > 0.0) {
            return Err(domain(format!("mixture weights must be > 0, got {w}")));
        }
        require_space_eq(&space, k.space(), "mixture components live on different spaces")?;
    }
    Ok(KernelSpec { space, rule: KernelRule::Mixture { components } })
}

/// `k₂(μ, ν) = φ(∫∫ k₁ d(μ-ν) d(μ-ν))` on measures over `k₁`'s space.
pub fn make_kme_measure(phi: PhiProfile, k1: KernelSpec) -> Result<KernelSpec> {
    phi.require_strict()?;
    if !k1.is_bounded() {
        return Err(domain("the base kernel of a measure kernel must be bounded"));
    }
    let space = PointSpace::measures_over(k1.space().clone())?;
    Ok(KernelSpec { space, rule: KernelRule::KmeMeasure { phi, k1: Box::new(k1) } })
}

/// `k(μ, ν) = φ(Σ_s w_s |μ̂(s) - ν̂(s)|²)` on measures over `ℝ^d`, where the
/// frequency atoms `(s, w_s)` discretize a full-support probability measure.
pub fn make_fourier_measure(
    phi: PhiProfile,
    freqs: Vec<(Vec<f64>, f64)>,
    dim: usize,
) -> Result<KernelSpec> {
    phi.require_strict()?;
    if freqs.is_empty() {
        return Err(domain("the Fourier kernel needs at least one frequency"));
    }
    for (s, w) in &freqs {
        if s.len() != dim {
            return Err(shape(format!("frequency of length {} in dimension {dim}", s.len())));
        }
        if s.iter().any(|c| !c.is_finite()) {
            return Err(domain("frequencies must be finite"));
        }
        if !(w.is_finite() && *w > 0.0) {
            return Err(domain(format!("frequency weights must be > 0, got {w}")));
        }
    }
    let total: f64 = freqs.iter().map(|f| f.1).sum();
    if (total - 1.0).abs() > FREQ_WEIGHT_TOL {
        return Err(domain(format!("frequency weights sum to {total}, expected 1")));
    }
    let space = PointSpace::measures_over(PointSpace::euclidean(dim)?)?;
    Ok(KernelSpec { space, rule: KernelRule::FourierMeasure { phi, freqs } })
}

/// `n` standard Gaussian frequencies in `ℝ^dim` with weights `1/n`, drawn
/// from a ChaCha8 stream seeded by `seed`.
pub fn gaussian_frequencies(n: usize, dim: usize, seed: u64) -> Result<Vec<(Vec<f64>, f64)>> {
    if n == 0 || dim == 0 {
        return Err(domain("need n >= 1 frequencies in dimension >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = 1.0 / n as f64;
    Ok((0..n)
        .map(|_| {
            let s: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            (s, w)
        })
        .collect())
}

/// Real and imaginary parts of `μ̂(s) = Σⱼ aⱼ exp(i⟨xⱼ, s⟩)`.
pub fn fourier_transform(mu: &DiscreteMeasure, s: &[f64]) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, a) in mu.atoms() {
        let v = x.as_vector().expect("measure over R^d");
        let phase: f64 = v.iter().zip(s).map(|(a, b)| a * b).sum();
        re += a * phase.cos();
        im += a * phase.sin();
    }
    (re, im)
}

fn fourier_sq_distance(freqs: &[(Vec<f64>, f64)], mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    freqs
        .iter()
        .map(|(s, w)| {
            let (ra, ia) = fourier_transform(mu, s);
            let (rb, ib) = fourier_transform(nu, s);
            let (dr, di) = (ra - rb, ia - ib);
            w * (dr * dr + di * di)
        })
        .sum()
}

/// `k(μ, ν) = φ(W̃₂²(μ, ν))` where `W̃₂` is the `L²[0,1]` distance between
/// quantile functions, for probability measures on `ℝ`.
///
/// `u_grid` must be a grid on `[0, 1]`; it is used for reporting quantile
/// functions only, the distance itself is integrated exactly.
pub fn make_quantile_monge(phi: PhiProfile, u_grid: Arc<QuadratureGrid>) -> Result<KernelSpec> {
    phi.require_strict()?;
    if u_grid.domain() != (0.0, 1.0) {
        let (a, b) = u_grid.domain();
        return Err(domain(format!("the quantile grid must live on [0, 1], got [{a}, {b}]")));
    }
    let space = PointSpace::measures_over(PointSpace::Euclidean { dim: 1 })?;
    Ok(KernelSpec { space, rule: KernelRule::QuantileMonge { phi, u_grid } })
}

/// Sorted locations with cumulative masses; the last cumulative is pinned to 1.
fn quantile_steps(mu: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let mut atoms: Vec<(f64, f64)> = mu
        .atoms()
        .map(|(x, w)| (x.as_vector().expect("measure over R")[0], w))
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = 0.0;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (x, w) in atoms {
        cum += w;
        match steps.last_mut() {
            Some(last) if last.0 == x => last.1 = cum,
            _ => steps.push((x, cum)),
        }
    }
    if let Some(last) = steps.last_mut() {
        last.1 = 1.0;
    }
    steps
}

/// `∫₀¹ (F_μ⁻¹(u) - F_ν⁻¹(u))² du`, integrated exactly over the merged
/// breakpoints of the two step functions.
pub fn quantile_sq_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let a = quantile_steps(mu);
    let b = quantile_steps(nu);
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let end = a[i].1.min(b[j].1);
        let d = a[i].0 - b[j].0;
        if end > u {
            total += (end - u) * d * d;
            u = end;
        }
        if a[i].1 <= end {
            i += 1;
        }
        if b[j].1 <= end {
            j += 1;
        }
    }
    total
}

/// `F_μ⁻¹(u) = inf{x : F_μ(x) ≥ u}` at each node of `u_grid`.
pub fn quantile_function(mu: &DiscreteMeasure, u_grid: &QuadratureGrid) -> Result<Vec<f64>> {
    mu.require_probability("quantile function argument")?;
    if mu.space() != &(PointSpace::Euclidean { dim: 1 }) {
        return Err(Error::Unsupported("quantile functions exist only on the real line".into()));
    }
    let steps = quantile_steps(mu);
    Ok(u_grid
        .nodes()
        .iter()
        .map(|&u| {
            steps
                .iter()
                .find(|(_, c)| *c >= u)
                .map(|s| s.0)
                .unwrap_or(steps[steps.len() - 1].0)
        })
        .collect())
}

impl KernelSpec {
    /// The `u_grid` of a quantile kernel.
    pub fn quantile_grid(&self) -> Option<&Arc<QuadratureGrid>> {
        match &self.rule {
            KernelRule::QuantileMonge { u_grid, .. } => Some(u_grid),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::FunctionSample;
    use approx::assert_relative_eq;

    fn gauss(alpha: f64) -> PhiProfile {
        PhiProfile::gaussian(alpha).unwrap()
    }

    fn r1() -> PointSpace {
        PointSpace::Euclidean { dim: 1 }
    }

    fn laplace_k1() -> KernelSpec {
        make_metric_phi(gauss(1.0), MetricSpec::Euclidean { dim: 1 }).unwrap()
    }

    #[test]
    fn radial_hilbert_examples() {
        let k = make_radial_hilbert(gauss(0.5), PointSpace::Euclidean { dim: 2 }).unwrap();
        let x = Point::Vector(vec![0.3, -1.0]);
        assert_eq!(k.eval(&x, &x).unwrap(), 1.0);
        let y = Point::Vector(vec![1.3, 0.0]);
        assert_relative_eq!(k.eval(&x, &y).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);

        let constant = PhiProfile::discrete_laplace(vec![(0.0, 1.0)]).unwrap();
        assert!(matches!(
            make_radial_hilbert(constant, r1()),
            Err(Error::ProfileClass(_))
        ));
        let grid = Arc::new(QuadratureGrid::unit_trapezoid(11).unwrap());
        assert!(make_radial_hilbert(gauss(1.0), PointSpace::FuncLp { grid: grid.clone(), p: 1.5 }).is_err());
        assert!(make_radial_hilbert(gauss(1.0), PointSpace::FuncLp { grid, p: 2.0 }).is_ok());
    }

    #[test]
    fn tee_radial_examples() {
        let k = make_tee_radial(gauss(0.5), MapSpec::DiagonalScale { factors: vec![2.0] }, r1()).unwrap();
        let v = k.eval(&Point::scalar(0.0), &Point::scalar(1.0)).unwrap();
        assert_relative_eq!(v, (-2.0f64).exp(), max_relative = 1e-15);

        assert!(matches!(
            make_tee_radial(gauss(0.5), MapSpec::DiagonalScale { factors: vec![0.0] }, r1()),
            Err(Error::Injectivity(_))
        ));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            make_tee_radial(
                gauss(0.5),
                MapSpec::LinearGridMap { matrix: singular },
                PointSpace::Euclidean { dim: 2 }
            ),
            Err(Error::Injectivity(_))
        ));

        let id = make_tee_radial(gauss(0.3), MapSpec::Identity, PointSpace::Euclidean { dim: 2 }).unwrap();
        let rh = make_radial_hilbert(gauss(0.3), PointSpace::Euclidean { dim: 2 }).unwrap();
        for i in 0..20 {
            let x = Point::Vector(vec![i as f64 * 0.37, -(i as f64).sin()]);
            let y = Point::Vector(vec![(i as f64).cos(), 0.1 * i as f64]);
            assert_eq!(id.eval(&x, &y).unwrap(), rh.eval(&x, &y).unwrap());
        }
    }

    #[test]
    fn lp_operator_quadratic_form_matches_double_loop() {
        let grid = Arc::new(QuadratureGrid::unit_trapezoid(9).unwrap());
        // wide Gaussians are numerically singular on 9 nodes; alpha = 20 is not
        let k1 = make_radial_hilbert(gauss(20.0), r1()).unwrap();
        let phi = gauss(0.8);
        let k = make_lp_operator(phi.clone(), k1, grid.clone(), 1.5).unwrap();
        let c = 0.7;
        let f = FunctionSample::constant(grid.clone(), c + 1.0).unwrap();
        let g = FunctionSample::constant(grid.clone(), 1.0).unwrap();
        let nodes = grid.nodes();
        let lam = grid.weights();
        let mut oracle = 0.0;
        for i in 0..nodes.len() {
            for j in 0..nodes.len() {
                let d = nodes[i] - nodes[j];
                oracle += lam[i] * lam[j] * (-20.0 * d * d).exp();
            }
        }
        oracle *= c * c;
        let got = k.eval(&Point::Function(f.clone()), &Point::Function(g)).unwrap();
        assert_relative_eq!(got, (-0.8 * oracle).exp(), max_relative = 1e-13);
        assert_eq!(k.eval(&Point::Function(f.clone()), &Point::Function(f)).unwrap(), 1.0);
    }

    #[test]
    fn lp_operator_rejections() {
        let grid = Arc::new(QuadratureGrid::unit_trapezoid(9).unwrap());
        for p in [1.0, f64::INFINITY, 0.5] {
            assert!(matches!(
                make_lp_operator(gauss(1.0), laplace_k1(), grid.clone(), p),
                Err(Error::Domain(_))
            ));
        }
        // alpha so small that k1 is identically 1 in floating point
        let rank_one = make_radial_hilbert(gauss(1e-300), r1()).unwrap();
        assert!(matches!(
            make_lp_operator(gauss(1.0), rank_one, grid.clone(), 2.0),
            Err(Error::NonDegeneracy(_))
        ));
        assert!(make_lp_operator(gauss(1.0), laplace_k1(), grid, 3.0).is_ok());
    }

    #[test]
    fn nondegeneracy_examples() {
        let small = QuadratureGrid::unit_trapezoid(5).unwrap();
        let gk = make_radial_hilbert(gauss(0.5), r1()).unwrap();
        assert!(check_lp_nondegeneracy(&gk, &small).unwrap());
        let single = QuadratureGrid::new(vec![0.5], vec![1.0]).unwrap();
        assert!(check_lp_nondegeneracy(&gk, &single).unwrap());
        let fine = QuadratureGrid::unit_trapezoid(201).unwrap();
        assert!(check_lp_nondegeneracy(&laplace_k1(), &fine).unwrap());
    }

    #[test]
    fn kernelqint_examples() {
        let grid = QuadratureGrid::unit_trapezoid(21).unwrap();
        let gk = make_radial_hilbert(gauss(0.5), r1()).unwrap();
        for q in [1.5, 2.0, 3.0] {
            assert_relative_eq!(check_kernelqint(&gk, q, &grid).unwrap(), 1.0, max_relative = 1e-14);
        }
        let scaled = make_radial_hilbert(PhiProfile::discrete_laplace(vec![(0.5, 4.0)]).unwrap(), r1()).unwrap();
        assert_relative_eq!(check_kernelqint(&scaled, 2.0, &grid).unwrap(), 4.0, max_relative = 1e-14);
        let mix = make_mixture(vec![(gk.clone(), 0.25), (laplace_k1(), 0.75)]).unwrap();
        assert_relative_eq!(check_kernelqint(&mix, 4.0, &grid).unwrap(), 1.0, max_relative = 1e-14);
        assert!(check_kernelqint(&gk, 1.0, &grid).is_err());
    }

    #[test]
    fn metric_phi_examples() {
        let k = laplace_k1();
        for (a, b) in [(0.0, 1.0), (-2.5, 0.75), (3.0, 3.0)] {
            let v = k.eval(&Point::scalar(a), &Point::scalar(b)).unwrap();
            assert_relative_eq!(v, (-(a - b as f64).abs()).exp(), max_relative = 1e-15);
        }
        let grid = Arc::new(QuadratureGrid::unit_trapezoid(11).unwrap());
        assert!(matches!(
            make_metric_phi(gauss(1.0), MetricSpec::Lp { grid: grid.clone(), p: 3.0 }),
            Err(Error::Domain(_))
        ));
        assert!(make_metric_phi(gauss(1.0), MetricSpec::Lp { grid, p: 1.5 }).is_ok());
    }

    #[test]
    fn distance_kernel_examples() {
        let k = make_distance_kernel(MetricSpec::Euclidean { dim: 1 }, Point::scalar(0.0)).unwrap();
        assert_eq!(k.eval(&Point::scalar(4.2), &Point::scalar(0.0)).unwrap(), 0.0);
        assert_eq!(k.eval(&Point::scalar(3.0), &Point::scalar(3.0)).unwrap(), 6.0);
        assert_eq!(k.eval(&Point::scalar(0.0), &Point::scalar(1.0)).unwrap(), 0.0);
        assert!(make_distance_kernel(MetricSpec::Euclidean { dim: 1 }, Point::Vector(vec![0.0, 0.0])).is_err());
        assert!(!k.is_bounded());
    }

    #[test]
    fn mixture_examples() {
        let k1 = make_radial_hilbert(gauss(1.0), r1()).unwrap();
        let k2 = make_radial_hilbert(gauss(2.0), r1()).unwrap();
        let single = make_mixture(vec![(k1.clone(), 1.0)]).unwrap();
        let (x, y) = (Point::scalar(0.2), Point::scalar(-0.9));
        assert_eq!(single.eval(&x, &y).unwrap(), k1.eval(&x, &y).unwrap());
        let mix = make_mixture(vec![(k1, 0.5), (k2, 0.5)]).unwrap();
        let v = mix.eval(&Point::scalar(0.0), &Point::scalar(1.0)).unwrap();
        assert_relative_eq!(v, 0.5 * (-1.0f64).exp() + 0.5 * (-2.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, 0.251_607_4, epsilon = 1e-7);
        assert!(make_mixture(vec![]).is_err());
        let k3 = make_radial_hilbert(gauss(1.0), PointSpace::Euclidean { dim: 2 }).unwrap();
        let k4 = make_radial_hilbert(gauss(1.0), r1()).unwrap();
        assert!(matches!(make_mixture(vec![(k3, 1.0), (k4, 1.0)]), Err(Error::Shape(_))));
    }

    #[test]
    fn kme_measure_dirac_example() {
        let k1 = make_radial_hilbert(gauss(0.5), PointSpace::Euclidean { dim: 2 }).unwrap();
        let phi = gauss(1.0);
        let k = make_kme_measure(phi, k1).unwrap();
        let base = PointSpace::Euclidean { dim: 2 };
        let dx = DiscreteMeasure::dirac(base.clone(), Point::Vector(vec![0.0, 0.0])).unwrap();
        let dy = DiscreteMeasure::dirac(base, Point::Vector(vec![1.0, 1.0])).unwrap();
        let arg = 2.0 - 2.0 * (-1.0f64).exp();
        assert_relative_eq!(arg, 1.264_241_1, epsilon = 1e-7);
        let v = k.eval(&Point::Measure(dx.clone()), &Point::Measure(dy)).unwrap();
        assert_relative_eq!(v, (-arg).exp(), max_relative = 1e-14);
        assert_eq!(k.eval(&Point::Measure(dx.clone()), &Point::Measure(dx)).unwrap(), 1.0);
    }

    #[test]
    fn fourier_examples() {
        let k = make_fourier_measure(gauss(1.0), vec![(vec![1.0], 1.0)], 1).unwrap();
        let d0 = DiscreteMeasure::on_line(&[0.0], vec![1.0]).unwrap();
        let dpi = DiscreteMeasure::on_line(&[std::f64::consts::PI], vec![1.0]).unwrap();
        let v = k.eval(&Point::Measure(d0.clone()), &Point::Measure(dpi)).unwrap();
        assert_relative_eq!(v, (-4.0f64).exp(), max_relative = 1e-14);
        assert_eq!(k.eval(&Point::Measure(d0.clone()), &Point::Measure(d0)).unwrap(), 1.0);
        assert!(make_fourier_measure(gauss(1.0), vec![(vec![1.0], 0.5)], 1).is_err());
        let f = gaussian_frequencies(64, 3, 7).unwrap();
        assert_eq!(f, gaussian_frequencies(64, 3, 7).unwrap());
        assert!(make_fourier_measure(gauss(1.0), f, 3).is_ok());
    }

    #[test]
    fn quantile_examples() {
        let u = Arc::new(QuadratureGrid::unit_trapezoid(11).unwrap());
        let k = make_quantile_monge(gauss(1.0), u.clone()).unwrap();
        let a = DiscreteMeasure::on_line(&[0.0], vec![1.0]).unwrap();
        let b = DiscreteMeasure::on_line(&[1.0], vec![1.0]).unwrap();
        assert_relative_eq!(
            k.eval(&Point::Measure(a), &Point::Measure(b)).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        let mu = DiscreteMeasure::on_line(&[0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::on_line(&[0.5, 1.5], vec![0.5, 0.5]).unwrap();
        assert_eq!(quantile_sq_distance(&mu, &nu).sqrt(), 0.5);
        let signed = DiscreteMeasure::on_line(&[0.0, 1.0], vec![1.5, -0.5]).unwrap();
        assert!(matches!(
            k.eval(&Point::Measure(signed), &Point::Measure(mu.clone())),
            Err(Error::Domain(_))
        ));
        assert_eq!(quantile_function(&mu, &u).unwrap()[0], 0.0);
        assert_eq!(quantile_function(&mu, &u).unwrap()[10], 1.0);
        assert_eq!(quantile_function(&mu, &u).unwrap()[6], 1.0);
        let bad = Arc::new(QuadratureGrid::trapezoid(0.0, 2.0, 5).unwrap());
        assert!(make_quantile_monge(gauss(1.0), bad).is_err());
    }

    #[test]
    fn quantile_merges_duplicate_locations() {
        let mu = DiscreteMeasure::on_line(&[2.0, 0.0, 2.0], vec![0.25, 0.5, 0.25]).unwrap();
        let nu = DiscreteMeasure::on_line(&[0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(quantile_sq_distance(&mu, &nu), 0.0);
    }
}
