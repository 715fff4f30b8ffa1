//! Kernel mean embedding arithmetic for discrete measures.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{shape, Error, Result};
use crate::kernels::KernelSpec;
use crate::spaces::{DiscreteMeasure, Point};

/// Number of double-sum terms above which compensated summation is used.
pub const COMPENSATED_THRESHOLD: usize = 10_000;

/// Relative clamping band for squared RKHS norms.
pub const CLAMP_TOL: f64 = 1e-10;

/// A symmetric kernel matrix `K[i][j] = k(xᵢ, xⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    kernel_id: String,
}

impl GramMatrix {
    /// Wraps an existing symmetric matrix.
    pub fn from_matrix(entries: DMatrix<f64>, kernel_id: impl Into<String>) -> Result<Self> {
        if !entries.is_square() {
            return Err(shape("a Gram matrix must be square"));
        }
        Ok(GramMatrix { entries, kernel_id: kernel_id.into() })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn kernel_id(&self) -> &str {
        &self.kernel_id
    }

    pub fn point_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

/// Builds the Gram matrix of `k` on `points`. Only the upper triangle is
/// evaluated; rows are computed in parallel and mirrored, so the result is
/// exactly symmetric and independent of scheduling.
pub fn gram(k: &KernelSpec, points: &[Point]) -> Result<GramMatrix> {
    for p in points {
        k.check_point(p)?;
    }
    Ok(gram_unchecked(k, points))
}

pub(crate) fn gram_unchecked(k: &KernelSpec, points: &[Point]) -> GramMatrix {
    let m = points.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| k.eval_unchecked(&points[i], &points[j])).collect())
        .collect();
    let mut entries = DMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            entries[(i, i + off)] = v;
            entries[(i + off, i)] = v;
        }
    }
    GramMatrix { entries, kernel_id: k.kind().to_string() }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `Σᵢ Σⱼ aᵢ bⱼ k(zᵢ, wⱼ)` in row-major order; compensated above
/// [`COMPENSATED_THRESHOLD`] terms. Points must already be checked.
pub(crate) fn double_sum(k: &KernelSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    if mu.len() * nu.len() > COMPENSATED_THRESHOLD {
        let mut acc = CompensatedSum::default();
        for (z, a) in mu.atoms() {
            for (w, b) in nu.atoms() {
                acc.add(a * b * k.eval_unchecked(z, w));
            }
        }
        acc.value()
    } else {
        let mut acc = 0.0;
        for (z, a) in mu.atoms() {
            for (w, b) in nu.atoms() {
                acc += a * b * k.eval_unchecked(z, w);
            }
        }
        acc
    }
}

fn check_measure(k: &KernelSpec, mu: &DiscreteMeasure) -> Result<()> {
    if mu.space() != k.space() {
        return Err(shape(format!(
            "measure on {} used with a kernel on {}",
            mu.space(),
            k.space()
        )));
    }
    for p in mu.points() {
        k.check_point(p)?;
    }
    Ok(())
}

/// `⟨Φ_k(μ), Φ_k(ν)⟩ = ∫∫ k dμ dν`.
pub fn kme_inner(k: &KernelSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_measure(k, mu)?;
    check_measure(k, nu)?;
    Ok(double_sum(k, mu, nu))
}

/// Scale used by the clamping band: the diagonal value for profile rules,
/// otherwise the largest diagonal entry on the support.
fn diag_scale(k: &KernelSpec, mu: &DiscreteMeasure) -> f64 {
    k.diagonal_value().unwrap_or_else(|| {
        mu.points()
            .iter()
            .map(|z| k.eval_unchecked(z, z).abs())
            .fold(0.0, f64::max)
    })
}

/// Clamps `v` to zero inside `±1e-10 · (Σ|wᵢ|)² · scale`.
pub(crate) fn clamp_sq_norm(v: f64, abs_mass: f64, scale: f64) -> f64 {
    let tol = CLAMP_TOL * abs_mass * abs_mass * scale.max(f64::MIN_POSITIVE);
    if v.abs() <= tol {
        0.0
    } else {
        v
    }
}

/// `‖Φ_k(μ)‖² = ∫∫ k dμ dμ`.
///
/// Values within `±1e-10 · (Σ|wᵢ|)² · φ(0)` of zero are returned as exactly
/// zero; for the distance kernel the largest diagonal entry on the support
/// replaces `φ(0)`. A value below the band means the kernel is not positive
/// semidefinite on this support and is returned unchanged.
pub fn kme_sq_norm(k: &KernelSpec, mu: &DiscreteMeasure) -> Result<f64> {
    check_measure(k, mu)?;
    let raw = double_sum(k, mu, mu);
    Ok(clamp_sq_norm(raw, mu.abs_mass(), diag_scale(k, mu)))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(g: &GramMatrix) -> Result<f64> {
    min_eigenvalue_of(g.entries())
}

pub fn min_eigenvalue_of(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 || !m.is_square() {
        return Err(shape("eigenvalues need a non-empty square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    Ok(SymmetricEigen::new(m.clone()).eigenvalues.min())
}
