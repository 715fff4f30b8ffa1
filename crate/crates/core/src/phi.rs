//! Radial profiles `φ(t) = ∫ exp(-x t) dν(x)`, the Laplace transforms of
//! finite Borel measures on `[0, ∞)`.
//!
//! A profile is represented either by a discrete mixing measure or by one of
//! three closed forms whose complete monotonicity is known:
//!
//! | family             | `φ(t)`                 | mixing measure `ν`       |
//! |--------------------|------------------------|--------------------------|
//! | `discrete_laplace` | `Σ wᵢ exp(-xᵢ t)`      | `Σ wᵢ δ_{xᵢ}`            |
//! | `gaussian`         | `exp(-α t)`            | `δ_α`                    |
//! | `exp_sqrt`         | `exp(-c √t)`           | one-sided stable, density|
//! | `inverse_rational` | `(1 + t/s)^(-β)`       | Gamma(β, s)              |
//!
//! Composed with a squared Hilbert norm, `gaussian` gives the Gaussian kernel
//! and `exp_sqrt` the Laplace kernel.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A completely monotone radial profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PhiProfile {
    /// `φ(t) = Σ wᵢ exp(-xᵢ t)` with atoms `(xᵢ, wᵢ)`, `xᵢ ≥ 0`, `wᵢ > 0`.
    DiscreteLaplace { atoms: Vec<(f64, f64)> },
    /// `φ(t) = exp(-α t)`.
    Gaussian { alpha: f64 },
    /// `φ(t) = exp(-c √t)`.
    ExpSqrt { c: f64 },
    /// `φ(t) = (1 + t/scale)^(-β)`.
    InverseRational { beta: f64, scale: f64 },
}

impl PhiProfile {
    pub fn gaussian(alpha: f64) -> Result<Self> {
        let p = PhiProfile::Gaussian { alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn discrete_laplace(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let p = PhiProfile::DiscreteLaplace { atoms };
        p.validate()?;
        Ok(p)
    }

    pub fn exp_sqrt(c: f64) -> Result<Self> {
        let p = PhiProfile::ExpSqrt { c };
        p.validate()?;
        Ok(p)
    }

    pub fn inverse_rational(beta: f64, scale: f64) -> Result<Self> {
        let p = PhiProfile::InverseRational { beta, scale };
        p.validate()?;
        Ok(p)
    }

    /// Checks parameter invariants. Deserialized profiles must pass this
    /// before use; the named constructors call it already.
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(domain(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match self {
            PhiProfile::DiscreteLaplace { atoms } => {
                if atoms.is_empty() {
                    return Err(domain("discrete_laplace needs at least one atom"));
                }
                for &(rate, weight) in atoms {
                    if !(rate.is_finite() && rate >= 0.0) {
                        return Err(domain(format!("atom rate must be finite and >= 0, got {rate}")));
                    }
                    positive("atom weight", weight)?;
                }
                Ok(())
            }
            PhiProfile::Gaussian { alpha } => positive("alpha", *alpha),
            PhiProfile::ExpSqrt { c } => positive("c", *c),
            PhiProfile::InverseRational { beta, scale } => {
                positive("beta", *beta)?;
                positive("scale", *scale)
            }
        }
    }

    /// Evaluates `φ(t)` for `t ≥ 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(domain(format!("phi evaluated at t = {t}; need t >= 0")));
        }
        Ok(self.eval_unchecked(t))
    }

    /// `φ(t)` without the sign check. Callers guarantee `t ≥ 0`.
    pub(crate) fn eval_unchecked(&self, t: f64) -> f64 {
        match self {
            PhiProfile::DiscreteLaplace { atoms } => {
                atoms.iter().map(|&(rate, w)| w * (-rate * t).exp()).sum()
            }
            PhiProfile::Gaussian { alpha } => (-alpha * t).exp(),
            PhiProfile::ExpSqrt { c } => (-c * t.sqrt()).exp(),
            PhiProfile::InverseRational { beta, scale } => (1.0 + t / scale).powf(-beta),
        }
    }

    /// `φ(0)`, the total mass of the mixing measure.
    pub fn at_zero(&self) -> f64 {
        match self {
            PhiProfile::DiscreteLaplace { atoms } => atoms.iter().map(|a| a.1).sum(),
            _ => 1.0,
        }
    }

    /// True iff `ν ≠ 0` and `supp ν ≠ {0}`, i.e. the induced radial kernel is
    /// strictly positive definite.
    pub fn is_strictly_pd_class(&self) -> bool {
        match self {
            PhiProfile::DiscreteLaplace { atoms } => {
                atoms.iter().any(|&(rate, w)| rate > 0.0 && w > 0.0)
            }
            _ => true,
        }
    }

    /// Numerical complete-monotonicity check on a grid; see
    /// [`complete_monotonicity_check`].
    pub fn complete_monotonicity_check(&self, t_grid: &[f64], max_order: usize) -> Result<bool> {
        complete_monotonicity_check(|t| self.eval_unchecked(t), t_grid, max_order)
    }

    /// Fails with [`Error::ProfileClass`] unless the profile is in `Φ∞⁺`.
    pub(crate) fn require_strict(&self) -> Result<()> {
        self.validate()?;
        if self.is_strictly_pd_class() {
            Ok(())
        } else {
            Err(Error::ProfileClass(
                "mixing measure is zero or concentrated at 0; the kernel would be constant".into(),
            ))
        }
    }
}

/// Heuristic Bernstein check: every normalized finite difference of order
/// `n ≤ max_order` satisfies `(-1)ⁿ Δⁿφ ≥ -tol` with `tol = 1e-10·|φ(0)|`.
///
/// On non-uniform grids the differences are divided differences rescaled by
/// `n!·hⁿ` (with `h` the mean spacing of the stencil), which reduces to the
/// forward difference on a uniform grid and keeps the sign of `φ⁽ⁿ⁾` at some
/// interior point. Passing this test does not prove complete monotonicity.
pub fn complete_monotonicity_check<F>(phi: F, t_grid: &[f64], max_order: usize) -> Result<bool>
where
    F: Fn(f64) -> f64,
{
    if t_grid.is_empty() {
        return Err(domain("empty t grid"));
    }
    if max_order > 6 {
        return Err(domain(format!("max_order {max_order} exceeds 6")));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("t grid must be strictly increasing"));
    }
    if t_grid[0] < 0.0 {
        return Err(domain("t grid must be nonnegative"));
    }

    let values: Vec<f64> = t_grid.iter().map(|&t| phi(t)).collect();
    let tol = 1e-10 * phi(0.0).abs();

    // Divided-difference table, one order at a time.
    let mut divided = values.clone();
    let mut factorial = 1.0;
    for order in 0..=max_order {
        if order > 0 {
            factorial *= order as f64;
            let next: Vec<f64> = divided
                .windows(2)
                .enumerate()
                .map(|(i, w)| (w[1] - w[0]) / (t_grid[i + order] - t_grid[i]))
                .collect();
            divided = next;
        }
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        for (i, &d) in divided.iter().enumerate() {
            let h = (t_grid[i + order] - t_grid[i]) / order.max(1) as f64;
            let scaled = if order == 0 { d } else { d * factorial * h.powi(order as i32) };
            if sign * scaled < -tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(step: f64, end: f64) -> Vec<f64> {
        let n = (end / step).round() as usize;
        (0..=n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn eval_examples() {
        let g = PhiProfile::gaussian(1.0).unwrap();
        assert_eq!(g.eval(0.0).unwrap(), 1.0);
        assert_relative_eq!(g.eval(2f64.ln()).unwrap(), 0.5, epsilon = 1e-15);
        let d = PhiProfile::discrete_laplace(vec![(1.0, 0.5), (2.0, 0.5)]).unwrap();
        assert_eq!(d.eval(0.0).unwrap(), 1.0);
        let e = PhiProfile::exp_sqrt(1.0).unwrap();
        assert_relative_eq!(e.eval(4.0).unwrap(), 0.135_335_283_236_612_7, epsilon = 1e-15);
    }

    #[test]
    fn negative_argument_is_rejected() {
        let g = PhiProfile::gaussian(1.0).unwrap();
        assert!(matches!(g.eval(-1e-3), Err(Error::Domain(_))));
        assert!(matches!(g.eval(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_parameters() {
        assert!(PhiProfile::gaussian(0.0).is_err());
        assert!(PhiProfile::exp_sqrt(-1.0).is_err());
        assert!(PhiProfile::inverse_rational(1.0, 0.0).is_err());
        assert!(PhiProfile::discrete_laplace(vec![]).is_err());
        assert!(PhiProfile::discrete_laplace(vec![(-1.0, 1.0)]).is_err());
        assert!(PhiProfile::discrete_laplace(vec![(1.0, 0.0)]).is_err());
    }

    #[test]
    fn strict_class_membership() {
        assert!(!PhiProfile::discrete_laplace(vec![(0.0, 1.0)]).unwrap().is_strictly_pd_class());
        assert!(PhiProfile::gaussian(2.0).unwrap().is_strictly_pd_class());
        assert!(PhiProfile::discrete_laplace(vec![(0.0, 0.5), (3.0, 0.5)])
            .unwrap()
            .is_strictly_pd_class());
        assert!(PhiProfile::exp_sqrt(1.0).unwrap().is_strictly_pd_class());
        assert!(PhiProfile::inverse_rational(1.0, 1.0).unwrap().is_strictly_pd_class());
    }

    #[test]
    fn monotonicity_check_examples() {
        let g = grid(0.5, 5.0);
        let gauss = PhiProfile::gaussian(1.0).unwrap();
        assert!(gauss.complete_monotonicity_check(&g, 4).unwrap());
        let inv = PhiProfile::inverse_rational(1.0, 1.0).unwrap();
        assert!(inv.complete_monotonicity_check(&g, 4).unwrap());
        assert!(!complete_monotonicity_check(f64::cos, &g, 4).unwrap());
        assert!(complete_monotonicity_check(f64::cos, &[], 2).is_err());
        assert!(gauss.complete_monotonicity_check(&g, 7).is_err());
    }

    #[test]
    fn inverse_rational_differences_alternate() {
        // 1/(1+t): Δⁿ at step h has closed form (-1)ⁿ n! hⁿ / Π_{j=0..n}(1+t+jh).
        let h = 0.5;
        for n in 0..=4usize {
            for i in 0..(11 - n) {
                let t = i as f64 * h;
                let fd: f64 = (0..=n)
                    .map(|j| {
                        let binom = (0..j).fold(1.0, |acc, r| acc * (n - r) as f64 / (r + 1) as f64);
                        let s = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
                        s * binom / (1.0 + t + j as f64 * h)
                    })
                    .sum();
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert!(sign * fd > 0.0, "order {n} at t={t}: {fd}");
            }
        }
    }

    #[test]
    fn shipped_variants_pass_on_fine_grid() {
        let g = grid(0.25, 10.0);
        for p in [
            PhiProfile::gaussian(0.7).unwrap(),
            PhiProfile::discrete_laplace(vec![(0.0, 0.2), (0.5, 0.3), (3.0, 0.5)]).unwrap(),
            PhiProfile::exp_sqrt(1.3).unwrap(),
            PhiProfile::inverse_rational(2.5, 0.8).unwrap(),
        ] {
            assert!(p.complete_monotonicity_check(&g, 4).unwrap(), "{p:?}");
        }
    }

    #[test]
    fn json_encoding() {
        let p: PhiProfile = serde_json::from_str(r#"{"family":"gaussian","alpha":0.5}"#).unwrap();
        assert_eq!(p, PhiProfile::Gaussian { alpha: 0.5 });
        let p: PhiProfile =
            serde_json::from_str(r#"{"family":"discrete_laplace","atoms":[[1.0,0.5],[2.0,0.5]]}"#)
                .unwrap();
        assert_eq!(p.at_zero(), 1.0);
        let p: PhiProfile =
            serde_json::from_str(r#"{"family":"inverse_rational","beta":1.0,"scale":1.0}"#).unwrap();
        assert_eq!(p.eval(1.0).unwrap(), 0.5);
        let p: PhiProfile = serde_json::from_str(r#"{"family":"exp_sqrt","c":1.0}"#).unwrap();
        assert!(p.validate().is_ok());
    }
}
