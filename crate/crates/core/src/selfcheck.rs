//! Built-in invariant suite run by `kernmetric selfcheck`.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::{gram, kme_inner, kme_sq_norm, min_eigenvalue};
use crate::io::fmt_f64;
use crate::kernels::{
    make_distance_kernel, make_lp_operator, make_radial_hilbert, make_tee_radial, quantile_sq_distance,
    KernelSpec, MapSpec,
};
use crate::phi::{complete_monotonicity_check, PhiProfile};
use crate::sampling::{case_frequencies, kernel_zoo, mixture_components, normal_vector, random_function, rng, KernelCase};
use crate::spaces::{
    lp_norm, measure_difference, DiscreteMeasure, FunctionSample, MetricSpec, Point, PointSpace, QuadratureGrid,
};
use crate::stats::{energy_distance, expected_score, mmd, permutation_test};

type Check = fn(&Ctx) -> Result<(), String>;

/// Options for [`run`].
#[derive(Debug, Clone, Copy, Default)]
pub struct Options {
    /// Perturbs one computed quantity so that a check fails; used to test the
    /// failure path.
    #[doc(hidden)]
    pub inject_fault: bool,
}

struct Ctx {
    zoo: Vec<KernelCase>,
    fault: f64,
}

/// Outcome of one named invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub error: Option<String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

const CHECKS: &[(&str, Check)] = &[
    ("phi.closed_forms", phi_closed_forms),
    ("phi.nonincreasing", phi_nonincreasing),
    ("phi.complete_monotonicity", phi_complete_monotonicity),
    ("phi.domain_errors", phi_domain_errors),
    ("spaces.trapezoid_exact_on_linear", trapezoid_linear),
    ("spaces.lp_triangle_inequality", lp_triangle),
    ("spaces.difference_mass", difference_mass),
    ("kernels.symmetry", kernel_symmetry),
    ("kernels.diagonal", kernel_diagonal),
    ("kernels.boundedness", kernel_bounded),
    ("kernels.psd", kernel_psd),
    ("kernels.strict_pd", kernel_strict_pd),
    ("kernels.tee_identity_is_radial", tee_identity),
    ("kernels.constructor_gatekeeping", gatekeeping),
    ("kernels.quantile_sorted_coupling", quantile_sorted),
    ("kernels.fourier_trig_oracle", fourier_oracle),
    ("embeddings.zero_norm_of_difference", zero_norm),
    ("embeddings.homogeneity", homogeneity),
    ("embeddings.mixture_identity", mixture_identity),
    ("embeddings.zero_mass_positive_norm", zero_mass_norm),
    ("embeddings.distance_z0_invariance", z0_invariance),
    ("stats.mmd_pseudometric", mmd_pseudometric),
    ("stats.mmd_score_identity", mmd_score_identity),
    ("stats.propriety", propriety),
    ("stats.energy_equivalence", energy_equivalence),
    ("stats.permutation_determinism", permutation_determinism),
    ("stats.permutation_separated_constants", permutation_constants),
    ("io.float_round_trip", float_round_trip),
];

/// Runs every check, writing one `PASS`/`FAIL` line per invariant and a
/// summary line. Returns the outcomes in order.
pub fn run(opts: Options, out: &mut impl Write) -> std::io::Result<Vec<CheckOutcome>> {
    let ctx = Ctx { zoo: kernel_zoo(), fault: if opts.inject_fault { 1e-3 } else { 0.0 } };
    let mut outcomes = Vec::with_capacity(CHECKS.len());
    for (name, check) in CHECKS {
        let error = check(&ctx).err();
        match &error {
            None => writeln!(out, "PASS  {name}")?,
            Some(msg) => writeln!(out, "FAIL  {name}: {msg}")?,
        }
        outcomes.push(CheckOutcome { name, error });
    }
    let passed = outcomes.iter().filter(|o| o.error.is_none()).count();
    writeln!(out, "{passed}/{} invariants passed", outcomes.len())?;
    Ok(outcomes)
}

/// Names of all invariants, in execution order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

fn shipped_profiles() -> Vec<PhiProfile> {
    vec![
        PhiProfile::Gaussian { alpha: 0.5 },
        PhiProfile::DiscreteLaplace { atoms: vec![(0.5, 0.25), (2.0, 0.75)] },
        PhiProfile::ExpSqrt { c: 1.3 },
        PhiProfile::InverseRational { beta: 0.7, scale: 2.0 },
    ]
}

fn phi_closed_forms(_: &Ctx) -> Result<(), String> {
    let t: f64 = 1.7;
    let expected = [
        (-0.5 * t).exp(),
        0.25 * (-0.5 * t).exp() + 0.75 * (-2.0 * t).exp(),
        (-1.3 * t.sqrt()).exp(),
        (1.0 + t / 2.0).powf(-0.7),
    ];
    for (phi, want) in shipped_profiles().iter().zip(expected) {
        let got = phi.eval(t).map_err(e)?;
        ensure(close(got, want, 1e-14), || format!("{phi:?}: {got} vs {want}"))?;
    }
    Ok(())
}

fn phi_nonincreasing(_: &Ctx) -> Result<(), String> {
    for phi in shipped_profiles() {
        let mut prev = phi.eval(0.0).map_err(e)?;
        ensure(prev == phi.at_zero(), || format!("{phi:?}: φ(0) mismatch"))?;
        for i in 1..=400 {
            let v = phi.eval(i as f64 * 0.05).map_err(e)?;
            ensure(v <= prev && v > 0.0, || format!("{phi:?} increases or vanishes at t = {}", i as f64 * 0.05))?;
            prev = v;
        }
    }
    Ok(())
}

fn phi_complete_monotonicity(_: &Ctx) -> Result<(), String> {
    let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.25).collect();
    for phi in shipped_profiles() {
        ensure(phi.complete_monotonicity_check(&grid, 4).map_err(e)?, || format!("{phi:?} fails"))?;
    }
    let cos_passes = complete_monotonicity_check(f64::cos, &grid, 4).map_err(e)?;
    ensure(!cos_passes, || "cos t passes the complete monotonicity check".into())
}

fn phi_domain_errors(_: &Ctx) -> Result<(), String> {
    for phi in shipped_profiles() {
        ensure(phi.eval(-1.0).is_err() && phi.eval(f64::NAN).is_err(), || format!("{phi:?} accepts t < 0"))?;
    }
    ensure(PhiProfile::gaussian(0.0).is_err(), || "alpha = 0 accepted".into())?;
    ensure(PhiProfile::discrete_laplace(vec![(0.0, 1.0)]).map(|p| !p.is_strictly_pd_class()).unwrap_or(true), || {
        "atom only at zero reported as strictly positive definite".into()
    })
}

fn trapezoid_linear(_: &Ctx) -> Result<(), String> {
    let g = QuadratureGrid::trapezoid(-1.0, 2.0, 17).map_err(e)?;
    let integral: f64 = g.nodes().iter().zip(g.weights()).map(|(t, w)| w * (2.0 * t + 1.0)).sum();
    ensure(close(integral, 6.0, 1e-14), || format!("∫(2t+1) = {integral}, expected 6"))
}

fn lp_triangle(_: &Ctx) -> Result<(), String> {
    let grid = Arc::new(QuadratureGrid::unit_trapezoid(21).map_err(e)?);
    let mut r = rng(11, 0);
    for p in [1.0, 1.5, 2.0, 3.0] {
        for _ in 0..200 {
            let f = random_function(&mut r, &grid, 0.0, 1.0);
            let g = random_function(&mut r, &grid, 0.3, 1.0);
            let sum: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a + b).collect();
            let fg = FunctionSample::new(grid.clone(), sum).map_err(e)?;
            let (a, b, c) = (lp_norm(&f, p).map_err(e)?, lp_norm(&g, p).map_err(e)?, lp_norm(&fg, p).map_err(e)?);
            ensure(c <= a + b + 1e-12 * (a + b), || format!("‖f+g‖ = {c} > {a} + {b} at p = {p}"))?;
        }
    }
    Ok(())
}

fn difference_mass(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(12, 0);
    for case in &ctx.zoo {
        let mu = case.random_measure(&mut r, 4, true);
        let nu = case.random_measure(&mut r, 3, true);
        let d = measure_difference(&mu, &nu).map_err(e)?;
        ensure(d.total_mass().abs() <= 1e-14 && d.len() == 7, || {
            format!("{}: difference has mass {} on {} atoms", case.name, d.total_mass(), d.len())
        })?;
    }
    Ok(())
}

fn kernel_symmetry(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(13, 0);
    for case in &ctx.zoo {
        for _ in 0..30 {
            let (x, y) = ((case.sample)(&mut r), (case.sample)(&mut r));
            let (a, b) = (case.kernel.eval(&x, &y).map_err(e)?, case.kernel.eval(&y, &x).map_err(e)?);
            ensure(a == b, || format!("{}: k(x,y) = {a} but k(y,x) = {b}", case.name))?;
        }
    }
    Ok(())
}

fn kernel_diagonal(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(14, 0);
    for case in &ctx.zoo {
        let Some(d) = case.kernel.diagonal_value() else { continue };
        for _ in 0..10 {
            let x = (case.sample)(&mut r);
            let v = case.kernel.eval(&x, &x).map_err(e)?;
            ensure(close(v, d, 1e-12), || format!("{}: k(x,x) = {v}, expected {d}", case.name))?;
        }
    }
    Ok(())
}

fn kernel_bounded(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(15, 0);
    for case in ctx.zoo.iter().filter(|c| c.kernel.is_bounded()) {
        let d = case.kernel.diagonal_value().ok_or("bounded kernel without a diagonal value")?;
        for _ in 0..50 {
            let (x, y) = ((case.sample)(&mut r), (case.sample)(&mut r));
            let v = case.kernel.eval(&x, &y).map_err(e)?;
            ensure(v.abs() <= d * (1.0 + 1e-12), || format!("{}: |k| = {v} exceeds {d}", case.name))?;
        }
    }
    Ok(())
}

fn kernel_psd(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(16, 0);
    for case in &ctx.zoo {
        for _ in 0..20 {
            let m = r.random_range(2..=15);
            let g = gram(&case.kernel, &case.points(&mut r, m)).map_err(e)?;
            let min = min_eigenvalue(&g).map_err(e)?;
            let tol = 1e-8 * g.trace().max(1.0);
            ensure(min >= -tol, || format!("{}: min eigenvalue {min:e}", case.name))?;
        }
    }
    Ok(())
}

fn kernel_strict_pd(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(17, 0);
    for case in ctx.zoo.iter().filter(|c| c.kernel.is_strict()) {
        let d = case.kernel.diagonal_value().unwrap_or(1.0);
        for _ in 0..10 {
            let pts = case.separated_points(&mut r, 8, 0.1);
            let min = min_eigenvalue(&gram(&case.kernel, &pts).map_err(e)?).map_err(e)?;
            ensure(min > 1e-12 * d, || format!("{}: min eigenvalue {min:e}", case.name))?;
        }
    }
    Ok(())
}

fn tee_identity(_: &Ctx) -> Result<(), String> {
    let space = PointSpace::Euclidean { dim: 3 };
    let phi = PhiProfile::InverseRational { beta: 1.0, scale: 1.5 };
    let a = make_radial_hilbert(phi.clone(), space.clone()).map_err(e)?;
    let b = make_tee_radial(phi, MapSpec::Identity, space).map_err(e)?;
    let mut r = rng(18, 0);
    for _ in 0..50 {
        let (x, y) = (Point::Vector(normal_vector(&mut r, 3, 1.0)), Point::Vector(normal_vector(&mut r, 3, 1.0)));
        let (u, v) = (a.eval(&x, &y).map_err(e)?, b.eval(&x, &y).map_err(e)?);
        ensure(u == v, || format!("identity map gives {v}, radial gives {u}"))?;
    }
    Ok(())
}

fn gatekeeping(_: &Ctx) -> Result<(), String> {
    let grid = Arc::new(QuadratureGrid::unit_trapezoid(11).map_err(e)?);
    let k1 = make_radial_hilbert(PhiProfile::Gaussian { alpha: 20.0 }, PointSpace::Euclidean { dim: 1 }).map_err(e)?;
    let gauss = PhiProfile::Gaussian { alpha: 1.0 };
    ensure(make_lp_operator(gauss.clone(), k1.clone(), grid.clone(), 1.0).is_err(), || "p = 1 accepted".into())?;
    ensure(make_lp_operator(gauss.clone(), k1.clone(), grid.clone(), 1.5).is_ok(), || "valid L^p kernel rejected".into())?;
    let constant = PhiProfile::DiscreteLaplace { atoms: vec![(0.0, 1.0)] };
    ensure(make_lp_operator(constant, k1, grid, 1.5).is_err(), || "non-strict profile accepted".into())?;
    let zero = MapSpec::DiagonalScale { factors: vec![1.0, 0.0] };
    ensure(make_tee_radial(gauss.clone(), zero, PointSpace::Euclidean { dim: 2 }).is_err(), || {
        "non-injective map accepted".into()
    })?;
    ensure(MetricSpec::lp(Arc::new(QuadratureGrid::unit_trapezoid(3).map_err(e)?), 3.0).is_err(), || {
        "L^3 metric accepted".into()
    })
}

fn quantile_sorted(_: &Ctx) -> Result<(), String> {
    let mut r = rng(19, 0);
    for _ in 0..100 {
        let n = r.random_range(1..=8);
        let mut xs: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let mut ys: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let w = vec![1.0 / n as f64; n];
        let mu = DiscreteMeasure::on_line(&xs, w.clone()).map_err(e)?;
        let nu = DiscreteMeasure::on_line(&ys, w).map_err(e)?;
        xs.sort_by(f64::total_cmp);
        ys.sort_by(f64::total_cmp);
        let sorted: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
        let got = quantile_sq_distance(&mu, &nu);
        ensure((got - sorted).abs() <= 1e-12 * sorted.max(1.0), || format!("{got} vs sorted coupling {sorted}"))?;
    }
    Ok(())
}

fn fourier_oracle(ctx: &Ctx) -> Result<(), String> {
    let case = ctx.zoo.iter().find(|c| c.name == "fourier_measure").ok_or("missing case")?;
    let phi = case.kernel.phi().ok_or("missing profile")?.clone();
    let freqs = case_frequencies();
    let mut r = rng(20, 0);
    for _ in 0..30 {
        let (x, y) = ((case.sample)(&mut r), (case.sample)(&mut r));
        let atoms: Vec<(f64, f64)> = x
            .as_measure()
            .unwrap()
            .atoms()
            .map(|(p, w)| (p.as_vector().unwrap()[0], w))
            .chain(y.as_measure().unwrap().atoms().map(|(p, w)| (p.as_vector().unwrap()[0], -w)))
            .collect();
        let mut d = 0.0;
        for (s, ws) in &freqs {
            for (a, ca) in &atoms {
                for (b, cb) in &atoms {
                    d += ws * ca * cb * (s[0] * (a - b)).cos();
                }
            }
        }
        let want = phi.eval(d.max(0.0)).map_err(e)?;
        let got = case.kernel.eval(&x, &y).map_err(e)?;
        ensure(close(got, want, 1e-12), || format!("{got} vs trigonometric sum {want}"))?;
    }
    Ok(())
}

fn zero_norm(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(21, 0);
    for case in &ctx.zoo {
        let mu = case.random_measure(&mut r, 4, false);
        let v = kme_sq_norm(&case.kernel, &measure_difference(&mu, &mu).map_err(e)?).map_err(e)?;
        ensure(v == 0.0, || format!("{}: ‖μ - μ‖² = {v:e}", case.name))?;
    }
    Ok(())
}

fn homogeneity(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(22, 0);
    for case in &ctx.zoo {
        let mu = case.random_measure(&mut r, 4, false);
        let a = r.random_range(-3.0..3.0);
        let lhs = kme_sq_norm(&case.kernel, &mu.scaled(a)).map_err(e)?;
        let rhs = a * a * kme_sq_norm(&case.kernel, &mu).map_err(e)?;
        ensure(close(lhs, rhs, 1e-10), || format!("{}: {lhs} vs {rhs}", case.name))?;
    }
    Ok(())
}

fn mixture_identity(ctx: &Ctx) -> Result<(), String> {
    let case = ctx.zoo.iter().find(|c| c.name == "mixture").ok_or("missing case")?;
    let parts = mixture_components();
    let mut r = rng(23, 0);
    for _ in 0..50 {
        let mu = case.random_measure(&mut r, 5, false);
        let lhs = kme_sq_norm(&case.kernel, &mu).map_err(e)?;
        let mut rhs = 0.0;
        for (k, w) in &parts {
            rhs += w * kme_sq_norm(k, &mu).map_err(e)?;
        }
        ensure(close(lhs, rhs, 1e-10), || format!("{lhs} vs weighted sum {rhs}"))?;
    }
    Ok(())
}

fn zero_mass_norm(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(24, 0);
    for case in ctx.zoo.iter().filter(|c| c.kernel.is_strict()) {
        for _ in 0..20 {
            let n = r.random_range(2..=5);
            let mu = case.random_zero_mass_measure(&mut r, n);
            let v = kme_sq_norm(&case.kernel, &mu).map_err(e)?;
            ensure(v > 0.0, || format!("{}: zero-mass measure has norm {v:e}", case.name))?;
        }
    }
    Ok(())
}

fn distance_kernel(z0: Vec<f64>) -> Result<KernelSpec, String> {
    make_distance_kernel(MetricSpec::Euclidean { dim: 2 }, Point::Vector(z0)).map_err(e)
}

fn z0_invariance(ctx: &Ctx) -> Result<(), String> {
    let case = ctx.zoo.iter().find(|c| c.name == "distance").ok_or("missing case")?;
    let others = [distance_kernel(vec![0.0, 0.0])?, distance_kernel(vec![-3.0, 7.0])?];
    let mut r = rng(25, 0);
    for _ in 0..50 {
        let mu = case.random_zero_mass_measure(&mut r, 5);
        let a = kme_sq_norm(&case.kernel, &mu).map_err(e)?;
        for k in &others {
            let b = kme_sq_norm(k, &mu).map_err(e)?;
            ensure(close(a, b, 1e-10), || format!("norm depends on z0: {a} vs {b}"))?;
        }
    }
    Ok(())
}

fn mmd_pseudometric(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(26, 0);
    for case in &ctx.zoo {
        for _ in 0..10 {
            let p = case.random_measure(&mut r, 3, true);
            let q = case.random_measure(&mut r, 3, true);
            let s = case.random_measure(&mut r, 3, true);
            let k = &case.kernel;
            let (pq, qp) = (mmd(k, &p, &q).map_err(e)?, mmd(k, &q, &p).map_err(e)?);
            let (ps, sq) = (mmd(k, &p, &s).map_err(e)?, mmd(k, &s, &q).map_err(e)?);
            ensure(mmd(k, &p, &p).map_err(e)? == 0.0, || format!("{}: γ(P,P) ≠ 0", case.name))?;
            ensure(close(pq, qp, 1e-12), || format!("{}: asymmetric {pq} vs {qp}", case.name))?;
            ensure(pq <= ps + sq + 1e-9, || format!("{}: triangle {pq} > {ps} + {sq}", case.name))?;
        }
    }
    Ok(())
}

fn mmd_score_identity(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(27, 0);
    for case in &ctx.zoo {
        for _ in 0..10 {
            let p = case.random_measure(&mut r, 4, true);
            let q = case.random_measure(&mut r, 3, true);
            let k = &case.kernel;
            let g2 = mmd(k, &p, &q).map_err(e)?.powi(2) + ctx.fault;
            let via_scores = 2.0 * (expected_score(k, &q, &p).map_err(e)? - expected_score(k, &p, &p).map_err(e)?);
            let via_norm = kme_sq_norm(k, &measure_difference(&p, &q).map_err(e)?).map_err(e)?;
            let via_inner = kme_inner(k, &p, &p).map_err(e)? + kme_inner(k, &q, &q).map_err(e)?
                - 2.0 * kme_inner(k, &p, &q).map_err(e)?;
            let scale = kme_inner(k, &p, &p).map_err(e)?.abs() + kme_inner(k, &q, &q).map_err(e)?.abs();
            for (what, v) in [("scores", via_scores), ("difference norm", via_norm), ("inner products", via_inner)] {
                ensure((g2 - v).abs() <= 1e-10 * scale.max(1.0), || {
                    format!("{}: γ² = {g2} but {what} give {v}", case.name)
                })?;
            }
        }
    }
    Ok(())
}

fn propriety(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(28, 0);
    for case in &ctx.zoo {
        for _ in 0..10 {
            let p = case.random_measure(&mut r, 3, true);
            let q = case.random_measure(&mut r, 3, true);
            let (own, other) = (expected_score(&case.kernel, &q, &q).map_err(e)?, expected_score(&case.kernel, &p, &q).map_err(e)?);
            ensure(own <= other + 1e-12 * own.abs().max(1.0), || format!("{}: S(Q,Q) = {own} > S(P,Q) = {other}", case.name))?;
        }
    }
    Ok(())
}

fn energy_equivalence(ctx: &Ctx) -> Result<(), String> {
    let case = ctx.zoo.iter().find(|c| c.name == "distance").ok_or("missing case")?;
    let metric = MetricSpec::Euclidean { dim: 2 };
    let mut r = rng(29, 0);
    for _ in 0..50 {
        let p = case.random_measure(&mut r, 4, true);
        let q = case.random_measure(&mut r, 4, true);
        let g2 = mmd(&case.kernel, &p, &q).map_err(e)?.powi(2);
        let en = energy_distance(&metric, &p, &q).map_err(e)?;
        ensure((g2 - en).abs() <= 1e-10 * en.abs().max(1.0), || format!("γ² = {g2} vs energy {en}"))?;
    }
    Ok(())
}

fn permutation_determinism(ctx: &Ctx) -> Result<(), String> {
    let case = &ctx.zoo[0];
    let mut r: ChaCha8Rng = rng(30, 0);
    let xs = case.points(&mut r, 12);
    let ys = case.points(&mut r, 10);
    let a = permutation_test(&case.kernel, &xs, &ys, 99, 5).map_err(e)?;
    let b = permutation_test(&case.kernel, &xs, &ys, 99, 5).map_err(e)?;
    ensure(a == b, || "repeated runs with one seed differ".into())?;
    ensure(a.p_value >= 0.01 && a.p_value <= 1.0, || format!("p = {} outside [1/(B+1), 1]", a.p_value))
}

fn permutation_constants(_: &Ctx) -> Result<(), String> {
    let grid = Arc::new(QuadratureGrid::unit_trapezoid(11).map_err(e)?);
    let space = PointSpace::func_lp(grid.clone(), 2.0).map_err(e)?;
    let k = make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, space).map_err(e)?;
    let zeros = vec![Point::Function(FunctionSample::constant(grid.clone(), 0.0).map_err(e)?); 20];
    let ones = vec![Point::Function(FunctionSample::constant(grid, 1.0).map_err(e)?); 20];
    let res = permutation_test(&k, &zeros, &ones, 99, 0).map_err(e)?;
    ensure(res.p_value == 0.01 && res.rejects(0.05), || format!("p = {}", res.p_value))
}

fn float_round_trip(ctx: &Ctx) -> Result<(), String> {
    let mut r = rng(31, 0);
    for case in &ctx.zoo {
        let g = gram(&case.kernel, &case.points(&mut r, 6)).map_err(e)?;
        for v in g.entries().iter() {
            let back: f64 = fmt_f64(*v).parse().map_err(e)?;
            ensure(back == *v, || format!("{v:e} round-trips to {back:e}"))?;
        }
    }
    Ok(())
}
