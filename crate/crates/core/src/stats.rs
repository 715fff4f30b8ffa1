//! MMD, kernel scores and their divergence, sample estimators, permutation
//! two-sample tests and the energy distance.
//!
//! For a kernel `k` and probability measures `P`, `Q`:
//!
//! ```text
//! S_k(P, x) = -∫ k(ω, x) dP(ω) + ½ ∫∫ k dP dP + ½ k(x, x)
//! S_k(Q, P) = ∫ S_k(Q, x) dP(x)
//! d(P, Q)   = S_k(Q, P) - S_k(P, P) = ½ γ_k(P, Q)²
//! ```

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{double_sum, gram, kme_sq_norm};
use crate::error::{domain, shape, Error, Result};
use crate::kernels::KernelSpec;
use crate::spaces::{measure_difference, DiscreteMeasure, MetricSpec, Point};

const SCORE_CLAMP: f64 = 1e-10;

/// How a two-sample statistic was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Squared MMD of the empirical measures through their signed weight vector.
    ExactDiscrete,
    /// Unbiased estimator excluding diagonal terms.
    UStatistic,
    /// Biased estimator including diagonal terms.
    VStatistic,
}

/// Outcome of a permutation two-sample test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

fn clamp_negative(v: f64, scale: f64) -> f64 {
    if v < 0.0 && v >= -SCORE_CLAMP * scale.max(1.0) {
        0.0
    } else {
        v
    }
}

fn diag_scale(k: &KernelSpec, points: &[&Point]) -> f64 {
    k.diagonal_value().unwrap_or_else(|| {
        points
            .iter()
            .map(|z| k.eval_unchecked(z, z).abs())
            .fold(0.0, f64::max)
    })
}

fn check_prob(k: &KernelSpec, m: &DiscreteMeasure, what: &str) -> Result<()> {
    m.require_probability(what)?;
    if m.space() != k.space() {
        return Err(shape(format!("{what} lives on {} but the kernel on {}", m.space(), k.space())));
    }
    for p in m.points() {
        k.check_point(p)?;
    }
    Ok(())
}

/// `γ_k(P, Q) = ‖Φ_k(P) - Φ_k(Q)‖`.
pub fn mmd(k: &KernelSpec, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    check_prob(k, p, "P")?;
    check_prob(k, q, "Q")?;
    let sq = kme_sq_norm(k, &measure_difference(p, q)?)?;
    if sq < 0.0 {
        return Err(Error::Numeric(format!(
            "squared MMD {sq:e} is negative; the kernel is not positive semidefinite on these supports"
        )));
    }
    Ok(sq.sqrt())
}

/// `S_k(P, x)`, including the `½ k(x, x)` term so that the score is
/// nonnegative.
pub fn kernel_score(k: &KernelSpec, p: &DiscreteMeasure, x: &Point) -> Result<f64> {
    check_prob(k, p, "forecast")?;
    k.check_point(x)?;
    let pp = double_sum(k, p, p);
    Ok(score_with_self_term(k, p, pp, x))
}

fn score_with_self_term(k: &KernelSpec, p: &DiscreteMeasure, pp: f64, x: &Point) -> f64 {
    let cross: f64 = p.atoms().map(|(z, w)| w * k.eval_unchecked(z, x)).sum();
    let v = -cross + 0.5 * pp + 0.5 * k.eval_unchecked(x, x);
    let mut pts: Vec<&Point> = p.points().iter().collect();
    pts.push(x);
    clamp_negative(v, diag_scale(k, &pts))
}

/// `S_k(Q, P) = ∫ S_k(Q, x) dP(x)`: the expected score of forecast `Q`
/// when outcomes follow `P`.
pub fn expected_score(k: &KernelSpec, q: &DiscreteMeasure, p: &DiscreteMeasure) -> Result<f64> {
    check_prob(k, q, "forecast Q")?;
    check_prob(k, p, "outcome distribution P")?;
    let qq = double_sum(k, q, q);
    Ok(p.atoms().map(|(x, w)| w * score_with_self_term(k, q, qq, x)).sum())
}

/// `d(P, Q) = S_k(Q, P) - S_k(P, P)`, clamped at zero within `-1e-10`.
pub fn divergence(k: &KernelSpec, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let d = expected_score(k, q, p)? - expected_score(k, p, p)?;
    let pts: Vec<&Point> = p.points().iter().chain(q.points()).collect();
    Ok(clamp_negative(d, diag_scale(k, &pts)))
}

fn check_sample(k: &KernelSpec, xs: &[Point], what: &str) -> Result<()> {
    if xs.len() < 2 {
        return Err(domain(format!("sample {what} needs at least 2 points, got {}", xs.len())));
    }
    for x in xs {
        k.check_point(x)?;
    }
    Ok(())
}

fn pooled_gram(k: &KernelSpec, xs: &[Point], ys: &[Point]) -> Result<DMatrix<f64>> {
    let pooled: Vec<Point> = xs.iter().chain(ys).cloned().collect();
    Ok(gram(k, &pooled)?.into_entries())
}

/// Unbiased squared-MMD estimate from a pooled Gram matrix and a labelling.
fn u_from_gram(g: &DMatrix<f64>, a: &[usize], b: &[usize]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let within = |idx: &[usize]| {
        let mut s = 0.0;
        for (ii, &i) in idx.iter().enumerate() {
            for (jj, &j) in idx.iter().enumerate() {
                if ii != jj {
                    s += g[(i, j)];
                }
            }
        }
        s
    };
    let mut cross = 0.0;
    for &i in a {
        for &j in b {
            cross += g[(i, j)];
        }
    }
    within(a) / (n * (n - 1.0)) + within(b) / (m * (m - 1.0)) - 2.0 * cross / (n * m)
}

fn v_from_gram(g: &DMatrix<f64>, a: &[usize], b: &[usize]) -> f64 {
    let (n, m) = (a.len() as f64, b.len() as f64);
    let block = |r: &[usize], c: &[usize]| {
        let mut s = 0.0;
        for &i in r {
            for &j in c {
                s += g[(i, j)];
            }
        }
        s
    };
    block(a, a) / (n * n) + block(b, b) / (m * m) - 2.0 * block(a, b) / (n * m)
}

/// `wᵀ G w` with `w = +1/n` on the first sample and `-1/m` on the second.
fn exact_from_gram(g: &DMatrix<f64>, a: &[usize], b: &[usize]) -> f64 {
    let mut w = vec![0.0; g.nrows()];
    for &i in a {
        w[i] = 1.0 / a.len() as f64;
    }
    for &j in b {
        w[j] = -1.0 / b.len() as f64;
    }
    let mut total = 0.0;
    for i in 0..w.len() {
        for j in 0..w.len() {
            total += w[i] * w[j] * g[(i, j)];
        }
    }
    total
}

fn statistic_from_gram(est: Estimator, g: &DMatrix<f64>, a: &[usize], b: &[usize]) -> f64 {
    match est {
        Estimator::UStatistic => u_from_gram(g, a, b),
        Estimator::VStatistic => v_from_gram(g, a, b),
        Estimator::ExactDiscrete => exact_from_gram(g, a, b),
    }
}

/// Unbiased estimate of `γ_k(P, Q)²` from samples; may be negative.
pub fn mmd_u_statistic(k: &KernelSpec, xs: &[Point], ys: &[Point]) -> Result<f64> {
    check_sample(k, xs, "X")?;
    check_sample(k, ys, "Y")?;
    let g = pooled_gram(k, xs, ys)?;
    let (a, b) = split_indices(xs.len(), ys.len());
    Ok(u_from_gram(&g, &a, &b))
}

/// Biased (plug-in) estimate of `γ_k(P, Q)²` from samples.
pub fn mmd_v_statistic(k: &KernelSpec, xs: &[Point], ys: &[Point]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(domain("samples must be non-empty"));
    }
    let g = pooled_gram(k, xs, ys)?;
    let (a, b) = split_indices(xs.len(), ys.len());
    Ok(v_from_gram(&g, &a, &b))
}

fn split_indices(n: usize, m: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..n).collect(), (n..n + m).collect())
}

/// The random stream for permutation replicate `index`: a ChaCha8 generator
/// keyed by `seed` on stream `index + 1`, so replicates are independent of
/// evaluation order.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Permutation test with the unbiased statistic.
pub fn permutation_test(
    k: &KernelSpec,
    xs: &[Point],
    ys: &[Point],
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    permutation_test_with(k, xs, ys, n_perm, seed, Estimator::UStatistic)
}

/// Permutation test of `P = Q`: the statistic on the observed split is
/// compared with `n_perm` uniformly random relabellings of the pooled
/// sample; `p = (1 + #{permuted ≥ observed}) / (n_perm + 1)`.
pub fn permutation_test_with(
    k: &KernelSpec,
    xs: &[Point],
    ys: &[Point],
    n_perm: usize,
    seed: u64,
    estimator: Estimator,
) -> Result<TestResult> {
    if n_perm < 1 {
        return Err(domain("the permutation test needs at least one permutation"));
    }
    check_sample(k, xs, "X")?;
    check_sample(k, ys, "Y")?;
    let g = pooled_gram(k, xs, ys)?;
    Ok(permutation_test_gram(&g, xs.len(), n_perm, seed, estimator))
}

/// Permutation test on a precomputed pooled Gram matrix whose first `n`
/// rows belong to the first sample.
pub fn permutation_test_gram(
    g: &DMatrix<f64>,
    n: usize,
    n_perm: usize,
    seed: u64,
    estimator: Estimator,
) -> TestResult {
    let total = g.nrows();
    let (a, b) = split_indices(n, total - n);
    let observed = statistic_from_gram(estimator, g, &a, &b);
    let exceed = (0..n_perm as u64)
        .into_par_iter()
        .filter(|&r| {
            let mut rng = replicate_rng(seed, r);
            let mut idx: Vec<usize> = (0..total).collect();
            idx.shuffle(&mut rng);
            let (pa, pb) = idx.split_at(n);
            statistic_from_gram(estimator, g, pa, pb) >= observed
        })
        .count();
    TestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (n_perm + 1) as f64,
        n_permutations: n_perm,
        seed,
        estimator,
    }
}

/// `2 E ρ(X, Y) - E ρ(X, X') - E ρ(Y, Y')` for `X ~ P`, `Y ~ Q`.
pub fn energy_distance(metric: &MetricSpec, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    let space = metric.space();
    for (m, what) in [(p, "P"), (q, "Q")] {
        m.require_probability(what)?;
        if m.space() != &space {
            return Err(shape(format!("{what} lives on {} but the metric on {space}", m.space())));
        }
    }
    let cross_sum = |a: &DiscreteMeasure, b: &DiscreteMeasure| {
        let mut s = 0.0;
        for (x, wa) in a.atoms() {
            for (y, wb) in b.atoms() {
                s += wa * wb * metric.dist_unchecked(x, y);
            }
        }
        s
    };
    let pq = cross_sum(p, q);
    let v = 2.0 * pq - cross_sum(p, p) - cross_sum(q, q);
    Ok(clamp_negative(v, pq.abs()))
}
