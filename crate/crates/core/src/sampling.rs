//! Seeded random generators for points, functions and measures, a catalogue
//! of one kernel per construction rule, and power-curve scenarios.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::gram;
use crate::error::{domain, Result};
use crate::kernels::{
    make_distance_kernel, make_fourier_measure, make_kme_measure, make_lp_operator,
    make_metric_phi, make_mixture, make_quantile_monge, make_radial_hilbert, make_tee_radial,
    quantile_sq_distance, KernelSpec, MapSpec,
};
use crate::phi::PhiProfile;
use crate::spaces::{
    euclidean_sq_dist, sq_dist_l2, DiscreteMeasure, FunctionSample, MetricSpec, Point, PointSpace,
    QuadratureGrid,
};
use crate::stats::{permutation_test_gram, Estimator};

/// A ChaCha8 generator for `(seed, stream)`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// SplitMix64 finalizer; derives well-spread child seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_vector(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * normal(rng)).collect()
}

/// `shift + noise·(ξ₀ + Σ_{j=1..4} ξⱼ √2 sin(jπt)/j)` on the grid.
pub fn random_function(
    rng: &mut impl Rng,
    grid: &Arc<QuadratureGrid>,
    shift: f64,
    noise: f64,
) -> FunctionSample {
    let xi: Vec<f64> = (0..5).map(|_| normal(rng)).collect();
    let values = grid
        .nodes()
        .iter()
        .map(|&t| {
            let wave: f64 = (1..5)
                .map(|j| xi[j] * 2f64.sqrt() * (j as f64 * std::f64::consts::PI * t).sin() / j as f64)
                .sum();
            shift + noise * (xi[0] + wave)
        })
        .collect();
    FunctionSample::new(grid.clone(), values).expect("finite values on the grid")
}

/// Random positive weights normalized to sum to one.
pub fn probability_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let u = Uniform::new(0.1, 1.0).expect("valid range");
    let raw: Vec<f64> = (0..n).map(|_| u.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

/// Random probability measure on `ℝ` with `1..=max_atoms` atoms in
/// `[-spread, spread]`.
pub fn random_line_measure(rng: &mut impl Rng, max_atoms: usize, spread: f64) -> DiscreteMeasure {
    let n = rng.random_range(1..=max_atoms);
    let u = Uniform::new(-spread, spread).expect("valid range");
    let xs: Vec<f64> = (0..n).map(|_| u.sample(rng)).collect();
    DiscreteMeasure::on_line(&xs, probability_weights(rng, n)).expect("valid measure")
}

pub type PointSampler = Box<dyn Fn(&mut ChaCha8Rng) -> Point + Send + Sync>;

/// One kernel together with a sampler for its points and a distance used
/// to enforce separation between sampled points.
pub struct KernelCase {
    pub name: &'static str,
    pub kernel: KernelSpec,
    pub sample: PointSampler,
    pub separation: fn(&Point, &Point) -> f64,
}

impl KernelCase {
    /// Draws `n` points whose pairwise separation is at least `min_sep`.
    pub fn separated_points(&self, rng: &mut ChaCha8Rng, n: usize, min_sep: f64) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n {
            attempts += 1;
            assert!(attempts < 100_000, "cannot place {n} separated points for {}", self.name);
            let p = (self.sample)(rng);
            if out.iter().all(|q| (self.separation)(&p, q) >= min_sep) {
                out.push(p);
            }
        }
        out
    }

    pub fn points(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
        (0..n).map(|_| (self.sample)(rng)).collect()
    }

    /// A random measure with `n` separated atoms; positive normalized
    /// weights when `probability`, otherwise standard normal weights.
    pub fn random_measure(&self, rng: &mut ChaCha8Rng, n: usize, probability: bool) -> DiscreteMeasure {
        let pts = self.separated_points(rng, n, 0.1);
        let weights = if probability {
            probability_weights(rng, n)
        } else {
            (0..n).map(|_| normal(rng)).collect()
        };
        DiscreteMeasure::new(self.kernel.space().clone(), pts, weights).expect("valid measure")
    }

    /// A nonzero signed measure of total mass zero on `n ≥ 2` separated atoms.
    pub fn random_zero_mass_measure(&self, rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
        let pts = self.separated_points(rng, n, 0.1);
        let raw: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
        let mean = raw.iter().sum::<f64>() / n as f64;
        let mut weights: Vec<f64> = raw.iter().map(|w| w - mean).collect();
        // make the mass exactly zero by absorbing the residual in the last atom
        let head: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = -head;
        DiscreteMeasure::new(self.kernel.space().clone(), pts, weights).expect("valid measure")
    }
}

fn vector_sep(a: &Point, b: &Point) -> f64 {
    euclidean_sq_dist(a.as_vector().unwrap(), b.as_vector().unwrap()).sqrt()
}

fn function_sep(a: &Point, b: &Point) -> f64 {
    sq_dist_l2(a.as_function().unwrap(), b.as_function().unwrap()).unwrap().sqrt()
}

fn line_measure_sep(a: &Point, b: &Point) -> f64 {
    quantile_sq_distance(a.as_measure().unwrap(), b.as_measure().unwrap()).sqrt()
}

/// Grid shared by the function-space cases.
pub fn case_grid() -> Arc<QuadratureGrid> {
    Arc::new(QuadratureGrid::unit_trapezoid(21).expect("valid grid"))
}

/// The three components of the catalogue's mixture kernel, with weights.
pub fn mixture_components() -> Vec<(KernelSpec, f64)> {
    let r2 = PointSpace::Euclidean { dim: 2 };
    vec![
        (make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.2 }, r2.clone()).unwrap(), 0.5),
        (
            make_radial_hilbert(PhiProfile::InverseRational { beta: 1.0, scale: 1.0 }, r2).unwrap(),
            0.3,
        ),
        (make_metric_phi(PhiProfile::Gaussian { alpha: 1.0 }, MetricSpec::Euclidean { dim: 2 }).unwrap(), 0.2),
    ]
}

/// Explicit frequency atoms on `ℝ` used by the catalogue's Fourier kernel.
pub fn case_frequencies() -> Vec<(Vec<f64>, f64)> {
    (0..16).map(|i| (vec![-4.0 + 0.5 * i as f64 + 0.25], 1.0 / 16.0)).collect()
}

/// One kernel for each of the nine construction rules.
pub fn kernel_zoo() -> Vec<KernelCase> {
    let grid = case_grid();
    let r2 = PointSpace::Euclidean { dim: 2 };
    let vec2: fn(&mut ChaCha8Rng) -> Point = |r| Point::Vector(normal_vector(r, 2, 2.0));
    let line_measure: fn(&mut ChaCha8Rng) -> Point = |r| Point::Measure(random_line_measure(r, 4, 3.0));

    let laplace_k1 = make_metric_phi(PhiProfile::Gaussian { alpha: 2.0 }, MetricSpec::Euclidean { dim: 1 }).unwrap();
    let g_fn = grid.clone();
    let g_fn2 = grid.clone();

    vec![
        KernelCase {
            name: "radial_hilbert",
            kernel: make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, r2.clone()).unwrap(),
            sample: Box::new(vec2),
            separation: vector_sep,
        },
        KernelCase {
            name: "tee_radial",
            kernel: make_tee_radial(
                PhiProfile::InverseRational { beta: 1.5, scale: 2.0 },
                MapSpec::LinearGridMap { matrix: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]) },
                r2.clone(),
            )
            .unwrap(),
            sample: Box::new(vec2),
            separation: vector_sep,
        },
        KernelCase {
            name: "lp_operator",
            kernel: make_lp_operator(PhiProfile::Gaussian { alpha: 1.0 }, laplace_k1, grid.clone(), 1.5).unwrap(),
            sample: Box::new(move |r| Point::Function(random_function(r, &g_fn, 0.0, 1.0))),
            separation: function_sep,
        },
        KernelCase {
            name: "metric_phi",
            kernel: make_metric_phi(
                PhiProfile::DiscreteLaplace { atoms: vec![(0.0, 0.3), (1.0, 0.7)] },
                MetricSpec::lp(grid.clone(), 1.5).unwrap(),
            )
            .unwrap(),
            sample: Box::new(move |r| Point::Function(random_function(r, &g_fn2, 0.0, 1.0))),
            separation: function_sep,
        },
        KernelCase {
            name: "distance",
            kernel: make_distance_kernel(MetricSpec::Euclidean { dim: 2 }, Point::Vector(vec![0.5, -0.5])).unwrap(),
            sample: Box::new(vec2),
            separation: vector_sep,
        },
        KernelCase {
            name: "mixture",
            kernel: make_mixture(mixture_components()).unwrap(),
            sample: Box::new(vec2),
            separation: vector_sep,
        },
        KernelCase {
            name: "kme_measure",
            kernel: make_kme_measure(
                PhiProfile::Gaussian { alpha: 1.0 },
                make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, PointSpace::Euclidean { dim: 1 }).unwrap(),
            )
            .unwrap(),
            sample: Box::new(line_measure),
            separation: line_measure_sep,
        },
        KernelCase {
            name: "fourier_measure",
            kernel: make_fourier_measure(PhiProfile::InverseRational { beta: 1.0, scale: 0.5 }, case_frequencies(), 1)
                .unwrap(),
            sample: Box::new(line_measure),
            separation: line_measure_sep,
        },
        KernelCase {
            name: "quantile_monge",
            kernel: make_quantile_monge(
                PhiProfile::Gaussian { alpha: 1.0 },
                Arc::new(QuadratureGrid::unit_trapezoid(101).unwrap()),
            )
            .unwrap(),
            sample: Box::new(line_measure),
            separation: line_measure_sep,
        },
    ]
}

/// Data generators for power curves. `shift` moves the second sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum Scenario {
    /// `X ~ N(0, I_d)`, `Y ~ N(shift·e₁, I_d)`.
    Euclidean { dim: usize, n_x: usize, n_y: usize, shifts: Vec<f64> },
    /// Random smooth functions on a trapezoid grid of `m` nodes over `[0, 1]`;
    /// `Y` is shifted by a constant. `noise = 0` gives constant functions.
    Function { m: usize, n_x: usize, n_y: usize, noise: f64, shifts: Vec<f64> },
    /// Draws from a finite pool of locations on `ℝ` with the given
    /// probabilities (uniform when omitted); `Y`'s locations are shifted.
    Discrete {
        support: Vec<f64>,
        #[serde(default)]
        probs: Option<Vec<f64>>,
        n_x: usize,
        n_y: usize,
        shifts: Vec<f64>,
    },
}

/// One row of a power curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub shift: f64,
    pub rejection_rate: f64,
    pub trials: usize,
    pub mc_stderr: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let (n_x, n_y, shifts) = match self {
            Scenario::Euclidean { dim, n_x, n_y, shifts } => {
                if *dim == 0 {
                    return Err(domain("scenario dimension must be positive"));
                }
                (n_x, n_y, shifts)
            }
            Scenario::Function { m, n_x, n_y, noise, shifts } => {
                if *m < 2 {
                    return Err(domain("function scenario needs m >= 2 grid nodes"));
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    return Err(domain("function scenario noise must be >= 0"));
                }
                (n_x, n_y, shifts)
            }
            Scenario::Discrete { support, probs, n_x, n_y, shifts } => {
                if support.is_empty() || support.iter().any(|x| !x.is_finite()) {
                    return Err(domain("discrete scenario needs a finite, non-empty support"));
                }
                if let Some(p) = probs {
                    if p.len() != support.len() || p.iter().any(|w| !(*w > 0.0)) {
                        return Err(domain("discrete scenario probabilities must be positive, one per atom"));
                    }
                }
                (n_x, n_y, shifts)
            }
        };
        if *n_x < 2 || *n_y < 2 {
            return Err(domain("scenario samples need at least 2 points each"));
        }
        if shifts.is_empty() || shifts.iter().any(|s| !s.is_finite()) {
            return Err(domain("scenario needs at least one finite shift"));
        }
        Ok(())
    }

    pub fn shifts(&self) -> &[f64] {
        match self {
            Scenario::Euclidean { shifts, .. }
            | Scenario::Function { shifts, .. }
            | Scenario::Discrete { shifts, .. } => shifts,
        }
    }

    /// The point space of generated samples.
    pub fn space(&self) -> PointSpace {
        match self {
            Scenario::Euclidean { dim, .. } => PointSpace::Euclidean { dim: *dim },
            Scenario::Function { m, .. } => PointSpace::FuncLp {
                grid: Arc::new(QuadratureGrid::unit_trapezoid(*m).expect("validated")),
                p: 2.0,
            },
            Scenario::Discrete { .. } => PointSpace::Euclidean { dim: 1 },
        }
    }

    /// Draws `(X, Y)` for one trial. `space` must come from [`Scenario::space`].
    pub fn draw(&self, space: &PointSpace, shift: f64, rng: &mut ChaCha8Rng) -> (Vec<Point>, Vec<Point>) {
        match (self, space) {
            (Scenario::Euclidean { dim, n_x, n_y, .. }, _) => {
                let x = (0..*n_x).map(|_| Point::Vector(normal_vector(rng, *dim, 1.0))).collect();
                let y = (0..*n_y)
                    .map(|_| {
                        let mut v = normal_vector(rng, *dim, 1.0);
                        v[0] += shift;
                        Point::Vector(v)
                    })
                    .collect();
                (x, y)
            }
            (Scenario::Function { n_x, n_y, noise, .. }, PointSpace::FuncLp { grid, .. }) => {
                let x = (0..*n_x).map(|_| Point::Function(random_function(rng, grid, 0.0, *noise))).collect();
                let y = (0..*n_y).map(|_| Point::Function(random_function(rng, grid, shift, *noise))).collect();
                (x, y)
            }
            (Scenario::Discrete { support, probs, n_x, n_y, .. }, _) => {
                let cdf: Vec<f64> = {
                    let p = probs.clone().unwrap_or_else(|| vec![1.0; support.len()]);
                    let total: f64 = p.iter().sum();
                    p.iter()
                        .scan(0.0, |acc, w| {
                            *acc += w / total;
                            Some(*acc)
                        })
                        .collect()
                };
                let pick = |r: &mut ChaCha8Rng| {
                    let u: f64 = r.random();
                    let i = cdf.iter().position(|c| u < *c).unwrap_or(support.len() - 1);
                    support[i]
                };
                let x = (0..*n_x).map(|_| Point::scalar(pick(rng))).collect();
                let y = (0..*n_y).map(|_| Point::scalar(pick(rng) + shift)).collect();
                (x, y)
            }
            _ => unreachable!("space produced by Scenario::space"),
        }
    }
}

/// Empirical rejection rates of the permutation test at each shift.
/// Deterministic given `seed`: trial `t` at shift index `s` draws data from
/// stream `mix_seed(seed, s)`/`t` and uses permutation seed
/// `mix_seed(mix_seed(seed, s), t)`.
pub fn power_curve(
    kernel: &KernelSpec,
    scenario: &Scenario,
    trials: usize,
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<PowerRow>> {
    scenario.validate()?;
    if trials == 0 {
        return Err(domain("power curves need at least one trial"));
    }
    if n_perm == 0 {
        return Err(domain("the permutation test needs at least one permutation"));
    }
    let space = scenario.space();
    if kernel.space() != &space {
        return Err(crate::error::shape(format!(
            "kernel lives on {} but the scenario generates points on {space}",
            kernel.space()
        )));
    }
    scenario
        .shifts()
        .iter()
        .enumerate()
        .map(|(s, &shift)| {
            let shift_seed = mix_seed(seed, s as u64);
            let rejections: Result<Vec<bool>> = (0..trials as u64)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng(shift_seed, t);
                    let (x, y) = scenario.draw(&space, shift, &mut r);
                    let n = x.len();
                    let pooled: Vec<Point> = x.into_iter().chain(y).collect();
                    let g = gram(kernel, &pooled)?.into_entries();
                    let res = permutation_test_gram(&g, n, n_perm, mix_seed(shift_seed, t), Estimator::UStatistic);
                    Ok(res.rejects(alpha))
                })
                .collect();
            let count = rejections?.into_iter().filter(|r| *r).count();
            let rate = count as f64 / trials as f64;
            Ok(PowerRow {
                shift,
                rejection_rate: rate,
                trials,
                mc_stderr: (rate * (1.0 - rate) / trials as f64).sqrt(),
            })
        })
        .collect()
}
