//! JSON kernel definitions and run configurations.
//!
//! A kernel spec has an optional `space`, an optional `phi` and a `rule`:
//!
//! ```json
//! {
//!   "space": {"type": "func_lp", "p": 1.5, "grid": {"a": 0.0, "b": 1.0, "m": 51}},
//!   "phi": {"family": "gaussian", "alpha": 1.0},
//!   "rule": {"kind": "lp_operator",
//!            "k1": {"phi": {"family": "gaussian", "alpha": 2.0}, "rule": {"kind": "metric_phi"}}}
//! }
//! ```
//!
//! Nested kernels (`k1`, mixture components) inherit the enclosing space when
//! they omit their own: the base space for `kme_measure`, `ℝ` for the base
//! kernel of `lp_operator` and the parent space for mixture components.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;
use thiserror::Error;

use crate::io::{read_grid, IoError};
use crate::kernels::{
    gaussian_frequencies, make_distance_kernel, make_fourier_measure, make_kme_measure,
    make_lp_operator, make_metric_phi, make_mixture, make_quantile_monge, make_radial_hilbert,
    make_tee_radial, KernelSpec, MapSpec,
};
use crate::phi::PhiProfile;
use crate::sampling::Scenario;
use crate::spaces::{FunctionSample, MetricSpec, Point, PointSpace, QuadratureGrid};
use crate::stats::Estimator;

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Unreadable or malformed configuration.
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    /// A configuration that is well formed but incomplete or inconsistent.
    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    File(#[from] IoError),

    /// The kernel constructor rejected the configuration.
    #[error("{0}")]
    Kernel(#[from] crate::Error),
}

type CResult<T> = std::result::Result<T, ConfigError>;

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// A quadrature grid: a CSV file, explicit nodes and weights, or a
/// trapezoid rule with `m` nodes on `[a, b]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    File { file: PathBuf },
    Explicit { nodes: Vec<f64>, weights: Vec<f64> },
    Trapezoid { a: f64, b: f64, m: usize },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceConfig {
    Euclidean {
        dim: usize,
    },
    FuncLp {
        p: f64,
        #[serde(default)]
        grid: Option<GridConfig>,
    },
    MeasurePoints {
        base: Box<SpaceConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Identity,
    DiagonalScale { factors: Vec<f64> },
    LinearGridMap { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum FreqsConfig {
    /// `"gaussian"`: standard normal frequencies.
    Named(String),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub kernel: KernelConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleConfig {
    RadialHilbert,
    TeeRadial {
        map: MapConfig,
    },
    LpOperator {
        k1: Box<KernelConfig>,
    },
    MetricPhi,
    Distance {
        #[serde(default)]
        z0: Option<Vec<f64>>,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    KmeMeasure {
        k1: Box<KernelConfig>,
    },
    FourierMeasure {
        freqs: FreqsConfig,
        #[serde(default)]
        freq_weights: Option<Vec<f64>>,
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        dim: Option<usize>,
    },
    QuantileMonge {
        #[serde(default)]
        u_grid: Option<GridConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    #[serde(default)]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub phi: Option<PhiProfile>,
    pub rule: RuleConfig,
}

/// Defaults available while building a kernel.
#[derive(Debug, Clone, Default)]
pub struct BuildContext {
    /// Directory that relative grid paths are resolved against.
    pub base_dir: PathBuf,
    /// Grid for `func_lp` spaces that do not name one.
    pub grid: Option<Arc<QuadratureGrid>>,
    /// Space used when the top-level spec omits `space`.
    pub default_space: Option<PointSpace>,
}

impl GridConfig {
    pub fn build(&self, ctx: &BuildContext) -> CResult<QuadratureGrid> {
        Ok(match self {
            GridConfig::File { file } => read_grid(&ctx.base_dir.join(file))?,
            GridConfig::Explicit { nodes, weights } => QuadratureGrid::new(nodes.clone(), weights.clone())?,
            GridConfig::Trapezoid { a, b, m } => QuadratureGrid::trapezoid(*a, *b, *m)?,
        })
    }
}

impl SpaceConfig {
    pub fn build(&self, ctx: &BuildContext) -> CResult<PointSpace> {
        Ok(match self {
            SpaceConfig::Euclidean { dim } => PointSpace::euclidean(*dim)?,
            SpaceConfig::FuncLp { p, grid } => {
                let grid = match grid {
                    Some(g) => Arc::new(g.build(ctx)?),
                    None => ctx
                        .grid
                        .clone()
                        .ok_or_else(|| invalid("a func_lp space needs a grid: give one in the kernel file or with --grid"))?,
                };
                PointSpace::func_lp(grid, *p)?
            }
            SpaceConfig::MeasurePoints { base } => PointSpace::measures_over(base.build(ctx)?)?,
        })
    }
}

fn metric_for(space: &PointSpace) -> CResult<MetricSpec> {
    match space {
        PointSpace::Euclidean { dim } => Ok(MetricSpec::Euclidean { dim: *dim }),
        PointSpace::FuncLp { grid, p } => Ok(MetricSpec::lp(grid.clone(), *p)?),
        PointSpace::MeasurePoints { .. } => Err(invalid("metric kernels are not available on measure spaces")),
    }
}

impl KernelConfig {
    /// Parses a kernel spec from JSON text.
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Builds the top-level kernel.
    pub fn build(&self, ctx: &BuildContext) -> CResult<KernelSpec> {
        self.build_in(ctx, ctx.default_space.as_ref())
    }

    fn phi(&self) -> CResult<PhiProfile> {
        let phi = self.phi.clone().ok_or_else(|| invalid("this kernel rule needs a 'phi' profile"))?;
        phi.validate()?;
        Ok(phi)
    }

    fn space(&self, ctx: &BuildContext, inherited: Option<&PointSpace>) -> CResult<PointSpace> {
        match (&self.space, inherited) {
            (Some(s), _) => s.build(ctx),
            (None, Some(s)) => Ok(s.clone()),
            (None, None) => Err(invalid("the kernel spec needs a 'space'")),
        }
    }

    fn build_in(&self, ctx: &BuildContext, inherited: Option<&PointSpace>) -> CResult<KernelSpec> {
        Ok(match &self.rule {
            RuleConfig::RadialHilbert => make_radial_hilbert(self.phi()?, self.space(ctx, inherited)?)?,
            RuleConfig::TeeRadial { map } => {
                let map = match map {
                    MapConfig::Identity => MapSpec::Identity,
                    MapConfig::DiagonalScale { factors } => MapSpec::DiagonalScale { factors: factors.clone() },
                    MapConfig::LinearGridMap { matrix } => {
                        let ncols = matrix.first().map_or(0, Vec::len);
                        if matrix.iter().any(|r| r.len() != ncols) {
                            return Err(invalid("linear map rows have different lengths"));
                        }
                        let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                        MapSpec::LinearGridMap { matrix: DMatrix::from_row_slice(matrix.len(), ncols, &flat) }
                    }
                };
                make_tee_radial(self.phi()?, map, self.space(ctx, inherited)?)?
            }
            RuleConfig::LpOperator { k1 } => {
                let PointSpace::FuncLp { grid, p } = self.space(ctx, inherited)? else {
                    return Err(invalid("lp_operator needs a func_lp space"));
                };
                let k1 = k1.build_in(ctx, Some(&PointSpace::Euclidean { dim: 1 }))?;
                make_lp_operator(self.phi()?, k1, grid, p)?
            }
            RuleConfig::MetricPhi => make_metric_phi(self.phi()?, metric_for(&self.space(ctx, inherited)?)?)?,
            RuleConfig::Distance { z0 } => {
                let space = self.space(ctx, inherited)?;
                let metric = metric_for(&space)?;
                let z0 = match (&space, z0) {
                    (PointSpace::Euclidean { dim }, z) => Point::Vector(z.clone().unwrap_or_else(|| vec![0.0; *dim])),
                    (PointSpace::FuncLp { grid, .. }, Some(z)) => {
                        Point::Function(FunctionSample::new(grid.clone(), z.clone())?)
                    }
                    (PointSpace::FuncLp { grid, .. }, None) => Point::Function(FunctionSample::constant(grid.clone(), 0.0)?),
                    (PointSpace::MeasurePoints { .. }, _) => unreachable!("rejected by metric_for"),
                };
                make_distance_kernel(metric, z0)?
            }
            RuleConfig::Mixture { components } => {
                let space = self.space(ctx, inherited).ok();
                let parts = components
                    .iter()
                    .map(|c| Ok((c.kernel.build_in(ctx, space.as_ref())?, c.weight)))
                    .collect::<CResult<Vec<_>>>()?;
                make_mixture(parts)?
            }
            RuleConfig::KmeMeasure { k1 } => {
                let base = match self.space(ctx, inherited) {
                    Ok(PointSpace::MeasurePoints { base }) => Some(*base),
                    Ok(_) => return Err(invalid("kme_measure needs a measure_points space")),
                    Err(_) => None,
                };
                make_kme_measure(self.phi()?, k1.build_in(ctx, base.as_ref())?)?
            }
            RuleConfig::FourierMeasure { freqs, freq_weights, n, seed, dim } => {
                let dim = match (dim, self.space(ctx, inherited)) {
                    (Some(d), _) => *d,
                    (None, Ok(PointSpace::MeasurePoints { base })) => match *base {
                        PointSpace::Euclidean { dim } => dim,
                        _ => return Err(invalid("fourier_measure needs measures over R^d")),
                    },
                    (None, _) => return Err(invalid("fourier_measure needs 'dim' or a measure_points space")),
                };
                let freqs = match freqs {
                    FreqsConfig::Named(name) if name == "gaussian" => {
                        gaussian_frequencies(n.unwrap_or(64), dim, seed.unwrap_or(0))?
                    }
                    FreqsConfig::Named(name) => return Err(invalid(format!("unknown frequency family '{name}'"))),
                    FreqsConfig::Explicit(s) => {
                        let w = match freq_weights {
                            Some(w) if w.len() == s.len() => w.clone(),
                            Some(w) => {
                                return Err(invalid(format!("{} frequency weights for {} frequencies", w.len(), s.len())))
                            }
                            None => vec![1.0 / s.len() as f64; s.len()],
                        };
                        s.iter().cloned().zip(w).collect()
                    }
                };
                make_fourier_measure(self.phi()?, freqs, dim)?
            }
            RuleConfig::QuantileMonge { u_grid } => {
                let grid = match u_grid {
                    Some(g) => g.build(ctx)?,
                    None => QuadratureGrid::with_domain(
                        (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect(),
                        vec![0.01; 100],
                        (0.0, 1.0),
                    )?,
                };
                make_quantile_monge(self.phi()?, Arc::new(grid))?
            }
        })
    }
}

/// Reads and builds a kernel spec file; relative grid paths resolve against
/// the file's directory.
pub fn load_kernel(path: &Path, ctx: &BuildContext) -> CResult<KernelSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
    let cfg = KernelConfig::from_json(&text)
        .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
    let ctx = BuildContext {
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        ..ctx.clone()
    };
    cfg.build(&ctx)
}

/// The Gaussian radial kernel `exp(-‖x - y‖²/2)` on `space`.
pub fn default_kernel(space: PointSpace) -> crate::Result<KernelSpec> {
    make_radial_hilbert(PhiProfile::Gaussian { alpha: 0.5 }, space)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Gram,
    Mmd,
    Test2,
    Score,
    Power,
    Selfcheck,
}

/// A scenario given inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(PathBuf),
    Inline(Scenario),
}

/// Every command-line option; each may also come from a `--config` file,
/// with command-line values taking precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub kernel: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub forecast: Option<PathBuf>,
    pub forecast_weights: Option<PathBuf>,
    pub obs: Option<PathBuf>,
    pub grid: Option<PathBuf>,
    pub scenario: Option<ScenarioSource>,
    pub out: Option<PathBuf>,
    pub perms: Option<i64>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<i64>,
    pub estimator: Option<Estimator>,
}

pub const DEFAULT_PERMS: usize = 999;
pub const DEFAULT_ALPHA: f64 = 0.05;

impl RunConfig {
    /// Reads a run config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.to_path_buf(), msg: e.to_string() })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for p in [
            &mut cfg.kernel,
            &mut cfg.points,
            &mut cfg.x,
            &mut cfg.y,
            &mut cfg.forecast,
            &mut cfg.forecast_weights,
            &mut cfg.obs,
            &mut cfg.grid,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            *p = dir.join(&*p);
        }
        if let Some(ScenarioSource::Path(p)) = &mut cfg.scenario {
            *p = dir.join(&*p);
        }
        Ok(cfg)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merged(self, over: RunConfig) -> RunConfig {
        RunConfig {
            command: over.command.or(self.command),
            kernel: over.kernel.or(self.kernel),
            points: over.points.or(self.points),
            x: over.x.or(self.x),
            y: over.y.or(self.y),
            forecast: over.forecast.or(self.forecast),
            forecast_weights: over.forecast_weights.or(self.forecast_weights),
            obs: over.obs.or(self.obs),
            grid: over.grid.or(self.grid),
            scenario: over.scenario.or(self.scenario),
            out: over.out.or(self.out),
            perms: over.perms.or(self.perms),
            alpha: over.alpha.or(self.alpha),
            seed: over.seed.or(self.seed),
            trials: over.trials.or(self.trials),
            estimator: over.estimator.or(self.estimator),
        }
    }

    pub fn n_perm(&self) -> CResult<usize> {
        match self.perms {
            None => Ok(DEFAULT_PERMS),
            Some(n) if n >= 1 => Ok(n as usize),
            Some(n) => Err(invalid(format!("--perms must be a positive integer, got {n}"))),
        }
    }

    pub fn alpha(&self) -> CResult<f64> {
        match self.alpha {
            None => Ok(DEFAULT_ALPHA),
            Some(a) if a > 0.0 && a < 1.0 => Ok(a),
            Some(a) => Err(invalid(format!("--alpha must lie in (0, 1), got {a}"))),
        }
    }

    pub fn trials(&self) -> CResult<usize> {
        match self.trials {
            Some(n) if n >= 1 => Ok(n as usize),
            Some(n) => Err(invalid(format!("--trials must be a positive integer, got {n}"))),
            None => Err(invalid("power needs --trials")),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn scenario(&self) -> CResult<Scenario> {
        let scenario = match &self.scenario {
            Some(ScenarioSource::Inline(s)) => s.clone(),
            Some(ScenarioSource::Path(p)) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError::Parse { path: p.clone(), msg: e.to_string() })?;
                serde_json::from_str(&text).map_err(|e| ConfigError::Parse { path: p.clone(), msg: e.to_string() })?
            }
            None => return Err(invalid("power needs --scenario")),
        };
        scenario.validate().map_err(|e| invalid(format!("invalid scenario: {e}")))?;
        Ok(scenario)
    }
}
