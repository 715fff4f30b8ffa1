//! Python bindings: kernels built from JSON specs, Gram matrices, MMDs,
//! kernel scores, permutation tests and the selfcheck suite.
//!
//! Points are passed as Python values matching the kernel's space: a list of
//! floats (or a float on the real line) for vectors, a list of grid values for
//! functions, and a `(points, weights)` pair for measures.

use std::sync::Arc;

use kernmetric::config::{BuildContext, KernelConfig};
use kernmetric::embeddings::{gram, kme_sq_norm, min_eigenvalue_of};
use kernmetric::kernels::KernelSpec;
use kernmetric::selfcheck;
use kernmetric::spaces::{DiscreteMeasure, FunctionSample, MetricSpec, Point, PointSpace, QuadratureGrid};
use kernmetric::stats::{self, Estimator};
use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_point(space: &PointSpace, obj: &Bound<'_, PyAny>) -> PyResult<Point> {
    match space {
        PointSpace::Euclidean { dim } => {
            if *dim == 1 {
                if let Ok(x) = obj.extract::<f64>() {
                    return Ok(Point::scalar(x));
                }
            }
            Ok(Point::Vector(obj.extract::<Vec<f64>>()?))
        }
        PointSpace::FuncLp { grid, .. } => {
            FunctionSample::new(grid.clone(), obj.extract::<Vec<f64>>()?).map(Point::Function).map_err(value_err)
        }
        PointSpace::MeasurePoints { base } => Ok(Point::Measure(to_measure(base, obj)?)),
    }
}

fn to_measure(space: &PointSpace, obj: &Bound<'_, PyAny>) -> PyResult<DiscreteMeasure> {
    let (points, weights): (Vec<Bound<'_, PyAny>>, Vec<f64>) = obj.extract()?;
    let pts = points.iter().map(|p| to_point(space, p)).collect::<PyResult<Vec<_>>>()?;
    DiscreteMeasure::new(space.clone(), pts, weights).map_err(value_err)
}

fn to_points(space: &PointSpace, objs: &[Bound<'_, PyAny>]) -> PyResult<Vec<Point>> {
    objs.iter().map(|o| to_point(space, o)).collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// A positive definite kernel built from a JSON kernel spec.
#[pyclass(frozen, module = "pykernmetric")]
struct Kernel {
    inner: KernelSpec,
}

#[pymethods]
impl Kernel {
    /// Builds a kernel from a JSON spec; `grid` is an optional
    /// `(nodes, weights)` pair used by `func_lp` spaces that omit one.
    #[staticmethod]
    #[pyo3(signature = (spec, grid=None))]
    fn from_json(spec: &str, grid: Option<(Vec<f64>, Vec<f64>)>) -> PyResult<Self> {
        let cfg = KernelConfig::from_json(spec).map_err(value_err)?;
        let grid = grid
            .map(|(n, w)| QuadratureGrid::new(n, w).map(Arc::new))
            .transpose()
            .map_err(value_err)?;
        let ctx = BuildContext { grid, ..Default::default() };
        Ok(Kernel { inner: cfg.build(&ctx).map_err(value_err)? })
    }

    /// The Gaussian kernel `exp(-|x - y|² / 2)` on `R^dim`.
    #[staticmethod]
    fn gaussian(dim: usize) -> PyResult<Self> {
        let space = PointSpace::euclidean(dim).map_err(value_err)?;
        Ok(Kernel { inner: kernmetric::config::default_kernel(space).map_err(value_err)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    #[getter]
    fn space(&self) -> String {
        self.inner.space().to_string()
    }

    #[getter]
    fn is_strict(&self) -> bool {
        self.inner.is_strict()
    }

    #[getter]
    fn diagonal_value(&self) -> Option<f64> {
        self.inner.diagonal_value()
    }

    fn eval(&self, x: &Bound<'_, PyAny>, y: &Bound<'_, PyAny>) -> PyResult<f64> {
        let s = self.inner.space();
        self.inner.eval(&to_point(s, x)?, &to_point(s, y)?).map_err(value_err)
    }

    fn __call__(&self, x: &Bound<'_, PyAny>, y: &Bound<'_, PyAny>) -> PyResult<f64> {
        self.eval(x, y)
    }

    /// Gram matrix as a list of rows.
    fn gram(&self, points: Vec<Bound<'_, PyAny>>) -> PyResult<Vec<Vec<f64>>> {
        let pts = to_points(self.inner.space(), &points)?;
        let g = gram(&self.inner, &pts).map_err(value_err)?;
        Ok(matrix_rows(g.entries()))
    }

    /// `‖Φ(μ)‖²` for a signed measure `(points, weights)`.
    fn sq_norm(&self, mu: &Bound<'_, PyAny>) -> PyResult<f64> {
        kme_sq_norm(&self.inner, &to_measure(self.inner.space(), mu)?).map_err(value_err)
    }

    fn mmd(&self, p: &Bound<'_, PyAny>, q: &Bound<'_, PyAny>) -> PyResult<f64> {
        let s = self.inner.space();
        stats::mmd(&self.inner, &to_measure(s, p)?, &to_measure(s, q)?).map_err(value_err)
    }

    fn divergence(&self, p: &Bound<'_, PyAny>, q: &Bound<'_, PyAny>) -> PyResult<f64> {
        let s = self.inner.space();
        stats::divergence(&self.inner, &to_measure(s, p)?, &to_measure(s, q)?).map_err(value_err)
    }

    /// Kernel score of forecast `p` at observation `x`.
    fn score(&self, p: &Bound<'_, PyAny>, x: &Bound<'_, PyAny>) -> PyResult<f64> {
        let s = self.inner.space();
        stats::kernel_score(&self.inner, &to_measure(s, p)?, &to_point(s, x)?).map_err(value_err)
    }

    fn mmd_u_statistic(&self, xs: Vec<Bound<'_, PyAny>>, ys: Vec<Bound<'_, PyAny>>) -> PyResult<f64> {
        let s = self.inner.space();
        stats::mmd_u_statistic(&self.inner, &to_points(s, &xs)?, &to_points(s, &ys)?).map_err(value_err)
    }

    /// Permutation two-sample test; returns a dict with `statistic`,
    /// `p_value`, `n_permutations`, `seed` and `estimator`.
    #[pyo3(signature = (xs, ys, n_perm=999, seed=0, estimator="u_statistic"))]
    fn permutation_test<'py>(
        &self,
        py: Python<'py>,
        xs: Vec<Bound<'py, PyAny>>,
        ys: Vec<Bound<'py, PyAny>>,
        n_perm: usize,
        seed: u64,
        estimator: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let est = match estimator {
            "u_statistic" => Estimator::UStatistic,
            "v_statistic" => Estimator::VStatistic,
            other => return Err(PyValueError::new_err(format!("unknown estimator '{other}'"))),
        };
        let s = self.inner.space();
        let (xs, ys) = (to_points(s, &xs)?, to_points(s, &ys)?);
        let r = py
            .detach(|| stats::permutation_test_with(&self.inner, &xs, &ys, n_perm, seed, est))
            .map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("statistic", r.statistic)?;
        d.set_item("p_value", r.p_value)?;
        d.set_item("n_permutations", r.n_permutations)?;
        d.set_item("seed", r.seed)?;
        d.set_item("estimator", estimator)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Kernel(kind='{}', space='{}')", self.inner.kind(), self.inner.space())
    }
}

/// Energy distance between two weighted point sets in `R^d`.
#[pyfunction]
fn energy_distance(p: (Vec<Vec<f64>>, Vec<f64>), q: (Vec<Vec<f64>>, Vec<f64>)) -> PyResult<f64> {
    let dim = p.0.first().map_or(1, Vec::len);
    let space = PointSpace::euclidean(dim).map_err(value_err)?;
    let build = |(pts, w): (Vec<Vec<f64>>, Vec<f64>)| {
        DiscreteMeasure::new(space.clone(), pts.into_iter().map(Point::Vector).collect(), w).map_err(value_err)
    };
    stats::energy_distance(&MetricSpec::Euclidean { dim }, &build(p)?, &build(q)?).map_err(value_err)
}

/// Smallest eigenvalue of a symmetric matrix given as a list of rows.
#[pyfunction]
fn min_eigenvalue(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    min_eigenvalue_of(&DMatrix::from_row_slice(n, n, &flat)).map_err(value_err)
}

/// Runs the invariant suite; returns `(name, passed)` pairs.
#[pyfunction]
fn run_selfcheck(py: Python<'_>) -> PyResult<Vec<(String, bool)>> {
    let outcomes = py
        .detach(|| selfcheck::run(selfcheck::Options::default(), &mut std::io::sink()))
        .map_err(value_err)?;
    Ok(outcomes.into_iter().map(|o| (o.name.to_string(), o.error.is_none())).collect())
}

#[pymodule]
fn pykernmetric(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Kernel>()?;
    m.add_function(wrap_pyfunction!(energy_distance, m)?)?;
    m.add_function(wrap_pyfunction!(min_eigenvalue, m)?)?;
    m.add_function(wrap_pyfunction!(run_selfcheck, m)?)?;
    Ok(())
}
