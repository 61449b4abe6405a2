use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use circspline_core::circle::{self, AngularSample, FourierCoefficients};
use circspline_core::detect::{self as det, DetectConfig, DetectionReport};
use circspline_core::error::Error;
use circspline_core::io;
use circspline_core::kde::{self, KernelKind, KernelSpec};
use circspline_core::pipeline::{self, CombinedDensityEstimate, LambdaChoice, PipelineConfig};
use circspline_core::sim::Scenario;
use circspline_core::spline::{self, LambdaGrid, SplineDensityEstimate};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Estimation { .. } | Error::Inconsistent(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn sample(angles: Vec<f64>) -> PyResult<AngularSample> {
    AngularSample::new(angles).map_err(py_err)
}

/// Wrap an angle into [0, 2π).
#[pyfunction]
fn wrap_angle(x: f64) -> PyResult<f64> {
    circle::wrap_angle(x).map(|a| a.value()).map_err(py_err)
}

/// Empirical Fourier coefficients for k = 0..=max_order.
#[pyfunction]
fn empirical_fourier(angles: Vec<f64>, max_order: usize) -> PyResult<Vec<Complex64>> {
    let u = circle::empirical_fourier(&sample(angles)?, max_order).map_err(py_err)?;
    Ok(u.nonnegative().to_vec())
}

/// A fitted Fourier-spline estimate.
#[pyclass(name = "SplineFit", frozen)]
struct PySplineFit {
    inner: SplineDensityEstimate,
}

#[pymethods]
impl PySplineFit {
    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn max_order(&self) -> usize {
        self.inner.max_order()
    }

    /// Density with respect to arc length.
    fn density(&self, x: f64) -> f64 {
        self.inner.density(x)
    }

    fn coefficients(&self) -> Vec<Complex64> {
        self.inner.shrunken.nonnegative().to_vec()
    }
}

/// Fit with a fixed penalty, or the selected one when `lam` is None.
#[pyfunction]
#[pyo3(signature = (angles, lam=None, max_order=None))]
fn fit_spline(angles: Vec<f64>, lam: Option<f64>, max_order: Option<usize>) -> PyResult<PySplineFit> {
    let s = sample(angles)?;
    let lam = match lam {
        Some(l) => l,
        None => select_lambda_inner(&s, max_order)?.0,
    };
    let inner = spline::fit_spline_density(&s, lam, max_order).map_err(py_err)?;
    Ok(PySplineFit { inner })
}

fn select_lambda_inner(s: &AngularSample, max_order: Option<usize>) -> PyResult<(f64, f64)> {
    let k = max_order.unwrap_or_else(|| spline::default_order(s.len()));
    let u: FourierCoefficients = circle::empirical_fourier(s, k).map_err(py_err)?;
    let (l, m) = spline::select_lambda(&u, s.len(), &LambdaGrid::default()).map_err(py_err)?;
    Ok((l, m.total))
}

/// Selected penalty and its estimated risk.
#[pyfunction]
#[pyo3(signature = (angles, max_order=None))]
fn select_lambda(angles: Vec<f64>, max_order: Option<usize>) -> PyResult<(f64, f64)> {
    select_lambda_inner(&sample(angles)?, max_order)
}

/// Feature detection report as a JSON string.
#[pyfunction]
#[pyo3(signature = (angles, max_layer=None, alpha=0.05))]
fn detect(angles: Vec<f64>, max_layer: Option<u32>, alpha: f64) -> PyResult<String> {
    let s = sample(angles)?;
    let cfg = DetectConfig::new(max_layer.unwrap_or_else(|| DetectConfig::default_layer(s.len())), alpha);
    let report: DetectionReport = det::detect_features(&s, &cfg).map_err(py_err)?;
    io::to_json_string(&report).map_err(py_err)
}

/// The combined estimate.
#[pyclass(name = "Estimate", frozen)]
struct PyEstimate {
    inner: CombinedDensityEstimate,
}

#[pymethods]
impl PyEstimate {
    #[pyo3(signature = (x, exact=false))]
    fn evaluate(&self, x: f64, exact: bool) -> f64 {
        pipeline::evaluate(&self.inner, x, exact)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.inner.grid.clone()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.smooth.lambda
    }

    fn grid_integral(&self) -> f64 {
        self.inner.grid_integral()
    }

    /// `(kind, location, start, length)` for each detected feature.
    fn features(&self) -> Vec<(String, f64, f64, f64)> {
        self.inner
            .report
            .features
            .iter()
            .map(|f| (format!("{:?}", f.kind), f.location, f.interval.start, f.interval.len))
            .collect()
    }

    fn report_json(&self) -> PyResult<String> {
        io::to_json_string(&self.inner.report).map_err(py_err)
    }
}

/// Run the full estimator.
#[pyfunction]
#[pyo3(signature = (angles, lam=None, max_layer=None, alpha=0.05, detection=true))]
fn estimate(
    angles: Vec<f64>,
    lam: Option<f64>,
    max_layer: Option<u32>,
    alpha: f64,
    detection: bool,
) -> PyResult<PyEstimate> {
    let cfg = PipelineConfig {
        max_layer,
        alpha,
        detection,
        lambda: lam.map_or(LambdaChoice::Auto, LambdaChoice::Fixed),
        ..PipelineConfig::default()
    };
    let inner = pipeline::estimate(&sample(angles)?, &cfg).map_err(py_err)?;
    Ok(PyEstimate { inner })
}

/// Kernel density estimate at each point of `xs`.
#[pyfunction]
#[pyo3(signature = (angles, xs, kernel="epanechnikov", bandwidth=None))]
fn kde_estimate(angles: Vec<f64>, xs: Vec<f64>, kernel: &str, bandwidth: Option<f64>) -> PyResult<Vec<f64>> {
    let s = sample(angles)?;
    let kind = KernelKind::parse(kernel).map_err(py_err)?;
    let h = match bandwidth {
        Some(h) => h,
        None => kde::bandwidth_plugin(&s, kind).map_err(py_err)?.h,
    };
    let est = kde::KdeEstimate::new(&s, KernelSpec::new(kind, h).map_err(py_err)?).map_err(py_err)?;
    Ok(est.density_many(&xs))
}

/// Indices rejected by the Holm procedure.
#[pyfunction]
fn holm(pvals: Vec<f64>, alpha: f64) -> Vec<usize> {
    det::holm(&pvals, alpha)
}

/// Weighted geometric mean of p-values.
#[pyfunction]
fn aggregate_pvalues(pvals: Vec<f64>, weights: Vec<f64>) -> PyResult<f64> {
    det::aggregate_pvalues(&pvals, &weights).map_err(py_err)
}

/// Draw from a named simulation scenario.
#[pyfunction]
#[pyo3(signature = (name, n, seed, eps=None, theta=None))]
fn sample_scenario(name: &str, n: usize, seed: u64, eps: Option<f64>, theta: Option<f64>) -> PyResult<Vec<f64>> {
    let mut sc = Scenario::parse(name).map_err(py_err)?;
    match &mut sc {
        Scenario::EpsMixture { eps: e, .. } => *e = eps.unwrap_or(*e),
        Scenario::WrappedBimodal { theta: t, .. } => *t = theta.unwrap_or(*t),
        _ => {}
    }
    Ok(sc.sample(n, seed).map_err(py_err)?.angles().to_vec())
}

#[pymodule]
#[pyo3(name = "circspline")]
fn circspline_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySplineFit>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(wrap_angle, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_fourier, m)?)?;
    m.add_function(wrap_pyfunction!(fit_spline, m)?)?;
    m.add_function(wrap_pyfunction!(select_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(kde_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(holm, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_pvalues, m)?)?;
    m.add_function(wrap_pyfunction!(sample_scenario, m)?)?;
    Ok(())
}
