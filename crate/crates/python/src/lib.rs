use std::path::PathBuf;
use std::sync::Arc;

use eigopt_core::eig::EigEstimator;
use eigopt_core::harness::{
    benchmark_estimator, build_diffusion_surrogate, check_surrogate, emit_reports, run_matrix, ExperimentConfig,
    ExperimentSetup, ModelChoice, QuadratureSpec, SaaSettings, SurrogateSpec,
};
use eigopt_core::models::{DiffusionConfig, DiffusionModel, ForwardModel};
use eigopt_core::optim::{rm_optimize, saa_optimize, BfgsOptions, GainSchedule, OptimizationTrace, RmOptions};
use eigopt_core::polychaos::{legendre_derivative as psi_prime, legendre_value as psi, PCExpansion};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Legendre polynomial on [-1, 1] with P_n(1) = 1.
#[pyfunction]
fn legendre_value(n: usize, x: f64) -> f64 {
    psi(n, x)
}

#[pyfunction]
fn legendre_derivative(n: usize, x: f64) -> f64 {
    psi_prime(n, x)
}

/// Observations of the diffusion model at one sensor.
#[pyfunction]
fn diffusion_observe(source: (f64, f64), sensor: (f64, f64)) -> PyResult<Vec<f64>> {
    let model = DiffusionModel::new(DiffusionConfig::default()).map_err(err)?;
    model.value(&[source.0, source.1], &[sensor.0, sensor.1]).map_err(err)
}

/// Legendre chaos surrogate of the diffusion model over (source, sensor).
#[pyclass(frozen)]
struct Surrogate {
    inner: Arc<PCExpansion>,
}

#[pymethods]
impl Surrogate {
    /// Builds by spectral projection with a tensor Clenshaw-Curtis rule.
    #[staticmethod]
    #[pyo3(signature = (degree = 4, level = 3, log_space = false))]
    fn build(degree: u32, level: u32, log_space: bool) -> PyResult<Self> {
        let spec = SurrogateSpec {
            degree,
            quadrature: QuadratureSpec::Tensor { levels: vec![level; 4] },
            log_space,
            ..SurrogateSpec::default()
        };
        let (e, _) = build_diffusion_surrogate(&spec).map_err(err)?;
        Ok(Surrogate { inner: Arc::new(e) })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Surrogate {
            inner: Arc::new(PCExpansion::from_json(text).map_err(err)?),
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n_terms(&self) -> usize {
        self.inner.n_terms()
    }

    #[getter]
    fn n_outputs(&self) -> usize {
        self.inner.n_outputs()
    }

    fn evaluate(&self, theta: Vec<f64>, design: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&theta, &design).map_err(err)
    }

    /// Row-major (output, design component) Jacobian.
    fn gradient_wrt_design(&self, theta: Vec<f64>, design: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.gradient_wrt_design(&theta, &design).map_err(err)
    }

    /// Relative L² error against direct solves at random points.
    #[pyo3(signature = (samples = 200, seed = 0))]
    fn check(&self, samples: usize, seed: u64) -> PyResult<f64> {
        let model = DiffusionModel::new(DiffusionConfig::default()).map_err(err)?;
        Ok(check_surrogate(&self.inner, &model, samples, seed).map_err(err)?.relative_l2)
    }
}

/// Nested Monte Carlo estimator of expected information gain.
#[pyclass(frozen)]
struct Estimator {
    inner: EigEstimator,
}

#[pymethods]
impl Estimator {
    /// Benchmark noise and uniform prior over the surrogate's source box.
    #[new]
    fn new(surrogate: &Surrogate, n: usize, m: usize) -> PyResult<Self> {
        Ok(Estimator {
            inner: benchmark_estimator(surrogate.inner.clone(), n, m).map_err(err)?,
        })
    }

    /// `G = d θ` with `θ ~ N(0, 1)` and constant noise `alpha`.
    #[staticmethod]
    fn linear_gaussian(alpha: f64, lower: f64, upper: f64, n: usize, m: usize) -> PyResult<Self> {
        let setup = ModelChoice::LinearGaussian { alpha, lower, upper }
            .resolve(std::path::Path::new("."))
            .map_err(err)?;
        Ok(Estimator {
            inner: setup.estimator(n, m).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n_outer()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.n_inner()
    }

    fn value(&self, design: Vec<f64>, seed: u64) -> PyResult<f64> {
        self.inner.eig_value_fresh(&design, seed).map_err(err)
    }

    /// `(value, gradient, n_model_evals)` on the sample set drawn from `seed`.
    fn value_and_gradient(&self, design: Vec<f64>, seed: u64) -> PyResult<(f64, Vec<f64>, u64)> {
        let s = self.inner.draw_sample_set(seed);
        let r = self.inner.eig_gradient(&design, &s).map_err(err)?;
        Ok((r.value, r.gradient, r.n_model_evals))
    }
}

fn trace_dict<'py>(py: Python<'py>, t: usize, trace: &OptimizationTrace) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", t)?;
    d.set_item("design", trace.final_iterate().to_vec())?;
    d.set_item("iterates", trace.iterates.clone())?;
    d.set_item("termination", trace.termination.as_str())?;
    d.set_item("iterations", trace.iterations)?;
    d.set_item("wall_time", trace.wall_time)?;
    Ok(d)
}

/// Independent Robbins-Monro runs; failed runs are returned as strings.
#[pyfunction]
#[pyo3(signature = (estimator, runs, seed, beta = 1.0, max_iters = 50))]
fn optimize_rm<'py>(
    py: Python<'py>,
    estimator: &Estimator,
    runs: usize,
    seed: u64,
    beta: f64,
    max_iters: usize,
) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let mut opts = RmOptions::new(estimator.inner.design_bounds().clone());
    opts.gain = GainSchedule::harmonic(beta).map_err(err)?;
    opts.max_iters = max_iters;
    rm_optimize(&estimator.inner, runs, &opts, seed)
        .map_err(err)?
        .into_iter()
        .enumerate()
        .map(|(t, r)| match r {
            Ok(trace) => Ok(trace_dict(py, t, &trace)?.into_any()),
            Err(e) => Ok(e.to_string().into_pyobject(py)?.into_any()),
        })
        .collect()
}

/// Sample-average runs with BFGS; returns replicates, gaps and the upper bound.
#[pyfunction]
#[pyo3(signature = (estimator, runs, seed, n_prime = None))]
fn optimize_saa<'py>(
    py: Python<'py>,
    estimator: &Estimator,
    runs: usize,
    seed: u64,
    n_prime: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let n_prime = n_prime.unwrap_or_else(|| SaaSettings::default().n_prime_for(estimator.inner.n_outer()));
    let opts = BfgsOptions::new(estimator.inner.design_bounds().clone());
    let out = saa_optimize(&estimator.inner, runs, n_prime, &opts, seed).map_err(err)?;
    let replicates = out
        .replicates
        .iter()
        .map(|r| {
            let d = trace_dict(py, r.t, &r.trace)?;
            d.set_item("optimum", r.optimum)?;
            d.set_item("lower", r.lower)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let gaps = out
        .gaps
        .iter()
        .map(|g| (g.t, g.upper, g.lower, g.gap, g.variance))
        .collect::<Vec<_>>();
    let d = PyDict::new(py);
    d.set_item("replicates", replicates)?;
    d.set_item("gaps", gaps)?;
    d.set_item("upper", out.upper)?;
    d.set_item(
        "failures",
        out.failures.iter().map(|(t, e)| (*t, e.to_string())).collect::<Vec<_>>(),
    )?;
    Ok(d)
}

/// Runs an experiment matrix from a JSON config and writes its reports.
#[pyfunction]
fn run_experiment(config_json: &str, out_dir: PathBuf) -> PyResult<Vec<PathBuf>> {
    let config: ExperimentConfig = serde_json::from_str(config_json).map_err(err)?;
    let setup: ExperimentSetup = config.model.resolve(std::path::Path::new(".")).map_err(err)?;
    let result = run_matrix(&config, &setup).map_err(err)?;
    emit_reports(&result, &out_dir).map_err(err)
}

#[pymodule]
fn eigopt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Surrogate>()?;
    m.add_class::<Estimator>()?;
    m.add_function(wrap_pyfunction!(legendre_value, m)?)?;
    m.add_function(wrap_pyfunction!(legendre_derivative, m)?)?;
    m.add_function(wrap_pyfunction!(diffusion_observe, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_rm, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_saa, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
