//! Python bindings for the `pmobo` optimizer.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pmobo::benchmarks::{self, Problem};
use pmobo::engine::{self, EngineConfig, InverseSampler, Method, RunArtifacts};
use pmobo::gp::{self, GpModel, Hyperparameters, Observation};
use pmobo::kernels::{CompositeKernel, DecisionKernelParams, TaskKernelParams};
use pmobo::metrics::{self, GainCheckConfig};
use pmobo::rng;
use pmobo::scalarize::{self, Preference};

fn to_py(e: pmobo::Error) -> PyErr {
    use pmobo::Error::*;
    match e {
        Shape(_) | Input(_) | Capability(_) | Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn preference(components: Vec<f64>) -> PyResult<Preference> {
    Preference::from_direction(&components).map_err(to_py)
}

/// A named test problem with a scalar task parameter.
#[pyclass(module = "pmobo_py", frozen)]
struct Benchmark {
    inner: benchmarks::Benchmark,
}

#[pymethods]
impl Benchmark {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self { inner: benchmarks::by_name(name).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn v(&self) -> usize {
        self.inner.v
    }

    fn evaluate(&self, x: Vec<f64>, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.evaluate(&x, &theta).map_err(to_py)
    }

    fn reference_point(&self) -> Vec<f64> {
        self.inner.reference_point()
    }

    /// `n` points of the Pareto front for task `theta`.
    fn analytic_front(&self, theta: Vec<f64>, n: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner.analytic_front(&theta, n).map_err(to_py)
    }

    #[pyo3(signature = (k, seed=0))]
    fn sample_tasks(&self, k: usize, seed: u64) -> Vec<Vec<f64>> {
        benchmarks::sample_tasks(&self.inner, k, &mut rng::stream(seed, &[rng::label::TASKS])).0
    }

    fn __repr__(&self) -> String {
        format!("Benchmark('{}', d={}, m={}, v={})", self.inner.name, self.inner.d, self.inner.m, self.inner.v)
    }
}

/// Exact GP posterior under the product kernel.
#[pyclass(module = "pmobo_py", frozen)]
struct GaussianProcess {
    inner: GpModel,
}

fn observations(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> PyResult<Vec<Observation>> {
    if inputs.len() != targets.len() {
        return Err(PyValueError::new_err(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    Ok(inputs.into_iter().zip(targets).map(|(x, y)| Observation::new(x, y)).collect())
}

#[pymethods]
impl GaussianProcess {
    /// Trailing `len(task_lengthscales)` input columns are task parameters.
    #[new]
    #[pyo3(signature = (inputs, targets, lengthscale=0.5, task_lengthscales=Vec::new(), scale=1.0, noise=1e-2, standardize=true))]
    fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        lengthscale: f64,
        task_lengthscales: Vec<f64>,
        scale: f64,
        noise: f64,
        standardize: bool,
    ) -> PyResult<Self> {
        let obs = observations(inputs, targets)?;
        let kernel = CompositeKernel::new(
            DecisionKernelParams::new(lengthscale).map_err(to_py)?,
            TaskKernelParams::new(task_lengthscales).map_err(to_py)?,
            scale,
        )
        .map_err(to_py)?;
        let inner = if standardize { gp::fit(&obs, kernel, noise) } else { gp::fit_unstandardized(&obs, kernel, noise) };
        Ok(Self { inner: inner.map_err(to_py)? })
    }

    /// Fits after maximizing the marginal likelihood with Adam.
    #[staticmethod]
    #[pyo3(signature = (inputs, targets, task_dims=0, steps=50, learning_rate=0.1))]
    fn trained(inputs: Vec<Vec<f64>>, targets: Vec<f64>, task_dims: usize, steps: usize, learning_rate: f64) -> PyResult<Self> {
        let obs = observations(inputs, targets)?;
        let init = Hyperparameters::new(CompositeKernel::default_for(task_dims), 1e-2).map_err(to_py)?;
        let out = gp::train_hyperparameters(&obs, &init, steps, learning_rate).map_err(to_py)?;
        Ok(Self { inner: gp::fit_with(&obs, &out.hyper).map_err(to_py)? })
    }

    /// Posterior `(mean, variance)` at `x`.
    fn predict(&self, x: Vec<f64>) -> PyResult<(f64, f64)> {
        let p = self.inner.predict(&x).map_err(to_py)?;
        Ok((p.mean, p.variance))
    }

    fn predict_batch(&self, xs: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
        Ok(self.inner.predict_batch(&xs).map_err(to_py)?.into_iter().map(|p| (p.mean, p.variance)).collect())
    }

    fn log_marginal_likelihood(&self) -> f64 {
        self.inner.log_marginal_likelihood()
    }

    #[getter]
    fn lengthscale(&self) -> f64 {
        self.inner.kernel().decision.lengthscale()
    }

    #[getter]
    fn noise_variance(&self) -> f64 {
        self.inner.noise_variance()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Finished optimization run.
#[pyclass(module = "pmobo_py", frozen)]
struct Run {
    inner: RunArtifacts,
}

#[pymethods]
impl Run {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.config.method.name()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn tasks(&self) -> Vec<Vec<f64>> {
        self.inner.state.tasks.clone()
    }

    #[getter]
    fn hv_history(&self) -> Vec<Vec<f64>> {
        self.inner.state.hv_history.clone()
    }

    #[getter]
    fn evaluations(&self) -> u64 {
        self.inner.state.counters.evaluations
    }

    fn final_hypervolumes(&self) -> Vec<f64> {
        self.inner.final_hypervolumes()
    }

    /// Evaluated `(x, f)` pairs of task `k` in evaluation order.
    fn archive(&self, k: usize) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
        let archive = self
            .inner
            .state
            .archives
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("task index {k} out of range")))?;
        Ok(archive.iter().map(|r| (r.x.clone(), r.f.clone())).collect())
    }

    #[getter]
    fn has_inverse_model(&self) -> bool {
        self.inner.inverse_model.is_some()
    }

    /// One decision vector for task `theta` and preference direction `lam`.
    #[pyo3(signature = (theta, lam, seed=0))]
    fn inverse_query(&self, theta: Vec<f64>, lam: Vec<f64>, seed: u64) -> PyResult<Vec<f64>> {
        let model = self.model()?;
        let mut r = rng::stream(seed, &[rng::label::INVERSE_EVAL]);
        model.query(&theta, &preference(lam)?, &mut r).map_err(to_py)
    }

    /// Mean and standard deviation of the inverse model's hypervolume over
    /// `w` unseen tasks with `s` preference queries each, plus per-task values.
    #[pyo3(signature = (w=100, s=100, seed=None))]
    fn evaluate_inverse(&self, w: usize, s: usize, seed: Option<u64>) -> PyResult<(f64, f64, Vec<f64>)> {
        let model = self.model()?;
        let problem = benchmarks::by_name(&self.inner.problem).map_err(to_py)?;
        let state = &self.inner.state;
        let ev = engine::evaluate_inverse(
            model,
            &problem,
            w,
            s,
            &state.tasks,
            &state.hv_reference,
            seed.unwrap_or(self.inner.seed),
        )
        .map_err(to_py)?;
        Ok((ev.mean, ev.std, ev.tasks.iter().map(|t| t.hv).collect()))
    }

    /// Writes the run directory read by the command-line tools.
    fn write(&self, dir: std::path::PathBuf) -> PyResult<()> {
        engine::write_run_dir(&dir, &self.inner).map_err(to_py)
    }
}

impl Run {
    fn model(&self) -> PyResult<&engine::InverseModel> {
        self.inner
            .inverse_model
            .as_ref()
            .ok_or_else(|| PyValueError::new_err(format!("method {} has no generator", self.inner.config.method)))
    }
}

/// Runs one seeded optimization. `config` is engine settings as JSON;
/// `method` overrides its method.
#[pyfunction]
#[pyo3(signature = (benchmark, seed=0, method=None, config=None))]
fn run(py: Python<'_>, benchmark: &str, seed: u64, method: Option<&str>, config: Option<&str>) -> PyResult<Run> {
    let problem = benchmarks::by_name(benchmark).map_err(to_py)?;
    let mut cfg: EngineConfig = match config {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))?,
        None => EngineConfig::default(),
    };
    if let Some(m) = method {
        cfg.method = Method::parse(m).map_err(to_py)?;
    }
    let out = py.detach(|| engine::run(&problem, &cfg, seed));
    out.map(|inner| Run { inner }).map_err(|f| to_py(f.error))
}

#[pyfunction]
fn hypervolume(points: Vec<Vec<f64>>, reference: Vec<f64>) -> PyResult<f64> {
    metrics::hypervolume(&points, &reference).map_err(to_py)
}

/// Scalarized score of `y` for preference direction `lam` and reference `z`.
#[pyfunction]
fn hv_scalarize(lam: Vec<f64>, y: Vec<f64>, z: Vec<f64>) -> PyResult<f64> {
    if y.len() != lam.len() || z.len() != lam.len() {
        return Err(PyValueError::new_err("lam, y and z must have equal length"));
    }
    Ok(scalarize::hv_scalarize(&preference(lam)?, &y, &z))
}

#[pyfunction]
#[pyo3(signature = (m, seed=0))]
fn sample_preference(m: usize, seed: u64) -> Vec<f64> {
    scalarize::sample_preference(m, &mut rng::stream(seed, &[])).as_slice().to_vec()
}

/// Checks joint-versus-single information gain on random designs.
#[pyfunction]
#[pyo3(signature = (trials=100, seed=0))]
fn verify_gain_bound(py: Python<'_>, trials: usize, seed: u64) -> PyResult<Bound<'_, PyDict>> {
    let report = py.detach(|| metrics::gain_bound_check(trials, seed, &GainCheckConfig::default())).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("trials", report.trials)?;
    d.set_item("comparisons", report.rows.len())?;
    d.set_item("violations", report.violations())?;
    d.set_item("max_violation", report.max_violation())?;
    d.set_item("min_gap", report.min_gap())?;
    d.set_item("mean_gap", report.mean_gap())?;
    d.set_item("max_gap", report.max_gap())?;
    d.set_item("passed", report.passed())?;
    Ok(d)
}

/// Runs the command-line tool; returns `(exit_code, stdout, stderr)`.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(|| {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let argv = std::iter::once("pmobo".to_string()).chain(args);
        let code = pmobo::cli::main_with(argv, &mut out, &mut err);
        (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
    })
}

#[pymodule]
pub fn pmobo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Benchmark>()?;
    m.add_class::<GaussianProcess>()?;
    m.add_class::<Run>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(hypervolume, m)?)?;
    m.add_function(wrap_pyfunction!(hv_scalarize, m)?)?;
    m.add_function(wrap_pyfunction!(sample_preference, m)?)?;
    m.add_function(wrap_pyfunction!(verify_gain_bound, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    m.add("METHODS", Method::ALL.map(Method::name).to_vec())?;
    Ok(())
}
