//! Python bindings. Configurations cross the boundary as lists of `+`/`-`
//! strings (one per row) going in and lists of integer rows coming out.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use vnrf::context::{compute_context, context_census, ContextStatus};
use vnrf::experiments::{parse_configuration, run_sweep_in, SweepConfig};
use vnrf::oracle::{conditional_from_phi, exact_observed_measure};
use vnrf::sampler::{McmcSettings, NoiseParams, ObservedSampler as CoreSampler, RngStream, SamplingMethod};
use vnrf::specification::{extremal_rates as core_rates, SpecificationParams};
use vnrf::theory::{self, Thresholds};
use vnrf::{BoundaryCondition, Configuration, Error, Site, Window};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn boundary(name: &str) -> PyResult<BoundaryCondition> {
    name.parse().map_err(to_py)
}

fn configuration(rows: Vec<String>, bc: &str) -> PyResult<Configuration> {
    parse_configuration(&rows.join("\n"), boundary(bc)?).map_err(to_py)
}

fn thresholds(p_star: Option<f64>) -> PyResult<Thresholds> {
    let d = Thresholds::default();
    Thresholds::new(p_star.unwrap_or(d.p_star), d.beta_c).map_err(to_py)
}

fn ising(beta: f64) -> PyResult<SpecificationParams> {
    SpecificationParams::ising(beta).map_err(to_py)
}

/// Context of `site` as `(members, resolved)`; members are `(row, col)`.
#[pyfunction]
#[pyo3(signature = (rows, site, boundary = "plus"))]
fn context(rows: Vec<String>, site: (i32, i32), boundary: &str) -> PyResult<(Vec<(i32, i32)>, bool)> {
    let x = configuration(rows, boundary)?;
    let c = compute_context(&x, Site::from(site)).map_err(to_py)?;
    let members = c.members().iter().map(|s| (s.i1, s.i2)).collect();
    Ok((members, c.status() == ContextStatus::ResolvedWithinWindow))
}

/// `(spanning, truncated_fraction, resolved context sizes)` of a configuration.
#[pyfunction]
fn census(rows: Vec<String>) -> PyResult<(bool, Option<f64>, Vec<usize>)> {
    let c = context_census(&configuration(rows, "plus")?);
    Ok((c.spanning, c.truncated_fraction(), c.resolved_sizes().collect()))
}

/// `P(X_i = +1 | rest)` from the context formula.
#[pyfunction]
fn conditional(rows: Vec<String>, site: (i32, i32), beta: f64, epsilon: f64) -> PyResult<f64> {
    let x = configuration(rows, "plus")?;
    let noise = NoiseParams::new(epsilon).map_err(to_py)?;
    conditional_from_phi(&ising(beta)?, &noise, &x, Site::from(site)).map_err(to_py)
}

/// `P(X_i = +1 | rest of window)` by full enumeration (at most 16 sites).
#[pyfunction]
#[pyo3(signature = (rows, site, beta, epsilon, boundary = "plus"))]
fn exact_conditional(rows: Vec<String>, site: (i32, i32), beta: f64, epsilon: f64, boundary: &str) -> PyResult<f64> {
    let x = configuration(rows, boundary)?;
    let noise = NoiseParams::new(epsilon).map_err(to_py)?;
    let m = exact_observed_measure(&ising(beta)?, &noise, x.window()).map_err(to_py)?;
    m.conditional_plus(&x, Site::from(site)).map_err(to_py)
}

/// `(lambda0_plus, lambda0_minus)` for the Ising model at `beta`.
#[pyfunction]
fn extremal_rates(beta: f64) -> PyResult<(f64, f64)> {
    let r = core_rates(&ising(beta)?);
    Ok((r.lambda0_plus, r.lambda0_minus))
}

#[pyfunction]
#[pyo3(signature = (epsilon, p_star = None))]
fn remark_beta_bound(epsilon: f64, p_star: Option<f64>) -> PyResult<Option<f64>> {
    Ok(theory::remark_beta_bound(epsilon, &thresholds(p_star)?))
}

#[pyfunction]
#[pyo3(signature = (epsilon, lambda0_plus, p_star = None))]
fn thm2_finite_condition(epsilon: f64, lambda0_plus: f64, p_star: Option<f64>) -> PyResult<bool> {
    Ok(theory::thm2_finite_condition(epsilon, lambda0_plus, &thresholds(p_star)?))
}

#[pyfunction]
#[pyo3(signature = (epsilon, lambda0_minus, p_star = None))]
fn thm2_infinite_condition(epsilon: f64, lambda0_minus: f64, p_star: Option<f64>) -> PyResult<bool> {
    Ok(theory::thm2_infinite_condition(epsilon, lambda0_minus, &thresholds(p_star)?))
}

#[pyfunction]
fn thm3_epsilon_bound(beta: f64) -> f64 {
    theory::thm3_epsilon_bound(beta)
}

#[pyfunction]
fn lemma1_bound(beta: f64, epsilon: f64, path_length: usize) -> f64 {
    theory::lemma1_bound(beta, epsilon, path_length)
}

/// Runs a sweep described by TOML text; returns the number of result rows.
#[pyfunction]
fn run_sweep(config_toml: &str, output_dir: PathBuf) -> PyResult<usize> {
    let config = SweepConfig::from_toml_str(config_toml).map_err(to_py)?;
    Ok(run_sweep_in(&config, &output_dir).map_err(to_py)?.len())
}

/// Repeated draws of the observed field on a square window.
#[pyclass(module = "vnrf_py")]
struct ObservedSampler {
    inner: CoreSampler,
    rng: RngStream,
}

#[pymethods]
impl ObservedSampler {
    #[new]
    #[pyo3(signature = (beta, epsilon, size, boundary = "plus", seed = 0, stream = 0, exact = false))]
    fn new(beta: f64, epsilon: f64, size: usize, boundary: &str, seed: u64, stream: u64, exact: bool) -> PyResult<Self> {
        let window = Window::square(size, self::boundary(boundary)?).map_err(to_py)?;
        let noise = NoiseParams::new(epsilon).map_err(to_py)?;
        let method =
            if exact { SamplingMethod::Exact } else { SamplingMethod::Mcmc(McmcSettings::default_for(&window)) };
        let inner = CoreSampler::new(&ising(beta)?, &noise, &window, method).map_err(to_py)?;
        Ok(ObservedSampler { inner, rng: RngStream::new(seed, stream) })
    }

    /// Next observed configuration as rows of +1/-1.
    fn draw(&mut self) -> Vec<Vec<i8>> {
        self.inner.draw(&mut self.rng).rows()
    }
}

#[pymodule]
fn vnrf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(context, m)?)?;
    m.add_function(wrap_pyfunction!(census, m)?)?;
    m.add_function(wrap_pyfunction!(conditional, m)?)?;
    m.add_function(wrap_pyfunction!(exact_conditional, m)?)?;
    m.add_function(wrap_pyfunction!(extremal_rates, m)?)?;
    m.add_function(wrap_pyfunction!(remark_beta_bound, m)?)?;
    m.add_function(wrap_pyfunction!(thm2_finite_condition, m)?)?;
    m.add_function(wrap_pyfunction!(thm2_infinite_condition, m)?)?;
    m.add_function(wrap_pyfunction!(thm3_epsilon_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lemma1_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_class::<ObservedSampler>()?;
    Ok(())
}
