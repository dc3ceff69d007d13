//! Python bindings.

use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use covihawkes::data as core_data;
use covihawkes::evaluate;
use covihawkes::forecast::ForecastMode;
use covihawkes::hawkes;
use covihawkes::ingest;
use covihawkes::model_io::SavedModel;
use covihawkes::scenario;
use covihawkes::synth;
use covihawkes::trainer;

fn to_py(e: covihawkes::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn parse_date(s: &str) -> PyResult<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| PyValueError::new_err(format!("bad date `{s}`: {e}")))
}

#[pyclass(name = "ModelConfig", from_py_object)]
#[derive(Clone)]
pub struct PyModelConfig {
    inner: core_data::ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    #[pyo3(signature = (lag=28, delta=14, hidden=32, mobility_dim=6, step_size=1e-2, max_iters=2000, tolerance=1e-6, patience=50, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(lag: usize, delta: usize, hidden: usize, mobility_dim: usize, step_size: f64, max_iters: usize, tolerance: f64, patience: usize, seed: u64) -> PyResult<Self> {
        let inner = core_data::ModelConfig {
            lag,
            delta,
            hidden,
            mobility_dim,
            optimizer: core_data::OptimizerSettings {
                step_size,
                max_iters,
                tolerance,
                patience,
                seed,
            },
            trainable: core_data::TrainableGroups::default(),
        };
        inner.validate().map_err(to_py)?;
        Ok(PyModelConfig { inner })
    }

    #[getter]
    fn lag(&self) -> usize {
        self.inner.lag
    }

    #[getter]
    fn delta(&self) -> usize {
        self.inner.delta
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.inner.hidden
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.optimizer.seed
    }

    fn first_scored_day(&self) -> usize {
        self.inner.first_scored_day()
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(lag={}, delta={}, hidden={}, max_iters={})",
            self.inner.lag, self.inner.delta, self.inner.hidden, self.inner.optimizer.max_iters
        )
    }
}

#[pyclass(name = "RegionRecord", from_py_object)]
#[derive(Clone)]
pub struct PyRegionRecord {
    inner: core_data::RegionRecord,
}

#[pymethods]
impl PyRegionRecord {
    #[new]
    fn new(region_id: String, cases: Vec<u64>, mobility: Vec<Vec<f64>>, vaccinated: Vec<u64>, population: u64, start_date: &str) -> PyResult<Self> {
        let inner = core_data::RegionRecord::new(
            core_data::RegionId::nation(region_id),
            cases,
            mobility,
            vaccinated,
            population,
            parse_date(start_date)?,
        )
        .map_err(to_py)?;
        Ok(PyRegionRecord { inner })
    }

    #[getter]
    fn region_id(&self) -> String {
        self.inner.region().id.clone()
    }

    #[getter]
    fn cases(&self) -> Vec<u64> {
        self.inner.cases().to_vec()
    }

    #[getter]
    fn mobility(&self) -> Vec<Vec<f64>> {
        self.inner.mobility().to_vec()
    }

    #[getter]
    fn vaccinated(&self) -> Vec<u64> {
        self.inner.vaccinated().to_vec()
    }

    #[getter]
    fn population(&self) -> u64 {
        self.inner.population()
    }

    #[getter]
    fn start_date(&self) -> String {
        self.inner.start_date().to_string()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "HawkesParams", from_py_object)]
#[derive(Clone)]
pub struct PyHawkesParams {
    inner: covihawkes::HawkesParams,
}

#[pymethods]
impl PyHawkesParams {
    #[staticmethod]
    fn init(config: &PyModelConfig, seed: u64) -> Self {
        PyHawkesParams {
            inner: covihawkes::HawkesParams::init(&config.inner, seed),
        }
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights()
    }

    fn flatten(&self) -> Vec<f64> {
        self.inner.flatten()
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }
}

#[pyclass(name = "TrainReport")]
pub struct PyTrainReport {
    #[pyo3(get)]
    nll_trace: Vec<f64>,
    #[pyo3(get)]
    iterations_run: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    final_nll: f64,
    params: covihawkes::HawkesParams,
}

#[pymethods]
impl PyTrainReport {
    #[getter]
    fn params(&self) -> PyHawkesParams {
        PyHawkesParams {
            inner: self.params.clone(),
        }
    }
}

/// λ(t) from the base rate, lag weights and the last L values of R and C
/// (index 0 = yesterday).
#[pyfunction]
fn intensity(mu: f64, weights: Vec<f64>, r_window: Vec<f64>, c_window: Vec<f64>) -> PyResult<f64> {
    hawkes::intensity(mu, &weights, &r_window, &c_window).map_err(to_py)
}

#[pyfunction]
fn discount(lam: f64, n_prev: f64, v_prev: f64, population: f64) -> PyResult<f64> {
    hawkes::discount(lam, n_prev, v_prev, population).map_err(to_py)
}

#[pyfunction]
fn poisson_nll(lambda_tilde: f64, count: f64) -> f64 {
    hawkes::poisson_nll(lambda_tilde, count)
}

/// `(index, start_day, end_day)` triples.
#[pyfunction]
fn make_intervals(t_s: usize, span: usize, window: usize) -> PyResult<Vec<(usize, usize, usize)>> {
    Ok(evaluate::make_intervals(t_s, span, window)
        .map_err(to_py)?
        .into_iter()
        .map(|i| (i.index, i.start, i.end))
        .collect())
}

#[pyfunction]
fn mape(actual: Vec<u64>, predicted: Vec<f64>) -> PyResult<f64> {
    evaluate::mape(&actual, &predicted).map_err(to_py)
}

/// `(name, start_date, end_date)` for each built-in scenario.
#[pyfunction]
fn builtin_presets() -> Vec<(String, String, String)> {
    scenario::builtin_presets()
        .into_iter()
        .map(|p| (p.name.to_owned(), p.interval.start.to_string(), p.interval.end.to_string()))
        .collect()
}

/// Simulates a constant-R region.
#[pyfunction]
#[pyo3(signature = (mu, weights, r, population, horizon, seed=0))]
fn generate(mu: f64, weights: Vec<f64>, r: f64, population: u64, horizon: usize, seed: u64) -> PyResult<PyRegionRecord> {
    let spec = synth::SynthSpec {
        horizon,
        ..synth::SynthSpec::constant(mu, weights, r, population, seed)
    };
    Ok(PyRegionRecord {
        inner: synth::generate(&spec).map_err(to_py)?,
    })
}

#[pyfunction]
fn fit(py: Python<'_>, record: &PyRegionRecord, config: &PyModelConfig) -> PyResult<PyTrainReport> {
    let (record, config) = (record.inner.clone(), config.inner.clone());
    let report = py.detach(move || trainer::fit(&record, &config)).map_err(to_py)?;
    Ok(PyTrainReport {
        nll_trace: report.nll_trace,
        iterations_run: report.iterations_run,
        converged: report.converged,
        final_nll: report.final_nll,
        params: report.final_params,
    })
}

#[pyfunction]
fn total_nll(params: &PyHawkesParams, record: &PyRegionRecord, config: &PyModelConfig) -> PyResult<f64> {
    covihawkes::objective::total_nll(&params.inner, &record.inner, &config.inner).map_err(to_py)
}

/// Scenario forecast past the end of `record`, with mobility averaged by
/// weekday over `start..=end`. Returns `(date, lambda_tilde, predicted,
/// cumulative)` rows.
#[pyfunction]
#[pyo3(signature = (params, config, record, start, end, horizon, mode="mean", seed=0))]
#[allow(clippy::too_many_arguments)]
fn long_forecast(
    params: &PyHawkesParams,
    config: &PyModelConfig,
    record: &PyRegionRecord,
    start: &str,
    end: &str,
    horizon: usize,
    mode: &str,
    seed: u64,
) -> PyResult<Vec<(String, f64, f64, f64)>> {
    let mode = match mode {
        "mean" => ForecastMode::MeanPath,
        "sample" => ForecastMode::Sampled,
        other => return Err(PyValueError::new_err(format!("mode must be `mean` or `sample`, got `{other}`"))),
    };
    let interval = scenario::DateInterval::new(parse_date(start)?, parse_date(end)?).map_err(to_py)?;
    let table = scenario::table_from_record(&record.inner, "custom", interval).map_err(to_py)?;
    let out = scenario::long_forecast(&params.inner, &config.inner, &record.inner, &table, horizon, mode, seed).map_err(to_py)?;
    Ok(out
        .points
        .iter()
        .map(|p| (p.date.to_string(), p.lambda_tilde, p.predicted, p.cumulative))
        .collect())
}

/// Loads the five CSV files from `data_dir`, aggregating missing parent
/// regions. Returns `{region_id: RegionRecord}`.
#[pyfunction]
fn load_bundle(data_dir: PathBuf) -> PyResult<std::collections::BTreeMap<String, PyRegionRecord>> {
    let bundle = ingest::load_bundle(&ingest::DataPaths::in_dir(&data_dir)).map_err(to_py)?;
    let bundle = ingest::complete_hierarchy(bundle).map_err(to_py)?;
    Ok(bundle
        .records
        .into_iter()
        .map(|(id, inner)| (id, PyRegionRecord { inner }))
        .collect())
}

#[pyfunction]
fn save_model(path: PathBuf, region: String, params: &PyHawkesParams, config: &PyModelConfig) -> PyResult<()> {
    SavedModel {
        region,
        config: config.inner.clone(),
        params: params.inner.clone(),
    }
    .save(&path)
    .map_err(to_py)
}

/// Returns `(region, params, config)`.
#[pyfunction]
fn load_model(path: PathBuf) -> PyResult<(String, PyHawkesParams, PyModelConfig)> {
    let m = SavedModel::load(&path).map_err(to_py)?;
    Ok((m.region, PyHawkesParams { inner: m.params }, PyModelConfig { inner: m.config }))
}

#[pymodule]
#[pyo3(name = "covihawkes")]
fn covihawkes_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyRegionRecord>()?;
    m.add_class::<PyHawkesParams>()?;
    m.add_class::<PyTrainReport>()?;
    m.add_function(wrap_pyfunction!(intensity, m)?)?;
    m.add_function(wrap_pyfunction!(discount, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_nll, m)?)?;
    m.add_function(wrap_pyfunction!(make_intervals, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_presets, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(total_nll, m)?)?;
    m.add_function(wrap_pyfunction!(long_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(load_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(save_model, m)?)?;
    m.add_function(wrap_pyfunction!(load_model, m)?)?;
    Ok(())
}
