//! Python bindings: tradeoff curves, Monte Carlo outage points, slope fits and
//! exponent classification.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use dmtlab_core::channel::{ExponentVector, MimoConfig};
use dmtlab_core::exponents::{classify_event, EventClass, JointExponentSample};
use dmtlab_core::protocol::{estimate_diversity_slope, simulate_point, OutageEstimate, ProtocolOptions, Scenario};
use dmtlab_core::{dmt, Error};

create_exception!(dmtlab, DmtlabError, PyValueError);

fn to_py(e: Error) -> PyErr {
    DmtlabError::new_err(e.to_string())
}

#[pyfunction]
fn g_tradeoff(r: f64, p: f64, m: usize, n: usize) -> PyResult<f64> {
    dmt::g_tradeoff(r, p, m, n).map_err(to_py)
}

#[pyfunction]
fn d_perfect_feedback(r: f64, k: usize, m: usize, n: usize) -> PyResult<f64> {
    dmt::d_perfect_feedback(r, k, m, n).map_err(to_py)
}

#[pyfunction]
fn d_constant_power_feedback(r: f64, k: usize, m: usize, n: usize) -> PyResult<f64> {
    dmt::d_constant_power_feedback(r, k, m, n).map_err(to_py)
}

/// Returns (diversity, [q_0, ..., q_{K-1}]).
#[pyfunction]
fn d_power_controlled_feedback(r: f64, k: usize, m: usize, n: usize) -> PyResult<(f64, Vec<f64>)> {
    dmt::d_power_controlled_feedback(r, k, m, n)
        .map(|(d, q)| (d, q.q))
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (r, m, n, power_controlled = true))]
fn d_training(r: f64, m: usize, n: usize, power_controlled: bool) -> PyResult<f64> {
    dmt::d_training(r, m, n, power_controlled).map_err(to_py)
}

/// Returns (diversity, minimizing subset as 0-based user indices).
#[pyfunction]
fn mac_tradeoff(r_vec: Vec<f64>, p: f64, m: usize, n: usize) -> PyResult<(f64, Vec<usize>)> {
    dmt::mac_tradeoff(&r_vec, p, m, n)
        .map(|t| (t.diversity, t.subset))
        .map_err(to_py)
}

#[pyfunction]
fn mac_main_tradeoff(r_vec: Vec<f64>, m: usize, n: usize) -> PyResult<f64> {
    dmt::mac_main_tradeoff(&r_vec, m, n).map_err(to_py)
}

#[pyclass(name = "MimoConfig", module = "dmtlab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMimoConfig {
    inner: MimoConfig,
}

#[pymethods]
impl PyMimoConfig {
    #[new]
    #[pyo3(signature = (m, n, snr_db, r, k_levels = 2, n_train = None, epsilon = 0.05))]
    fn new(m: usize, n: usize, snr_db: f64, r: f64, k_levels: usize, n_train: Option<usize>, epsilon: f64) -> PyResult<Self> {
        let base = MimoConfig::new(m, n, dmtlab_core::channel::db_to_linear(snr_db), r)
            .and_then(|c| c.with_k_levels(k_levels))
            .and_then(|c| c.with_epsilon(epsilon))
            .map_err(to_py)?;
        let inner = match n_train {
            Some(t) => base.with_n_train(t).map_err(to_py)?,
            None => base,
        };
        Ok(Self { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn snr(&self) -> f64 {
        self.inner.snr
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db()
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn k_levels(&self) -> usize {
        self.inner.k_levels
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.inner.n_train
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    /// Target rate in bits per channel use.
    fn rate(&self) -> f64 {
        self.inner.rate()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "MimoConfig(m={}, n={}, snr_db={}, r={}, k_levels={}, n_train={}, epsilon={})",
            c.m,
            c.n,
            c.snr_db(),
            c.r,
            c.k_levels,
            c.n_train,
            c.epsilon
        )
    }
}

#[pyclass(name = "OutageEstimate", module = "dmtlab", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyOutageEstimate {
    snr: f64,
    trials: u64,
    outages: u64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    mean_fwd_power: f64,
    mean_fb_power: f64,
    index_mismatches: u64,
    low_confidence: bool,
}

impl From<OutageEstimate> for PyOutageEstimate {
    fn from(e: OutageEstimate) -> Self {
        Self {
            snr: e.snr,
            trials: e.trials,
            outages: e.outages,
            p_hat: e.p_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            mean_fwd_power: e.mean_fwd_power,
            mean_fb_power: e.mean_fb_power,
            index_mismatches: e.index_mismatches,
            low_confidence: e.low_confidence,
        }
    }
}

impl PyOutageEstimate {
    fn to_core(&self) -> OutageEstimate {
        OutageEstimate {
            snr: self.snr,
            trials: self.trials,
            outages: self.outages,
            p_hat: self.p_hat,
            ci_low: self.ci_low,
            ci_high: self.ci_high,
            mean_fwd_power: self.mean_fwd_power,
            mean_fb_power: self.mean_fb_power,
            index_mismatches: self.index_mismatches,
            low_confidence: self.low_confidence,
        }
    }
}

#[pymethods]
impl PyOutageEstimate {
    fn __repr__(&self) -> String {
        format!(
            "OutageEstimate(snr={}, trials={}, outages={}, p_hat={}, ci=({}, {}))",
            self.snr, self.trials, self.outages, self.p_hat, self.ci_low, self.ci_high
        )
    }
}

/// Scenario names accepted by `simulate`.
#[pyfunction]
fn scenarios() -> Vec<&'static str> {
    Scenario::ALL.iter().map(|s| s.name()).collect()
}

/// Calibrates and runs one operating point. Releases the GIL while running.
#[pyfunction]
#[pyo3(signature = (scenario, config, trials, seed = 1, parallelism = 1, pilot_trials = 200_000))]
fn simulate(
    py: Python<'_>,
    scenario: &str,
    config: &PyMimoConfig,
    trials: u64,
    seed: u64,
    parallelism: usize,
    pilot_trials: usize,
) -> PyResult<PyOutageEstimate> {
    let sc: Scenario = scenario.parse().map_err(to_py)?;
    let cfg = config.inner.clone();
    let opts = ProtocolOptions {
        pilot_trials,
        ..ProtocolOptions::default()
    };
    py.detach(move || simulate_point(sc, &cfg, &opts, trials, seed, parallelism))
        .map(|(_, e)| e.into())
        .map_err(to_py)
}

/// Least-squares diversity slope and its standard error.
#[pyfunction]
fn diversity_slope(points: Vec<PyRef<'_, PyOutageEstimate>>) -> PyResult<(f64, f64)> {
    let pts: Vec<OutageEstimate> = points.iter().map(|p| p.to_core()).collect();
    estimate_diversity_slope(&pts)
        .map(|f| (f.slope, f.stderr))
        .map_err(to_py)
}

/// Class index k of a joint exponent pair, or None on a class boundary.
#[pyfunction]
#[pyo3(signature = (alpha, alpha_hat, delta = 0.1))]
fn classify(alpha: Vec<f64>, alpha_hat: Vec<f64>, delta: f64) -> PyResult<Option<usize>> {
    let sample = JointExponentSample {
        alpha: ExponentVector::new(alpha),
        alpha_hat: ExponentVector::new(alpha_hat),
        snr: f64::NAN,
        rho: f64::NAN,
    };
    match classify_event(&sample, delta).map_err(to_py)? {
        EventClass::Class(k) => Ok(Some(k)),
        EventClass::Boundary => Ok(None),
    }
}

#[pymodule]
fn dmtlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DmtlabError", m.py().get_type::<DmtlabError>())?;
    m.add_class::<PyMimoConfig>()?;
    m.add_class::<PyOutageEstimate>()?;
    m.add_function(wrap_pyfunction!(g_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(d_perfect_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(d_constant_power_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(d_power_controlled_feedback, m)?)?;
    m.add_function(wrap_pyfunction!(d_training, m)?)?;
    m.add_function(wrap_pyfunction!(mac_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(mac_main_tradeoff, m)?)?;
    m.add_function(wrap_pyfunction!(scenarios, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(diversity_slope, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    Ok(())
}
