//! Python bindings for the `qlwe` simulator.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlwe::experiment::{self, ExperimentConfig};
use qlwe::instance::{self as inst, ErrorDistribution, ErrorKind};
use qlwe::oracle::{self, QramScheme, SampleForm};
use qlwe::qsim::{self, KernelSampler};
use qlwe::reduce::{self, InputSet};
use qlwe::solver;

create_exception!(qlwe_py, LweError, PyValueError);
create_exception!(qlwe_py, InvariantViolation, LweError);

fn err(e: qlwe::LweError) -> PyErr {
    match e {
        qlwe::LweError::InvariantViolation(msg) => InvariantViolation::new_err(msg),
        other => LweError::new_err(other.to_string()),
    }
}

fn chi(kind: &str, bound: u64, sigma: Option<f64>) -> PyResult<ErrorDistribution> {
    let kind: ErrorKind = kind.parse().map_err(err)?;
    ErrorDistribution::of_kind(kind, bound, sigma).map_err(err)
}

/// Round-trips a serde value into plain Python objects via JSON.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| LweError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(frozen, eq, skip_from_py_object, name = "FieldElement")]
#[derive(Clone, Copy, PartialEq)]
struct PyFieldElement(qlwe::FieldElement);

#[pymethods]
impl PyFieldElement {
    #[new]
    fn new(value: i64, q: u64) -> PyResult<Self> {
        qlwe::FieldElement::from_signed(value, q).map(Self).map_err(err)
    }

    #[getter]
    fn value(&self) -> u64 {
        self.0.value()
    }

    #[getter]
    fn modulus(&self) -> u64 {
        self.0.modulus()
    }

    fn inv(&self) -> PyResult<Self> {
        self.0.inv().map(Self).map_err(err)
    }

    /// Representative in `(-q/2, q/2]`.
    fn centered(&self) -> i64 {
        self.0.centered().value()
    }

    fn __add__(&self, other: &Self) -> PyResult<Self> {
        self.same_field(other)?;
        Ok(Self(self.0 + other.0))
    }

    fn __sub__(&self, other: &Self) -> PyResult<Self> {
        self.same_field(other)?;
        Ok(Self(self.0 - other.0))
    }

    fn __mul__(&self, other: &Self) -> PyResult<Self> {
        self.same_field(other)?;
        Ok(Self(self.0 * other.0))
    }

    fn __neg__(&self) -> Self {
        Self(-self.0)
    }

    fn __int__(&self) -> u64 {
        self.0.value()
    }

    fn __repr__(&self) -> String {
        format!("FieldElement({}, q={})", self.0.value(), self.0.modulus())
    }
}

impl PyFieldElement {
    fn same_field(&self, other: &Self) -> PyResult<()> {
        if self.0.modulus() != other.0.modulus() {
            return Err(err(qlwe::LweError::ModulusMismatch(self.0.modulus(), other.0.modulus())));
        }
        Ok(())
    }
}

#[pyclass(frozen, name = "LweInstance")]
struct PyLweInstance(qlwe::LweInstance);

#[pymethods]
impl PyLweInstance {
    #[staticmethod]
    #[pyo3(signature = (n, q, xi, kind = "uniform", sigma = None, seed = 0))]
    fn generate(n: usize, q: u64, xi: u64, kind: &str, sigma: Option<f64>, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        qlwe::LweInstance::generate(n, q, chi(kind, xi, sigma)?, &mut rng)
            .map(Self)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (secret, q, xi, kind = "uniform", sigma = None))]
    fn from_secret(secret: Vec<u64>, q: u64, xi: u64, kind: &str, sigma: Option<f64>) -> PyResult<Self> {
        let s = qlwe::FieldVector::new(secret, q).map_err(err)?;
        qlwe::LweInstance::new(s, chi(kind, xi, sigma)?).map(Self).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn q(&self) -> u64 {
        self.0.q()
    }

    #[getter]
    fn xi(&self) -> u64 {
        self.0.xi()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }

    #[getter]
    fn secret(&self) -> Vec<u64> {
        self.0.secret().values().to_vec()
    }

    /// `count` samples as `(a, b, eta)` tuples.
    #[pyo3(signature = (count, seed = 0))]
    fn samples(&self, count: usize, seed: u64) -> Vec<(Vec<u64>, u64, i64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.0
            .gen_samples(count, &mut rng)
            .iter()
            .map(|s| (s.a().values().to_vec(), s.b().value(), s.ground_truth_error().value()))
            .collect()
    }

    /// The sample file text (header, then one sample per line).
    #[pyo3(signature = (count, seed = 0))]
    fn to_text(&self, count: usize, seed: u64) -> PyResult<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = self.0.gen_samples(count, &mut rng);
        let mut out = Vec::new();
        inst::write_samples(&mut out, &self.0, seed, &samples).map_err(err)?;
        Ok(String::from_utf8_lossy(&out).into_owned())
    }

    /// Runs the solver once and returns the outcome as a dict.
    #[pyo3(signature = (gamma = 0.125, delta = 0.2, l = None, m = None, mode = "controlled", kernel = "sampled", seed = 1, trial = 0))]
    #[allow(clippy::too_many_arguments)]
    fn solve<'py>(
        &self,
        py: Python<'py>,
        gamma: f64,
        delta: f64,
        l: Option<usize>,
        m: Option<usize>,
        mode: &str,
        kernel: &str,
        seed: u64,
        trial: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut cfg = ExperimentConfig {
            n: self.0.n(),
            q: self.0.q(),
            xi: self.0.xi(),
            gamma,
            delta,
            l,
            m,
            seed,
            ..ExperimentConfig::default()
        };
        cfg.set("mode", mode).map_err(err)?;
        cfg.set("kernel", kernel).map_err(err)?;
        cfg.validate().map_err(err)?;
        let params = cfg.solve_parameters().map_err(err)?;
        let outcome = solver::solve(&self.0, &params, &cfg.options(), seed, trial).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("class", outcome.class.to_string())?;
        d.set_item("returned_s", outcome.returned_s.as_ref().map(|s| s.values().to_vec()))?;
        d.set_item("quantum_samples", outcome.quantum_samples())?;
        d.set_item("test_samples", outcome.test_samples())?;
        d.set_item("null_count", outcome.null_count())?;
        d.set_item("true_rejections", outcome.true_rejections(self.0.secret()))?;
        d.set_item("l", params.l)?;
        d.set_item("m", params.m)?;
        d.set_item("xi_prime", params.xi_prime)?;
        d.set_item("per_coordinate", to_py(py, &outcome.per_coordinate)?)?;
        Ok(d.into_any())
    }

    fn __repr__(&self) -> String {
        format!("LweInstance(n={}, q={}, xi={})", self.0.n(), self.0.q(), self.0.xi())
    }
}

#[pyclass(frozen, name = "ReducedBatch")]
struct PyReducedBatch {
    batch: qlwe::ReducedBatch,
    s_j: qlwe::FieldElement,
}

#[pymethods]
impl PyReducedBatch {
    /// Controlled-mode batch: one pair per `a'` in a random `v_j` of the
    /// given size (all of F_q by default), errors bounded by `xi_prime`.
    #[staticmethod]
    #[pyo3(signature = (q, s_j, xi_prime, size = None, kind = "uniform", seed = 0))]
    fn synthesize(q: u64, s_j: u64, xi_prime: u64, size: Option<usize>, kind: &str, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = qlwe::FieldElement::new(s_j, q).map_err(err)?;
        let v = InputSet::of_size(size.unwrap_or(q as usize), q).draw(q, &mut rng);
        let chi_prime = chi(kind, xi_prime, None)?;
        let batch = reduce::synth_reduced_batch(0, s, &v, xi_prime.max(1), &chi_prime, &mut rng).map_err(err)?;
        Ok(Self { batch, s_j: s })
    }

    fn __len__(&self) -> usize {
        self.batch.len()
    }

    #[getter]
    fn q(&self) -> u64 {
        self.batch.q
    }

    #[getter]
    fn s_j(&self) -> u64 {
        self.s_j.value()
    }

    /// `(a', b', eta', coeff_l1)` per pair.
    fn pairs(&self) -> Vec<(u64, u64, i64, u64)> {
        self.batch
            .pairs
            .iter()
            .map(|p| (p.a_prime.value(), p.b_prime.value(), p.eta_prime.value(), p.coeff_l1))
            .collect()
    }

    fn exact_success_probability(&self) -> f64 {
        oracle::exact_success_probability(&self.batch)
    }

    fn bound_report<'py>(&self, py: Python<'py>, gamma: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &oracle::bound_report(&self.batch, gamma).map_err(err)?)
    }

    /// `q x q` outcome probabilities indexed `[k_d][k_star]`, from the dense
    /// state vector.
    fn kernel_probabilities(&self) -> PyResult<Vec<Vec<f64>>> {
        let q = self.batch.q as usize;
        let state = qsim::bv_kernel(&qsim::prepare_sample_state(&self.batch).map_err(err)?);
        Ok(state.probabilities().chunks(q).map(<[f64]>::to_vec).collect())
    }

    /// `shots` measured `(k_d, k_star)` outcomes.
    #[pyo3(signature = (shots, seed = 0))]
    fn sample(&self, shots: usize, seed: u64) -> PyResult<Vec<(u64, u64)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sampler = KernelSampler::new(self.batch.q);
        (0..shots)
            .map(|_| {
                sampler
                    .sample(&self.batch, &mut rng)
                    .map(|o| (o.k_d.value(), o.k_star.value()))
                    .map_err(err)
            })
            .collect()
    }

    /// Candidate `-k_d / k_star`, or `None` for a null outcome.
    #[staticmethod]
    fn extract_candidate(q: u64, k_d: u64, k_star: u64) -> PyResult<Option<u64>> {
        let outcome = qsim::MeasurementOutcome {
            k_d: qlwe::FieldElement::new(k_d, q).map_err(err)?,
            k_star: qlwe::FieldElement::new(k_star, q).map_err(err)?,
        };
        Ok(qsim::extract_candidate(&outcome).map(|c| c.value()))
    }
}

/// `(L, M, xi', C)` for a target failure probability.
#[pyfunction]
#[pyo3(signature = (n, q, xi, kappa = 1.0, delta = 0.2, gamma = 0.125))]
fn choose_parameters<'py>(py: Python<'py>, n: usize, q: u64, xi: u64, kappa: f64, delta: f64, gamma: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &solver::choose_parameters(n, q, xi, kappa, delta, gamma).map_err(err)?)
}

#[pyfunction]
fn lower_bound(gamma: f64, batch_size: usize, xi_prime: u64, q: u64) -> PyResult<f64> {
    oracle::lower_bound_p(gamma, batch_size, xi_prime, q).map_err(err)
}

#[pyfunction]
fn prob_iii_bound(l: usize, kappa: f64, alpha: f64, m: u32, q: u64) -> (f64, f64) {
    let b = oracle::prob_iii_bound(l, kappa, alpha, m, q);
    (b.paper_form, b.exact_form)
}

#[pyfunction]
fn prob_i_bound(delta: f64, n: usize) -> PyResult<f64> {
    oracle::prob_i_bound(delta, n).map_err(err)
}

/// QRAM calls; `scheme` is `primitive` or `bucket_brigade`, `form` is
/// `full` or `divided`.
#[pyfunction]
#[pyo3(signature = (q, n, d, scheme = "primitive", form = "divided"))]
fn qram_cost(q: u64, n: usize, d: u32, scheme: &str, form: &str) -> PyResult<f64> {
    let scheme = match scheme {
        "primitive" => QramScheme::Primitive,
        "bucket_brigade" => QramScheme::BucketBrigade,
        other => return Err(LweError::new_err(format!("unknown scheme `{other}`"))),
    };
    let form = match form {
        "full" => SampleForm::Full,
        "divided" => SampleForm::Divided,
        other => return Err(LweError::new_err(format!("unknown sample form `{other}`"))),
    };
    oracle::qram_cost(q, n, d, scheme, form).map_err(err)
}

fn config_from(entries: Option<&Bound<'_, PyDict>>) -> PyResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(d) = entries {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            if key == "sweep" {
                for (axis, values) in v.cast::<PyDict>()?.iter() {
                    let values: Vec<String> = values.extract::<Vec<Bound<'_, PyAny>>>()?
                        .iter()
                        .map(|x| x.str().map(|s| s.to_string()))
                        .collect::<PyResult<_>>()?;
                    cfg.add_sweep(&format!("{}={}", axis.str()?, values.join(","))).map_err(err)?;
                }
            } else {
                let value = match v.extract::<bool>() {
                    Ok(b) => b.to_string(),
                    Err(_) => v.str()?.to_string(),
                };
                let value = if value == "None" { String::new() } else { value };
                cfg.set(&key, &value).map_err(err)?;
            }
        }
    }
    Ok(cfg)
}

/// Runs the experiment described by `config` (config keys plus an optional
/// `sweep` dict of lists) and returns one dict per trial.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn run_experiment<'py>(py: Python<'py>, config: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config)?;
    let records = py.detach(|| experiment::run_experiment(&cfg)).map_err(err)?;
    to_py(py, &records)
}

/// Bound table rows for the grid in `config`.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn report_bounds<'py>(py: Python<'py>, config: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config)?;
    let rows = py.detach(|| experiment::report_bounds(&cfg)).map_err(err)?;
    to_py(py, &rows)
}

/// `(name, passed, detail)` for each structural check.
#[pyfunction]
#[pyo3(signature = (seed = 1))]
fn selftest(py: Python<'_>, seed: u64) -> Vec<(String, bool, String)> {
    py.detach(|| experiment::selftest(seed))
        .into_iter()
        .map(|c| (c.name, c.passed, c.detail))
        .collect()
}

/// `count` draws from the error distribution.
#[pyfunction]
#[pyo3(signature = (bound, kind = "uniform", sigma = None, count = 1, seed = 0))]
fn sample_errors(bound: u64, kind: &str, sigma: Option<f64>, count: usize, seed: u64) -> PyResult<Vec<i64>> {
    let chi = chi(kind, bound, sigma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| inst::sample_error(&chi, &mut rng).value()).collect())
}

/// Random element of F_q, for quick experiments.
#[pyfunction]
#[pyo3(signature = (q, seed = 0))]
fn random_element(q: u64, seed: u64) -> PyResult<PyFieldElement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    qlwe::FieldElement::new(rng.gen_range(0..q), q).map(PyFieldElement).map_err(err)
}

#[pymodule]
fn qlwe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LweError", m.py().get_type::<LweError>())?;
    m.add("InvariantViolation", m.py().get_type::<InvariantViolation>())?;
    m.add_class::<PyFieldElement>()?;
    m.add_class::<PyLweInstance>()?;
    m.add_class::<PyReducedBatch>()?;
    m.add_function(wrap_pyfunction!(choose_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(prob_iii_bound, m)?)?;
    m.add_function(wrap_pyfunction!(prob_i_bound, m)?)?;
    m.add_function(wrap_pyfunction!(qram_cost, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(report_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_function(wrap_pyfunction!(sample_errors, m)?)?;
    m.add_function(wrap_pyfunction!(random_element, m)?)?;
    Ok(())
}
