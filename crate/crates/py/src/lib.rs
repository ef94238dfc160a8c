//! Python bindings: aggregation, bundle construction, the bound formulas and
//! full in-process rounds driven by a TOML config string.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cofed::aggregation::{
    self, ConflictScope, CredibilityWeights, PseudolabelBundle, PseudolabelSet, PseudolabelSets,
};
use cofed::cli::RunConfigFile;
use cofed::domain::{CategoryId, LabelSpace};
use cofed::learners::PredictionVector;
use cofed::orchestrator::{self, RoundOutcome};
use cofed::theory::{self, TheoryParams};
use cofed::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Protocol(_) | Error::Untrained => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn space(ids: &[u32]) -> PyResult<LabelSpace> {
    LabelSpace::from_ids(ids).map_err(py_err)
}

fn sets_to_map(sets: &PseudolabelSets) -> BTreeMap<u32, Vec<usize>> {
    sets.iter().map(|(c, s)| (c.0, s.indices().to_vec())).collect()
}

fn bundle_to_map(bundle: &PseudolabelBundle) -> BTreeMap<u32, Vec<usize>> {
    bundle.entries().map(|(c, s)| (c.0, s.indices().to_vec())).collect()
}

fn parse_scope(scope: &str) -> PyResult<ConflictScope> {
    match scope {
        "per_bundle" => Ok(ConflictScope::PerBundle),
        "global" => Ok(ConflictScope::Global),
        other => Err(PyValueError::new_err(format!(
            "unknown conflict scope {other:?}, expected \"per_bundle\" or \"global\""
        ))),
    }
}

/// Pseudolabel sets from per-participant predictions over the public
/// dataset. Returns `{category: [index, ...]}`.
#[pyfunction]
#[pyo3(signature = (predictions, label_spaces, alpha, weights=None))]
fn aggregate(
    predictions: Vec<Vec<u32>>,
    label_spaces: Vec<Vec<u32>>,
    alpha: f64,
    weights: Option<Vec<f64>>,
) -> PyResult<BTreeMap<u32, Vec<usize>>> {
    let m = predictions
        .first()
        .map(Vec::len)
        .ok_or_else(|| PyValueError::new_err("at least one participant is required"))?;
    let spaces = label_spaces.iter().map(|s| space(s)).collect::<PyResult<Vec<_>>>()?;
    let preds: Vec<PredictionVector> = predictions
        .into_iter()
        .map(|p| PredictionVector::new(p.into_iter().map(CategoryId).collect()))
        .collect();
    let sets = match weights {
        None => aggregation::aggregate(&preds, &spaces, alpha, m),
        Some(w) => aggregation::aggregate_weighted(&preds, &spaces, &CredibilityWeights(w), alpha, m),
    }
    .map_err(py_err)?;
    Ok(sets_to_map(&sets))
}

/// Restricts `sets` to `label_space` and drops conflicting indices.
#[pyfunction]
#[pyo3(signature = (sets, label_space, owner=0, scope="per_bundle"))]
fn build_bundle(
    sets: BTreeMap<u32, Vec<usize>>,
    label_space: Vec<u32>,
    owner: u32,
    scope: &str,
) -> PyResult<BTreeMap<u32, Vec<usize>>> {
    let sets = PseudolabelSets::from_map(
        sets.into_iter()
            .map(|(c, idx)| (CategoryId(c), PseudolabelSet::new(idx)))
            .collect(),
    );
    let bundle = aggregation::build_bundle_scoped(&sets, &space(&label_space)?, owner, parse_scope(scope)?);
    Ok(bundle_to_map(&bundle))
}

/// Right-hand side of the sample-size condition at `u = p_size * eps_g`.
#[pyfunction]
fn condition_bound(p_size: f64, eps_g: f64) -> PyResult<f64> {
    theory::sample_size_bound(p_size, eps_g).map_err(py_err)
}

/// Error bound of the retrained model.
#[pyfunction]
#[pyo3(signature = (l_size, p_size, eps_f, eps_g, d_gf_prime, delta=0.05))]
fn eps_f_prime(l_size: usize, p_size: usize, eps_f: f64, eps_g: f64, d_gf_prime: f64, delta: f64) -> PyResult<f64> {
    theory::eps_f_prime(&TheoryParams {
        l_size,
        p_size,
        eps_f,
        eps_g,
        delta,
        d_gf_prime,
    })
    .map_err(py_err)
}

/// Fraction of positions where two label sequences differ.
#[pyfunction]
fn disagreement(a: Vec<u32>, b: Vec<u32>) -> PyResult<f64> {
    let a: Vec<CategoryId> = a.into_iter().map(CategoryId).collect();
    let b: Vec<CategoryId> = b.into_iter().map(CategoryId).collect();
    theory::empirical_disagreement(&a, &b).map_err(py_err)
}

/// A completed round.
#[pyclass(name = "Round", frozen)]
struct PyRound {
    outcome: RoundOutcome,
}

#[pymethods]
impl PyRound {
    #[getter]
    fn alpha(&self) -> f64 {
        self.outcome.report.alpha
    }

    #[getter]
    fn total_pseudolabels(&self) -> usize {
        self.outcome.report.total_pseudolabels
    }

    #[getter]
    fn mean_relative_accuracy(&self) -> Option<f64> {
        self.outcome.report.mean_relative_accuracy
    }

    #[getter]
    fn mean_federated_accuracy(&self) -> f64 {
        self.outcome.report.mean_federated_accuracy
    }

    #[getter]
    fn mean_local_accuracy(&self) -> f64 {
        self.outcome.report.mean_local_accuracy
    }

    /// Full report as nested dicts.
    #[getter]
    fn report<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        loads(py, &serde_json::to_string(&self.outcome.report).map_err(json_err)?)
    }

    /// Pseudolabel sets before bundle construction.
    #[getter]
    fn sets(&self) -> BTreeMap<u32, Vec<usize>> {
        sets_to_map(&self.outcome.artifacts.sets)
    }

    /// One `{category: [index, ...]}` per participant.
    #[getter]
    fn bundles(&self) -> Vec<BTreeMap<u32, Vec<usize>>> {
        self.outcome.artifacts.bundles.iter().map(bundle_to_map).collect()
    }

    #[getter]
    fn predictions(&self) -> Vec<Vec<u32>> {
        self.outcome
            .artifacts
            .predictions
            .iter()
            .map(|p| p.labels.iter().map(|c| c.0).collect())
            .collect()
    }

    /// Bound analysis of the round as nested dicts.
    fn analyze<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let a = theory::analyze_round(&self.outcome.report, &self.outcome.artifacts).map_err(py_err)?;
        loads(py, &serde_json::to_string(&a).map_err(json_err)?)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.outcome.report).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        let r = &self.outcome.report;
        format!(
            "Round(participants={}, alpha={}, pseudolabels={}, mean_relative_accuracy={})",
            r.participants.len(),
            r.alpha,
            r.total_pseudolabels,
            r.mean_relative_accuracy.map_or_else(|| "None".into(), |v| v.to_string())
        )
    }
}

/// Runs one in-process round from a TOML config, the same format the
/// command line reads. The GIL is released while the round runs.
#[pyfunction]
#[pyo3(signature = (config="", seed=None))]
fn run_round(py: Python<'_>, config: &str, seed: Option<u64>) -> PyResult<PyRound> {
    let mut file = RunConfigFile::parse(config).map_err(py_err)?;
    if let Some(s) = seed {
        file.master_seed = s;
    }
    let federation = file.federation().map_err(py_err)?;
    let outcome = py
        .detach(|| orchestrator::run_round(&federation))
        .map_err(py_err)?;
    Ok(PyRound { outcome })
}

#[pymodule]
fn cofed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(build_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(condition_bound, m)?)?;
    m.add_function(wrap_pyfunction!(eps_f_prime, m)?)?;
    m.add_function(wrap_pyfunction!(disagreement, m)?)?;
    m.add_function(wrap_pyfunction!(run_round, m)?)?;
    m.add_class::<PyRound>()?;
    Ok(())
}
