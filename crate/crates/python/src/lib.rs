//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists in the same JSON shapes the HTTP API uses; rationals stay exact as
//! `"p/q"` strings.

use chrono::{DateTime, Utc};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use votelab_core::ballot::{self, MethodId, MethodParams, OptionItem, RawBallotInput, VotingMethodSpec};
use votelab_core::consistency::{reports_by_question, RankingBasis};
use votelab_core::engine::{self as core_engine, Actor, EngineConfig, Timestamp};
use votelab_core::export::{ExportFormat, ExportKind};
use votelab_core::{fixture, store};

create_exception!(votelab, VotelabError, PyException);

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| VotelabError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn engine_err(e: core_engine::EngineError) -> PyErr {
    VotelabError::new_err(format!("{}: {e}", e.code()))
}

fn parse_method(name: &str) -> PyResult<MethodId> {
    name.parse().map_err(|_| PyValueError::new_err(format!("unknown voting method {name:?}")))
}

fn parse_basis(name: &str) -> PyResult<RankingBasis> {
    name.parse().map_err(PyValueError::new_err)
}

fn parse_time(at: Option<&str>) -> PyResult<Timestamp> {
    match at {
        None => Ok(Utc::now()),
        Some(s) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| PyValueError::new_err(format!("{s:?} is not an RFC 3339 timestamp: {e}"))),
    }
}

/// A question with its options and enabled voting methods.
#[pyclass(module = "votelab", frozen)]
struct Question {
    inner: ballot::Question,
}

impl Question {
    fn method_spec(&self, method: &str) -> PyResult<&VotingMethodSpec> {
        let m = parse_method(method)?;
        self.inner
            .method(m)
            .ok_or_else(|| PyValueError::new_err(format!("{m} is not enabled on this question")))
    }

    fn ballot(obj: &Bound<'_, PyAny>) -> PyResult<RawBallotInput> {
        from_py(obj)
    }
}

#[pymethods]
impl Question {
    /// `options` are option ids (also used as labels); `methods` defaults to
    /// all seven.
    #[new]
    #[pyo3(signature = (question_id, options, methods=None, text=None, qv_budget=None))]
    fn new(
        question_id: &str,
        options: Vec<String>,
        methods: Option<Vec<String>>,
        text: Option<String>,
        qv_budget: Option<u32>,
    ) -> PyResult<Self> {
        let mut params = MethodParams::default();
        if let Some(b) = qv_budget {
            params.qv_budget = b;
        }
        let ids = match methods {
            Some(names) => names.iter().map(|n| parse_method(n)).collect::<PyResult<Vec<_>>>()?,
            None => MethodId::ALL.to_vec(),
        };
        let specs = ids.iter().map(|m| VotingMethodSpec::standard(*m, &params)).collect();
        let options = options
            .into_iter()
            .map(|id| OptionItem {
                option_id: id.as_str().into(),
                label: id,
            })
            .collect();
        let inner = ballot::Question::new(question_id, text.unwrap_or_else(|| question_id.to_string()), options, specs)
            .map_err(|errs| {
                PyValueError::new_err(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
            })?;
        Ok(Self { inner })
    }

    #[getter]
    fn question_id(&self) -> String {
        self.inner.question_id.to_string()
    }

    #[getter]
    fn options(&self) -> Vec<String> {
        self.inner.option_ids().iter().map(|o| o.to_string()).collect()
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner.method_ids().iter().map(|m| m.to_string()).collect()
    }

    /// Method spec (shape, admissible levels, budget) as a dict.
    fn spec<'py>(&self, py: Python<'py>, method: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.method_spec(method)?)
    }

    /// Violations for one ballot; empty when the ballot is valid.
    fn validate<'py>(&self, py: Python<'py>, method: &str, ballot: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
        let input = Self::ballot(ballot)?;
        let violations = match ballot::validate_ballot(&self.inner, self.method_spec(method)?, &input) {
            Ok(()) => Vec::new(),
            Err(v) => v.0,
        };
        to_py(py, &violations)
    }

    /// Exact tally of `ballots` under `method`. Any invalid ballot raises
    /// `ValueError` naming its index.
    fn tally<'py>(&self, py: Python<'py>, method: &str, ballots: Vec<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyAny>> {
        let spec = self.method_spec(method)?;
        let mut vectors = Vec::with_capacity(ballots.len());
        for (i, b) in ballots.iter().enumerate() {
            let input = Self::ballot(b)?;
            let v = ballot::normalize_scores(&self.inner, spec, &input)
                .map_err(|v| PyValueError::new_err(format!("ballot {i}: {v}")))?;
            vectors.push(v);
        }
        let result = ballot::aggregate(&self.inner, spec, &vectors).map_err(|e| VotelabError::new_err(e.to_string()))?;
        to_py(py, &result)
    }

    fn __repr__(&self) -> String {
        format!(
            "Question({:?}, options={:?}, methods={:?})",
            self.question_id(),
            self.options(),
            self.methods()
        )
    }
}

/// Names of the supported voting methods.
#[pyfunction]
fn methods() -> Vec<String> {
    MethodId::ALL.iter().map(|m| m.to_string()).collect()
}

/// Consistency reports for tally dicts, grouped by question.
#[pyfunction]
#[pyo3(signature = (tallies, basis="aggregate"))]
fn consistency<'py>(py: Python<'py>, tallies: &Bound<'py, PyAny>, basis: &str) -> PyResult<Bound<'py, PyAny>> {
    let tallies: Vec<ballot::TallyResult> = from_py(tallies)?;
    to_py(py, &reports_by_question(&tallies, parse_basis(basis)?))
}

/// Consistency of the published per-method shares of the COVID study.
#[pyfunction]
fn published_consistency(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &fixture::published_consistency())
}

/// The campaign engine over an event store, acting as the operator.
#[pyclass(module = "votelab", frozen)]
struct Platform {
    inner: core_engine::Platform,
    location: String,
}

#[pymethods]
impl Platform {
    /// `store` is `memory:`, `sqlite:<path>`, `file:<dir>` or a directory.
    #[new]
    #[pyo3(signature = (store="memory:"))]
    fn new(py: Python<'_>, store: &str) -> PyResult<Self> {
        let location = store.to_string();
        let inner = py
            .detach(|| {
                let s = store::open_store(&location).map_err(|e| e.to_string())?;
                core_engine::Platform::open(s, EngineConfig::default()).map_err(|e| e.to_string())
            })
            .map_err(VotelabError::new_err)?;
        Ok(Self { inner, location })
    }

    #[getter]
    fn last_seq(&self) -> u64 {
        self.inner.last_seq()
    }

    /// Seeds the synthetic COVID campaign; the store must be empty.
    #[pyo3(signature = (seed=7, voters=fixture::FIXTURE_VOTERS))]
    fn seed_covid<'py>(&self, py: Python<'py>, seed: u64, voters: usize) -> PyResult<Bound<'py, PyAny>> {
        let report = py
            .detach(|| fixture::seed_covid(&self.inner, seed, voters))
            .map_err(engine_err)?;
        to_py(py, &report)
    }

    /// Closes and tallies every campaign due at `at` (default: now).
    #[pyo3(signature = (at=None))]
    fn tick(&self, py: Python<'_>, at: Option<&str>) -> PyResult<Vec<String>> {
        let now = parse_time(at)?;
        let ids = py.detach(|| self.inner.scheduler_tick(now));
        Ok(ids.iter().map(|c| c.to_string()).collect())
    }

    fn campaigns<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.campaigns(&Actor::Admin))
    }

    #[pyo3(signature = (campaign_id, interim=false, at=None))]
    fn results<'py>(&self, py: Python<'py>, campaign_id: &str, interim: bool, at: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let rs = self.result_set(py, campaign_id, interim, at)?;
        to_py(py, &rs)
    }

    #[pyo3(signature = (campaign_id, basis="aggregate", interim=false, at=None))]
    fn consistency<'py>(
        &self,
        py: Python<'py>,
        campaign_id: &str,
        basis: &str,
        interim: bool,
        at: Option<&str>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let basis = parse_basis(basis)?;
        let rs = self.result_set(py, campaign_id, interim, at)?;
        to_py(py, &reports_by_question(&rs.tallies, basis))
    }

    /// One research export rendered as CSV (default) or JSON text.
    #[pyo3(signature = (campaign_id, kind, interim=false, at=None, format="csv"))]
    fn export(
        &self,
        py: Python<'_>,
        campaign_id: &str,
        kind: &str,
        interim: bool,
        at: Option<&str>,
        format: &str,
    ) -> PyResult<String> {
        let kind: ExportKind = kind.parse().map_err(PyValueError::new_err)?;
        let format = match format {
            "csv" => ExportFormat::Csv,
            "json" => ExportFormat::Json,
            other => return Err(PyValueError::new_err(format!("unknown format {other:?}"))),
        };
        let now = parse_time(at)?;
        let id = campaign_id.into();
        let table = py
            .detach(|| self.inner.export(&Actor::Admin, &id, kind, interim, now))
            .map_err(engine_err)?;
        table.render(format).map_err(|e| VotelabError::new_err(e.to_string()))
    }

    /// Live state hash next to the hash of a full replay of the log.
    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = py.detach(|| self.inner.state_report()).map_err(engine_err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Platform({:?}, last_seq={})", self.location, self.inner.last_seq())
    }
}

impl Platform {
    fn result_set(&self, py: Python<'_>, campaign_id: &str, interim: bool, at: Option<&str>) -> PyResult<core_engine::ResultSet> {
        let id = campaign_id.into();
        let now = parse_time(at)?;
        py.detach(|| {
            if interim {
                self.inner.on_demand_results(&Actor::Admin, &id, now)
            } else {
                self.inner.get_results(&Actor::Admin, &id)
            }
        })
        .map_err(engine_err)
    }
}

#[pymodule]
fn votelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VotelabError", m.py().get_type::<VotelabError>())?;
    m.add_class::<Question>()?;
    m.add_class::<Platform>()?;
    m.add_function(wrap_pyfunction!(methods, m)?)?;
    m.add_function(wrap_pyfunction!(consistency, m)?)?;
    m.add_function(wrap_pyfunction!(published_consistency, m)?)?;
    Ok(())
}
