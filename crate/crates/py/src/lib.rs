//! Python bindings for the transaction fee mechanism laboratory.
//!
//! Exposes the mechanism constructors and evaluators, the incentive
//! auditor, and the simulated multi-party protocol. Rich results
//! (audit reports, protocol outcomes) cross the boundary as plain Python
//! dicts mirroring the library's JSON forms.

// The pymethods/pyfunction expansions trip useless_conversion on this
// toolchain; the lint does not point at handwritten code.
#![allow(clippy::useless_conversion)]

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use tfm_lab::audit::{self, BayesianMethod, Property, Scenario};
use tfm_lab::core::{BidVector, Model};
use tfm_lab::mechanisms::{
    self, DilutedParams, DilutedVariant, MechanismRule, PostedPriceParams, ProportionalParams,
    StaircaseParams,
};
use tfm_lab::mpcsim::{self, Corruption, IdentityConfig, SimConfig};
use tfm_lab::strategy::{build_grid, CoalitionSpec, GridConfig, GridScenario, Limits};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyObject {
    match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_py(py),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_py(py)
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_py(py)
            }
        }
        serde_json::Value::String(s) => s.into_py(py),
        serde_json::Value::Array(items) => {
            let list = PyList::new_bound(py, items.iter().map(|v| json_to_py(py, v)));
            list.into_py(py)
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new_bound(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)).expect("dict insert");
            }
            dict.into_py(py)
        }
    }
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyObject {
    json_to_py(py, &serde_json::to_value(value).expect("serializable"))
}

fn parse_property(name: &str) -> PyResult<Property> {
    match name {
        "UIC" | "uic" => Ok(Property::Uic),
        "MIC" | "mic" => Ok(Property::Mic),
        "SCP" | "scp" => Ok(Property::Scp),
        other => Err(value_err(format!("unknown property {other:?}"))),
    }
}

/// A finite value distribution with summary statistics.
#[pyclass(name = "ValueDistribution")]
#[derive(Clone)]
struct PyValueDistribution {
    inner: tfm_lab::core::ValueDistribution,
}

#[pymethods]
impl PyValueDistribution {
    #[new]
    #[pyo3(signature = (support, probabilities=None))]
    fn new(support: Vec<f64>, probabilities: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match probabilities {
            Some(p) => tfm_lab::core::ValueDistribution::new(support, p),
            None => tfm_lab::core::ValueDistribution::uniform(support),
        }
        .map_err(value_err)?;
        Ok(PyValueDistribution { inner })
    }

    #[getter]
    fn median(&self) -> f64 {
        self.inner.median()
    }

    #[getter]
    fn sqrt_moment(&self) -> f64 {
        self.inner.sqrt_moment()
    }

    #[getter]
    fn max(&self) -> f64 {
        self.inner.max()
    }

    fn __repr__(&self) -> String {
        format!(
            "ValueDistribution(support={:?}, probabilities={:?})",
            self.inner.support(),
            self.inner.probabilities()
        )
    }
}

/// A fee mechanism: allocation/confirmation, payment, and miner revenue
/// rules, tagged with its trust model.
#[pyclass(name = "Mechanism")]
#[derive(Clone)]
struct PyMechanism {
    rule: MechanismRule,
}

#[pymethods]
impl PyMechanism {
    /// Posted price auction; finite `k` gives the MPC-assisted
    /// random-selection variant.
    #[staticmethod]
    #[pyo3(signature = (r, burn=true, k=None))]
    fn posted_price(r: f64, burn: bool, k: Option<usize>) -> PyResult<Self> {
        let rule = mechanisms::make_posted_price(PostedPriceParams {
            r,
            burn,
            block_size: k,
        })
        .map_err(value_err)?;
        Ok(PyMechanism { rule })
    }

    /// Proportional auction; `rho < 1` or `mpc=True` selects the
    /// MPC-assisted miner-revenue rule.
    #[staticmethod]
    #[pyo3(signature = (r, epsilon, rho=1.0, mpc=false))]
    fn proportional(r: f64, epsilon: f64, rho: f64, mpc: bool) -> PyResult<Self> {
        let rule = mechanisms::make_proportional(ProportionalParams {
            r,
            epsilon,
            rho,
            model: if mpc { Model::MpcAssisted } else { Model::Plain },
        })
        .map_err(value_err)?;
        Ok(PyMechanism { rule })
    }

    #[staticmethod]
    #[pyo3(signature = (k, c, max_value, epsilon, r, intro=false))]
    fn diluted(
        k: usize,
        c: usize,
        max_value: f64,
        epsilon: f64,
        r: f64,
        intro: bool,
    ) -> PyResult<Self> {
        let rule = mechanisms::make_diluted(DilutedParams {
            k,
            c,
            max_value,
            epsilon,
            r,
            variant: if intro {
                DilutedVariant::Intro
            } else {
                DilutedVariant::Body
            },
        })
        .map_err(value_err)?;
        Ok(PyMechanism { rule })
    }

    #[staticmethod]
    fn staircase(max_value: f64, k: usize, epsilon: f64) -> PyResult<Self> {
        let rule = mechanisms::make_staircase(StaircaseParams {
            max_value,
            k,
            epsilon,
        })
        .map_err(value_err)?;
        Ok(PyMechanism { rule })
    }

    /// Revenue-maximizing hybrid of pay-to-miner posted price and the
    /// proportional auction for `n` i.i.d. bids from `d`.
    #[staticmethod]
    fn hybrid(d: &PyValueDistribution, epsilon: f64, c: usize, n: usize) -> PyResult<Self> {
        let rule = mechanisms::make_hybrid(&d.inner, epsilon, c, n).map_err(value_err)?;
        Ok(PyMechanism { rule })
    }

    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        let rule = MechanismRule::from_json(json).map_err(value_err)?;
        Ok(PyMechanism { rule })
    }

    fn to_json(&self) -> String {
        self.rule.to_json()
    }

    #[getter]
    fn model(&self) -> &'static str {
        match self.rule.model() {
            Model::Plain => "plain",
            Model::MpcAssisted => "mpc-assisted",
        }
    }

    /// Exact expectation outcome: dict with per-bid confirmation
    /// probabilities `x`, expected payments `p`, and miner revenue `mu`.
    fn evaluate(&self, py: Python<'_>, bids: Vec<f64>) -> PyResult<PyObject> {
        let vector = BidVector::from_amounts(&bids).map_err(value_err)?;
        Ok(to_py(py, &self.rule.evaluate(&vector)))
    }

    /// One realized draw under a seed: dict with `confirmed`, `payments`,
    /// and `miner_revenue`.
    fn sample(&self, py: Python<'_>, bids: Vec<f64>, seed: u64) -> PyResult<PyObject> {
        let vector = BidVector::from_amounts(&bids).map_err(value_err)?;
        Ok(to_py(py, &self.rule.sample_outcome(&vector, seed)))
    }

    fn __repr__(&self) -> String {
        format!("Mechanism({})", self.rule.to_json())
    }
}

fn limits_from(max_fake: usize, max_bids_per_member: usize) -> Limits {
    Limits {
        max_fake,
        max_bids_per_member,
        ..Limits::default()
    }
}

/// Worst ex post deviation gain of a coalition (`rho` miner fraction plus
/// users with `true_values`) against fixed honest bids.
#[pyfunction]
#[pyo3(signature = (mechanism, property, rho, true_values, honest_bids, epsilon=0.0, max_fake=1, max_bids_per_member=1))]
#[allow(clippy::too_many_arguments)]
fn audit_ex_post(
    py: Python<'_>,
    mechanism: &PyMechanism,
    property: &str,
    rho: f64,
    true_values: Vec<f64>,
    honest_bids: Vec<f64>,
    epsilon: f64,
    max_fake: usize,
    max_bids_per_member: usize,
) -> PyResult<PyObject> {
    let property = parse_property(property)?;
    let coalition = CoalitionSpec::new(
        rho,
        true_values.iter().enumerate().map(|(i, &v)| (i, v)).collect(),
    )
    .map_err(value_err)?;
    let grid = build_grid(
        &mechanism.rule,
        &GridScenario {
            honest_bids: &honest_bids,
            true_values: &true_values,
            distribution: None,
        },
        &GridConfig::default(),
    )
    .map_err(value_err)?;
    let report = audit::audit_ex_post(
        &mechanism.rule,
        property,
        &coalition,
        &Scenario { honest_bids },
        &grid,
        &limits_from(max_fake, max_bids_per_member),
        epsilon,
    )
    .map_err(value_err)?;
    Ok(to_py(py, &report))
}

/// Worst Bayesian deviation gain, expectation over `n_honest` i.i.d. honest
/// bids from `d` (exact enumeration, or Monte Carlo when `samples` is set).
#[pyfunction]
#[pyo3(signature = (mechanism, property, rho, true_values, d, n_honest, epsilon=0.0, samples=None, seed=0, max_fake=1, max_bids_per_member=1))]
#[allow(clippy::too_many_arguments)]
fn audit_bayesian(
    py: Python<'_>,
    mechanism: &PyMechanism,
    property: &str,
    rho: f64,
    true_values: Vec<f64>,
    d: &PyValueDistribution,
    n_honest: usize,
    epsilon: f64,
    samples: Option<usize>,
    seed: u64,
    max_fake: usize,
    max_bids_per_member: usize,
) -> PyResult<PyObject> {
    let property = parse_property(property)?;
    let coalition = CoalitionSpec::new(
        rho,
        true_values.iter().enumerate().map(|(i, &v)| (i, v)).collect(),
    )
    .map_err(value_err)?;
    let grid = build_grid(
        &mechanism.rule,
        &GridScenario {
            honest_bids: &[],
            true_values: &true_values,
            distribution: Some(&d.inner),
        },
        &GridConfig::default(),
    )
    .map_err(value_err)?;
    let method = match samples {
        Some(samples) => BayesianMethod::MonteCarlo { samples, seed },
        None => BayesianMethod::default(),
    };
    let report = audit::audit_bayesian(
        &mechanism.rule,
        property,
        &coalition,
        &d.inner,
        n_honest,
        &grid,
        &limits_from(max_fake, max_bids_per_member),
        method,
        epsilon,
    )
    .map_err(value_err)?;
    Ok(to_py(py, &report))
}

fn sim_config_from(
    mechanism: &PyMechanism,
    miners: usize,
    identities: Vec<(String, f64)>,
    identity_scripts: Option<Bound<'_, PyDict>>,
    miner_scripts: Option<Bound<'_, PyDict>>,
    seed: u64,
) -> PyResult<SimConfig> {
    let parse_script = |obj: Bound<'_, PyAny>| -> PyResult<mpcsim::Script> {
        let json: serde_json::Value = if let Ok(s) = obj.extract::<String>() {
            serde_json::json!({ "script": s })
        } else {
            let dict: Bound<'_, PyDict> = obj.downcast_into().map_err(value_err)?;
            let mut map = serde_json::Map::new();
            for (k, v) in dict.iter() {
                let key: String = k.extract()?;
                if let Ok(s) = v.extract::<String>() {
                    map.insert(key, serde_json::Value::String(s));
                } else if let Ok(n) = v.extract::<u64>() {
                    map.insert(key, serde_json::Value::Number(n.into()));
                } else {
                    return Err(value_err("script fields must be strings or integers"));
                }
            }
            serde_json::Value::Object(map)
        };
        serde_json::from_value(json).map_err(value_err)
    };

    let mut identity_configs = Vec::new();
    for (id, bid) in identities {
        let corruption = match &identity_scripts {
            Some(scripts) => match scripts.get_item(&id)? {
                Some(obj) => Corruption::Byzantine(parse_script(obj)?),
                None => Corruption::Honest,
            },
            None => Corruption::Honest,
        };
        identity_configs.push(IdentityConfig {
            id,
            bid,
            corruption,
        });
    }
    let mut miner_corruption = vec![Corruption::Honest; miners];
    if let Some(scripts) = miner_scripts {
        for (k, v) in scripts.iter() {
            let index: usize = k.extract()?;
            if index >= miners {
                return Err(value_err(format!("miner index {index} out of range")));
            }
            miner_corruption[index] = Corruption::Byzantine(parse_script(v)?);
        }
    }
    Ok(SimConfig {
        miners,
        miner_corruption,
        identities: identity_configs,
        rule: mechanism.rule.clone(),
        seed,
    })
}

/// Runs the simulated multi-party protocol; returns a dict with the
/// protocol outcome, the ideal functionality's outcome on the same
/// effective bids, and whether they agree.
#[pyfunction]
#[pyo3(signature = (mechanism, miners, identities, seed=0, abort_mode=false, identity_scripts=None, miner_scripts=None))]
#[allow(clippy::too_many_arguments)]
fn run_pi_mpc(
    py: Python<'_>,
    mechanism: &PyMechanism,
    miners: usize,
    identities: Vec<(String, f64)>,
    seed: u64,
    abort_mode: bool,
    identity_scripts: Option<Bound<'_, PyDict>>,
    miner_scripts: Option<Bound<'_, PyDict>>,
) -> PyResult<PyObject> {
    let config = sim_config_from(
        mechanism,
        miners,
        identities,
        identity_scripts,
        miner_scripts,
        seed,
    )?;
    let run = if abort_mode {
        mpcsim::run_pi_mpc_abort_mode(&config)
    } else {
        mpcsim::run_pi_mpc(&config)
    }
    .map_err(value_err)?;

    let ids: Vec<String> = config.identities.iter().map(|i| i.id.clone()).collect();
    let bids: Vec<f64> = config.identities.iter().map(|i| i.bid).collect();
    let ideal = mpcsim::ideal_f_mpc(&config.rule, &ids, &bids, &run.outcome.misbehaving, seed)
        .map_err(value_err)?;
    let matches_ideal = !run.outcome.aborted && run.outcome == ideal;

    let dict = PyDict::new_bound(py);
    dict.set_item("outcome", to_py(py, &run.outcome))?;
    dict.set_item("ideal", to_py(py, &ideal))?;
    dict.set_item("matches_ideal", matches_ideal)?;
    dict.set_item("messages", run.transcript.messages.len())?;
    dict.set_item("misbehaving", run.outcome.misbehaving.clone())?;
    Ok(dict.into_py(py))
}

/// The lightweight instantiation: clear-text bids plus a commit-reveal coin
/// toss driving the random selection.
#[pyfunction]
#[pyo3(signature = (mechanism, miners, identities, seed=0))]
fn run_efficient(
    py: Python<'_>,
    mechanism: &PyMechanism,
    miners: usize,
    identities: Vec<(String, f64)>,
    seed: u64,
) -> PyResult<PyObject> {
    let config = sim_config_from(mechanism, miners, identities, None, None, seed)?;
    let run = mpcsim::run_efficient_instantiation(&config).map_err(value_err)?;
    let dict = PyDict::new_bound(py);
    dict.set_item("coin_seed", run.coin_seed)?;
    dict.set_item("bids", run.bids)?;
    dict.set_item("outcome", to_py(py, &run.outcome))?;
    Ok(dict.into_py(py))
}

/// Shamir-shares a field element; returns `[(index, value)]`.
#[pyfunction]
fn shamir_share(secret: u64, t: usize, m: usize, seed: u64) -> PyResult<Vec<(usize, u64)>> {
    let shares = mpcsim::shamir_share(secret, t, m, seed).map_err(value_err)?;
    Ok(shares.into_iter().map(|s| (s.index, s.value)).collect())
}

/// Reconstructs a secret from `(index, value)` shares; `None` below the
/// threshold.
#[pyfunction]
fn shamir_reconstruct(shares: Vec<(usize, u64)>, t: usize) -> Option<u64> {
    let shares: Vec<mpcsim::Share> = shares
        .into_iter()
        .map(|(index, value)| mpcsim::Share { index, value })
        .collect();
    mpcsim::shamir_reconstruct(&shares, t)
}

/// Commit-reveal coin toss among `miners` honest miners.
#[pyfunction]
fn coin_toss(miners: usize, seed: u64) -> PyResult<u64> {
    let toss = mpcsim::coin_toss(miners, &vec![Corruption::Honest; miners], seed)
        .map_err(value_err)?;
    Ok(toss.seed)
}

#[pymodule]
fn tfm_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyValueDistribution>()?;
    m.add_class::<PyMechanism>()?;
    m.add_function(wrap_pyfunction!(audit_ex_post, m)?)?;
    m.add_function(wrap_pyfunction!(audit_bayesian, m)?)?;
    m.add_function(wrap_pyfunction!(run_pi_mpc, m)?)?;
    m.add_function(wrap_pyfunction!(run_efficient, m)?)?;
    m.add_function(wrap_pyfunction!(shamir_share, m)?)?;
    m.add_function(wrap_pyfunction!(shamir_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(coin_toss, m)?)?;
    Ok(())
}
