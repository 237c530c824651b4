use std::collections::{BTreeMap, HashMap};

use elbo_forge_core::elbo::{derive, enumerate_qprime, heuristic_filter, QPrimeSelection};
use elbo_forge_core::expr::Syntax;
use elbo_forge_core::verify::{self, DiscreteDataset, Strategy};
use elbo_forge_core::{zoo, Dist, GraphicalModel, Value};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type Assessment = (Vec<String>, String, Vec<String>);

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn syntax(format: &str) -> PyResult<Syntax> {
    match format {
        "text" => Ok(Syntax::Text),
        "latex" => Ok(Syntax::Latex),
        other => Err(err(format!("unknown format {other}; expected text or latex"))),
    }
}

/// A parsed graphical model with its guides.
#[pyclass(name = "Model", module = "elbo_forge", frozen)]
struct PyModel {
    inner: GraphicalModel,
}

impl PyModel {
    fn selection(&self, guides: Option<Vec<String>>) -> PyResult<QPrimeSelection> {
        match guides {
            Some(g) => {
                let refs: Vec<&str> = g.iter().map(String::as_str).collect();
                QPrimeSelection::from_labels(&self.inner, &refs).map_err(err)
            }
            None => enumerate_qprime(&self.inner).pop().ok_or_else(|| err("model has no selections")),
        }
    }
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(source: &str) -> PyResult<Self> {
        elbo_forge_core::parse_model(source).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    /// Violations as messages; empty when the model is valid.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().violations.iter().map(ToString::to_string).collect()
    }

    fn render(&self) -> String {
        elbo_forge_core::render_model(&self.inner)
    }

    /// Every admissible guide selection, as lists of guide labels.
    fn selections(&self) -> Vec<Vec<String>> {
        enumerate_qprime(&self.inner).iter().map(|s| s.labels(&self.inner)).collect()
    }

    /// The bound for the given guides; all matchable guides when omitted.
    #[pyo3(signature = (guides=None, format="text"))]
    fn derive(&self, guides: Option<Vec<String>>, format: &str) -> PyResult<String> {
        let sel = self.selection(guides)?;
        let e = derive(&self.inner, &sel).map_err(err)?;
        if format == "dump" {
            return Ok(e.dump());
        }
        Ok(e.render(syntax(format)?))
    }

    /// `(labels, verdict, reasons)` for every selection.
    fn heuristic(&self) -> PyResult<Vec<Assessment>> {
        let r = heuristic_filter(&self.inner, &enumerate_qprime(&self.inner)).map_err(err)?;
        Ok(r.assessments
            .into_iter()
            .map(|a| {
                let verdict = format!("{:?}", a.verdict).to_lowercase();
                let reasons = a.reasons.iter().map(|r| r.as_str().to_string()).collect();
                (a.selection, verdict, reasons)
            })
            .collect())
    }

    /// Exact `log p(x)` of a fully tabular model.
    fn log_evidence(&self, observation: HashMap<String, usize>) -> PyResult<f64> {
        let obs: BTreeMap<String, usize> = observation.into_iter().collect();
        verify::exact_log_evidence(&self.inner, &obs).map_err(err)
    }

    /// Bound value by enumeration, or by Monte Carlo when `samples` is given.
    #[pyo3(signature = (observation, guides=None, samples=None, seed=0))]
    fn elbo(
        &self,
        observation: HashMap<String, usize>,
        guides: Option<Vec<String>>,
        samples: Option<usize>,
        seed: u64,
    ) -> PyResult<f64> {
        let obs: BTreeMap<String, usize> = observation.into_iter().collect();
        let sel = self.selection(guides)?;
        let strategy = match samples {
            Some(n) => Strategy::MonteCarlo { n, seed },
            None => Strategy::Enumerate,
        };
        verify::numeric_elbo(&self.inner, &sel, &obs, strategy).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?})", self.inner.name)
    }
}

/// A distribution with numeric parameters.
#[pyclass(name = "Dist", module = "elbo_forge", frozen)]
struct PyDist {
    inner: Dist,
}

fn wrap(d: Result<Dist, elbo_forge_core::DistError>) -> PyResult<PyDist> {
    d.map(|inner| PyDist { inner }).map_err(err)
}

#[pymethods]
impl PyDist {
    #[staticmethod]
    fn normal(mu: f64, sigma: f64) -> PyResult<Self> {
        wrap(Dist::normal(mu, sigma))
    }

    #[staticmethod]
    fn bernoulli(p: f64) -> PyResult<Self> {
        wrap(Dist::bernoulli(p))
    }

    #[staticmethod]
    fn categorical(probs: Vec<f64>) -> PyResult<Self> {
        wrap(Dist::categorical(probs))
    }

    /// Beta in mean and pseudocount form.
    #[staticmethod]
    fn beta(p0: f64, n: f64) -> PyResult<Self> {
        wrap(Dist::beta(p0, n))
    }

    #[staticmethod]
    fn dirichlet(alpha: Vec<f64>) -> PyResult<Self> {
        wrap(Dist::dirichlet_from_counts(&alpha))
    }

    /// Log-density at a real, an index, or a probability vector.
    fn log_prob(&self, x: &Bound<'_, PyAny>) -> PyResult<f64> {
        let v = if let Ok(v) = x.extract::<Vec<f64>>() {
            Value::Vector(v)
        } else if self.inner.discrete_support().is_some() {
            Value::Index(x.extract::<usize>()?)
        } else {
            Value::Real(x.extract::<f64>()?)
        };
        self.inner.log_prob(&v).map_err(err)
    }

    fn entropy(&self) -> PyResult<f64> {
        self.inner.entropy().map_err(err)
    }

    /// `KL(self || other)` in closed form.
    fn kl(&self, other: &PyDist) -> PyResult<f64> {
        zoo::kl(&self.inner, &other.inner).map_err(err)
    }

    fn cross_entropy(&self, other: &PyDist) -> PyResult<f64> {
        zoo::cross_entropy(&self.inner, &other.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Conjugate update on JSON text; returns the posterior as JSON text.
#[pyfunction]
fn update(family: &str, prior: &str, data: &str) -> PyResult<String> {
    let prior: serde_json::Value = serde_json::from_str(prior).map_err(err)?;
    let data: serde_json::Value = serde_json::from_str(data).map_err(err)?;
    let out = elbo_forge_core::conjugate::update_json(family, &prior, &data).map_err(err)?;
    Ok(out.to_string())
}

/// Maximum-likelihood distribution over `size` points for the samples:
/// `(optimum, total_variation, kl)` against the empirical distribution.
#[pyfunction]
fn brute_force_mle(size: usize, samples: Vec<usize>) -> PyResult<(Vec<f64>, f64, f64)> {
    let d = DiscreteDataset::over_indices(size, samples).map_err(err)?;
    let r = verify::brute_force_mle(&d).map_err(err)?;
    Ok((r.optimum, r.total_variation, r.kl))
}

/// Families in the registry.
#[pyfunction]
fn families() -> Vec<String> {
    zoo::registry().iter().map(|d| d.family.to_string()).collect()
}

#[pymodule]
fn elbo_forge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDist>()?;
    m.add_function(wrap_pyfunction!(update, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_mle, m)?)?;
    m.add_function(wrap_pyfunction!(families, m)?)?;
    for (name, src) in elbo_forge_core::examples::ALL {
        m.add(format!("{}_SOURCE", name.to_uppercase()).as_str(), src)?;
    }
    Ok(())
}
