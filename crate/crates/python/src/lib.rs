//! Python bindings. Variable sets are lists of 1-based ids; reports come back
//! as dicts decoded from the same JSON the CLI emits.

use mll_core::collapse::{check, CollapseQuery};
use mll_core::generator::{generate as generate_table, GenSpec};
use mll_core::independence::{
    decompose_lambda, independence_suite_with, test_independence_with, Mode, Partition,
};
use mll_core::mll::{kappa_sides as kappa, lambda, lambda_tensor, nu};
use mll_core::spec::{classify as classify_spec, MarginalSpec};
use mll_core::{io, MllError, Tolerance, VarSet};
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

pyo3::create_exception!(mll, Error, PyException);
pyo3::create_exception!(mll, EquivalenceBreach, Error);

fn err(e: MllError) -> PyErr {
    if e.is_internal() {
        EquivalenceBreach::new_err(e.to_string())
    } else {
        Error::new_err(e.to_string())
    }
}

fn set(ids: Vec<usize>) -> PyResult<VarSet> {
    VarSet::from_one_based(ids.iter().copied())
        .ok_or_else(|| Error::new_err(format!("variables are numbered from 1: {ids:?}")))
}

fn tol(eq: Option<f64>) -> Tolerance {
    eq.map(Tolerance::with_eq).unwrap_or_default()
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| Error::new_err(e.to_string()))?;
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn mode(name: &str) -> PyResult<Mode> {
    match name {
        "conditional" => Ok(Mode::Conditional),
        "joint" => Ok(Mode::Joint),
        "mutual" => Ok(Mode::Mutual),
        other => Err(Error::new_err(format!("unknown mode {other:?}"))),
    }
}

/// A strictly positive contingency table, normalized to probabilities.
#[pyclass(name = "Table", module = "mll", frozen)]
struct PyTable {
    inner: mll_core::Table,
}

#[pymethods]
impl PyTable {
    #[new]
    #[pyo3(signature = (levels, weights, names=None))]
    fn new(levels: Vec<usize>, weights: Vec<f64>, names: Option<Vec<String>>) -> PyResult<Self> {
        let inner = match names {
            Some(n) => mll_core::Table::with_names(n, &levels, weights),
            None => mll_core::Table::new(&levels, weights),
        }
        .map_err(err)?;
        Ok(PyTable { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let inner = io::parse_table(path.as_ref(), None).map_err(err)?;
        Ok(PyTable { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = io::parse_table_str(text, io::TableFormat::Json, "<string>").map_err(err)?;
        Ok(PyTable { inner })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::write_table(&self.inner, path.as_ref(), None).map_err(err)
    }

    fn to_json(&self) -> String {
        io::table_to_json(&self.inner)
    }

    #[getter]
    fn levels(&self) -> Vec<usize> {
        self.inner.levels().to_vec()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn probs(&self) -> Vec<f64> {
        self.inner.probs().data().to_vec()
    }

    fn marginalize(&self, margin: Vec<usize>) -> PyResult<Self> {
        let inner = self.inner.marginalize(set(margin)?).map_err(err)?;
        Ok(PyTable { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Table(levels={:?})", self.inner.levels())
    }
}

/// `λ_L^M` at one cell of `L` (0-based levels).
#[pyfunction]
fn param(
    table: &PyTable,
    effect: Vec<usize>,
    margin: Vec<usize>,
    cell: Vec<usize>,
) -> PyResult<f64> {
    lambda(&table.inner, set(effect)?, set(margin)?, &cell).map_err(err)
}

/// All values of `λ_L^M` in cell order.
#[pyfunction]
fn params(table: &PyTable, effect: Vec<usize>, margin: Vec<usize>) -> PyResult<Vec<f64>> {
    Ok(lambda_tensor(&table.inner, set(effect)?, set(margin)?)
        .map_err(err)?
        .into_data())
}

/// `ν_L^M` at one cell of `L`.
#[pyfunction(name = "nu")]
fn nu_value(
    table: &PyTable,
    effect: Vec<usize>,
    margin: Vec<usize>,
    cell: Vec<usize>,
) -> PyResult<f64> {
    nu(&table.inner, set(effect)?, set(margin)?, &cell).map_err(err)
}

#[pyfunction]
fn kappa_sides(
    table: &PyTable,
    effect: Vec<usize>,
    margin: Vec<usize>,
    cell: Vec<usize>,
) -> PyResult<(f64, f64)> {
    let k = kappa(&table.inner, set(effect)?, set(margin)?, &cell).map_err(err)?;
    Ok((k.lhs, k.rhs))
}

#[pyfunction]
#[pyo3(signature = (table, effect, margin, outer, core=None, strict=false, tol_eq=None))]
#[allow(clippy::too_many_arguments)]
fn collapse<'py>(
    py: Python<'py>,
    table: &PyTable,
    effect: Vec<usize>,
    margin: Vec<usize>,
    outer: Vec<usize>,
    core: Option<Vec<usize>>,
    strict: bool,
    tol_eq: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut q = CollapseQuery::new(set(effect)?, set(margin)?, set(outer)?).with_tol(tol(tol_eq));
    q.core = core.map(set).transpose()?;
    q.strict = strict;
    to_py(py, &check(&q, &table.inner).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (table, mode_name, a, b, c=Vec::new(), tol_eq=None))]
fn independence<'py>(
    py: Python<'py>,
    table: &PyTable,
    mode_name: &str,
    a: Vec<usize>,
    b: Vec<usize>,
    c: Vec<usize>,
    tol_eq: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let part = Partition::new(set(a)?, set(b)?, set(c)?);
    let v =
        test_independence_with(&table.inner, &part, mode(mode_name)?, &tol(tol_eq)).map_err(err)?;
    to_py(py, &v)
}

/// Independence against its strict-collapsibility characterization.
#[pyfunction]
#[pyo3(signature = (table, mode_name, a, b, c=Vec::new(), tol_eq=None))]
fn independence_suite<'py>(
    py: Python<'py>,
    table: &PyTable,
    mode_name: &str,
    a: Vec<usize>,
    b: Vec<usize>,
    c: Vec<usize>,
    tol_eq: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let part = Partition::new(set(a)?, set(b)?, set(c)?);
    let r = independence_suite_with(&table.inner, &part, mode(mode_name)?, &tol(tol_eq))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn decompose<'py>(
    py: Python<'py>,
    table: &PyTable,
    effect: Vec<usize>,
    a: Vec<usize>,
    b: Vec<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let d = decompose_lambda(&table.inner, set(effect)?, set(a)?, set(b)?).map_err(err)?;
    to_py(py, &d)
}

/// Classifies a marginal spec given as JSON text.
#[pyfunction]
#[pyo3(signature = (spec_json, variables=None))]
fn classify<'py>(
    py: Python<'py>,
    spec_json: &str,
    variables: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyAny>> {
    let spec: MarginalSpec = io::from_json_str(spec_json, "<spec>").map_err(err)?;
    let vars = match variables {
        Some(v) => set(v)?,
        None => spec.union(),
    };
    to_py(py, &classify_spec(&spec, vars).map_err(err)?)
}

/// Generates a table from a generator spec given as JSON text.
#[pyfunction]
fn generate(spec_json: &str) -> PyResult<PyTable> {
    let spec: GenSpec = io::from_json_str(spec_json, "<gen spec>").map_err(err)?;
    Ok(PyTable {
        inner: generate_table(&spec).map_err(err)?,
    })
}

#[pyfunction]
fn random_table(levels: Vec<usize>, seed: u64) -> PyResult<PyTable> {
    Ok(PyTable {
        inner: generate_table(&GenSpec::random(&levels, seed)).map_err(err)?,
    })
}

#[pymodule]
fn mll(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTable>()?;
    m.add("Error", m.py().get_type::<Error>())?;
    m.add("EquivalenceBreach", m.py().get_type::<EquivalenceBreach>())?;
    m.add_function(wrap_pyfunction!(param, m)?)?;
    m.add_function(wrap_pyfunction!(params, m)?)?;
    m.add_function(wrap_pyfunction!(nu_value, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_sides, m)?)?;
    m.add_function(wrap_pyfunction!(collapse, m)?)?;
    m.add_function(wrap_pyfunction!(independence, m)?)?;
    m.add_function(wrap_pyfunction!(independence_suite, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(random_table, m)?)?;
    Ok(())
}
