//! Python bindings. Matrices are lists of rows of Python complex numbers and
//! monomials are addressed by 1-based label lists or `"J|I"` strings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fermiclose::channel::{self, ChannelSpec};
use fermiclose::environment::{self, CorrelationTensor};
use fermiclose::gksl::{self, MomentOdeSystem};
use fermiclose::linalg::{CMat, C64};
use fermiclose::multiindex::{MonomialKey, MultiIndex};
use fermiclose::poly::MonomialPoly;
use fermiclose::{cli, postselect, Error};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

type PyMatrix = Vec<Vec<C64>>;

fn err(e: Error) -> PyErr {
    match e {
        Error::Resource(_) | Error::Numeric(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_mat(rows: &PyMatrix) -> PyResult<CMat> {
    fermiclose::linalg::from_rows(rows).map_err(err)
}

fn from_mat(x: &CMat) -> PyMatrix {
    fermiclose::linalg::to_rows(x)
}

fn index(labels: &[usize]) -> PyResult<MultiIndex> {
    MultiIndex::from_labels(labels).map_err(err)
}

fn poly_dict(p: &MonomialPoly) -> BTreeMap<String, C64> {
    p.iter().map(|(k, c)| (k.to_string(), *c)).collect()
}

/// Correlation tensor of the environment state.
#[pyclass(name = "Environment", frozen)]
struct PyEnvironment {
    inner: CorrelationTensor,
}

#[pymethods]
impl PyEnvironment {
    #[staticmethod]
    fn vacuum(m: usize) -> PyResult<Self> {
        Ok(Self { inner: environment::gamma_vacuum(m).map_err(err)? })
    }

    #[staticmethod]
    fn gaussian(c: PyMatrix) -> PyResult<Self> {
        Ok(Self { inner: environment::gamma_gaussian(&to_mat(&c)?).map_err(err)? })
    }

    #[staticmethod]
    fn fock(m: usize, occupied: Vec<usize>) -> PyResult<Self> {
        Ok(Self { inner: environment::gamma_fock(m, index(&occupied)?).map_err(err)? })
    }

    #[staticmethod]
    fn uniform(m: usize, particles: usize) -> PyResult<Self> {
        Ok(Self { inner: environment::gamma_uniform(m, particles).map_err(err)? })
    }

    #[staticmethod]
    fn explicit(sigma: PyMatrix) -> PyResult<Self> {
        Ok(Self { inner: environment::gamma_from_density(&to_mat(&sigma)?).map_err(err)? })
    }

    /// `Γ_{Ξ;Ω} = Tr(σ f_Ξ^† f_Ω)`.
    fn gamma(&self, xi: Vec<usize>, omega: Vec<usize>) -> PyResult<C64> {
        Ok(self.inner.gamma(index(&xi)?, index(&omega)?))
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes()
    }

    #[getter]
    fn is_even(&self) -> bool {
        self.inner.is_even()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }
}

/// Channel induced by `a ↦ A a + B b` with the environment in a given state.
#[pyclass(name = "Channel", frozen)]
struct PyChannel {
    inner: ChannelSpec,
}

#[pymethods]
impl PyChannel {
    #[staticmethod]
    fn from_blocks(a: PyMatrix, b: PyMatrix, env: &PyEnvironment) -> PyResult<Self> {
        Ok(Self { inner: ChannelSpec::new(to_mat(&a)?, to_mat(&b)?, env.inner.clone()).map_err(err)? })
    }

    #[staticmethod]
    fn from_unitary(w: PyMatrix, env: &PyEnvironment) -> PyResult<Self> {
        Ok(Self { inner: ChannelSpec::with_unitary(to_mat(&w)?, env.inner.clone()).map_err(err)? })
    }

    #[staticmethod]
    fn from_contraction(a: PyMatrix, env: &PyEnvironment) -> PyResult<Self> {
        Ok(Self { inner: ChannelSpec::from_contraction(&to_mat(&a)?, env.inner.clone()).map_err(err)? })
    }

    #[getter]
    fn modes(&self) -> usize {
        self.inner.modes()
    }

    /// The stored `W`, or a completion of `(A | B)`.
    fn unitary(&self) -> PyResult<PyMatrix> {
        Ok(from_mat(&self.inner.unitary().map_err(err)?))
    }

    /// Heisenberg image of `f_J^† f_I` as `{"K|L": coeff}`; parity terms carry a `|P` suffix.
    #[pyo3(signature = (creation, annihilation, even = true))]
    fn dual_action(&self, creation: Vec<usize>, annihilation: Vec<usize>, even: bool) -> PyResult<BTreeMap<String, C64>> {
        let (j, i) = (index(&creation)?, index(&annihilation)?);
        let p = if even {
            channel::dual_action_even(&self.inner, j, i)
        } else {
            channel::dual_action_general(&self.inner, j, i)
        };
        Ok(poly_dict(&p.map_err(err)?))
    }

    /// `(basis, matrix)` of the moment transfer matrix at order cap `k`.
    fn transfer_matrix(&self, k: usize) -> PyResult<(Vec<String>, PyMatrix)> {
        let t = channel::transfer_matrix(&self.inner, k).map_err(err)?;
        Ok((t.basis.iter().map(|k| k.to_string()).collect(), from_mat(&t.data)))
    }
}

/// Closed linear ODE for moments of order `≤ k`.
#[pyclass(name = "MomentSystem", frozen)]
struct PyMomentSystem {
    inner: MomentOdeSystem,
}

#[pymethods]
impl PyMomentSystem {
    #[new]
    #[pyo3(signature = (channel, k, hamiltonian = None))]
    fn new(channel: &PyChannel, k: usize, hamiltonian: Option<PyMatrix>) -> PyResult<Self> {
        let h = hamiltonian.as_ref().map(to_mat).transpose()?;
        Ok(Self { inner: gksl::moment_ode_system(&channel.inner, k, h.as_ref()).map_err(err)? })
    }

    #[getter]
    fn basis(&self) -> Vec<String> {
        self.inner.basis.iter().map(|k| k.to_string()).collect()
    }

    fn generator(&self) -> PyMatrix {
        from_mat(&self.inner.total())
    }

    fn evolve(&self, mu0: Vec<C64>, t: f64) -> PyResult<Vec<C64>> {
        gksl::evolve_moments(&self.inner, &mu0, t).map_err(err)
    }
}

#[pyfunction]
fn basis_keys(m: usize, k: usize) -> PyResult<Vec<String>> {
    Ok(channel::basis_keys(m, k).map_err(err)?.iter().map(|k| k.to_string()).collect())
}

#[pyfunction]
fn basis_dimension(m: usize, k: usize) -> u128 {
    channel::basis_dimension(m, k)
}

/// Coefficients `{"M|N": e}` of a dense even effect.
#[pyfunction]
#[pyo3(signature = (e, tol = 1e-9))]
fn expand_effect(e: PyMatrix, tol: f64) -> PyResult<BTreeMap<String, C64>> {
    let x = postselect::expand_effect(&to_mat(&e)?, tol).map_err(err)?;
    Ok(x.coeffs.iter().map(|(&(a, b), c)| (MonomialKey::new(a, b).to_string(), *c)).collect())
}

/// `Φ_E^*(f_J^† f_I)` for a dense even effect `E` on the environment.
#[pyfunction]
fn postselected_action(
    w: PyMatrix,
    env: &PyEnvironment,
    e: PyMatrix,
    creation: Vec<usize>,
    annihilation: Vec<usize>,
) -> PyResult<BTreeMap<String, C64>> {
    let eff = postselect::expand_effect(&to_mat(&e)?, 1e-9).map_err(err)?;
    let p = postselect::dual_action_postselected(&to_mat(&w)?, &env.inner, &eff, index(&creation)?, index(&annihilation)?)
        .map_err(err)?;
    Ok(poly_dict(&p))
}

/// Runs a scenario file and returns the path of the written CSV.
#[pyfunction]
fn run_config(config: PathBuf, out_dir: PathBuf) -> PyResult<String> {
    let scn = cli::load_config(&config).map_err(err)?;
    Ok(cli::run_scenario(&scn, &out_dir).map_err(err)?.display().to_string())
}

/// Oracle verification report of a scenario file, as JSON text.
#[pyfunction]
#[pyo3(signature = (config, seed = 0, tolerance = 1e-6))]
fn verify_config(config: PathBuf, seed: u64, tolerance: f64) -> PyResult<String> {
    let scn = cli::load_config(&config).map_err(err)?;
    let report = cli::verify(&scn, seed, tolerance, 0.0).map_err(err)?;
    serde_json::to_string(&report).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pyfermiclose(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvironment>()?;
    m.add_class::<PyChannel>()?;
    m.add_class::<PyMomentSystem>()?;
    m.add_function(wrap_pyfunction!(basis_keys, m)?)?;
    m.add_function(wrap_pyfunction!(basis_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(expand_effect, m)?)?;
    m.add_function(wrap_pyfunction!(postselected_action, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(verify_config, m)?)?;
    Ok(())
}
