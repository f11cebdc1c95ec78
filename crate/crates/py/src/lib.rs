//! Python bindings for the `kmfg` solver.

use std::path::Path;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use kmfg::cli_io::{parse_manifest, run_manifest, Checkpoint};
use kmfg::diagnostics::gain_exponents as core_gain_exponents;
use kmfg::fp::{de_giorgi_alphas, de_giorgi_levels as core_de_giorgi_levels};
use kmfg::hamiltonian::{check_structure, sample_lattice, HamiltonianSpec};
use kmfg::oracle::{kolmogorov_density as core_kolmogorov_density, KineticGaussian};
use kmfg::phase_grid::{build_grid, Field, GridConfig, PhaseGrid, SpaceTimeField, DEFAULT_MAX_CELLS};
use kmfg::KmfgError;

fn to_py(e: KmfgError) -> PyErr {
    match e {
        KmfgError::Io(_) | KmfgError::Format(_) => PyIOError::new_err(e.to_string()),
        KmfgError::Manifest { .. }
        | KmfgError::InvalidGrid(_)
        | KmfgError::InvalidArgument(_)
        | KmfgError::GridMismatch(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn pair(p: &[f64]) -> PyResult<[f64; 2]> {
    match p {
        [a] => Ok([*a, 0.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(PyValueError::new_err("momentum must have 1 or 2 components")),
    }
}

/// Periodic-in-x, truncated-in-v phase-space grid.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGrid {
    inner: PhaseGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (t_final, n_t, l_x, n_x, l_v, n_v, d = 1))]
    fn new(t_final: f64, n_t: usize, l_x: f64, n_x: usize, l_v: f64, n_v: usize, d: usize) -> PyResult<Self> {
        let inner = build_grid(&GridConfig {
            d,
            t_final,
            n_t,
            l_x,
            n_x,
            l_v,
            n_v,
            max_cells: DEFAULT_MAX_CELLS,
        })
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }
    #[getter]
    fn h_x(&self) -> f64 {
        self.inner.h_x()
    }
    #[getter]
    fn h_v(&self) -> f64 {
        self.inner.h_v()
    }
    #[getter]
    fn n_t(&self) -> usize {
        self.inner.n_t()
    }
    #[getter]
    fn cell_volume(&self) -> f64 {
        self.inner.cell_volume()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// x nodes of the first axis.
    fn x_nodes(&self) -> Vec<f64> {
        (0..self.inner.n_x()).map(|i| self.inner.x_node(i)).collect()
    }

    /// v cell centres of the first axis.
    fn v_centers(&self) -> Vec<f64> {
        (0..self.inner.n_v()).map(|j| self.inner.v_center(j)).collect()
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!(
            "Grid(d={}, t_final={}, n_t={}, l_x={}, n_x={}, l_v={}, n_v={})",
            g.d(),
            g.t_final(),
            g.n_t(),
            g.l_x(),
            g.n_x(),
            g.l_v(),
            g.n_v()
        )
    }
}

/// Hamiltonian `H(p)`, optionally regularized as `H / (1 + eps sqrt(H))`.
#[pyclass(name = "Hamiltonian", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyHamiltonian {
    inner: HamiltonianSpec,
}

fn base_by_name(kind: &str) -> PyResult<HamiltonianSpec> {
    Ok(match kind {
        "zero" => HamiltonianSpec::Zero,
        "quadratic" => HamiltonianSpec::quadratic(),
        "half_quadratic" => HamiltonianSpec::half_quadratic(),
        "lipschitz" => HamiltonianSpec::SmoothLipschitz,
        "norm" => HamiltonianSpec::Norm,
        other => return Err(PyValueError::new_err(format!("unknown Hamiltonian kind {other:?}"))),
    })
}

#[pymethods]
impl PyHamiltonian {
    #[new]
    #[pyo3(signature = (kind, epsilon = None))]
    fn new(kind: &str, epsilon: Option<f64>) -> PyResult<Self> {
        let base = base_by_name(kind)?;
        let inner = match epsilon {
            Some(e) => HamiltonianSpec::regularized(base, e).map_err(to_py)?,
            None => base,
        };
        Ok(Self { inner })
    }

    fn eval(&self, p: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.eval(&pair(&p)?))
    }

    fn grad(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = self.inner.grad(&pair(&p)?);
        Ok(g[..p.len()].to_vec())
    }

    fn legendre_excess(&self, p: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.legendre_excess(&pair(&p)?))
    }

    /// Names of violated structure inequalities on an `n x n` lattice.
    #[pyo3(signature = (half_width = 5.0, n = 201))]
    fn structure_violations(&self, half_width: f64, n: usize) -> PyResult<Vec<String>> {
        let r = check_structure(&self.inner, &sample_lattice(2, half_width, n), &self.inner.default_constants())
            .map_err(to_py)?;
        let regularized = matches!(self.inner, HamiltonianSpec::Regularized { .. });
        Ok(r.violations(regularized).into_iter().map(String::from).collect())
    }
}

/// Free kinetic Gaussian at time `t` on the grid, flattened cell by cell.
#[pyfunction]
#[pyo3(signature = (grid, t, mean_x = 0.0, mean_v = 0.0, sigma_x = 0.0, sigma_v = 0.0))]
fn kolmogorov_density(
    grid: &PyGrid,
    t: f64,
    mean_x: f64,
    mean_v: f64,
    sigma_x: f64,
    sigma_v: f64,
) -> PyResult<Vec<f64>> {
    let law = KineticGaussian::isotropic(mean_x, mean_v, sigma_x, sigma_v);
    core_kolmogorov_density(&grid.inner, t, &law)
        .map(Field::into_values)
        .map_err(to_py)
}

/// Runs a JSON manifest and returns the outcome as a JSON string.
#[pyfunction]
#[pyo3(signature = (manifest_json, out_dir = None))]
fn solve_manifest(py: Python<'_>, manifest_json: &str, out_dir: Option<String>) -> PyResult<String> {
    let m = parse_manifest(manifest_json).map_err(to_py)?;
    let outcome = py
        .detach(|| run_manifest(&m, out_dir.as_deref().map(Path::new)))
        .map_err(to_py)?;
    serde_json::to_string(&outcome).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// `(q, p)` integrability gains in dimension `d`.
#[pyfunction]
fn gain_exponents(d: usize) -> (f64, f64) {
    core_gain_exponents(d)
}

/// De Giorgi levels and energies of a stored density time series.
#[pyfunction]
#[pyo3(signature = (checkpoint, horizon, count = 6, scale = 1.0))]
fn de_giorgi_levels(checkpoint: &str, horizon: f64, count: usize, scale: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let m: SpaceTimeField = Checkpoint::read(Path::new(checkpoint))
        .and_then(|c| c.to_spacetime(horizon))
        .map_err(to_py)?;
    let levels = core_de_giorgi_levels(&m, count, scale).map_err(to_py)?;
    Ok((levels.alpha, levels.u))
}

/// `alpha_1..alpha_count` of the De Giorgi level rule.
#[pyfunction]
fn level_sequence(count: usize) -> Vec<f64> {
    de_giorgi_alphas(count)
}

/// Number of time levels and the flattened values of one level.
#[pyfunction]
#[pyo3(signature = (path, level = 0))]
fn read_checkpoint(path: &str, level: usize) -> PyResult<(usize, Vec<f64>)> {
    let c = Checkpoint::read(Path::new(path)).map_err(to_py)?;
    let values = c
        .levels
        .get(level)
        .cloned()
        .ok_or_else(|| PyValueError::new_err(format!("level {level} out of range")))?;
    Ok((c.levels.len(), values))
}

#[pymodule]
fn pykmfg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyHamiltonian>()?;
    m.add_function(wrap_pyfunction!(kolmogorov_density, m)?)?;
    m.add_function(wrap_pyfunction!(solve_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(gain_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(de_giorgi_levels, m)?)?;
    m.add_function(wrap_pyfunction!(level_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(read_checkpoint, m)?)?;
    Ok(())
}
