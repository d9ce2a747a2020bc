use mfgz_core::config::{GameConfig, SHIPPED};
use mfgz_core::dpp::{self, DppConfig, DppMode};
use mfgz_core::dynamics::IntegratorConfig;
use mfgz_core::game::control_grid;
use mfgz_core::hamiltonian::{self, Costate, Kind};
use mfgz_core::hji;
use mfgz_core::measure::{self, EmpiricalMeasure, LawFamily, QuantizationSpec};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mfgz, MfgzError, PyException);

fn err(e: mfgz_core::Error) -> PyErr {
    MfgzError::new_err(e.to_string())
}

fn parse_kind(name: &str) -> PyResult<Kind> {
    Kind::parse(name).map_err(err)
}

/// Weighted atoms in `R^n`.
#[pyclass(name = "Measure", module = "mfgz", frozen)]
struct PyMeasure {
    inner: EmpiricalMeasure,
}

#[pymethods]
impl PyMeasure {
    /// `atoms` is a list of points; weights default to uniform.
    #[new]
    #[pyo3(signature = (atoms, weights=None))]
    fn new(atoms: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match weights {
            Some(w) => EmpiricalMeasure::new(&atoms, w),
            None => EmpiricalMeasure::uniform(&atoms),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn gaussian(mean: f64, variance: f64, atoms: usize) -> PyResult<Self> {
        quantized(LawFamily::Gaussian { mean, variance }, atoms)
    }

    #[staticmethod]
    fn uniform(lo: f64, hi: f64, atoms: usize) -> PyResult<Self> {
        quantized(LawFamily::Uniform { lo, hi }, atoms)
    }

    #[staticmethod]
    fn dirac(point: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: EmpiricalMeasure::dirac(&point).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn atoms(&self) -> Vec<Vec<f64>> {
        self.inner.atoms().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean()
    }

    fn second_moment(&self) -> f64 {
        self.inner.second_moment()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Measure(dim={}, atoms={})", self.inner.dim(), self.inner.len())
    }
}

fn quantized(family: LawFamily, atom_count: usize) -> PyResult<PyMeasure> {
    let inner = measure::quantize(&QuantizationSpec { family, atom_count }).map_err(err)?;
    Ok(PyMeasure { inner })
}

#[pyfunction]
#[pyo3(signature = (a, b, p=2, exact=false))]
fn wasserstein(a: &PyMeasure, b: &PyMeasure, p: u32, exact: bool) -> PyResult<f64> {
    if exact {
        measure::wasserstein_exact_transport(p, &a.inner, &b.inner).map_err(err)
    } else {
        measure::wasserstein(p, &a.inner, &b.inner).map_err(err)
    }
}

#[pyfunction]
fn shipped_configs() -> Vec<&'static str> {
    SHIPPED.iter().map(|(n, _)| *n).collect()
}

/// A game configuration: dynamics, costs, laws and solver defaults.
#[pyclass(name = "Game", module = "mfgz", frozen)]
struct PyGame {
    cfg: GameConfig,
}

#[pymethods]
impl PyGame {
    /// A shipped name or a path to a TOML file.
    #[staticmethod]
    fn load(name_or_path: &str) -> PyResult<Self> {
        Ok(Self {
            cfg: GameConfig::load(name_or_path).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_toml(name: &str, source: &str) -> PyResult<Self> {
        Ok(Self {
            cfg: GameConfig::from_toml_str(name, source).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.cfg.name
    }

    #[getter]
    fn dim(&self) -> usize {
        self.cfg.spec.dim
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.cfg.spec.horizon
    }

    #[getter]
    fn particles(&self) -> usize {
        self.cfg.particles
    }

    /// The configured initial state law with `particles` atoms.
    #[pyo3(signature = (particles=None))]
    fn initial_law(&self, particles: Option<usize>) -> PyResult<PyMeasure> {
        let ens = self
            .cfg
            .ensemble_with(particles.unwrap_or(self.cfg.particles))
            .map_err(err)?;
        Ok(PyMeasure { inner: ens.x })
    }

    /// Lower or upper Hamiltonian at `(t, nu, p)`; `p` holds one costate
    /// vector per atom. Returns `(value, u index, v index)`.
    #[pyo3(signature = (kind, t, nu, p, resolution=None))]
    fn hamiltonian(
        &self,
        kind: &str,
        t: f64,
        nu: &PyMeasure,
        p: Vec<Vec<f64>>,
        resolution: Option<usize>,
    ) -> PyResult<(f64, usize, usize)> {
        let spec = &self.cfg.spec;
        let ug = control_grid(&spec.u_box, resolution.unwrap_or(self.cfg.u_resolution)).map_err(err)?;
        let vg = control_grid(&spec.v_box, resolution.unwrap_or(self.cfg.v_resolution)).map_err(err)?;
        let costate = Costate::new(spec.dim, p.concat());
        let h = hamiltonian::hamiltonian(parse_kind(kind)?, spec, t, &nu.inner, &costate, &ug, &vg).map_err(err)?;
        Ok((h.value, h.arg_u, h.arg_v))
    }

    /// Discretized game value by backward dynamic programming. `mode` is
    /// `"exact"` or `"adaptive"`.
    #[pyo3(signature = (kind, steps=None, resolution=None, mode="adaptive", points=None, particles=None, substeps=None))]
    #[allow(clippy::too_many_arguments)]
    fn dpp_value(
        &self,
        py: Python<'_>,
        kind: &str,
        steps: Option<usize>,
        resolution: Option<usize>,
        mode: &str,
        points: Option<usize>,
        particles: Option<usize>,
        substeps: Option<usize>,
    ) -> PyResult<f64> {
        let k = parse_kind(kind)?;
        let cfg = &self.cfg;
        let ens = cfg.ensemble_with(particles.unwrap_or(cfg.particles)).map_err(err)?;
        let mode = match mode {
            "exact" => DppMode::Exact,
            "adaptive" => DppMode::Adaptive {
                points: points.unwrap_or(cfg.dpp.points),
            },
            other => return Err(MfgzError::new_err(format!("unknown mode {other:?}"))),
        };
        let dc = DppConfig {
            mode,
            ..DppConfig::exact(
                steps.unwrap_or(cfg.time_steps),
                resolution.unwrap_or(cfg.u_resolution),
                resolution.unwrap_or(cfg.v_resolution),
            )
        }
        .with_integrator(IntegratorConfig::rk4(substeps.unwrap_or(cfg.dpp.substeps)));
        py.detach(|| dpp::dpp_value(&cfg.spec, &ens, k, &dc))
            .map(|s| s.value)
            .map_err(err)
    }

    /// HJI solution at `t = 0` on the configured grid, as a dict with the
    /// grid axes, the flattened values (last axis fastest) and the value at
    /// the initial law.
    #[pyo3(signature = (kind="lower", particles=None, points=None))]
    fn solve_hji<'py>(
        &self,
        py: Python<'py>,
        kind: &str,
        particles: Option<usize>,
        points: Option<usize>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let k = parse_kind(kind)?;
        let cfg = &self.cfg;
        let n = particles.unwrap_or(cfg.particles);
        let mut grid = cfg.hji_grid(n).map_err(err)?;
        if let Some(p) = points {
            let axes = grid
                .axes()
                .iter()
                .map(|a| hji::Axis::new(a.lo, a.hi, p))
                .collect::<mfgz_core::Result<Vec<_>>>()
                .map_err(err)?;
            grid = hji::SpatialGrid::new(axes).map_err(err)?;
        }
        let ens = cfg.ensemble_with(n).map_err(err)?;
        let sol = py
            .detach(|| hji::solve(&cfg.spec, &grid, &ens.z, k, &cfg.scheme()))
            .map_err(err)?;
        let out = PyDict::new(py);
        let axes: Vec<Vec<f64>> = grid
            .axes()
            .iter()
            .map(|a| (0..a.points).map(|j| a.coordinate(j)).collect())
            .collect();
        out.set_item("axes", axes)?;
        out.set_item("values", sol.field.values.clone())?;
        out.set_item("steps", sol.steps)?;
        out.set_item("dt", sol.dt)?;
        out.set_item("value_at_initial", hji::value_at_measure(&sol.field, &ens.x).ok())?;
        Ok(out)
    }
}

#[pymodule]
fn mfgz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MfgzError", m.py().get_type::<MfgzError>())?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(wasserstein, m)?)?;
    m.add_function(wrap_pyfunction!(shipped_configs, m)?)?;
    Ok(())
}
