//! Python bindings: traps, shooting, waveforms, excitation and the experiment
//! runner. Values cross the boundary in SI unless a name says `_internal`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use ionsplit::ansatz::{synthesize_waveform, DesignDescriptor, ProtocolDesign};
use ionsplit::experiments::{self, Engine, ExperimentConfig, ExperimentKind, StaSolver};
use ionsplit::shooting::ShootingResult;
use ionsplit::units::{Species, TrapSpec, Unit};
use ionsplit::Error;

create_exception!(pyionsplit, NonConvergenceError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NonConvergence { .. } | Error::Bracket { .. } => NonConvergenceError::new_err(e.to_string()),
        Error::InvalidInput(_)
        | Error::UnknownSpecies(_)
        | Error::UnknownUnit(_)
        | Error::WrongParameterCount { .. }
        | Error::Json(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn py_to_json(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    let s: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_kind(kind: &str) -> PyResult<ExperimentKind> {
    serde_json::from_value(Value::String(kind.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown experiment `{kind}`")))
}

fn overrides_from(py: Python<'_>, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Vec<(String, Value)>> {
    let mut out = Vec::new();
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            out.push((k.extract::<String>()?, py_to_json(py, &v)?));
        }
    }
    Ok(out)
}

fn load_config(
    py: Python<'_>,
    kind: ExperimentKind,
    config: Option<PathBuf>,
    overrides: Option<&Bound<'_, PyDict>>,
) -> PyResult<ExperimentConfig> {
    let o = overrides_from(py, overrides)?;
    ExperimentConfig::load(config.as_deref(), &o, kind).map_err(to_py)
}

/// A linear Paul trap holding two identical ions.
#[pyclass(name = "Trap", module = "pyionsplit", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTrap {
    inner: TrapSpec,
}

#[pymethods]
impl PyTrap {
    #[new]
    #[pyo3(signature = (species = "Be9+", omega0_hz = 2.0e6))]
    fn new(species: &str, omega0_hz: f64) -> PyResult<Self> {
        let sp: Species = species.parse().map_err(to_py)?;
        Ok(PyTrap { inner: TrapSpec::new(sp, omega0_hz).map_err(to_py)? })
    }

    #[getter]
    fn omega0_hz(&self) -> f64 {
        self.inner.omega0_hz()
    }

    #[getter]
    fn coulomb_internal(&self) -> f64 {
        self.inner.coulomb_internal()
    }

    #[getter]
    fn d0_internal(&self) -> f64 {
        self.inner.d0_internal()
    }

    /// Equilibrium separation in the unexpanded trap, metres.
    #[getter]
    fn d0_m(&self) -> f64 {
        self.inner.to_si(self.inner.d0_internal(), Unit::Length)
    }

    /// `unit` is one of length, time, energy, alpha, beta, force.
    fn to_si(&self, value: f64, unit: &str) -> PyResult<f64> {
        Ok(self.inner.to_si(value, unit.parse().map_err(to_py)?))
    }

    fn from_si(&self, value: f64, unit: &str) -> PyResult<f64> {
        Ok(self.inner.from_si(value, unit.parse().map_err(to_py)?))
    }

    fn __repr__(&self) -> String {
        format!("Trap(omega0_hz={})", self.inner.omega0_hz())
    }
}

/// A designed protocol, optionally with the shooting search that produced it.
#[pyclass(name = "Design", module = "pyionsplit", frozen)]
struct PyDesign {
    design: ProtocolDesign,
    shooting: Option<ShootingResult>,
}

#[pymethods]
impl PyDesign {
    #[getter]
    fn t_f_s(&self) -> f64 {
        self.design.t_f
    }

    #[getter]
    fn tau_f(&self) -> f64 {
        self.design.tau_f
    }

    #[getter]
    fn order(&self) -> u32 {
        self.design.order().degree()
    }

    #[getter]
    fn free_params(&self) -> Vec<f64> {
        self.design.free_params()
    }

    #[getter]
    fn trap(&self) -> PyTrap {
        PyTrap { inner: self.design.trap.clone() }
    }

    /// None for a replayed design.
    #[getter]
    fn converged(&self) -> Option<bool> {
        self.shooting.as_ref().map(|s| s.converged)
    }

    /// Stretch-mode energy above the zero point at the end, quanta.
    #[getter]
    fn excess_energy(&self) -> Option<f64> {
        self.shooting.as_ref().map(|s| s.excess_energy)
    }

    #[getter]
    fn terminal_residuals(&self) -> Option<(f64, f64)> {
        self.shooting.as_ref().map(|s| s.terminal_residuals)
    }

    /// Sampled control waveform as a dict of internal-unit lists.
    #[pyo3(signature = (samples = 2001))]
    fn waveform<'py>(&self, py: Python<'py>, samples: usize) -> PyResult<Bound<'py, PyDict>> {
        let w = synthesize_waveform(&self.design, samples).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("t", &w.t)?;
        d.set_item("alpha", &w.alpha)?;
        d.set_item("beta", &w.beta)?;
        d.set_item("d", &w.d)?;
        d.set_item("omega2_minus", &w.omega2_minus)?;
        d.set_item("omega2_plus", &w.omega2_plus)?;
        Ok(d)
    }

    #[pyo3(signature = (samples = 2001))]
    fn diagnostics<'py>(&self, py: Python<'py>, samples: usize) -> PyResult<Bound<'py, PyAny>> {
        let w = synthesize_waveform(&self.design, samples).map_err(to_py)?;
        let v = serde_json::to_value(w.diagnostics()).map_err(|e| to_py(e.into()))?;
        json_to_py(py, &v)
    }

    /// Descriptor JSON that `Design.from_json` replays exactly.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.design.descriptor()).map_err(|e| to_py(e.into()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        let inner = v.pointer("/results/design").cloned().unwrap_or(v);
        let desc: DesignDescriptor = serde_json::from_value(inner).map_err(|e| to_py(e.into()))?;
        Ok(PyDesign { design: ProtocolDesign::from_descriptor(&desc).map_err(to_py)?, shooting: None })
    }

    /// Final excitation in quanta of `hbar omega0`, per engine, under a
    /// tilt force `lambda_n` (newtons). `overrides` are dotted config paths.
    #[pyo3(signature = (lambda_n = 0.0, engine = "classical", overrides = None))]
    fn excitation<'py>(
        &self,
        py: Python<'py>,
        lambda_n: f64,
        engine: &str,
        overrides: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let engine: Engine = serde_json::from_value(Value::String(engine.to_string()))
            .map_err(|_| PyValueError::new_err(format!("unknown engine `{engine}`")))?;
        let cfg = load_config(py, ExperimentKind::Simulate, None, overrides)?;
        let trap = &self.design.trap;
        let lambda = trap.from_si(lambda_n, Unit::Force);
        let design = &self.design;
        let r = py
            .detach(|| experiments::excite(design, trap, lambda, engine, &cfg))
            .map_err(to_py)?;
        let v = serde_json::to_value(r).map_err(|e| to_py(e.into()))?;
        json_to_py(py, &v)
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(order={}, t_f_s={:e}, free_params={:?})",
            self.design.order().degree(),
            self.design.t_f,
            self.design.free_params()
        )
    }
}

/// Shoot a design for duration `t_f_s`. Keyword overrides follow the config
/// file layout, e.g. `{"trap.omega0_hz": 3e6, "protocol.order": 12}`.
#[pyfunction]
#[pyo3(signature = (t_f_s, overrides = None))]
fn shoot(py: Python<'_>, t_f_s: f64, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<PyDesign> {
    let mut o = overrides_from(py, overrides)?;
    o.push(("protocol.t_f_s".into(), t_f_s.into()));
    let cfg = ExperimentConfig::load(None, &o, ExperimentKind::Design).map_err(to_py)?;
    let trap = cfg.trap().map_err(to_py)?;
    let (design, shooting) = py
        .detach(|| {
            let solver = StaSolver::from_config(&cfg, &trap);
            let res = solver.solve(&[t_f_s])?.remove(0);
            Ok::<_, Error>((solver.design(&res)?, res))
        })
        .map_err(to_py)?;
    Ok(PyDesign { design, shooting: Some(shooting) })
}

/// Fully resolved configuration (defaults, file, overrides) as a dict.
#[pyfunction]
#[pyo3(signature = (kind, config = None, overrides = None))]
fn resolve_config<'py>(
    py: Python<'py>,
    kind: &str,
    config: Option<PathBuf>,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = load_config(py, parse_kind(kind)?, config, overrides)?;
    let v = serde_json::to_value(&cfg).map_err(|e| to_py(e.into()))?;
    json_to_py(py, &v)
}

/// Run one experiment exactly as the CLI subcommand of the same name would.
/// Returns `{"converged", "outputs", "lines", "config_hash"}`.
#[pyfunction]
#[pyo3(signature = (kind, config = None, overrides = None))]
fn run_experiment<'py>(
    py: Python<'py>,
    kind: &str,
    config: Option<PathBuf>,
    overrides: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind = parse_kind(kind)?;
    let cfg = load_config(py, kind, config, overrides)?;
    let summary = py.detach(|| experiments::run(kind, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("converged", summary.converged)?;
    let outputs: Vec<String> = summary.outputs.iter().map(|p| p.display().to_string()).collect();
    d.set_item("outputs", PyList::new(py, outputs)?)?;
    d.set_item("lines", summary.lines)?;
    d.set_item("config_hash", cfg.content_hash())?;
    Ok(d)
}

#[pymodule]
fn pyionsplit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrap>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(shoot, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("NonConvergenceError", m.py().get_type::<NonConvergenceError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
