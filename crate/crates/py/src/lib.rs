//! Python bindings for the chain simulator, averaging operators, Landweber
//! reconstruction, zero-order closures and the experiment drivers.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use mesochain::deconv::{ConvOperator, FineField, FineGrid};
use mesochain::harness::{self, ExperimentConfig};
use mesochain::{
    ChainConfig, ChainState, MesoField, MesoMesh, PowerLawPotential, StressIntMode,
    VerletIntegrator, WindowFunction, WindowKind,
};

fn to_py(e: mesochain::Error) -> PyErr {
    match e {
        mesochain::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<WindowKind> {
    match kind {
        "box" => Ok(WindowKind::Box),
        "gaussian" => Ok(WindowKind::Gaussian),
        other => Err(PyValueError::new_err(format!(
            "unknown window kind `{other}`"
        ))),
    }
}

/// Chain parameters: `n` particles of total mass `m` on `[0, l]`.
#[pyclass(name = "Chain", module = "mesochain")]
struct Chain {
    cfg: ChainConfig,
}

#[pymethods]
impl Chain {
    #[new]
    #[pyo3(signature = (n, l=1.0, m=1.0, c_r=100.0, p=2.0, x_star=1.0, wall_offset=true, dt=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n: usize,
        l: f64,
        m: f64,
        c_r: f64,
        p: f64,
        x_star: f64,
        wall_offset: bool,
        dt: Option<f64>,
    ) -> PyResult<Self> {
        let pot = PowerLawPotential::new(c_r, p, x_star).map_err(to_py)?;
        let mut cfg = ChainConfig::new(n, l, m, pot)
            .map_err(to_py)?
            .with_wall_offset(wall_offset);
        if let Some(dt) = dt {
            cfg = cfg.with_dt(dt).map_err(to_py)?;
        }
        Ok(Self { cfg })
    }

    #[getter]
    fn n(&self) -> usize {
        self.cfg.n
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.cfg.dt
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.cfg.eps()
    }

    #[getter]
    fn particle_mass(&self) -> f64 {
        self.cfg.particle_mass()
    }

    fn rest(&self) -> State {
        State(mesochain::init_rest(&self.cfg))
    }

    fn ramp(&self, gamma: f64) -> State {
        State(mesochain::init_ramp(&self.cfg, gamma))
    }

    fn oscillatory(&self, gamma: f64, a: f64, k: f64) -> State {
        State(mesochain::init_oscillatory(&self.cfg, gamma, a, k))
    }

    fn forces(&self, state: &State) -> PyResult<Vec<f64>> {
        mesochain::net_forces(&self.cfg, &state.0).map_err(to_py)
    }

    fn energy(&self, state: &State) -> f64 {
        mesochain::total_energy(&self.cfg, &state.0)
    }

    /// Velocity-Verlet integration up to time `t`; the GIL is released.
    fn advance(&self, py: Python<'_>, state: &State, t: f64) -> PyResult<State> {
        let cfg = self.cfg.clone();
        let s0 = state.0.clone();
        py.detach(move || {
            let mut it = VerletIntegrator::new(cfg, s0)?;
            it.advance_to(t)?;
            Ok(it.into_state())
        })
        .map(State)
        .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Chain(n={}, dt={:e})", self.cfg.n, self.cfg.dt)
    }
}

/// Positions, velocities and time of a chain.
#[pyclass(name = "State", module = "mesochain")]
struct State(ChainState);

#[pymethods]
impl State {
    #[new]
    fn new(t: f64, q: Vec<f64>, v: Vec<f64>) -> PyResult<Self> {
        ChainState::new(t, q, v).map(State).map_err(to_py)
    }

    #[getter]
    fn t(&self) -> f64 {
        self.0.t
    }

    #[getter]
    fn q(&self) -> Vec<f64> {
        self.0.q.clone()
    }

    #[getter]
    fn v(&self) -> Vec<f64> {
        self.0.v.clone()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Window function of kind `"box"` or `"gaussian"` with `B = 1/eta` cells.
#[pyclass(name = "Window", module = "mesochain")]
struct Window {
    w: WindowFunction,
    mesh: MesoMesh,
}

#[pymethods]
impl Window {
    #[new]
    #[pyo3(signature = (eta, kind="box", l=1.0))]
    fn new(eta: f64, kind: &str, l: f64) -> PyResult<Self> {
        let w = WindowFunction::new(parse_kind(kind)?, eta, l).map_err(to_py)?;
        let b = (1.0 / eta).round() as usize;
        let mesh = MesoMesh::new(b, l).map_err(to_py)?;
        mesh.check_window(&w).map_err(to_py)?;
        Ok(Self { w, mesh })
    }

    fn value(&self, d: f64) -> f64 {
        self.w.value(d)
    }

    fn centers(&self) -> Vec<f64> {
        self.mesh.centers()
    }

    #[getter]
    fn b(&self) -> usize {
        self.mesh.b
    }
}

type Averager =
    fn(&ChainConfig, &ChainState, &WindowFunction, &MesoMesh) -> mesochain::Result<MesoField>;

fn average(f: Averager, chain: &Chain, state: &State, window: &Window) -> PyResult<Vec<f64>> {
    f(&chain.cfg, &state.0, &window.w, &window.mesh)
        .map(|m| m.values)
        .map_err(to_py)
}

#[pyfunction]
fn average_density(chain: &Chain, state: &State, window: &Window) -> PyResult<Vec<f64>> {
    average(mesochain::average_density, chain, state, window)
}

#[pyfunction]
fn average_momentum(chain: &Chain, state: &State, window: &Window) -> PyResult<Vec<f64>> {
    average(mesochain::average_momentum, chain, state, window)
}

#[pyfunction]
fn average_velocity(chain: &Chain, state: &State, window: &Window) -> PyResult<Vec<f64>> {
    average(mesochain::average_velocity, chain, state, window)
}

#[pyfunction]
fn interaction_stress_exact(chain: &Chain, state: &State, window: &Window) -> PyResult<Vec<f64>> {
    average(mesochain::interaction_stress_exact, chain, state, window)
}

#[pyfunction]
fn convective_stress_exact(chain: &Chain, state: &State, window: &Window) -> PyResult<Vec<f64>> {
    average(mesochain::convective_stress_exact, chain, state, window)
}

/// Order-`n` Landweber sum applied to samples on a uniform grid with
/// endpoints included.
#[pyfunction]
fn landweber(values: Vec<f64>, window: &Window, n: usize) -> PyResult<Vec<f64>> {
    let grid = FineGrid::new(values.len(), window.w.l).map_err(to_py)?;
    let op = ConvOperator::new(window.w, grid).map_err(to_py)?;
    let gbar = FineField::new(grid, values).map_err(to_py)?;
    mesochain::landweber_reconstruct(&op, &gbar, n)
        .map(|f| f.values)
        .map_err(to_py)
}

/// Zero-order interaction stress at the mesh nodes from averaged densities.
#[pyfunction]
#[pyo3(signature = (rho, window, chain, grid=None))]
fn stress_int_zero(
    rho: Vec<f64>,
    window: &Window,
    chain: &Chain,
    grid: Option<usize>,
) -> PyResult<Vec<f64>> {
    let field =
        MesoField::new(window.mesh, &window.w, mesochain::Quantity::Density, rho).map_err(to_py)?;
    let g = grid.unwrap_or_else(|| mesochain::deconv::default_grid_size(chain.cfg.n));
    let fine = FineGrid::new(g, chain.cfg.l).map_err(to_py)?;
    mesochain::stress_int_zero(
        &field,
        &window.w,
        &chain.cfg,
        StressIntMode::Integral,
        &fine,
    )
    .map(|f| f.values)
    .map_err(to_py)
}

#[pyfunction]
fn local_eos(rho: f64, chain: &Chain) -> PyResult<f64> {
    mesochain::local_eos(rho, &chain.cfg).map_err(to_py)
}

/// Runs a harness command on a TOML experiment config and returns the
/// report as JSON text.
#[pyfunction]
#[pyo3(signature = (command, config=""))]
fn run(py: Python<'_>, command: &str, config: &str) -> PyResult<String> {
    let exp = ExperimentConfig::from_toml_str(config).map_err(to_py)?;
    let command = command.to_owned();
    py.detach(move || -> mesochain::Result<String> {
        let json =
            |v: serde_json::Result<String>| v.map_err(|e| mesochain::Error::Config(e.to_string()));
        match command.as_str() {
            "run-micro" => json(serde_json::to_string(&harness::cmd_run_micro(&exp)?)),
            "compare-closure" => json(serde_json::to_string(&harness::cmd_compare_closure(&exp)?)),
            "sweep-n" => json(serde_json::to_string(&harness::cmd_sweep_n(&exp, true)?)),
            "oscillatory" => json(serde_json::to_string(&harness::cmd_oscillatory(
                &exp, true,
            )?)),
            "run-meso" => json(serde_json::to_string(&harness::cmd_run_meso(&exp)?)),
            "reconstruct" => json(serde_json::to_string(&harness::cmd_reconstruct(
                &exp, None,
            )?)),
            other => Err(mesochain::Error::Config(format!(
                "unknown command `{other}`"
            ))),
        }
    })
    .map_err(to_py)
}

#[pymodule]
#[pyo3(name = "mesochain")]
fn mesochain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chain>()?;
    m.add_class::<State>()?;
    m.add_class::<Window>()?;
    m.add_function(wrap_pyfunction!(average_density, m)?)?;
    m.add_function(wrap_pyfunction!(average_momentum, m)?)?;
    m.add_function(wrap_pyfunction!(average_velocity, m)?)?;
    m.add_function(wrap_pyfunction!(interaction_stress_exact, m)?)?;
    m.add_function(wrap_pyfunction!(convective_stress_exact, m)?)?;
    m.add_function(wrap_pyfunction!(landweber, m)?)?;
    m.add_function(wrap_pyfunction!(stress_int_zero, m)?)?;
    m.add_function(wrap_pyfunction!(local_eos, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
