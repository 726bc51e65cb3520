//! Experiment configuration and drivers: microscale runs with checkpoints,
//! exact-vs-closure comparisons, particle-number sweeps, the oscillatory
//! example, closed mesoscale runs and standalone reconstructions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::{
    average_density, average_momentum, convective_stress_exact, interaction_stress_exact,
    jacobian_at_mesh, velocity_at, MesoField, Quantity,
};
use crate::chain::{
    init_oscillatory, init_ramp, init_rest, read_checkpoint, total_energy, write_checkpoint,
    ChainConfig, ChainState, PowerLawPotential, VerletIntegrator,
};
use crate::closure::{energy_budget, prescribe_positions, prescribe_velocities, stress_order_n};
use crate::deconv::{
    default_grid_size, reconstruct_j, reconstruct_v, residual_path, ConvOperator, FineField,
    FineGrid,
};
use crate::error::{Error, Result};
use crate::io::{
    write_meso_field, write_paired, Manifest, CHECKPOINT_SCHEMA, FINE_FIELD_SCHEMA,
    MESO_FIELD_SCHEMA, PAIRED_SCHEMA,
};
use crate::meso_solver::{
    run_closed, LocalEos, MesoRunOptions, MesoState, NonlocalZero, StressClosure,
};
use crate::window::{MesoMesh, WindowFunction, WindowKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    Rest,
    Ramp,
    Oscillatory,
}

impl std::str::FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rest" => Ok(Self::Rest),
            "ramp" => Ok(Self::Ramp),
            "oscillatory" => Ok(Self::Oscillatory),
            other => Err(Error::Config(format!(
                "unknown initial condition `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MesoClosureKind {
    Nonlocal,
    LocalEos,
}

fn default_snapshots() -> Vec<f64> {
    vec![0.0, 0.01, 0.03, 0.05, 0.06, 0.07]
}

fn default_n_list() -> Vec<usize> {
    vec![10_000, 20_000, 40_000, 80_000]
}

/// One experiment, read from TOML; every key has a default matching the
/// reference ramp run (`N = 40000`, `B = 50`, box window, `gamma = 0.3`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub l: f64,
    pub m: f64,
    pub c_r: f64,
    pub p: f64,
    pub x_star: f64,
    pub wall_stiffness: Option<f64>,
    pub wall_offset_half_h: bool,
    pub dt: Option<f64>,

    pub window: WindowKind,
    pub b: usize,
    pub eta: Option<f64>,
    pub grid: Option<usize>,
    pub order: usize,

    pub ic: InitialCondition,
    pub gamma: f64,
    pub amp: f64,
    pub freq: f64,

    pub snapshots: Vec<f64>,
    pub out: PathBuf,
    pub exclude_boundary: bool,
    pub write_checkpoints: bool,

    pub n_list: Vec<usize>,
    pub sweep_time: f64,
    pub front_tol: f64,
    pub meso_closure: MesoClosureKind,
    pub meso_cfl: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 40_000,
            l: 1.0,
            m: 1.0,
            c_r: 100.0,
            p: 2.0,
            x_star: 1.0,
            wall_stiffness: None,
            wall_offset_half_h: true,
            dt: None,
            window: WindowKind::Box,
            b: 50,
            eta: None,
            grid: None,
            order: 0,
            ic: InitialCondition::Ramp,
            gamma: 0.3,
            amp: 5.0,
            freq: 20.0,
            snapshots: default_snapshots(),
            out: PathBuf::from("out"),
            exclude_boundary: true,
            write_checkpoints: true,
            n_list: default_n_list(),
            sweep_time: 0.01,
            front_tol: 1e-6,
            meso_closure: MesoClosureKind::Nonlocal,
            meso_cfl: 0.5,
            seed: 0,
        }
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub n: Option<usize>,
    pub b: Option<usize>,
    pub eta: Option<f64>,
    pub order: Option<usize>,
    pub ic: Option<InitialCondition>,
    pub gamma: Option<f64>,
    pub amp: Option<f64>,
    pub freq: Option<f64>,
    pub snapshots: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.into(),
            reason: e.to_string(),
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        set!(out, n, b, order, ic, gamma, amp, freq, snapshots, seed);
        if let Some(eta) = o.eta {
            self.eta = Some(eta);
            if o.b.is_none() {
                self.b = (1.0 / eta).round() as usize;
            }
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(1.0 / self.b as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 {
            return Err(Error::Config("b must be positive".into()));
        }
        if (self.eta() * self.b as f64 - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "b * eta must equal 1 (b = {}, eta = {})",
                self.b,
                self.eta()
            )));
        }
        if self.snapshots.is_empty() {
            return Err(Error::Config(
                "at least one snapshot time is required".into(),
            ));
        }
        if self
            .snapshots
            .iter()
            .any(|t| !(*t >= 0.0) || !t.is_finite())
        {
            return Err(Error::Config(
                "snapshot times must be finite and non-negative".into(),
            ));
        }
        if self.snapshots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "snapshot times must be strictly increasing".into(),
            ));
        }
        if !(self.sweep_time >= 0.0) {
            return Err(Error::Config("sweep_time must be non-negative".into()));
        }
        self.chain_config()?;
        Ok(())
    }

    pub fn chain_config(&self) -> Result<ChainConfig> {
        self.chain_config_for(self.n)
    }

    pub fn chain_config_for(&self, n: usize) -> Result<ChainConfig> {
        let pot = PowerLawPotential::new(self.c_r, self.p, self.x_star)?;
        let mut cfg =
            ChainConfig::new(n, self.l, self.m, pot)?.with_wall_offset(self.wall_offset_half_h);
        if let Some(c) = self.wall_stiffness {
            cfg = cfg.with_wall_stiffness(c)?;
        }
        if let Some(dt) = self.dt {
            cfg = cfg.with_dt(dt)?;
        }
        Ok(cfg)
    }

    pub fn window_fn(&self) -> Result<WindowFunction> {
        WindowFunction::new(self.window, self.eta(), self.l)
    }

    pub fn mesh(&self) -> Result<MesoMesh> {
        MesoMesh::new(self.b, self.l)
    }

    pub fn fine_grid(&self, n: usize) -> Result<FineGrid> {
        FineGrid::new(self.grid.unwrap_or_else(|| default_grid_size(n)), self.l)
    }

    pub fn initial_state(&self, cfg: &ChainConfig) -> ChainState {
        match self.ic {
            InitialCondition::Rest => init_rest(cfg),
            InitialCondition::Ramp => init_ramp(cfg, self.gamma),
            InitialCondition::Oscillatory => init_oscillatory(cfg, self.gamma, self.amp, self.freq),
        }
    }

    /// Writes the effective configuration as `config.toml` in `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn time_tag(t: f64) -> String {
    format!("t{t:.6}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Integrates from `state0`, calling `visit` with the state at each snapshot
/// time (steps are shortened to land on them). Returns the number of steps.
pub fn run_micro_snapshots(
    cfg: &ChainConfig,
    state0: ChainState,
    snapshots: &[f64],
    mut visit: impl FnMut(&ChainState) -> Result<()>,
) -> Result<u64> {
    let mut integ = VerletIntegrator::new(cfg.clone(), state0)?;
    for &t in snapshots {
        integ.advance_to(t)?;
        visit(integ.state())?;
    }
    Ok(integ.steps_taken())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSnapshot {
    pub t: f64,
    pub energy: f64,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroRunReport {
    pub n: usize,
    pub dt: f64,
    pub steps: u64,
    pub runtime_s: f64,
    pub snapshots: Vec<MicroSnapshot>,
}

/// Integrates the chain and writes a checkpoint at each snapshot time.
pub fn cmd_run_micro(exp: &ExperimentConfig) -> Result<MicroRunReport> {
    exp.validate()?;
    let cfg = exp.chain_config()?;
    let dir = &exp.out;
    ensure_dir(dir)?;
    exp.echo(dir)?;
    let mut manifest = Manifest::new("run-micro");
    let start = Instant::now();
    let mut snaps = Vec::new();
    let steps = run_micro_snapshots(&cfg, exp.initial_state(&cfg), &exp.snapshots, |s| {
        let path = dir.join(format!("micro_{}.csv", time_tag(s.t)));
        write_checkpoint(&path, &cfg, s)?;
        manifest.add(dir, &path, CHECKPOINT_SCHEMA);
        snaps.push(MicroSnapshot {
            t: s.t,
            energy: total_energy(&cfg, s),
            checkpoint: Some(path),
        });
        Ok(())
    })?;
    let report = MicroRunReport {
        n: cfg.n,
        dt: cfg.dt,
        steps,
        runtime_s: start.elapsed().as_secs_f64(),
        snapshots: snaps,
    };
    let rp = dir.join("run_micro.json");
    write_json(&rp, &report)?;
    manifest.add(dir, &rp, "micro-run-report");
    manifest.write(dir)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityError {
    pub quantity: String,
    pub linf: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotReport {
    pub t: f64,
    pub energy: f64,
    pub errors: Vec<QuantityError>,
    pub max_abs_t_conv_exact: f64,
    pub max_abs_t_conv_exact_interior: f64,
    pub max_abs_t_int_exact: f64,
    /// `None` when the prescription is infeasible at this snapshot.
    pub kappa_sq: Option<f64>,
    /// Prescription energy budget relative to the run energy; negative when
    /// the quantized positions alone carry more energy than the chain.
    pub energy_budget_rel: Option<f64>,
    pub wave_front: Option<f64>,
    /// Quantities that could not be formed, with the reason.
    pub skipped: Vec<String>,
}

impl SnapshotReport {
    pub fn error(&self, quantity: &str) -> Option<&QuantityError> {
        self.errors.iter().find(|e| e.quantity == quantity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub command: String,
    pub n: usize,
    pub b: usize,
    pub order: usize,
    pub ic: InitialCondition,
    pub dt: f64,
    pub steps: u64,
    pub runtime_s: f64,
    pub snapshots: Vec<SnapshotReport>,
}

/// Exact and approximate node series for one quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    pub quantity: &'static str,
    pub exact: MesoField,
    pub approx: MesoField,
}

impl PairedSeries {
    pub fn abs_err(&self) -> Vec<f64> {
        self.exact
            .values
            .iter()
            .zip(&self.approx.values)
            .map(|(a, b)| (a - b).abs())
            .collect()
    }
}

/// Everything computed at one snapshot.
#[derive(Debug, Clone)]
pub struct SnapshotData {
    pub report: SnapshotReport,
    pub series: Vec<PairedSeries>,
    pub t_conv_exact: MesoField,
}

impl SnapshotData {
    pub fn series(&self, quantity: &str) -> Option<&PairedSeries> {
        self.series.iter().find(|s| s.quantity == quantity)
    }
}

/// Interior (or all) node indices used for error norms.
fn metric_nodes(field: &MesoField, exclude_boundary: bool) -> Vec<usize> {
    if exclude_boundary {
        field.interior().collect()
    } else {
        (0..field.values.len()).collect()
    }
}

fn norms(err: &[f64], nodes: &[usize], l_eta: f64) -> (f64, f64) {
    let linf = nodes.iter().map(|&i| err[i]).fold(0.0, f64::max);
    let l2 = (nodes.iter().map(|&i| err[i] * err[i]).sum::<f64>() * l_eta).sqrt();
    (linf, l2)
}

/// Rightmost particle position with `|v| > tol`.
pub fn wave_front(state: &ChainState, tol: f64) -> Option<f64> {
    state
        .q
        .iter()
        .zip(&state.v)
        .rev()
        .find(|(_, v)| v.abs() > tol)
        .map(|(q, _)| *q)
}

/// Kernel-weighted velocity with zero in empty windows.
fn velocity_or_zero(rho: &MesoField, mom: &MesoField) -> MesoField {
    MesoField {
        values: rho
            .values
            .iter()
            .zip(&mom.values)
            .map(|(r, m)| if *r > 0.0 { m / r } else { 0.0 })
            .collect(),
        quantity: Quantity::Velocity,
        ..rho.clone()
    }
}

/// Compares exact averaged quantities of `state` against the order-`n`
/// closure built from its mesh averages.
pub fn evaluate_snapshot(
    exp: &ExperimentConfig,
    cfg: &ChainConfig,
    state: &ChainState,
    energy_ref: f64,
) -> Result<SnapshotData> {
    let window = exp.window_fn()?;
    let mesh = exp.mesh()?;
    let grid = exp.fine_grid(cfg.n)?;
    let mut skipped = Vec::new();

    let rho = average_density(cfg, state, &window, &mesh)?;
    let mom = average_momentum(cfg, state, &window, &mesh)?;
    let vbar = velocity_or_zero(&rho, &mom);
    if rho.values.contains(&0.0) {
        skipped.push("empty cells: velocity set to zero there".to_string());
    }
    let t_conv = convective_stress_exact(cfg, state, &window, &mesh)?;
    let t_int = interaction_stress_exact(cfg, state, &window, &mesh)?;
    let jac = jacobian_at_mesh(cfg, state, &window, &mesh)?;
    let v_exact = MesoField {
        values: velocity_at(state, &mesh.centers()),
        quantity: Quantity::Velocity,
        ..vbar.clone()
    };

    let mut series = Vec::new();
    let centers = mesh.centers();
    let op = ConvOperator::new(window, grid)?;
    let rho_f = FineField::from_mesh(&rho, grid)?;
    let mom_f = FineField::from_mesh(&mom, grid)?;
    let j_n = reconstruct_j(&op, &rho_f, exp.order, cfg)?;
    let at_nodes = |f: &FineField, q: Quantity| MesoField {
        values: centers.iter().map(|&x| f.at(x)).collect(),
        quantity: q,
        ..rho.clone()
    };
    let j_approx = if exp.order == 0 {
        MesoField {
            values: rho.values.iter().map(|r| r * cfg.l / cfg.m).collect(),
            quantity: Quantity::Jacobian,
            ..rho.clone()
        }
    } else {
        at_nodes(&j_n, Quantity::Jacobian)
    };
    series.push(PairedSeries {
        quantity: "jacobian",
        exact: jac.field.clone(),
        approx: j_approx,
    });

    let v_n = match reconstruct_v(&op, &rho_f, &mom_f, exp.order, cfg) {
        Ok(v) => Some(v),
        Err(e) => {
            skipped.push(format!("velocity reconstruction: {e}"));
            None
        }
    };
    let v_approx = match (&v_n, exp.order) {
        (_, 0) => Some(vbar.clone()),
        (Some(v), _) => Some(at_nodes(v, Quantity::Velocity)),
        (None, _) => None,
    };
    if let Some(va) = v_approx {
        series.push(PairedSeries {
            quantity: "velocity",
            exact: v_exact,
            approx: va,
        });
    }

    if let Some(v_n) = &v_n {
        match stress_order_n(&j_n, v_n, &vbar, &window, cfg) {
            Ok((tc_n, ti_n)) => {
                series.push(PairedSeries {
                    quantity: "stress_int",
                    exact: t_int.clone(),
                    approx: ti_n,
                });
                series.push(PairedSeries {
                    quantity: "stress_conv",
                    exact: t_conv.clone(),
                    approx: tc_n,
                });
            }
            Err(e) => skipped.push(format!("order-{} stresses: {e}", exp.order)),
        }
    }

    let (kappa_sq, energy_budget_rel) = match prescribe_positions(&rho, cfg) {
        Ok(pos) => {
            let rel = energy_budget(&vbar, &pos, energy_ref, cfg) / energy_ref.abs();
            match prescribe_velocities(&vbar, &pos, energy_ref, &window, cfg) {
                Ok(pre) => (Some(pre.kappa_sq), Some(rel)),
                Err(e) => {
                    skipped.push(format!("prescription: {e}"));
                    (None, Some(rel))
                }
            }
        }
        Err(e) => {
            skipped.push(format!("prescription: {e}"));
            (None, None)
        }
    };

    let l_eta = mesh.l_eta();
    let errors = series
        .iter()
        .map(|s| {
            let nodes = metric_nodes(&s.exact, exp.exclude_boundary);
            let (linf, l2) = norms(&s.abs_err(), &nodes, l_eta);
            QuantityError {
                quantity: s.quantity.to_string(),
                linf,
                l2,
            }
        })
        .collect();
    let interior: Vec<usize> = t_conv.interior().collect();
    let max_abs = |f: &MesoField, nodes: &[usize]| {
        nodes.iter().map(|&i| f.values[i].abs()).fold(0.0, f64::max)
    };
    let all: Vec<usize> = (0..mesh.b).collect();
    let report = SnapshotReport {
        t: state.t,
        energy: total_energy(cfg, state),
        errors,
        max_abs_t_conv_exact: max_abs(&t_conv, &all),
        max_abs_t_conv_exact_interior: max_abs(&t_conv, &interior),
        max_abs_t_int_exact: max_abs(&t_int, &all),
        kappa_sq,
        energy_budget_rel,
        wave_front: wave_front(state, exp.front_tol),
        skipped,
    };
    Ok(SnapshotData {
        report,
        series,
        t_conv_exact: t_conv,
    })
}

fn write_snapshot_files(dir: &Path, data: &SnapshotData, manifest: &mut Manifest) -> Result<()> {
    let tag = time_tag(data.report.t);
    for s in &data.series {
        let path = dir.join(format!("{tag}_{}.csv", s.quantity));
        write_paired(&path, &s.exact, &s.approx)?;
        manifest.add(dir, &path, PAIRED_SCHEMA);
    }
    let path = dir.join(format!("{tag}_stress_conv_exact.csv"));
    write_meso_field(&path, &data.t_conv_exact)?;
    manifest.add(dir, &path, MESO_FIELD_SCHEMA);
    Ok(())
}

/// Runs the configured experiment and compares exact and closure stresses at
/// every snapshot. Returns the report and the per-snapshot data.
pub fn compare_closure(
    exp: &ExperimentConfig,
    write: bool,
) -> Result<(ComparisonReport, Vec<SnapshotData>)> {
    exp.validate()?;
    let cfg = exp.chain_config()?;
    let dir = &exp.out;
    let mut manifest = Manifest::new("compare-closure");
    if write {
        ensure_dir(dir)?;
        exp.echo(dir)?;
    }
    let start = Instant::now();
    let s0 = exp.initial_state(&cfg);
    let e0 = total_energy(&cfg, &s0);
    let mut data = Vec::new();
    let steps = run_micro_snapshots(&cfg, s0, &exp.snapshots, |s| {
        let d = evaluate_snapshot(exp, &cfg, s, e0)?;
        if write {
            write_snapshot_files(dir, &d, &mut manifest)?;
            if exp.write_checkpoints {
                let path = dir.join(format!("micro_{}.csv", time_tag(s.t)));
                write_checkpoint(&path, &cfg, s)?;
                manifest.add(dir, &path, CHECKPOINT_SCHEMA);
            }
        }
        log::info!("t = {:.4}: {:?}", s.t, d.report.errors);
        data.push(d);
        Ok(())
    })?;
    let report = ComparisonReport {
        command: "compare-closure".into(),
        n: cfg.n,
        b: exp.b,
        order: exp.order,
        ic: exp.ic,
        dt: cfg.dt,
        steps,
        runtime_s: start.elapsed().as_secs_f64(),
        snapshots: data.iter().map(|d| d.report.clone()).collect(),
    };
    if write {
        let rp = dir.join("report.json");
        write_json(&rp, &report)?;
        manifest.add(dir, &rp, "comparison-report");
        manifest.write(dir)?;
    }
    Ok((report, data))
}

pub fn cmd_compare_closure(exp: &ExperimentConfig) -> Result<ComparisonReport> {
    compare_closure(exp, true).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub jacobian_linf: f64,
    pub stress_int_linf: f64,
    pub report: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub b: usize,
    pub t: f64,
    pub points: Vec<SweepPoint>,
}

/// Interior L-infinity errors of the jacobian and interaction stress at
/// `sweep_time` for each particle count, mesh fixed.
pub fn cmd_sweep_n(exp: &ExperimentConfig, write: bool) -> Result<SweepReport> {
    exp.validate()?;
    if exp.n_list.is_empty() {
        return Err(Error::Config("n_list is empty".into()));
    }
    let points: Result<Vec<SweepPoint>> = exp
        .n_list
        .par_iter()
        .map(|&n| {
            let mut e = exp.clone();
            e.n = n;
            e.snapshots = vec![exp.sweep_time];
            e.out = exp.out.join(format!("n{n}"));
            e.write_checkpoints = false;
            let (report, _) = compare_closure(&e, write)?;
            let s = &report.snapshots[0];
            let get = |q: &str| {
                s.error(q).map(|x| x.linf).ok_or_else(|| {
                    Error::Config(format!("{q} unavailable at N = {n}: {:?}", s.skipped))
                })
            };
            Ok(SweepPoint {
                n,
                jacobian_linf: get("jacobian")?,
                stress_int_linf: get("stress_int")?,
                report,
            })
        })
        .collect();
    let report = SweepReport {
        b: exp.b,
        t: exp.sweep_time,
        points: points?,
    };
    if write {
        ensure_dir(&exp.out)?;
        exp.echo(&exp.out)?;
        let mut manifest = Manifest::new("sweep-n");
        let rp = exp.out.join("sweep.json");
        write_json(&rp, &report)?;
        manifest.add(&exp.out, &rp, "sweep-report");
        for p in &report.points {
            manifest.add(
                &exp.out,
                &exp.out.join(format!("n{}", p.n)).join("manifest.json"),
                "manifest",
            );
        }
        manifest.write(&exp.out)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionErrors {
    pub t: f64,
    pub wave_front: Option<f64>,
    /// Interior nodes whose window lies entirely right of the front.
    pub unperturbed_t_int_linf: Option<f64>,
    pub perturbed_t_int_linf: Option<f64>,
    pub max_abs_t_conv_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatoryReport {
    pub comparison: ComparisonReport,
    pub regions: Vec<RegionErrors>,
}

/// Splits the interaction-stress error at the detected wave front.
pub fn region_errors(exp: &ExperimentConfig, d: &SnapshotData) -> Result<RegionErrors> {
    let window = exp.window_fn()?;
    let r = window.radius();
    let front = d.report.wave_front;
    let (mut un, mut pe) = (None::<f64>, None::<f64>);
    if let Some(s) = d.series("stress_int") {
        let err = s.abs_err();
        for beta in metric_nodes(&s.exact, exp.exclude_boundary) {
            let x = s.exact.mesh.center(beta);
            let slot = match front {
                Some(f) if x - r <= f => &mut pe,
                _ => &mut un,
            };
            *slot = Some(slot.unwrap_or(0.0).max(err[beta]));
        }
    }
    Ok(RegionErrors {
        t: d.report.t,
        wave_front: front,
        unperturbed_t_int_linf: un,
        perturbed_t_int_linf: pe,
        max_abs_t_conv_exact: d.report.max_abs_t_conv_exact,
    })
}

/// High-frequency oscillation example: the configured run with the
/// oscillatory initial velocity.
pub fn cmd_oscillatory(exp: &ExperimentConfig, write: bool) -> Result<OscillatoryReport> {
    let mut e = exp.clone();
    e.ic = InitialCondition::Oscillatory;
    let (comparison, data) = compare_closure(&e, write)?;
    let regions = data
        .iter()
        .map(|d| region_errors(&e, d))
        .collect::<Result<Vec<_>>>()?;
    let report = OscillatoryReport {
        comparison,
        regions,
    };
    if write {
        write_json(&e.out.join("oscillatory.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MesoRunReport {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub runtime_s: f64,
}

/// Averages the initial chain onto the mesh.
pub fn initial_meso_state(exp: &ExperimentConfig) -> Result<MesoState> {
    let cfg = exp.chain_config()?;
    let s0 = exp.initial_state(&cfg);
    let window = exp.window_fn()?;
    let mesh = exp.mesh()?;
    MesoState::new(
        average_density(&cfg, &s0, &window, &mesh)?,
        average_momentum(&cfg, &s0, &window, &mesh)?,
        0.0,
    )
}

pub fn meso_closure(exp: &ExperimentConfig) -> Result<Box<dyn StressClosure + Send + Sync>> {
    let cfg = exp.chain_config()?;
    Ok(match exp.meso_closure {
        MesoClosureKind::Nonlocal => Box::new(NonlocalZero {
            window: exp.window_fn()?,
            grid: exp.fine_grid(cfg.n)?,
            cfg,
            convective_energy: None,
        }),
        MesoClosureKind::LocalEos => Box::new(LocalEos { cfg }),
    })
}

/// Runs the closed mesoscale model from the averaged initial condition.
pub fn run_meso(exp: &ExperimentConfig) -> Result<Vec<MesoState>> {
    exp.validate()?;
    let cfg = exp.chain_config()?;
    let s0 = initial_meso_state(exp)?;
    let closure = meso_closure(exp)?;
    run_closed(
        &s0,
        &exp.snapshots,
        closure.as_ref(),
        &cfg,
        MesoRunOptions { cfl: exp.meso_cfl },
    )
}

pub fn cmd_run_meso(exp: &ExperimentConfig) -> Result<MesoRunReport> {
    let start = Instant::now();
    let states = run_meso(exp)?;
    let dir = &exp.out;
    ensure_dir(dir)?;
    exp.echo(dir)?;
    let mut manifest = Manifest::new("run-meso");
    for s in &states {
        let tag = format!("meso_{}", time_tag(s.t));
        s.write(dir, &tag)?;
        for q in ["density", "momentum", "velocity"] {
            manifest.add(dir, &dir.join(format!("{tag}_{q}.csv")), MESO_FIELD_SCHEMA);
        }
    }
    let report = MesoRunReport {
        times: states.iter().map(|s| s.t).collect(),
        mass: states.iter().map(|s| s.mass()).collect(),
        runtime_s: start.elapsed().as_secs_f64(),
    };
    let rp = dir.join("run_meso.json");
    write_json(&rp, &report)?;
    manifest.add(dir, &rp, "meso-run-report");
    manifest.write(dir)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub t: f64,
    pub order: usize,
    pub residuals_density: Vec<f64>,
    pub files: Vec<PathBuf>,
}

/// Writes `J_n` and `v_n` on the fine grid for one chain state.
pub fn reconstruct_state(
    exp: &ExperimentConfig,
    cfg: &ChainConfig,
    state: &ChainState,
    dir: &Path,
    manifest: &mut Manifest,
) -> Result<ReconstructionReport> {
    let window = exp.window_fn()?;
    let mesh = exp.mesh()?;
    let grid = exp.fine_grid(cfg.n)?;
    let op = ConvOperator::new(window, grid)?;
    let rho = FineField::from_mesh(&average_density(cfg, state, &window, &mesh)?, grid)?;
    let mom = FineField::from_mesh(&average_momentum(cfg, state, &window, &mesh)?, grid)?;
    let tag = time_tag(state.t);
    let mut files = Vec::new();
    let j = reconstruct_j(&op, &rho, exp.order, cfg)?;
    let jp = dir.join(format!("{tag}_j{}.csv", exp.order));
    j.write_csv(&jp)?;
    manifest.add(dir, &jp, FINE_FIELD_SCHEMA);
    files.push(jp);
    match reconstruct_v(&op, &rho, &mom, exp.order, cfg) {
        Ok(v) => {
            let vp = dir.join(format!("{tag}_v{}.csv", exp.order));
            v.write_csv(&vp)?;
            manifest.add(dir, &vp, FINE_FIELD_SCHEMA);
            files.push(vp);
        }
        Err(e) => log::warn!("t = {}: {e}", state.t),
    }
    Ok(ReconstructionReport {
        t: state.t,
        order: exp.order,
        residuals_density: residual_path(&op, &rho, exp.order)?,
        files,
    })
}

/// Reconstructs from a checkpoint when given, else from a fresh run at
/// each snapshot.
pub fn cmd_reconstruct(
    exp: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<Vec<ReconstructionReport>> {
    exp.validate()?;
    let dir = &exp.out;
    ensure_dir(dir)?;
    exp.echo(dir)?;
    let mut manifest = Manifest::new("reconstruct");
    let mut out = Vec::new();
    match checkpoint {
        Some(path) => {
            let (cfg, state) = read_checkpoint(path)?;
            out.push(reconstruct_state(exp, &cfg, &state, dir, &mut manifest)?);
        }
        None => {
            let cfg = exp.chain_config()?;
            run_micro_snapshots(&cfg, exp.initial_state(&cfg), &exp.snapshots, |s| {
                out.push(reconstruct_state(exp, &cfg, s, dir, &mut manifest)?);
                Ok(())
            })?;
        }
    }
    let rp = dir.join("reconstruct.json");
    write_json(&rp, &out)?;
    manifest.add(dir, &rp, "reconstruction-report");
    manifest.write(dir)?;
    Ok(out)
}
