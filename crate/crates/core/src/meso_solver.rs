//! Explicit solver for the closed mass and momentum balance on the mesh:
//! `rho_t + m_x = 0`, `m_t + (m^2 / rho - T)_x = 0` with a pluggable stress `T`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::averaging::{MesoField, Quantity};
use crate::chain::ChainConfig;
use crate::closure::{
    prescribe_positions, prescribe_velocities, stress_conv_zero, stress_int_zero, StressIntMode,
};
use crate::deconv::FineGrid;
use crate::error::{Error, Result};
use crate::io::write_meso_field;
use crate::window::{MesoMesh, WindowFunction};

pub const CFL_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct MesoState {
    pub rho: MesoField,
    pub mom: MesoField,
    pub t: f64,
}

impl MesoState {
    pub fn new(rho: MesoField, mom: MesoField, t: f64) -> Result<Self> {
        if rho.mesh != mom.mesh {
            return Err(Error::param("mom", "mesh differs from density"));
        }
        if let Some(beta) = rho.values.iter().position(|&r| !(r > 0.0)) {
            return Err(Error::NegativeDensity { beta, t });
        }
        Ok(Self { rho, mom, t })
    }

    pub fn mesh(&self) -> MesoMesh {
        self.rho.mesh
    }

    pub fn velocity(&self) -> Vec<f64> {
        self.mom
            .values
            .iter()
            .zip(&self.rho.values)
            .map(|(m, r)| m / r)
            .collect()
    }

    /// `sum rho_beta L_eta`.
    pub fn mass(&self) -> f64 {
        self.rho.values.iter().sum::<f64>() * self.mesh().l_eta()
    }

    /// Writes `{tag}_density.csv`, `{tag}_momentum.csv` and `{tag}_velocity.csv`.
    pub fn write(&self, dir: &Path, tag: &str) -> Result<()> {
        let vel = MesoField {
            values: self.velocity(),
            quantity: Quantity::Velocity,
            ..self.rho.clone()
        };
        for f in [&self.rho, &self.mom, &vel] {
            write_meso_field(&dir.join(format!("{tag}_{}.csv", f.quantity.as_str())), f)?;
        }
        Ok(())
    }
}

/// Stress at the mesh nodes as a function of the mesoscale state.
pub trait StressClosure {
    fn stress(&self, state: &MesoState) -> Result<Vec<f64>>;
}

/// Zero-order nonlocal interaction stress, optionally plus the prescribed
/// convective stress.
#[derive(Debug, Clone)]
pub struct NonlocalZero {
    pub cfg: ChainConfig,
    pub window: WindowFunction,
    pub grid: FineGrid,
    /// Reference energy for the convective term; `None` drops it.
    pub convective_energy: Option<f64>,
}

impl StressClosure for NonlocalZero {
    fn stress(&self, state: &MesoState) -> Result<Vec<f64>> {
        let mut t = stress_int_zero(
            &state.rho,
            &self.window,
            &self.cfg,
            StressIntMode::Integral,
            &self.grid,
        )?
        .values;
        if let Some(e) = self.convective_energy {
            let vel = MesoField {
                values: state.velocity(),
                quantity: Quantity::Velocity,
                ..state.rho.clone()
            };
            let pos = prescribe_positions(&state.rho, &self.cfg)?;
            let pre = prescribe_velocities(&vel, &pos, e, &self.window, &self.cfg)?;
            let tc = stress_conv_zero(&pre, &self.window)?;
            t.iter_mut().zip(tc.values).for_each(|(a, b)| *a += b);
        }
        Ok(t)
    }
}

/// Pointwise `T = -U'(M / rho)`.
#[derive(Debug, Clone)]
pub struct LocalEos {
    pub cfg: ChainConfig,
}

impl StressClosure for LocalEos {
    fn stress(&self, state: &MesoState) -> Result<Vec<f64>> {
        let pot = &self.cfg.potential;
        Ok(state
            .rho
            .values
            .iter()
            .map(|&r| -pot.force_unchecked(self.cfg.m / r))
            .collect())
    }
}

/// Sound speed `c_s^2 = |U''(M / rho)| M / rho^2`.
pub fn sound_speed(rho: f64, cfg: &ChainConfig) -> f64 {
    (cfg.potential.stiffness(cfg.m / rho) * cfg.m / (rho * rho)).sqrt()
}

/// Largest `(|v| + c_s)` over the cells.
pub fn max_signal_speed(state: &MesoState, cfg: &ChainConfig) -> f64 {
    state
        .rho
        .values
        .iter()
        .zip(&state.mom.values)
        .map(|(&r, &m)| (m / r).abs() + sound_speed(r, cfg))
        .fold(0.0, f64::max)
}

/// One Lax-Friedrichs step with mirrored ghost cells (`rho` even, `m` odd,
/// stress even) standing in for the walls.
pub fn step_meso(
    state: &MesoState,
    closure: &dyn StressClosure,
    dt: f64,
    cfg: &ChainConfig,
) -> Result<MesoState> {
    let mesh = state.mesh();
    let dx = mesh.l_eta();
    let cfl = dt * max_signal_speed(state, cfg) / dx;
    if !(cfl <= CFL_LIMIT) {
        return Err(Error::Cfl {
            cfl,
            limit: CFL_LIMIT,
        });
    }
    let tstress = closure.stress(state)?;
    let b = mesh.b;
    let rho = &state.rho.values;
    let mom = &state.mom.values;
    let flux_m = |i: usize| mom[i] * mom[i] / rho[i] - tstress[i];
    // ghost-extended accessors
    let r_at = |i: isize| rho[i.clamp(0, b as isize - 1) as usize];
    let m_at = |i: isize| {
        if i < 0 || i >= b as isize {
            -mom[i.clamp(0, b as isize - 1) as usize]
        } else {
            mom[i as usize]
        }
    };
    let f_at = |i: isize| flux_m(i.clamp(0, b as isize - 1) as usize);
    let k = dt / (2.0 * dx);
    let mut new_rho = Vec::with_capacity(b);
    let mut new_mom = Vec::with_capacity(b);
    for i in 0..b as isize {
        let r = 0.5 * (r_at(i - 1) + r_at(i + 1)) - k * (m_at(i + 1) - m_at(i - 1));
        let m = 0.5 * (m_at(i - 1) + m_at(i + 1)) - k * (f_at(i + 1) - f_at(i - 1));
        new_rho.push(r);
        new_mom.push(m);
    }
    let t = state.t + dt;
    if let Some(beta) = new_rho.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::NegativeDensity { beta, t });
    }
    Ok(MesoState {
        rho: MesoField {
            values: new_rho,
            ..state.rho.clone()
        },
        mom: MesoField {
            values: new_mom,
            ..state.mom.clone()
        },
        t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesoRunOptions {
    /// Target CFL number for the adaptive step.
    pub cfl: f64,
}

impl Default for MesoRunOptions {
    fn default() -> Self {
        Self { cfl: 0.5 }
    }
}

/// Steps from `initial` through each time in `snapshots` (sorted, `>= t0`),
/// returning the state at each; steps are shortened to land on snapshot times.
pub fn run_closed(
    initial: &MesoState,
    snapshots: &[f64],
    closure: &dyn StressClosure,
    cfg: &ChainConfig,
    opts: MesoRunOptions,
) -> Result<Vec<MesoState>> {
    if !(opts.cfl > 0.0 && opts.cfl <= CFL_LIMIT) {
        return Err(Error::param("cfl", format!("must lie in (0, {CFL_LIMIT}]")));
    }
    if snapshots.windows(2).any(|w| w[1] < w[0])
        || snapshots.first().is_some_and(|&t| t < initial.t)
    {
        return Err(Error::param(
            "snapshots",
            "must be sorted and not before the initial time",
        ));
    }
    let dx = initial.mesh().l_eta();
    let mut out = Vec::with_capacity(snapshots.len());
    let mut cur = initial.clone();
    for &ts in snapshots {
        while cur.t < ts {
            let speed = max_signal_speed(&cur, cfg);
            let mut dt = if speed > 0.0 {
                opts.cfl * dx / speed
            } else {
                ts - cur.t
            };
            let last = cur.t + dt >= ts - 1e-12 * ts.abs().max(1.0);
            if last {
                dt = ts - cur.t;
            }
            cur = step_meso(&cur, closure, dt, cfg)?;
            if last {
                cur.t = ts;
            }
        }
        out.push(cur.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::PowerLawPotential;
    use approx::assert_relative_eq;

    fn setup(b: usize) -> (ChainConfig, WindowFunction, MesoMesh) {
        let pot = PowerLawPotential::new(100.0, 2.0, 1.0).unwrap();
        let cfg = ChainConfig::new(10_000, 1.0, 1.0, pot).unwrap();
        let w = WindowFunction::boxcar(1.0 / b as f64, 1.0).unwrap();
        (cfg, w, MesoMesh::new(b, 1.0).unwrap())
    }

    fn state(w: &WindowFunction, mesh: MesoMesh, rho: Vec<f64>, mom: Vec<f64>) -> MesoState {
        MesoState::new(
            MesoField::new(mesh, w, Quantity::Density, rho).unwrap(),
            MesoField::new(mesh, w, Quantity::Momentum, mom).unwrap(),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn sound_speed_at_rest_density() {
        let (cfg, _, _) = setup(10);
        assert_relative_eq!(sound_speed(1.0, &cfg), 200f64.sqrt(), max_relative = 1e-12);
        assert_eq!(sound_speed(0.5, &cfg), 0.0);
    }

    #[test]
    fn uniform_rest_is_a_fixed_point() {
        let (cfg, w, mesh) = setup(20);
        let s0 = state(&w, mesh, vec![1.0; 20], vec![0.0; 20]);
        let closure = NonlocalZero {
            cfg: cfg.clone(),
            window: w,
            grid: FineGrid::new(1024, 1.0).unwrap(),
            convective_energy: None,
        };
        let out = run_closed(&s0, &[0.01], &closure, &cfg, MesoRunOptions::default()).unwrap();
        assert_eq!(out[0].rho.values, s0.rho.values);
        assert_eq!(out[0].mom.values, s0.mom.values);
        assert_eq!(out[0].t, 0.01);
    }

    #[test]
    fn mass_is_conserved_and_cfl_enforced() {
        let (cfg, w, mesh) = setup(20);
        let rho: Vec<f64> = (0..20)
            .map(|i| 1.05 + 0.05 * (i as f64 * 0.7).sin())
            .collect();
        let mom: Vec<f64> = (0..20).map(|i| 0.1 * (i as f64 * 0.3).cos()).collect();
        let s0 = state(&w, mesh, rho, mom);
        let closure = LocalEos { cfg: cfg.clone() };
        let dt = 0.4 * mesh.l_eta() / max_signal_speed(&s0, &cfg);
        let mut s = s0.clone();
        for _ in 0..50 {
            s = step_meso(&s, &closure, dt, &cfg).unwrap();
        }
        assert_relative_eq!(s.mass(), s0.mass(), max_relative = 1e-14);
        assert!(matches!(
            step_meso(&s0, &closure, 10.0 * dt, &cfg),
            Err(Error::Cfl { .. })
        ));
    }

    #[test]
    fn empty_snapshot_list_returns_nothing() {
        let (cfg, w, mesh) = setup(10);
        let s0 = state(&w, mesh, vec![1.0; 10], vec![0.0; 10]);
        let out = run_closed(
            &s0,
            &[0.0],
            &LocalEos { cfg: cfg.clone() },
            &cfg,
            MesoRunOptions::default(),
        )
        .unwrap();
        assert_eq!(out, vec![s0]);
    }
}
