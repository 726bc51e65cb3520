//! Microscale particle chain: finite-range power-law pair potential, nearest
//! neighbour forces with stationary wall particles, and a velocity Verlet
//! integrator for `(M/N) dv_j/dt = f_j`.
//!
//! Lengths are physical (the chain lives on `(0, L)`), while the potential is
//! evaluated at the scaled argument `gap / eps = gap * N`, so a uniform chain
//! with spacing `h = L/N` sits at `xi = L`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite-range repulsive potential
///
/// ```text
/// U(xi) = c_r * ( xi^(1-p) x* / (1-p) - xi x*^(1-p) + p/(p-1) x*^(2-p) ),  0 < xi <= x*
/// U(xi) = 0,                                                               xi > x*
/// ```
///
/// `U` is negative inside the range and `U'(xi) = c_r (x* xi^-p - x*^(1-p)) >= 0`;
/// both vanish at the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PotentialParams", into = "PotentialParams")]
pub struct PowerLawPotential {
    c_r: f64,
    p: f64,
    x_star: f64,
    // x*^(1-p), cached because it sits in the innermost force loop
    x_star_pow: f64,
    int_p: Option<i32>,
}

#[derive(Serialize, Deserialize)]
struct PotentialParams {
    c_r: f64,
    p: f64,
    x_star: f64,
}

impl From<PotentialParams> for PowerLawPotential {
    fn from(v: PotentialParams) -> Self {
        Self::new_unchecked(v.c_r, v.p, v.x_star)
    }
}

impl From<PowerLawPotential> for PotentialParams {
    fn from(v: PowerLawPotential) -> Self {
        PotentialParams {
            c_r: v.c_r,
            p: v.p,
            x_star: v.x_star,
        }
    }
}

impl PowerLawPotential {
    pub fn new(c_r: f64, p: f64, x_star: f64) -> Result<Self> {
        if !(c_r > 0.0) || !c_r.is_finite() {
            return Err(Error::param("c_r", format!("must be positive, got {c_r}")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::param("p", format!("must exceed 1, got {p}")));
        }
        if !(x_star > 0.0) || !x_star.is_finite() {
            return Err(Error::param(
                "x_star",
                format!("must be positive, got {x_star}"),
            ));
        }
        Ok(Self::new_unchecked(c_r, p, x_star))
    }

    fn new_unchecked(c_r: f64, p: f64, x_star: f64) -> Self {
        let int_p = if p.fract() == 0.0 && p <= 16.0 {
            Some(p as i32)
        } else {
            None
        };
        Self {
            c_r,
            p,
            x_star,
            x_star_pow: x_star.powf(1.0 - p),
            int_p,
        }
    }

    pub fn c_r(&self) -> f64 {
        self.c_r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn x_star(&self) -> f64 {
        self.x_star
    }

    /// Same shape with a different stiffness (used for the walls).
    pub fn with_stiffness(&self, c_r: f64) -> Result<Self> {
        Self::new(c_r, self.p, self.x_star)
    }

    #[inline]
    fn pow_neg_p(&self, xi: f64) -> f64 {
        match self.int_p {
            Some(k) => 1.0 / xi.powi(k),
            None => xi.powf(-self.p),
        }
    }

    /// `U(xi)`.
    pub fn energy(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::NonPositiveArgument(xi));
        }
        Ok(self.energy_unchecked(xi))
    }

    #[inline]
    pub(crate) fn energy_unchecked(&self, xi: f64) -> f64 {
        if xi > self.x_star {
            return 0.0;
        }
        let p = self.p;
        let x = self.x_star;
        let a = xi * self.pow_neg_p(xi) * x / (1.0 - p);
        let b = xi * self.x_star_pow;
        let c = p / (p - 1.0) * x * self.x_star_pow;
        self.c_r * (a - b + c)
    }

    /// `U'(xi)`, the (non-negative) repulsive force magnitude.
    pub fn force(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::NonPositiveArgument(xi));
        }
        Ok(self.force_unchecked(xi))
    }

    #[inline]
    pub(crate) fn force_unchecked(&self, xi: f64) -> f64 {
        if xi >= self.x_star {
            0.0
        } else {
            self.c_r * (self.x_star * self.pow_neg_p(xi) - self.x_star_pow)
        }
    }

    /// `|U''(xi)| = c_r p x* xi^(-p-1)` up to and including the cutoff (the
    /// compressive side), zero beyond it.
    pub fn stiffness(&self, xi: f64) -> f64 {
        if !(xi > 0.0) {
            return f64::INFINITY;
        }
        if xi > self.x_star {
            0.0
        } else {
            self.c_r * self.p * self.x_star * self.pow_neg_p(xi) / xi
        }
    }
}

/// Static parameters of an `n`-particle chain on `(0, l)` with total mass `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n: usize,
    pub l: f64,
    pub m: f64,
    pub potential: PowerLawPotential,
    pub wall_stiffness: f64,
    /// Place the wall particles at `-h/2` and `l + h/2` instead of `0` and `l`,
    /// which makes the uniform rest lattice an exact equilibrium.
    #[serde(default)]
    pub wall_offset_half_h: bool,
    pub dt: f64,
}

impl ChainConfig {
    /// Walls at `0` and `l` with the bond stiffness, `dt` from [`Self::default_dt`].
    pub fn new(n: usize, l: f64, m: f64, potential: PowerLawPotential) -> Result<Self> {
        let mut cfg = ChainConfig {
            n,
            l,
            m,
            potential,
            wall_stiffness: potential.c_r(),
            wall_offset_half_h: false,
            dt: 0.0,
        };
        cfg.dt = cfg.default_dt();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_wall_stiffness(mut self, c_w: f64) -> Result<Self> {
        self.wall_stiffness = c_w;
        self.dt = self.default_dt();
        self.validate()?;
        Ok(self)
    }

    pub fn with_wall_offset(mut self, offset: bool) -> Self {
        self.wall_offset_half_h = offset;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param(
                "n",
                format!("need at least 2 particles, got {}", self.n),
            ));
        }
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(Error::param(
                "l",
                format!("must be positive, got {}", self.l),
            ));
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::param(
                "m",
                format!("must be positive, got {}", self.m),
            ));
        }
        if !(self.wall_stiffness > 0.0) {
            return Err(Error::param(
                "wall_stiffness",
                format!("must be positive, got {}", self.wall_stiffness),
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::param(
                "dt",
                format!("must be positive, got {}", self.dt),
            ));
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Microscale step `l / n`.
    pub fn h(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn particle_mass(&self) -> f64 {
        self.m / self.n as f64
    }

    pub fn wall_potential(&self) -> PowerLawPotential {
        PowerLawPotential::new_unchecked(
            self.wall_stiffness,
            self.potential.p(),
            self.potential.x_star(),
        )
    }

    pub fn wall_positions(&self) -> (f64, f64) {
        if self.wall_offset_half_h {
            let hh = 0.5 * self.h();
            (-hh, self.l + hh)
        } else {
            (0.0, self.l)
        }
    }

    /// `n * sqrt(2 c p / m)` with `c` the stiffer of bond and wall constants.
    pub fn omega_max(&self) -> f64 {
        let c = self.potential.c_r().max(self.wall_stiffness);
        self.n as f64 * (2.0 * c * self.potential.p() / self.m).sqrt()
    }

    pub fn default_dt(&self) -> f64 {
        0.05 / self.omega_max()
    }

    /// Lattice point `X_j = (j - 1/2) h` for the zero-based index `j`.
    pub fn lattice_point(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }
}

/// Positions and velocities at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl ChainState {
    /// Builds a state and checks that positions are finite and strictly increasing.
    pub fn new(t: f64, q: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::param(
                "v",
                format!("length {} differs from positions {}", v.len(), q.len()),
            ));
        }
        if q.len() < 2 {
            return Err(Error::param("q", "need at least 2 particles"));
        }
        let state = ChainState { t, q, v };
        state.check_ordering()?;
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn check_ordering(&self) -> Result<()> {
        for (j, w) in self.q.windows(2).enumerate() {
            let gap = w[1] - w[0];
            if !(gap > 0.0) {
                return Err(Error::DegenerateGeometry {
                    left: j,
                    right: j + 1,
                    gap,
                });
            }
        }
        if let Some(bad) = self.v.iter().chain(&self.q).find(|x| !x.is_finite()) {
            return Err(Error::param("state", format!("non-finite entry {bad}")));
        }
        Ok(())
    }

    fn check_len(&self, cfg: &ChainConfig) -> Result<()> {
        if self.q.len() != cfg.n {
            return Err(Error::param(
                "state",
                format!("has {} particles, config expects {}", self.q.len(), cfg.n),
            ));
        }
        Ok(())
    }
}

/// Fills `out` with the net force on every particle. Bond `j` pushes particle
/// `j` left and `j+1` right with magnitude `U'(gap * n)`; walls push inward.
fn compute_forces(cfg: &ChainConfig, q: &[f64], out: &mut [f64]) -> Result<()> {
    let n = q.len();
    let scale = n as f64;
    let pot = &cfg.potential;
    let wall = cfg.wall_potential();
    let (w_left, w_right) = cfg.wall_positions();

    let g0 = q[0] - w_left;
    if !(g0 > 0.0) {
        return Err(Error::DegenerateGeometry {
            left: usize::MAX,
            right: 0,
            gap: g0,
        });
    }
    let mut from_left = wall.force_unchecked(g0 * scale);
    for j in 0..n - 1 {
        let gap = q[j + 1] - q[j];
        if !(gap > 0.0) {
            return Err(Error::DegenerateGeometry {
                left: j,
                right: j + 1,
                gap,
            });
        }
        let fb = pot.force_unchecked(gap * scale);
        out[j] = from_left - fb;
        from_left = fb;
    }
    let gn = w_right - q[n - 1];
    if !(gn > 0.0) {
        return Err(Error::DegenerateGeometry {
            left: n - 1,
            right: usize::MAX,
            gap: gn,
        });
    }
    out[n - 1] = from_left - wall.force_unchecked(gn * scale);
    Ok(())
}

/// Net force on every particle including the wall contributions.
pub fn net_forces(cfg: &ChainConfig, state: &ChainState) -> Result<Vec<f64>> {
    state.check_len(cfg)?;
    let mut f = vec![0.0; state.len()];
    compute_forces(cfg, &state.q, &mut f)?;
    Ok(f)
}

/// Signed force exerted on particle `j` by particle `j + 1`, i.e. `f_{j,j+1} = -U'(gap n)`.
pub fn bond_force(cfg: &ChainConfig, gap: f64) -> f64 {
    -cfg.potential.force_unchecked(gap * cfg.n as f64)
}

/// Potential energy `-eps * sum U(gap / eps)` over bonds and the two wall contacts.
/// Returns `+inf` for overlapping particles.
pub fn potential_energy(cfg: &ChainConfig, q: &[f64]) -> f64 {
    let n = q.len();
    let scale = n as f64;
    let eps = 1.0 / scale;
    let wall = cfg.wall_potential();
    let (w_left, w_right) = cfg.wall_positions();
    let term = |pot: &PowerLawPotential, gap: f64| {
        if gap > 0.0 {
            -eps * pot.energy_unchecked(gap * scale)
        } else {
            f64::INFINITY
        }
    };
    let mut e = term(&wall, q[0] - w_left) + term(&wall, w_right - q[n - 1]);
    for w in q.windows(2) {
        e += term(&cfg.potential, w[1] - w[0]);
    }
    e
}

pub fn kinetic_energy(cfg: &ChainConfig, v: &[f64]) -> f64 {
    0.5 * cfg.particle_mass() * v.iter().map(|x| x * x).sum::<f64>()
}

/// Kinetic plus potential energy; conserved by the exact dynamics.
pub fn total_energy(cfg: &ChainConfig, state: &ChainState) -> f64 {
    kinetic_energy(cfg, &state.v) + potential_energy(cfg, &state.q)
}

/// One velocity Verlet step of length `cfg.dt`.
pub fn step_verlet(cfg: &ChainConfig, state: &ChainState) -> Result<ChainState> {
    let mut integ = VerletIntegrator::new(cfg.clone(), state.clone())?;
    integ.step(cfg.dt)?;
    Ok(integ.into_state())
}

/// Velocity Verlet with cached forces; one force evaluation per step.
#[derive(Debug, Clone)]
pub struct VerletIntegrator {
    cfg: ChainConfig,
    state: ChainState,
    forces: Vec<f64>,
    steps: u64,
}

impl VerletIntegrator {
    pub fn new(cfg: ChainConfig, state: ChainState) -> Result<Self> {
        cfg.validate()?;
        state.check_len(&cfg)?;
        state.check_ordering()?;
        let mut forces = vec![0.0; state.len()];
        compute_forces(&cfg, &state.q, &mut forces)?;
        Ok(Self {
            cfg,
            state,
            forces,
            steps: 0,
        })
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn forces(&self) -> &[f64] {
        &self.forces
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn into_state(self) -> ChainState {
        self.state
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let half = 0.5 * dt / self.cfg.particle_mass();
        let ChainState { t, q, v } = &mut self.state;
        for (vj, fj) in v.iter_mut().zip(&self.forces) {
            *vj += half * fj;
        }
        for (qj, vj) in q.iter_mut().zip(v.iter()) {
            *qj += dt * vj;
        }
        if let Err(e) = compute_forces(&self.cfg, q, &mut self.forces) {
            return Err(match e {
                Error::DegenerateGeometry { left, right, .. } => Error::BlowUp {
                    t: *t + dt,
                    left,
                    right,
                },
                other => other,
            });
        }
        for (vj, fj) in v.iter_mut().zip(&self.forces) {
            *vj += half * fj;
        }
        *t += dt;
        self.steps += 1;
        Ok(())
    }

    /// Takes `k` steps of `cfg.dt`.
    pub fn run_steps(&mut self, k: u64) -> Result<()> {
        let dt = self.cfg.dt;
        for _ in 0..k {
            self.step(dt)?;
        }
        Ok(())
    }

    /// Advances to exactly `t_target`, shortening the final step so the
    /// trajectory lands on it.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let dt = self.cfg.dt;
        let t0 = self.state.t;
        let remaining = t_target - t0;
        if remaining <= dt * 1e-9 {
            return Ok(());
        }
        let full = ((remaining / dt) * (1.0 + 1e-12)).floor() as u64;
        for k in 0..full {
            self.step(dt)?;
            // keep the clock free of accumulated rounding
            self.state.t = t0 + (k + 1) as f64 * dt;
        }
        let rest = t_target - self.state.t;
        if rest > dt * 1e-9 {
            self.step(rest)?;
        }
        self.state.t = t_target;
        Ok(())
    }

    /// Negates every velocity (time reversal).
    pub fn reverse(&mut self) {
        for v in &mut self.state.v {
            *v = -*v;
        }
    }
}

/// Lattice positions `(j - 1/2) h` with zero velocity.
pub fn init_rest(cfg: &ChainConfig) -> ChainState {
    let q = (0..cfg.n).map(|j| cfg.lattice_point(j)).collect();
    ChainState {
        t: 0.0,
        q,
        v: vec![0.0; cfg.n],
    }
}

fn ramp_velocity(l: f64, gamma: f64, q: f64) -> f64 {
    if q <= l / 5.0 {
        gamma
    } else if q <= 2.0 * l / 5.0 {
        gamma * (-5.0 * q / l + 2.0)
    } else {
        0.0
    }
}

/// Lattice positions with the plateau-ramp velocity profile that launches a
/// right-moving acoustic pulse.
pub fn init_ramp(cfg: &ChainConfig, gamma: f64) -> ChainState {
    let mut s = init_rest(cfg);
    for (v, &q) in s.v.iter_mut().zip(&s.q) {
        *v = ramp_velocity(cfg.l, gamma, q);
    }
    s
}

/// Ramp profile plus `a sin(5 k pi q / L)` on the non-zero part `[0, 2L/5]`.
pub fn init_oscillatory(cfg: &ChainConfig, gamma: f64, a: f64, k: f64) -> ChainState {
    let l = cfg.l;
    let mut s = init_rest(cfg);
    for (v, &q) in s.v.iter_mut().zip(&s.q) {
        let mut value = ramp_velocity(l, gamma, q);
        if q <= 2.0 * l / 5.0 {
            value += a * (5.0 * k * std::f64::consts::PI * q / l).sin();
        }
        *v = value;
    }
    s
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    t: f64,
    chain: ChainConfig,
}

/// Writes `j,q,v` rows to `path` and the chain configuration plus time to the
/// sidecar `path.with_extension("toml")`.
pub fn write_checkpoint(path: &Path, cfg: &ChainConfig, state: &ChainState) -> Result<()> {
    let mut buf = String::with_capacity(48 * state.len() + 16);
    buf.push_str("j,q,v\n");
    for (j, (q, v)) in state.q.iter().zip(&state.v).enumerate() {
        buf.push_str(&format!("{},{:e},{:e}\n", j + 1, q, v));
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(buf.as_bytes())
        .map_err(|e| Error::io(path, e))?;

    let meta = CheckpointMeta {
        t: state.t,
        chain: cfg.clone(),
    };
    let side = sidecar_path(path);
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("toml")
}

/// Reads a checkpoint written by [`write_checkpoint`].
pub fn read_checkpoint(path: &Path) -> Result<(ChainConfig, ChainState)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: CheckpointMeta = toml::from_str(&text).map_err(|e| Error::Parse {
        path: side.clone(),
        reason: e.to_string(),
    })?;
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != "j,q,v" {
        return Err(Error::Parse {
            path: path.into(),
            reason: format!("unexpected header `{header}`"),
        });
    }
    let mut q = Vec::with_capacity(meta.chain.n);
    let mut v = Vec::with_capacity(meta.chain.n);
    for (row, line) in lines.enumerate() {
        let mut cols = line.split(',');
        let parse = |c: Option<&str>| -> Result<f64> {
            c.and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.into(),
                    reason: format!("bad row {}", row + 2),
                })
        };
        let _j = cols.next();
        q.push(parse(cols.next())?);
        v.push(parse(cols.next())?);
    }
    meta.chain.validate()?;
    let state = ChainState::new(meta.t, q, v)?;
    state.check_len(&meta.chain)?;
    Ok((meta.chain, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pot() -> PowerLawPotential {
        PowerLawPotential::new(100.0, 2.0, 1.0).unwrap()
    }

    #[test]
    fn potential_values() {
        let u = pot();
        assert_eq!(u.energy(1.0).unwrap(), 0.0);
        assert_eq!(u.energy(2.0).unwrap(), 0.0);
        assert_relative_eq!(u.energy(0.5).unwrap(), -50.0, epsilon = 1e-12);
        assert!(u.energy(0.0).is_err());
        assert!(u.energy(-1.0).is_err());
    }

    #[test]
    fn force_matches_finite_difference_of_energy() {
        let u = pot();
        for &(xi, expected) in &[(0.9, 23.456_790_123_456_79), (0.5, 300.0)] {
            let d = 1e-6;
            let fd = (u.energy(xi + d).unwrap() - u.energy(xi - d).unwrap()) / (2.0 * d);
            assert!(
                (fd - expected).abs() < 1e-6 * expected.max(1.0),
                "fd {fd} at {xi}"
            );
            assert_relative_eq!(u.force(xi).unwrap(), expected, max_relative = 1e-12);
        }
        assert_eq!(u.force(1.0).unwrap(), 0.0);
        assert_eq!(u.force(3.0).unwrap(), 0.0);
        assert!(u.force(0.0).is_err());
    }

    #[test]
    fn non_integer_exponent_takes_powf_path() {
        let u = PowerLawPotential::new(10.0, 2.5, 1.2).unwrap();
        let xi = 0.7;
        let d = 1e-6;
        let fd = (u.energy(xi + d).unwrap() - u.energy(xi - d).unwrap()) / (2.0 * d);
        assert_relative_eq!(u.force(xi).unwrap(), fd, max_relative = 1e-7);
        assert!(u.energy(1.2).unwrap().abs() < 1e-12);
        assert!(u.force(1.2).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PowerLawPotential::new(0.0, 2.0, 1.0).is_err());
        assert!(PowerLawPotential::new(1.0, 1.0, 1.0).is_err());
        assert!(PowerLawPotential::new(1.0, 2.0, -1.0).is_err());
        assert!(ChainConfig::new(1, 1.0, 1.0, pot()).is_err());
        assert!(ChainState::new(0.0, vec![0.1, 0.1], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn default_dt_from_linearised_frequency() {
        let cfg = ChainConfig::new(40_000, 1.0, 1.0, pot()).unwrap();
        assert_relative_eq!(cfg.omega_max(), 8.0e5, max_relative = 1e-12);
        assert_relative_eq!(cfg.dt, 6.25e-8, max_relative = 1e-12);
        assert_eq!(cfg.h(), 2.5e-5);
        assert_eq!(cfg.eps(), 2.5e-5);
    }

    #[test]
    fn rest_chain_with_offset_walls_is_equilibrium() {
        let cfg = ChainConfig::new(20, 1.0, 1.0, pot())
            .unwrap()
            .with_wall_offset(true);
        let s = init_rest(&cfg);
        let f = net_forces(&cfg, &s).unwrap();
        // gaps equal the cutoff up to rounding
        assert!(f.iter().all(|&x| x.abs() < 1e-9));
        let next = step_verlet(&cfg, &s).unwrap();
        for (a, b) in next.q.iter().zip(&s.q) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(next.v.iter().all(|v| v.abs() < 1e-9));
        assert_eq!(next.t, cfg.dt);
    }

    #[test]
    fn literal_walls_push_boundary_particles_inward() {
        let cfg = ChainConfig::new(20, 1.0, 1.0, pot()).unwrap();
        let s = init_rest(&cfg);
        let f = net_forces(&cfg, &s).unwrap();
        // wall gap h/2 -> xi = 0.5 -> U' = 300
        assert_relative_eq!(f[0], 300.0, max_relative = 1e-12);
        assert_relative_eq!(f[19], -300.0, max_relative = 1e-12);
        assert!(f[1..19].iter().all(|&x| x.abs() < 1e-9));
    }

    #[test]
    fn compressed_pair_repels_symmetrically() {
        let cfg = ChainConfig::new(10, 1.0, 1.0, pot())
            .unwrap()
            .with_wall_offset(true);
        let mut s = init_rest(&cfg);
        let h = cfg.h();
        // shrink the gap between particles 4 and 5 to 0.9 h, keep the others at h
        for q in s.q.iter_mut().skip(5) {
            *q -= 0.1 * h;
        }
        let f = net_forces(&cfg, &s).unwrap();
        let expected = pot().force(0.9).unwrap();
        assert_relative_eq!(f[4], -expected, max_relative = 1e-12);
        assert_relative_eq!(f[5], expected, max_relative = 1e-12);
    }

    #[test]
    fn uniform_velocity_adds_bulk_kinetic_energy() {
        let cfg = ChainConfig::new(50, 1.0, 2.0, pot())
            .unwrap()
            .with_wall_offset(true);
        let mut s = init_rest(&cfg);
        let e0 = total_energy(&cfg, &s);
        assert_eq!(e0, 0.0);
        s.v.iter_mut().for_each(|v| *v = 0.4);
        assert_relative_eq!(
            total_energy(&cfg, &s),
            0.5 * 2.0 * 0.16,
            max_relative = 1e-12
        );
    }

    #[test]
    fn first_step_velocity_change_matches_force() {
        let cfg = ChainConfig::new(10, 1.0, 1.0, pot())
            .unwrap()
            .with_wall_offset(true);
        let mut s = init_rest(&cfg);
        for q in s.q.iter_mut().skip(5) {
            *q -= 0.1 * cfg.h();
        }
        let f = net_forces(&cfg, &s).unwrap();
        let next = step_verlet(&cfg, &s).unwrap();
        let mu = cfg.particle_mass();
        let scale = f.iter().fold(0.0f64, |m, x| m.max(x.abs())) * cfg.dt / mu;
        // neighbours of the compressed bond pick up a second-order change
        for j in 0..10 {
            let euler = cfg.dt * f[j] / mu;
            let dv = next.v[j] - s.v[j];
            assert!((dv - euler).abs() <= 1e-2 * scale, "j={j}: {dv} vs {euler}");
        }
    }

    #[test]
    fn ramp_profile_values() {
        let cfg = ChainConfig::new(10, 1.0, 1.0, pot()).unwrap();
        let s = init_ramp(&cfg, 0.3);
        // q = 0.05, 0.15, ..., 0.95
        assert_relative_eq!(s.v[1], 0.3, max_relative = 1e-12); // q = 0.15
        assert_relative_eq!(s.v[2], 0.3 * (-5.0 * 0.25 + 2.0), max_relative = 1e-12);
        assert_relative_eq!(ramp_velocity(1.0, 0.3, 0.1), 0.3);
        assert_relative_eq!(ramp_velocity(1.0, 0.3, 0.3), 0.15, max_relative = 1e-12);
        assert_eq!(ramp_velocity(1.0, 0.3, 0.9), 0.0);
        assert_eq!(s.v[9], 0.0);
    }

    #[test]
    fn oscillatory_profile() {
        let cfg = ChainConfig::new(100, 1.0, 1.0, pot()).unwrap();
        let s = init_oscillatory(&cfg, 0.3, 5.0, 20.0);
        // q_0 = 0.005: sin(5*20*pi*0.005) = sin(pi/2) = 1
        assert_relative_eq!(s.v[0], 5.3, max_relative = 1e-12);
        assert!(s.v[60..].iter().all(|&v| v == 0.0));
        let plain = init_oscillatory(&cfg, 0.3, 0.0, 20.0);
        assert_eq!(plain, init_ramp(&cfg, 0.3));
    }

    #[test]
    fn advance_to_lands_on_target() {
        let cfg = ChainConfig::new(40, 1.0, 1.0, pot())
            .unwrap()
            .with_wall_offset(true);
        let mut it = VerletIntegrator::new(cfg.clone(), init_ramp(&cfg, 0.3)).unwrap();
        let target = 37.3 * cfg.dt;
        it.advance_to(target).unwrap();
        assert_eq!(it.state().t, target);
        assert_eq!(it.steps_taken(), 38);
        it.advance_to(target).unwrap();
        assert_eq!(it.steps_taken(), 38);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ChainConfig::new(16, 1.0, 1.0, pot()).unwrap();
        let mut s = init_oscillatory(&cfg, 0.3, 5.0, 20.0);
        s.t = 0.125;
        let path = dir.path().join("chk.csv");
        write_checkpoint(&path, &cfg, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("j,q,v\n1,"));
        let (cfg2, s2) = read_checkpoint(&path).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(s2, s);
    }
}
