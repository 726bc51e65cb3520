//! Spatial averages of a chain state sampled at mesoscale nodes: density,
//! momentum and velocity, the exact convective and interaction stresses, and
//! the Jacobian of the inverse of the piecewise-linear position map.

use serde::{Deserialize, Serialize};

use crate::chain::{bond_force, ChainConfig, ChainState};
use crate::error::{Error, Result};
use crate::window::{MesoMesh, WindowFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Density,
    Momentum,
    Velocity,
    StressConv,
    StressInt,
    Jacobian,
}

impl Quantity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Quantity::Density => "density",
            Quantity::Momentum => "momentum",
            Quantity::Velocity => "velocity",
            Quantity::StressConv => "stress-conv",
            Quantity::StressInt => "stress-int",
            Quantity::Jacobian => "jacobian",
        }
    }
}

/// A quantity sampled at the nodes of a [`MesoMesh`].
#[derive(Debug, Clone, PartialEq)]
pub struct MesoField {
    pub mesh: MesoMesh,
    pub quantity: Quantity,
    pub values: Vec<f64>,
    /// Nodes whose window reaches within `eta l` of a wall.
    pub boundary_affected: Vec<bool>,
}

impl MesoField {
    pub fn new(
        mesh: MesoMesh,
        window: &WindowFunction,
        quantity: Quantity,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != mesh.b {
            return Err(Error::param(
                "values",
                format!("expected {} node values, got {}", mesh.b, values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param(
                "values",
                format!("non-finite node value {bad}"),
            ));
        }
        if quantity == Quantity::Density && values.iter().any(|&v| v < 0.0) {
            return Err(Error::param("values", "density must be non-negative"));
        }
        Ok(Self {
            mesh,
            quantity,
            values,
            boundary_affected: mesh.boundary_flags(window),
        })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.mesh.centers()
    }

    /// Indices of nodes not flagged as boundary-affected.
    pub fn interior(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_affected
            .iter()
            .enumerate()
            .filter(|(_, &b)| !b)
            .map(|(i, _)| i)
    }
}

fn check_inputs(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<()> {
    mesh.check_window(window)?;
    if (cfg.l - mesh.l).abs() > 1e-12 * cfg.l {
        return Err(Error::param("l", "mesh and chain lengths differ"));
    }
    if state.len() != cfg.n {
        return Err(Error::param("state", "particle count differs from config"));
    }
    if mesh.b > cfg.n / 10 {
        log::warn!(
            "weak scale separation: {} cells for {} particles",
            mesh.b,
            cfg.n
        );
    }
    Ok(())
}

/// Calls `visit(beta, psi)` for every node whose window contains `y` with a
/// non-zero weight.
#[inline]
fn for_each_node(
    mesh: &MesoMesh,
    window: &WindowFunction,
    y: f64,
    mut visit: impl FnMut(usize, f64),
) {
    let r = window.radius();
    for beta in mesh.nodes_near(y - r, y + r) {
        let psi = window.value(mesh.center(beta) - y);
        if psi != 0.0 {
            visit(beta, psi);
        }
    }
}

/// Per-node sums `sum_j w_j psi(x_beta - q_j)` and `sum_j psi(x_beta - q_j)`.
fn weighted_sums(
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
    weight: impl Fn(usize) -> f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut num = vec![0.0; mesh.b];
    let mut den = vec![0.0; mesh.b];
    for (j, &q) in state.q.iter().enumerate() {
        let w = weight(j);
        for_each_node(mesh, window, q, |beta, psi| {
            num[beta] += w * psi;
            den[beta] += psi;
        });
    }
    (num, den)
}

/// `rho_beta = (M/N) sum_j psi_eta(x_beta - q_j)`.
pub fn average_density(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    check_inputs(cfg, state, window, mesh)?;
    let mu = cfg.particle_mass();
    let (_, den) = weighted_sums(state, window, mesh, |_| 0.0);
    let values = den.into_iter().map(|s| mu * s).collect();
    MesoField::new(*mesh, window, Quantity::Density, values)
}

/// `(rho v)_beta = (M/N) sum_j v_j psi_eta(x_beta - q_j)`.
pub fn average_momentum(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    check_inputs(cfg, state, window, mesh)?;
    let mu = cfg.particle_mass();
    let (num, _) = weighted_sums(state, window, mesh, |j| state.v[j]);
    let values = num.into_iter().map(|s| mu * s).collect();
    MesoField::new(*mesh, window, Quantity::Momentum, values)
}

/// Kernel-weighted mean velocity per node; fails on nodes whose window holds
/// no particle.
pub fn average_velocity(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    check_inputs(cfg, state, window, mesh)?;
    let (num, den) = weighted_sums(state, window, mesh, |j| state.v[j]);
    let mut values = Vec::with_capacity(mesh.b);
    for (beta, (n, d)) in num.into_iter().zip(den).enumerate() {
        if d <= 0.0 {
            return Err(Error::EmptyCell { beta });
        }
        values.push(n / d);
    }
    MesoField::new(*mesh, window, Quantity::Velocity, values)
}

/// `T_c(x_beta) = -(M/N) sum_j (v_j - v_bar(x_beta))^2 psi_eta(x_beta - q_j)`.
///
/// Nodes with no particle in their window get zero (the sum is empty).
pub fn convective_stress_exact(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    check_inputs(cfg, state, window, mesh)?;
    let (num, den) = weighted_sums(state, window, mesh, |j| state.v[j]);
    let vbar: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(&n, &d)| if d > 0.0 { n / d } else { 0.0 })
        .collect();
    let mut acc = vec![0.0; mesh.b];
    for (&q, &v) in state.q.iter().zip(&state.v) {
        for_each_node(mesh, window, q, |beta, psi| {
            let dv = v - vbar[beta];
            acc[beta] += dv * dv * psi;
        });
    }
    let mu = cfg.particle_mass();
    let values = acc.into_iter().map(|s| -mu * s).collect();
    MesoField::new(*mesh, window, Quantity::StressConv, values)
}

/// `T_int(x_beta) = sum_j f_{j,j+1} (q_{j+1} - q_j) int_0^1 psi_eta(x_beta - s q_{j+1} - (1-s) q_j) ds`
/// over the `N - 1` bonds.
pub fn interaction_stress_exact(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    check_inputs(cfg, state, window, mesh)?;
    let values = bond_stress(cfg, &state.q, window, mesh);
    MesoField::new(*mesh, window, Quantity::StressInt, values)
}

/// Bond sum behind [`interaction_stress_exact`] for arbitrary ordered positions.
pub(crate) fn bond_stress(
    cfg: &ChainConfig,
    q: &[f64],
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Vec<f64> {
    let r = window.radius();
    let mut acc = vec![0.0; mesh.b];
    for w in q.windows(2) {
        let (a, b) = (w[0], w[1]);
        let gap = b - a;
        let f = bond_force(cfg, gap);
        if f == 0.0 {
            continue;
        }
        for beta in mesh.nodes_near(a - r, b + r) {
            let s = window.segment_mean(mesh.center(beta), a, b);
            acc[beta] += f * gap * s;
        }
    }
    acc
}

/// Jacobian `J = 1 / q~'` of the inverse position map at the mesh nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianField {
    pub field: MesoField,
    /// Nodes outside `[q_1, q_N]`, where the nearest end bond was used.
    pub extrapolated: Vec<bool>,
}

/// Bond index `j` with `q_j <= x < q_{j+1}`, clamped to the end bonds, and
/// whether clamping happened.
fn bond_containing(q: &[f64], x: f64) -> (usize, bool) {
    let n = q.len();
    if x < q[0] {
        return (0, true);
    }
    if x >= q[n - 1] {
        return (n - 2, x > q[n - 1]);
    }
    // first index with q > x, minus one
    let k = q.partition_point(|&p| p <= x);
    (k - 1, false)
}

/// `J(x) = h / (q_{j+1} - q_j)` for the bond straddling each point.
pub fn jacobian_at(cfg: &ChainConfig, state: &ChainState, xs: &[f64]) -> Vec<(f64, bool)> {
    let h = cfg.h();
    xs.iter()
        .map(|&x| {
            let (j, extra) = bond_containing(&state.q, x);
            (h / (state.q[j + 1] - state.q[j]), extra)
        })
        .collect()
}

pub fn jacobian_at_mesh(
    cfg: &ChainConfig,
    state: &ChainState,
    window: &WindowFunction,
    mesh: &MesoMesh,
) -> Result<JacobianField> {
    check_inputs(cfg, state, window, mesh)?;
    state.check_ordering()?;
    let (values, extrapolated) = jacobian_at(cfg, state, &mesh.centers()).into_iter().unzip();
    Ok(JacobianField {
        field: MesoField::new(*mesh, window, Quantity::Jacobian, values)?,
        extrapolated,
    })
}

/// Piecewise-linear velocity interpolant `v~(x)` through `(q_j, v_j)`, held
/// constant outside `[q_1, q_N]`.
pub fn velocity_at(state: &ChainState, xs: &[f64]) -> Vec<f64> {
    let q = &state.q;
    let n = q.len();
    xs.iter()
        .map(|&x| {
            if x <= q[0] {
                return state.v[0];
            }
            if x >= q[n - 1] {
                return state.v[n - 1];
            }
            let (j, _) = bond_containing(q, x);
            let s = (x - q[j]) / (q[j + 1] - q[j]);
            (1.0 - s) * state.v[j] + s * state.v[j + 1]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{init_ramp, init_rest, PowerLawPotential};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(n: usize) -> ChainConfig {
        let pot = PowerLawPotential::new(100.0, 2.0, 1.0).unwrap();
        ChainConfig::new(n, 1.0, 1.0, pot)
            .unwrap()
            .with_wall_offset(true)
    }

    fn random_state(cfg: &ChainConfig, seed: u64) -> ChainState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.h();
        let mut s = init_rest(cfg);
        for (q, v) in s.q.iter_mut().zip(s.v.iter_mut()) {
            *q += rng.gen_range(-0.3..0.3) * h;
            *v = rng.gen_range(-1.0..1.0);
        }
        s
    }

    #[test]
    fn uniform_box_density_is_m_over_l() {
        let c = cfg(40);
        let s = init_rest(&c);
        let mesh = MesoMesh::new(4, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.25, 1.0).unwrap();
        let rho = average_density(&c, &s, &w, &mesh).unwrap();
        for v in rho.values {
            assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn four_particles_two_cells() {
        let c = cfg(4);
        let s = ChainState::new(0.0, vec![0.125, 0.375, 0.625, 0.875], vec![0.0; 4]).unwrap();
        let mesh = MesoMesh::new(2, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.5, 1.0).unwrap();
        let rho = average_density(&c, &s, &w, &mesh).unwrap();
        assert_eq!(rho.values, vec![1.0, 1.0]);
    }

    #[test]
    fn density_and_momentum_match_double_loop() {
        let c = cfg(50);
        let s = random_state(&c, 7);
        let mesh = MesoMesh::new(5, 1.0).unwrap();
        for w in [
            WindowFunction::boxcar(0.2, 1.0).unwrap(),
            WindowFunction::gaussian(0.2, 1.0).unwrap(),
        ] {
            let rho = average_density(&c, &s, &w, &mesh).unwrap();
            let mom = average_momentum(&c, &s, &w, &mesh).unwrap();
            let vel = average_velocity(&c, &s, &w, &mesh).unwrap();
            for beta in 0..5 {
                let x = mesh.center(beta);
                let (mut r, mut m) = (0.0, 0.0);
                for j in 0..50 {
                    let psi = w.value(x - s.q[j]);
                    r += psi;
                    m += s.v[j] * psi;
                }
                assert_relative_eq!(rho.values[beta], r / 50.0, max_relative = 1e-12);
                assert_relative_eq!(mom.values[beta], m / 50.0, max_relative = 1e-12);
                assert_relative_eq!(vel.values[beta], m / r, max_relative = 1e-12);
                assert_relative_eq!(
                    vel.values[beta],
                    mom.values[beta] / rho.values[beta],
                    max_relative = 1e-14
                );
            }
        }
    }

    #[test]
    fn constant_velocity_fields() {
        let c = cfg(40);
        let mut s = init_rest(&c);
        s.v.iter_mut().for_each(|v| *v = 0.7);
        let mesh = MesoMesh::new(4, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.25, 1.0).unwrap();
        let mom = average_momentum(&c, &s, &w, &mesh).unwrap();
        let vel = average_velocity(&c, &s, &w, &mesh).unwrap();
        let tc = convective_stress_exact(&c, &s, &w, &mesh).unwrap();
        for beta in 0..4 {
            assert_relative_eq!(mom.values[beta], 0.7, max_relative = 1e-12);
            assert_relative_eq!(vel.values[beta], 0.7, max_relative = 1e-12);
            assert!(tc.values[beta].abs() < 1e-15);
        }
        s.v.iter_mut().for_each(|v| *v = 0.0);
        let mom = average_momentum(&c, &s, &w, &mesh).unwrap();
        assert!(mom.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_cell_is_reported() {
        let c = cfg(4);
        let s = ChainState::new(0.0, vec![0.1, 0.2, 0.3, 0.4], vec![0.0; 4]).unwrap();
        let mesh = MesoMesh::new(2, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.5, 1.0).unwrap();
        match average_velocity(&c, &s, &w, &mesh) {
            Err(Error::EmptyCell { beta }) => assert_eq!(beta, 1),
            other => panic!("expected empty cell, got {other:?}"),
        }
        let tc = convective_stress_exact(&c, &s, &w, &mesh).unwrap();
        assert_eq!(tc.values[1], 0.0);
    }

    #[test]
    fn ramp_plateau_velocity() {
        let c = cfg(1000);
        let s = init_ramp(&c, 0.3);
        let mesh = MesoMesh::new(50, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.02, 1.0).unwrap();
        let vel = average_velocity(&c, &s, &w, &mesh).unwrap();
        let tc = convective_stress_exact(&c, &s, &w, &mesh).unwrap();
        // cell 5 spans [0.08, 0.1), inside the plateau
        assert_relative_eq!(vel.values[4], 0.3, max_relative = 1e-12);
        assert!(tc.values[4].abs() < 1e-15);
        assert!(tc.values.iter().all(|&t| t <= 0.0));
    }

    #[test]
    fn interaction_stress_uniform_compression() {
        let n = 200;
        let c = cfg(n);
        let g = 0.95 * c.h();
        let q: Vec<f64> = (0..n).map(|j| 0.025 + j as f64 * g).collect();
        let s = ChainState::new(0.0, q, vec![0.0; n]).unwrap();
        let mesh = MesoMesh::new(5, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.2, 1.0).unwrap();
        let t = interaction_stress_exact(&c, &s, &w, &mesh).unwrap();
        // interior cell fully covered by bonds: -U'(g N) * g * (bonds per cell)/L_eta = -U'(g N)
        let up = c.potential.force(g * n as f64).unwrap();
        assert_relative_eq!(t.values[2], -up, max_relative = 1e-12);
        assert!(t.values.iter().all(|&v| v <= 0.0));
    }

    #[test]
    fn interaction_stress_zero_at_rest() {
        let c = cfg(100);
        let s = init_rest(&c);
        let mesh = MesoMesh::new(5, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.2, 1.0).unwrap();
        let t = interaction_stress_exact(&c, &s, &w, &mesh).unwrap();
        assert!(t.values.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn interaction_stress_matches_trapezoid_bond_integrals() {
        let c = cfg(50);
        let mut s = random_state(&c, 11);
        // compress so most bonds are inside the cutoff
        s.q.iter_mut().for_each(|q| *q = 0.1 + 0.8 * *q);
        let mesh = MesoMesh::new(5, 1.0).unwrap();
        for w in [
            WindowFunction::boxcar(0.2, 1.0).unwrap(),
            WindowFunction::gaussian(0.2, 1.0).unwrap(),
        ] {
            let t = interaction_stress_exact(&c, &s, &w, &mesh).unwrap();
            let k = 10_000;
            for beta in 0..5 {
                let x = mesh.center(beta);
                let mut total = 0.0;
                for j in 0..49 {
                    let (a, b) = (s.q[j], s.q[j + 1]);
                    let gap = b - a;
                    let f = -c.potential.force(gap * 50.0).unwrap();
                    let mut integral = 0.0;
                    for i in 0..=k {
                        let sv = i as f64 / k as f64;
                        let wt = if i == 0 || i == k { 0.5 } else { 1.0 };
                        integral += wt * w.value(x - sv * b - (1.0 - sv) * a);
                    }
                    total += f * gap * integral / k as f64;
                }
                let scale = t.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(
                    (t.values[beta] - total).abs() <= 2e-3 * scale,
                    "beta {beta}: {} vs {total}",
                    t.values[beta]
                );
            }
        }
    }

    #[test]
    fn jacobian_of_uniform_and_compressed_chains() {
        let c = cfg(100);
        let mesh = MesoMesh::new(5, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.2, 1.0).unwrap();
        let s = init_rest(&c);
        let jf = jacobian_at_mesh(&c, &s, &w, &mesh).unwrap();
        for v in &jf.field.values {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-12);
        }
        assert!(jf.extrapolated.iter().all(|e| !e));

        // compress to half length on [0, 0.5)
        let mut half = s.clone();
        half.q.iter_mut().for_each(|q| *q *= 0.5);
        let jf = jacobian_at_mesh(&c, &half, &w, &mesh).unwrap();
        assert_relative_eq!(jf.field.values[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(jf.field.values[1], 2.0, max_relative = 1e-12);
        assert_eq!(jf.extrapolated, vec![false, false, true, true, true]);
    }

    #[test]
    fn jacobian_matches_inverse_interpolant_derivative() {
        let c = cfg(60);
        let s = random_state(&c, 3);
        let h = c.h();
        // q~(X) piecewise linear through (X_j, q_j); invert by bisection
        let qt = |x_lat: f64| -> f64 {
            let u = (x_lat / h - 0.5).clamp(0.0, 59.0 - 1e-12);
            let j = u.floor() as usize;
            let f = u - j as f64;
            (1.0 - f) * s.q[j] + f * s.q[j + 1]
        };
        let inv = |y: f64| -> f64 {
            let (mut lo, mut hi) = (0.5 * h, 59.5 * h);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if qt(mid) < y {
                    lo = mid
                } else {
                    hi = mid
                }
            }
            0.5 * (lo + hi)
        };
        let mesh = MesoMesh::new(6, 1.0).unwrap();
        for (x, (jv, _)) in mesh
            .centers()
            .iter()
            .zip(jacobian_at(&c, &s, &mesh.centers()))
        {
            let d = 1e-7;
            let fd = (inv(x + d) - inv(x - d)) / (2.0 * d);
            assert_relative_eq!(jv, fd, max_relative = 1e-4);
        }
    }

    #[test]
    fn interior_mass_and_momentum_consistency() {
        let c = cfg(200);
        let mut s = random_state(&c, 5);
        // keep particles away from the walls
        s.q.iter_mut().for_each(|q| *q = 0.05 + 0.9 * *q);
        let mesh = MesoMesh::new(10, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.1, 1.0).unwrap();
        let rho = average_density(&c, &s, &w, &mesh).unwrap();
        let mom = average_momentum(&c, &s, &w, &mesh).unwrap();
        let le = mesh.l_eta();
        let mass: f64 = rho.values.iter().map(|r| r * le).sum();
        assert_relative_eq!(mass, c.m, max_relative = 1e-12);
        let p: f64 = mom.values.iter().map(|r| r * le).sum();
        let p_exact = c.particle_mass() * s.v.iter().sum::<f64>();
        assert_relative_eq!(p, p_exact, max_relative = 1e-10, epsilon = 1e-14);
    }
}
