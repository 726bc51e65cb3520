//! Closed-form stress approximations built from mesoscale data only.
//!
//! Zero order replaces `J` and `J v` by `(L/M) rho` and `(L/M) rho v`. The
//! quasi-isothermal prescription builds synthetic particles `(q^, v^)` that
//! reproduce the given averages and the conserved energy with a cell-independent
//! fluctuation temperature `kappa^2`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::averaging::{bond_stress, MesoField, Quantity};
use crate::chain::{potential_energy, ChainConfig};
use crate::deconv::{FineField, FineGrid};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_5_panels;
use crate::window::{MesoMesh, WindowFunction};

/// Synthetic positions, one uniformly spaced block per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescribedPositions {
    pub mesh: MesoMesh,
    pub q_hat: Vec<f64>,
    pub n_beta: Vec<usize>,
    pub delta_beta: Vec<f64>,
}

impl PrescribedPositions {
    /// Index range of the particles placed in cell `beta`.
    pub fn cell_range(&self, beta: usize) -> std::ops::Range<usize> {
        let start: usize = self.n_beta[..beta].iter().sum();
        start..start + self.n_beta[beta]
    }
}

/// Positions plus energy-consistent velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrescribedState {
    pub positions: PrescribedPositions,
    pub v_hat: Vec<f64>,
    /// Velocity perturbations `v^ - v_bar`.
    pub delta_v: Vec<f64>,
    pub kappa_sq: f64,
    pub k_beta: Vec<f64>,
    /// Per-cell amplitude `t`.
    pub t_amp: Vec<f64>,
    pub signs: Vec<i8>,
    /// Energy left for fluctuations, `E - U(Q^) - kinetic energy of the means`.
    pub budget: f64,
}

#[derive(Debug, Serialize)]
struct PrescribedMeta<'a> {
    kappa_sq: f64,
    budget: f64,
    n_beta: &'a [usize],
    delta_beta: &'a [f64],
    t_amp: &'a [f64],
    k_beta: &'a [f64],
}

impl PrescribedState {
    pub fn q_hat(&self) -> &[f64] {
        &self.positions.q_hat
    }

    /// Writes `j,q,v` and a `.json` sidecar with the per-cell constants.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from("j,q,v\n");
        for (j, (q, v)) in self.positions.q_hat.iter().zip(&self.v_hat).enumerate() {
            out.push_str(&format!("{j},{q:e},{v:e}\n"));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))?;
        let meta = PrescribedMeta {
            kappa_sq: self.kappa_sq,
            budget: self.budget,
            n_beta: &self.positions.n_beta,
            delta_beta: &self.positions.delta_beta,
            t_amp: &self.t_amp,
            k_beta: &self.k_beta,
        };
        let side = path.with_extension("json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(&side, text).map_err(|e| Error::io(side, e))
    }
}

/// Integer counts close to `raw` with `sum = total`, every count even.
fn cell_counts(raw: &[f64], total: usize) -> Result<Vec<usize>> {
    let mut n: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = n.iter().sum();
    if assigned > total {
        return Err(Error::param(
            "rho_bar",
            "cell counts exceed the particle number",
        ));
    }
    // largest remainder
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total - assigned) {
        n[i] += 1;
    }
    // odd cells come in pairs since the total is even; within each
    // consecutive pair the cell further below its target gains a particle
    let odd: Vec<usize> = (0..n.len()).filter(|&i| n[i] % 2 == 1).collect();
    for pair in odd.chunks(2) {
        let (a, b) = (pair[0], pair[1]);
        let (mut gain, mut lose) = if raw[a] - n[a] as f64 >= raw[b] - n[b] as f64 {
            (a, b)
        } else {
            (b, a)
        };
        if n[lose] == 1 {
            std::mem::swap(&mut gain, &mut lose);
        }
        if n[lose] == 1 {
            n[a] += 1;
            n[b] += 1;
            let big = (0..n.len())
                .max_by_key(|&i| (n[i], std::cmp::Reverse(i)))
                .unwrap();
            if n[big] < 4 {
                return Err(Error::param(
                    "rho_bar",
                    "too few particles to make every cell even",
                ));
            }
            n[big] -= 2;
        } else {
            n[gain] += 1;
            n[lose] -= 1;
        }
    }
    Ok(n)
}

/// Uniformly spaced positions per cell with `n_beta ~ rho_beta L_eta N / M`,
/// adjusted to even counts summing to `N`.
pub fn prescribe_positions(rho_bar: &MesoField, cfg: &ChainConfig) -> Result<PrescribedPositions> {
    if cfg.n % 2 == 1 {
        return Err(Error::param(
            "n",
            "prescription needs an even particle count",
        ));
    }
    let mesh = rho_bar.mesh;
    let le = mesh.l_eta();
    for (beta, &r) in rho_bar.values.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::ZeroDensity {
                x: mesh.center(beta),
                value: r,
            });
        }
    }
    // rescale so the raw counts add up to N exactly
    let total: f64 = rho_bar.values.iter().sum::<f64>() * le * cfg.n as f64 / cfg.m;
    let scale = le * cfg.n as f64 / cfg.m * (cfg.n as f64 / total);
    let raw: Vec<f64> = rho_bar.values.iter().map(|r| r * scale).collect();
    let n_beta = cell_counts(&raw, cfg.n)?;
    if let Some(beta) = n_beta.iter().position(|&k| k == 0) {
        return Err(Error::ZeroDensity {
            x: mesh.center(beta),
            value: rho_bar.values[beta],
        });
    }
    let mut q_hat = Vec::with_capacity(cfg.n);
    let mut delta_beta = Vec::with_capacity(mesh.b);
    for (beta, &k) in n_beta.iter().enumerate() {
        let d = le / k as f64;
        let left = mesh.center(beta) - 0.5 * le;
        q_hat.extend((0..k).map(|i| left + (i as f64 + 0.5) * d));
        delta_beta.push(d);
    }
    Ok(PrescribedPositions {
        mesh,
        q_hat,
        n_beta,
        delta_beta,
    })
}

/// Energy-conserving velocities `v^_j = v_bar_beta + t_beta a_j / psi_j` with
/// alternating signs `a_j`.
/// Energy left for fluctuations, `E - U(Q^) - (1/2)(M/N) sum_beta v_bar^2 n_beta`;
/// negative when the prescribed positions alone exceed `energy_ref`.
pub fn energy_budget(
    v_bar: &MesoField,
    pos: &PrescribedPositions,
    energy_ref: f64,
    cfg: &ChainConfig,
) -> f64 {
    let kinetic_means: f64 = 0.5
        * cfg.particle_mass()
        * v_bar
            .values
            .iter()
            .zip(&pos.n_beta)
            .map(|(v, &k)| v * v * k as f64)
            .sum::<f64>();
    energy_ref - potential_energy(cfg, &pos.q_hat) - kinetic_means
}

pub fn prescribe_velocities(
    v_bar: &MesoField,
    pos: &PrescribedPositions,
    energy_ref: f64,
    window: &WindowFunction,
    cfg: &ChainConfig,
) -> Result<PrescribedState> {
    let mesh = pos.mesh;
    mesh.check_window(window)?;
    if v_bar.mesh != mesh {
        return Err(Error::param(
            "v_bar",
            "mesh differs from the prescribed positions",
        ));
    }
    let mut psi = vec![0.0; pos.q_hat.len()];
    let mut d_beta = vec![0.0; mesh.b];
    let mut e_beta = vec![0.0; mesh.b];
    for beta in 0..mesh.b {
        let xb = mesh.center(beta);
        for j in pos.cell_range(beta) {
            let p = window.value(xb - pos.q_hat[j]);
            if !(p > 0.0) {
                return Err(Error::param(
                    "window",
                    "kernel vanishes at an in-cell particle",
                ));
            }
            psi[j] = p;
            d_beta[beta] += 1.0 / p;
            e_beta[beta] += 1.0 / (p * p);
        }
    }
    let mut budget = energy_budget(v_bar, pos, energy_ref, cfg);
    if !budget.is_finite() || budget < -1e-12 * energy_ref.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::InfeasiblePrescription { deficit: -budget });
    }
    budget = budget.max(0.0);
    let ratio_sum: f64 = e_beta.iter().zip(&d_beta).map(|(e, d)| e / d).sum();
    let kappa_sq = 2.0 * cfg.n as f64 / cfg.m * budget / ratio_sum;
    let k_beta: Vec<f64> = e_beta
        .iter()
        .zip(&d_beta)
        .map(|(e, d)| kappa_sq * e / d)
        .collect();
    let t_amp: Vec<f64> = d_beta.iter().map(|d| (kappa_sq / d).sqrt()).collect();

    let n = pos.q_hat.len();
    let mut v_hat = Vec::with_capacity(n);
    let mut delta_v = Vec::with_capacity(n);
    let mut signs = Vec::with_capacity(n);
    for beta in 0..mesh.b {
        for (i, j) in pos.cell_range(beta).enumerate() {
            let a: i8 = if i % 2 == 0 { 1 } else { -1 };
            let dv = t_amp[beta] * a as f64 / psi[j];
            signs.push(a);
            delta_v.push(dv);
            v_hat.push(v_bar.values[beta] + dv);
        }
    }
    Ok(PrescribedState {
        positions: pos.clone(),
        v_hat,
        delta_v,
        kappa_sq,
        k_beta,
        t_amp,
        signs,
        budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StressIntMode {
    /// Quadrature of the density integral on a fine grid.
    Integral,
    /// Bond sum over prescribed positions.
    Riemann,
}

fn check_positive(j: &FineField) -> Result<()> {
    for (i, &v) in j.values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::ReconstructionFailure {
                x: j.grid.x(i),
                value: v,
            });
        }
    }
    Ok(())
}

/// Panel breakpoints on `[lo, hi]` at fine-grid nodes plus `extra` points.
fn breakpoints(grid: &FineGrid, lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let lo = lo.max(0.0);
    let hi = hi.min(grid.l);
    if hi <= lo {
        return Vec::new();
    }
    let d = grid.spacing();
    let first = (lo / d).ceil() as usize;
    let last = ((hi / d).floor() as usize).min(grid.g - 1);
    let mut b = Vec::with_capacity(last.saturating_sub(first) + 3 + extra.len());
    b.push(lo);
    b.extend((first..=last).map(|i| grid.x(i)));
    b.extend(extra.iter().copied().filter(|&e| e > lo && e < hi));
    b.push(hi);
    b.sort_by(|a, c| a.partial_cmp(c).unwrap());
    b.dedup();
    b
}

/// `T(x) = - int_0^L U'(L / J(y)) int_0^1 psi_eta(x - y - s h / J(y)) ds dy`
/// at the mesh nodes, `J` linear between fine-grid samples.
pub fn stress_int_from_jacobian(
    j: &FineField,
    window: &WindowFunction,
    cfg: &ChainConfig,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    check_positive(j)?;
    mesh.check_window(window)?;
    let h = cfg.h();
    let l = cfg.l;
    let r = window.radius();
    let jmin = j.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = h / jmin;
    let pot = &cfg.potential;
    let values = mesh
        .centers()
        .into_iter()
        .map(|x| {
            let lo = x - r - dmax;
            let hi = x + r;
            let mut extra = vec![x - r, x + r];
            for e in [x - r, x + r] {
                let ey = e.clamp(0.0, l);
                extra.push(e - h / j.at(ey));
            }
            let br = breakpoints(&j.grid, lo, hi, &extra);
            -gauss_legendre_5_panels(&br, |y| {
                let jy = j.at(y);
                let f = pot.force_unchecked(l / jy);
                if f == 0.0 {
                    0.0
                } else {
                    f * window.segment_mean(x, y, y + h / jy)
                }
            })
        })
        .collect();
    MesoField::new(*mesh, window, Quantity::StressInt, values)
}

/// Zero-order interaction stress from the mesh density.
///
/// `Integral` interpolates `(L/M) rho` to `grid` and integrates; `Riemann`
/// sums the bond contributions of the prescribed positions.
pub fn stress_int_zero(
    rho_bar: &MesoField,
    window: &WindowFunction,
    cfg: &ChainConfig,
    mode: StressIntMode,
    grid: &FineGrid,
) -> Result<MesoField> {
    let mesh = rho_bar.mesh;
    match mode {
        StressIntMode::Integral => {
            for (beta, &r) in rho_bar.values.iter().enumerate() {
                if !(r > 0.0) {
                    return Err(Error::ZeroDensity {
                        x: mesh.center(beta),
                        value: r,
                    });
                }
            }
            let j0 = FineField::from_mesh(rho_bar, *grid)?.scale(cfg.l / cfg.m);
            stress_int_from_jacobian(&j0, window, cfg, &mesh)
        }
        StressIntMode::Riemann => {
            let pos = prescribe_positions(rho_bar, cfg)?;
            stress_int_riemann(&pos.q_hat, window, cfg, &mesh)
        }
    }
}

/// Bond-sum stress over arbitrary ordered positions.
pub fn stress_int_riemann(
    q_hat: &[f64],
    window: &WindowFunction,
    cfg: &ChainConfig,
    mesh: &MesoMesh,
) -> Result<MesoField> {
    mesh.check_window(window)?;
    if q_hat.len() != cfg.n {
        return Err(Error::param("q_hat", "particle count differs from config"));
    }
    let values = bond_stress(cfg, q_hat, window, mesh);
    MesoField::new(*mesh, window, Quantity::StressInt, values)
}

/// `T_c(x_alpha) = - sum_{j in cell alpha} dv_j^2 psi_eta(x_alpha - q^_j)`,
/// which equals `-kappa^2` at every node.
pub fn stress_conv_zero(
    prescribed: &PrescribedState,
    window: &WindowFunction,
) -> Result<MesoField> {
    let pos = &prescribed.positions;
    let mesh = pos.mesh;
    mesh.check_window(window)?;
    let values = (0..mesh.b)
        .map(|alpha| {
            let xa = mesh.center(alpha);
            -pos.cell_range(alpha)
                .map(|j| {
                    let dv = prescribed.delta_v[j];
                    dv * dv * window.value(xa - pos.q_hat[j])
                })
                .sum::<f64>()
        })
        .collect();
    MesoField::new(mesh, window, Quantity::StressConv, values)
}

/// Order-`n` stresses from reconstructed `J_n` and `v_n`:
/// `T_c = -(M/L) int (v_n(y) - v_bar(x))^2 psi_eta(x - y) J_n(y) dy` and the
/// interaction stress of [`stress_int_from_jacobian`].
pub fn stress_order_n(
    j_n: &FineField,
    v_n: &FineField,
    v_bar: &MesoField,
    window: &WindowFunction,
    cfg: &ChainConfig,
) -> Result<(MesoField, MesoField)> {
    check_positive(j_n)?;
    if j_n.grid != v_n.grid {
        return Err(Error::GridMismatch {
            expected: j_n.grid.g,
            got: v_n.grid.g,
            expected_l: j_n.grid.l,
            got_l: v_n.grid.l,
        });
    }
    let mesh = v_bar.mesh;
    let t_int = stress_int_from_jacobian(j_n, window, cfg, &mesh)?;
    let r = window.radius();
    let ml = cfg.m / cfg.l;
    let conv = mesh
        .centers()
        .into_iter()
        .zip(&v_bar.values)
        .map(|(x, &vb)| {
            let br = breakpoints(&j_n.grid, x - r, x + r, &[]);
            -ml * gauss_legendre_5_panels(&br, |y| {
                let dv = v_n.at(y) - vb;
                dv * dv * window.value(x - y) * j_n.at(y)
            })
        })
        .collect();
    let t_conv = MesoField::new(mesh, window, Quantity::StressConv, conv)?;
    Ok((t_conv, t_int))
}

/// Local equation of state `T = -U'(M / rho)`.
pub fn local_eos(rho: f64, cfg: &ChainConfig) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::ZeroDensity {
            x: f64::NAN,
            value: rho,
        });
    }
    Ok(-cfg.potential.force(cfg.m / rho)?)
}
