//! Discretized convolution `R_eta` on a uniform fine grid over `[0, L]` and
//! Landweber partial Neumann sums `sum_{k<=n} (I - R)^k` for recovering
//! microscale fields from their averages.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::averaging::MesoField;
use crate::chain::ChainConfig;
use crate::error::{Error, Result};
use crate::window::{WindowFunction, WindowKind};

/// Default fine-grid size for a chain of `n` particles.
pub fn default_grid_size(n: usize) -> usize {
    n.clamp(2, 4096)
}

/// `g` uniformly spaced nodes `x_i = i L / (g - 1)`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FineGrid {
    pub g: usize,
    pub l: f64,
}

impl FineGrid {
    pub fn new(g: usize, l: f64) -> Result<Self> {
        if g < 2 {
            return Err(Error::param("g", "fine grid needs at least two nodes"));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::param("l", format!("must be positive, got {l}")));
        }
        Ok(Self { g, l })
    }

    pub fn spacing(&self) -> f64 {
        self.l / (self.g - 1) as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        // exact endpoints
        if i + 1 == self.g {
            self.l
        } else {
            i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.g).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.g {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    fn same_as(&self, other: &FineGrid) -> Result<()> {
        if self.g != other.g || (self.l - other.l).abs() > 1e-12 * self.l {
            return Err(Error::GridMismatch {
                expected: self.g,
                got: other.g,
                expected_l: self.l,
                got_l: other.l,
            });
        }
        Ok(())
    }

    /// Index of the node at or left of `x`, clamped so `i + 1 < g`.
    #[inline]
    pub(crate) fn cell(&self, x: f64) -> usize {
        let u = x / self.spacing();
        if u <= 0.0 {
            0
        } else {
            (u.floor() as usize).min(self.g - 2)
        }
    }
}

/// A field sampled at the nodes of a [`FineGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FineField {
    pub grid: FineGrid,
    pub values: Vec<f64>,
}

impl FineField {
    pub fn new(grid: FineGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.g {
            return Err(Error::GridMismatch {
                expected: grid.g,
                got: values.len(),
                expected_l: grid.l,
                got_l: grid.l,
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("values", format!("non-finite sample {bad}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: FineGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn constant(grid: FineGrid, c: f64) -> Result<Self> {
        Self::new(grid, vec![c; grid.g])
    }

    /// Piecewise-linear interpolation of mesh node values, held constant
    /// between the walls and the first/last node.
    pub fn from_mesh(field: &MesoField, grid: FineGrid) -> Result<Self> {
        if (field.mesh.l - grid.l).abs() > 1e-12 * grid.l {
            return Err(Error::GridMismatch {
                expected: grid.g,
                got: field.mesh.b,
                expected_l: grid.l,
                got_l: field.mesh.l,
            });
        }
        let le = field.mesh.l_eta();
        let b = field.mesh.b;
        let vals = &field.values;
        let values = grid
            .nodes()
            .into_iter()
            .map(|x| {
                let u = x / le - 0.5;
                if u <= 0.0 {
                    vals[0]
                } else if u >= (b - 1) as f64 {
                    vals[b - 1]
                } else {
                    let k = u.floor() as usize;
                    let s = u - k as f64;
                    (1.0 - s) * vals[k] + s * vals[k + 1]
                }
            })
            .collect();
        Self::new(grid, values)
    }

    /// Linear interpolation at an arbitrary point of `[0, L]`.
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        let i = self.grid.cell(x);
        let s = ((x - self.grid.x(i)) / self.grid.spacing()).clamp(0.0, 1.0);
        (1.0 - s) * self.values[i] + s * self.values[i + 1]
    }

    /// Trapezoid L2 norm.
    pub fn norm(&self) -> f64 {
        weighted_norm(&self.grid, &self.values)
    }

    pub fn scale(&self, a: f64) -> FineField {
        FineField {
            grid: self.grid,
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// Writes `i,x_i,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("i,x_i,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{:e},{:e}\n", self.grid.x(i), v));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn weighted_norm(grid: &FineGrid, v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .map(|(i, x)| grid.weight(i) * x * x)
        .sum::<f64>()
        .sqrt()
}

/// One banded row: weights for nodes `start..start + w.len()`.
#[derive(Debug, Clone, PartialEq)]
struct Row {
    start: usize,
    w: Vec<f64>,
}

impl Row {
    #[inline]
    fn dot(&self, f: &[f64]) -> f64 {
        self.w
            .iter()
            .zip(&f[self.start..self.start + self.w.len()])
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// `R_eta[f](x) = int_0^L psi_eta(x - y) f(y) dy` on a fine grid.
///
/// Box rows integrate the kernel exactly against the nearest-node
/// interpolant of `f`; gaussian rows use trapezoid weights normalized so
/// that rows away from the walls sum to one.
#[derive(Debug, Clone)]
pub struct ConvOperator {
    window: WindowFunction,
    grid: FineGrid,
    rows: Vec<Row>,
    gauss_sum: f64,
}

impl ConvOperator {
    pub fn new(window: WindowFunction, grid: FineGrid) -> Result<Self> {
        if (window.l - grid.l).abs() > 1e-12 * grid.l {
            return Err(Error::param("l", "window and grid lengths differ"));
        }
        let d = grid.spacing();
        let gauss_sum = match window.kind {
            WindowKind::Box => 1.0,
            WindowKind::Gaussian => {
                let m = (window.radius() / d).floor() as i64;
                (-m..=m).map(|k| d * window.value(k as f64 * d)).sum()
            }
        };
        let mut op = Self {
            window,
            grid,
            rows: Vec::new(),
            gauss_sum,
        };
        op.rows = (0..grid.g).map(|i| op.row_at(grid.x(i))).collect();
        Ok(op)
    }

    pub fn window(&self) -> &WindowFunction {
        &self.window
    }

    pub fn grid(&self) -> &FineGrid {
        &self.grid
    }

    fn row_at(&self, x: f64) -> Row {
        let g = &self.grid;
        let d = g.spacing();
        let r = self.window.radius();
        let lo = (((x - r) / d).floor() - 1.0).max(0.0) as usize;
        let hi = ((((x + r) / d).ceil() + 1.0) as usize).min(g.g - 1);
        let w = (lo..=hi)
            .map(|k| match self.window.kind {
                WindowKind::Box => {
                    let xk = g.x(k);
                    let a = (xk - 0.5 * d).max(0.0);
                    let b = (xk + 0.5 * d).min(g.l);
                    // psi(x - y) over y in [a, b]
                    self.window.mass_between(x - b, x - a)
                }
                WindowKind::Gaussian => {
                    g.weight(k) * self.window.value(x - g.x(k)) / self.gauss_sum
                }
            })
            .collect();
        Row { start: lo, w }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.w.iter().sum()).collect()
    }

    /// Dense `g x g` matrix of the operator.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut full = vec![0.0; self.grid.g];
                full[r.start..r.start + r.w.len()].copy_from_slice(&r.w);
                full
            })
            .collect()
    }

    fn apply_raw(&self, f: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.dot(f);
        }
    }

    pub fn apply(&self, f: &FineField) -> Result<FineField> {
        self.grid.same_as(&f.grid)?;
        let mut out = vec![0.0; self.grid.g];
        self.apply_raw(&f.values, &mut out);
        Ok(FineField {
            grid: self.grid,
            values: out,
        })
    }

    /// `R[f]` evaluated at arbitrary points.
    pub fn apply_at(&self, f: &FineField, xs: &[f64]) -> Result<Vec<f64>> {
        self.grid.same_as(&f.grid)?;
        Ok(xs.iter().map(|&x| self.row_at(x).dot(&f.values)).collect())
    }

    /// Power-iteration estimate of `||I - R||` in the trapezoid L2 norm.
    pub fn norm_i_minus_r(&self, iters: usize) -> f64 {
        let g = self.grid.g;
        let mut x: Vec<f64> = (0..g)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } + 0.1 * ((i as f64) * 0.37).sin())
            .collect();
        let mut y = vec![0.0; g];
        let mut est = 0.0;
        for _ in 0..iters {
            let nx = weighted_norm(&self.grid, &x);
            x.iter_mut().for_each(|v| *v /= nx);
            self.apply_raw(&x, &mut y);
            for (yi, xi) in y.iter_mut().zip(&x) {
                *yi = xi - *yi;
            }
            est = weighted_norm(&self.grid, &y);
            std::mem::swap(&mut x, &mut y);
        }
        est
    }
}

/// `sum_{k=0}^{n} (I - R)^k gbar` via `g_{k+1} = gbar + (I - R) g_k`.
pub fn landweber_reconstruct(op: &ConvOperator, gbar: &FineField, n: usize) -> Result<FineField> {
    op.grid.same_as(&gbar.grid)?;
    let mut cur = gbar.values.clone();
    let mut rg = vec![0.0; cur.len()];
    for _ in 0..n {
        op.apply_raw(&cur, &mut rg);
        for ((c, r), b) in cur.iter_mut().zip(&rg).zip(&gbar.values) {
            *c = b + *c - r;
        }
    }
    Ok(FineField {
        grid: op.grid,
        values: cur,
    })
}

/// `J_n = (L/M) R^{-1}_n [rho_bar]`.
pub fn reconstruct_j(
    op: &ConvOperator,
    rho_bar: &FineField,
    n: usize,
    cfg: &ChainConfig,
) -> Result<FineField> {
    Ok(landweber_reconstruct(op, rho_bar, n)?.scale(cfg.l / cfg.m))
}

/// `v_n = R^{-1}_n [rho v] / R^{-1}_n [rho]`.
pub fn reconstruct_v(
    op: &ConvOperator,
    rho_bar: &FineField,
    mom_bar: &FineField,
    n: usize,
    cfg: &ChainConfig,
) -> Result<FineField> {
    let den = landweber_reconstruct(op, rho_bar, n)?;
    let num = landweber_reconstruct(op, mom_bar, n)?;
    let floor = 1e-8 * cfg.m / cfg.l;
    let mut values = Vec::with_capacity(den.values.len());
    for (i, (a, b)) in num.values.iter().zip(&den.values).enumerate() {
        if !(*b >= floor) {
            return Err(Error::NearVacuum {
                x: op.grid.x(i),
                value: *b,
            });
        }
        values.push(a / b);
    }
    FineField::new(op.grid, values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StopResult {
    pub order: usize,
    /// `||R g_k - gbar||` for `k = 0..=order` (or `max_n` when the target is missed).
    pub residuals: Vec<f64>,
}

/// Residual norms `||R g_k - gbar||` for `k = 0..=n`.
pub fn residual_path(op: &ConvOperator, gbar: &FineField, n: usize) -> Result<Vec<f64>> {
    op.grid.same_as(&gbar.grid)?;
    let mut cur = gbar.values.clone();
    let mut rg = vec![0.0; cur.len()];
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        op.apply_raw(&cur, &mut rg);
        let res: Vec<f64> = rg.iter().zip(&gbar.values).map(|(a, b)| a - b).collect();
        out.push(weighted_norm(&op.grid, &res));
        if k < n {
            for ((c, r), b) in cur.iter_mut().zip(&rg).zip(&gbar.values) {
                *c = b + *c - r;
            }
        }
    }
    Ok(out)
}

/// Smallest `n <= max_n` whose residual is at most `tau_delta`, else `max_n`.
pub fn discrepancy_stop(
    op: &ConvOperator,
    gbar: &FineField,
    max_n: usize,
    tau_delta: f64,
) -> Result<StopResult> {
    if !(tau_delta >= 0.0) {
        return Err(Error::param("tau_delta", "must be non-negative"));
    }
    let path = residual_path(op, gbar, max_n)?;
    let order = path.iter().position(|&r| r <= tau_delta).unwrap_or(max_n);
    Ok(StopResult {
        order,
        residuals: path[..=order].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::MesoMesh;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ops(g: usize, eta: f64) -> Vec<ConvOperator> {
        let grid = FineGrid::new(g, 1.0).unwrap();
        vec![
            ConvOperator::new(WindowFunction::boxcar(eta, 1.0).unwrap(), grid).unwrap(),
            ConvOperator::new(WindowFunction::gaussian(eta, 1.0).unwrap(), grid).unwrap(),
        ]
    }

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    #[test]
    fn grid_geometry() {
        let g = FineGrid::new(5, 2.0).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let total: f64 = (0..5).map(|i| g.weight(i)).sum();
        assert_relative_eq!(total, 2.0);
        assert_eq!(g.cell(2.0), 3);
        assert_eq!(g.cell(-1.0), 0);
    }

    #[test]
    fn row_sums_are_one_inside_and_at_most_one_near_walls() {
        for op in ops(401, 0.1) {
            let sums = op.row_sums();
            let r = op.window().radius();
            for (i, s) in sums.iter().enumerate() {
                let x = op.grid().x(i);
                assert!(*s <= 1.0 + 1e-12, "row {i} sums to {s}");
                if x - r > 0.01 && x + r < 0.99 {
                    assert_relative_eq!(*s, 1.0, max_relative = 1e-12);
                }
            }
            assert!(sums[0] < 0.75);
        }
    }

    #[test]
    fn constants_are_fixed_in_the_interior() {
        // five sweeps carry the wall truncation 5 r inward
        for op in ops(401, 0.02) {
            let f = FineField::constant(*op.grid(), 2.5).unwrap();
            let rf = op.apply(&f).unwrap();
            assert_relative_eq!(rf.values[200], 2.5, max_relative = 1e-12);
            let g5 = landweber_reconstruct(&op, &f, 5).unwrap();
            assert_relative_eq!(g5.values[200], 2.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn impulse_response_is_the_kernel() {
        let grid = FineGrid::new(1001, 1.0).unwrap();
        let w = WindowFunction::gaussian(0.05, 1.0).unwrap();
        let op = ConvOperator::new(w, grid).unwrap();
        let mut v = vec![0.0; 1001];
        v[500] = 1.0 / grid.spacing();
        let rf = op.apply(&FineField::new(grid, v).unwrap()).unwrap();
        for i in [450, 480, 500, 530] {
            let expected = w.value(grid.x(i) - 0.5);
            assert_relative_eq!(rf.values[i], expected, max_relative = 1e-6);
        }
    }

    #[test]
    fn apply_matches_dense_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for op in ops(64, 0.125) {
            let f: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let a = op.dense();
            let expected = dense_mul(&a, &f);
            let got = op
                .apply(&FineField::new(*op.grid(), f.clone()).unwrap())
                .unwrap();
            for (x, y) in got.values.iter().zip(&expected) {
                assert_relative_eq!(*x, *y, max_relative = 1e-13, epsilon = 1e-15);
            }
            let at = op
                .apply_at(&FineField::new(*op.grid(), f).unwrap(), &op.grid().nodes())
                .unwrap();
            assert_eq!(at, got.values);
        }
    }

    #[test]
    fn order_zero_is_identity_and_low_orders_match_explicit_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for op in ops(100, 0.1) {
            let g: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..2.0)).collect();
            let gbar = FineField::new(*op.grid(), g.clone()).unwrap();
            assert_eq!(landweber_reconstruct(&op, &gbar, 0).unwrap(), gbar);
            // g1 = 2 gbar - R gbar
            let r = op.apply(&gbar).unwrap().values;
            let g1 = landweber_reconstruct(&op, &gbar, 1).unwrap();
            for i in 0..100 {
                assert_relative_eq!(
                    g1.values[i],
                    2.0 * g[i] - r[i],
                    max_relative = 1e-13,
                    epsilon = 1e-14
                );
            }
            // g2 = 3 gbar - 3 R gbar + R^2 gbar
            let rr = op
                .apply(&FineField::new(*op.grid(), r.clone()).unwrap())
                .unwrap()
                .values;
            let g2 = landweber_reconstruct(&op, &gbar, 2).unwrap();
            for i in 0..100 {
                let e = 3.0 * g[i] - 3.0 * r[i] + rr[i];
                assert_relative_eq!(g2.values[i], e, max_relative = 1e-12, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn round_trip_improves_smooth_reconstruction() {
        let grid = FineGrid::new(1001, 1.0).unwrap();
        for w in [
            WindowFunction::gaussian(0.05, 1.0).unwrap(),
            WindowFunction::boxcar(0.05, 1.0).unwrap(),
        ] {
            let op = ConvOperator::new(w, grid).unwrap();
            let f =
                FineField::from_fn(grid, |x| 1.0 + 0.1 * (2.0 * std::f64::consts::PI * x).sin())
                    .unwrap();
            let gbar = op.apply(&f).unwrap();
            // interior error only: walls truncate the kernel
            let err = |g: &FineField| -> f64 {
                (200..800)
                    .map(|i| (g.values[i] - f.values[i]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            };
            let e0 = err(&landweber_reconstruct(&op, &gbar, 0).unwrap());
            let e5 = err(&landweber_reconstruct(&op, &gbar, 5).unwrap());
            assert!(e5 < 0.1 * e0, "{e5} vs {e0}");
        }
    }

    #[test]
    fn reconstructions_of_constant_fields() {
        let pot = crate::chain::PowerLawPotential::new(100.0, 2.0, 1.0).unwrap();
        let cfg = ChainConfig::new(1000, 1.0, 1.0, pot).unwrap();
        let grid = FineGrid::new(501, 1.0).unwrap();
        let op = ConvOperator::new(WindowFunction::boxcar(0.1, 1.0).unwrap(), grid).unwrap();
        let rho = FineField::constant(grid, 1.0).unwrap();
        let j = reconstruct_j(&op, &rho, 3, &cfg).unwrap();
        assert_relative_eq!(j.values[250], 1.0, max_relative = 1e-12);
        let mom = rho.scale(0.4);
        let v = reconstruct_v(&op, &rho, &mom, 3, &cfg).unwrap();
        assert!(v.values.iter().all(|x| (x - 0.4).abs() < 1e-12));
        let zero = rho.scale(0.0);
        let v0 = reconstruct_v(&op, &rho, &zero, 3, &cfg).unwrap();
        assert!(v0.values.iter().all(|x| *x == 0.0));
        assert!(matches!(
            reconstruct_v(&op, &zero, &zero, 0, &cfg),
            Err(Error::NearVacuum { .. })
        ));
    }

    #[test]
    fn discrepancy_stop_limits() {
        let grid = FineGrid::new(201, 1.0).unwrap();
        let op = ConvOperator::new(WindowFunction::gaussian(0.05, 1.0).unwrap(), grid).unwrap();
        let f = FineField::from_fn(grid, |x| (3.0 * x).sin()).unwrap();
        let gbar = op.apply(&f).unwrap();
        assert_eq!(discrepancy_stop(&op, &gbar, 10, 1e9).unwrap().order, 0);
        let s = discrepancy_stop(&op, &gbar, 10, 0.0).unwrap();
        assert_eq!(s.order, 10);
        assert_eq!(s.residuals.len(), 11);
    }

    #[test]
    fn mesh_interpolation_is_linear_with_flat_ends() {
        let mesh = MesoMesh::new(4, 1.0).unwrap();
        let w = WindowFunction::boxcar(0.25, 1.0).unwrap();
        let field = MesoField::new(
            mesh,
            &w,
            crate::averaging::Quantity::Density,
            vec![1.0, 2.0, 3.0, 5.0],
        )
        .unwrap();
        let grid = FineGrid::new(9, 1.0).unwrap();
        let f = FineField::from_mesh(&field, grid).unwrap();
        assert_eq!(f.values[0], 1.0);
        assert_eq!(f.values[1], 1.0);
        assert_relative_eq!(f.values[2], 1.5);
        assert_relative_eq!(f.values[4], 2.5);
        assert_eq!(f.values[8], 5.0);
        assert_relative_eq!(f.at(0.4375), 2.25);
    }

    #[test]
    fn gaussian_operator_is_nonexpansive() {
        for g in [64, 128, 512] {
            let op = &ops(g, 0.05)[1];
            let nrm = op.norm_i_minus_r(500);
            assert!(nrm <= 1.0 + 1e-10, "g = {g}: {nrm}");
        }
    }
}
