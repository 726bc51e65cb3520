//! Averaging kernels `psi_eta` and the mesoscale mesh they are evaluated on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_5;

/// Truncation radius of the gaussian kernel, in units of `eta * l`.
pub const GAUSSIAN_CUTOFF: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Normalized indicator of an interval of length `eta * l`.
    Box,
    /// `exp(-(x / eta l)^2)`, truncated at `4 eta l` and renormalized.
    Gaussian,
}

impl std::str::FromStr for WindowKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box" => Ok(WindowKind::Box),
            "gaussian" | "gaussian-truncated" => Ok(WindowKind::Gaussian),
            other => Err(Error::Config(format!("unknown window kind `{other}`"))),
        }
    }
}

/// Unit-mass window `psi_eta(x) = psi(x / eta) / eta` on a domain of length `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowFunction {
    pub kind: WindowKind,
    pub eta: f64,
    pub l: f64,
}

impl WindowFunction {
    pub fn new(kind: WindowKind, eta: f64, l: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::param(
                "eta",
                format!("must lie in (0, 1], got {eta}"),
            ));
        }
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::param("l", format!("must be positive, got {l}")));
        }
        Ok(Self { kind, eta, l })
    }

    pub fn boxcar(eta: f64, l: f64) -> Result<Self> {
        Self::new(WindowKind::Box, eta, l)
    }

    pub fn gaussian(eta: f64, l: f64) -> Result<Self> {
        Self::new(WindowKind::Gaussian, eta, l)
    }

    /// Window length scale `eta * l`.
    pub fn width(&self) -> f64 {
        self.eta * self.l
    }

    /// Half-width of the support.
    pub fn radius(&self) -> f64 {
        match self.kind {
            WindowKind::Box => 0.5 * self.width(),
            WindowKind::Gaussian => GAUSSIAN_CUTOFF * self.width(),
        }
    }

    fn gaussian_norm(&self) -> f64 {
        self.width() * std::f64::consts::PI.sqrt() * libm::erf(GAUSSIAN_CUTOFF)
    }

    /// `psi_eta(d)` where `d = x - y`.
    ///
    /// The box support is `(-w/2, w/2]` in `d`, so a particle sitting exactly
    /// on a cell boundary is counted in the cell to its right.
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        let w = self.width();
        match self.kind {
            WindowKind::Box => {
                if d > -0.5 * w && d <= 0.5 * w {
                    1.0 / w
                } else {
                    0.0
                }
            }
            WindowKind::Gaussian => {
                // slack keeps lattice points that sit on the cutoff up to rounding
                if d.abs() <= GAUSSIAN_CUTOFF * w * (1.0 + 1e-12) {
                    let u = d / w;
                    (-u * u).exp() / self.gaussian_norm()
                } else {
                    0.0
                }
            }
        }
    }

    /// `int_lo^hi psi_eta(u) du`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let r = self.radius();
        let a = lo.max(-r);
        let b = hi.min(r);
        if b <= a {
            return 0.0;
        }
        match self.kind {
            WindowKind::Box => (b - a) / self.width(),
            WindowKind::Gaussian => {
                let w = self.width();
                (libm::erf(b / w) - libm::erf(a / w)) / (2.0 * libm::erf(GAUSSIAN_CUTOFF))
            }
        }
    }

    /// Mean of `psi_eta(x - y)` along the segment `y in [a, b]`, i.e.
    /// `int_0^1 psi_eta(x - s b - (1 - s) a) ds`.
    ///
    /// Closed form (interval overlap) for the box; 5-point Gauss-Legendre for
    /// the gaussian.
    pub fn segment_mean(&self, x: f64, a: f64, b: f64) -> f64 {
        let len = b - a;
        if len == 0.0 {
            return self.value(x - a);
        }
        match self.kind {
            WindowKind::Box => {
                let (lo, hi) = if len > 0.0 {
                    (x - b, x - a)
                } else {
                    (x - a, x - b)
                };
                self.mass_between(lo, hi) / len.abs()
            }
            WindowKind::Gaussian => gauss_legendre_5(0.0, 1.0, |s| self.value(x - a - s * len)),
        }
    }
}

/// Mesoscale mesh of `b` cells of width `l / b` with centers `(beta - 1/2) l / b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MesoMesh {
    pub b: usize,
    pub l: f64,
}

impl MesoMesh {
    pub fn new(b: usize, l: f64) -> Result<Self> {
        if b == 0 {
            return Err(Error::param("b", "need at least one cell"));
        }
        if !(l > 0.0) {
            return Err(Error::param("l", format!("must be positive, got {l}")));
        }
        Ok(Self { b, l })
    }

    /// Cell width `L_eta`.
    pub fn l_eta(&self) -> f64 {
        self.l / self.b as f64
    }

    pub fn eta(&self) -> f64 {
        1.0 / self.b as f64
    }

    /// Center of the zero-based cell `beta`.
    pub fn center(&self, beta: usize) -> f64 {
        (beta as f64 + 0.5) * self.l_eta()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.b).map(|i| self.center(i)).collect()
    }

    /// Zero-based cell containing `x`, cells being `[left, right)`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(x >= 0.0 && x < self.l) {
            return None;
        }
        Some(((x / self.l_eta()).floor() as usize).min(self.b - 1))
    }

    /// Checks that `window` is the one this mesh is built for (`b * eta = 1`).
    pub fn check_window(&self, window: &WindowFunction) -> Result<()> {
        if (window.eta * self.b as f64 - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "eta",
                format!(
                    "b * eta must equal 1 (b = {}, eta = {})",
                    self.b, window.eta
                ),
            ));
        }
        if (window.l - self.l).abs() > 1e-12 * self.l {
            return Err(Error::param(
                "l",
                format!(
                    "window length {} differs from mesh length {}",
                    window.l, self.l
                ),
            ));
        }
        Ok(())
    }

    /// Nodes lying within `max(eta l, kernel radius)` of a wall.
    pub fn boundary_flags(&self, window: &WindowFunction) -> Vec<bool> {
        let reach = self.l_eta().max(window.radius());
        self.centers()
            .into_iter()
            .map(|x| x.min(self.l - x) < reach - 1e-12 * self.l)
            .collect()
    }

    /// Index range of nodes with `lo <= x_beta <= hi`.
    pub(crate) fn nodes_near(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let le = self.l_eta();
        let first = ((lo / le - 0.5).ceil()).max(0.0);
        let last = ((hi / le - 0.5).floor()).min(self.b as f64 - 1.0);
        if last < first {
            return 0..0;
        }
        first as usize..last as usize + 1
    }
}
