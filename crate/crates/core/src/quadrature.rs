//! Fixed-order quadrature rules.

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];

const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// 5-point Gauss-Legendre rule on `[a, b]`; exact for polynomials of degree 9.
#[inline]
pub fn gauss_legendre_5(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL5_NODES
        .iter()
        .zip(&GL5_WEIGHTS)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Composite 5-point rule over consecutive breakpoints.
pub fn gauss_legendre_5_panels(breaks: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    breaks
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gauss_legendre_5(w[0], w[1], &f))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_nine() {
        let v = gauss_legendre_5(-1.0, 2.0, |x| x.powi(9) - 3.0 * x.powi(4) + 1.0);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - 3.0 * (2f64.powi(5) + 1.0) / 5.0 + 3.0;
        assert!((v - exact).abs() < 1e-11 * exact.abs());
    }

    #[test]
    fn panels_skip_empty_intervals() {
        let v = gauss_legendre_5_panels(&[0.0, 0.5, 0.5, 1.0], |x| 2.0 * x);
        assert!((v - 1.0).abs() < 1e-15);
    }
}
