/// Outcome of a one-dimensional root search on `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    pub gamma: f64,
    pub iterations: usize,
    /// False when `max_iter` ran out before `|dphi| < tol`.
    pub converged: bool,
}

/// Maximize a concave function on `[0, 1]` by Newton-Raphson on its
/// derivative, falling back to bisection whenever an iterate leaves the
/// current bracket.
pub fn newton_linesearch(
    dphi: impl Fn(f64) -> f64,
    d2phi: impl Fn(f64) -> f64,
    gamma0: f64,
    tol: f64,
    max_iter: usize,
) -> LineSearch {
    let d0 = dphi(0.0);
    if d0 <= 0.0 {
        return LineSearch { gamma: 0.0, iterations: 0, converged: true };
    }
    let d1 = dphi(1.0);
    if d1 >= 0.0 {
        return LineSearch { gamma: 1.0, iterations: 0, converged: true };
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut g = gamma0.clamp(0.0, 1.0);
    if g <= lo || g >= hi {
        g = 0.5;
    }
    for it in 1..=max_iter {
        let d = dphi(g);
        if d.abs() < tol {
            return LineSearch { gamma: g, iterations: it, converged: true };
        }
        if d > 0.0 {
            lo = g;
        } else {
            hi = g;
        }
        if hi - lo < 1e-15 {
            return LineSearch { gamma: 0.5 * (lo + hi), iterations: it, converged: true };
        }
        let h = d2phi(g);
        let next = if h < 0.0 { g - d / h } else { f64::NAN };
        g = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    log::warn!("line search hit the iteration cap; bracket [{lo}, {hi}]");
    LineSearch { gamma: 0.5 * (lo + hi), iterations: max_iter, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn linear_derivative() {
        let r = newton_linesearch(|g| 1.0 - 2.0 * g, |_| -2.0, 0.0, 1e-10, 50);
        assert!((r.gamma - 0.5).abs() < 1e-10);
    }

    #[test]
    fn boundaries() {
        assert_eq!(newton_linesearch(|_| 1.0, |_| 0.0, 0.5, 1e-10, 50).gamma, 1.0);
        assert_eq!(newton_linesearch(|_| -1.0, |_| 0.0, 0.5, 1e-10, 50).gamma, 0.0);
    }

    #[test]
    fn random_quadratics() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let root: f64 = rng.gen_range(0.01..0.99);
            let a: f64 = rng.gen_range(0.1..10.0);
            let r = newton_linesearch(|g| -a * (g - root), |_| -a, rng.gen(), 1e-12, 50);
            assert!((r.gamma - root).abs() < 1e-8);
        }
    }

    #[test]
    fn steep_log_barrier_uses_bisection() {
        // derivative of ln(g) + ln(1 - g) - 30 g, root near the left edge
        let d = |g: f64| 1.0 / g - 1.0 / (1.0 - g) - 30.0;
        let d2 = |g: f64| -1.0 / (g * g) - 1.0 / ((1.0 - g) * (1.0 - g));
        let r = newton_linesearch(d, d2, 0.9, 1e-10, 50);
        assert!(r.converged);
        assert!(d(r.gamma).abs() < 1e-8);
    }
}
