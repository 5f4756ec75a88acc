use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the dot-product kernel on the sphere,
/// `kappa(t) = exp(alpha * (t - 1))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub alpha: f64,
    pub eigen_floor: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { alpha: 1.0, eigen_floor: 1e-6 }
    }
}

impl KernelConfig {
    pub fn new(alpha: f64, eigen_floor: f64) -> Result<Self> {
        let cfg = Self { alpha, eigen_floor };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("kernel alpha must be positive, got {}", self.alpha)));
        }
        if !(self.eigen_floor > 0.0 && self.eigen_floor.is_finite()) {
            return Err(Error::Config(format!(
                "eigen_floor must be positive, got {}",
                self.eigen_floor
            )));
        }
        Ok(())
    }

    /// Kernel value and derivative without clamping the argument. The
    /// exponential form is smooth everywhere, which keeps network gradients
    /// consistent when rounding pushes a cosine marginally past one.
    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let v = (self.alpha * (t - 1.0)).exp();
        (v, self.alpha * v)
    }
}

/// `kappa(t)` and its derivative, with `t` clamped to `[-1, 1]`.
pub fn kappa(t: f64, cfg: &KernelConfig) -> (f64, f64) {
    cfg.eval(t.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let cfg = KernelConfig::default();
        assert_eq!(kappa(1.0, &cfg).0, 1.0);
        assert_eq!(kappa(1.0, &KernelConfig { alpha: 7.5, ..cfg }).0, 1.0);
        assert!((kappa(0.0, &cfg).0 - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_difference() {
        for &alpha in &[0.5, 1.0, 4.0] {
            let cfg = KernelConfig { alpha, eigen_floor: 1e-6 };
            for i in 0..21 {
                let t = -0.9 + 0.09 * f64::from(i);
                let h = 1e-6;
                let fd = (kappa(t + h, &cfg).0 - kappa(t - h, &cfg).0) / (2.0 * h);
                let d = kappa(t, &cfg).1;
                assert!(((fd - d) / d).abs() < 1e-5, "alpha={alpha} t={t}");
            }
        }
    }

    #[test]
    fn clamps_and_is_monotone() {
        let cfg = KernelConfig::default();
        assert_eq!(kappa(1.0 + 1e-12, &cfg).0, 1.0);
        assert_eq!(kappa(-3.0, &cfg).0, kappa(-1.0, &cfg).0);
        let mut prev = 0.0;
        for i in 0..=40 {
            let v = kappa(-1.0 + 0.05 * f64::from(i), &cfg).0;
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(KernelConfig::new(0.0, 1e-6).is_err());
        assert!(KernelConfig::new(1.0, 0.0).is_err());
    }
}
