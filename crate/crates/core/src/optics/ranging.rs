use super::OpticsError;
use serde::{Deserialize, Serialize};

/// Fitted map from peak-focus motor position to object distance,
/// `h(rho) = f g / (g - f) + c` with a linear motor-to-image-distance
/// response `g = kappa * rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangingModel {
    /// Image distance per motor unit, cm.
    pub kappa: f64,
    /// Equivalent focal length, cm.
    pub focal: f64,
    /// Lens-centre offset, cm.
    pub offset: f64,
}

impl RangingModel {
    pub fn new(kappa: f64, focal: f64, offset: f64) -> Result<Self, OpticsError> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(OpticsError::InvalidParameter(format!(
                "kappa must be positive, got {kappa}"
            )));
        }
        if !(focal.is_finite() && focal > 0.0) {
            return Err(OpticsError::InvalidParameter(format!(
                "focal length must be positive, got {focal}"
            )));
        }
        if !offset.is_finite() {
            return Err(OpticsError::InvalidParameter("offset must be finite".into()));
        }
        Ok(Self {
            kappa,
            focal,
            offset,
        })
    }

    /// Smallest motor position with a real object distance (`kappa * rho = f`).
    pub fn min_focus_position(&self) -> f64 {
        self.focal / self.kappa
    }

    /// Object distance for a peak-focus motor position.
    pub fn depth(&self, rho: f64) -> Result<f64, OpticsError> {
        let g = self.kappa * rho;
        if !(g > self.focal) || !g.is_finite() {
            return Err(OpticsError::BeyondMinimumFocus { rho });
        }
        Ok(self.focal * g / (g - self.focal) + self.offset)
    }

    /// Inverse of [`depth`](Self::depth): motor position that focuses at `u`.
    pub fn motor_position(&self, u: f64) -> Result<f64, OpticsError> {
        let a = u - self.offset;
        if !(a > self.focal) || !a.is_finite() {
            return Err(OpticsError::InvalidParameter(format!(
                "depth {u} is not beyond the asymptote {}",
                self.focal + self.offset
            )));
        }
        Ok(a * self.focal / (a - self.focal) / self.kappa)
    }

    /// Partial derivatives of `h(rho)` with respect to `(kappa, f, c)`.
    pub(crate) fn gradient(&self, rho: f64) -> [f64; 3] {
        let g = self.kappa * rho;
        let d = g - self.focal;
        let d2 = d * d;
        [
            -self.focal * self.focal * rho / d2,
            g * g / d2,
            1.0,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fitted() -> RangingModel {
        RangingModel::new(0.3922, 0.7431, 0.7577).unwrap()
    }

    #[test]
    fn depth_with_calibrated_constants() {
        // 0.7431 * 1.1766 / (1.1766 - 0.7431) + 0.7577
        let g = 0.3922 * 3.0;
        let expected = 0.7431 * g / (g - 0.7431) + 0.7577;
        let u = fitted().depth(3.0).unwrap();
        assert_relative_eq!(u, expected, max_relative = 1e-14);
        assert_relative_eq!(u, 2.7746, epsilon = 5e-5);
    }

    #[test]
    fn depth_asymptote_and_symmetry() {
        let m = RangingModel::new(1.0, 1.0, 0.0).unwrap();
        assert_relative_eq!(m.depth(1e9).unwrap(), 1.0, epsilon = 1e-8);
        let m = RangingModel::new(1.0, 0.5, 0.0).unwrap();
        assert_relative_eq!(m.depth(1.0).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn depth_domain() {
        let m = fitted();
        let edge = m.min_focus_position();
        assert!(matches!(m.depth(edge), Err(OpticsError::BeyondMinimumFocus { .. })));
        assert!(m.depth(edge * 0.5).is_err());
        assert!(m.depth(edge * 1.0001).is_ok());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = fitted();
        let rho = 2.0;
        let g = m.gradient(rho);
        let h = 1e-7;
        let fd = |dk: f64, df: f64, dc: f64| {
            let p = RangingModel::new(m.kappa + dk, m.focal + df, m.offset + dc).unwrap();
            let q = RangingModel::new(m.kappa - dk, m.focal - df, m.offset - dc).unwrap();
            (p.depth(rho).unwrap() - q.depth(rho).unwrap()) / (2.0 * (dk + df + dc))
        };
        assert_relative_eq!(g[0], fd(h, 0.0, 0.0), max_relative = 1e-5);
        assert_relative_eq!(g[1], fd(0.0, h, 0.0), max_relative = 1e-5);
        assert_relative_eq!(g[2], fd(0.0, 0.0, h), max_relative = 1e-5);
    }

    proptest! {
        #[test]
        fn strictly_decreasing_and_bounded(a in 1.0001f64..50.0, step in 1e-4f64..5.0) {
            let m = fitted();
            let r1 = m.min_focus_position() * a;
            let r2 = r1 + step;
            let (u1, u2) = (m.depth(r1).unwrap(), m.depth(r2).unwrap());
            prop_assert!(u2 < u1);
            prop_assert!(u2 > m.focal + m.offset);
        }

        #[test]
        fn motor_position_inverts_depth(u in 2.0f64..500.0) {
            let m = fitted();
            let rho = m.motor_position(u).unwrap();
            prop_assert!((m.depth(rho).unwrap() - u).abs() < 1e-9 * u);
        }
    }
}
