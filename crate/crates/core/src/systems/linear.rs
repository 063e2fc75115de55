//! Closed-form linear contraction used as an oracle throughout the test
//! suite: `S(u) = a u` with `|a| < 1`. With unit Gaussian kicks each
//! coordinate is an AR(1) chain with stationary variance `sigma^2 / (1-a^2)`.

use crate::error::{Error, Result};
use crate::model::{BasisId, DissipativityConstants, StateVector, System};

#[derive(Debug, Clone)]
pub struct LinearTestSpec {
    dim: usize,
    a: f64,
    constants: DissipativityConstants,
}

impl LinearTestSpec {
    pub fn new(dim: usize, a: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if !(a.abs() < 1.0) || a == 0.0 {
            return Err(Error::InvalidConfig(
                "contraction factor must satisfy 0 < |a| < 1".into(),
            ));
        }
        // Phi(u) = 1 + |u|^2. For 2a^2 < 1 the Cauchy-Schwarz split
        // (au + v)^2 <= 2a^2 u^2 + 2 v^2 gives (q, C) = (2a^2, 2); otherwise
        // a Young split with theta = (1 - a^2) / (2 a^2).
        let (q, c_phi) = if 2.0 * a * a < 1.0 {
            (2.0 * a * a, 2.0)
        } else {
            let theta = (1.0 - a * a) / (2.0 * a * a);
            ((1.0 + a * a) / 2.0, 1.0 + 1.0 / theta)
        };
        let constants = DissipativityConstants {
            alpha: 2.0,
            beta: 2.0,
            c_phi,
            q,
        };
        constants.validate()?;
        Ok(LinearTestSpec {
            dim,
            a,
            constants,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Stationary variance per coordinate under kicks of std `sigma`.
    pub fn stationary_variance(&self, sigma: f64) -> f64 {
        sigma * sigma / (1.0 - self.a * self.a)
    }
}

impl System for LinearTestSpec {
    fn n_dim(&self) -> usize {
        self.dim
    }

    fn basis(&self) -> BasisId {
        BasisId(1)
    }

    fn name(&self) -> &'static str {
        "linear"
    }

    fn step(&self, u: &StateVector) -> Result<StateVector> {
        self.check_state(u)?;
        Ok(u.scale(self.a))
    }

    fn phi(&self, u: &StateVector) -> f64 {
        1.0 + u.norm().powi(2)
    }

    fn frak_p(&self, _u: &StateVector) -> f64 {
        0.0
    }

    fn constants(&self) -> DissipativityConstants {
        self.constants
    }

    fn n_levels(&self) -> usize {
        self.dim
    }

    /// `gamma_0 = 1/|a|` makes the level-0 squeezing defect exactly 1; the
    /// strictly increasing tail doubles per level.
    fn gamma(&self, level: usize) -> f64 {
        (1.0 / self.a.abs()) * (1u64 << level.min(60)) as f64
    }

    fn s_of_zero_u_norm(&self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_is_exact_scaling() {
        let sys = LinearTestSpec::new(2, 0.5).unwrap();
        let u = StateVector::new(vec![2.0, -4.0], sys.basis());
        let s = sys.step(&u).unwrap();
        assert_eq!(s.coeffs, vec![1.0, -2.0]);
    }

    #[test]
    fn iterates_are_exact_powers() {
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let mut u = StateVector::new(vec![1.0], sys.basis());
        for _ in 0..10 {
            u = sys.step(&u).unwrap();
        }
        assert_eq!(u.coeffs[0], 0.5f64.powi(10));
    }

    #[test]
    fn stationary_variance_closed_form() {
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        assert!((sys.stationary_variance(1.0) - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_contractions() {
        assert!(LinearTestSpec::new(1, 1.0).is_err());
        assert!(LinearTestSpec::new(1, -1.5).is_err());
        assert!(LinearTestSpec::new(0, 0.5).is_err());
    }

    #[test]
    fn gamma_is_strictly_increasing() {
        let sys = LinearTestSpec::new(4, 0.5).unwrap();
        for n in 0..sys.n_levels() {
            assert!(sys.gamma(n + 1) > sys.gamma(n));
        }
        assert_eq!(sys.gamma(0), 2.0);
    }
}
