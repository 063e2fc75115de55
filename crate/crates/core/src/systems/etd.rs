//! Exponential time differencing for diagonal stiff linear parts.
//!
//! Both PDE truncations evolve coefficient vectors under
//! `dc/dt = -lambda c + F(c)` with a diagonal (possibly complex) `lambda`.
//! The linear part is integrated exactly by the factor `exp(-lambda dt)`, so
//! pure-decay modes reproduce `e^{-lambda}` to rounding; the nonlinearity is
//! advanced with the second-order Cox-Matthews corrector.

use num_complex::Complex64;

/// `phi1(z) = (1 - e^{-z}) / z`, stable near zero.
pub fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-4 {
        // 1 - z/2 + z^2/6 - z^3/24
        Complex64::new(1.0, 0.0) - z / 2.0 + z * z / 6.0 - z * z * z / 24.0
    } else {
        (Complex64::new(1.0, 0.0) - (-z).exp()) / z
    }
}

/// `phi2(z) = (e^{-z} - 1 + z) / z^2`, stable near zero.
pub fn phi2(z: Complex64) -> Complex64 {
    if z.norm() < 1e-3 {
        // 1/2 - z/6 + z^2/24 - z^3/120
        Complex64::new(0.5, 0.0) - z / 6.0 + z * z / 24.0 - z * z * z / 120.0
    } else {
        ((-z).exp() - Complex64::new(1.0, 0.0) + z) / (z * z)
    }
}

/// Per-mode propagation factors for one sub-step of size `dt`.
#[derive(Debug, Clone)]
pub struct EtdTableau {
    pub decay: Vec<Complex64>,   // e^{-lambda dt}
    pub dt_phi1: Vec<Complex64>, // dt * phi1(lambda dt)
    pub dt_phi2: Vec<Complex64>, // dt * phi2(lambda dt)
}

impl EtdTableau {
    pub fn new(lambdas: &[Complex64], dt: f64) -> Self {
        let decay = lambdas.iter().map(|l| (-l * dt).exp()).collect();
        let dt_phi1 = lambdas.iter().map(|l| phi1(l * dt) * dt).collect();
        let dt_phi2 = lambdas.iter().map(|l| phi2(l * dt) * dt).collect();
        EtdTableau {
            decay,
            dt_phi1,
            dt_phi2,
        }
    }

    /// One ETD2RK sub-step: `F` evaluates the non-stiff part in place.
    pub fn step<F>(&self, c: &mut Vec<Complex64>, mut f: F, scratch: &mut Vec<Complex64>)
    where
        F: FnMut(&[Complex64], &mut Vec<Complex64>),
    {
        let n = c.len();
        let mut fu = vec![Complex64::new(0.0, 0.0); n];
        f(c, &mut fu);
        // predictor
        scratch.clear();
        scratch.extend((0..n).map(|i| self.decay[i] * c[i] + self.dt_phi1[i] * fu[i]));
        // corrector
        let mut fa = vec![Complex64::new(0.0, 0.0); n];
        f(scratch, &mut fa);
        for i in 0..n {
            c[i] = scratch[i] + self.dt_phi2[i] * (fa[i] - fu[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_functions_match_series_at_small_arguments() {
        for &x in &[1e-6, 1e-5, 5e-4] {
            let z = Complex64::new(x, 0.0);
            let direct1 = (1.0 - (-x).exp()) / x;
            let direct2 = ((-x).exp() - 1.0 + x) / (x * x);
            assert!((phi1(z).re - direct1).abs() < 1e-12);
            assert!((phi2(z).re - direct2).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_linear_decay_is_exact() {
        let lambdas = vec![Complex64::new(0.1, 0.0), Complex64::new(2.0, 1.0)];
        let tab = EtdTableau::new(&lambdas, 0.25);
        let mut c = vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, -0.5)];
        let c0 = c.clone();
        let mut scratch = Vec::new();
        for _ in 0..4 {
            tab.step(&mut c, |_u, f| f.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0)), &mut scratch);
        }
        for i in 0..2 {
            let exact = c0[i] * (-lambdas[i]).exp();
            assert!((c[i] - exact).norm() < 1e-14);
        }
    }

    #[test]
    fn scalar_nonlinear_equation_converges_at_second_order() {
        // dc/dt = -c + c^2, c(0) = 0.1; reference from a fine RK4-free
        // self-refinement: compare dt and dt/2 against dt/8.
        let run = |dt: f64| {
            let tab = EtdTableau::new(&[Complex64::new(1.0, 0.0)], dt);
            let mut c = vec![Complex64::new(0.1, 0.0)];
            let mut scratch = Vec::new();
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                tab.step(&mut c, |u, f| f[0] = u[0] * u[0], &mut scratch);
            }
            c[0].re
        };
        let (c1, c2, c8) = (run(1.0 / 16.0), run(1.0 / 32.0), run(1.0 / 128.0));
        let e1 = (c1 - c8).abs();
        let e2 = (c2 - c8).abs();
        // order ~2: halving dt divides the error by ~4
        assert!(e1 / e2 > 3.0, "e1={e1:.3e} e2={e2:.3e}");
    }
}
