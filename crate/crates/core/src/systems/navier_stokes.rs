//! Spectral Galerkin truncation of the 2D Navier-Stokes system on the torus.
//!
//! The phase space is the span of the real, divergence-free, zero-mean
//! Fourier modes with wavevector `0 < |k|_inf <= max_k`, orthonormal in
//! `L^2(T^2)`. Each wavevector pair `{k, -k}` carries a cosine and a sine
//! mode in the direction `k_perp / |k|`, so the velocity field is
//! divergence-free by construction. The Stokes eigenvalue of both modes is
//! `|k|^2` and modes are ordered by increasing eigenvalue.
//!
//! The time-1 map integrates `du/dt + nu L u + B(u) = h` with an exponential
//! treatment of the Stokes part (exact linear decay, unconditionally stable)
//! and a second-order corrector for the Galerkin-truncated convolution
//! `B(u) = Pi (u . grad) u`, which injects no energy in the truncation.

use num_complex::Complex64;

use super::etd::EtdTableau;
use crate::error::{Error, Result};
use crate::model::{BasisId, DissipativityConstants, StateVector, System};

const OVERFLOW_GUARD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wavevector {
    k1: i32,
    k2: i32,
}

impl Wavevector {
    fn sq(&self) -> i32 {
        self.k1 * self.k1 + self.k2 * self.k2
    }
    /// Unit vector along `k_perp = (-k2, k1)`.
    fn dir(&self) -> (f64, f64) {
        let n = (self.sq() as f64).sqrt();
        (-self.k2 as f64 / n, self.k1 as f64 / n)
    }
}

#[derive(Debug, Clone)]
pub struct NavierStokesSpec {
    max_k: i32,
    nu: f64,
    substeps: u32,
    /// deterministic forcing, as coefficients against the mode basis
    forcing: Vec<f64>,
    /// calibrated constant in the squeezing exponent functional
    c_p: f64,
    constants: DissipativityConstants,
    modes: Vec<Wavevector>,
    /// Stokes eigenvalue per coefficient slot (two slots per wavevector).
    alphas: Vec<f64>,
    tableau: EtdTableau,
    s_zero_u: f64,
}

impl NavierStokesSpec {
    /// `modes_per_axis` counts the nonzero wavenumbers per axis, so
    /// `modes_per_axis = 8` keeps `k` in `{-4..4}^2 \ {0}`.
    pub fn new(modes_per_axis: u32, nu: f64, substeps: u32) -> Result<Self> {
        if modes_per_axis < 2 || modes_per_axis % 2 != 0 {
            return Err(Error::InvalidConfig(
                "modes_per_axis must be an even integer >= 2".into(),
            ));
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidConfig("viscosity must be positive".into()));
        }
        if substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be >= 1".into()));
        }
        let max_k = (modes_per_axis / 2) as i32;

        // half-plane representatives, ordered by (|k|^2, k1, k2)
        let mut modes = Vec::new();
        for k1 in 0..=max_k {
            let lo = if k1 == 0 { 1 } else { -max_k };
            for k2 in lo..=max_k {
                modes.push(Wavevector { k1, k2 });
            }
        }
        modes.sort_by_key(|k| (k.sq(), k.k1, k.k2));

        let mut alphas = Vec::with_capacity(2 * modes.len());
        for k in &modes {
            alphas.push(k.sq() as f64);
            alphas.push(k.sq() as f64);
        }

        let dt = 1.0 / substeps as f64;
        let lambdas: Vec<Complex64> = alphas.iter().map(|a| Complex64::new(nu * a, 0.0)).collect();
        let tableau = EtdTableau::new(&lambdas, dt);

        // (q, C) for Phi(u) = 1 + |u|^2 with h = 0: a Young split of
        // |S(u) + v|^2 against the exact linear decay rate.
        let theta = 0.1;
        let q = (1.0 + theta) * (-2.0 * nu).exp();
        let constants = DissipativityConstants {
            alpha: 2.0,
            beta: 2.0,
            c_phi: (1.0 + 1.0 / theta).max(1.0),
            q: q.min(0.99),
        };
        constants.validate()?;

        let n_dim = 2 * modes.len();
        let mut spec = NavierStokesSpec {
            max_k,
            nu,
            substeps,
            forcing: vec![0.0; n_dim],
            c_p: 2.0,
            constants,
            modes,
            alphas,
            tableau,
            s_zero_u: 0.0,
        };
        spec.refresh_s_zero()?;
        Ok(spec)
    }

    pub fn with_forcing(mut self, h: Vec<f64>) -> Result<Self> {
        if h.len() != self.n_dim() {
            return Err(Error::DimensionMismatch {
                context: "forcing",
                expected: self.n_dim(),
                got: h.len(),
            });
        }
        self.forcing = h;
        self.refresh_s_zero()?;
        Ok(self)
    }

    /// Overrides the calibrated constant of the squeezing exponent.
    pub fn with_frak_p_constant(mut self, c_p: f64) -> Self {
        self.c_p = c_p;
        self
    }

    fn refresh_s_zero(&mut self) -> Result<()> {
        let zero = StateVector::zeros(self.n_dim(), self.basis());
        let s0 = self.step(&zero)?;
        self.s_zero_u = crate::model::u_norm(self, &s0)?;
        Ok(())
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.substeps as f64
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Stokes eigenvalue of coefficient slot `j` (0-based).
    pub fn alpha(&self, j: usize) -> f64 {
        self.alphas[j]
    }

    /// `|grad u|^2` on the truncation.
    pub fn enstrophy(&self, u: &StateVector) -> f64 {
        u.coeffs
            .iter()
            .zip(&self.alphas)
            .map(|(c, a)| a * c * c)
            .sum()
    }

    /// Coefficient index of the cosine (`sin_part = false`) or sine mode of
    /// wavevector `(k1, k2)`, if represented.
    pub fn mode_index(&self, k1: i32, k2: i32, sin_part: bool) -> Option<usize> {
        let (k1, k2, flip) = if k1 > 0 || (k1 == 0 && k2 > 0) {
            (k1, k2, false)
        } else {
            (-k1, -k2, true)
        };
        let _ = flip;
        let pos = self
            .modes
            .iter()
            .position(|m| m.k1 == k1 && m.k2 == k2)?;
        Some(2 * pos + sin_part as usize)
    }

    fn grid_side(&self) -> usize {
        (2 * self.max_k + 1) as usize
    }

    fn grid_index(&self, k1: i32, k2: i32) -> usize {
        let side = self.grid_side() as i32;
        ((k1 + self.max_k) + side * (k2 + self.max_k)) as usize
    }

    /// Scatter scalar mode amplitudes into the full conjugate-symmetric
    /// velocity spectrum. `psi[j]` is the complex amplitude of the mode pair
    /// `j` along `dir(k)`; `u_hat(k) = dir(k) psi_k`, `u_hat(-k) = conj`.
    fn full_spectrum(&self, psi: &[Complex64], table: &mut [(Complex64, Complex64)]) {
        table.fill((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)));
        for (j, k) in self.modes.iter().enumerate() {
            let (d1, d2) = k.dir();
            let v = psi[j];
            table[self.grid_index(k.k1, k.k2)] = (d1 * v, d2 * v);
            let vc = v.conj();
            table[self.grid_index(-k.k1, -k.k2)] = (d1 * vc, d2 * vc);
        }
    }

    /// Galerkin-truncated convolution: component of
    /// `-F[(u.grad)u](k)` along `k_perp/|k|` for every represented pair,
    /// plus the forcing. Also accumulates the energy flux of the
    /// nonlinearity for the per-substep balance check.
    fn nonlinear_rhs(
        &self,
        psi: &[Complex64],
        forcing_psi: &[Complex64],
        table: &mut [(Complex64, Complex64)],
        out: &mut [Complex64],
        flux: &mut f64,
        bnorm2: &mut f64,
    ) {
        self.full_spectrum(psi, table);
        let mk = self.max_k;
        *flux = 0.0;
        *bnorm2 = 0.0;
        for (j, k) in self.modes.iter().enumerate() {
            let mut b1 = Complex64::new(0.0, 0.0);
            let mut b2 = Complex64::new(0.0, 0.0);
            for p1 in -mk..=mk {
                let q1 = k.k1 - p1;
                if q1 < -mk || q1 > mk {
                    continue;
                }
                for p2 in -mk..=mk {
                    if p1 == 0 && p2 == 0 {
                        continue;
                    }
                    let q2 = k.k2 - p2;
                    if q2 < -mk || q2 > mk || (q1 == 0 && q2 == 0) {
                        continue;
                    }
                    let up = table[self.grid_index(p1, p2)];
                    if up.0.norm_sqr() + up.1.norm_sqr() == 0.0 {
                        continue;
                    }
                    let uq = table[self.grid_index(q1, q2)];
                    // i (u_hat(p) . q) u_hat(q)
                    let dot = up.0 * q1 as f64 + up.1 * q2 as f64;
                    b1 += dot * uq.0;
                    b2 += dot * uq.1;
                }
            }
            let b1 = Complex64::new(0.0, 1.0) * b1;
            let b2 = Complex64::new(0.0, 1.0) * b2;
            // component along k_perp/|k| (the divergence-free projection)
            let (d1, d2) = k.dir();
            let b_psi = b1 * d1 + b2 * d2;
            // <B(u), u> over the full spectrum = 2 Re sum_j conj(psi) b_psi
            *flux += 2.0 * (psi[j].conj() * b_psi).re;
            *bnorm2 += 2.0 * b_psi.norm_sqr();
            out[j] = -b_psi + forcing_psi[j];
        }
    }

    fn coeffs_to_psi(&self, coeffs: &[f64]) -> Vec<Complex64> {
        // a cos + b sin per pair; u_hat(k) = dir (a - i b) / (2 sqrt(2) pi)
        let s = 1.0 / (2.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI);
        (0..self.modes.len())
            .map(|j| Complex64::new(coeffs[2 * j] * s, -coeffs[2 * j + 1] * s))
            .collect()
    }

    fn psi_to_coeffs(&self, psi: &[Complex64]) -> Vec<f64> {
        let s = 2.0 * std::f64::consts::SQRT_2 * std::f64::consts::PI;
        let mut coeffs = vec![0.0; 2 * self.modes.len()];
        for (j, v) in psi.iter().enumerate() {
            coeffs[2 * j] = v.re * s;
            coeffs[2 * j + 1] = -v.im * s;
        }
        coeffs
    }

    /// Integrates to time 1, returning the state and the time integral of the
    /// enstrophy, `int_0^1 |u(t)|_1^2 dt` (trapezoid over sub-steps).
    fn integrate(&self, u: &StateVector) -> Result<(StateVector, f64)> {
        self.check_state(u)?;
        if !u.is_finite() || u.norm() > OVERFLOW_GUARD {
            return Err(Error::instability(
                "ns_step",
                "state exceeds overflow guard; reduce dt or kick amplitude",
            ));
        }
        let mut psi = self.coeffs_to_psi(&u.coeffs);
        let forcing_psi = self.coeffs_to_psi(&self.forcing);
        let mut table = vec![(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); self.grid_side() * self.grid_side()];
        let mut scratch = Vec::new();
        let enst = |psi: &[Complex64]| -> f64 {
            let s2 = 8.0 * std::f64::consts::PI * std::f64::consts::PI;
            psi.iter()
                .zip(self.modes.iter())
                .map(|(v, k)| s2 * v.norm_sqr() * k.sq() as f64)
                .sum()
        };
        let mut enst_int = 0.5 * enst(&psi) * self.dt();
        for step in 0..self.substeps {
            let mut flux = 0.0;
            let mut bn2 = 0.0;
            self.tableau.step(
                &mut psi,
                |p, out| {
                    self.nonlinear_rhs(p, &forcing_psi, &mut table, out, &mut flux, &mut bn2);
                },
                &mut scratch,
            );
            // energy balance of the truncated convection term: exact zero up
            // to rounding (the (2 pi)^2 Parseval factors cancel in the ratio)
            let psi_norm2: f64 = 2.0 * psi.iter().map(|v| v.norm_sqr()).sum::<f64>();
            let resid = flux.abs() / ((bn2 * psi_norm2).sqrt() + 1e-300);
            if resid > 1e-6 {
                return Err(Error::instability(
                    "ns_step",
                    format!("energy balance residual {resid:.2e} at sub-step {step}"),
                ));
            }
            let w = if step + 1 == self.substeps { 0.5 } else { 1.0 };
            enst_int += w * enst(&psi) * self.dt();
            if !psi.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::instability(
                    "ns_step",
                    format!("blow-up at sub-step {step}; reduce dt"),
                ));
            }
        }
        let out = StateVector::new(self.psi_to_coeffs(&psi), self.basis());
        if out.norm() > OVERFLOW_GUARD {
            return Err(Error::instability(
                "ns_step",
                "output exceeds overflow guard; reduce dt",
            ));
        }
        Ok((out, enst_int))
    }
}

impl System for NavierStokesSpec {
    fn n_dim(&self) -> usize {
        2 * self.modes.len()
    }

    fn basis(&self) -> BasisId {
        BasisId(2)
    }

    fn name(&self) -> &'static str {
        "navier_stokes"
    }

    fn step(&self, u: &StateVector) -> Result<StateVector> {
        Ok(self.integrate(u)?.0)
    }

    fn phi(&self, u: &StateVector) -> f64 {
        1.0 + u.norm().powi(2)
    }

    fn frak_p(&self, u: &StateVector) -> f64 {
        let (_, enst_int) = self
            .integrate(u)
            .unwrap_or((StateVector::zeros(self.n_dim(), self.basis()), f64::INFINITY));
        self.c_p * (enst_int + 1.0)
    }

    fn step_with_frak_p(&self, u: &StateVector) -> Result<(StateVector, f64)> {
        let (s, enst_int) = self.integrate(u)?;
        Ok((s, self.c_p * (enst_int + 1.0)))
    }

    fn constants(&self) -> DissipativityConstants {
        self.constants
    }

    fn n_levels(&self) -> usize {
        self.n_dim()
    }

    /// `gamma_N = alpha_{N+1}^{1/2}` from the truncation's own eigenvalues;
    /// ties in the torus spectrum make the sequence non-decreasing rather
    /// than strictly increasing.
    fn gamma(&self, level: usize) -> f64 {
        if level < self.alphas.len() {
            self.alphas[level].sqrt()
        } else {
            (2.0 * self.alphas[self.alphas.len() - 1]).sqrt()
        }
    }

    fn s_of_zero_u_norm(&self) -> f64 {
        self.s_zero_u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn small() -> NavierStokesSpec {
        NavierStokesSpec::new(4, 0.1, 64).unwrap()
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let sys = small();
        let z = StateVector::zeros(sys.n_dim(), sys.basis());
        let s = sys.step(&z).unwrap();
        assert_eq!(s.norm(), 0.0);
    }

    #[test]
    fn shear_mode_decays_exactly() {
        // u = A sin(y) e_x has B(u) = 0; the |k|^2 = 1 mode decays by e^{-nu}.
        let sys = small();
        let idx = sys.mode_index(0, 1, true).unwrap();
        let amp = 3.0;
        let mut c = vec![0.0; sys.n_dim()];
        c[idx] = amp;
        let u = StateVector::new(c, sys.basis());
        let s = sys.step(&u).unwrap();
        let expected = amp * (-sys.nu()).exp();
        assert!(
            (s.norm() - expected).abs() / expected < 1e-6,
            "norm {} vs {}",
            s.norm(),
            expected
        );
        // and it stays on the same mode
        assert!((s.coeffs[idx] - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn unforced_step_contracts_energy() {
        let sys = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let u = StateVector::new(
                (0..sys.n_dim()).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                sys.basis(),
            );
            let s = sys.step(&u).unwrap();
            let bound = (-sys.nu() * sys.alpha(0)).exp() * u.norm();
            assert!(
                s.norm() <= bound * (1.0 + 1e-10),
                "{} > {}",
                s.norm(),
                bound
            );
        }
    }

    #[test]
    fn step_is_deterministic() {
        let sys = small();
        let u = StateVector::new(
            (0..sys.n_dim()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.1).collect(),
            sys.basis(),
        );
        let a = sys.step(&u).unwrap();
        let b = sys.step(&u).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn richardson_substep_refinement_converges() {
        let coarse = NavierStokesSpec::new(4, 0.1, 16).unwrap();
        let medium = NavierStokesSpec::new(4, 0.1, 32).unwrap();
        let fine = NavierStokesSpec::new(4, 0.1, 128).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let u = StateVector::new(
            (0..coarse.n_dim()).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            coarse.basis(),
        );
        let e1 = coarse.step(&u).unwrap().dist(&fine.step(&u).unwrap());
        let e2 = medium.step(&u).unwrap().dist(&fine.step(&u).unwrap());
        assert!(e1 / e2 > 2.0, "refinement ratio {}", e1 / e2);
    }

    #[test]
    fn enstrophy_of_unit_shear_mode_equals_energy() {
        let sys = small();
        let idx = sys.mode_index(0, 1, true).unwrap();
        let mut c = vec![0.0; sys.n_dim()];
        c[idx] = 2.0;
        let u = StateVector::new(c, sys.basis());
        // wavenumber^2 = 1 for the shear mode
        assert!((sys.enstrophy(&u) - u.norm().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn eigenvalue_ladder_is_sorted() {
        let sys = small();
        for j in 1..sys.n_dim() {
            assert!(sys.alpha(j) >= sys.alpha(j - 1));
        }
        assert_eq!(sys.alpha(0), 1.0);
        // 8x8 truncation: alpha = 1,1,1,1,2,2,2,2,4,...
        assert_eq!(sys.alpha(3), 1.0);
        assert_eq!(sys.alpha(4), 2.0);
        assert_eq!(sys.gamma(8), 2.0);
    }

    #[test]
    fn overflow_guard_trips() {
        let sys = small();
        let mut c = vec![0.0; sys.n_dim()];
        c[0] = 1e9;
        let u = StateVector::new(c, sys.basis());
        assert!(matches!(
            sys.step(&u),
            Err(Error::NumericalInstability { .. })
        ));
    }
}
