//! Complex Ginzburg-Landau equation `u_t - (nu + i) Lap u + i a |u|^2 u = h`
//! with Dirichlet conditions on `(0, pi)^d`, `d in {1, 2}`, truncated to the
//! sine basis.
//!
//! The phase space is the Sobolev space `H_0^1` regarded as a real Hilbert
//! space with the gradient inner product; the coefficient vector interleaves
//! real and imaginary parts of the complex amplitudes against eigenfunctions
//! normalised by `|grad e_J| = 1`, ordered by increasing Laplacian eigenvalue.
//! The Lyapunov weight is built from the energy functional
//! `Hnl(u) = int( |grad u|^2 / 2 + a |u|^4 / 4 )`.

use num_complex::Complex64;

use super::etd::EtdTableau;
use crate::error::{Error, Result};
use crate::model::{BasisId, DissipativityConstants, StateVector, System};

const OVERFLOW_GUARD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
struct SineMode {
    j1: u32,
    j2: u32, // 0 in 1D
}

impl SineMode {
    fn alpha(&self) -> f64 {
        (self.j1 * self.j1 + self.j2 * self.j2) as f64
    }
}

#[derive(Debug, Clone)]
pub struct GinzburgLandauSpec {
    dim: u8,
    modes_per_axis: u32,
    nu: f64,
    a: f64,
    substeps: u32,
    epsilon: f64,
    forcing: Vec<f64>,
    c_p: f64,
    constants: DissipativityConstants,
    /// discrete decay of Hnl^2: Hnl^2(S(u)) <= e^{-c} Hnl^2(u) + C3 (|h|_L4^4 + 1)^2
    pub h2_decay_rate: f64,
    pub h2_decay_offset: f64,
    modes: Vec<SineMode>,
    grid_per_axis: usize,
    /// sin(j x_p) synthesis table: sin_table[j - 1][p]
    sin_table: Vec<Vec<f64>>,
    tableau: EtdTableau,
    s_zero_u: f64,
}

impl GinzburgLandauSpec {
    pub fn new(dim: u8, modes_per_axis: u32, nu: f64, a: f64, substeps: u32) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::InvalidConfig("dim must be 1 or 2".into()));
        }
        if modes_per_axis == 0 || substeps == 0 {
            return Err(Error::InvalidConfig(
                "modes_per_axis and substeps must be >= 1".into(),
            ));
        }
        if !(nu > 0.0 && a > 0.0) {
            return Err(Error::InvalidConfig("nu and a must be positive".into()));
        }
        let mut modes = Vec::new();
        if dim == 1 {
            for j in 1..=modes_per_axis {
                modes.push(SineMode { j1: j, j2: 0 });
            }
        } else {
            for j1 in 1..=modes_per_axis {
                for j2 in 1..=modes_per_axis {
                    modes.push(SineMode { j1, j2 });
                }
            }
        }
        modes.sort_by(|x, y| {
            (x.alpha(), x.j1, x.j2)
                .partial_cmp(&(y.alpha(), y.j1, y.j2))
                .unwrap()
        });

        let grid_per_axis = (4 * modes_per_axis + 4) as usize;
        let sin_table = (1..=modes_per_axis)
            .map(|j| {
                (1..grid_per_axis)
                    .map(|p| (j as f64 * std::f64::consts::PI * p as f64 / grid_per_axis as f64).sin())
                    .collect()
            })
            .collect();

        let dt = 1.0 / substeps as f64;
        let lambdas: Vec<Complex64> = modes
            .iter()
            .map(|m| Complex64::new(nu, 1.0) * m.alpha())
            .collect();
        let tableau = EtdTableau::new(&lambdas, dt);

        // The L^2 energy decays at rate >= 2 nu alpha_1 and the quartic term
        // is damped at least as fast; the pair (q, C) below is verified by
        // the sampled dissipativity check.
        let theta = 0.15;
        let q = ((1.0 + theta) * (-nu).exp()).min(0.98);
        let constants = DissipativityConstants {
            alpha: 4.0,
            beta: 8.0,
            c_phi: 40.0 * (1.0 + 1.0 / theta),
            q,
        };
        constants.validate()?;

        let mut spec = GinzburgLandauSpec {
            dim,
            modes_per_axis,
            nu,
            a,
            substeps,
            epsilon: 0.5,
            forcing: Vec::new(),
            c_p: 0.5,
            constants,
            h2_decay_rate: nu,
            h2_decay_offset: 2.0,
            modes,
            grid_per_axis,
            sin_table,
            tableau,
            s_zero_u: 0.0,
        };
        spec.forcing = vec![0.0; spec.n_dim_internal()];
        spec.refresh_s_zero()?;
        Ok(spec)
    }

    fn n_dim_internal(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn with_forcing(mut self, h: Vec<f64>) -> Result<Self> {
        if h.len() != self.n_dim_internal() {
            return Err(Error::DimensionMismatch {
                context: "forcing",
                expected: self.n_dim_internal(),
                got: h.len(),
            });
        }
        self.forcing = h;
        self.refresh_s_zero()?;
        Ok(self)
    }

    pub fn with_frak_p_constant(mut self, c_p: f64) -> Self {
        self.c_p = c_p;
        self
    }

    fn refresh_s_zero(&mut self) -> Result<()> {
        let zero = StateVector::zeros(self.n_dim_internal(), self.basis());
        let s0 = self.step(&zero)?;
        self.s_zero_u = crate::model::u_norm(self, &s0)?;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.substeps as f64
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn modes_per_axis(&self) -> u32 {
        self.modes_per_axis
    }

    /// Laplacian eigenvalue of mode pair `n` (0-based, sorted ascending).
    pub fn alpha_pair(&self, n: usize) -> f64 {
        self.modes[n].alpha()
    }

    fn coeffs_to_z(&self, coeffs: &[f64]) -> Vec<Complex64> {
        (0..self.modes.len())
            .map(|n| Complex64::new(coeffs[2 * n], coeffs[2 * n + 1]))
            .collect()
    }

    fn z_to_coeffs(&self, z: &[Complex64]) -> Vec<f64> {
        let mut c = vec![0.0; 2 * z.len()];
        for (n, v) in z.iter().enumerate() {
            c[2 * n] = v.re;
            c[2 * n + 1] = v.im;
        }
        c
    }

    /// Normalisation of the eigenfunction `e_J = c_J prod sin(j_i x_i)` with
    /// `|grad e_J| = 1`.
    fn mode_scale(&self, m: &SineMode) -> f64 {
        let half_pi_pow = (std::f64::consts::PI / 2.0).powi(self.dim as i32);
        1.0 / (m.alpha() * half_pi_pow).sqrt()
    }

    /// Synthesize `u` on the interior collocation grid.
    fn synthesize(&self, z: &[Complex64], values: &mut [Complex64]) {
        let g = self.grid_per_axis - 1;
        values.fill(Complex64::new(0.0, 0.0));
        if self.dim == 1 {
            for (n, m) in self.modes.iter().enumerate() {
                let w = z[n] * self.mode_scale(m);
                let row = &self.sin_table[(m.j1 - 1) as usize];
                for p in 0..g {
                    values[p] += w * row[p];
                }
            }
        } else {
            for (n, m) in self.modes.iter().enumerate() {
                let w = z[n] * self.mode_scale(m);
                let r1 = &self.sin_table[(m.j1 - 1) as usize];
                let r2 = &self.sin_table[(m.j2 - 1) as usize];
                for p1 in 0..g {
                    let wp = w * r1[p1];
                    for p2 in 0..g {
                        values[p1 * g + p2] += wp * r2[p2];
                    }
                }
            }
        }
    }

    /// Project a grid function onto the gradient-orthonormal basis: the
    /// coefficient of `w` on mode `J` is `alpha_J (w, e_J)_{L^2}`.
    fn analyze(&self, values: &[Complex64], out: &mut [Complex64]) {
        let g = self.grid_per_axis - 1;
        let quad = (std::f64::consts::PI / self.grid_per_axis as f64).powi(self.dim as i32);
        if self.dim == 1 {
            for (n, m) in self.modes.iter().enumerate() {
                let row = &self.sin_table[(m.j1 - 1) as usize];
                let mut s = Complex64::new(0.0, 0.0);
                for p in 0..g {
                    s += values[p] * row[p];
                }
                out[n] = m.alpha() * self.mode_scale(m) * quad * s;
            }
        } else {
            for (n, m) in self.modes.iter().enumerate() {
                let r1 = &self.sin_table[(m.j1 - 1) as usize];
                let r2 = &self.sin_table[(m.j2 - 1) as usize];
                let mut s = Complex64::new(0.0, 0.0);
                for p1 in 0..g {
                    let mut inner = Complex64::new(0.0, 0.0);
                    for p2 in 0..g {
                        inner += values[p1 * g + p2] * r2[p2];
                    }
                    s += inner * r1[p1];
                }
                out[n] = m.alpha() * self.mode_scale(m) * quad * s;
            }
        }
    }

    fn quad_l4(&self, values: &[Complex64]) -> f64 {
        let quad = (std::f64::consts::PI / self.grid_per_axis as f64).powi(self.dim as i32);
        values.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() * quad
    }

    /// Energy functional `Hnl(u) = |u|_H^2 / 2 + (a/4) |u|_{L^4}^4`.
    pub fn h_functional(&self, u: &StateVector) -> f64 {
        let z = self.coeffs_to_z(&u.coeffs);
        let n_pts = (self.grid_per_axis - 1).pow(self.dim as u32);
        let mut vals = vec![Complex64::new(0.0, 0.0); n_pts];
        self.synthesize(&z, &mut vals);
        0.5 * u.norm().powi(2) + 0.25 * self.a * self.quad_l4(&vals)
    }

    /// `|u|_{L^2}^2` from the coefficients (`= sum |z_J|^2 / alpha_J`).
    pub fn l2_norm_sq(&self, u: &StateVector) -> f64 {
        (0..self.modes.len())
            .map(|n| {
                let z2 = u.coeffs[2 * n].powi(2) + u.coeffs[2 * n + 1].powi(2);
                z2 / self.modes[n].alpha()
            })
            .sum()
    }

    fn integrate(&self, u: &StateVector) -> Result<(StateVector, f64)> {
        self.check_state(u)?;
        if !u.is_finite() || u.norm() > OVERFLOW_GUARD {
            return Err(Error::instability(
                "cgl_step",
                "state exceeds overflow guard; reduce dt or kick amplitude",
            ));
        }
        let mut z = self.coeffs_to_z(&u.coeffs);
        let forcing_z = self.coeffs_to_z(&self.forcing);
        let n_pts = (self.grid_per_axis - 1).pow(self.dim as u32);
        let mut vals = vec![Complex64::new(0.0, 0.0); n_pts];
        let mut scratch = Vec::new();
        let h_norm4 = |z: &[Complex64]| -> f64 {
            z.iter().map(|v| v.norm_sqr()).sum::<f64>().powi(2)
        };
        let mut p_int = 0.5 * h_norm4(&z) * self.dt();
        for step in 0..self.substeps {
            self.tableau.step(
                &mut z,
                |zc, out| {
                    self.synthesize(zc, &mut vals);
                    for v in vals.iter_mut() {
                        // -i a |u|^2 u
                        *v = Complex64::new(0.0, -self.a) * v.norm_sqr() * *v;
                    }
                    self.analyze(&vals, out);
                    for (o, f) in out.iter_mut().zip(&forcing_z) {
                        *o += f;
                    }
                },
                &mut scratch,
            );
            let w = if step + 1 == self.substeps { 0.5 } else { 1.0 };
            p_int += w * h_norm4(&z) * self.dt();
            if !z.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::instability(
                    "cgl_step",
                    format!("blow-up at sub-step {step}; reduce dt"),
                ));
            }
        }
        let out = StateVector::new(self.z_to_coeffs(&z), self.basis());
        if out.norm() > OVERFLOW_GUARD {
            return Err(Error::instability(
                "cgl_step",
                "output exceeds overflow guard; reduce dt",
            ));
        }
        Ok((out, p_int))
    }
}

impl System for GinzburgLandauSpec {
    fn n_dim(&self) -> usize {
        self.n_dim_internal()
    }

    fn basis(&self) -> BasisId {
        BasisId(3)
    }

    fn name(&self) -> &'static str {
        "ginzburg_landau"
    }

    fn step(&self, u: &StateVector) -> Result<StateVector> {
        Ok(self.integrate(u)?.0)
    }

    /// `Phi(u) = 1 + (2 Hnl(u))^2`, which dominates `1 + |u|^4` pointwise.
    fn phi(&self, u: &StateVector) -> f64 {
        1.0 + (2.0 * self.h_functional(u)).powi(2)
    }

    fn frak_p(&self, u: &StateVector) -> f64 {
        let (_, p_int) = self
            .integrate(u)
            .unwrap_or((StateVector::zeros(self.n_dim(), self.basis()), f64::INFINITY));
        self.c_p * (p_int + 1.0)
    }

    fn step_with_frak_p(&self, u: &StateVector) -> Result<(StateVector, f64)> {
        let (s, p_int) = self.integrate(u)?;
        Ok((s, self.c_p * (p_int + 1.0)))
    }

    fn constants(&self) -> DissipativityConstants {
        self.constants
    }

    /// Ladder over mode pairs: `H_N` spans the first `N` complex modes.
    fn n_levels(&self) -> usize {
        self.modes.len()
    }

    fn gamma(&self, level: usize) -> f64 {
        if level < self.modes.len() {
            self.modes[level].alpha().powf(self.epsilon)
        } else {
            (2.0 * self.modes[self.modes.len() - 1].alpha()).powf(self.epsilon)
        }
    }

    fn h_n_dim(&self, level: usize) -> usize {
        2 * level
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

    fn small() -> GinzburgLandauSpec {
        GinzburgLandauSpec::new(1, 8, 0.5, 1.0, 64).unwrap()
    }

    fn random_state(sys: &GinzburgLandauSpec, rng: &mut rand_chacha::ChaCha8Rng, amp: f64) -> StateVector {
        StateVector::new(
            (0..sys.n_dim()).map(|_| rng.gen_range(-amp..amp)).collect(),
            sys.basis(),
        )
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let sys = small();
        let z = StateVector::zeros(sys.n_dim(), sys.basis());
        assert_eq!(sys.step(&z).unwrap().norm(), 0.0);
        assert_eq!(sys.h_functional(&z), 0.0);
    }

    #[test]
    fn l2_energy_contracts_without_forcing() {
        // the cubic term is energy-neutral in L^2: Re(-i a |u|^4) = 0
        let sys = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let u = random_state(&sys, &mut rng, 0.7);
            let s = sys.step(&u).unwrap();
            let bound = (-2.0 * sys.nu() * sys.alpha_pair(0)).exp() * sys.l2_norm_sq(&u);
            assert!(
                sys.l2_norm_sq(&s) <= bound * (1.0 + 1e-9),
                "{} > {}",
                sys.l2_norm_sq(&s),
                bound
            );
        }
    }

    #[test]
    fn pure_first_mode_decays_linearly_when_amplitude_is_tiny() {
        let sys = small();
        let mut c = vec![0.0; sys.n_dim()];
        c[0] = 1e-6;
        let u = StateVector::new(c, sys.basis());
        let s = sys.step(&u).unwrap();
        let expected = 1e-6 * (-sys.nu()).exp();
        // |z_1| decays by e^{-nu alpha_1}; the cubic correction is O(1e-18)
        let got = (s.coeffs[0].powi(2) + s.coeffs[1].powi(2)).sqrt();
        assert!((got - expected).abs() / expected < 1e-8);
    }

    #[test]
    fn h_functional_decays_discretely() {
        let sys = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let u = random_state(&sys, &mut rng, 0.7);
            let h2_before = sys.h_functional(&u).powi(2);
            let h2_after = sys.h_functional(&sys.step(&u).unwrap()).powi(2);
            let bound =
                (-sys.h2_decay_rate).exp() * h2_before + sys.h2_decay_offset;
            assert!(h2_after <= bound, "{h2_after} > {bound}");
        }
    }

    #[test]
    fn h_contraction_on_sampled_states() {
        let sys = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let u = random_state(&sys, &mut rng, 0.5);
            let s = sys.step(&u).unwrap();
            assert!(s.norm() < u.norm());
        }
    }

    #[test]
    fn richardson_substep_refinement_converges() {
        let coarse = GinzburgLandauSpec::new(1, 8, 0.5, 1.0, 16).unwrap();
        let medium = GinzburgLandauSpec::new(1, 8, 0.5, 1.0, 32).unwrap();
        let fine = GinzburgLandauSpec::new(1, 8, 0.5, 1.0, 128).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let u = random_state(&coarse, &mut rng, 0.7);
        let e1 = coarse.step(&u).unwrap().dist(&fine.step(&u).unwrap());
        let e2 = medium.step(&u).unwrap().dist(&fine.step(&u).unwrap());
        assert!(e1 / e2 > 2.0, "refinement ratio {}", e1 / e2);
    }

    #[test]
    fn two_dimensional_variant_steps_and_contracts() {
        let sys = GinzburgLandauSpec::new(2, 3, 0.5, 1.0, 32).unwrap();
        assert_eq!(sys.n_dim(), 18);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let u = random_state(&sys, &mut rng, 0.4);
        let s = sys.step(&u).unwrap();
        assert!(s.norm() < u.norm());
        // eigenvalues sorted: alpha_1 = 2 (j = (1,1))
        assert_eq!(sys.alpha_pair(0), 2.0);
    }

    #[test]
    fn phi_dominates_fourth_power_of_norm() {
        let sys = small();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let u = random_state(&sys, &mut rng, 2.0);
            assert!(sys.phi(&u) >= 1.0 + u.norm().powi(4));
        }
    }
}
