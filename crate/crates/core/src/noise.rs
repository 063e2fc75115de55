//! Decomposable kick laws: `eta = sum_j b_j xi_j e_j` with independent
//! unit-variance-capped coordinate draws, projected densities for the
//! coupling construction, and moment diagnostics.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{StateVector, System};

/// Per-coordinate density family. Both families are C^1 with variance <= 1;
/// the bump family is positive only on (-1, 1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityFamily {
    Gaussian,
    /// `rho(x) ~ exp(-1 / (1 - x^2))` on `(-1, 1)`.
    Bump,
}

/// Normalising constant of the bump density, `int_{-1}^{1} e^{-1/(1-x^2)} dx`.
fn bump_mass() -> f64 {
    // fixed Simpson quadrature; the integrand vanishes to all orders at +-1
    let n = 4000;
    let h = 2.0 / n as f64;
    let f = |x: f64| {
        let d = 1.0 - x * x;
        if d <= 0.0 {
            0.0
        } else {
            (-1.0 / d).exp()
        }
    };
    let mut s = 0.0;
    for i in 0..n {
        let a = -1.0 + i as f64 * h;
        s += (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h)) * h / 6.0;
    }
    s
}

impl DensityFamily {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            DensityFamily::Gaussian => {
                if x.abs() > 40.0 {
                    0.0
                } else {
                    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
                }
            }
            DensityFamily::Bump => {
                let d = 1.0 - x * x;
                if d <= 0.0 {
                    0.0
                } else {
                    (-1.0 / d).exp() / bump_mass()
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DensityFamily::Gaussian => StandardNormal.sample(rng),
            DensityFamily::Bump => {
                // rejection from the uniform envelope: sup rho < e^{-1}/mass
                let m = (-1.0f64).exp() / bump_mass();
                loop {
                    let x = rng.gen_range(-1.0..1.0);
                    let u: f64 = rng.gen_range(0.0..m);
                    if u < self.density(x) {
                        return x;
                    }
                }
            }
        }
    }
}

/// Kick distribution `L = D(eta_1)` with coefficients `b_j` against the basis
/// of the owning system.
#[derive(Debug, Clone)]
pub struct KickLaw {
    b: Vec<f64>,
    family: DensityFamily,
    delta: f64,
}

impl KickLaw {
    pub fn new(b: Vec<f64>, family: DensityFamily, delta: f64) -> Result<Self> {
        if b.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidConfig(
                "kick coefficients must be finite and non-negative".into(),
            ));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig("delta must be positive".into()));
        }
        Ok(KickLaw { b, family, delta })
    }

    /// Gaussian law with geometric coefficients `b_j = b0 r^{j-1}`.
    pub fn gaussian_geometric(n: usize, b0: f64, r: f64) -> Result<Self> {
        let b = (0..n).map(|j| b0 * r.powi(j as i32)).collect();
        KickLaw::new(b, DensityFamily::Gaussian, 0.1)
    }

    pub fn gaussian_uniform(n: usize, b0: f64) -> Result<Self> {
        KickLaw::new(vec![b0; n], DensityFamily::Gaussian, 0.1)
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn family(&self) -> DensityFamily {
        self.family
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn all_nonzero(&self) -> bool {
        self.b.iter().all(|x| *x > 0.0)
    }

    /// `E |eta|^2 = sum b_j^2 Var(rho_j)` (exact for the Gaussian family).
    pub fn second_moment(&self) -> f64 {
        let v = match self.family {
            DensityFamily::Gaussian => 1.0,
            DensityFamily::Bump => bump_variance(),
        };
        self.b.iter().map(|x| x * x * v).sum()
    }

    /// Draws one kick; deterministic given the generator state.
    pub fn sample<R: Rng + ?Sized>(&self, system: &dyn System, rng: &mut R) -> Result<StateVector> {
        if self.b.len() != system.n_dim() {
            return Err(Error::DimensionMismatch {
                context: "kick law",
                expected: system.n_dim(),
                got: self.b.len(),
            });
        }
        let coeffs = self
            .b
            .iter()
            .map(|bj| {
                if *bj == 0.0 {
                    // keep the stream aligned across laws with zero entries
                    let _ = self.family.sample(rng);
                    0.0
                } else {
                    bj * self.family.sample(rng)
                }
            })
            .collect();
        Ok(StateVector::new(coeffs, system.basis()))
    }

    /// Density of the projection of the kick onto the first `n_coords`
    /// coordinates, evaluated at `v`:
    /// `D(v) = prod_i b_i^{-1} rho_i(b_i^{-1} v_i)`.
    pub fn projected_density(&self, n_coords: usize, v: &[f64]) -> Result<f64> {
        if v.len() != n_coords || n_coords > self.b.len() {
            return Err(Error::DimensionMismatch {
                context: "projected density",
                expected: n_coords,
                got: v.len(),
            });
        }
        let mut d = 1.0;
        for i in 0..n_coords {
            let bi = self.b[i];
            if bi == 0.0 {
                return Err(Error::DegenerateDirection { index: i + 1 });
            }
            d *= self.family.density(v[i] / bi) / bi;
        }
        Ok(d)
    }
}

fn bump_variance() -> f64 {
    let n = 4000;
    let h = 2.0 / n as f64;
    let fam = DensityFamily::Bump;
    let f = |x: f64| x * x * fam.density(x);
    let mut s = 0.0;
    for i in 0..n {
        let a = -1.0 + i as f64 * h;
        s += (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h)) * h / 6.0;
    }
    s
}

/// Moment diagnostics: the partial sum `B = sum_j gamma_{j-1} |b_j|` over the
/// truncation and a Monte Carlo estimate of
/// `m_delta = E exp(delta (Phi(eta) + p(eta)))`, with a sample-doubling
/// stability flag.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MomentReport {
    pub frak_b: f64,
    pub m_delta_hat: f64,
    pub m_delta_half: f64,
    pub m_delta_quarter: f64,
    /// set when the estimate keeps growing across sample-size doublings
    pub delta_too_large: bool,
}

/// `gamma_{j-1}` for the 1-based basis index `j`: the gamma of the last
/// ladder level whose subspace does not contain `e_j`.
fn gamma_before(system: &dyn System, j: usize) -> f64 {
    let mut g = system.gamma(0);
    for level in 0..=system.n_levels() {
        if system.h_n_dim(level) < j {
            g = system.gamma(level);
        } else {
            break;
        }
    }
    g
}

pub fn moment_report(
    law: &KickLaw,
    system: &dyn System,
    n_samples: usize,
    seed: u64,
) -> Result<MomentReport> {
    assert!(n_samples >= 4);
    let frak_b: f64 = law
        .b
        .iter()
        .enumerate()
        .map(|(i, bj)| gamma_before(system, i + 1) * bj.abs())
        .sum();

    let streams = crate::rng::Streams::new(seed);
    let delta = law.delta;
    let acc = crate::exec::blocked_fold(
        n_samples,
        1024,
        |range| {
            let mut sums = (0.0f64, 0.0f64, 0.0f64); // quarter, half, full
            for i in range {
                let mut rng = streams.at(i as u64, 0, crate::rng::Lane::Scratch);
                let eta = law.sample(system, &mut rng).expect("dimension checked");
                let w = (delta * (system.phi(&eta) + system.frak_p(&eta))).exp();
                if i < n_samples / 4 {
                    sums.0 += w;
                }
                if i < n_samples / 2 {
                    sums.1 += w;
                }
                sums.2 += w;
            }
            sums
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2),
        (0.0, 0.0, 0.0),
    );
    let m_quarter = acc.0 / (n_samples / 4) as f64;
    let m_half = acc.1 / (n_samples / 2) as f64;
    let m_full = acc.2 / n_samples as f64;
    // diverging exponential moments keep growing as the sample doubles
    let delta_too_large = m_full > 1.5 * m_half && m_half > 1.5 * m_quarter;
    Ok(MomentReport {
        frak_b,
        m_delta_hat: m_full,
        m_delta_half: m_half,
        m_delta_quarter: m_quarter,
        delta_too_large,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BasisId, DissipativityConstants};
    use crate::rng::{Lane, Streams};
    use crate::systems::LinearTestSpec;

    struct GammaMock {
        gamma: Vec<f64>,
    }

    impl System for GammaMock {
        fn n_dim(&self) -> usize {
            self.gamma.len() - 1
        }
        fn basis(&self) -> BasisId {
            BasisId(998)
        }
        fn name(&self) -> &'static str {
            "gamma-mock"
        }
        fn step(&self, u: &StateVector) -> crate::Result<StateVector> {
            Ok(u.clone())
        }
        fn phi(&self, u: &StateVector) -> f64 {
            1.0 + u.norm().powi(2)
        }
        fn frak_p(&self, _u: &StateVector) -> f64 {
            0.0
        }
        fn constants(&self) -> DissipativityConstants {
            DissipativityConstants {
                alpha: 2.0,
                beta: 2.0,
                c_phi: 2.0,
                q: 0.5,
            }
        }
        fn n_levels(&self) -> usize {
            self.gamma.len() - 1
        }
        fn gamma(&self, level: usize) -> f64 {
            self.gamma[level]
        }
        fn s_of_zero_u_norm(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn zero_coefficients_give_zero_kicks() {
        let sys = LinearTestSpec::new(3, 0.5).unwrap();
        let law = KickLaw::new(vec![0.0; 3], DensityFamily::Gaussian, 0.1).unwrap();
        let mut rng = Streams::new(1).kick(0, 1);
        let eta = law.sample(&sys, &mut rng).unwrap();
        assert_eq!(eta.coeffs, vec![0.0; 3]);
    }

    #[test]
    fn kick_sampling_is_reproducible() {
        let sys = LinearTestSpec::new(2, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(2, 1.0).unwrap();
        let s = Streams::new(9);
        let a = law.sample(&sys, &mut s.kick(5, 3)).unwrap();
        let b = law.sample(&sys, &mut s.kick(5, 3)).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn empirical_variance_matches_scaled_family_variance() {
        let sys = LinearTestSpec::new(2, 0.5).unwrap();
        let law = KickLaw::new(vec![1.0, 2.0], DensityFamily::Gaussian, 0.1).unwrap();
        let s = Streams::new(4);
        let n = 100_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for i in 0..n {
            let eta = law.sample(&sys, &mut s.kick(i, 1)).unwrap();
            for c in 0..2 {
                sums[c] += eta.coeffs[c];
                sq[c] += eta.coeffs[c] * eta.coeffs[c];
            }
        }
        for c in 0..2 {
            let mean = sums[c] / n as f64;
            let var = sq[c] / n as f64 - mean * mean;
            let expect = law.b()[c] * law.b()[c];
            let stderr = expect * (2.0 / n as f64).sqrt();
            assert!(
                (var - expect).abs() < 3.0 * stderr,
                "coordinate {c}: {var} vs {expect}"
            );
        }
    }

    #[test]
    fn projected_density_closed_forms() {
        let law = KickLaw::new(vec![1.0, 2.0], DensityFamily::Gaussian, 0.1).unwrap();
        let d1 = law.projected_density(1, &[0.0]).unwrap();
        assert!((d1 - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let d2 = law.projected_density(2, &[0.0, 0.0]).unwrap();
        let expect = (1.0 / (2.0 * std::f64::consts::PI)) * 0.5;
        assert!((d2 - expect).abs() < 1e-12);
        // tail guard
        assert_eq!(law.projected_density(1, &[100.0]).unwrap(), 0.0);
    }

    #[test]
    fn projected_density_rejects_degenerate_directions() {
        let law = KickLaw::new(vec![0.0, 1.0], DensityFamily::Gaussian, 0.1).unwrap();
        assert!(matches!(
            law.projected_density(1, &[0.0]),
            Err(Error::DegenerateDirection { index: 1 })
        ));
    }

    #[test]
    fn projected_density_integrates_to_one() {
        for family in [DensityFamily::Gaussian, DensityFamily::Bump] {
            let law = KickLaw::new(vec![0.7, 1.3], DensityFamily::Gaussian, 0.1).unwrap();
            let _ = law;
            let law = KickLaw::new(vec![0.7], family, 0.1).unwrap();
            let (lo, hi, n) = (-10.0, 10.0, 20_000);
            let h = (hi - lo) / n as f64;
            let mut s = 0.0;
            for i in 0..n {
                let x = lo + (i as f64 + 0.5) * h;
                s += law.projected_density(1, &[x]).unwrap() * h;
            }
            assert!((s - 1.0).abs() < 1e-4, "family {family:?}: mass {s}");
        }
    }

    #[test]
    fn frak_b_partial_sum_of_geometric_times_linear_gamma() {
        // b_j = 2^{-j}, gamma_j = j: sum_{j>=1} (j-1) 2^{-j} = 1
        let n = 40;
        let gamma: Vec<f64> = (0..=n).map(|j| j as f64).collect();
        let sys = GammaMock { gamma };
        let b: Vec<f64> = (1..=n).map(|j| 0.5f64.powi(j as i32)).collect();
        let law = KickLaw::new(b, DensityFamily::Gaussian, 0.05).unwrap();
        let r = moment_report(&law, &sys, 16, 0).unwrap();
        assert!((r.frak_b - 1.0).abs() < 1e-6, "frak_b = {}", r.frak_b);
    }

    #[test]
    fn m_delta_deterministic_kick_is_exact() {
        let sys = LinearTestSpec::new(2, 0.5).unwrap();
        let law = KickLaw::new(vec![0.0, 0.0], DensityFamily::Gaussian, 0.1).unwrap();
        let r = moment_report(&law, &sys, 64, 1).unwrap();
        // Phi(0) = 1, p(0) = 0
        assert!((r.m_delta_hat - (0.1f64).exp()).abs() < 1e-12);
        assert!(!r.delta_too_large);
    }

    #[test]
    fn m_delta_gaussian_closed_form() {
        // Phi(u) = 1 + u^2, delta = 0.1:
        // E e^{delta(1 + xi^2)} = e^{0.1} (1 - 0.2)^{-1/2}
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(1, 1.0).unwrap();
        let r = moment_report(&law, &sys, 200_000, 7).unwrap();
        let exact = (0.1f64).exp() * (0.8f64).powf(-0.5);
        assert!(
            (r.m_delta_hat - exact).abs() < 0.01,
            "{} vs {}",
            r.m_delta_hat,
            exact
        );
        assert!(!r.delta_too_large);
    }

    #[test]
    fn m_delta_divergence_is_flagged() {
        // delta = 0.6 > 1/2 makes E e^{0.6 xi^2} infinite
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let law = KickLaw::new(vec![1.0], DensityFamily::Gaussian, 0.6).unwrap();
        let r = moment_report(&law, &sys, 100_000, 3).unwrap();
        assert!(r.delta_too_large, "{r:?}");
    }

    #[test]
    fn mean_u_norm_bounded_by_frak_b() {
        // E |eta|_U <= sum gamma_{j-1} b_j E|xi| <= frak_b for Var <= 1
        let sys = LinearTestSpec::new(4, 0.5).unwrap();
        let law = KickLaw::gaussian_geometric(4, 0.5, 0.5).unwrap();
        let r = moment_report(&law, &sys, 16, 0).unwrap();
        let s = Streams::new(11);
        let n = 20_000;
        let mut acc = 0.0;
        for i in 0..n {
            let eta = law.sample(&sys, &mut s.at(i, 0, Lane::Scratch)).unwrap();
            acc += crate::model::u_norm(&sys, &eta).unwrap();
        }
        let mean = acc / n as f64;
        assert!(mean <= r.frak_b, "E|eta|_U = {mean} > B = {}", r.frak_b);
    }

    #[test]
    fn bump_family_is_compactly_supported_with_small_variance() {
        let fam = DensityFamily::Bump;
        assert_eq!(fam.density(1.0), 0.0);
        assert!(fam.density(0.0) > 0.0);
        let v = bump_variance();
        assert!(v > 0.0 && v < 1.0, "bump variance {v}");
        let mut rng = Streams::new(2).at(0, 0, Lane::Scratch);
        for _ in 0..1000 {
            let x = fam.sample(&mut rng);
            assert!(x.abs() < 1.0);
        }
    }
}
