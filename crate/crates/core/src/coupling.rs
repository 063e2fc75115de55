//! Level-`N` coupling of one-step laws: exact maximal coupling of the
//! projected product-Gaussian kicks by whitening and a 1D reflection
//! coupling, coupled trajectory construction with shared high-mode kicks,
//! per-step meeting statistics with the `(r, rho)` stratification, and the
//! uniform-Feller equicontinuity diagnostic.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{CoupledStepRecord, StateVector, System};
use crate::noise::{DensityFamily, KickLaw};
use crate::rng::{Lane, Streams};
use crate::tilted::Observable;

/// Maximal coupling of `N(m1, diag b^2)` and `N(m2, diag b^2)`: whiten,
/// share the components orthogonal to the mean gap, and couple the 1D
/// component along the gap by reflection. The meeting probability is exactly
/// `1 - TV = 2 Phi(-gap/2)` in whitened units.
pub struct GaussianMaximalCoupling {
    mean1: Vec<f64>,
    mean2: Vec<f64>,
    scales: Vec<f64>,
    /// unit vector along the whitened mean difference (None when equal)
    dir: Option<Vec<f64>>,
    gap: f64,
}

impl GaussianMaximalCoupling {
    pub fn new(mean1: Vec<f64>, mean2: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        let n = scales.len();
        if mean1.len() != n || mean2.len() != n {
            return Err(Error::DimensionMismatch {
                context: "coupling means",
                expected: n,
                got: mean1.len().max(mean2.len()),
            });
        }
        if let Some(i) = scales.iter().position(|b| *b <= 0.0) {
            return Err(Error::DegenerateDirection { index: i + 1 });
        }
        let delta: Vec<f64> = (0..n)
            .map(|i| (mean2[i] - mean1[i]) / scales[i])
            .collect();
        let gap = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        let dir = if gap > 0.0 {
            Some(delta.iter().map(|d| d / gap).collect())
        } else {
            None
        };
        Ok(GaussianMaximalCoupling {
            mean1,
            mean2,
            scales,
            dir,
            gap,
        })
    }

    /// `P{V = V'} = 2 Phi(-gap/2)`.
    pub fn meeting_probability(&self) -> f64 {
        normal_cdf(-0.5 * self.gap) * 2.0
    }

    pub fn tv(&self) -> f64 {
        1.0 - self.meeting_probability()
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// One draw `(v, v', met)`; `met` implies bit-identical vectors.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>, bool) {
        let n = self.scales.len();
        let xi: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let (met, shift) = match &self.dir {
            None => (true, 0.0),
            Some(e) => {
                let s: f64 = xi.iter().zip(e).map(|(x, ei)| x * ei).sum();
                // accept with probability phi(s - gap) / phi(s)
                let log_ratio = 0.5 * s * s - 0.5 * (s - self.gap) * (s - self.gap);
                let u: f64 = rng.gen_range(0.0..1.0);
                if u.ln() <= log_ratio {
                    (true, 0.0)
                } else {
                    // reflect about the midpoint of the whitened means
                    (false, self.gap - 2.0 * s)
                }
            }
        };
        let v: Vec<f64> = (0..n)
            .map(|i| self.mean1[i] + self.scales[i] * xi[i])
            .collect();
        if met {
            // y = xi shifted by the whitened gap keeps the marginal of side 2
            let v2: Vec<f64> = (0..n)
                .map(|i| {
                    self.mean2[i] + self.scales[i] * (xi[i] - gap_component(&self.dir, i) * self.gap)
                })
                .collect();
            // met means the physical draws coincide exactly
            debug_assert!(v
                .iter()
                .zip(&v2)
                .all(|(a, b)| (a - b).abs() < 1e-9 * (1.0 + a.abs())));
            (v.clone(), v, true)
        } else {
            let e = self.dir.as_ref().unwrap();
            let v2: Vec<f64> = (0..n)
                .map(|i| {
                    let yi = xi[i] + shift * e[i] - e[i] * self.gap;
                    self.mean2[i] + self.scales[i] * yi
                })
                .collect();
            (v, v2, false)
        }
    }
}

fn gap_component(dir: &Option<Vec<f64>>, i: usize) -> f64 {
    dir.as_ref().map_or(0.0, |e| e[i])
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// Calibrated Lipschitz constant of `TV(nu_v, nu_{v'})` in the mean gap:
/// the total variation of product Gaussians with equal scales is at most
/// `gap / (sqrt(2 pi) min b)`.
pub fn coupling_tv_constant(scales: &[f64]) -> f64 {
    let min_b = scales.iter().cloned().fold(f64::INFINITY, f64::min);
    1.0 / ((2.0 * std::f64::consts::PI).sqrt() * min_b)
}

/// A coupled pair of trajectories at a fixed coupling level.
#[derive(Debug, Clone)]
pub struct CoupledPair {
    pub u: StateVector,
    pub u_prime: StateVector,
    /// per-step flags of the low-mode meeting event
    pub met: Vec<bool>,
    pub level: usize,
}

impl CoupledPair {
    pub fn new(u: StateVector, u_prime: StateVector, level: usize) -> Self {
        CoupledPair {
            u,
            u_prime,
            met: Vec::new(),
            level,
        }
    }
}

/// One coupled transition: low modes from the maximal coupling applied to
/// the projected images, high-mode kick drawn once and shared.
pub fn coupled_step(
    system: &dyn System,
    law: &KickLaw,
    pair: &mut CoupledPair,
    rng: &mut impl Rng,
) -> Result<CoupledStepRecord> {
    if law.family() != DensityFamily::Gaussian {
        return Err(Error::InvalidConfig(
            "exact maximal coupling requires the Gaussian family; use the gamma-coupling oracle for other families".into(),
        ));
    }
    let cut = system.h_n_dim(pair.level);
    let su = system.step(&pair.u)?;
    let su_p = system.step(&pair.u_prime)?;
    let b = law.b();
    let coupling = GaussianMaximalCoupling::new(
        su.coeffs[..cut].to_vec(),
        su_p.coeffs[..cut].to_vec(),
        b[..cut].to_vec(),
    )?;
    let (v, v_prime, met) = coupling.sample(rng);
    // shared high-mode kick
    let high: Vec<f64> = b[cut..]
        .iter()
        .map(|bj| {
            if *bj == 0.0 {
                let _: f64 = StandardNormal.sample(rng);
                0.0
            } else {
                bj * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
            }
        })
        .collect();
    let mut u_new = su.clone();
    let mut up_new = su_p.clone();
    let mut kick = StateVector::zeros(system.n_dim(), system.basis());
    let mut kick_p = StateVector::zeros(system.n_dim(), system.basis());
    for i in 0..cut {
        kick.coeffs[i] = v[i] - su.coeffs[i];
        kick_p.coeffs[i] = v_prime[i] - su_p.coeffs[i];
        u_new.coeffs[i] = v[i];
        up_new.coeffs[i] = v_prime[i];
    }
    for (off, h) in high.iter().enumerate() {
        let i = cut + off;
        kick.coeffs[i] = *h;
        kick_p.coeffs[i] = *h;
        u_new.coeffs[i] = su.coeffs[i] + h;
        up_new.coeffs[i] = su_p.coeffs[i] + h;
    }
    if met {
        // bitwise agreement of the low modes on meeting steps
        for i in 0..cut {
            up_new.coeffs[i] = u_new.coeffs[i];
        }
    }
    pair.u = u_new.clone();
    pair.u_prime = up_new.clone();
    pair.met.push(met);
    Ok(CoupledStepRecord {
        u: u_new,
        u_prime: up_new,
        kick,
        kick_prime: kick_p,
    })
}

/// Meeting/divorce statistics and the stratification counts over a grid of
/// `(r, rho)` cells, with the envelope
/// `C3 min( gamma_N^{-r} e^{2 rho} d, e^{c r - sigma rho} )`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MeetingReport {
    pub runs: usize,
    pub horizon: usize,
    /// per-step counts of pairs meeting at that step
    pub met_per_step: Vec<usize>,
    /// per-step counts of first-divorce events (low modes split at step r
    /// after agreeing up to r-1)
    pub strata: Vec<StratumRow>,
    pub initial_distance: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StratumRow {
    pub r: usize,
    pub rho: usize,
    pub count: usize,
    pub p_hat: f64,
    pub envelope: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EnvelopeParams {
    pub c: f64,
    pub sigma: f64,
    pub c3: f64,
}

pub struct MeetingOptions {
    pub level: usize,
    pub horizon: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub envelope: EnvelopeParams,
}

pub fn meeting_rate(
    system: &dyn System,
    law: &KickLaw,
    init: (&StateVector, &StateVector),
    opts: &MeetingOptions,
) -> Result<MeetingReport> {
    let d = init.0.dist(init.1);
    let streams = Streams::new(opts.seed);
    let gamma_n = system.gamma(opts.level);
    type RunAcc = (Vec<usize>, std::collections::BTreeMap<(usize, usize), usize>);
    let acc = exec::blocked_fold(
        opts.n_runs,
        64,
        |range| -> Result<RunAcc> {
            let mut met_per_step = vec![0usize; opts.horizon + 1];
            let mut strata = std::collections::BTreeMap::new();
            for run in range {
                let mut pair = CoupledPair::new(init.0.clone(), init.1.clone(), opts.level);
                let mut p_sum = system.frak_p(&pair.u) + system.frak_p(&pair.u_prime);
                let mut all_met = true;
                for step in 1..=opts.horizon {
                    let mut rng = streams.at(run as u64, step as u64, Lane::Coupling);
                    coupled_step(system, law, &mut pair, &mut rng)?;
                    let met = *pair.met.last().unwrap();
                    if met {
                        met_per_step[step] += 1;
                    }
                    if all_met && !met {
                        all_met = false;
                        let rho = p_sum.ceil().max(1.0) as usize;
                        *strata.entry((step, rho)).or_insert(0) += 1;
                    }
                    p_sum += system.frak_p(&pair.u) + system.frak_p(&pair.u_prime);
                }
            }
            Ok((met_per_step, strata))
        },
        |a: Result<RunAcc>, b: Result<RunAcc>| match (a, b) {
            (Ok(mut x), Ok(y)) => {
                for (m, n) in x.0.iter_mut().zip(y.0) {
                    *m += n;
                }
                for (k, v) in y.1 {
                    *x.1.entry(k).or_insert(0) += v;
                }
                Ok(x)
            }
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
        Ok((vec![0usize; opts.horizon + 1], std::collections::BTreeMap::new())),
    )?;
    let e = opts.envelope;
    let strata = acc
        .1
        .into_iter()
        .map(|((r, rho), count)| {
            let fp = gamma_n.powi(-(r as i32)) * (2.0 * rho as f64).exp() * d;
            let tail = (e.c * r as f64 - e.sigma * rho as f64).exp();
            StratumRow {
                r,
                rho,
                count,
                p_hat: count as f64 / opts.n_runs as f64,
                envelope: e.c3 * fp.min(tail),
            }
        })
        .collect();
    Ok(MeetingReport {
        runs: opts.n_runs,
        horizon: opts.horizon,
        met_per_step: acc.0,
        strata,
        initial_distance: d,
    })
}

/// Modulus-of-continuity diagnostic for the normalised tilted images
/// `g_k = P_k^V f / |P_k^V 1|_R`: estimates `sup_{k <= k_max}
/// |g_k(z) - g_k(z')|` over pairs at distance `d` via the coupled
/// estimator, for each `d` in the probe list.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FellerReport {
    pub points: Vec<FellerPoint>,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FellerPoint {
    pub d: f64,
    pub modulus: f64,
    pub stderr: f64,
}

pub struct FellerOptions {
    pub level: usize,
    pub radius: f64,
    pub k_max: usize,
    pub pair_budget: usize,
    pub distances: Vec<f64>,
    pub seed: u64,
}

pub fn feller_diagnostic(
    system: &dyn System,
    law: &KickLaw,
    v: &Observable,
    f: &Observable,
    opts: &FellerOptions,
) -> Result<FellerReport> {
    if v.ell() != 1 || f.ell() != 1 {
        return Err(Error::InvalidConfig(
            "the Feller diagnostic supports window arity 1".into(),
        ));
    }
    // deterministic probe set inside the radius-R ball for the denominator
    let n = system.n_dim();
    let mut probes = vec![StateVector::zeros(n, system.basis())];
    let mut e1 = StateVector::zeros(n, system.basis());
    e1.coeffs[0] = 0.5 * opts.radius;
    probes.push(e1.clone());
    probes.push(e1.scale(-1.0));
    let streams = Streams::new(opts.seed ^ 0xfe11e4);
    // MC estimate of P_k^V 1 at each probe, shared across k
    let mut denom = vec![0.0f64; opts.k_max + 1];
    for (pi, probe) in probes.iter().enumerate() {
        let sums = exec::blocked_fold(
            opts.pair_budget,
            64,
            |range| -> Result<Vec<f64>> {
                let mut acc = vec![0.0f64; opts.k_max + 1];
                for run in range {
                    let mut u = probe.clone();
                    let mut vsum = 0.0;
                    acc[0] += 1.0;
                    for step in 1..=opts.k_max {
                        let mut rng =
                            streams.at((pi * opts.pair_budget + run) as u64, step as u64, Lane::Kick);
                        let eta = law.sample(system, &mut rng)?;
                        u = system.step(&u)?.add(&eta);
                        vsum += v.eval_state(&u);
                        acc[step] += vsum.exp();
                    }
                }
                Ok(acc)
            },
            |a, b| match (a, b) {
                (Ok(mut x), Ok(y)) => {
                    for (p, q) in x.iter_mut().zip(y) {
                        *p += q;
                    }
                    Ok(x)
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            },
            Ok(vec![0.0; opts.k_max + 1]),
        )?;
        for k in 0..=opts.k_max {
            denom[k] = denom[k].max(sums[k] / opts.pair_budget as f64);
        }
    }

    let mut points = Vec::new();
    let mut inconclusive = false;
    for (di, &d) in opts.distances.iter().enumerate() {
        // coupled difference estimator from the origin-anchored pair
        let z1 = StateVector::zeros(n, system.basis());
        let mut z2 = z1.clone();
        z2.coeffs[0] += d;
        let per_k = exec::blocked_fold(
            opts.pair_budget,
            64,
            |range| -> Result<(Vec<f64>, Vec<f64>)> {
                let mut diff = vec![0.0f64; opts.k_max + 1];
                let mut diff2 = vec![0.0f64; opts.k_max + 1];
                for run in range {
                    let mut pair = CoupledPair::new(z1.clone(), z2.clone(), opts.level);
                    let mut vs1 = 0.0;
                    let mut vs2 = 0.0;
                    for step in 1..=opts.k_max {
                        let mut rng = streams.at(
                            ((di + 17) * opts.pair_budget + run) as u64,
                            step as u64,
                            Lane::Coupling,
                        );
                        coupled_step(system, law, &mut pair, &mut rng)?;
                        vs1 += v.eval_state(&pair.u);
                        vs2 += v.eval_state(&pair.u_prime);
                        let x = vs1.exp() * f.eval_state(&pair.u)
                            - vs2.exp() * f.eval_state(&pair.u_prime);
                        diff[step] += x;
                        diff2[step] += x * x;
                    }
                }
                Ok((diff, diff2))
            },
            |a, b| match (a, b) {
                (Ok(mut x), Ok(y)) => {
                    for (p, q) in x.0.iter_mut().zip(y.0) {
                        *p += q;
                    }
                    for (p, q) in x.1.iter_mut().zip(y.1) {
                        *p += q;
                    }
                    Ok(x)
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            },
            Ok((vec![0.0; opts.k_max + 1], vec![0.0; opts.k_max + 1])),
        )?;
        let m = opts.pair_budget as f64;
        let mut modulus: f64 = 0.0;
        let mut worst_se = 0.0;
        for k in 1..=opts.k_max {
            let mean = per_k.0[k] / m;
            let var = (per_k.1[k] / m - mean * mean).max(0.0);
            let g = mean.abs() / denom[k];
            if g > modulus {
                modulus = g;
                worst_se = (var / m).sqrt() / denom[k];
            }
        }
        if worst_se > modulus.max(1e-12) {
            inconclusive = true;
        }
        points.push(FellerPoint {
            d,
            modulus,
            stderr: worst_se,
        });
    }
    Ok(FellerReport {
        points,
        inconclusive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::LinearTestSpec;

    #[test]
    fn equal_means_always_meet() {
        let c = GaussianMaximalCoupling::new(vec![1.0, -2.0], vec![1.0, -2.0], vec![1.0, 2.0])
            .unwrap();
        assert_eq!(c.meeting_probability(), 1.0);
        let mut rng = Streams::new(1).at(0, 0, Lane::Coupling);
        for _ in 0..100 {
            let (v, v2, met) = c.sample(&mut rng);
            assert!(met);
            assert_eq!(v, v2);
        }
    }

    #[test]
    fn zero_scale_is_rejected() {
        assert!(matches!(
            GaussianMaximalCoupling::new(vec![0.0], vec![1.0], vec![0.0]),
            Err(Error::DegenerateDirection { index: 1 })
        ));
    }

    #[test]
    fn unit_gap_meeting_probability_matches_min_density_integral() {
        let c = GaussianMaximalCoupling::new(vec![0.0], vec![1.0], vec![1.0]).unwrap();
        // quadrature oracle for the overlap of N(0,1) and N(1,1)
        let sq = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let p = |x: f64| (-0.5 * x * x).exp() * sq;
        let q = |x: f64| (-0.5 * (x - 1.0) * (x - 1.0)).exp() * sq;
        let overlap = 1.0 - crate::chain::tv_densities(p, q, -12.0, 13.0);
        assert!((c.meeting_probability() - overlap).abs() < 1e-8);
        let streams = Streams::new(7);
        let n = 100_000;
        let mut met = 0usize;
        for i in 0..n {
            let (_, _, m) = c.sample(&mut streams.at(i, 0, Lane::Coupling));
            met += m as usize;
        }
        let p_hat = met as f64 / n as f64;
        assert!((p_hat - 0.61708).abs() < 0.01, "{p_hat}");
    }

    #[test]
    fn gap_reduces_to_scaled_single_coordinate() {
        // means differing only in coordinate 3 by d with scale b3: the gap is
        // d / b3, so the meeting probability matches the 1D case
        let mut m2 = vec![0.5, -1.0, 2.0];
        m2[2] += 0.75;
        let c =
            GaussianMaximalCoupling::new(vec![0.5, -1.0, 2.0], m2, vec![1.0, 1.0, 0.25]).unwrap();
        let c1 = GaussianMaximalCoupling::new(vec![0.0], vec![3.0], vec![1.0]).unwrap();
        assert!((c.gap() - 3.0).abs() < 1e-12);
        assert!((c.meeting_probability() - c1.meeting_probability()).abs() < 1e-12);
    }

    #[test]
    fn coupled_marginals_match_uncoupled_moments() {
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(1, 1.0).unwrap();
        let streams = Streams::new(5);
        let n = 60_000;
        let k = 12;
        let mut mean = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for run in 0..n {
            let mut pair = CoupledPair::new(
                StateVector::new(vec![0.0], sys.basis()),
                StateVector::new(vec![1.0], sys.basis()),
                1,
            );
            for step in 1..=k {
                let mut rng = streams.at(run, step, Lane::Coupling);
                coupled_step(&sys, &law, &mut pair, &mut rng).unwrap();
            }
            mean[0] += pair.u.coeffs[0];
            mean[1] += pair.u_prime.coeffs[0];
            sq[0] += pair.u.coeffs[0].powi(2);
            sq[1] += pair.u_prime.coeffs[0].powi(2);
        }
        // AR(1) closed form from delta_x: mean a^k x, var (1 - a^{2k})/(1 - a^2)
        let var_k = (1.0 - 0.25f64.powi(k as i32)) * 4.0 / 3.0;
        for (side, x0) in [(0usize, 0.0f64), (1, 1.0)] {
            let m = mean[side] / n as f64;
            let v = sq[side] / n as f64 - m * m;
            let expect_m = 0.5f64.powi(k as i32) * x0;
            let se_m = (var_k / n as f64).sqrt();
            assert!((m - expect_m).abs() < 3.5 * se_m, "side {side} mean {m}");
            let se_v = var_k * (2.0 / n as f64).sqrt();
            assert!((v - var_k).abs() < 3.5 * se_v, "side {side} var {v}");
        }
    }

    #[test]
    fn equal_starts_stay_glued_forever() {
        let sys = LinearTestSpec::new(2, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(2, 0.7).unwrap();
        let streams = Streams::new(3);
        let mut pair = CoupledPair::new(
            StateVector::new(vec![0.3, -0.4], sys.basis()),
            StateVector::new(vec![0.3, -0.4], sys.basis()),
            2,
        );
        for step in 1..=30 {
            let mut rng = streams.at(0, step, Lane::Coupling);
            coupled_step(&sys, &law, &mut pair, &mut rng).unwrap();
            assert!(pair.met.last().copied().unwrap());
            assert_eq!(pair.u.coeffs, pair.u_prime.coeffs);
        }
    }

    #[test]
    fn high_mode_kicks_are_bit_identical() {
        let sys = LinearTestSpec::new(3, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(3, 1.0).unwrap();
        let streams = Streams::new(4);
        let mut pair = CoupledPair::new(
            StateVector::new(vec![1.0, 0.0, 0.0], sys.basis()),
            StateVector::new(vec![-1.0, 0.5, 0.0], sys.basis()),
            1,
        );
        for step in 1..=20 {
            let mut rng = streams.at(0, step, Lane::Coupling);
            let rec = coupled_step(&sys, &law, &mut pair, &mut rng).unwrap();
            assert_eq!(rec.kick.coeffs[1..], rec.kick_prime.coeffs[1..]);
        }
    }

    #[test]
    fn tv_lipschitz_bound_holds_with_calibrated_constant() {
        let sys = LinearTestSpec::new(2, 0.5).unwrap();
        let scales = vec![0.8, 1.3];
        let c_n = coupling_tv_constant(&scales);
        let streams = Streams::new(6);
        use rand::Rng;
        let mut rng = streams.at(0, 0, Lane::Scratch);
        for _ in 0..10_000 {
            let v = StateVector::new(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)], sys.basis());
            let w = StateVector::new(vec![rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)], sys.basis());
            let sv = sys.step(&v).unwrap();
            let sw = sys.step(&w).unwrap();
            let coupling = GaussianMaximalCoupling::new(
                sv.coeffs.clone(),
                sw.coeffs.clone(),
                scales.clone(),
            )
            .unwrap();
            assert!(coupling.tv() <= c_n * sv.dist(&sw) + 1e-12);
        }
    }

    #[test]
    fn divorce_probability_matches_one_step_tv() {
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(1, 1.0).unwrap();
        let u0 = StateVector::new(vec![0.0], sys.basis());
        let v0 = StateVector::new(vec![2.0], sys.basis());
        let opts = MeetingOptions {
            level: 1,
            horizon: 1,
            n_runs: 50_000,
            seed: 12,
            envelope: EnvelopeParams {
                c: 0.0,
                sigma: 1.0,
                c3: 1.0,
            },
        };
        let rep = meeting_rate(&sys, &law, (&u0, &v0), &opts).unwrap();
        let met_frac = rep.met_per_step[1] as f64 / opts.n_runs as f64;
        // one-step laws are N(0,1) and N(1,1): meet with prob 2 Phi(-1/2)
        let expect = 2.0 * normal_cdf(-0.5);
        let se = (expect * (1.0 - expect) / opts.n_runs as f64).sqrt();
        assert!((met_frac - expect).abs() < 3.0 * se, "{met_frac} vs {expect}");
        // the lone divorce stratum occurs at r = 1
        assert!(rep.strata.iter().all(|s| s.r == 1));
        let divorce: usize = rep.strata.iter().map(|s| s.count).sum();
        assert_eq!(divorce, opts.n_runs - rep.met_per_step[1]);
    }

    #[test]
    fn equal_starts_have_empty_strata() {
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(1, 1.0).unwrap();
        let u0 = StateVector::new(vec![0.7], sys.basis());
        let opts = MeetingOptions {
            level: 1,
            horizon: 10,
            n_runs: 500,
            seed: 2,
            envelope: EnvelopeParams {
                c: 0.0,
                sigma: 1.0,
                c3: 1.0,
            },
        };
        let rep = meeting_rate(&sys, &law, (&u0, &u0), &opts).unwrap();
        assert!(rep.strata.is_empty());
        assert_eq!(rep.initial_distance, 0.0);
        assert!(rep.met_per_step[1..].iter().all(|&m| m == opts.n_runs));
    }

    #[test]
    fn constant_tilt_has_zero_modulus() {
        let sys = LinearTestSpec::new(1, 0.5).unwrap();
        let law = KickLaw::gaussian_uniform(1, 1.0).unwrap();
        let v = Observable::constant(0.0);
        let f = Observable::constant(1.0);
        let opts = FellerOptions {
            level: 1,
            radius: 2.0,
            k_max: 6,
            pair_budget: 2_000,
            distances: vec![0.0, 0.5],
            seed: 21,
        };
        let rep = feller_diagnostic(&sys, &law, &v, &f, &opts).unwrap();
        for p in &rep.points {
            assert!(p.modulus < 1e-12, "d={}: modulus {}", p.d, p.modulus);
        }
    }
}
