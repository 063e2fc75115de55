//! Rate functions by convex conjugation of the pressure, level-1 tail
//! comparisons against the exact rate, and equilibrium-state checks on
//! finite-chain oracles.

use crate::chain::{exact_pressure, golden_max, FiniteChain};
use crate::error::{Error, Result};
use crate::exec;
use crate::markov::{fold_trajectories, InitialLaw};
use crate::model::System;
use crate::noise::KickLaw;
use crate::rng::{Lane, Streams};
use crate::tilted::{fit_pressure, tilted_log_curves, Observable, PressureEstimate};

/// Pressure samples `Q(beta f)` on a tilt grid together with the conjugate
/// evaluator `I(y) = sup_beta (beta y - Q(beta))`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateFunction1D {
    pub beta_grid: Vec<f64>,
    pub q_values: Vec<f64>,
    pub q_stderr: Vec<f64>,
    pub convexity_ok: bool,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RateValue {
    pub y: f64,
    pub value: f64,
    pub beta_star: f64,
    /// `y` lies outside the observed slope range; the boundary supremum is a
    /// lower bound and the true value may be larger (possibly infinite)
    pub extrapolated: bool,
}

impl RateFunction1D {
    pub fn new(beta_grid: Vec<f64>, q_values: Vec<f64>, q_stderr: Vec<f64>) -> Result<Self> {
        if beta_grid.len() != q_values.len() || beta_grid.len() < 3 {
            return Err(Error::InvalidConfig(
                "rate function needs >= 3 pressure samples".into(),
            ));
        }
        if beta_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("beta grid must be increasing".into()));
        }
        let convexity_ok = convex_within_ci(&beta_grid, &q_values, &q_stderr);
        Ok(RateFunction1D {
            beta_grid,
            q_values,
            q_stderr,
            convexity_ok,
        })
    }

    /// Piecewise-linear interpolant of the sampled pressure (linear
    /// interpolation preserves convexity and never overshoots the samples).
    fn q_interp(&self, beta: f64) -> f64 {
        let g = &self.beta_grid;
        if beta <= g[0] {
            return self.q_values[0];
        }
        if beta >= g[g.len() - 1] {
            return self.q_values[g.len() - 1];
        }
        let j = g.partition_point(|b| *b <= beta).min(g.len() - 1);
        let (b0, b1) = (g[j - 1], g[j]);
        let t = (beta - b0) / (b1 - b0);
        self.q_values[j - 1] * (1.0 - t) + self.q_values[j] * t
    }

    /// `I(y) = sup_beta (beta y - Q(beta))` over the sampled grid, refined by
    /// golden section on the bracketing interval; the smallest maximiser is
    /// reported on ties.
    pub fn conjugate(&self, y: f64) -> RateValue {
        let g = &self.beta_grid;
        let score = |j: usize| g[j] * y - self.q_values[j];
        let mut best = 0usize;
        for j in 1..g.len() {
            if score(j) > score(best) + 1e-15 {
                best = j;
            }
        }
        let extrapolated = best == 0 || best == g.len() - 1;
        let lo = g[best.saturating_sub(1)];
        let hi = g[(best + 1).min(g.len() - 1)];
        let (beta_star, value) = golden_max(|b| b * y - self.q_interp(b), lo, hi, 120);
        RateValue {
            y,
            value: value.max(0.0),
            beta_star,
            extrapolated,
        }
    }

    /// `inf_{y in [lo, hi]} I(y)` by scanning the interval.
    pub fn infimum_over(&self, lo: f64, hi: f64, n_scan: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=n_scan {
            let y = lo + (hi - lo) * i as f64 / n_scan as f64;
            best = best.min(self.conjugate(y).value);
        }
        best
    }
}

fn convex_within_ci(grid: &[f64], q: &[f64], se: &[f64]) -> bool {
    for j in 1..grid.len() - 1 {
        let t = (grid[j] - grid[j - 1]) / (grid[j + 1] - grid[j - 1]);
        let chord = q[j - 1] * (1.0 - t) + q[j + 1] * t;
        let slack = 3.0 * (se[j - 1] + se[j] + se[j + 1]) + 1e-12;
        if q[j] > chord + slack {
            return false;
        }
    }
    true
}

/// Direct conjugation of an exactly known pressure curve.
pub fn legendre_1d(beta_grid: Vec<f64>, q_values: Vec<f64>, y: f64) -> Result<RateValue> {
    let n = beta_grid.len();
    let rf = RateFunction1D::new(beta_grid, q_values, vec![0.0; n])?;
    if !rf.convexity_ok {
        return Err(Error::InvalidConfig(
            "pressure samples fail the convexity midpoint test".into(),
        ));
    }
    Ok(rf.conjugate(y))
}

/// Builds `Q(beta f)` by Monte Carlo pressure slopes over one shared
/// ensemble, validates convexity within the confidence band, and returns the
/// conjugate evaluator.
#[allow(clippy::too_many_arguments)]
pub fn rate_from_pressure(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    f: &Observable,
    beta_grid: &[f64],
    k_grid: &[usize],
    m: usize,
    seed: u64,
) -> Result<(RateFunction1D, Vec<PressureEstimate>)> {
    let curves = tilted_log_curves(system, law, init, f, beta_grid, k_grid, m, seed)?;
    let fits: Vec<PressureEstimate> = curves
        .into_iter()
        .map(|c| fit_pressure(c, 100.0))
        .collect();
    let q: Vec<f64> = fits.iter().map(|p| p.q_hat).collect();
    let se: Vec<f64> = fits.iter().map(|p| p.slope_stderr).collect();
    let rf = RateFunction1D::new(beta_grid.to_vec(), q, se)?;
    Ok((rf, fits))
}

/// Monte Carlo tail probability `P{ (1/k) sum f(window_n) in [lo, hi] }`
/// with a Wilson interval.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TailEstimate {
    pub k: usize,
    pub hits: usize,
    pub runs: usize,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

pub fn tail_probability_mc(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    f: &Observable,
    k: usize,
    interval: (f64, f64),
    m: usize,
    seed: u64,
) -> Result<TailEstimate> {
    assert!(k >= 1);
    let ell = f.ell();
    if ell != 1 {
        return Err(Error::InvalidConfig(
            "tail probabilities are computed for window arity 1".into(),
        ));
    }
    let hits = fold_trajectories(
        system,
        law,
        init,
        m,
        k,
        seed,
        || (0usize, 0.0f64),
        |acc, _t, step, u| {
            if step == 0 {
                acc.1 = 0.0;
            }
            // time average over n = 0..k-1
            if step < k {
                acc.1 += f.eval_state(u);
            }
            if step == k {
                let avg = acc.1 / k as f64;
                if avg >= interval.0 && avg <= interval.1 {
                    acc.0 += 1;
                }
            }
            Ok(())
        },
        |mut a, b| {
            a.0 += b.0;
            a
        },
    )?
    .0;
    Ok(wilson(hits, m, k))
}

fn wilson(hits: usize, runs: usize, k: usize) -> TailEstimate {
    let z = 1.96;
    let n = runs as f64;
    let p = hits as f64 / n;
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    TailEstimate {
        k,
        hits,
        runs,
        p_hat: p,
        wilson_lo: (center - half).max(0.0),
        wilson_hi: (center + half).min(1.0),
    }
}

/// Exact tail of the time average of an indicator on an iid-row chain: the
/// count of visits is binomial, so
/// `P{ (1/k) sum 1_{state = s} >= y }` is an exact binomial sum (evaluated
/// in log space).
pub fn exact_iid_indicator_tail(chain: &FiniteChain, state: usize, k: usize, y: f64) -> Result<f64> {
    if !chain.has_iid_rows() {
        return Err(Error::InvalidConfig(
            "exact tails require an iid-row chain".into(),
        ));
    }
    let p = chain.prob(0, state);
    let j0 = (y * k as f64).ceil() as usize;
    // log-sum-exp over binomial terms
    let ln_p = p.ln();
    let ln_q = (1.0 - p).ln();
    let mut ln_terms = Vec::with_capacity(k + 1 - j0.min(k + 1));
    let mut ln_choose = 0.0; // ln C(k, 0)
    let mut terms_upto = vec![0.0; k + 1];
    for j in 0..=k {
        if j > 0 {
            ln_choose += ((k - j + 1) as f64).ln() - (j as f64).ln();
        }
        terms_upto[j] = ln_choose;
    }
    for j in j0..=k {
        ln_terms.push(terms_upto[j] + j as f64 * ln_p + (k - j) as f64 * ln_q);
    }
    if ln_terms.is_empty() {
        return Ok(0.0);
    }
    let mx = ln_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = ln_terms.iter().map(|t| (t - mx).exp()).sum();
    Ok((mx + s.ln()).exp())
}

/// One comparison row of the empirical tail exponent against the rate bound.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LdpRow {
    pub gamma_id: String,
    pub k: usize,
    pub exponent_hat: f64,
    /// exponent from the Wilson upper end (a lower bound on the decay rate)
    pub exponent_lo: f64,
    pub rate_bound: f64,
    pub hits: usize,
    pub one_sided: bool,
}

/// Tail-vs-rate table over a schedule of horizons and a family of intervals.
#[allow(clippy::too_many_arguments)]
pub fn ldp_report(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    f: &Observable,
    rate: &RateFunction1D,
    k_schedule: &[usize],
    intervals: &[(String, f64, f64)],
    m: usize,
    seed: u64,
) -> Result<Vec<LdpRow>> {
    let mut rows = Vec::new();
    for (id, lo, hi) in intervals {
        let bound = rate.infimum_over(*lo, *hi, 64);
        for (ki, &k) in k_schedule.iter().enumerate() {
            let est = tail_probability_mc(
                system,
                law,
                init,
                f,
                k,
                (*lo, *hi),
                m,
                seed.wrapping_add(1000 * ki as u64),
            )?;
            let one_sided = est.hits == 0;
            let exponent_hat = if one_sided {
                f64::INFINITY
            } else {
                -(est.p_hat.ln()) / k as f64
            };
            let exponent_lo = -(est.wilson_hi.max(1e-300).ln()) / k as f64;
            rows.push(LdpRow {
                gamma_id: id.clone(),
                k,
                exponent_hat,
                exponent_lo,
                rate_bound: bound,
                hits: est.hits,
                one_sided,
            });
        }
    }
    Ok(rows)
}

/// Level-2 rate function of a finite chain at the measure `sigma`, evaluated
/// as `sup_V (<V, sigma> - Q(V))` with `V` normalised by `V[0] = 0`.
/// Coordinate-wise golden ascent refines from the supplied candidates, so
/// the returned value is a certified lower bound that is tight at the
/// equilibrium measure of any candidate tilt.
pub fn chain_level2_rate(chain: &FiniteChain, sigma: &[f64], candidates: &[Vec<f64>]) -> Result<f64> {
    let n = chain.n();
    if sigma.len() != n {
        return Err(Error::DimensionMismatch {
            context: "measure",
            expected: n,
            got: sigma.len(),
        });
    }
    let objective = |v: &[f64]| -> f64 {
        let inner: f64 = v.iter().zip(sigma).map(|(a, b)| a * b).sum();
        inner - exact_pressure(chain, v).unwrap_or(f64::INFINITY)
    };
    let mut best_v = vec![0.0; n];
    let mut best = objective(&best_v);
    for cand in candidates {
        let val = objective(cand);
        if val > best {
            best = val;
            best_v = cand.clone();
        }
    }
    // coordinate ascent with V[0] pinned at 0 (the pressure shifts by
    // constants, so one coordinate is redundant)
    for _sweep in 0..12 {
        let mut improved = false;
        for i in 1..n {
            let v = best_v.clone();
            let (xi, val) = golden_max(
                |t| {
                    let mut w = v.clone();
                    w[i] = t;
                    objective(&w)
                },
                best_v[i] - 4.0,
                best_v[i] + 4.0,
                80,
            );
            if val > best + 1e-13 {
                best = val;
                best_v[i] = xi;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(best.max(0.0))
}

/// Verification that `nu_V = h_V mu_V` is the unique equilibrium state of the
/// tilt `V` on a chain oracle: stationarity under the twisted kernel, zero
/// defect of `Q - <V, nu> + I(nu)`, and strictly positive defect on
/// perturbed measures.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EquilibriumReport {
    pub q: f64,
    pub nu: Vec<f64>,
    pub stationarity_defect: f64,
    pub defect_at_nu: f64,
    pub min_perturbed_defect: f64,
    pub perturbations: usize,
}

pub fn equilibrium_check(
    chain: &FiniteChain,
    v: &[f64],
    n_perturbations: usize,
    l1_distance: f64,
    seed: u64,
) -> Result<EquilibriumReport> {
    let op = crate::tilted::GridOperator::from_chain(chain, v)?;
    let triple = crate::tilted::power_iterate(&op, 1e-12, 500_000)?;
    let tw = crate::tilted::twisted_semigroup(&op, &triple);
    let q = triple.lambda.ln();
    let nu = tw.nu.clone();
    let defect = |sigma: &[f64]| -> Result<f64> {
        let inner: f64 = v.iter().zip(sigma).map(|(a, b)| a * b).sum();
        let candidates = vec![v.to_vec()];
        let i_sigma = chain_level2_rate(chain, sigma, &candidates)?;
        Ok(q - inner + i_sigma)
    };
    let defect_at_nu = defect(&nu)?;
    // random perturbations at the requested l1 distance, kept on the simplex
    let streams = Streams::new(seed);
    let perturbed: Vec<f64> = exec::ordered_map(n_perturbations, |i| {
        use rand::Rng;
        let mut rng = streams.at(i as u64, 0, Lane::Scratch);
        let n = nu.len();
        loop {
            // random signed direction with zero sum
            let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = dir.iter().sum::<f64>() / n as f64;
            dir.iter_mut().for_each(|x| *x -= mean);
            let l1: f64 = dir.iter().map(|x| x.abs()).sum();
            if l1 < 1e-9 {
                continue;
            }
            let sigma: Vec<f64> = nu
                .iter()
                .zip(&dir)
                .map(|(p, d)| p + d * l1_distance / l1)
                .collect();
            if sigma.iter().all(|p| *p >= 1e-9) {
                return defect(&sigma).unwrap_or(f64::NAN);
            }
        }
    });
    let min_perturbed_defect = perturbed.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(EquilibriumReport {
        q,
        nu,
        stationarity_defect: tw.stationarity_defect,
        defect_at_nu,
        min_perturbed_defect,
        perturbations: n_perturbations,
    })
}

/// Reconstruction `Q(beta) = sup_y (beta y - I(y))` for the duality
/// round-trip check on oracles.
pub fn reconstruct_pressure(rate: &RateFunction1D, beta: f64, y_lo: f64, y_hi: f64) -> f64 {
    let (_, val) = golden_max(|y| beta * y - rate.conjugate(y).value, y_lo, y_hi, 200);
    val
}
