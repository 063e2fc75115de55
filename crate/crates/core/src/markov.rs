//! Trajectory simulation `u_k = S(u_{k-1}) + eta_k`, windowed processes,
//! occupation measures, mixing-rate estimation in the dual-Lipschitz metric,
//! and Lyapunov / recurrence / tightness diagnostics.

use crate::error::{Error, Result};
use crate::exec;
use crate::metric::{dual_lipschitz_1d_tol, Atoms1d, LipschitzDictionary};
use crate::model::{u_norm, StateVector, System};
use crate::noise::KickLaw;
use crate::rng::{Lane, Streams};
use crate::tilted::Observable;

/// Initial distribution of an ensemble.
#[derive(Debug, Clone)]
pub enum InitialLaw {
    Point(StateVector),
    /// independent Gaussian coordinates around `center`
    GaussianProduct {
        center: StateVector,
        scales: Vec<f64>,
    },
    /// run `burn_in` deterministic-seeded steps from the origin and start
    /// there, as a stand-in for a stationary sample
    StationaryBootstrap { burn_in: usize },
}

impl InitialLaw {
    pub fn origin(n: usize, basis: crate::model::BasisId) -> Self {
        InitialLaw::Point(StateVector::zeros(n, basis))
    }

    pub fn sample(
        &self,
        system: &dyn System,
        law: &KickLaw,
        streams: &Streams,
        traj: u64,
    ) -> Result<StateVector> {
        match self {
            InitialLaw::Point(u) => {
                system.check_state(u)?;
                Ok(u.clone())
            }
            InitialLaw::GaussianProduct { center, scales } => {
                system.check_state(center)?;
                if scales.len() != system.n_dim() {
                    return Err(Error::DimensionMismatch {
                        context: "initial law scales",
                        expected: system.n_dim(),
                        got: scales.len(),
                    });
                }
                let mut rng = streams.init(traj);
                let coeffs = center
                    .coeffs
                    .iter()
                    .zip(scales)
                    .map(|(c, s)| {
                        c + s * rand_distr::Distribution::<f64>::sample(
                            &rand_distr::StandardNormal,
                            &mut rng,
                        )
                    })
                    .collect();
                Ok(StateVector::new(coeffs, system.basis()))
            }
            InitialLaw::StationaryBootstrap { burn_in } => {
                let mut rng = streams.init(traj);
                let mut u = StateVector::zeros(system.n_dim(), system.basis());
                for _ in 0..*burn_in {
                    let eta = law.sample(system, &mut rng)?;
                    u = system.step(&u)?.add(&eta);
                }
                Ok(u)
            }
        }
    }
}

/// Monte Carlo certificate that an initial law lies in the class
/// `{ lambda : int e^{delta Phi} dlambda <= M }`, with a sample-doubling
/// stability rule.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MembershipCertificate {
    pub delta: f64,
    pub m_bound: f64,
    pub estimate: f64,
    pub half_estimate: f64,
    pub certified: bool,
}

pub fn certify_initial_law(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    delta: f64,
    m_bound: f64,
    n_samples: usize,
    seed: u64,
) -> Result<MembershipCertificate> {
    let streams = Streams::new(seed);
    let acc = exec::blocked_fold(
        n_samples,
        512,
        |range| -> Result<(f64, f64)> {
            let mut full = 0.0;
            let mut half = 0.0;
            for i in range {
                let u = init.sample(system, law, &streams, i as u64)?;
                let w = (delta * system.phi(&u)).exp();
                full += w;
                if i < n_samples / 2 {
                    half += w;
                }
            }
            Ok((full, half))
        },
        |a, b| match (a, b) {
            (Ok(x), Ok(y)) => Ok((x.0 + y.0, x.1 + y.1)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
        Ok((0.0, 0.0)),
    )?;
    let estimate = acc.0 / n_samples as f64;
    let half_estimate = acc.1 / (n_samples / 2) as f64;
    let stable = estimate <= 1.1 * half_estimate + 1e-12;
    Ok(MembershipCertificate {
        delta,
        m_bound,
        estimate,
        half_estimate,
        certified: stable && estimate <= m_bound,
    })
}

/// Dense ensemble of `m` trajectories over `0..=k` steps.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub states: Vec<Vec<StateVector>>,
    pub seed: u64,
    pub spec_id: &'static str,
}

/// Streaming fold over the ensemble: trajectories are mapped in blocks
/// (possibly in parallel) and block results are combined in index order, so
/// the outcome is independent of the worker count. The visitor sees every
/// state of its trajectory in step order, including step 0.
pub fn fold_trajectories<A, MB, V, C>(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    m: usize,
    k: usize,
    seed: u64,
    make_acc: MB,
    visit: V,
    combine: C,
) -> Result<A>
where
    A: Send,
    MB: Fn() -> A + Sync,
    V: Fn(&mut A, usize, usize, &StateVector) -> Result<()> + Sync,
    C: FnMut(A, A) -> A,
{
    let streams = Streams::new(seed);
    let block = ((m / 64).max(1)).min(4096);
    let mut combine = combine;
    let folded = exec::blocked_fold(
        m,
        block,
        |range| -> Result<A> {
            let mut acc = make_acc();
            for traj in range {
                let mut u = init.sample(system, law, &streams, traj as u64)?;
                visit(&mut acc, traj, 0, &u)?;
                for step in 1..=k {
                    let eta = law.sample(system, &mut streams.kick(traj as u64, step as u64))?;
                    u = system.step(&u).map_err(|e| {
                        Error::instability(
                            "simulate",
                            format!("trajectory {traj} step {step}: {e}"),
                        )
                    })?;
                    u = u.add(&eta);
                    visit(&mut acc, traj, step, &u)?;
                }
            }
            Ok(acc)
        },
        |a, b| match (a, b) {
            (Ok(x), Ok(y)) => Ok(combine(x, y)),
            (Err(e), _) | (_, Err(e)) => Err(e),
        },
        Ok(make_acc()),
    );
    folded
}

/// Materialises the full ensemble. Memory scales as `m (k+1) n_dim`; prefer
/// [`fold_trajectories`] for large runs.
pub fn simulate(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    m: usize,
    k: usize,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    assert!(m >= 1 && k >= 1);
    let states = fold_trajectories(
        system,
        law,
        init,
        m,
        k,
        seed,
        Vec::new,
        |acc: &mut Vec<Vec<StateVector>>, _traj, step, u| {
            if step == 0 {
                acc.push(Vec::with_capacity(k + 1));
            }
            acc.last_mut().unwrap().push(u.clone());
            Ok(())
        },
        |mut a, b| {
            a.extend(b);
            a
        },
    )?;
    Ok(TrajectoryEnsemble {
        states,
        seed,
        spec_id: system.name(),
    })
}

/// Windows of length `ell` over a trajectory, padded with zero states before
/// time 0 (the windowed process starts from `[0, ..., 0, u_0]`).
pub fn ell_windows(traj: &[StateVector], ell: usize, k: usize) -> Vec<Vec<StateVector>> {
    assert!(ell >= 1);
    let n = traj[0].dim();
    let basis = traj[0].basis;
    (0..=k)
        .map(|step| {
            (0..ell)
                .map(|j| {
                    let idx = step as i64 - (ell - 1 - j) as i64;
                    if idx < 0 {
                        StateVector::zeros(n, basis)
                    } else {
                        traj[idx as usize].clone()
                    }
                })
                .collect()
        })
        .collect()
}

/// Occupation measure `(1/k) sum_{n=0}^{k-1} delta_{window_n}`, optionally
/// pushed forward through an observable. Weights are uniform `count/k` on
/// the stored support, so they sum to one exactly.
#[derive(Debug, Clone)]
pub struct OccupationMeasure {
    pub ell: usize,
    pub support: OccupationSupport,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub enum OccupationSupport {
    Windows(Vec<Vec<StateVector>>),
    Values(Vec<f64>),
}

impl OccupationMeasure {
    pub fn weight(&self) -> f64 {
        1.0 / self.count as f64
    }

    pub fn mean_of(&self, f: impl Fn(&[StateVector]) -> f64) -> f64 {
        match &self.support {
            OccupationSupport::Windows(ws) => {
                ws.iter().map(|w| f(w)).sum::<f64>() / self.count as f64
            }
            OccupationSupport::Values(vs) => vs.iter().sum::<f64>() / self.count as f64,
        }
    }

    pub fn value_mean(&self) -> f64 {
        match &self.support {
            OccupationSupport::Values(vs) => vs.iter().sum::<f64>() / self.count as f64,
            OccupationSupport::Windows(_) => panic!("value_mean on window support"),
        }
    }
}

pub fn occupation_measure(
    traj: &[StateVector],
    ell: usize,
    k: usize,
    observable: Option<&Observable>,
) -> Result<OccupationMeasure> {
    assert!(k >= 1 && k < traj.len() + 1);
    let windows = ell_windows(traj, ell, k - 1);
    let support = match observable {
        Some(f) => OccupationSupport::Values(windows.iter().map(|w| f.eval_window(w)).collect()),
        None => OccupationSupport::Windows(windows),
    };
    Ok(OccupationMeasure {
        ell,
        support,
        count: k,
    })
}

/// Mixing-rate report: dual-Lipschitz distances between the two ensembles'
/// time-`k` marginals, a bootstrap noise floor, and the fitted exponential
/// rate over the pre-floor range.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MixingReport {
    pub curve: Vec<MixingPoint>,
    pub gamma_hat: f64,
    pub fit_lo: usize,
    pub fit_hi: usize,
    pub inconclusive: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MixingPoint {
    pub k: usize,
    pub distance: f64,
    pub stderr: f64,
}

pub struct MixingOptions {
    pub m: usize,
    pub k_max: usize,
    pub seed: u64,
    pub bootstrap: usize,
    /// golden-section tolerance for the exact 1D distances
    pub tol: f64,
    /// observable projecting states to the line; `None` uses the raw
    /// coordinate in dimension 1 and the feature dictionary otherwise
    pub observable: Option<Observable>,
}

impl Default for MixingOptions {
    fn default() -> Self {
        MixingOptions {
            m: 10_000,
            k_max: 20,
            seed: 1,
            bootstrap: 12,
            tol: 1e-10,
            observable: None,
        }
    }
}

pub fn mixing_rate(
    system: &dyn System,
    law: &KickLaw,
    init_a: &InitialLaw,
    init_b: &InitialLaw,
    opts: &MixingOptions,
) -> Result<MixingReport> {
    let one_d = system.n_dim() == 1 || opts.observable.is_some();
    // collect per-step 1D values or full states for both ensembles
    let collect_values = |init: &InitialLaw, seed: u64| -> Result<Vec<Vec<f64>>> {
        fold_trajectories(
            system,
            law,
            init,
            opts.m,
            opts.k_max,
            seed,
            || vec![Vec::new(); opts.k_max + 1],
            |acc, _traj, step, u| {
                let v = match &opts.observable {
                    Some(f) => f.eval_state(u),
                    None => u.coeffs[0],
                };
                acc[step].push(v);
                Ok(())
            },
            |mut a, b| {
                for (ak, bk) in a.iter_mut().zip(b) {
                    ak.extend(bk);
                }
                a
            },
        )
    };
    let collect_states = |init: &InitialLaw, seed: u64| -> Result<Vec<Vec<Vec<f64>>>> {
        fold_trajectories(
            system,
            law,
            init,
            opts.m,
            opts.k_max,
            seed,
            || vec![Vec::new(); opts.k_max + 1],
            |acc, _traj, step, u| {
                acc[step].push(u.coeffs.clone());
                Ok(())
            },
            |mut a, b| {
                for (ak, bk) in a.iter_mut().zip(b) {
                    ak.extend(bk);
                }
                a
            },
        )
    };

    let mut curve = Vec::with_capacity(opts.k_max + 1);
    if one_d {
        let va = collect_values(init_a, opts.seed)?;
        let vb = collect_values(init_b, opts.seed ^ 0x5bd1_e995)?;
        let points: Vec<MixingPoint> = exec::ordered_map(opts.k_max + 1, |k| {
            let d = dual_lipschitz_1d_tol(
                &Atoms1d::from_samples(&va[k]),
                &Atoms1d::from_samples(&vb[k]),
                opts.tol,
            )
            .unwrap_or(f64::NAN);
            let se = bootstrap_stderr_1d(&va[k], &vb[k], opts.bootstrap, opts.seed + k as u64);
            MixingPoint {
                k,
                distance: d,
                stderr: se,
            }
        });
        curve.extend(points);
    } else {
        let sa = collect_states(init_a, opts.seed)?;
        let sb = collect_states(init_b, opts.seed ^ 0x5bd1_e995)?;
        let scale = cloud_scale(&sa[opts.k_max]);
        let dict = LipschitzDictionary::new(system.n_dim(), 48, scale, opts.seed);
        let points: Vec<MixingPoint> = exec::ordered_map(opts.k_max + 1, |k| {
            let d = dict.lower_bound(&sa[k], &sb[k]);
            let se = bootstrap_stderr_dict(&dict, &sa[k], &sb[k], opts.bootstrap, opts.seed + k as u64);
            MixingPoint {
                k,
                distance: d,
                stderr: se,
            }
        });
        curve.extend(points);
    }

    // fit log d_k over the range before the noise floor d < 3 se
    let cut = curve
        .iter()
        .position(|p| !(p.distance > 3.0 * p.stderr && p.distance > 0.0))
        .unwrap_or(curve.len());
    let fit_lo = 0;
    let usable = &curve[fit_lo..cut];
    if usable.len() < 3 {
        return Ok(MixingReport {
            curve,
            gamma_hat: f64::NAN,
            fit_lo,
            fit_hi: cut,
            inconclusive: true,
        });
    }
    let xs: Vec<f64> = usable.iter().map(|p| p.k as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.distance.ln()).collect();
    let (slope, _icept, _r2) = linear_fit(&xs, &ys);
    Ok(MixingReport {
        curve,
        gamma_hat: -slope,
        fit_lo,
        fit_hi: cut,
        inconclusive: false,
    })
}

fn cloud_scale(cloud: &[Vec<f64>]) -> f64 {
    let n = cloud.len().max(1);
    (cloud
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n as f64)
        .sqrt()
        .max(1e-9)
}

fn bootstrap_stderr_1d(a: &[f64], b: &[f64], reps: usize, seed: u64) -> f64 {
    if reps == 0 {
        return 0.0;
    }
    use rand::Rng;
    let streams = Streams::new(seed);
    let cap = 20_000.min(a.len());
    let vals = exec::ordered_map(reps, |r| {
        let mut rng = streams.at(r as u64, 0, Lane::Scratch);
        let ra: Vec<f64> = (0..cap).map(|_| a[rng.gen_range(0..a.len())]).collect();
        let rb: Vec<f64> = (0..cap).map(|_| b[rng.gen_range(0..b.len())]).collect();
        dual_lipschitz_1d_tol(
            &Atoms1d::from_samples(&ra),
            &Atoms1d::from_samples(&rb),
            1e-4,
        )
        .unwrap_or(f64::NAN)
    });
    stddev(&vals)
}

fn bootstrap_stderr_dict(
    dict: &LipschitzDictionary,
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    reps: usize,
    seed: u64,
) -> f64 {
    if reps == 0 {
        return 0.0;
    }
    use rand::Rng;
    let streams = Streams::new(seed);
    let vals = exec::ordered_map(reps, |r| {
        let mut rng = streams.at(r as u64, 0, Lane::Scratch);
        let ra: Vec<Vec<f64>> = (0..a.len()).map(|_| a[rng.gen_range(0..a.len())].clone()).collect();
        let rb: Vec<Vec<f64>> = (0..b.len()).map(|_| b[rng.gen_range(0..b.len())].clone()).collect();
        dict.lower_bound(&ra, &rb)
    });
    stddev(&vals)
}

fn stddev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
}

/// Least squares `y = a x + b`; returns `(a, b, r2)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - a * x - b) * (y - a * x - b))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}

/// Per-step comparison of `E Phi(u_k)` against the Lyapunov iteration bound
/// `q^k <Phi, lambda> + C (1 - q)^{-1} E Phi(eta)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct LyapunovReport {
    pub rows: Vec<LyapunovRow>,
    /// all margins `rhs - lhs >= -3 stderr`
    pub holds: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct LyapunovRow {
    pub k: usize,
    pub lhs: f64,
    pub stderr: f64,
    pub rhs: f64,
}

pub fn lyapunov_check(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    k_max: usize,
    m: usize,
    seed: u64,
) -> Result<LyapunovReport> {
    let c = system.constants();
    // E Phi(eta) and <Phi, lambda> by Monte Carlo side estimates
    let streams = Streams::new(seed ^ 0x00c0_ffee);
    let side = 50_000;
    let mut phi_eta = 0.0;
    for i in 0..side {
        let mut rng = streams.at(i, 0, Lane::Scratch);
        phi_eta += system.phi(&law.sample(system, &mut rng)?);
    }
    let phi_eta = phi_eta / side as f64;
    let mut phi_init = 0.0;
    for i in 0..1024u64 {
        let u = init.sample(system, law, &Streams::new(seed ^ 0xabcd), i)?;
        phi_init += system.phi(&u);
    }
    let phi_init = phi_init / 1024.0;

    let acc = fold_trajectories(
        system,
        law,
        init,
        m,
        k_max,
        seed,
        || vec![(0.0f64, 0.0f64); k_max + 1],
        |acc, _t, step, u| {
            let p = system.phi(u);
            acc[step].0 += p;
            acc[step].1 += p * p;
            Ok(())
        },
        |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.0 += y.0;
                x.1 += y.1;
            }
            a
        },
    )?;
    let mut rows = Vec::with_capacity(k_max + 1);
    let mut holds = true;
    for (k, (s, s2)) in acc.into_iter().enumerate() {
        let mean = s / m as f64;
        let var = (s2 / m as f64 - mean * mean).max(0.0);
        let stderr = (var / m as f64).sqrt();
        let rhs = c.q.powi(k as i32) * phi_init + c.c_phi / (1.0 - c.q) * phi_eta;
        if rhs - mean < -3.0 * stderr {
            holds = false;
        }
        rows.push(LyapunovRow {
            k,
            lhs: mean,
            stderr,
            rhs,
        });
    }
    Ok(LyapunovReport { rows, holds })
}

/// Hitting-time diagnostics for the `U`-ball `B_U(R)` window event, plus a
/// fitted stabilisability exponent.
#[derive(Debug, Clone, serde::Serialize)]
pub struct HittingReport {
    pub exp_moment: f64,
    pub capped_fraction: f64,
    pub flagged: bool,
    /// slope of `log E exp(delta sum_j p(u_j))` in `k`
    pub stabilisability_rate: f64,
    pub stabilisability_delta: f64,
}

pub struct HittingOptions {
    pub radius: f64,
    pub gamma: f64,
    pub ell: usize,
    pub m: usize,
    pub horizon: usize,
    pub delta: f64,
    pub seed: u64,
}

pub fn hitting_time_moments(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    opts: &HittingOptions,
) -> Result<HittingReport> {
    #[derive(Clone)]
    struct Acc {
        exp_sum: f64,
        capped: usize,
        // per-step sums of exp(delta sum_j p(u_j)) for the stabilisability fit
        p_curve: Vec<f64>,
        // per-trajectory scratch, reset at step 0
        streak: usize,
        hit: bool,
        p_sum: f64,
    }
    let k_fit = opts.horizon.min(30);
    let acc = fold_trajectories(
        system,
        law,
        init,
        opts.m,
        opts.horizon,
        opts.seed,
        || Acc {
            exp_sum: 0.0,
            capped: 0,
            p_curve: vec![0.0; k_fit + 1],
            streak: 0,
            hit: false,
            p_sum: 0.0,
        },
        |acc: &mut Acc, _traj, step, u| {
            if step == 0 {
                // the window at time 0 is padded with zero states, which lie
                // in every ball
                acc.streak = opts.ell - 1;
                acc.hit = false;
                acc.p_sum = 0.0;
            }
            let un = u_norm(system, u)?;
            if un <= opts.radius {
                acc.streak += 1;
            } else {
                acc.streak = 0;
            }
            if !acc.hit && acc.streak >= opts.ell {
                acc.hit = true;
                acc.exp_sum += (opts.gamma * step as f64).exp();
            }
            if step >= 1 && step <= k_fit {
                acc.p_sum += system.frak_p(u);
                acc.p_curve[step] += (opts.delta * acc.p_sum).exp();
            }
            if step == opts.horizon && !acc.hit {
                acc.capped += 1;
                acc.exp_sum += (opts.gamma * opts.horizon as f64).exp();
            }
            Ok(())
        },
        |mut a, b| {
            a.exp_sum += b.exp_sum;
            a.capped += b.capped;
            for (x, y) in a.p_curve.iter_mut().zip(b.p_curve) {
                *x += y;
            }
            a
        },
    )?;
    let capped_fraction = acc.capped as f64 / opts.m as f64;
    let xs: Vec<f64> = (1..=k_fit).map(|k| k as f64).collect();
    let ys: Vec<f64> = (1..=k_fit)
        .map(|k| (acc.p_curve[k] / opts.m as f64).ln())
        .collect();
    let (rate, _, _) = linear_fit(&xs, &ys);
    Ok(HittingReport {
        exp_moment: acc.exp_sum / opts.m as f64,
        capped_fraction,
        flagged: capped_fraction > 0.01,
        stabilisability_rate: rate,
        stabilisability_delta: opts.delta,
    })
}

/// Exponential-tightness functional `Psi(u) = gamma log(1 + |u|_U)`:
/// estimates `E exp(sum_{n=1}^k Psi(u_n))` and fits the per-`k` log curve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TightnessReport {
    pub log_curve: Vec<(usize, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub diverging: bool,
}

pub fn tightness_functional(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    gamma_exp: f64,
    k_max: usize,
    m: usize,
    seed: u64,
) -> Result<TightnessReport> {
    let acc = fold_trajectories(
        system,
        law,
        init,
        m,
        k_max,
        seed,
        || {
            (
                vec![0.0f64; k_max + 1],
                vec![0.0f64; k_max + 1],
                vec![0.0f64; k_max + 1],
                0.0f64, // per-trajectory running sum of Psi
            )
        },
        |acc, traj, step, u| {
            if step == 0 {
                acc.3 = 0.0;
            } else {
                acc.3 += gamma_exp * (1.0 + u_norm(system, u)?).ln();
            }
            let w = acc.3.exp();
            acc.0[step] += w;
            acc.1[step] += w * w;
            if traj % 2 == 0 {
                acc.2[step] += w;
            }
            Ok(())
        },
        |mut a, b| {
            for i in 0..a.0.len() {
                a.0[i] += b.0[i];
                a.1[i] += b.1[i];
                a.2[i] += b.2[i];
            }
            a
        },
    )?;
    let log_curve: Vec<(usize, f64)> = (0..=k_max)
        .map(|k| (k, (acc.0[k] / m as f64).ln()))
        .collect();
    // divergence heuristic: the half-sample estimate at the horizon differs
    // from the full-sample one by more than 50%
    let full_end = acc.0[k_max] / m as f64;
    let half_end = acc.2[k_max] / (m as f64 / 2.0);
    let diverging = (full_end - half_end).abs() > 0.5 * full_end.min(half_end);
    let xs: Vec<f64> = log_curve.iter().skip(1).map(|(k, _)| *k as f64).collect();
    let ys: Vec<f64> = log_curve.iter().skip(1).map(|(_, v)| *v).collect();
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    Ok(TightnessReport {
        log_curve,
        slope,
        intercept,
        r2,
        diverging,
    })
}
