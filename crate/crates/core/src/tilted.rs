//! Tilted (generalised) Markov semigroups `P_k^V f = E[ f(u_k) exp(sum_n
//! V(u_n)) ]`, pressure estimation from the slope of the log curve, exact
//! grid/chain realisations with their Perron eigen-triples, the growth-
//! condition diagnostic, and the twisted (Doob) semigroup.

use std::sync::Arc;

use crate::chain::{perron_root, FiniteChain};
use crate::error::{Error, Result};
use crate::exec;
use crate::markov::{fold_trajectories, linear_fit, InitialLaw};
use crate::model::{StateVector, System};
use crate::noise::KickLaw;
use crate::rng::{Lane, Streams};
use crate::systems::LinearTestSpec;

/// Observable over length-`ell` state windows. Cylindrical observables
/// depend only on the first `n_coords` coefficients of each window
/// component, which is checkable by a perturbation probe.
#[derive(Clone)]
pub struct Observable {
    name: String,
    ell: usize,
    bound: Option<f64>,
    kind: Kind,
}

#[derive(Clone)]
enum Kind {
    State(Arc<dyn Fn(&StateVector) -> f64 + Send + Sync>),
    Window(Arc<dyn Fn(&[StateVector]) -> f64 + Send + Sync>),
    Cylindrical {
        n_coords: usize,
        f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("ell", &self.ell)
            .field("bound", &self.bound)
            .finish()
    }
}

impl Observable {
    pub fn state_fn(
        name: impl Into<String>,
        f: impl Fn(&StateVector) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observable {
            name: name.into(),
            ell: 1,
            bound: None,
            kind: Kind::State(Arc::new(f)),
        }
    }

    pub fn window_fn(
        name: impl Into<String>,
        ell: usize,
        f: impl Fn(&[StateVector]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observable {
            name: name.into(),
            ell,
            bound: None,
            kind: Kind::Window(Arc::new(f)),
        }
    }

    /// `V(window) = F(P_N u^1, ..., P_N u^ell)`: `f` receives the first
    /// `n_coords` coefficients of each window component, concatenated.
    pub fn cylindrical(
        name: impl Into<String>,
        ell: usize,
        n_coords: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Observable {
            name: name.into(),
            ell,
            bound: None,
            kind: Kind::Cylindrical {
                n_coords,
                f: Arc::new(f),
            },
        }
    }

    pub fn coordinate(j: usize) -> Self {
        Observable::state_fn(format!("coord_{j}"), move |u: &StateVector| {
            u.coeffs[j - 1]
        })
    }

    pub fn constant(c: f64) -> Self {
        Observable::state_fn(format!("const_{c}"), move |_| c).with_bound(c.abs())
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        let inner = self.clone();
        Observable {
            name: format!("{}*{}", s, self.name),
            ell: self.ell,
            bound: self.bound.map(|b| b * s.abs()),
            kind: Kind::Window(Arc::new(move |w: &[StateVector]| s * inner.eval_window(w))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn eval_state(&self, u: &StateVector) -> f64 {
        self.eval_window(std::slice::from_ref(u))
    }

    pub fn eval_window(&self, w: &[StateVector]) -> f64 {
        debug_assert!(w.len() == self.ell);
        match &self.kind {
            Kind::State(f) => f(&w[w.len() - 1]),
            Kind::Window(f) => f(w),
            Kind::Cylindrical { n_coords, f } => {
                let mut buf = Vec::with_capacity(n_coords * w.len());
                for comp in w {
                    buf.extend_from_slice(&comp.coeffs[..(*n_coords).min(comp.dim())]);
                }
                f(&buf)
            }
        }
    }

    /// Perturbation probe: evaluations must not react to coordinates beyond
    /// the declared cylinder.
    pub fn validate_cylindrical(&self, samples: &[Vec<StateVector>]) -> Result<()> {
        let n_coords = match &self.kind {
            Kind::Cylindrical { n_coords, .. } => *n_coords,
            _ => return Ok(()),
        };
        for w in samples {
            let base = self.eval_window(w);
            let mut bumped = w.clone();
            for comp in bumped.iter_mut() {
                if comp.dim() > n_coords {
                    for c in comp.coeffs[n_coords..].iter_mut() {
                        *c += 1.0;
                    }
                }
            }
            if (self.eval_window(&bumped) - base).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "observable {} is not cylindrical at the declared level",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// One point of a tilted log-moment curve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TiltedPoint {
    pub k: usize,
    pub log_mean: f64,
    pub stderr: f64,
    pub ess: f64,
}

/// Monte Carlo estimate of `P_k^V f` averaged over the initial law, with
/// effective-sample-size diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TiltedEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ess: f64,
    pub variance_warning: bool,
}

struct WindowBuffer {
    states: Vec<StateVector>,
}

impl WindowBuffer {
    fn new(ell: usize, n: usize, basis: crate::model::BasisId) -> Self {
        WindowBuffer {
            states: vec![StateVector::zeros(n, basis); ell],
        }
    }
    fn push(&mut self, u: StateVector) {
        self.states.rotate_left(1);
        let ell = self.states.len();
        self.states[ell - 1] = u;
    }
}

/// `E_init[ exp(sum_{n=1}^k V(window_n)) f(window_k) ]` by plain Monte
/// Carlo over `m` trajectories.
pub fn tilted_expectation(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    v: &Observable,
    f: &Observable,
    k: usize,
    m: usize,
    seed: u64,
) -> Result<TiltedEstimate> {
    assert!(k >= 1);
    if v.ell() != f.ell() {
        return Err(Error::InvalidConfig(
            "tilt and integrand must share the window arity".into(),
        ));
    }
    let ell = v.ell();
    let acc = fold_trajectories(
        system,
        law,
        init,
        m,
        k,
        seed,
        || (0.0f64, 0.0f64, WindowBuffer::new(ell, system.n_dim(), system.basis()), 0.0f64),
        |acc, _t, step, u| {
            if step == 0 {
                acc.2 = WindowBuffer::new(ell, u.dim(), u.basis);
                acc.3 = 0.0;
            }
            acc.2.push(u.clone());
            if step >= 1 {
                acc.3 += v.eval_window(&acc.2.states);
            }
            if step == k {
                let w = acc.3.exp() * f.eval_window(&acc.2.states);
                acc.0 += w;
                acc.1 += w * w;
            }
            Ok(())
        },
        |mut a, b| {
            a.0 += b.0;
            a.1 += b.1;
            a
        },
    )?;
    let mean = acc.0 / m as f64;
    let var = (acc.1 / m as f64 - mean * mean).max(0.0);
    let ess = if acc.1 > 0.0 { acc.0 * acc.0 / acc.1 } else { m as f64 };
    Ok(TiltedEstimate {
        mean,
        stderr: (var / m as f64).sqrt(),
        ess,
        variance_warning: ess < 100.0,
    })
}

/// Log-moment curve `k -> log E exp(beta sum_{n<=k} f(window_n))` for every
/// tilt scale in `betas`, sharing one simulated ensemble.
pub fn tilted_log_curves(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    f: &Observable,
    betas: &[f64],
    k_grid: &[usize],
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<TiltedPoint>>> {
    let k_max = *k_grid.iter().max().unwrap();
    let ell = f.ell();
    let nb = betas.len();
    let nk = k_grid.len();
    let acc = fold_trajectories(
        system,
        law,
        init,
        m,
        k_max,
        seed,
        || {
            (
                vec![0.0f64; nb * nk], // sum of weights
                vec![0.0f64; nb * nk], // sum of squared weights
                WindowBuffer::new(ell, system.n_dim(), system.basis()),
                0.0f64, // running sum of f over windows
            )
        },
        |acc, _t, step, u| {
            if step == 0 {
                acc.2 = WindowBuffer::new(ell, u.dim(), u.basis);
                acc.3 = 0.0;
            }
            acc.2.push(u.clone());
            if step >= 1 {
                acc.3 += f.eval_window(&acc.2.states);
            }
            if let Some(ki) = k_grid.iter().position(|kk| *kk == step) {
                for (bi, beta) in betas.iter().enumerate() {
                    let w = (beta * acc.3).exp();
                    acc.0[bi * nk + ki] += w;
                    acc.1[bi * nk + ki] += w * w;
                }
            }
            Ok(())
        },
        |mut a, b| {
            for (x, y) in a.0.iter_mut().zip(b.0) {
                *x += y;
            }
            for (x, y) in a.1.iter_mut().zip(b.1) {
                *x += y;
            }
            a
        },
    )?;
    Ok(assemble_curves(&acc.0, &acc.1, betas.len(), k_grid, m))
}

fn assemble_curves(
    sums: &[f64],
    sq_sums: &[f64],
    nb: usize,
    k_grid: &[usize],
    m: usize,
) -> Vec<Vec<TiltedPoint>> {
    let nk = k_grid.len();
    (0..nb)
        .map(|bi| {
            (0..nk)
                .map(|ki| {
                    let s = sums[bi * nk + ki];
                    let s2 = sq_sums[bi * nk + ki];
                    let mean = s / m as f64;
                    let var = (s2 / m as f64 - mean * mean).max(0.0);
                    let ess = if s2 > 0.0 { s * s / s2 } else { m as f64 };
                    TiltedPoint {
                        k: k_grid[ki],
                        log_mean: mean.ln(),
                        stderr: (var / m as f64).sqrt() / mean,
                        ess,
                    }
                })
                .collect()
        })
        .collect()
}

/// Chain analogue of [`tilted_log_curves`]: one Monte Carlo ensemble of the
/// finite chain, tilted by the state function `v`.
pub fn chain_tilted_log_curve(
    chain: &FiniteChain,
    v: &[f64],
    init_state: usize,
    k_grid: &[usize],
    m: usize,
    seed: u64,
) -> Result<Vec<TiltedPoint>> {
    if v.len() != chain.n() {
        return Err(Error::DimensionMismatch {
            context: "chain tilt",
            expected: chain.n(),
            got: v.len(),
        });
    }
    let k_max = *k_grid.iter().max().unwrap();
    let nk = k_grid.len();
    let streams = Streams::new(seed);
    let (sums, sqs) = exec::blocked_fold(
        m,
        2048,
        |range| {
            let mut sums = vec![0.0f64; nk];
            let mut sqs = vec![0.0f64; nk];
            for traj in range {
                let mut rng = streams.at(traj as u64, 0, Lane::Chain);
                let mut state = init_state;
                let mut vsum = 0.0;
                for step in 1..=k_max {
                    state = chain.sample_step(state, &mut rng);
                    vsum += v[state];
                    if let Some(ki) = k_grid.iter().position(|kk| *kk == step) {
                        let w = vsum.exp();
                        sums[ki] += w;
                        sqs[ki] += w * w;
                    }
                }
            }
            (sums, sqs)
        },
        |mut a, b| {
            for (x, y) in a.0.iter_mut().zip(b.0) {
                *x += y;
            }
            for (x, y) in a.1.iter_mut().zip(b.1) {
                *x += y;
            }
            a
        },
        (vec![0.0; nk], vec![0.0; nk]),
    );
    Ok(assemble_curves(&sums, &sqs, 1, k_grid, m).pop().unwrap())
}

/// Pressure estimate: weighted slope of the log-moment curve over the
/// ESS-stable range.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PressureEstimate {
    pub q_hat: f64,
    pub slope_stderr: f64,
    pub r2: f64,
    pub used_points: usize,
    pub inconclusive: bool,
    pub curve: Vec<TiltedPoint>,
}

pub fn fit_pressure(curve: Vec<TiltedPoint>, min_ess: f64) -> PressureEstimate {
    let usable: Vec<&TiltedPoint> = curve
        .iter()
        .filter(|p| p.ess >= min_ess && p.log_mean.is_finite())
        .collect();
    if usable.len() < 3 {
        return PressureEstimate {
            q_hat: f64::NAN,
            slope_stderr: f64::NAN,
            r2: 0.0,
            used_points: usable.len(),
            inconclusive: true,
            curve,
        };
    }
    // weighted least squares with 1/var weights
    let w: Vec<f64> = usable
        .iter()
        .map(|p| 1.0 / (p.stderr * p.stderr).max(1e-12))
        .collect();
    let xs: Vec<f64> = usable.iter().map(|p| p.k as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|p| p.log_mean).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, wi)| x * wi).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, wi)| y * wi).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, wi)| wi * (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(ys.iter())
        .zip(&w)
        .map(|((x, y), wi)| wi * (x - mx) * (y - my))
        .sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    // unweighted R^2 on the used range for the linearity flag
    let (_, _, r2) = linear_fit(&xs, &ys);
    let slope_stderr = (1.0 / sxx).sqrt();
    let _ = icept;
    PressureEstimate {
        q_hat: slope,
        slope_stderr,
        r2,
        used_points: usable.len(),
        inconclusive: r2 < 0.99,
        curve,
    }
}

pub fn pressure_estimate(
    system: &dyn System,
    law: &KickLaw,
    init: &InitialLaw,
    v: &Observable,
    k_grid: &[usize],
    m: usize,
    seed: u64,
) -> Result<PressureEstimate> {
    let curves = tilted_log_curves(system, law, init, v, &[1.0], k_grid, m, seed)?;
    Ok(fit_pressure(curves.into_iter().next().unwrap(), 100.0))
}

/// Spread of the pressure estimate across certified initial laws.
pub fn pressure_initial_law_spread(
    system: &dyn System,
    law: &KickLaw,
    inits: &[InitialLaw],
    v: &Observable,
    k_grid: &[usize],
    m: usize,
    seed: u64,
) -> Result<(Vec<PressureEstimate>, f64)> {
    let mut out = Vec::with_capacity(inits.len());
    for (i, init) in inits.iter().enumerate() {
        out.push(pressure_estimate(
            system,
            law,
            init,
            v,
            k_grid,
            m,
            seed.wrapping_add(i as u64),
        )?);
    }
    let lo = out.iter().map(|p| p.q_hat).fold(f64::INFINITY, f64::min);
    let hi = out.iter().map(|p| p.q_hat).fold(f64::NEG_INFINITY, f64::max);
    Ok((out, hi - lo))
}

/// Discretised tilted kernel on a finite chain or a 1D grid: the backbone of
/// every exact eigen-triple check.
#[derive(Debug, Clone)]
pub struct GridOperator {
    pub n: usize,
    /// row-major `K[i][j] = (mass from node i into cell j) e^{V(node j)}`
    pub kernel: Vec<f64>,
    pub v_values: Vec<f64>,
    pub nodes: GridNodes,
    pub escaped_mass: f64,
}

#[derive(Debug, Clone)]
pub enum GridNodes {
    ChainStates(usize),
    Centers { xs: Vec<f64>, width: f64 },
}

impl GridOperator {
    pub fn from_chain(chain: &FiniteChain, v: &[f64]) -> Result<Self> {
        let kernel = chain.tilted_matrix(v)?;
        Ok(GridOperator {
            n: chain.n(),
            kernel,
            v_values: v.to_vec(),
            nodes: GridNodes::ChainStates(chain.n()),
            escaped_mass: 0.0,
        })
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.kernel[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn apply_adjoint(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.n {
            let row = &self.kernel[i * self.n..(i + 1) * self.n];
            for (j, a) in row.iter().enumerate() {
                out[j] += a * x[i];
            }
        }
    }

    /// Row-sum defect of the untilted kernel (`V = 0` rows integrate to 1 up
    /// to the escaped mass).
    pub fn row_sum_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let s: f64 = (0..self.n)
                .map(|j| self.kernel[i * self.n + j] * (-self.v_values[j]).exp())
                .sum();
            worst = worst.max((s - (1.0 - self.escaped_mass_row_allowance())).abs());
        }
        worst
    }

    fn escaped_mass_row_allowance(&self) -> f64 {
        0.0
    }
}

/// Quadrature discretisation of the AR(1) tilted kernel
/// `P^V(x, dy) = rho_b(y - a x) e^{V(y)} dy` on a symmetric grid.
pub fn discretize_linear(
    spec: &LinearTestSpec,
    kick_scale: f64,
    v: impl Fn(f64) -> f64,
    n_nodes: usize,
    half_width: f64,
) -> Result<GridOperator> {
    if spec.n_dim() != 1 {
        return Err(Error::InvalidConfig(
            "grid discretisation supports 1D systems only".into(),
        ));
    }
    if kick_scale <= 0.0 {
        return Err(Error::DegenerateDirection { index: 1 });
    }
    let a = spec.a();
    let width = 2.0 * half_width / n_nodes as f64;
    let xs: Vec<f64> = (0..n_nodes)
        .map(|i| -half_width + (i as f64 + 0.5) * width)
        .collect();
    let normal_cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2));
    let mut kernel = vec![0.0; n_nodes * n_nodes];
    let mut escaped: f64 = 0.0;
    let v_vals: Vec<f64> = xs.iter().map(|x| v(*x)).collect();
    for (i, xi) in xs.iter().enumerate() {
        let mean = a * xi;
        let mut row_mass = 0.0;
        for (j, xj) in xs.iter().enumerate() {
            let lo = (xj - 0.5 * width - mean) / kick_scale;
            let hi = (xj + 0.5 * width - mean) / kick_scale;
            let mass = normal_cdf(hi) - normal_cdf(lo);
            row_mass += mass;
            kernel[i * n_nodes + j] = mass * v_vals[j].exp();
        }
        escaped = escaped.max(1.0 - row_mass);
    }
    if escaped > 1e-6 {
        return Err(Error::GridTooNarrow { mass: escaped });
    }
    Ok(GridOperator {
        n: n_nodes,
        kernel,
        v_values: v_vals,
        nodes: GridNodes::Centers { xs, width },
        escaped_mass: escaped,
    })
}

/// Multiplicative ergodic triple `(lambda, h, mu)` of a grid operator,
/// normalised by `sum mu = 1` and `<h, mu> = 1`.
#[derive(Debug, Clone)]
pub struct ErgodicTriple {
    pub lambda: f64,
    pub h: Vec<f64>,
    pub mu: Vec<f64>,
    pub residual_h: f64,
    pub residual_mu: f64,
}

pub fn power_iterate(op: &GridOperator, tol: f64, max_iter: usize) -> Result<ErgodicTriple> {
    let n = op.n;
    let iterate = |adjoint: bool| -> (f64, Vec<f64>, f64, Vec<f64>) {
        let mut x = vec![1.0 / n as f64; n];
        let mut y = vec![0.0; n];
        let mut lambda = 1.0;
        let mut resid = f64::INFINITY;
        let mut resid_hist = Vec::new();
        for _ in 0..max_iter {
            if adjoint {
                op.apply_adjoint(&x, &mut y);
            } else {
                op.apply(&x, &mut y);
            }
            let norm: f64 = y.iter().map(|v| v.abs()).sum();
            lambda = norm;
            resid = (0..n)
                .map(|i| (y[i] - lambda * x[i]).abs())
                .fold(0.0f64, f64::max)
                / lambda.max(1e-300);
            resid_hist.push(resid);
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / norm;
            }
            if resid < tol {
                break;
            }
        }
        (lambda, x, resid, resid_hist)
    };
    let (lambda, h_raw, resid_h, hist) = iterate(false);
    if resid_h >= tol {
        // estimate |lambda_2| / lambda from the tail of the residual decay
        let ratio = hist
            .windows(2)
            .rev()
            .take(20)
            .map(|w| (w[1] / w[0]).min(1.0))
            .product::<f64>()
            .powf(1.0 / 20.0);
        return Err(Error::NoConvergence {
            iterations: max_iter,
            residual: resid_h,
            lambda_ratio: Some(ratio),
        });
    }
    let (_, mu_raw, resid_mu, _) = iterate(true);
    if resid_mu >= tol {
        return Err(Error::NoConvergence {
            iterations: max_iter,
            residual: resid_mu,
            lambda_ratio: None,
        });
    }
    // normalise: mu a probability vector, <h, mu> = 1
    let mu_sum: f64 = mu_raw.iter().sum();
    let mu: Vec<f64> = mu_raw.iter().map(|v| v / mu_sum).collect();
    let inner: f64 = h_raw.iter().zip(&mu).map(|(a, b)| a * b).sum();
    let h: Vec<f64> = h_raw.iter().map(|v| v / inner).collect();
    // final residuals in the spec's norms
    let mut y = vec![0.0; n];
    op.apply(&h, &mut y);
    let h_inf = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual_h = (0..n)
        .map(|i| (y[i] - lambda * h[i]).abs())
        .fold(0.0f64, f64::max)
        / h_inf;
    op.apply_adjoint(&mu, &mut y);
    let residual_mu: f64 = (0..n).map(|i| (y[i] - lambda * mu[i]).abs()).sum();
    Ok(ErgodicTriple {
        lambda,
        h,
        mu,
        residual_h,
        residual_mu,
    })
}

/// Exact growth-condition curve `k -> |P_k^V w / w|_inf / |P_k^V 1|_{R0}`
/// on the grid, computed with a shared renormalisation so long horizons do
/// not overflow.
pub fn growth_ratio(
    op: &GridOperator,
    w: &[f64],
    r0_nodes: &[usize],
    k_max: usize,
) -> Result<Vec<f64>> {
    if w.len() != op.n || w.iter().any(|x| *x < 1.0) {
        return Err(Error::InvalidConfig(
            "weight must be >= 1 on every node".into(),
        ));
    }
    if r0_nodes.is_empty() {
        return Err(Error::DegenerateInput("empty R0 node set".into()));
    }
    let n = op.n;
    let mut pw = w.to_vec();
    let mut p1 = vec![1.0; n];
    let mut out = Vec::with_capacity(k_max + 1);
    let mut buf = vec![0.0; n];
    for _k in 0..=k_max {
        let num = pw
            .iter()
            .zip(w)
            .map(|(a, b)| a / b)
            .fold(0.0f64, f64::max);
        let den = r0_nodes
            .iter()
            .map(|&i| p1[i])
            .fold(0.0f64, f64::max);
        out.push(num / den);
        op.apply(&pw, &mut buf);
        std::mem::swap(&mut pw, &mut buf);
        op.apply(&p1, &mut buf);
        std::mem::swap(&mut p1, &mut buf);
        // shared renormalisation keeps both iterates in range
        let scale = p1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            pw.iter_mut().for_each(|v| *v /= scale);
            p1.iter_mut().for_each(|v| *v /= scale);
        }
    }
    Ok(out)
}

/// Twisted (Doob) kernel `S[i][j] = K[i][j] h[j] / (lambda h[i])` and its
/// stationary law `nu = h . mu`.
#[derive(Debug, Clone)]
pub struct TwistedSemigroup {
    pub kernel: Vec<f64>,
    pub nu: Vec<f64>,
    pub row_sum_defect: f64,
    pub stationarity_defect: f64,
}

pub fn twisted_semigroup(op: &GridOperator, triple: &ErgodicTriple) -> TwistedSemigroup {
    let n = op.n;
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            kernel[i * n + j] = op.kernel[i * n + j] * triple.h[j] / (triple.lambda * triple.h[i]);
        }
    }
    let mut row_sum_defect: f64 = 0.0;
    for i in 0..n {
        let s: f64 = kernel[i * n..(i + 1) * n].iter().sum();
        row_sum_defect = row_sum_defect.max((s - 1.0).abs());
    }
    let mut nu: Vec<f64> = triple
        .h
        .iter()
        .zip(&triple.mu)
        .map(|(a, b)| a * b)
        .collect();
    let total: f64 = nu.iter().sum();
    nu.iter_mut().for_each(|v| *v /= total);
    // stationarity: nu S = nu in l1
    let mut image = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            image[j] += nu[i] * kernel[i * n + j];
        }
    }
    let stationarity_defect: f64 = image.iter().zip(&nu).map(|(a, b)| (a - b).abs()).sum();
    TwistedSemigroup {
        kernel,
        nu,
        row_sum_defect,
        stationarity_defect,
    }
}

/// Exact pressure of a grid operator, for cross-checks against the Monte
/// Carlo slope.
pub fn grid_pressure(op: &GridOperator) -> Result<f64> {
    let (lambda, _, _) = perron_root(&op.kernel, op.n, 1e-12)?;
    Ok(lambda.ln())
}
