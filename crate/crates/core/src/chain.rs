//! Exact finite-state backbone: stationary laws, Perron roots of tilted
//! matrices, rate functions, and total-variation/maximal-coupling oracles,
//! all by direct linear algebra and quadrature, independent of any Monte
//! Carlo path.

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_STATES: usize = 64;

/// Row-stochastic transition matrix with an observable-friendly state count
/// cap. Reducible or periodic chains are rejected so the Perron root stays
/// simple.
#[derive(Debug, Clone)]
pub struct FiniteChain {
    n: usize,
    p: Vec<f64>, // row-major
    labels: Vec<String>,
}

impl FiniteChain {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || n > MAX_STATES {
            return Err(Error::InvalidConfig(format!(
                "chain must have 1..={MAX_STATES} states"
            )));
        }
        let mut p = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "chain row",
                    expected: n,
                    got: row.len(),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConfig(format!(
                    "row {i} sums to {sum}, expected 1 within 1e-12"
                )));
            }
            if row.iter().any(|x| *x < 0.0) {
                return Err(Error::InvalidConfig(format!("row {i} has negative entries")));
            }
            p.extend_from_slice(row);
        }
        let chain = FiniteChain {
            n,
            p,
            labels: (0..n).map(|i| format!("s{i}")).collect(),
        };
        if !chain.is_primitive() {
            return Err(Error::InvalidConfig(
                "chain must be irreducible and aperiodic".into(),
            ));
        }
        Ok(chain)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "chain labels",
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn uniform_two_state() -> Self {
        FiniteChain::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    /// All rows equal: states are i.i.d. after the first step.
    pub fn has_iid_rows(&self) -> bool {
        (1..self.n).all(|i| self.row(i) == self.row(0))
    }

    /// Tilted matrix `P diag(e^V)` as a dense operator.
    pub fn tilted_matrix(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "chain tilt",
                expected: self.n,
                got: v.len(),
            });
        }
        let mut k = self.p.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                k[i * self.n + j] *= v[j].exp();
            }
        }
        Ok(k)
    }

    /// Irreducible (all states reachable both ways) and aperiodic.
    fn is_primitive(&self) -> bool {
        let n = self.n;
        if n == 1 {
            return self.prob(0, 0) > 0.0;
        }
        let edge = |i: usize, j: usize| self.prob(i, j) > 0.0;
        // strong connectivity by forward/backward reachability from 0
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    let connected = if forward { edge(i, j) } else { edge(j, i) };
                    if connected && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        if !reach(true) || !reach(false) {
            return false;
        }
        // aperiodicity: gcd of cycle length hints d(u) + 1 - d(v) over edges
        let mut dist = vec![usize::MAX; n];
        dist[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if edge(i, j) && dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        let mut g: u64 = 0;
        for i in 0..n {
            for j in 0..n {
                if edge(i, j) {
                    let diff = (dist[i] as i64 + 1 - dist[j] as i64).unsigned_abs();
                    g = gcd(g, diff);
                }
            }
        }
        g == 1
    }

    /// One Monte Carlo transition from state `i`.
    pub fn sample_step<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.gen_range(0.0..1.0);
        let mut acc = 0.0;
        for j in 0..self.n {
            acc += self.prob(i, j);
            if u < acc {
                return j;
            }
        }
        self.n - 1
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `pi P = pi`, `sum pi = 1` by direct elimination.
pub fn exact_stationary(chain: &FiniteChain) -> Result<Vec<f64>> {
    let n = chain.n();
    // (P^T - I) pi = 0 with the last equation replaced by sum = 1
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for r in 0..n {
        for c in 0..n {
            a[r * n + c] = chain.prob(c, r) - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[(n - 1) * n + c] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = solve_dense(a, b, n)?;
    let mut resid: f64 = 0.0;
    for j in 0..n {
        let pj: f64 = (0..n).map(|i| pi[i] * chain.prob(i, j)).sum();
        resid = resid.max((pj - pi[j]).abs());
    }
    if resid > 1e-12 {
        return Err(Error::NoConvergence {
            iterations: 1,
            residual: resid,
            lambda_ratio: None,
        });
    }
    Ok(pi)
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| {
                a[r1 * n + col]
                    .abs()
                    .partial_cmp(&a[r2 * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::DegenerateInput("singular linear system".into()));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(col * n + c, pivot * n + c);
            }
            b.swap(col, pivot);
        }
        for r in (col + 1)..n {
            let f = a[r * n + col] / a[col * n + col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in (r + 1)..n {
            s -= a[r * n + c] * x[c];
        }
        x[r] = s / a[r * n + r];
    }
    Ok(x)
}

/// Perron root and right/left eigenvectors of a non-negative primitive
/// matrix: power iteration to a rough tolerance, then shifted inverse
/// refinement to `tol`.
pub fn perron_root(k: &[f64], n: usize, tol: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let matvec = |m: &[f64], x: &[f64], out: &mut [f64], transpose: bool| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = 0.0;
            for j in 0..n {
                *o += if transpose { m[j * n + i] } else { m[i * n + j] } * x[j];
            }
        }
    };
    let power = |transpose: bool| -> (f64, Vec<f64>) {
        let mut x = vec![1.0 / n as f64; n];
        let mut y = vec![0.0; n];
        let mut lambda = 1.0;
        for _ in 0..50_000 {
            matvec(k, &x, &mut y, transpose);
            let norm: f64 = y.iter().map(|v| v.abs()).sum();
            lambda = norm;
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = yi / norm;
            }
            let mut resid: f64 = 0.0;
            matvec(k, &x, &mut y, transpose);
            for i in 0..n {
                resid = resid.max((y[i] - lambda * x[i]).abs());
            }
            if resid < 1e-6 * lambda.max(1.0) {
                break;
            }
        }
        (lambda, x)
    };
    let refine = |mut lambda: f64, mut x: Vec<f64>, transpose: bool| -> Result<(f64, Vec<f64>)> {
        for _ in 0..60 {
            let mut y = vec![0.0; n];
            matvec(k, &x, &mut y, transpose);
            // Rayleigh-like quotient in the l1 sense for positive vectors
            let num: f64 = y.iter().sum();
            let den: f64 = x.iter().sum();
            lambda = num / den;
            let mut resid: f64 = 0.0;
            for i in 0..n {
                resid = resid.max((y[i] - lambda * x[i]).abs());
            }
            if resid <= tol * lambda.max(1.0) {
                let norm: f64 = x.iter().map(|v| v.abs()).sum();
                x.iter_mut().for_each(|v| *v /= norm);
                return Ok((lambda, x));
            }
            // shifted inverse iteration step
            let shift = lambda * (1.0 + 1e-10) + 1e-12;
            let mut a = vec![0.0; n * n];
            for r in 0..n {
                for c in 0..n {
                    a[r * n + c] = if transpose { k[c * n + r] } else { k[r * n + c] };
                }
                a[r * n + r] -= shift;
            }
            match solve_dense(a, x.clone(), n) {
                Ok(z) => {
                    let norm: f64 = z.iter().map(|v| v.abs()).sum();
                    if norm.is_finite() && norm > 0.0 {
                        let sign = if z.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
                        x = z.iter().map(|v| sign * v / norm).collect();
                    } else {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        let mut y = vec![0.0; n];
        matvec(k, &x, &mut y, transpose);
        let resid = (0..n)
            .map(|i| (y[i] - lambda * x[i]).abs())
            .fold(0.0f64, f64::max);
        if resid <= tol * lambda.max(1.0) {
            Ok((lambda, x))
        } else {
            Err(Error::NoConvergence {
                iterations: 60,
                residual: resid,
                lambda_ratio: None,
            })
        }
    };
    let (l0, h0) = power(false);
    let (lambda, h) = refine(l0, h0, false)?;
    let (_, mu0) = power(true);
    let (_, mu) = refine(lambda, mu0, true)?;
    Ok((lambda, h, mu))
}

/// `log` of the Perron root of `P diag(e^V)`; realises the pressure of the
/// tilt `V` exactly on finite chains.
pub fn exact_pressure(chain: &FiniteChain, v: &[f64]) -> Result<f64> {
    let k = chain.tilted_matrix(v)?;
    let (lambda, _, _) = perron_root(&k, chain.n(), 1e-13)?;
    Ok(lambda.ln())
}

/// Exact conjugate `I(y) = sup_beta (beta y - Q(beta f))` on a y-grid.
/// Returns `(y, I(y), beta_star)` triples; the bracket is expanded until the
/// equilibrium mean of the tilted chain sandwiches `y`, so the supremum is
/// interior whenever `y` lies in the open range of `f`-means.
pub fn exact_rate(
    chain: &FiniteChain,
    f: &[f64],
    y_grid: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let q = |beta: f64| -> Result<f64> {
        let v: Vec<f64> = f.iter().map(|x| beta * x).collect();
        exact_pressure(chain, &v)
    };
    let mut out = Vec::with_capacity(y_grid.len());
    for &y in y_grid {
        let g = |beta: f64| -> f64 { beta * y - q(beta).unwrap_or(f64::NEG_INFINITY) };
        // expand a bracket around the maximiser of the concave map g
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..60 {
            let glo = g(lo);
            let glo_in = g(lo + 1e-6);
            if glo_in < glo {
                lo *= 2.0;
                continue;
            }
            break;
        }
        for _ in 0..60 {
            let ghi = g(hi);
            let ghi_in = g(hi - 1e-6);
            if ghi_in < ghi {
                hi *= 2.0;
                continue;
            }
            break;
        }
        let (beta_star, val) = golden_max(g, lo, hi, 200);
        out.push((y, val.max(0.0), beta_star));
    }
    Ok(out)
}

/// Golden-section maximisation of a concave function; returns the smallest
/// maximiser on ties within bracket resolution.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let inv_phi = 0.618_033_988_749_894_9;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Total variation `sup_A |P(A) - Q(A)| = 1/2 int |p - q|` of two densities
/// by Simpson quadrature on `[lo, hi]`.
pub fn tv_densities(p: impl Fn(f64) -> f64, q: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let n = 40_000;
    let h = (hi - lo) / n as f64;
    let f = |x: f64| (p(x) - q(x)).abs();
    let mut s = 0.0;
    for i in 0..n {
        let a = lo + i as f64 * h;
        s += (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h)) * h / 6.0;
    }
    0.5 * s
}

/// Total variation of two discrete distributions on the same support.
pub fn tv_discrete(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Generic maximal coupling of two 1D densities by gamma-coupling: with
/// probability `int min(p, q)` both draws come from the normalised overlap,
/// otherwise each marginal draws from its own normalised residual. Serves as
/// the oracle against which the exact Gaussian construction is compared, and
/// as the fallback for non-Gaussian coordinate families.
pub struct GammaCoupling<P, Q> {
    pub p: P,
    pub q: Q,
    pub sup_p: f64,
    pub sup_q: f64,
    pub lo: f64,
    pub hi: f64,
}

impl<P: Fn(f64) -> f64, Q: Fn(f64) -> f64> GammaCoupling<P, Q> {
    pub fn overlap(&self) -> f64 {
        1.0 - tv_densities(&self.p, &self.q, self.lo, self.hi)
    }

    /// One draw `(x, y, met)` whose marginals are `p` and `q` and whose
    /// meeting probability is `int min(p, q)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64, bool) {
        let beta = self.overlap();
        if rng.gen_range(0.0..1.0) < beta {
            // rejection from the min density
            loop {
                let x = rng.gen_range(self.lo..self.hi);
                let u: f64 = rng.gen_range(0.0..self.sup_p.min(self.sup_q));
                if u < (self.p)(x).min((self.q)(x)) {
                    return (x, x, true);
                }
            }
        }
        let draw = |d: &dyn Fn(f64) -> f64, other: &dyn Fn(f64) -> f64, sup: f64, rng: &mut R| loop {
            let x = rng.gen_range(self.lo..self.hi);
            let u: f64 = rng.gen_range(0.0..sup);
            let resid = (d(x) - other(x)).max(0.0);
            if u < resid {
                return x;
            }
        };
        let x = draw(&self.p, &self.q, self.sup_p, rng);
        let y = draw(&self.q, &self.p, self.sup_q, rng);
        (x, y, false)
    }
}


/// Shipped benchmark chains for the oracle-equivalence checks.
pub fn benchmark_chains() -> Vec<(FiniteChain, Vec<f64>, &'static str)> {
    vec![
        (
            FiniteChain::uniform_two_state(),
            vec![0.0, 3.0f64.ln()],
            "uniform-2state-log3",
        ),
        (
            FiniteChain::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap(),
            vec![0.0, 3.0f64.ln()],
            "lazy-2state-log3",
        ),
        (
            FiniteChain::new(vec![
                vec![0.2, 0.5, 0.3],
                vec![0.4, 0.2, 0.4],
                vec![0.25, 0.25, 0.5],
            ])
            .unwrap(),
            vec![0.5, -0.25, 0.0],
            "3state-mixed-tilt",
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Lane, Streams};

    #[test]
    fn uniform_two_state_stationary() {
        let pi = exact_stationary(&FiniteChain::uniform_two_state()).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lazy_two_state_stationary_closed_form() {
        let c = FiniteChain::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let pi = exact_stationary(&c).unwrap();
        assert!((pi[0] - 5.0 / 6.0).abs() < 1e-13);
        assert!((pi[1] - 1.0 / 6.0).abs() < 1e-13);
    }

    #[test]
    fn near_cyclic_chain_is_uniform_on_its_cycle() {
        // strict permutations are periodic and rejected; a tiny lazy term
        // keeps the chain primitive with an almost-uniform cycle law
        let eps = 1e-3;
        let c = FiniteChain::new(vec![
            vec![eps, 1.0 - eps, 0.0],
            vec![0.0, eps, 1.0 - eps],
            vec![1.0 - eps, 0.0, eps],
        ])
        .unwrap();
        let pi = exact_stationary(&c).unwrap();
        for p in pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reducible_and_periodic_chains_are_rejected() {
        assert!(FiniteChain::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(FiniteChain::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn pressure_of_constant_tilt_is_the_constant() {
        for (chain, _, _) in benchmark_chains() {
            for c in [-1.0, 0.0, 0.5] {
                let v = vec![c; chain.n()];
                assert!((exact_pressure(&chain, &v).unwrap() - c).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn uniform_two_state_tilted_pressure_is_log_two() {
        let chain = FiniteChain::uniform_two_state();
        let v = vec![0.0, 3.0f64.ln()];
        let q = exact_pressure(&chain, &v).unwrap();
        assert!((q - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn general_bernoulli_tilt_closed_form() {
        let chain = FiniteChain::uniform_two_state();
        for beta in [-2.0, -0.3, 0.7, 2.5] {
            let q = exact_pressure(&chain, &[0.0, beta]).unwrap();
            let exact = ((1.0 + beta.exp()) / 2.0).ln();
            assert!((q - exact).abs() < 1e-12, "beta={beta}");
        }
    }

    #[test]
    fn pressure_is_one_lipschitz_and_shifts_by_constants() {
        let (chain, v, _) = &benchmark_chains()[2];
        let q0 = exact_pressure(chain, v).unwrap();
        for c in [-1.0, 0.5] {
            let vc: Vec<f64> = v.iter().map(|x| x + c).collect();
            let qc = exact_pressure(chain, &vc).unwrap();
            assert!((qc - q0 - c).abs() < 1e-11);
        }
        let w = vec![0.1, -0.2, 0.05];
        let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let qw = exact_pressure(chain, &vw).unwrap();
        let sup_diff = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((qw - q0).abs() <= sup_diff + 1e-11);
    }

    #[test]
    fn pressure_is_convex_in_the_tilt_scale() {
        let (chain, _, _) = &benchmark_chains()[1];
        let f = vec![0.0, 1.0];
        let q = |b: f64| exact_pressure(chain, &[0.0, b]).unwrap();
        let _ = f;
        for i in -10..10 {
            let b = i as f64 * 0.3;
            let mid = q(b);
            let avg = 0.5 * (q(b - 0.3) + q(b + 0.3));
            assert!(mid <= avg + 1e-10);
        }
    }

    #[test]
    fn rate_vanishes_at_stationary_mean_and_matches_bernoulli() {
        let chain = FiniteChain::uniform_two_state();
        let f = vec![0.0, 1.0];
        let rows = exact_rate(&chain, &f, &[0.5, 0.75]).unwrap();
        assert!(rows[0].1.abs() < 1e-9, "I(mean) = {}", rows[0].1);
        let exact = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((rows[1].1 - exact).abs() < 1e-9, "I(0.75) = {}", rows[1].1);
    }

    #[test]
    fn rate_of_symmetric_chain_is_symmetric() {
        let chain = FiniteChain::uniform_two_state();
        let f = vec![-1.0, 1.0];
        let rows = exact_rate(&chain, &f, &[-0.5, 0.5]).unwrap();
        assert!((rows[0].1 - rows[1].1).abs() < 1e-9);
    }

    #[test]
    fn stationary_matches_untilted_perron_left_vector() {
        for (chain, _, _) in benchmark_chains() {
            let k = chain.tilted_matrix(&vec![0.0; chain.n()]).unwrap();
            let (lambda, _, mu) = perron_root(&k, chain.n(), 1e-13).unwrap();
            assert!((lambda - 1.0).abs() < 1e-10);
            let pi = exact_stationary(&chain).unwrap();
            for i in 0..chain.n() {
                assert!((mu[i] - pi[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tv_oracles() {
        let phi = |m: f64| move |x: f64| (-0.5 * (x - m) * (x - m)).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!(tv_densities(phi(0.0), phi(0.0), -12.0, 12.0) < 1e-12);
        let tv = tv_densities(phi(0.0), phi(1.0), -12.0, 13.0);
        // 2 Phi(1/2) - 1
        let exact = statrs::function::erf::erf(0.5 / std::f64::consts::SQRT_2);
        assert!((tv - exact).abs() < 1e-9, "tv = {tv}");
        assert!((tv - 0.38292).abs() < 1e-4);
        // disjoint supports
        let p = |x: f64| if (0.0..1.0).contains(&x) { 1.0 } else { 0.0 };
        let q = |x: f64| if (2.0..3.0).contains(&x) { 1.0 } else { 0.0 };
        assert!((tv_densities(p, q, -1.0, 4.0) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gamma_coupling_meets_at_one_minus_tv() {
        let sq = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let cpl = GammaCoupling {
            p: |x: f64| (-0.5 * x * x).exp() * sq,
            q: |x: f64| (-0.5 * (x - 1.0) * (x - 1.0)).exp() * sq,
            sup_p: sq,
            sup_q: sq,
            lo: -10.0,
            hi: 11.0,
        };
        let mut rng = Streams::new(3).at(0, 0, Lane::Scratch);
        let n = 40_000;
        let mut met = 0usize;
        let mut mean_x = 0.0;
        let mut mean_y = 0.0;
        for _ in 0..n {
            let (x, y, m) = cpl.sample(&mut rng);
            met += m as usize;
            mean_x += x;
            mean_y += y;
        }
        let p_met = met as f64 / n as f64;
        assert!((p_met - 0.61708).abs() < 0.01, "met {p_met}");
        assert!((mean_x / n as f64).abs() < 0.02);
        assert!((mean_y / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn mc_transition_sampling_matches_rows() {
        let chain = FiniteChain::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        let s = Streams::new(8);
        let n = 50_000;
        let mut hits = 0usize;
        for i in 0..n {
            let mut rng = s.at(i, 0, Lane::Chain);
            hits += (chain.sample_step(0, &mut rng) == 1) as usize;
        }
        let p = hits as f64 / n as f64;
        assert!((p - 0.1).abs() < 3.0 * (0.1f64 * 0.9 / n as f64).sqrt());
    }
}
