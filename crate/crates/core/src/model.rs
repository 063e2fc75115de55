//! Abstract framework: state vectors against an orthonormal basis, the
//! dissipative map interface, the `U`-norm, and numerical verifiers for the
//! structural inequalities the rest of the crate relies on.

use crate::error::{Error, Result};

/// Tag identifying the basis family a coefficient vector refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BasisId(pub u32);

/// Finite coefficient vector of a trajectory point against an ordered
/// orthonormal basis. The `H`-norm is the Euclidean norm of the coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub coeffs: Vec<f64>,
    pub basis: BasisId,
}

impl StateVector {
    pub fn new(coeffs: Vec<f64>, basis: BasisId) -> Self {
        StateVector { coeffs, basis }
    }

    pub fn zeros(n: usize, basis: BasisId) -> Self {
        StateVector::new(vec![0.0; n], basis)
    }

    /// Unit basis vector `e_j` (1-based index, matching the basis ordering).
    pub fn basis_vector(j: usize, n: usize, basis: BasisId) -> Self {
        assert!(j >= 1 && j <= n);
        let mut c = vec![0.0; n];
        c[j - 1] = 1.0;
        StateVector::new(c, basis)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|x| x.is_finite())
    }

    pub fn dist(&self, other: &StateVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        StateVector::new(coeffs, self.basis)
    }

    pub fn sub(&self, other: &StateVector) -> StateVector {
        debug_assert_eq!(self.dim(), other.dim());
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        StateVector::new(coeffs, self.basis)
    }

    pub fn scale(&self, s: f64) -> StateVector {
        StateVector::new(self.coeffs.iter().map(|x| s * x).collect(), self.basis)
    }

    /// Euclidean norm of the coefficients with (0-based) index `>= from`.
    pub fn tail_norm(&self, from: usize) -> f64 {
        self.coeffs[from.min(self.coeffs.len())..]
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }
}

/// Constants of the dissipativity inequality
/// `Phi(S(u) + v) <= q Phi(u) + C Phi(v)` together with the growth exponents
/// `1 + |u|^alpha <= Phi(u) <= C (1 + |u|)^beta`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DissipativityConstants {
    pub alpha: f64,
    pub beta: f64,
    pub c_phi: f64,
    pub q: f64,
}

impl DissipativityConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.c_phi > 0.0) {
            return Err(Error::InvalidConfig(
                "dissipativity constants must be positive".into(),
            ));
        }
        if self.alpha > self.beta {
            return Err(Error::InvalidConfig("alpha must not exceed beta".into()));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig("q must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// A dissipative system on a Galerkin truncation of dimension `n_dim`.
///
/// `step` is the deterministic time-1 map `S`; `phi` the Lyapunov weight;
/// `frak_p` the squeezing exponent functional; `gamma(N)` the squeezing
/// sequence of the subspace ladder `H_0 = {0} ⊂ H_1 ⊂ ... ⊂ H_L = H`, where
/// `H_N` spans the first `h_n_dim(N)` basis coefficients.
pub trait System: Send + Sync {
    fn n_dim(&self) -> usize;
    fn basis(&self) -> BasisId;
    fn name(&self) -> &'static str;

    fn step(&self, u: &StateVector) -> Result<StateVector>;
    fn phi(&self, u: &StateVector) -> f64;
    fn frak_p(&self, u: &StateVector) -> f64;
    fn constants(&self) -> DissipativityConstants;

    /// Number of ladder levels `L`; `gamma` and `h_n_dim` accept `0..=L`.
    fn n_levels(&self) -> usize;
    fn gamma(&self, level: usize) -> f64;
    /// Real dimension of `H_N` (0 at level 0, `n_dim` at the top level).
    fn h_n_dim(&self, level: usize) -> usize {
        level
    }

    /// Cached `|S(0)|_U`.
    fn s_of_zero_u_norm(&self) -> f64;

    /// `S(u)` together with `p(u)`; systems whose `p` is an integral along
    /// the flow override this to avoid integrating twice.
    fn step_with_frak_p(&self, u: &StateVector) -> Result<(StateVector, f64)> {
        Ok((self.step(u)?, self.frak_p(u)))
    }

    fn check_state(&self, u: &StateVector) -> Result<()> {
        if u.dim() != self.n_dim() {
            return Err(Error::DimensionMismatch {
                context: "state vector",
                expected: self.n_dim(),
                got: u.dim(),
            });
        }
        Ok(())
    }
}

/// `|u|_U = sup_N gamma_N |Q_N u|`, the sup running over the ladder levels
/// `0..=L` (the level-`L` tail is empty and contributes 0).
pub fn u_norm(system: &dyn System, u: &StateVector) -> Result<f64> {
    system.check_state(u)?;
    let mut sup: f64 = 0.0;
    for level in 0..=system.n_levels() {
        let tail = u.tail_norm(system.h_n_dim(level));
        sup = sup.max(system.gamma(level) * tail);
    }
    Ok(sup)
}

/// Report of a sampled check of the dissipativity inequality.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DissipativityReport {
    pub samples: usize,
    pub violations: usize,
    /// max over samples of `Phi(S(u)+v) / (q Phi(u) + C Phi(v))`
    pub worst_ratio: f64,
    /// max over samples of `Phi(S(u)+v) - q Phi(u) - C Phi(v)`
    pub worst_defect: f64,
}

/// Evaluates `Phi(S(u) + v) - q Phi(u) - C Phi(v)` on sampled pairs.
pub fn check_dissipativity<F>(
    system: &dyn System,
    mut sampler: F,
    n_samples: usize,
) -> Result<DissipativityReport>
where
    F: FnMut(usize) -> (StateVector, StateVector),
{
    assert!(n_samples >= 1);
    let c = system.constants();
    let mut violations = 0usize;
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut worst_defect = f64::NEG_INFINITY;
    for i in 0..n_samples {
        let (u, v) = sampler(i);
        system.check_state(&u)?;
        system.check_state(&v)?;
        let su = system.step(&u)?;
        let lhs = system.phi(&su.add(&v));
        if !lhs.is_finite() {
            return Err(Error::instability(
                "check_dissipativity",
                format!("non-finite Phi(S(u)+v) at sample {i}"),
            ));
        }
        let rhs = c.q * system.phi(&u) + c.c_phi * system.phi(&v);
        let defect = lhs - rhs;
        if defect > 0.0 {
            violations += 1;
        }
        worst_defect = worst_defect.max(defect);
        worst_ratio = worst_ratio.max(lhs / rhs);
    }
    Ok(DissipativityReport {
        samples: n_samples,
        violations,
        worst_ratio,
        worst_defect,
    })
}

/// Report of a sampled check of the high-mode squeezing inequality
/// `|Q_N (S(u) - S(v))| <= gamma_N^{-1} exp(p(u) + p(v)) |u - v|`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SqueezingReport {
    pub level: usize,
    pub pairs: usize,
    /// max over pairs of the normalized defect; `<= 1` means the inequality
    /// holds with the system's calibrated `p`.
    pub max_normalized_defect: f64,
}

pub fn check_squeezing(
    system: &dyn System,
    level: usize,
    pairs: &[(StateVector, StateVector)],
) -> Result<SqueezingReport> {
    assert!(!pairs.is_empty());
    assert!(level <= system.n_levels());
    let cut = system.h_n_dim(level);
    let gamma = system.gamma(level);
    let mut max_defect: f64 = 0.0;
    for (u, v) in pairs {
        system.check_state(u)?;
        system.check_state(v)?;
        let d = u.dist(v);
        if d == 0.0 {
            return Err(Error::DegeneratePair);
        }
        let su = system.step(u)?;
        let sv = system.step(v)?;
        let tail = su.sub(&sv).tail_norm(cut);
        let defect = tail * gamma * (-system.frak_p(u) - system.frak_p(v)).exp() / d;
        max_defect = max_defect.max(defect);
    }
    Ok(SqueezingReport {
        level,
        pairs: pairs.len(),
        max_normalized_defect: max_defect,
    })
}

/// One step of a coupled pair as consumed by [`foias_prodi_bound`]: the two
/// states after the step and the kicks that produced them.
#[derive(Debug, Clone)]
pub struct CoupledStepRecord {
    pub u: StateVector,
    pub u_prime: StateVector,
    pub kick: StateVector,
    pub kick_prime: StateVector,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FoiasProdiReport {
    pub measured: f64,
    pub bound: f64,
    pub violation: bool,
}

/// Checks the iterated squeezing bound
/// `|u_n - u_n'| <= gamma_N^{-n} exp(sum_j p(u_j) + p(u_j')) |u_0 - u_0'|`
/// along a coupled trajectory whose low modes agree and whose kicks share
/// their high-mode components.
///
/// The agreement precondition is checked, not assumed: a step `j` with
/// `P_N u_j != P_N u_j'` or `Q_N kick_j != Q_N kick_j'` is reported as a
/// precondition error identifying `j`.
pub fn foias_prodi_bound(
    system: &dyn System,
    initial: (&StateVector, &StateVector),
    steps: &[CoupledStepRecord],
    level: usize,
    rel_tol: f64,
) -> Result<FoiasProdiReport> {
    let cut = system.h_n_dim(level);
    let gamma = system.gamma(level);
    for (j, rec) in steps.iter().enumerate() {
        let low_agree = rec.u.coeffs[..cut] == rec.u_prime.coeffs[..cut];
        if !low_agree {
            return Err(Error::Precondition {
                step: j + 1,
                detail: format!("P_N u != P_N u' at level {level}"),
            });
        }
        let high_kick_agree = rec.kick.coeffs[cut..] == rec.kick_prime.coeffs[cut..];
        if !high_kick_agree {
            return Err(Error::Precondition {
                step: j + 1,
                detail: format!("Q_N kick != Q_N kick' at level {level}"),
            });
        }
    }
    let n = steps.len();
    let d0 = initial.0.dist(initial.1);
    let mut exponent = system.frak_p(initial.0) + system.frak_p(initial.1);
    for rec in &steps[..n.saturating_sub(1)] {
        exponent += system.frak_p(&rec.u) + system.frak_p(&rec.u_prime);
    }
    let measured = match steps.last() {
        Some(rec) => rec.u.dist(&rec.u_prime),
        None => d0,
    };
    let bound = gamma.powi(-(n as i32)) * exponent.exp() * d0;
    let violation = measured > bound * (1.0 + rel_tol) + f64::MIN_POSITIVE;
    Ok(FoiasProdiReport {
        measured,
        bound,
        violation,
    })
}
