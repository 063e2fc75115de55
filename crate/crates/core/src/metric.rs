//! Dual-Lipschitz (bounded-Lipschitz) distance
//! `sup { <f, mu - nu> : |f|_inf + Lip(f) <= 1 }`.
//!
//! For measures on the line the supremum is computed exactly: for a fixed
//! split `|f|_inf <= t`, `Lip(f) <= s`, the finite LP on the merged support
//! is dual to a min-cost flow on a path with per-distance cost `s` and
//! mass creation/destruction cost `t`, which collapses to a weighted
//! TV-L1 problem solved exactly by convex piecewise-linear message passing.
//! The outer maximisation over `s + t = 1` is concave and handled by
//! golden section.
//!
//! For multi-dimensional states the supremum is not computable; a fixed
//! dictionary of admissible functions (clipped linear and radial features)
//! yields a certified lower bound.

use std::collections::BTreeMap;

use crate::chain::golden_max;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pos(f64);

impl Eq for Pos {}

impl PartialOrd for Pos {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pos {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Convex piecewise-linear function tracked as breakpoint weights on each
/// side of the argmin plateau, plus the minimum value.
struct ConvexPwl {
    left: BTreeMap<Pos, f64>,
    right: BTreeMap<Pos, f64>,
    left_total: f64,
    right_total: f64,
    min_val: f64,
}

impl ConvexPwl {
    /// `t |x|`
    fn absolute(t: f64) -> Self {
        let mut left = BTreeMap::new();
        let mut right = BTreeMap::new();
        if t > 0.0 {
            left.insert(Pos(0.0), t);
            right.insert(Pos(0.0), t);
        }
        ConvexPwl {
            left,
            right,
            left_total: t,
            right_total: t,
            min_val: 0.0,
        }
    }

    fn plateau_left(&self) -> f64 {
        self.left.keys().next_back().map_or(f64::NEG_INFINITY, |p| p.0)
    }

    fn plateau_right(&self) -> f64 {
        self.right.keys().next().map_or(f64::INFINITY, |p| p.0)
    }

    /// Inf-convolution with `t |.|`: cap outer slopes at `t`.
    fn clip(&mut self, t: f64) {
        while self.left_total > t + 1e-15 {
            let (&k, &w) = self.left.iter().next().unwrap();
            let excess = self.left_total - t;
            if w <= excess {
                self.left.remove(&k);
                self.left_total -= w;
            } else {
                *self.left.get_mut(&k).unwrap() = w - excess;
                self.left_total = t;
            }
        }
        while self.right_total > t + 1e-15 {
            let (&k, &w) = self.right.iter().next_back().unwrap();
            let excess = self.right_total - t;
            if w <= excess {
                self.right.remove(&k);
                self.right_total -= w;
            } else {
                *self.right.get_mut(&k).unwrap() = w - excess;
                self.right_total = t;
            }
        }
    }

    /// Add `w |x - p|`.
    fn add_abs(&mut self, p: f64, w: f64) {
        if w <= 0.0 {
            return;
        }
        let (l, r) = (self.plateau_left(), self.plateau_right());
        if p >= l && p <= r {
            *self.left.entry(Pos(p)).or_insert(0.0) += w;
            *self.right.entry(Pos(p)).or_insert(0.0) += w;
            self.left_total += w;
            self.right_total += w;
            return;
        }
        if p < l {
            // slope -w for x < p
            *self.left.entry(Pos(p)).or_insert(0.0) += w;
            self.left_total += w;
            // slope +w for x > p: migrate plateau-side breakpoints until the
            // cumulative left weight absorbs w
            let mut remaining = w;
            let mut cursor = l;
            loop {
                let (&k, &wk) = match self.left.iter().next_back() {
                    Some(e) => e,
                    None => break,
                };
                // value climbs along the segment (k, cursor) with the slope
                // accumulated so far on the right side of the move
                self.min_val += (w - remaining) * (cursor - k.0);
                cursor = k.0;
                if wk > remaining {
                    *self.left.get_mut(&k).unwrap() = wk - remaining;
                    self.left_total -= remaining;
                    *self.right.entry(k).or_insert(0.0) += remaining;
                    self.right_total += remaining;
                    remaining = 0.0;
                } else {
                    self.left.remove(&k);
                    self.left_total -= wk;
                    *self.right.entry(k).or_insert(0.0) += wk;
                    self.right_total += wk;
                    remaining -= wk;
                }
                if remaining <= 0.0 {
                    break;
                }
            }
            // distance from p to the new argmin
            self.min_val += w * (cursor - p) - (w - remaining) * 0.0;
            // `remaining > 0` cannot happen: the ramp at p itself absorbs it
            debug_assert!(remaining <= 1e-12);
        } else {
            // mirror case p > r
            *self.right.entry(Pos(p)).or_insert(0.0) += w;
            self.right_total += w;
            let mut remaining = w;
            let mut cursor = r;
            loop {
                let (&k, &wk) = match self.right.iter().next() {
                    Some(e) => e,
                    None => break,
                };
                self.min_val += (w - remaining) * (k.0 - cursor);
                cursor = k.0;
                if wk > remaining {
                    *self.right.get_mut(&k).unwrap() = wk - remaining;
                    self.right_total -= remaining;
                    *self.left.entry(k).or_insert(0.0) += remaining;
                    self.left_total += remaining;
                    remaining = 0.0;
                } else {
                    self.right.remove(&k);
                    self.right_total -= wk;
                    *self.left.entry(k).or_insert(0.0) += wk;
                    self.left_total += wk;
                    remaining -= wk;
                }
                if remaining <= 0.0 {
                    break;
                }
            }
            self.min_val += w * (p - cursor);
            debug_assert!(remaining <= 1e-12);
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let (l, r) = (self.plateau_left(), self.plateau_right());
        let mut v = self.min_val;
        if x < l {
            let mut cum = 0.0;
            let mut cursor = l;
            for (&k, &w) in self.left.iter().rev() {
                if k.0 <= x {
                    break;
                }
                cum += w;
                let seg_lo = self
                    .left
                    .range(..k)
                    .next_back()
                    .map_or(f64::NEG_INFINITY, |(p, _)| p.0)
                    .max(x);
                v += cum * (cursor.min(k.0) - seg_lo).max(0.0);
                cursor = seg_lo;
                if seg_lo <= x {
                    break;
                }
            }
        } else if x > r {
            let mut cum = 0.0;
            let mut cursor = r;
            for (&k, &w) in self.right.iter() {
                if k.0 >= x {
                    break;
                }
                cum += w;
                let seg_hi = self
                    .right
                    .range((std::ops::Bound::Excluded(k), std::ops::Bound::Unbounded))
                    .next()
                    .map_or(f64::INFINITY, |(p, _)| p.0)
                    .min(x);
                v += cum * (seg_hi - cursor.max(k.0)).max(0.0);
                cursor = seg_hi;
                if seg_hi >= x {
                    break;
                }
            }
        }
        v
    }
}

/// Weighted atoms on the line; weights must be non-negative.
#[derive(Debug, Clone, Default)]
pub struct Atoms1d {
    pub points: Vec<(f64, f64)>,
}

impl Atoms1d {
    pub fn from_samples(xs: &[f64]) -> Self {
        let w = 1.0 / xs.len() as f64;
        Atoms1d {
            points: xs.iter().map(|&x| (x, w)).collect(),
        }
    }

    pub fn dirac(x: f64) -> Self {
        Atoms1d {
            points: vec![(x, 1.0)],
        }
    }

    fn total(&self) -> f64 {
        self.points.iter().map(|(_, w)| w).sum()
    }
}

/// Exact `min` flow cost for the split `(s, t)` on the merged support.
fn flow_cost(xs: &[f64], cs: &[f64], s: f64, t: f64) -> f64 {
    let m = xs.len();
    if m <= 1 {
        return 0.0;
    }
    // prefix imbalances F_i = sum_{j <= i} c_j, i = 1..m-1
    let mut u = ConvexPwl::absolute(t);
    let mut prefix = 0.0;
    for i in 0..m - 1 {
        prefix += cs[i];
        if i > 0 {
            u.clip(t);
        }
        u.add_abs(prefix, s * (xs[i + 1] - xs[i]));
    }
    u.clip(t);
    u.eval(0.0)
}

/// Exact dual-Lipschitz distance between two finite measures on the line
/// with equal total mass.
pub fn dual_lipschitz_1d(mu: &Atoms1d, nu: &Atoms1d) -> Result<f64> {
    dual_lipschitz_1d_tol(mu, nu, 1e-14)
}

/// Same with an explicit tolerance on the outer concave search.
pub fn dual_lipschitz_1d_tol(mu: &Atoms1d, nu: &Atoms1d, tol: f64) -> Result<f64> {
    if mu.points.is_empty() || nu.points.is_empty() {
        return Err(Error::DegenerateInput("empty support".into()));
    }
    if (mu.total() - nu.total()).abs() > 1e-9 * mu.total().max(1.0) {
        return Err(Error::DegenerateInput(
            "measures must have equal total mass".into(),
        ));
    }
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(mu.points.len() + nu.points.len());
    merged.extend(mu.points.iter().map(|&(x, w)| (x, w)));
    merged.extend(nu.points.iter().map(|&(x, w)| (x, -w)));
    merged.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs = Vec::with_capacity(merged.len());
    let mut cs: Vec<f64> = Vec::with_capacity(merged.len());
    for (x, w) in merged {
        if xs.last() == Some(&x) {
            *cs.last_mut().unwrap() += w;
        } else {
            xs.push(x);
            cs.push(w);
        }
    }
    if cs.iter().all(|c| c.abs() < 1e-300) {
        return Ok(0.0);
    }
    // value(s) = flow cost at (s, 1 - s) is concave in s
    let iters = ((1.0 / tol).ln() / (1.0f64 / 0.618_033_988_749_894_9).ln()).ceil() as usize + 2;
    let (_, best) = golden_max(|s| flow_cost(&xs, &cs, s, 1.0 - s), 0.0, 1.0, iters);
    Ok(best)
}

/// Feature dictionary for the lower bound in dimension > 1: clipped linear
/// functionals and clipped radial bumps, normalised so that
/// `|g|_inf + Lip(g) <= 1`.
pub struct LipschitzDictionary {
    directions: Vec<Vec<f64>>,
    anchors: Vec<Vec<f64>>,
    clips: Vec<f64>,
}

impl LipschitzDictionary {
    /// Deterministic dictionary: coordinate axes, `n_random` seeded unit
    /// directions, and radial anchors; clip levels are multiples of `scale`.
    pub fn new(dim: usize, n_random: usize, scale: f64, seed: u64) -> Self {
        let mut directions = Vec::new();
        for i in 0..dim.min(16) {
            let mut e = vec![0.0; dim];
            e[i] = 1.0;
            directions.push(e);
        }
        let streams = crate::rng::Streams::new(seed);
        let mut rng = streams.at(0, 0, crate::rng::Lane::Scratch);
        for _ in 0..n_random {
            let mut v: Vec<f64> = (0..dim)
                .map(|_| {
                    rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut rng)
                })
                .collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= n);
            directions.push(v);
        }
        let anchors = vec![vec![0.0; dim]];
        let s = if scale > 0.0 { scale } else { 1.0 };
        let clips: Vec<f64> = [0.25, 0.5, 1.0, 2.0].iter().map(|c| c * s).collect();
        LipschitzDictionary {
            directions,
            anchors,
            clips,
        }
    }

    /// Certified lower bound on the dual-Lipschitz distance between two
    /// empirical clouds.
    pub fn lower_bound(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mean_gap = |g: &dyn Fn(&[f64]) -> f64| -> f64 {
            let ma = a.iter().map(|x| g(x)).sum::<f64>() / a.len() as f64;
            let mb = b.iter().map(|x| g(x)).sum::<f64>() / b.len() as f64;
            (ma - mb).abs()
        };
        let mut best: f64 = 0.0;
        for w in &self.directions {
            for &c in &self.clips {
                // g = clamp(w.x, +-c) / (c + 1): sup <= c/(c+1), Lip <= 1/(c+1)
                let g = |x: &[f64]| {
                    let p: f64 = x.iter().zip(w).map(|(xi, wi)| xi * wi).sum();
                    p.clamp(-c, c) / (c + 1.0)
                };
                best = best.max(mean_gap(&g));
            }
        }
        for anchor in &self.anchors {
            for &c in &self.clips {
                let g = |x: &[f64]| {
                    let r: f64 = x
                        .iter()
                        .zip(anchor)
                        .map(|(xi, ai)| (xi - ai) * (xi - ai))
                        .sum::<f64>()
                        .sqrt();
                    r.min(c) / (c + 1.0)
                };
                best = best.max(mean_gap(&g));
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn identical_measures_have_zero_distance() {
        let a = Atoms1d::from_samples(&[0.0, 1.0, 2.5]);
        assert_eq!(dual_lipschitz_1d(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn two_point_closed_forms() {
        // diracs distance d apart: 2d / (d + 2)
        let d01 = dual_lipschitz_1d(&Atoms1d::dirac(0.0), &Atoms1d::dirac(1.0)).unwrap();
        assert!((d01 - 2.0 / 3.0).abs() < 1e-12, "{d01}");
        let d10 = dual_lipschitz_1d(&Atoms1d::dirac(0.0), &Atoms1d::dirac(10.0)).unwrap();
        assert!((d10 - 5.0 / 3.0).abs() < 1e-12, "{d10}");
    }

    #[test]
    fn distant_diracs_saturate_at_two() {
        let d = dual_lipschitz_1d(&Atoms1d::dirac(0.0), &Atoms1d::dirac(1e6)).unwrap();
        assert!(d <= 2.0 + 1e-12 && d > 1.99, "{d}");
    }

    /// Brute-force LP oracle: enumerate active-constraint vertices of
    /// max c.f subject to |f_i| <= t, |f_{i+1} - f_i| <= s dx_i.
    fn brute_force_inner(xs: &[f64], cs: &[f64], s: f64, t: f64) -> f64 {
        let m = xs.len();
        // constraints as (coeffs, rhs) rows of A f <= b
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for i in 0..m {
            let mut r = vec![0.0; m];
            r[i] = 1.0;
            rows.push((r.clone(), t));
            r[i] = -1.0;
            rows.push((r, t));
        }
        for i in 0..m - 1 {
            let dx = xs[i + 1] - xs[i];
            let mut r = vec![0.0; m];
            r[i] = 1.0;
            r[i + 1] = -1.0;
            rows.push((r.clone(), s * dx));
            r[i] = -1.0;
            r[i + 1] = 1.0;
            rows.push((r, s * dx));
        }
        // enumerate all m-subsets as potential active sets
        let n_rows = rows.len();
        let mut best = f64::NEG_INFINITY;
        let mut idx = vec![0usize; m];
        fn rec(
            start: usize,
            k: usize,
            m: usize,
            n_rows: usize,
            idx: &mut Vec<usize>,
            rows: &[(Vec<f64>, f64)],
            cs: &[f64],
            best: &mut f64,
        ) {
            if k == m {
                let mut a = vec![0.0; m * m];
                let mut b = vec![0.0; m];
                for (r, &ri) in idx.iter().enumerate() {
                    for c in 0..m {
                        a[r * m + c] = rows[ri].0[c];
                    }
                    b[r] = rows[ri].1;
                }
                if let Ok(f) = crate::chain::tests_support::solve(a, b, m) {
                    let feasible = rows.iter().all(|(row, rhs)| {
                        row.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() <= rhs + 1e-9
                    });
                    if feasible {
                        let v: f64 = cs.iter().zip(&f).map(|(c, fi)| c * fi).sum();
                        if v > *best {
                            *best = v;
                        }
                    }
                }
                return;
            }
            for i in start..n_rows {
                idx[k] = i;
                rec(i + 1, k + 1, m, n_rows, idx, rows, cs, best);
            }
        }
        rec(0, 0, m, n_rows, &mut idx, &rows, cs, &mut best);
        best
    }

    #[test]
    fn flow_cost_matches_brute_force_lp_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..60 {
            let m = rng.gen_range(2..5usize);
            let mut xs: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
            let m = xs.len();
            if m < 2 {
                continue;
            }
            let mut cs: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = cs.iter().sum::<f64>() / m as f64;
            cs.iter_mut().for_each(|c| *c -= mean);
            let s: f64 = rng.gen_range(0.05..0.95);
            let t = 1.0 - s;
            let dual = flow_cost(&xs, &cs, s, t);
            let primal = brute_force_inner(&xs, &cs, s, t);
            assert!(
                (dual - primal).abs() < 1e-7,
                "trial {trial}: flow {dual} vs LP {primal} (m={m})"
            );
        }
    }

    #[test]
    fn distance_is_a_metric_on_random_empirical_measures() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let sample = |rng: &mut rand_chacha::ChaCha8Rng| {
                Atoms1d::from_samples(
                    &(0..8).map(|_| rng.gen_range(-3.0..3.0)).collect::<Vec<_>>(),
                )
            };
            let (a, b, c) = (sample(&mut rng), sample(&mut rng), sample(&mut rng));
            let dab = dual_lipschitz_1d(&a, &b).unwrap();
            let dba = dual_lipschitz_1d(&b, &a).unwrap();
            let dac = dual_lipschitz_1d(&a, &c).unwrap();
            let dcb = dual_lipschitz_1d(&c, &b).unwrap();
            assert!((dab - dba).abs() < 1e-12, "symmetry");
            assert!(dab <= dac + dcb + 1e-12, "triangle");
            assert!(dab >= 0.0);
        }
    }

    #[test]
    fn dictionary_lower_bound_never_exceeds_exact_in_1d() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let dict = LipschitzDictionary::new(1, 8, 1.0, 3);
        for _ in 0..20 {
            let a: Vec<f64> = (0..40).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..3.0)).collect();
            let exact = dual_lipschitz_1d(
                &Atoms1d::from_samples(&a),
                &Atoms1d::from_samples(&b),
            )
            .unwrap();
            let av: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
            let bv: Vec<Vec<f64>> = b.iter().map(|&x| vec![x]).collect();
            let lower = dict.lower_bound(&av, &bv);
            assert!(lower <= exact + 1e-9, "lower {lower} exact {exact}");
        }
    }

    #[test]
    fn mismatched_mass_is_rejected() {
        let a = Atoms1d {
            points: vec![(0.0, 1.0)],
        };
        let b = Atoms1d {
            points: vec![(0.0, 0.5)],
        };
        assert!(dual_lipschitz_1d(&a, &b).is_err());
    }
}
