//! Piecewise-linear diversity–multiplexing tradeoff curves and the feedback,
//! training and multiple-access recursions built on them.

use crate::error::{Error, Result};

const R_TOL: f64 = 1e-12;
const LATTICE_STEP: f64 = 0.05;

/// Diversity as a piecewise-linear function of multiplexing gain.
#[derive(Clone, Debug, PartialEq)]
pub struct DmtCurve {
    breakpoints: Vec<(f64, f64)>,
}

impl DmtCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::Precondition("curve needs at least one breakpoint".into()));
        }
        for w in breakpoints.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Precondition("breakpoint r must increase strictly".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Precondition("diversity must be nonincreasing".into()));
            }
        }
        if breakpoints[0].0 != 0.0 {
            return Err(Error::Precondition("curve must start at r = 0".into()));
        }
        if breakpoints.last().is_some_and(|b| b.1 < 0.0) {
            return Err(Error::Precondition("diversity must stay nonnegative".into()));
        }
        Ok(Self { breakpoints })
    }

    /// Coherent link at power exponent `p`: points (kp, p(m−k)(n−k)).
    pub fn coherent(p: f64, m: usize, n: usize) -> Result<Self> {
        if !(p > 0.0) {
            return Err(Error::NonPositivePower(p));
        }
        let pts = (0..=m.min(n))
            .map(|k| (k as f64 * p, p * ((m - k) * (n - k)) as f64))
            .collect();
        Self::new(pts)
    }

    /// Samples `f` on `grid` and keeps the samples as breakpoints.
    pub fn from_fn(grid: &[f64], mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let pts = grid.iter().map(|&r| Ok((r, f(r)?))).collect::<Result<Vec<_>>>()?;
        Self::new(pts)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn r_max(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.0)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        let r_max = self.r_max();
        if !(r >= 0.0 && r <= r_max + R_TOL) {
            return Err(Error::MultiplexingOutOfRange { r, max: r_max });
        }
        let idx = self.breakpoints.partition_point(|b| b.0 <= r);
        if idx == 0 {
            return Ok(self.breakpoints[0].1);
        }
        if idx == self.breakpoints.len() {
            return Ok(self.breakpoints[idx - 1].1);
        }
        let (r0, d0) = self.breakpoints[idx - 1];
        let (r1, d1) = self.breakpoints[idx];
        Ok(d0 + (d1 - d0) * (r - r0) / (r1 - r0))
    }
}

/// G(r, p) for an m×n coherent link.
pub fn g_tradeoff(r: f64, p: f64, m: usize, n: usize) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    let kmax = m.min(n);
    let max = p * kmax as f64;
    if !(r >= 0.0 && r <= max * (1.0 + R_TOL) + R_TOL) {
        return Err(Error::MultiplexingOutOfRange { r, max });
    }
    let x = (r / p).min(kmax as f64);
    let k = (x.floor() as usize).min(kmax.saturating_sub(1));
    let (mk, nk) = ((m - k) as f64, (n - k) as f64);
    let here = mk * nk;
    let next = (mk - 1.0) * (nk - 1.0);
    Ok((p * (here - (x - k as f64) * (here - next))).max(0.0))
}

fn check_r(r: f64, m: usize, n: usize) -> Result<()> {
    let max = m.min(n) as f64;
    if !(r >= 0.0 && r < max) {
        return Err(Error::MultiplexingOutOfRange { r, max });
    }
    Ok(())
}

/// d(r, 0), …, d(r, K) of the perfect-feedback recursion.
pub fn perfect_feedback_levels(r: f64, k: usize, m: usize, n: usize) -> Result<Vec<f64>> {
    check_r(r, m, n)?;
    let mut d = Vec::with_capacity(k + 1);
    d.push(0.0);
    for j in 1..=k {
        let prev = d[j - 1];
        d.push(g_tradeoff(r, 1.0 + prev, m, n)?);
    }
    Ok(d)
}

pub fn d_perfect_feedback(r: f64, k: usize, m: usize, n: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::TooFewLevels { required: 1, got: 0 });
    }
    Ok(perfect_feedback_levels(r, k, m, n)?[k])
}

/// B̄₁ … B̄_K of the constant-power feedback recursion (B̄₀ = 0).
pub fn constant_power_levels(r: f64, k: usize, m: usize, n: usize) -> Result<Vec<f64>> {
    check_r(r, m, n)?;
    let mn = (m * n) as f64;
    let mut b: Vec<f64> = vec![0.0];
    for j in 1..=k {
        let prev = b[j - 1];
        b.push(g_tradeoff(r, 1.0 + prev.min(mn), m, n)?);
    }
    Ok(b)
}

pub fn d_constant_power_feedback(r: f64, k: usize, m: usize, n: usize) -> Result<f64> {
    if k <= 1 {
        return Err(Error::TooFewLevels { required: 2, got: k });
    }
    let b = constant_power_levels(r, k, m, n)?;
    let mn = (m * n) as f64;
    Ok(b[k].min(mn + g_tradeoff(r, 1.0, m, n)?))
}

/// Feedback power exponents q₀ … q_{K−1}.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackExponents {
    pub q: Vec<f64>,
    pub ordered: bool,
}

/// min_i [mn((q_i)⁺ − (q_{i−1})⁺) + d(r,i)] over i = 1..K−1 for ordered exponents.
pub fn ordered_feedback_objective(q: &[f64], d: &[f64], mn: f64) -> f64 {
    (1..q.len())
        .map(|i| mn * (q[i].max(0.0) - q[i - 1].max(0.0)) + d[i])
        .fold(f64::INFINITY, f64::min)
}

/// Largest t with Σ_{j≤i} (t − d_j)⁺ ≤ budget, for increasing d₁ ≤ … ≤ d_i.
fn chain_limit(d: &[f64], budget: f64) -> f64 {
    let mut sum = 0.0;
    for (k, &dk) in d.iter().enumerate() {
        sum += dk;
        let t = (budget + sum) / (k + 1) as f64;
        if k + 1 == d.len() || t <= d[k + 1] {
            return t;
        }
    }
    f64::INFINITY
}

/// Power-controlled feedback diversity with ordered exponents, maximized exactly.
///
/// With q₀ = 0, a target t is feasible iff the smallest admissible chain
/// q_i = Σ_{j≤i} (t − d_j)⁺/mn stays under every cap 1 + d_i, so the optimum is
/// the minimum of the per-level limits. The returned exponents are the largest
/// feasible chain, which equals (0, 1+d₁, …) whenever that choice is optimal.
pub fn d_power_controlled_feedback(
    r: f64,
    k: usize,
    m: usize,
    n: usize,
) -> Result<(f64, FeedbackExponents)> {
    if k <= 1 {
        return Err(Error::TooFewLevels { required: 2, got: k });
    }
    let d = perfect_feedback_levels(r, k, m, n)?;
    let mn = (m * n) as f64;
    let t_star = (1..k)
        .map(|i| chain_limit(&d[1..=i], mn * (1.0 + d[i])))
        .fold(f64::INFINITY, f64::min);
    let value = t_star.min(d[k]);

    let mut q = vec![0.0; k];
    q[k - 1] = 1.0 + d[k - 1];
    for i in (1..k - 1).rev() {
        q[i] = (1.0 + d[i]).min(q[i + 1] - (value - d[i + 1]).max(0.0) / mn);
    }
    Ok((value, FeedbackExponents { q, ordered: true }))
}

/// The candidate q₀ = 0, q_j = 1 + d(r, j) evaluated in the same objective.
pub fn candidate_feedback_exponents(
    r: f64,
    k: usize,
    m: usize,
    n: usize,
) -> Result<(f64, FeedbackExponents)> {
    if k <= 1 {
        return Err(Error::TooFewLevels { required: 2, got: k });
    }
    let d = perfect_feedback_levels(r, k, m, n)?;
    let mut q: Vec<f64> = d[..k].iter().map(|x| 1.0 + x).collect();
    q[0] = 0.0;
    let value = ordered_feedback_objective(&q, &d, (m * n) as f64).min(d[k]);
    Ok((value, FeedbackExponents { q, ordered: true }))
}

/// Unordered exponents on the 0.05 lattice under the relaxed constraint set.
///
/// A pair (j, i) with j < i contributes mn(q_i − q_j) + d(r, i) only when
/// q_j < q_i, and q_j ≤ 1 + min(d_j, min_{i<j, q_i>q_j} d_i + mn(q_i − q_j)).
/// Search is exhaustive with branch-and-bound; the sup is capped by d(r, K).
pub fn d_power_controlled_feedback_relaxed(r: f64, k: usize, m: usize, n: usize) -> Result<f64> {
    if k <= 1 {
        return Err(Error::TooFewLevels { required: 2, got: k });
    }
    let d = perfect_feedback_levels(r, k, m, n)?;
    let mn = (m * n) as f64;
    let cap = d[k];
    let max_units = ((1.0 + cap) / LATTICE_STEP + 1e-9).floor() as usize;

    struct Search<'a> {
        d: &'a [f64],
        mn: f64,
        k: usize,
        cap: f64,
        max_units: usize,
        best: f64,
        q: Vec<usize>,
    }

    impl Search<'_> {
        fn qv(&self, u: usize) -> f64 {
            u as f64 * LATTICE_STEP
        }

        fn visit(&mut self, j: usize, partial: f64) {
            if partial <= self.best || self.best >= self.cap {
                return;
            }
            if j == self.k {
                self.best = partial.min(self.cap);
                return;
            }
            for u in (0..=self.max_units).rev() {
                if self.q.contains(&u) {
                    continue;
                }
                let qj = self.qv(u);
                let mut limit = self.d[j];
                let mut obj = partial;
                for (i, &ui) in self.q.iter().enumerate() {
                    let qi = self.qv(ui);
                    if qi > qj {
                        limit = limit.min(self.d[i] + self.mn * (qi - qj));
                    } else {
                        obj = obj.min(self.mn * (qj - qi) + self.d[j]);
                    }
                }
                if qj > 1.0 + limit + 1e-12 {
                    continue;
                }
                self.q.push(u);
                self.visit(j + 1, obj);
                self.q.pop();
                if self.best >= self.cap {
                    return;
                }
            }
        }
    }

    let mut s = Search {
        d: &d,
        mn,
        k,
        cap,
        max_units,
        best: f64::NEG_INFINITY,
        q: Vec::with_capacity(k),
    };
    s.visit(0, f64::INFINITY);
    Ok(s.best)
}

pub fn d_training(r: f64, m: usize, n: usize, power_controlled: bool) -> Result<f64> {
    check_r(r, m, n)?;
    let g = g_tradeoff(r, 1.0, m, n)?;
    if power_controlled {
        g_tradeoff(r, 1.0 + g, m, n)
    } else {
        Ok(g)
    }
}

/// Value and minimizing user subset of the multiple-access tradeoff.
#[derive(Clone, Debug, PartialEq)]
pub struct MacTradeoff {
    pub diversity: f64,
    pub subset: Vec<usize>,
}

/// D(r, p) = min over nonempty S of G_{|S|m, n}(Σ_{i∈S} r_i, p).
pub fn mac_tradeoff(r_vec: &[f64], p: f64, m: usize, n: usize) -> Result<MacTradeoff> {
    let l = r_vec.len();
    if l == 0 || l > 20 {
        return Err(Error::Config(format!("user count {l} outside 1..=20")));
    }
    if !(p > 0.0) {
        return Err(Error::NonPositivePower(p));
    }
    let mut best: Option<(f64, usize, u32)> = None;
    for mask in 1u32..(1 << l) {
        let size = mask.count_ones() as usize;
        let sum: f64 = (0..l).filter(|i| mask >> i & 1 == 1).map(|i| r_vec[i]).sum();
        let limit = (size * m).min(n) as f64 * p;
        if sum > limit * (1.0 + R_TOL) + R_TOL || r_vec.iter().any(|&x| x < 0.0) {
            return Err(Error::SubsetRate {
                subset: subset_members(mask, l),
                sum,
                limit,
            });
        }
        let g = g_tradeoff(sum.min(limit), p, size * m, n)?;
        let better = match best {
            None => true,
            Some((v, s, _)) => g < v || (g == v && size < s),
        };
        if better {
            best = Some((g, size, mask));
        }
    }
    let (diversity, _, mask) = best.expect("at least one subset");
    Ok(MacTradeoff {
        diversity,
        subset: subset_members(mask, l),
    })
}

fn subset_members(mask: u32, l: usize) -> Vec<usize> {
    (0..l).filter(|i| mask >> i & 1 == 1).collect()
}

/// D(r, 1·(1 + D(r, 1))).
pub fn mac_main_tradeoff(r_vec: &[f64], m: usize, n: usize) -> Result<f64> {
    let first = mac_tradeoff(r_vec, 1.0, m, n)?;
    Ok(mac_tradeoff(r_vec, 1.0 + first.diversity, m, n)?.diversity)
}

/// Effective multiplexing gain r·T/(T − c) after spending c of T channel uses on overhead.
pub fn time_loss_multiplexing(r: f64, t_coh: usize, overhead: usize) -> Result<f64> {
    if overhead >= t_coh {
        return Err(Error::Config(format!(
            "overhead {overhead} consumes the whole block of {t_coh}"
        )));
    }
    Ok(r * t_coh as f64 / (t_coh - overhead) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Exhaustive DP over the 0.05 lattice for the ordered objective.
    fn lattice_ordered(r: f64, k: usize, m: usize, n: usize) -> f64 {
        let d = perfect_feedback_levels(r, k, m, n).unwrap();
        let mn = (m * n) as f64;
        let units = |x: f64| (x / LATTICE_STEP + 1e-9).floor() as usize;
        // best[u] = best partial objective with q_{j} = u·step
        let mut best: Vec<f64> = vec![f64::INFINITY; units(1.0 + d[0]) + 1];
        for j in 1..k {
            let width = units(1.0 + d[j]) + 1;
            let mut next = vec![f64::NEG_INFINITY; width];
            for (u, slot) in next.iter_mut().enumerate() {
                for (v, &b) in best.iter().enumerate() {
                    if v >= u || b == f64::NEG_INFINITY {
                        continue;
                    }
                    let term = mn * (u as f64 - v as f64) * LATTICE_STEP + d[j];
                    *slot = slot.max(b.min(term));
                }
            }
            best = next;
        }
        best.into_iter().fold(f64::NEG_INFINITY, f64::max).min(d[k])
    }

    #[test]
    fn g_golden_values() {
        assert_abs_diff_eq!(g_tradeoff(0.2, 1.0, 1, 1).unwrap(), 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(g_tradeoff(0.2, 1.8, 1, 1).unwrap(), 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(g_tradeoff(0.5, 1.0, 1, 2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g_tradeoff(0.5, 2.0, 1, 2).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g_tradeoff(0.0, 1.0, 2, 2).unwrap(), 4.0, epsilon = 1e-12);
        for (m, n) in [(1, 1), (2, 3), (4, 2), (3, 3)] {
            let p = 1.7;
            let r = p * m.min(n) as f64;
            assert_abs_diff_eq!(g_tradeoff(r, p, m, n).unwrap(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn g_rejects_bad_inputs() {
        assert!(matches!(g_tradeoff(1.1, 1.0, 1, 2), Err(Error::MultiplexingOutOfRange { .. })));
        assert!(matches!(g_tradeoff(0.1, 0.0, 1, 2), Err(Error::NonPositivePower(_))));
        assert!(g_tradeoff(-0.1, 1.0, 1, 2).is_err());
    }

    #[test]
    fn curve_matches_direct_formula() {
        let curve = DmtCurve::coherent(1.3, 2, 3).unwrap();
        assert_eq!(curve.breakpoints().len(), 3);
        for i in 0..=52 {
            let r = i as f64 * 0.05;
            assert_abs_diff_eq!(
                curve.eval(r).unwrap(),
                g_tradeoff(r, 1.3, 2, 3).unwrap(),
                epsilon = 1e-12
            );
        }
        assert!(curve.eval(2.7).is_err());
        assert!(DmtCurve::new(vec![(0.0, 1.0), (0.0, 0.5)]).is_err());
        assert!(DmtCurve::new(vec![(0.0, 1.0), (1.0, 2.0)]).is_err());
    }

    #[test]
    fn perfect_feedback_closed_form_at_zero_rate() {
        for m in 1..=3 {
            for n in 1..=3 {
                for k in 1..=4 {
                    let mn = (m * n) as f64;
                    let expect: f64 = (1..=k).map(|g| mn.powi(g as i32)).sum();
                    let got = d_perfect_feedback(0.0, k, m, n).unwrap();
                    assert_abs_diff_eq!(got, expect, epsilon = 1e-9 * expect);
                }
            }
        }
        assert_abs_diff_eq!(d_perfect_feedback(1e-9, 2, 1, 1).unwrap(), 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(d_perfect_feedback(0.0, 2, 1, 2).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            d_perfect_feedback(0.37, 1, 2, 3).unwrap(),
            g_tradeoff(0.37, 1.0, 2, 3).unwrap(),
            epsilon = 1e-15
        );
        assert!(d_perfect_feedback(1.0, 2, 1, 1).is_err());
    }

    #[test]
    fn constant_power_examples() {
        for k in 2..=5 {
            assert_abs_diff_eq!(d_constant_power_feedback(1e-12, k, 1, 1).unwrap(), 2.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(d_constant_power_feedback(0.0, 2, 1, 2).unwrap(), 4.0, epsilon = 1e-12);
        assert!(d_constant_power_feedback(0.999_999_999, 3, 1, 2).unwrap() < 1e-6);
        assert!(matches!(d_constant_power_feedback(0.1, 1, 1, 2), Err(Error::TooFewLevels { .. })));
    }

    #[test]
    fn power_controlled_examples() {
        for i in 0..50 {
            let r = i as f64 / 50.0;
            let (d, _) = d_power_controlled_feedback(r, 2, 1, 1).unwrap();
            let g = g_tradeoff(r, 1.0, 1, 1).unwrap();
            assert_abs_diff_eq!(d, g_tradeoff(r, 1.0 + g, 1, 1).unwrap(), epsilon = 1e-9);
        }
        assert_abs_diff_eq!(d_power_controlled_feedback(1e-12, 3, 1, 1).unwrap().0, 3.0, epsilon = 1e-9);
        for k in 3..=6 {
            assert_abs_diff_eq!(d_power_controlled_feedback(1e-12, k, 1, 2).unwrap().0, 8.0, epsilon = 1e-9);
        }
        assert!(d_power_controlled_feedback(0.1, 1, 1, 1).is_err());
    }

    #[test]
    fn exact_optimizer_agrees_with_lattice_dp() {
        for m in 1..=2 {
            for n in 1..=2 {
                for k in 2..=4 {
                    for r in [0.0, 0.25, 0.5] {
                        let (exact, _) = d_power_controlled_feedback(r, k, m, n).unwrap();
                        let grid = lattice_ordered(r, k, m, n);
                        assert!(grid <= exact + 1e-9, "grid above exact at {m}x{n} K={k} r={r}");
                        assert!(exact - grid <= 0.05 * (m * n) as f64 + 1e-9);
                        assert!((exact - grid).abs() <= 0.05 + 1e-9, "{m}x{n} K={k} r={r}: {exact} vs {grid}");
                    }
                }
            }
        }
    }

    #[test]
    fn candidate_is_suboptimal_for_single_antenna_four_levels() {
        // (0, 1+d1, 1+d2, 1+d3) leaves diversity on the table here.
        let (cand, _) = candidate_feedback_exponents(0.5, 4, 1, 1).unwrap();
        let (exact, _) = d_power_controlled_feedback(0.5, 4, 1, 1).unwrap();
        assert_abs_diff_eq!(cand, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(exact, 1.75, epsilon = 1e-12);
        assert_abs_diff_eq!(d_power_controlled_feedback(0.25, 4, 1, 1).unwrap().0, 2.375, epsilon = 1e-12);
    }

    #[test]
    fn returned_exponents_achieve_the_value() {
        for (m, n) in [(1, 1), (1, 2), (2, 2), (2, 3)] {
            for k in 2..=5 {
                for i in 0..10 {
                    let r = i as f64 * 0.099 * m.min(n) as f64;
                    let (v, fe) = d_power_controlled_feedback(r, k, m, n).unwrap();
                    let d = perfect_feedback_levels(r, k, m, n).unwrap();
                    assert_eq!(fe.q.len(), k);
                    assert_eq!(fe.q[0], 0.0);
                    for j in 1..k {
                        assert!(fe.q[j] > fe.q[j - 1]);
                        assert!(fe.q[j] <= 1.0 + d[j] + 1e-12);
                    }
                    let obj = ordered_feedback_objective(&fe.q, &d, (m * n) as f64).min(d[k]);
                    assert_abs_diff_eq!(obj, v, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn relaxed_examples() {
        for r in [0.0, 0.3, 0.7] {
            let ordered = d_power_controlled_feedback(r, 2, 1, 2).unwrap().0;
            let relaxed = d_power_controlled_feedback_relaxed(r, 2, 1, 2).unwrap();
            assert_abs_diff_eq!(relaxed, ordered, epsilon = 1e-9);
        }
        let relaxed = d_power_controlled_feedback_relaxed(1e-9, 3, 1, 1).unwrap();
        assert!(relaxed >= 3.0 - 1e-6);
        assert!(relaxed <= d_perfect_feedback(1e-9, 3, 1, 1).unwrap() + 1e-9);
        assert!(d_power_controlled_feedback_relaxed(0.2, 1, 1, 1).is_err());
    }

    #[test]
    fn training_examples() {
        assert_abs_diff_eq!(d_training(0.0, 1, 2, true).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d_training(0.2, 1, 1, true).unwrap(), 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(
            d_training(0.4, 2, 3, false).unwrap(),
            g_tradeoff(0.4, 1.0, 2, 3).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn mac_examples() {
        let two = mac_tradeoff(&[0.0, 0.0], 1.0, 1, 2).unwrap();
        assert_abs_diff_eq!(two.diversity, 2.0, epsilon = 1e-12);
        assert_eq!(two.subset.len(), 1);
        assert_abs_diff_eq!(mac_main_tradeoff(&[0.0, 0.0], 1, 2).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mac_main_tradeoff(&[1e-12], 1, 1).unwrap(), 2.0, epsilon = 1e-9);
        let at_max = mac_tradeoff(&[1.0, 1.0], 1.0, 1, 2).unwrap();
        assert_abs_diff_eq!(at_max.diversity, 0.0, epsilon = 1e-12);
        assert!(matches!(
            mac_tradeoff(&[0.9, 0.9, 0.9], 1.0, 1, 2),
            Err(Error::SubsetRate { .. })
        ));
    }

    #[test]
    fn mac_matches_subset_enumeration() {
        // Independent enumeration: walk subsets by recursion instead of bit masks.
        fn enumerate(r: &[f64], p: f64, m: usize, n: usize) -> f64 {
            fn go(r: &[f64], idx: usize, chosen: &mut Vec<usize>, p: f64, m: usize, n: usize, best: &mut f64) {
                if idx == r.len() {
                    if !chosen.is_empty() {
                        let s: f64 = chosen.iter().map(|&i| r[i]).sum();
                        let g = g_tradeoff(s, p, chosen.len() * m, n).unwrap();
                        *best = best.min(g);
                    }
                    return;
                }
                go(r, idx + 1, chosen, p, m, n, best);
                chosen.push(idx);
                go(r, idx + 1, chosen, p, m, n, best);
                chosen.pop();
            }
            let mut best = f64::INFINITY;
            go(r, 0, &mut Vec::new(), p, m, n, &mut best);
            best
        }
        let cases: &[(&[f64], f64, usize, usize)] = &[
            (&[0.3, 0.3], 1.0, 1, 2),
            (&[0.2, 0.5, 0.1], 1.5, 1, 3),
            (&[0.4, 0.7], 2.0, 2, 2),
            (&[0.1, 0.1, 0.1, 0.1], 1.0, 1, 4),
        ];
        for &(r, p, m, n) in cases {
            assert_eq!(mac_tradeoff(r, p, m, n).unwrap().diversity, enumerate(r, p, m, n));
        }
    }

    #[test]
    fn time_loss_hook() {
        assert_abs_diff_eq!(time_loss_multiplexing(0.5, 10, 2).unwrap(), 0.625, epsilon = 1e-15);
        assert!(time_loss_multiplexing(0.5, 2, 2).is_err());
    }

    #[test]
    fn constant_power_exceeds_power_controlled_at_high_rate() {
        // With four or more levels the chain breaks near r_max: the energy-coded
        // index caps q₂ at 1 + d₂, while a coded index pays mn once.
        // m = n = 1, r = 3/4: d_j = j/4, B̄₅ = 5/4, and the first three feedback
        // terms sum to at most q₃ + 3/2 = 13/4, so the ordered value is 13/12.
        let r = 0.75;
        let c = d_constant_power_feedback(r, 5, 1, 1).unwrap();
        assert_abs_diff_eq!(c, 1.25, epsilon = 1e-12);
        let (pc, _) = d_power_controlled_feedback(r, 5, 1, 1).unwrap();
        assert_abs_diff_eq!(pc, 13.0 / 12.0, epsilon = 1e-9);
        let lattice = lattice_ordered(r, 5, 1, 1);
        assert!(lattice <= pc + 1e-9);
        for k in 2..=3 {
            assert!(d_constant_power_feedback(r, k, 1, 1).unwrap() <= d_power_controlled_feedback(r, k, 1, 1).unwrap().0 + 1e-9);
        }
    }

    proptest! {
        #[test]
        fn g_scaling_identity(m in 1usize..=4, n in 1usize..=4, p in 0.05f64..6.0, frac in 0.0f64..=1.0) {
            let r = frac * p * m.min(n) as f64;
            let lhs = g_tradeoff(r, p, m, n).unwrap();
            let rhs = p * g_tradeoff(r / p, 1.0, m, n).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn tradeoffs_nonincreasing_in_r(m in 1usize..=3, n in 1usize..=3, k in 2usize..=4, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let top = m.min(n) as f64;
            let (lo, hi) = if a <= b { (a * top, b * top) } else { (b * top, a * top) };
            let hi = hi.min(top - 1e-9);
            let lo = lo.min(hi);
            prop_assert!(g_tradeoff(hi, 1.0, m, n).unwrap() <= g_tradeoff(lo, 1.0, m, n).unwrap() + 1e-12);
            prop_assert!(d_perfect_feedback(hi, k, m, n).unwrap() <= d_perfect_feedback(lo, k, m, n).unwrap() + 1e-9);
            prop_assert!(d_constant_power_feedback(hi, k, m, n).unwrap() <= d_constant_power_feedback(lo, k, m, n).unwrap() + 1e-9);
            prop_assert!(d_power_controlled_feedback(hi, k, m, n).unwrap().0 <= d_power_controlled_feedback(lo, k, m, n).unwrap().0 + 1e-9);
            prop_assert!(d_training(hi, m, n, true).unwrap() <= d_training(lo, m, n, true).unwrap() + 1e-12);
        }

        #[test]
        fn perfect_feedback_nondecreasing_in_k(m in 1usize..=3, n in 1usize..=3, k in 1usize..6, frac in 0.0f64..0.999) {
            let r = frac * m.min(n) as f64;
            prop_assert!(d_perfect_feedback(r, k + 1, m, n).unwrap() >= d_perfect_feedback(r, k, m, n).unwrap() - 1e-12);
        }

        #[test]
        fn ordering_chain(m in 1usize..=3, n in 1usize..=3, k in 2usize..=3, frac in 0.0f64..0.999) {
            let r = frac * m.min(n) as f64;
            let t = d_training(r, m, n, false).unwrap();
            let c = d_constant_power_feedback(r, k, m, n).unwrap();
            let (pc, _) = d_power_controlled_feedback(r, k, m, n).unwrap();
            let perfect = d_perfect_feedback(r, k, m, n).unwrap();
            prop_assert!(t <= c + 1e-9);
            prop_assert!(c <= pc + 1e-9);
            prop_assert!(pc <= perfect + 1e-9);
            let (pc2, _) = d_power_controlled_feedback(r, 2, m, n).unwrap();
            prop_assert!((pc2 - d_training(r, m, n, true).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn saturation_at_zero_rate(m in 1usize..=3, n in 1usize..=3, k in 3usize..=6) {
            let mn = (m * n) as f64;
            let (d, _) = d_power_controlled_feedback(1e-12, k, m, n).unwrap();
            prop_assert!((d - mn * (mn + 2.0)).abs() < 1e-6);
        }

        #[test]
        fn single_user_mac_is_g(m in 1usize..=4, n in 1usize..=4, p in 0.1f64..5.0, frac in 0.0f64..=1.0) {
            let r = frac * p * m.min(n) as f64;
            prop_assert_eq!(mac_tradeoff(&[r], p, m, n).unwrap().diversity, g_tradeoff(r, p, m, n).unwrap());
        }

        #[test]
        fn relaxed_bounds(m in 1usize..=2, n in 1usize..=2, frac in 0.0f64..0.95) {
            let r = frac * m.min(n) as f64;
            let relaxed = d_power_controlled_feedback_relaxed(r, 3, m, n).unwrap();
            let (ordered, _) = d_power_controlled_feedback(r, 3, m, n).unwrap();
            prop_assert!(relaxed >= ordered - 0.05 * (m * n) as f64 - 1e-9);
            prop_assert!(relaxed <= d_perfect_feedback(r, 3, m, n).unwrap() + 1e-9);
        }
    }
}
