//! Joint SNR-exponent statistics of a channel and its MMSE estimate.

use rand::Rng;

use crate::channel::{eigen_exponents, mmse_estimate, sample_rayleigh, ExponentVector};
use crate::engine::{run_batched, Tally};
use crate::error::{Error, Result};
use crate::stats::{linear_fit, wilson_interval, SlopeFit};

pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct JointExponentSample {
    pub alpha: ExponentVector,
    pub alpha_hat: ExponentVector,
    pub snr: f64,
    pub rho: f64,
}

/// Draws H, trains at power `snr` and returns both exponent vectors.
pub fn joint_exponent_sample<R: Rng + ?Sized>(
    m: usize,
    n: usize,
    snr: f64,
    n_train: usize,
    rng: &mut R,
) -> Result<JointExponentSample> {
    let h = sample_rayleigh(m, n, rng);
    let est = mmse_estimate(&h, snr, n_train, rng)?;
    Ok(JointExponentSample {
        alpha: eigen_exponents(&h, snr),
        alpha_hat: eigen_exponents(&est.h_hat, snr),
        snr,
        rho: est.rho,
    })
}

#[derive(Default)]
struct Samples(Vec<JointExponentSample>);

impl Tally for Samples {
    fn merge(&mut self, mut other: Self) {
        self.0.append(&mut other.0);
    }
}

fn check_sampling(m: usize, n: usize, snr: f64, n_train: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Config("antenna counts must be at least 1".into()));
    }
    if snr < 1e3 {
        return Err(Error::Precondition(format!("snr {snr} below 10^3 resolves exponents poorly")));
    }
    if n_train < m {
        return Err(Error::Config(format!("n_train = {n_train} below m = {m}")));
    }
    Ok(())
}

pub fn sample_joint_exponents(
    m: usize,
    n: usize,
    snr: f64,
    n_train: usize,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<Vec<JointExponentSample>> {
    check_sampling(m, n, snr, n_train)?;
    if trials < 10_000 {
        return Err(Error::Precondition(format!("{trials} trials, at least 10^4 required")));
    }
    let out: Samples = run_batched(trials, seed, parallelism, |rng, acc: &mut Samples| {
        acc.0.push(joint_exponent_sample(m, n, snr, n_train, rng).expect("validated inputs"));
    });
    Ok(out.0)
}

/// Event class E_k or the boundary band between classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventClass {
    Class(usize),
    Boundary,
}

/// Largest k such that the first k pairs sit at or above 1 − δ and the rest
/// agree within δ below 1 + δ.
pub fn classify_event(sample: &JointExponentSample, delta: f64) -> Result<EventClass> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Precondition(format!("delta {delta} outside (0, 0.5)")));
    }
    let (a, b) = (sample.alpha.alphas(), sample.alpha_hat.alphas());
    if a.len() != b.len() {
        return Err(Error::Dimension("exponent vectors differ in length".into()));
    }
    let mut head = 0;
    while head < a.len() && a[head].min(b[head]) >= 1.0 - delta {
        head += 1;
    }
    for k in (0..=head).rev() {
        let tail_ok = (k..a.len()).all(|i| (a[i] - b[i]).abs() < delta && a[i].max(b[i]) < 1.0 + delta);
        if tail_ok {
            return Ok(EventClass::Class(k));
        }
    }
    Ok(EventClass::Boundary)
}

/// Box in (α, α̂) space inside one class E_k.
///
/// `alpha[i]` bounds α_{i+1} for every i; `alpha_hat[i]` bounds α̂_{i+1} for
/// i < k. Beyond k the estimate must match α within `tie_delta` and lie in
/// the same box.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    k: usize,
    alpha: Vec<(f64, f64)>,
    alpha_hat: Vec<(f64, f64)>,
    tie_delta: f64,
}

impl Region {
    pub fn new(k: usize, alpha: Vec<(f64, f64)>, alpha_hat: Vec<(f64, f64)>, tie_delta: f64) -> Result<Self> {
        if k > alpha.len() || alpha_hat.len() != k {
            return Err(Error::Dimension(format!(
                "class {k} needs {k} estimate boxes and at least {k} channel boxes"
            )));
        }
        if !(tie_delta > 0.0) {
            return Err(Error::Precondition("tie band must be positive".into()));
        }
        for (i, &(lo, hi)) in alpha.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::Precondition(format!("empty box for alpha_{}", i + 1)));
            }
            let ok = if i < k { lo >= 1.0 } else { lo >= 0.0 && hi < 1.0 };
            if !ok {
                return Err(Error::RegionStraddlesClasses(format!(
                    "alpha_{} box [{lo}, {hi}] leaves E_{k}",
                    i + 1
                )));
            }
        }
        for (i, &(lo, hi)) in alpha_hat.iter().enumerate() {
            if !(lo <= hi) || lo < 1.0 {
                return Err(Error::RegionStraddlesClasses(format!(
                    "estimate box {} [{lo}, {hi}] leaves E_{k}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            k,
            alpha,
            alpha_hat,
            tie_delta,
        })
    }

    /// Default box for E_k with min(m, n) exponents.
    pub fn canonical(k: usize, m: usize, n: usize) -> Result<Self> {
        let dims = m.min(n);
        if k > dims {
            return Err(Error::Precondition(format!("class {k} exceeds min(m, n) = {dims}")));
        }
        let head = |i: usize| {
            let lo = 1.0 + 0.3 * (k - 1 - i) as f64;
            (lo, lo + 0.2)
        };
        let tail_len = dims - k;
        let s = if tail_len == 0 { 0.3 } else { (0.6 / tail_len as f64).min(0.3) };
        let tail = |t: usize| {
            let hi = 0.6 - s * t as f64;
            (hi - s * 2.0 / 3.0, hi)
        };
        let alpha = (0..dims).map(|i| if i < k { head(i) } else { tail(i - k) }).collect();
        let alpha_hat = (0..k).map(head).collect();
        Self::new(k, alpha, alpha_hat, DEFAULT_DELTA)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn id(&self) -> String {
        format!("E{}", self.k)
    }

    pub fn contains(&self, sample: &JointExponentSample) -> bool {
        let (a, b) = (sample.alpha.alphas(), sample.alpha_hat.alphas());
        if a.len() != self.alpha.len() || b.len() != a.len() {
            return false;
        }
        let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo && x <= hi;
        (0..a.len()).all(|i| {
            if i < self.k {
                inside(a[i], self.alpha[i]) && inside(b[i], self.alpha_hat[i])
            } else {
                inside(a[i], self.alpha[i])
                    && inside(b[i], self.alpha[i])
                    && (a[i] - b[i]).abs() < self.tie_delta
            }
        })
    }

    /// Minimum over the region of Σ(2i−1+ν)α_i + Σ_{i≤k}(2i−1+ν)α̂_i − k(ν+k)
    /// subject to descending order. Weights are positive, so the minimizer is
    /// the lower box corners lifted by the order constraints.
    pub fn predicted_exponent(&self, m: usize, n: usize) -> f64 {
        let nu = m.abs_diff(n) as f64;
        let w: Vec<f64> = (0..self.alpha.len()).map(|i| (2 * i + 1) as f64 + nu).collect();
        let k = self.k;
        let Some((alpha_cost, alpha_pts)) = lift(&self.alpha, &w, f64::NEG_INFINITY) else {
            return f64::INFINITY;
        };
        let floor = alpha_pts.get(k).copied().unwrap_or(f64::NEG_INFINITY);
        let Some((hat_cost, _)) = lift(&self.alpha_hat, &w[..k], floor) else {
            return f64::INFINITY;
        };
        alpha_cost + hat_cost - k as f64 * (nu + k as f64)
    }
}

/// Cheapest descending point in the boxes with every coordinate ≥ `floor`.
fn lift(boxes: &[(f64, f64)], w: &[f64], floor: f64) -> Option<(f64, Vec<f64>)> {
    let mut pts = vec![0.0; boxes.len()];
    let mut below = floor;
    for i in (0..boxes.len()).rev() {
        let x = boxes[i].0.max(below);
        if x > boxes[i].1 + 1e-12 {
            return None;
        }
        pts[i] = x;
        below = x;
    }
    Some((pts.iter().zip(w).map(|(x, w)| x * w).sum(), pts))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HitTally {
    pub trials: u64,
    pub hits: u64,
}

impl Tally for HitTally {
    fn merge(&mut self, o: Self) {
        self.trials += o.trials;
        self.hits += o.hits;
    }
}

/// Empirical probability of a region at one SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionPoint {
    pub snr: f64,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn region_probability(
    m: usize,
    n: usize,
    snr: f64,
    n_train: usize,
    region: &Region,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<RegionPoint> {
    check_sampling(m, n, snr, n_train)?;
    if region.alpha.len() != m.min(n) {
        return Err(Error::Dimension("region dimension differs from min(m, n)".into()));
    }
    let t: HitTally = run_batched(trials, seed, parallelism, |rng, t: &mut HitTally| {
        let s = joint_exponent_sample(m, n, snr, n_train, rng).expect("validated inputs");
        t.trials += 1;
        t.hits += u64::from(region.contains(&s));
    });
    let (ci_low, ci_high) = wilson_interval(t.hits, t.trials);
    Ok(RegionPoint {
        snr,
        trials: t.trials,
        hits: t.hits,
        p_hat: t.hits as f64 / t.trials.max(1) as f64,
        ci_low,
        ci_high,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionExponent {
    pub fit: SlopeFit,
    pub predicted: f64,
    pub points: Vec<RegionPoint>,
}

#[allow(clippy::too_many_arguments)]
pub fn empirical_event_exponent(
    m: usize,
    n: usize,
    snr_grid: &[f64],
    n_train: usize,
    region: &Region,
    trials_per_snr: u64,
    seed: u64,
    parallelism: usize,
) -> Result<RegionExponent> {
    if snr_grid.len() < 3 {
        return Err(Error::TooFewPoints(snr_grid.len()));
    }
    let points = snr_grid
        .iter()
        .enumerate()
        .map(|(i, &snr)| {
            let s = crate::engine::derive_seed(seed, &[i as u64, snr.to_bits()]);
            region_probability(m, n, snr, n_train, region, trials_per_snr, s, parallelism)
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(p) = points.iter().find(|p| p.hits == 0) {
        return Err(Error::ZeroOutages { snr: p.snr });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.snr.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| -p.p_hat.log10()).collect();
    Ok(RegionExponent {
        fit: linear_fit(&xs, &ys)?,
        predicted: region.predicted_exponent(m, n),
        points,
    })
}
