//! Receiver index selection, power-controlled feedback over the reverse link
//! and energy-threshold detection at the transmitter.

use rand::Rng;

use crate::channel::{sample_gaussian, ComplexMatrix};
use crate::error::{Error, Result};

/// Forward power levels P_i = c_i·SNR^{1+p_i}.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerPolicy {
    snr: f64,
    exponents: Vec<f64>,
    scales: Vec<f64>,
    powers: Vec<f64>,
}

impl PowerPolicy {
    pub fn from_exponents(snr: f64, exponents: Vec<f64>, scales: Vec<f64>) -> Result<Self> {
        if exponents.len() != scales.len() {
            return Err(Error::Dimension("one scale per exponent".into()));
        }
        let powers = exponents
            .iter()
            .zip(&scales)
            .map(|(p, c)| c * snr.powf(1.0 + p))
            .collect();
        Self::checked(snr, exponents, scales, powers)
    }

    /// Keeps the realized powers and backs out the scales from nominal exponents.
    pub fn from_powers(snr: f64, exponents: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if exponents.len() != powers.len() {
            return Err(Error::Dimension("one power per exponent".into()));
        }
        let scales = exponents
            .iter()
            .zip(&powers)
            .map(|(p, pw)| pw / snr.powf(1.0 + p))
            .collect();
        Self::checked(snr, exponents, scales, powers)
    }

    /// A single level at full power, i.e. no adaptation.
    pub fn constant(snr: f64) -> Self {
        Self {
            snr,
            exponents: vec![0.0],
            scales: vec![1.0],
            powers: vec![snr],
        }
    }

    fn checked(snr: f64, exponents: Vec<f64>, scales: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::TooFewLevels { required: 1, got: 0 });
        }
        if exponents.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(Error::Precondition("power exponents must be nondecreasing".into()));
        }
        if powers.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::Precondition("powers must be positive and finite".into()));
        }
        Ok(Self {
            snr,
            exponents,
            scales,
            powers,
        })
    }

    pub fn levels(&self) -> usize {
        self.powers.len()
    }

    pub fn power(&self, i: usize) -> f64 {
        self.powers[i]
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }
}

/// How the transmitter places its energy thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdRule {
    /// τ_i = SNR^{max(q_i,0)+ε}.
    Exponent { epsilon: f64 },
    /// Pairwise MAP boundary between neighbouring energy levels.
    Map,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Map
    }
}

/// Reverse-link power levels Q_i = SNR^{q_i} and detection thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackPolicy {
    snr: f64,
    powers: Vec<f64>,
    q: Vec<f64>,
    thresholds: Vec<f64>,
    rule: ThresholdRule,
}

impl FeedbackPolicy {
    /// Thresholds from the exponent formula; `powers[0]` may be zero.
    pub fn exponent_rule(snr: f64, powers: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("feedback epsilon must be positive, got {epsilon}")));
        }
        let q = Self::check_powers(snr, &powers)?;
        let thresholds = q[..q.len() - 1]
            .iter()
            .map(|qi| snr.powf(qi.max(0.0) + epsilon))
            .collect();
        Self::checked(snr, powers, q, thresholds, ThresholdRule::Exponent { epsilon })
    }

    /// MAP thresholds between neighbouring levels for the statistic
    /// S_f ~ Gamma(shape, Q_i + 1) with prior weights `priors`.
    pub fn map_rule(snr: f64, powers: Vec<f64>, priors: &[f64], shape: usize) -> Result<Self> {
        let q = Self::check_powers(snr, &powers)?;
        if priors.len() != powers.len() {
            return Err(Error::Dimension("one prior per feedback level".into()));
        }
        let k = shape as f64;
        let mut thresholds: Vec<f64> = Vec::with_capacity(powers.len() - 1);
        for i in 0..powers.len() - 1 {
            let (t0, t1) = (powers[i] + 1.0, powers[i + 1] + 1.0);
            let (a, b) = (priors[i].max(f64::MIN_POSITIVE), priors[i + 1].max(f64::MIN_POSITIVE));
            let tau = ((a / b).ln() + k * (t1 / t0).ln()) / (1.0 / t0 - 1.0 / t1);
            let floor = thresholds.last().map_or(0.0, |&prev: &f64| prev * (1.0 + 1e-9) + 1e-12);
            thresholds.push(tau.max(floor));
        }
        Self::checked(snr, powers, q, thresholds, ThresholdRule::Map)
    }

    fn check_powers(snr: f64, powers: &[f64]) -> Result<Vec<f64>> {
        if powers.len() < 2 {
            return Err(Error::TooFewLevels { required: 2, got: powers.len() });
        }
        if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Precondition("feedback powers must be finite and nonnegative".into()));
        }
        if powers.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("feedback powers must increase strictly".into()));
        }
        Ok(powers.iter().map(|p| p.ln() / snr.ln()).collect())
    }

    fn checked(snr: f64, powers: Vec<f64>, q: Vec<f64>, thresholds: Vec<f64>, rule: ThresholdRule) -> Result<Self> {
        if thresholds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("detection thresholds must increase strictly".into()));
        }
        Ok(Self {
            snr,
            powers,
            q,
            thresholds,
            rule,
        })
    }

    pub fn levels(&self) -> usize {
        self.powers.len()
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Realized exponents ln Q_i / ln SNR; −∞ for a silent level.
    pub fn exponents(&self) -> &[f64] {
        &self.q
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn rule(&self) -> ThresholdRule {
        self.rule
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    /// Number of thresholds strictly below `energy`.
    pub fn detect(&self, energy: f64) -> usize {
        self.thresholds.partition_point(|&t| t < energy)
    }
}

/// Indices known at each end of the reverse link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackOutcome {
    pub j_r: usize,
    pub j_t: usize,
    pub energy: f64,
    pub tx_power: f64,
}

/// Smallest index whose power supports `threshold` bits; `None` when none does.
///
/// `gram` is the compact Gram of the channel and `m` its transmit dimension.
pub(crate) fn first_sufficient(gram: &ComplexMatrix, m: usize, powers: &[f64], threshold: f64) -> Option<usize> {
    let target = threshold * std::f64::consts::LN_2;
    powers
        .iter()
        .position(|&p| p > 0.0 && crate::channel::ln_det_identity_plus(gram, p / m as f64) >= target)
}

pub fn receiver_index_perfect_csir(h: &ComplexMatrix, powers: &PowerPolicy, rate: f64) -> usize {
    first_sufficient(&h.compact_gram(), h.cols(), powers.powers(), rate).unwrap_or(0)
}

pub fn receiver_index_estimated_csir(
    h_hat: &ComplexMatrix,
    powers: &PowerPolicy,
    rate: f64,
    epsilon: f64,
    snr: f64,
) -> usize {
    let threshold = rate + epsilon * snr.log2();
    first_sufficient(&h_hat.compact_gram(), h_hat.cols(), powers.powers(), threshold)
        .unwrap_or(powers.levels() - 1)
}

/// Received energy when `q` is spent on each of the reverse-link uses.
///
/// The receiver cycles over its n antennas, one channel use each, so the
/// transmitter collects ‖√Q·H_f + W‖²_F with H_f the m×n reverse channel.
pub fn feedback_energy(q: f64, h_f: &ComplexMatrix, w: &ComplexMatrix) -> Result<f64> {
    Ok(h_f.mix(q.sqrt(), w, 1.0)?.frobenius_sq())
}

pub fn transmit_feedback_power_controlled<R: Rng + ?Sized>(
    j_r: usize,
    policy: &FeedbackPolicy,
    h_f: &ComplexMatrix,
    rng: &mut R,
) -> FeedbackOutcome {
    let q = policy.powers()[j_r];
    let w = sample_gaussian(h_f.rows(), h_f.cols(), rng);
    let energy = feedback_energy(q, h_f, &w).expect("noise drawn with the channel shape");
    FeedbackOutcome {
        j_r,
        j_t: policy.detect(energy),
        energy,
        tx_power: q,
    }
}

/// Per-wrong-index error probability c·SNR^{−mn}, capped at 1/K.
pub fn constant_power_error_probability(k: usize, snr: f64, m: usize, n: usize, c: f64) -> f64 {
    (c * snr.powf(-((m * n) as f64))).clamp(0.0, 1.0 / k as f64)
}

pub fn transmit_feedback_constant_power<R: Rng + ?Sized>(
    j_r: usize,
    k: usize,
    snr: f64,
    m: usize,
    n: usize,
    c: f64,
    rng: &mut R,
) -> usize {
    let e = constant_power_error_probability(k, snr, m, n, c);
    let u: f64 = rng.random();
    if k < 2 || u >= e * (k - 1) as f64 {
        return j_r;
    }
    // u / e is uniform over the K−1 wrong indices.
    let wrong = ((u / e) as usize).min(k - 2);
    if wrong >= j_r {
        wrong + 1
    } else {
        wrong
    }
}
