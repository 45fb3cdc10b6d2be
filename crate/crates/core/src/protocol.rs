//! End-to-end trials for every CSI scenario, pilot-based power calibration,
//! outage estimation and diversity-slope fitting.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    effective_mutual_information, hermitian_eigenvalues, ln_det_identity_plus, mmse_estimate,
    sample_rayleigh, ComplexMatrix, MimoConfig,
};
use crate::dmt::{constant_power_levels, g_tradeoff, perfect_feedback_levels};
use crate::engine::{derive_seed, run_batched, Tally};
use crate::error::{Error, Result};
use crate::feedback::{
    constant_power_error_probability, first_sufficient, transmit_feedback_constant_power,
    transmit_feedback_power_controlled, FeedbackPolicy, PowerPolicy, ThresholdRule,
};
use crate::stats::{linear_fit, wilson_interval, SlopeFit};

pub const MIN_PILOT_TRIALS: usize = 10_000;
pub const DEFAULT_PILOT_TRIALS: usize = 200_000;

const TAG_PILOT: u64 = 0x7069_6c6f_74;
const TAG_TRIALS: u64 = 0x7472_6961_6c;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    NoFeedback,
    PerfectCsirNoiselessFb,
    PerfectCsirNoisyFbConst,
    PerfectCsirNoisyFbPc,
    EstCsirNoiselessFbConstTrain,
    EstCsirNoiselessFbPcTrain,
    /// Power-controlled training and feedback (two levels).
    EstCsirNoisyFbPc,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::NoFeedback,
        Scenario::PerfectCsirNoiselessFb,
        Scenario::PerfectCsirNoisyFbConst,
        Scenario::PerfectCsirNoisyFbPc,
        Scenario::EstCsirNoiselessFbConstTrain,
        Scenario::EstCsirNoiselessFbPcTrain,
        Scenario::EstCsirNoisyFbPc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoFeedback => "NO_FEEDBACK",
            Scenario::PerfectCsirNoiselessFb => "PERFECT_CSIR_NOISELESS_FB",
            Scenario::PerfectCsirNoisyFbConst => "PERFECT_CSIR_NOISY_FB_CONST",
            Scenario::PerfectCsirNoisyFbPc => "PERFECT_CSIR_NOISY_FB_PC",
            Scenario::EstCsirNoiselessFbConstTrain => "EST_CSIR_NOISELESS_FB_CONST_TRAIN",
            Scenario::EstCsirNoiselessFbPcTrain => "EST_CSIR_NOISELESS_FB_PC_TRAIN",
            Scenario::EstCsirNoisyFbPc => "EST_CSIR_NOISY_FB_PC",
        }
    }

    pub fn estimated_csir(self) -> bool {
        matches!(
            self,
            Scenario::EstCsirNoiselessFbConstTrain
                | Scenario::EstCsirNoiselessFbPcTrain
                | Scenario::EstCsirNoisyFbPc
        )
    }

    pub fn default_empty_index(self) -> EmptySetIndex {
        if self.estimated_csir() {
            EmptySetIndex::Highest
        } else {
            EmptySetIndex::Lowest
        }
    }

    fn id(self) -> u64 {
        Scenario::ALL.iter().position(|&s| s == self).unwrap_or(0) as u64
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

/// Index assigned when no level satisfies the receiver's condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmptySetIndex {
    Lowest,
    Highest,
}

/// Protocol knobs that sit outside the link description.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolOptions {
    pub threshold_rule: ThresholdRule,
    /// Constant c of the c·SNR^{−mn} reverse-link error model.
    pub const_fb_c: f64,
    pub empty_index: Option<EmptySetIndex>,
    pub pilot_trials: usize,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            threshold_rule: ThresholdRule::Map,
            const_fb_c: 1.0,
            empty_index: None,
            pilot_trials: DEFAULT_PILOT_TRIALS,
        }
    }
}

/// Calibrated forward and reverse power policies plus pilot diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Policies {
    pub scenario: Scenario,
    pub power: PowerPolicy,
    pub feedback: Option<FeedbackPolicy>,
    /// Π̂(J_R = i) under the calibrated powers.
    pub pi_hat: Vec<f64>,
    /// Π̂(condition fails at P_i) for i = 0..K−2.
    pub fail_hat: Vec<f64>,
    pub low_confidence: bool,
    pub const_fb_c: f64,
    /// Per-wrong-index error probability of the constant-power reverse link.
    pub const_fb_error: f64,
    pub empty_index: usize,
    pub pilot_trials: usize,
}

fn levels_for(scenario: Scenario, cfg: &MimoConfig) -> Result<usize> {
    match scenario {
        Scenario::NoFeedback => Ok(1),
        Scenario::EstCsirNoisyFbPc if cfg.k_levels != 2 => Err(Error::Config(format!(
            "{scenario} is defined for two feedback levels, got {}",
            cfg.k_levels
        ))),
        _ => Ok(cfg.k_levels),
    }
}

/// Spectra of the channels the receiver uses for its index, one per pilot draw.
struct PilotSpectra {
    k: usize,
    eig: Vec<f64>,
}

impl PilotSpectra {
    fn draw(scenario: Scenario, cfg: &MimoConfig, trials: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let k = cfg.m.min(cfg.n);
        let mut eig = Vec::with_capacity(trials * k);
        for _ in 0..trials {
            let h = sample_rayleigh(cfg.m, cfg.n, rng);
            let seen = if scenario.estimated_csir() {
                mmse_estimate(&h, cfg.snr, cfg.n_train, rng)?.h_hat
            } else {
                h
            };
            eig.extend(hermitian_eigenvalues(&seen.compact_gram()));
        }
        Ok(Self { k, eig })
    }

    fn len(&self) -> usize {
        self.eig.len() / self.k
    }

    fn bits(&self, t: usize, c: f64) -> f64 {
        self.eig[t * self.k..(t + 1) * self.k]
            .iter()
            .map(|l| (c * l.max(0.0)).ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    }

    fn fail_fraction(&self, power: f64, m: usize, threshold: f64) -> f64 {
        let c = power / m as f64;
        let fails = (0..self.len()).filter(|&t| self.bits(t, c) < threshold).count();
        fails as f64 / self.len() as f64
    }

    fn index_distribution(&self, powers: &[f64], m: usize, threshold: f64, empty: usize) -> Vec<f64> {
        let mut counts = vec![0usize; powers.len()];
        for t in 0..self.len() {
            let idx = powers
                .iter()
                .position(|&p| self.bits(t, p / m as f64) >= threshold)
                .unwrap_or(empty);
            counts[idx] += 1;
        }
        counts.iter().map(|&c| c as f64 / self.len() as f64).collect()
    }
}

/// Sets the power levels for `scenario` from a pilot run.
///
/// General K follows P₀ = SNR/K, P_i = SNR/(K·Π̂_{i−1}) with Π̂_{i−1} the pilot
/// probability that level i−1 is insufficient (floored at 3/pilot_trials). The
/// two-level main protocol uses P₀ = SNR/2, P₁ = SNR/(4π̂₁), Q₁ = SNR/(2π̂₁).
pub fn calibrate_power_levels(
    scenario: Scenario,
    cfg: &MimoConfig,
    opts: &ProtocolOptions,
    seed: u64,
) -> Result<Policies> {
    cfg.validate()?;
    if opts.pilot_trials < MIN_PILOT_TRIALS {
        return Err(Error::Precondition(format!(
            "pilot_trials = {} below the minimum {MIN_PILOT_TRIALS}",
            opts.pilot_trials
        )));
    }
    let k = levels_for(scenario, cfg)?;
    let (m, n, snr) = (cfg.m, cfg.n, cfg.snr);
    let mn = (m * n) as f64;
    let empty = match opts.empty_index.unwrap_or(scenario.default_empty_index()) {
        EmptySetIndex::Lowest => 0,
        EmptySetIndex::Highest => k - 1,
    };
    let threshold = if scenario.estimated_csir() {
        cfg.rate() + cfg.epsilon * snr.log2()
    } else {
        cfg.rate()
    };

    if scenario == Scenario::NoFeedback {
        return Ok(Policies {
            scenario,
            power: PowerPolicy::constant(snr),
            feedback: None,
            pi_hat: vec![1.0],
            fail_hat: Vec::new(),
            low_confidence: false,
            const_fb_c: opts.const_fb_c,
            const_fb_error: 0.0,
            empty_index: 0,
            pilot_trials: opts.pilot_trials,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pilot = PilotSpectra::draw(scenario, cfg, opts.pilot_trials, &mut rng)?;
    let floor = 3.0 / opts.pilot_trials as f64;
    let const_fb_error = if scenario == Scenario::PerfectCsirNoisyFbConst {
        constant_power_error_probability(k, snr, m, n, opts.const_fb_c)
    } else {
        0.0
    };

    let main = scenario == Scenario::EstCsirNoisyFbPc;
    let kf = k as f64;
    let mut powers = vec![if main { snr / 2.0 } else { snr / kf }];
    let mut fail_hat = Vec::with_capacity(k - 1);
    let mut low_confidence = false;
    for i in 1..k {
        let fail = pilot.fail_fraction(powers[i - 1], m, threshold);
        fail_hat.push(fail);
        if fail == 0.0 {
            low_confidence = true;
        }
        let f = fail.max(floor);
        let p = if main { snr / (4.0 * f) } else { snr / (kf * (f + const_fb_error)) };
        powers.push(p.max(powers[i - 1]));
    }

    let nominal: Vec<f64> = match scenario {
        Scenario::EstCsirNoisyFbPc => vec![0.0, g_tradeoff(cfg.r, 1.0, m, n)?],
        Scenario::PerfectCsirNoisyFbConst => constant_power_levels(cfg.r, k - 1, m, n)?
            .into_iter()
            .map(|b| b.min(mn))
            .collect(),
        _ => perfect_feedback_levels(cfg.r, k - 1, m, n)?,
    };
    let power = PowerPolicy::from_powers(snr, nominal, powers.clone())?;
    let pi_hat = pilot.index_distribution(&powers, m, threshold, empty);

    let feedback = match scenario {
        Scenario::PerfectCsirNoisyFbPc | Scenario::EstCsirNoisyFbPc => {
            let mut q = vec![0.0];
            for (j, &fail) in fail_hat.iter().enumerate() {
                let f = fail.max(floor);
                let level = if main { snr / (2.0 * f) } else { snr / (kf * f) };
                let prev: f64 = q[j];
                q.push(level.max(prev * (1.0 + 1e-9) + f64::MIN_POSITIVE));
            }
            Some(match opts.threshold_rule {
                ThresholdRule::Map => {
                    let priors: Vec<f64> = pi_hat.iter().map(|p| p.max(floor)).collect();
                    FeedbackPolicy::map_rule(snr, q, &priors, m * n)?
                }
                ThresholdRule::Exponent { epsilon } => FeedbackPolicy::exponent_rule(snr, q, epsilon)?,
            })
        }
        _ => None,
    };

    Ok(Policies {
        scenario,
        power,
        feedback,
        pi_hat,
        fail_hat,
        low_confidence,
        const_fb_c: opts.const_fb_c,
        const_fb_error,
        empty_index: empty,
        pilot_trials: opts.pilot_trials,
    })
}

/// Outcome of one fading block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    /// Index chosen from the true channel without margin.
    pub j_oracle: usize,
    pub j_r: usize,
    pub j_t: usize,
    pub outage: bool,
    pub fwd_power_used: f64,
    pub fb_power_used: f64,
}

/// Forces indices in a trial, for tracing specific error events.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrialOverrides {
    pub j_r: Option<usize>,
    pub j_t: Option<usize>,
}

pub fn run_trial<R: Rng + ?Sized>(
    scenario: Scenario,
    cfg: &MimoConfig,
    policies: &Policies,
    rng: &mut R,
) -> TrialRecord {
    run_trial_with(scenario, cfg, policies, TrialOverrides::default(), rng)
}

pub fn run_trial_with<R: Rng + ?Sized>(
    scenario: Scenario,
    cfg: &MimoConfig,
    policies: &Policies,
    overrides: TrialOverrides,
    rng: &mut R,
) -> TrialRecord {
    let (m, n, snr) = (cfg.m, cfg.n, cfg.snr);
    let rate = cfg.rate();
    let target = rate * std::f64::consts::LN_2;
    let powers = policies.power.powers();
    let k = powers.len();

    // Phase 1: channel draw, optional training, receiver index.
    let h = sample_rayleigh(m, n, rng);
    let gram = h.compact_gram();
    let j_oracle = first_sufficient(&gram, m, powers, rate).unwrap_or(0);
    let h_hat = if scenario.estimated_csir() {
        Some(mmse_estimate(&h, snr, cfg.n_train, rng).expect("validated training parameters").h_hat)
    } else {
        None
    };
    let natural_j_r = match &h_hat {
        Some(est) => first_sufficient(&est.compact_gram(), m, powers, rate + cfg.epsilon * snr.log2())
            .unwrap_or(policies.empty_index),
        None => first_sufficient(&gram, m, powers, rate).unwrap_or(policies.empty_index),
    };
    let j_r = overrides.j_r.unwrap_or(natural_j_r).min(k - 1);

    // Phase 2: feedback transport.
    let (natural_j_t, fb_power) = match scenario {
        Scenario::NoFeedback => (0, 0.0),
        Scenario::PerfectCsirNoiselessFb
        | Scenario::EstCsirNoiselessFbConstTrain
        | Scenario::EstCsirNoiselessFbPcTrain => (j_r, 0.0),
        Scenario::PerfectCsirNoisyFbConst => (
            transmit_feedback_constant_power(j_r, k, snr, m, n, policies.const_fb_c, rng),
            snr,
        ),
        Scenario::PerfectCsirNoisyFbPc | Scenario::EstCsirNoisyFbPc => {
            let policy = policies.feedback.as_ref().expect("calibrated feedback policy");
            let h_f = sample_rayleigh(n, m, rng);
            let out = transmit_feedback_power_controlled(j_r, policy, &h_f, rng);
            (out.j_t, out.tx_power)
        }
    };
    let j_t = overrides.j_t.unwrap_or(natural_j_t).min(k - 1);
    let p = powers[j_t];

    // Phase 3: decoding at the transmitted power.
    let outage = match scenario {
        Scenario::NoFeedback
        | Scenario::PerfectCsirNoiselessFb
        | Scenario::PerfectCsirNoisyFbConst
        | Scenario::PerfectCsirNoisyFbPc => ln_det_identity_plus(&gram, p / m as f64) < target,
        Scenario::EstCsirNoiselessFbConstTrain => {
            let est = h_hat.as_ref().expect("estimated-CSIR trial");
            effective_outage(est, &h, p, cfg, rate)
        }
        Scenario::EstCsirNoiselessFbPcTrain | Scenario::EstCsirNoisyFbPc => {
            let est = mmse_estimate(&h, p, cfg.n_train, rng).expect("positive level power").h_hat;
            effective_outage(&est, &h, p, cfg, rate)
        }
    };

    TrialRecord {
        j_oracle,
        j_r,
        j_t,
        outage,
        fwd_power_used: p,
        fb_power_used: fb_power,
    }
}

fn effective_outage(est: &ComplexMatrix, h: &ComplexMatrix, p: f64, cfg: &MimoConfig, rate: f64) -> bool {
    let err = h.sub(est).expect("estimate shares the channel shape");
    effective_mutual_information(est, &err, p, cfg.m, cfg.n) < rate
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutageTally {
    pub trials: u64,
    pub outages: u64,
    pub fwd_power: f64,
    pub fb_power: f64,
    pub index_mismatches: u64,
}

impl OutageTally {
    pub fn record(&mut self, t: &TrialRecord) {
        self.trials += 1;
        self.outages += u64::from(t.outage);
        self.fwd_power += t.fwd_power_used;
        self.fb_power += t.fb_power_used;
        self.index_mismatches += u64::from(t.j_t != t.j_r);
    }
}

impl Tally for OutageTally {
    fn merge(&mut self, o: Self) {
        self.trials += o.trials;
        self.outages += o.outages;
        self.fwd_power += o.fwd_power;
        self.fb_power += o.fb_power;
        self.index_mismatches += o.index_mismatches;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutageEstimate {
    pub snr: f64,
    pub trials: u64,
    pub outages: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_fwd_power: f64,
    pub mean_fb_power: f64,
    pub index_mismatches: u64,
    pub low_confidence: bool,
}

impl OutageEstimate {
    pub fn from_tally(snr: f64, t: &OutageTally, low_confidence: bool) -> Self {
        let n = t.trials.max(1) as f64;
        let (ci_low, ci_high) = wilson_interval(t.outages, t.trials);
        Self {
            snr,
            trials: t.trials,
            outages: t.outages,
            p_hat: t.outages as f64 / n,
            ci_low,
            ci_high,
            mean_fwd_power: t.fwd_power / n,
            mean_fb_power: t.fb_power / n,
            index_mismatches: t.index_mismatches,
            low_confidence,
        }
    }
}

/// Aggregates `trials` independent runs of `run_trial`.
pub fn estimate_outage(
    scenario: Scenario,
    cfg: &MimoConfig,
    policies: &Policies,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<OutageEstimate> {
    estimate_outage_with(scenario, cfg, policies, TrialOverrides::default(), trials, seed, parallelism)
}

pub fn estimate_outage_with(
    scenario: Scenario,
    cfg: &MimoConfig,
    policies: &Policies,
    overrides: TrialOverrides,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<OutageEstimate> {
    if trials == 0 {
        return Err(Error::Precondition("at least one trial required".into()));
    }
    cfg.validate()?;
    let tally: OutageTally = run_batched(trials, seed, parallelism, |rng, t: &mut OutageTally| {
        t.record(&run_trial_with(scenario, cfg, policies, overrides, rng));
    });
    Ok(OutageEstimate::from_tally(cfg.snr, &tally, policies.low_confidence))
}

/// Calibration and estimation at one operating point, seeded from `seed`.
pub fn simulate_point(
    scenario: Scenario,
    cfg: &MimoConfig,
    opts: &ProtocolOptions,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<(Policies, OutageEstimate)> {
    let point = [scenario.id(), cfg.snr.to_bits()];
    let policies = calibrate_power_levels(
        scenario,
        cfg,
        opts,
        derive_seed(seed, &[TAG_PILOT, point[0], point[1]]),
    )?;
    let est = estimate_outage(
        scenario,
        cfg,
        &policies,
        trials,
        derive_seed(seed, &[TAG_TRIALS, point[0], point[1]]),
        parallelism,
    )?;
    Ok((policies, est))
}

/// Least-squares slope of −log₁₀ p̂ against log₁₀ SNR.
pub fn estimate_diversity_slope(points: &[OutageEstimate]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints(points.len()));
    }
    for p in points {
        if p.outages == 0 {
            return Err(Error::ZeroOutages { snr: p.snr });
        }
        if p.outages < 10 {
            return Err(Error::TooFewOutages {
                snr: p.snr,
                outages: p.outages,
            });
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.snr.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| -p.p_hat.log10()).collect();
    linear_fit(&xs, &ys)
}
