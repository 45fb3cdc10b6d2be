//! Multiple-access extension: L symmetric users, one broadcast feedback index,
//! independent reverse-link errors per user and union outage over user subsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{ln_det_identity_plus, mmse_estimate, sample_gaussian, sample_rayleigh, ComplexMatrix};
use crate::dmt::mac_tradeoff;
use crate::engine::{derive_seed, run_batched};
use crate::error::{Error, Result};
use crate::feedback::{feedback_energy, FeedbackPolicy, PowerPolicy, ThresholdRule};
use crate::protocol::{OutageEstimate, OutageTally, MIN_PILOT_TRIALS};

const TAG_PILOT: u64 = 0x6d61_6370;
const TAG_TRIALS: u64 = 0x6d61_6374;
const MAX_USERS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct MacConfig {
    pub l_users: usize,
    pub m: usize,
    pub n: usize,
    pub r_vec: Vec<f64>,
    pub snr: f64,
    pub k_levels: usize,
    pub epsilon: f64,
    pub n_train: usize,
    /// Fold the summed per-user estimation error into the noise at decoding.
    pub fold_estimation_error: bool,
}

impl MacConfig {
    /// Two levels, N = m, ε = 0.05, estimation error folded into the noise.
    pub fn new(m: usize, n: usize, r_vec: Vec<f64>, snr: f64) -> Result<Self> {
        let cfg = Self {
            l_users: r_vec.len(),
            m,
            n,
            r_vec,
            snr,
            k_levels: 2,
            epsilon: 0.05,
            n_train: m,
            fold_estimation_error: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("antenna counts must be at least 1".into()));
        }
        if self.l_users == 0 || self.l_users > MAX_USERS || self.r_vec.len() != self.l_users {
            return Err(Error::Config(format!(
                "need 1..={MAX_USERS} users with one rate each, got {} users and {} rates",
                self.l_users,
                self.r_vec.len()
            )));
        }
        if !(self.snr > 1.0) || !self.snr.is_finite() {
            return Err(Error::Config(format!("snr must exceed 1, got {}", self.snr)));
        }
        if self.k_levels != 2 {
            return Err(Error::Config(format!(
                "the multiple-access protocol uses two levels, got {}",
                self.k_levels
            )));
        }
        if self.n_train < self.m {
            return Err(Error::Config(format!("n_train = {} below m = {}", self.n_train, self.m)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        mac_tradeoff(&self.r_vec, 1.0, self.m, self.n).map(|_| ())
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Result<Self> {
        self.snr = crate::channel::db_to_linear(snr_db);
        self.validate()?;
        Ok(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacPolicies {
    pub power: PowerPolicy,
    pub feedback: FeedbackPolicy,
    /// Π̂(J_R = 1).
    pub pi1: f64,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacTrialRecord {
    pub j_r: usize,
    pub j_t_vec: Vec<usize>,
    pub outage: bool,
    pub powers: Vec<f64>,
    pub fb_power: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MacOverrides {
    pub j_r: Option<usize>,
    /// Per-user forced decoded index; missing entries follow detection.
    pub j_t: Vec<Option<usize>>,
}

/// Union outage: some nonempty subset S has
/// ln det(I + Σ_{i∈S} (P_i/m)·H_i H_i† / inflation) below Σ_{i∈S} r_i·ln SNR.
fn union_outage_inner(grams: &[ComplexMatrix], r_vec: &[f64], p_vec: &[f64], m: usize, snr: f64, inflation: f64) -> bool {
    let l = grams.len();
    let n = grams[0].rows();
    let ln_snr = snr.ln();
    let mut acc = ComplexMatrix::zeros(n, n);
    for mask in 1u32..(1 << l) {
        let mut need = 0.0;
        acc.clone_from(&ComplexMatrix::zeros(n, n));
        for i in (0..l).filter(|i| mask >> i & 1 == 1) {
            need += r_vec[i];
            acc = acc.mix(1.0, &grams[i], p_vec[i] / m as f64).expect("square grams of equal size");
        }
        if ln_det_identity_plus(&acc, 1.0 / inflation) < need * ln_snr {
            return true;
        }
    }
    false
}

pub fn union_outage_check(h_set: &[ComplexMatrix], r_vec: &[f64], p_vec: &[f64], snr: f64) -> Result<bool> {
    union_outage_with_inflation(h_set, r_vec, p_vec, snr, 1.0)
}

pub fn union_outage_with_inflation(
    h_set: &[ComplexMatrix],
    r_vec: &[f64],
    p_vec: &[f64],
    snr: f64,
    inflation: f64,
) -> Result<bool> {
    let Some(first) = h_set.first() else {
        return Err(Error::Dimension("no user channels".into()));
    };
    if r_vec.len() != h_set.len() || p_vec.len() != h_set.len() || h_set.len() > MAX_USERS {
        return Err(Error::Dimension("one rate and one power per user".into()));
    }
    if h_set.iter().any(|h| h.shape() != first.shape()) {
        return Err(Error::Dimension("users must share antenna counts".into()));
    }
    let grams: Vec<ComplexMatrix> = h_set.iter().map(ComplexMatrix::gram).collect();
    Ok(union_outage_inner(&grams, r_vec, p_vec, first.cols(), snr, inflation))
}

/// Per-user decoded index for a common feedback transmission.
///
/// `noise` of `None` models noiseless reverse links.
pub fn broadcast_feedback(
    j_r: usize,
    policy: &FeedbackPolicy,
    h_f: &[ComplexMatrix],
    noise: Option<&[ComplexMatrix]>,
) -> Result<Vec<usize>> {
    let q = policy.powers()[j_r];
    h_f.iter()
        .enumerate()
        .map(|(i, hf)| {
            let energy = match noise {
                Some(w) => feedback_energy(q, hf, &w[i])?,
                None => q * hf.frobenius_sq(),
            };
            Ok(policy.detect(energy))
        })
        .collect()
}

/// Pilot run for Π̂(J_R = 1) and the two-level power construction.
pub fn calibrate_mac(cfg: &MacConfig, rule: ThresholdRule, pilot_trials: usize, seed: u64) -> Result<MacPolicies> {
    cfg.validate()?;
    if pilot_trials < MIN_PILOT_TRIALS {
        return Err(Error::Precondition(format!(
            "pilot_trials = {pilot_trials} below the minimum {MIN_PILOT_TRIALS}"
        )));
    }
    let snr = cfg.snr;
    let p0 = snr / 2.0;
    let margin: Vec<f64> = cfg.r_vec.iter().map(|r| r + cfg.epsilon).collect();
    let p_common = vec![p0; cfg.l_users];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fails = 0usize;
    for _ in 0..pilot_trials {
        let grams: Vec<ComplexMatrix> = (0..cfg.l_users)
            .map(|_| {
                let h = sample_rayleigh(cfg.m, cfg.n, &mut rng);
                mmse_estimate(&h, snr, cfg.n_train, &mut rng).map(|e| e.h_hat.gram())
            })
            .collect::<Result<_>>()?;
        fails += usize::from(union_outage_inner(&grams, &margin, &p_common, cfg.m, snr, 1.0));
    }
    let pi1_raw = fails as f64 / pilot_trials as f64;
    let pi1 = pi1_raw.max(3.0 / pilot_trials as f64);
    let d1 = mac_tradeoff(&cfg.r_vec, 1.0, cfg.m, cfg.n)?.diversity;
    let power = PowerPolicy::from_powers(snr, vec![0.0, d1], vec![p0, (snr / (4.0 * pi1)).max(p0)])?;
    let q = vec![0.0, snr / (2.0 * pi1)];
    let feedback = match rule {
        ThresholdRule::Map => FeedbackPolicy::map_rule(snr, q, &[1.0 - pi1, pi1], cfg.m * cfg.n)?,
        ThresholdRule::Exponent { epsilon } => FeedbackPolicy::exponent_rule(snr, q, epsilon)?,
    };
    Ok(MacPolicies {
        power,
        feedback,
        pi1: pi1_raw,
        low_confidence: fails == 0,
    })
}

pub fn run_mac_trial<R: Rng + ?Sized>(cfg: &MacConfig, policies: &MacPolicies, rng: &mut R) -> MacTrialRecord {
    run_mac_trial_with(cfg, policies, &MacOverrides::default(), rng)
}

pub fn run_mac_trial_with<R: Rng + ?Sized>(
    cfg: &MacConfig,
    policies: &MacPolicies,
    overrides: &MacOverrides,
    rng: &mut R,
) -> MacTrialRecord {
    let (l, m, n, snr) = (cfg.l_users, cfg.m, cfg.n, cfg.snr);
    let powers = policies.power.powers();

    // Phase 1: every user trains at SNR; the receiver tests the margin condition at P₀.
    let channels: Vec<ComplexMatrix> = (0..l).map(|_| sample_rayleigh(m, n, rng)).collect();
    let grams_hat: Vec<ComplexMatrix> = channels
        .iter()
        .map(|h| {
            mmse_estimate(h, snr, cfg.n_train, rng)
                .expect("validated training parameters")
                .h_hat
                .gram()
        })
        .collect();
    let margin: Vec<f64> = cfg.r_vec.iter().map(|r| r + cfg.epsilon).collect();
    let natural_j_r = usize::from(union_outage_inner(&grams_hat, &margin, &vec![powers[0]; l], m, snr, 1.0));
    let j_r = overrides.j_r.unwrap_or(natural_j_r).min(1);

    // Phase 2: one broadcast, decoded independently through each reverse channel.
    let q = policies.feedback.powers()[j_r];
    let j_t_vec: Vec<usize> = (0..l)
        .map(|i| {
            let h_f = sample_rayleigh(n, m, rng);
            let w = sample_gaussian(m, n, rng);
            let detected = policies
                .feedback
                .detect(feedback_energy(q, &h_f, &w).expect("reverse channel and noise share a shape"));
            overrides.j_t.get(i).copied().flatten().unwrap_or(detected).min(1)
        })
        .collect();

    // Phase 3: each user retrains at its own decoded level.
    let user_powers: Vec<f64> = j_t_vec.iter().map(|&j| powers[j]).collect();
    let mut inflation = 1.0;
    let mut grams2 = Vec::with_capacity(l);
    for (h, &p) in channels.iter().zip(&user_powers) {
        let est = mmse_estimate(h, p, cfg.n_train, rng).expect("positive level power").h_hat;
        if cfg.fold_estimation_error {
            let err = h.sub(&est).expect("estimate shares the channel shape");
            inflation += p / (m * n) as f64 * err.frobenius_sq();
        }
        grams2.push(est.gram());
    }
    let outage = union_outage_inner(&grams2, &cfg.r_vec, &user_powers, m, snr, inflation);

    MacTrialRecord {
        j_r,
        j_t_vec,
        outage,
        powers: user_powers,
        fb_power: q,
    }
}

fn record(t: &mut OutageTally, rec: &MacTrialRecord) {
    t.trials += 1;
    t.outages += u64::from(rec.outage);
    t.fwd_power += rec.powers.iter().sum::<f64>() / rec.powers.len() as f64;
    t.fb_power += rec.fb_power;
    t.index_mismatches += u64::from(rec.j_t_vec.iter().any(|&j| j != rec.j_r));
}

pub fn estimate_mac_outage(
    cfg: &MacConfig,
    policies: &MacPolicies,
    overrides: &MacOverrides,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<OutageEstimate> {
    if trials == 0 {
        return Err(Error::Precondition("at least one trial required".into()));
    }
    cfg.validate()?;
    let tally: OutageTally = run_batched(trials, seed, parallelism, |rng, t: &mut OutageTally| {
        record(t, &run_mac_trial_with(cfg, policies, overrides, rng));
    });
    Ok(OutageEstimate::from_tally(cfg.snr, &tally, policies.low_confidence))
}

/// Union outage at full power with perfect receiver CSI and no feedback.
pub fn estimate_mac_no_feedback(cfg: &MacConfig, trials: u64, seed: u64, parallelism: usize) -> Result<OutageEstimate> {
    if trials == 0 {
        return Err(Error::Precondition("at least one trial required".into()));
    }
    cfg.validate()?;
    let p = vec![cfg.snr; cfg.l_users];
    let tally: OutageTally = run_batched(trials, seed, parallelism, |rng, t: &mut OutageTally| {
        let grams: Vec<ComplexMatrix> = (0..cfg.l_users)
            .map(|_| sample_rayleigh(cfg.m, cfg.n, rng).gram())
            .collect();
        let rec = MacTrialRecord {
            j_r: 0,
            j_t_vec: vec![0; cfg.l_users],
            outage: union_outage_inner(&grams, &cfg.r_vec, &p, cfg.m, cfg.snr, 1.0),
            powers: p.clone(),
            fb_power: 0.0,
        };
        record(t, &rec);
    });
    Ok(OutageEstimate::from_tally(cfg.snr, &tally, false))
}

pub fn simulate_mac_point(
    cfg: &MacConfig,
    rule: ThresholdRule,
    pilot_trials: usize,
    trials: u64,
    seed: u64,
    parallelism: usize,
) -> Result<(MacPolicies, OutageEstimate)> {
    let bits = cfg.snr.to_bits();
    let policies = calibrate_mac(cfg, rule, pilot_trials, derive_seed(seed, &[TAG_PILOT, bits]))?;
    let est = estimate_mac_outage(
        cfg,
        &policies,
        &MacOverrides::default(),
        trials,
        derive_seed(seed, &[TAG_TRIALS, bits]),
        parallelism,
    )?;
    Ok((policies, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::mutual_information;
    use proptest::prelude::*;

    #[test]
    fn single_user_reduces_to_link_outage() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let snr = 100.0;
        for _ in 0..2_000 {
            let h = sample_rayleigh(1, 2, &mut rng);
            let link = mutual_information(&h, snr) < 0.6 * snr.log2();
            assert_eq!(union_outage_check(&[h], &[0.6], &[snr], snr).unwrap(), link);
        }
    }

    #[test]
    fn zero_channel_user_forces_outage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let good = sample_rayleigh(1, 2, &mut rng).scale(100.0);
        let dead = ComplexMatrix::zeros(2, 1);
        assert!(union_outage_check(&[good, dead], &[0.1, 0.2], &[1e3, 1e3], 1e3).unwrap());
    }

    #[test]
    fn concatenated_channel_form_agrees() {
        // Σ_i (P/m) H_i H_i† equals (P/m) H_S H_S† for a common power.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let snr = 300.0;
        for _ in 0..500 {
            let hs: Vec<ComplexMatrix> = (0..2).map(|_| sample_rayleigh(1, 2, &mut rng)).collect();
            let stacked = ComplexMatrix::hstack(&[&hs[0], &hs[1]]).unwrap();
            let joint = crate::channel::ln_det_identity_plus(&stacked.gram(), snr) / std::f64::consts::LN_2
                < 0.6 * snr.log2();
            let singles = hs.iter().any(|h| mutual_information(h, snr) < 0.3 * snr.log2());
            assert_eq!(
                union_outage_check(&hs, &[0.3, 0.3], &[snr, snr], snr).unwrap(),
                joint || singles
            );
        }
    }

    #[test]
    fn identical_noiseless_reverse_links_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let snr = 1e3;
        let policy = FeedbackPolicy::map_rule(snr, vec![0.0, snr * 10.0], &[0.99, 0.01], 2).unwrap();
        for _ in 0..2_000 {
            let hf = sample_rayleigh(2, 1, &mut rng);
            for j_r in 0..2 {
                let out = broadcast_feedback(j_r, &policy, &[hf.clone(), hf.clone(), hf.clone()], None).unwrap();
                assert!(out.iter().all(|&j| j == out[0]));
                let expect = usize::from(policy.powers()[j_r] * hf.frobenius_sq() > policy.thresholds()[0]);
                assert_eq!(out[0], expect);
                if j_r == 0 {
                    assert_eq!(out[0], 0);
                }
            }
        }
    }

    #[test]
    fn cross_user_mismatch_dominates() {
        // Same draws, user 0 pinned to the low level: outage given J_R = 1 jumps.
        let cfg = MacConfig::new(1, 2, vec![0.3, 0.3], 100.0).unwrap();
        let pol = calibrate_mac(&cfg, ThresholdRule::Map, 20_000, 1).unwrap();
        let pinned = MacOverrides {
            j_r: None,
            j_t: vec![Some(0), None],
        };
        let (mut a, mut b) = (ChaCha8Rng::seed_from_u64(9), ChaCha8Rng::seed_from_u64(9));
        let (mut ones, mut bad, mut good) = (0u32, 0u32, 0u32);
        for _ in 0..100_000 {
            let x = run_mac_trial_with(&cfg, &pol, &pinned, &mut a);
            let y = run_mac_trial(&cfg, &pol, &mut b);
            assert_eq!(x.j_r, y.j_r);
            if y.j_r == 1 {
                ones += 1;
                bad += u32::from(x.outage);
                good += u32::from(y.outage);
            }
        }
        assert!(ones > 100, "{ones}");
        assert!(bad > 3 * good, "{bad} vs {good} of {ones}");
    }

    #[test]
    fn ample_channels_and_correct_indices_avoid_outage() {
        let cfg = MacConfig::new(1, 2, vec![0.2, 0.2], 1e4).unwrap();
        let pol = calibrate_mac(&cfg, ThresholdRule::Map, 20_000, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..20_000 {
            let rec = run_mac_trial(&cfg, &pol, &mut rng);
            if rec.j_r == 0 && rec.j_t_vec.iter().all(|&j| j == 0) {
                checked += 1;
                // The margin at P₀ leaves room for the retraining loss.
                if rec.outage {
                    panic!("outage despite clearing the margin");
                }
            }
        }
        assert!(checked > 15_000);
    }

    #[test]
    fn config_rejects_infeasible_rates() {
        assert!(matches!(
            MacConfig::new(1, 2, vec![0.9, 0.9, 0.9], 100.0),
            Err(Error::SubsetRate { .. })
        ));
        let mut cfg = MacConfig::new(1, 2, vec![0.3], 100.0).unwrap();
        cfg.k_levels = 3;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn adding_a_zero_rate_user_never_removes_outage(seed in any::<u64>(), r in 0.0f64..0.9, snr_db in 5.0f64..30.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let snr = 10f64.powf(snr_db / 10.0);
            let a = sample_rayleigh(1, 2, &mut rng);
            let b = sample_rayleigh(1, 2, &mut rng);
            let alone = union_outage_check(&[a.clone()], &[r], &[snr], snr).unwrap();
            let both = union_outage_check(&[a, b], &[r, 0.0], &[snr, snr], snr).unwrap();
            prop_assert!(!alone || both);
        }
    }
}
