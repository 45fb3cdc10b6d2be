use dmtlab_core::channel::{db_to_linear, MimoConfig};
use dmtlab_core::feedback::ThresholdRule;
use dmtlab_core::mac::{estimate_mac_no_feedback, simulate_mac_point, MacConfig};
use dmtlab_core::protocol::{estimate_diversity_slope, simulate_point, ProtocolOptions, Scenario};

#[test]
fn single_user_matches_point_to_point_protocol() {
    for db in [10.0, 15.0] {
        let snr = db_to_linear(db);
        let mac = MacConfig::new(1, 2, vec![0.5], snr).unwrap();
        let (_, a) = simulate_mac_point(&mac, ThresholdRule::Map, 100_000, 100_000, 1, 1).unwrap();
        let link = MimoConfig::new(1, 2, snr, 0.5).unwrap();
        let opts = ProtocolOptions {
            pilot_trials: 100_000,
            ..ProtocolOptions::default()
        };
        let (_, b) = simulate_point(Scenario::EstCsirNoisyFbPc, &link, &opts, 100_000, 2, 1).unwrap();
        assert!(a.ci_low <= b.ci_high && b.ci_low <= a.ci_high, "{db} dB: {a:?} vs {b:?}");
    }
}

#[test]
fn extra_zero_rate_user_never_lowers_outage() {
    let snr = db_to_linear(10.0);
    let one = MacConfig::new(1, 2, vec![0.3], snr).unwrap();
    let two = MacConfig::new(1, 2, vec![0.3, 0.0], snr).unwrap();
    let a = estimate_mac_no_feedback(&one, 200_000, 4, 1).unwrap();
    let b = estimate_mac_no_feedback(&two, 200_000, 4, 1).unwrap();
    assert!(b.outages >= a.outages, "{} vs {}", b.outages, a.outages);
}

/// Desk-scale slope check for two users; the all-zero rate vector has no outage
/// at all, so small equal rates stand in for it.
#[test]
#[ignore = "10^7 trials per point; run with --ignored"]
fn two_user_slope_beats_single_user_no_feedback() {
    let grid = [15.0, 20.0, 25.0];
    let trials = 10_000_000;
    let mut mac = Vec::new();
    let mut single = Vec::new();
    for db in grid {
        let snr = db_to_linear(db);
        let cfg = MacConfig::new(1, 2, vec![0.1, 0.1], snr).unwrap();
        mac.push(simulate_mac_point(&cfg, ThresholdRule::Map, 200_000, trials, 7, 1).unwrap().1);
        let one = MimoConfig::new(1, 2, snr, 0.1).unwrap();
        single.push(simulate_point(Scenario::NoFeedback, &one, &ProtocolOptions::default(), trials, 8, 1).unwrap().1);
    }
    let s_mac = estimate_diversity_slope(&mac).unwrap().slope;
    let s_one = estimate_diversity_slope(&single).unwrap().slope;
    println!("two-user slope {s_mac:.4}, single-user no-feedback slope {s_one:.4}");
    assert!(s_mac >= 1.5 * s_one, "{s_mac} vs {s_one}");
}
