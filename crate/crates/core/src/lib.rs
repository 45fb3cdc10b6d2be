//! Diversity–multiplexing tradeoff laboratory for MIMO links with quantized,
//! power-controlled feedback and pilot-based channel estimation.
//!
//! The analytic side ([`dmt`]) evaluates every tradeoff curve exactly. The
//! simulation side ([`protocol`], [`mac`], [`exponents`]) runs deterministic
//! Monte Carlo over Rayleigh fading and fits outage slopes.

pub mod channel;
pub mod cli;
pub mod dmt;
pub mod engine;
pub mod error;
pub mod exponents;
pub mod feedback;
pub mod mac;
pub mod protocol;
pub mod stats;

pub use channel::{
    effective_mutual_information, eigen_exponents, mmse_estimate, mutual_information,
    sample_rayleigh, ComplexMatrix, EstimateResult, ExponentVector, MimoConfig,
};
pub use dmt::{
    d_constant_power_feedback, d_perfect_feedback, d_power_controlled_feedback,
    d_power_controlled_feedback_relaxed, d_training, g_tradeoff, mac_main_tradeoff, mac_tradeoff,
    DmtCurve, FeedbackExponents, MacTradeoff,
};
pub use error::{Error, Result};
pub use feedback::{FeedbackOutcome, FeedbackPolicy, PowerPolicy, ThresholdRule};
pub use protocol::{
    calibrate_power_levels, estimate_diversity_slope, estimate_outage, run_trial, simulate_point,
    OutageEstimate, Policies, ProtocolOptions, Scenario, TrialRecord,
};
