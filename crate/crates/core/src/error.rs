use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("multiplexing gain {r} outside the admissible range [0, {max}]")]
    MultiplexingOutOfRange { r: f64, max: f64 },

    #[error("power exponent must be positive, got {0}")]
    NonPositivePower(f64),

    #[error("at least {required} feedback levels required, got {got}")]
    TooFewLevels { required: usize, got: usize },

    #[error("training power must be positive, got {0}")]
    NonPositiveTrainingPower(f64),

    #[error("subset {subset:?} has rate sum {sum} above its limit {limit}")]
    SubsetRate {
        subset: Vec<usize>,
        sum: f64,
        limit: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("slope fit needs at least 3 points, got {0}")]
    TooFewPoints(usize),

    #[error("point at snr {snr} has zero outages and cannot enter the regression")]
    ZeroOutages { snr: f64 },

    #[error("point at snr {snr} has {outages} outages, at least 10 required")]
    TooFewOutages { snr: f64, outages: u64 },

    #[error("region does not lie strictly inside a single event class: {0}")]
    RegionStraddlesClasses(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
