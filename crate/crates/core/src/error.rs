use std::path::PathBuf;

/// Errors raised by parameter validation, synthesis and the estimators.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),

    #[error("guard ordering violated: need tgi >= tmix > 0 and t > tmix (tgi={tgi}, tmix={tmix}, t={t})")]
    GuardOrder { tgi: f64, tmix: f64, t: f64 },

    #[error("bandwidth {bandwidth} Hz does not match alphabet/duration {expected} Hz (relative error {relative:.3e})")]
    BandwidthMismatch {
        bandwidth: f64,
        expected: f64,
        relative: f64,
    },

    #[error("{symbols} symbols cannot be split evenly over {antennas} transmit antennas")]
    ScheduleIndivisible { symbols: usize, antennas: usize },

    #[error("{what}: requested {requested} samples but the grid only holds {available}")]
    SamplingOverrun {
        what: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("demodulation bin offset (fbar - B) * H / B = {0} is not an integer")]
    BinOffsetNonInteger(f64),

    #[error("communication sampling rate {fbar} Hz is below the sweep bandwidth {bandwidth} Hz")]
    CommRateBelowBandwidth { fbar: f64, bandwidth: f64 },

    #[error("hit threshold {threshold} m is not below the maximum range {max_range} m")]
    DegenerateRangeGrid { threshold: f64, max_range: f64 },

    #[error("alphabet must hold at least two symbols, got {0}")]
    DegenerateAlphabet(usize),

    #[error("symbol index {index} outside alphabet of size {alphabet}")]
    SymbolOutOfRange { index: usize, alphabet: usize },

    #[error("time {time} s lies outside the payload window [0, {payload})")]
    TimeOutOfRange { time: f64, payload: f64 },

    #[error("target delay {delay} s does not fit in the mixing guard {guard} s")]
    DelayExceedsGuard { delay: f64, guard: f64 },

    #[error("invalid interval [{lo}, {hi}] for {what}")]
    InvalidInterval {
        what: &'static str,
        lo: f64,
        hi: f64,
    },

    #[error("cannot draw {count} indices from a grid of {base}")]
    CountExceedsBase { count: usize, base: usize },

    #[error("index set is not strictly increasing or exceeds its base")]
    MalformedIndexSet,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sparse estimate supports only {available} rows, {requested} requested")]
    InsufficientSupport { requested: usize, available: usize },

    #[error("missing per-pair estimate for antenna pair {0}")]
    MissingPairEstimate(usize),

    #[error("reduced alphabet size {0} is not a power of two")]
    ReducedAlphabetNotPowerOfTwo(f64),

    #[error("invalid experiment configuration: {0}")]
    Config(String),

    #[error("failed to parse configuration {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
