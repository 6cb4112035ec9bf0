//! Crate-wide error type.

use std::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors reported by the model, solvers and simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Sensing duration is not strictly smaller than the slot duration.
    InvalidTiming { slot_s: f64, sensing_s: f64 },
    /// A parameter fell outside its admissible range.
    InvalidParameter { what: String, value: f64 },
    /// An index addressed a band or user that does not exist.
    IndexOutOfBounds { what: &'static str, index: usize, len: usize },
    /// The primary queue on `band` is not stable, so its availability is undefined.
    PrimaryUnstable { band: usize, arrival: f64, service: f64 },
    /// A real primary cannot operate on a zero-bandwidth band.
    VirtualBandPrimary { band: usize },
    /// Matrix or vector dimensions do not agree.
    DimensionMismatch(String),
    /// An assignment matrix violated its row/column sum constraints.
    ConstraintViolation(String),
    /// Counting or enumeration exceeded the configured limit.
    EnumerationLimit { count: u128, limit: u128 },
    /// An assignment count does not fit in 128 bits.
    CountOverflow { num_bands: usize, num_sus: usize },
    /// The decomposition could not make progress; the residual mass is attached.
    DecompositionFailure { residual: f64 },
    /// A fixed assignment mapped two users to the same band.
    NonInjectiveAssignment,
    /// The simulated horizon is too short for a verdict.
    HorizonTooShort { horizon: usize, min: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidTiming { slot_s, sensing_s } => write!(
                f,
                "sensing duration {sensing_s} s must be strictly less than the slot duration {slot_s} s"
            ),
            Self::InvalidParameter { what, value } => {
                write!(f, "invalid {what}: {value}")
            }
            Self::IndexOutOfBounds { what, index, len } => {
                write!(f, "{what} index {index} out of bounds (len {len})")
            }
            Self::PrimaryUnstable { band, arrival, service } => write!(
                f,
                "primary queue on band {band} is unstable (arrival {arrival} >= service {service}); availability undefined"
            ),
            Self::VirtualBandPrimary { band } => {
                write!(f, "band {band} has zero bandwidth; a real primary cannot own a virtual band")
            }
            Self::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Self::ConstraintViolation(msg) => write!(f, "constraint violation: {msg}"),
            Self::EnumerationLimit { count, limit } => {
                write!(f, "enumeration of {count} assignments exceeds the limit {limit}")
            }
            Self::CountOverflow { num_bands, num_sus } => write!(
                f,
                "assignment count for {num_bands} bands and {num_sus} users overflows 128 bits"
            ),
            Self::DecompositionFailure { residual } => write!(
                f,
                "no perfect matching on the positive support (residual mass {residual:.3e})"
            ),
            Self::NonInjectiveAssignment => {
                write!(f, "fixed assignment maps two users to the same band")
            }
            Self::HorizonTooShort { horizon, min } => {
                write!(f, "horizon {horizon} too short for a stability verdict (need >= {min})")
            }
        }
    }
}

impl std::error::Error for Error {}
