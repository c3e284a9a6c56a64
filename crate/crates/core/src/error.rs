use core::fmt;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A Hadamard order (or rotated dimension) is zero or not a power of two.
    NotPowerOfTwo(usize),
    /// Operand shapes do not agree.
    DimensionMismatch {
        /// Which operation detected the mismatch.
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Buffer length does not match `rows * cols`.
    BadShape { rows: usize, cols: usize, len: usize },
    /// An input contained NaN or an infinity.
    NonFiniteInput,
    /// Quantization granularity is not valid for the tensor or target.
    GranularityMismatch(&'static str),
    /// Bit width outside `2..=16`.
    InvalidBits(u32),
    /// Two vectors that must have equal length do not.
    LengthMismatch { left: usize, right: usize },
    /// The projected point lies on or behind the camera plane.
    BehindCamera { depth: f64 },
    /// The projected pixel lies outside the image.
    OutOfFrame { u: f64, v: f64 },
    /// Requested more top-k indices than there are scores.
    KTooLarge { k: usize, len: usize },
    /// Requested more farthest-point samples than candidates.
    MTooLarge { m: usize, candidates: usize },
    /// The protected ring does not fit into the retained-token budget.
    BudgetTooSmall { ring: usize, retain: usize },
    /// A configuration value is out of range.
    InvalidConfig(&'static str),
    /// Bit-operation count does not fit in 128 bits.
    Overflow,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPowerOfTwo(n) => write!(f, "{n} is not a power of two"),
            Error::DimensionMismatch { op, expected, found } => write!(
                f,
                "{op}: dimension mismatch, expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::BadShape { rows, cols, len } => {
                write!(f, "buffer of length {len} cannot hold a {rows}x{cols} matrix")
            }
            Error::NonFiniteInput => f.write_str("input contains a non-finite value"),
            Error::GranularityMismatch(why) => write!(f, "granularity mismatch: {why}"),
            Error::InvalidBits(b) => write!(f, "bit width {b} outside 2..=16"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::BehindCamera { depth } => {
                write!(f, "point is behind the camera (depth {depth})")
            }
            Error::OutOfFrame { u, v } => write!(f, "pixel ({u}, {v}) is outside the image"),
            Error::KTooLarge { k, len } => write!(f, "k = {k} exceeds vector length {len}"),
            Error::MTooLarge { m, candidates } => {
                write!(f, "m = {m} exceeds the {candidates} available candidates")
            }
            Error::BudgetTooSmall { ring, retain } => write!(
                f,
                "protected ring of {ring} tokens exceeds the retain budget of {retain}"
            ),
            Error::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
            Error::Overflow => f.write_str("bit-operation count overflowed 128 bits"),
        }
    }
}

impl core::error::Error for Error {}
