use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("function value is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("matrix is not primitive (no positive power up to exponent {max_power})")]
    NotPrimitive { max_power: usize },
    #[error("word space too large: {count} words exceeds the cap {cap}")]
    DepthOverflow { count: u128, cap: u128 },
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("child count mismatch in band {word}: expected {expected}, found {found}")]
    ChildCountMismatch {
        word: String,
        expected: usize,
        found: usize,
    },
    #[error("length bound violated for band {word}: {detail}")]
    BoundViolation { word: String, detail: String },
    #[error("inadmissible word: {0}")]
    InadmissibleWord(String),
    #[error("order {order} is not above the prefix length {prefix_len}")]
    OrderTooSmall { order: usize, prefix_len: usize },
    #[error("matrix dimension {size} exceeds the cap {cap}")]
    CapExceeded { size: u128, cap: u128 },
    #[error("depth mismatch: {0}")]
    DepthMismatch(String),
    #[error("band missing from tree: {0}")]
    MissingBand(String),
    #[error("no Moran root in [0, 1]: sum at s=0 is {at_zero}, at s=1 is {at_one}")]
    NoRootInUnitInterval { at_zero: f64, at_one: f64 },
    #[error("q grid too coarse: adjacent slopes differ by {jump} at q = {q}")]
    GridTooCoarse { q: f64, jump: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
