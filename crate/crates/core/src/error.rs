use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("p must lie strictly between 0 and 1, got {0}")]
    RejectP(String),
    #[error("stage {stage}: {which} = {value} must be an odd integer >= 3")]
    RejectParity {
        stage: usize,
        which: &'static str,
        value: u64,
    },
    #[error("stage {stage}: construction rectangle height would be {height} (must stay positive)")]
    RejectHeight { stage: usize, height: String },
    #[error("epsilon must be positive, got {0}")]
    RejectEps(String),
    #[error("a schedule needs at least one stage")]
    NoStages,
    #[error("step {step} is outside the configured steps 1..={max}")]
    OutOfRange { step: u64, max: u64 },
    #[error("requested level {requested} exceeds the configured maximum {max}")]
    DepthExceeded { requested: u64, max: u64 },
    #[error("level-{level} cell overlaps several regions: {detail}")]
    Straddle { level: u32, detail: String },
    #[error("weight w_{step} is not constant on level-{level} cell (col {col}, row {row})")]
    Unaligned {
        step: u64,
        level: u32,
        col: u64,
        row: u64,
    },
    #[error("cells live on different levels ({0} vs {1})")]
    LevelMismatch(u32, u32),
    #[error("cells {0} and {1} are not adjacent")]
    NotAdjacent(String, String),
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
    #[error("exhaustive sweep needs {needed} visits, limit is {limit}")]
    SweepTooLarge { needed: u128, limit: u128 },
    #[error("enclosure width {width} exceeds tolerance {tolerance} at level cap {cap}")]
    CapTooCoarse {
        width: String,
        tolerance: String,
        cap: u32,
    },
    #[error("cannot parse rational from {0:?}")]
    ParseRat(String),
}
