use thiserror::Error;

/// Errors raised by the laboratory primitives.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sampled expression is not finite at cell {index} (x = {point:?})")]
    NonFiniteSample { index: usize, point: Vec<f64> },

    #[error("shift {shift:?} is not an integer multiple of the grid spacing {spacing}")]
    MisalignedShift { shift: Vec<f64>, spacing: f64 },

    #[error("ball B({center:?}, {radius}) contains no cell center of the grid")]
    EmptyBall { center: Vec<f64>, radius: f64 },

    #[error("functions live on different grids")]
    GridMismatch,

    #[error("slot subset must be nonempty")]
    EmptySubset,

    #[error("configuration touches the diagonal (sum of distances = {0})")]
    DegenerateConfiguration(f64),

    #[error("perturbation violates the constraint: |delta| = {delta} > {limit}")]
    ConstraintViolated { delta: f64, limit: f64 },

    #[error("lambda must exceed 1, got {0}")]
    LambdaTooSmall(f64),

    #[error("truncation radius {delta} is below twice the grid spacing ({min})")]
    DiagonalUnderResolved { delta: f64, min: f64 },

    #[error("index set references symbol {0}, which is not in the symbol set")]
    MissingSymbol(u32),

    #[error("index set has {0} pairs; subset enumeration is limited to 8")]
    SetTooLarge(usize),

    #[error("maximal function vanishes at the requested point {0:?}")]
    ZeroMaximal(Vec<f64>),

    #[error("radius {radius} does not fit inside the grid box of half width {half_width}")]
    RadiusOutsideBox { radius: f64, half_width: f64 },

    #[error("shift length {shift} exceeds half the truncation radius ({limit})")]
    ShiftTooLarge { shift: f64, limit: f64 },

    #[error("input {slot} has zero norm; ratio undefined")]
    ZeroDenominator { slot: usize },

    #[error("negative value {value} at cell {index}; nonnegative functions required")]
    NegativeValues { index: usize, value: f64 },

    #[error("mollification error {error} is not below epsilon {epsilon}; shrink t")]
    MollificationTooCoarse { error: f64, epsilon: f64 },

    #[error("tail norm {tail} beyond radius {radius} is not below epsilon {epsilon}")]
    TailTooHeavy {
        tail: f64,
        radius: f64,
        epsilon: f64,
    },

    #[error("malformed sampled-function file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
