use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("singular point: kernel evaluated at the origin")]
    SingularPoint,
    #[error("refinement out of range: {0} (maximum 7)")]
    RefinementOutOfRange(u32),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("resolvent singular: lambda = {lambda} (sign {sign}), rcond estimate {rcond:.3e}")]
    ResolventSingular {
        lambda: num_complex::Complex64,
        sign: char,
        rcond: f64,
    },
    #[error("point too close to surface: distance {dist:.3e} < {min_dist:.3e}")]
    PointTooClose { dist: f64, min_dist: f64 },
    #[error("evaluation inside or near the core surface")]
    InsideCore,
    #[error("invalid harmonic indices: n = {n}, m = {m}")]
    InvalidHarmonic { n: i64, m: i64 },
    #[error("direction is not a unit vector: |x| = {0}")]
    NotUnit(f64),
    #[error("pole evaluation: direction within {0:.1e} of the coordinate poles")]
    PoleEvaluation(f64),
    #[error("expansion requires |x| > |y|: |x| = {x}, |y| = {y}")]
    RadiusOrder { x: f64, y: f64 },
    #[error("insufficient grid order: need n_theta >= {need}, have {have}")]
    InsufficientGridOrder { need: usize, have: usize },
    #[error("invalid medium or anomaly parameters: {0}")]
    InvalidParams(String),
    #[error("background vanishes at anomaly center {0:?}")]
    BackgroundVanishes([f64; 3]),
    #[error("moment vanishes - background may vanish at center or P singular")]
    MomentVanishes,
    #[error("shape assumption violated: recovered moment not parallel to background")]
    ShapeAssumption,
    #[error("permeability unidentifiable at this moment value")]
    Unidentifiable,
    #[error("rank-deficient multipole fit at degree {degree}: condition {cond:.3e}")]
    RankDeficientFit { degree: usize, cond: f64 },
    #[error("no convergent start out of {0} multistart attempts")]
    NoConvergentStart(usize),
    #[error("scenario invariant violated: {0}")]
    ScenarioInvariant(String),
    #[error("negative noise level: {0}")]
    NegativeNoise(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed operator file: {0}")]
    MalformedOperator(String),
    #[error("malformed samples file: {0}")]
    MalformedSamples(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
