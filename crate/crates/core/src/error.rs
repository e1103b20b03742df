use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is singular (pivot {pivot:e} below threshold)")]
    SingularMatrix { pivot: f64 },
    #[error("matrix rows are numerically dependent")]
    RankDeficientRows,
    #[error("matrix columns are numerically dependent")]
    RankDeficientColumns,
    #[error("spectrum is complex or has repeated eigenvalues")]
    ComplexOrRepeatedSpectrum,
    #[error("function returned a non-finite value")]
    NonFiniteEvaluation,
    #[error("loop-closure geometry is infeasible for these parameters")]
    InfeasibleGeometry,
    #[error("end-effector position ({0}, {1}) is out of reach")]
    OutOfReach(f64, f64),
    #[error("constraint Gram matrix is singular")]
    GramSingular,
    #[error("high-gain matrix is singular")]
    GammaSingular,
    #[error("internal dynamics denominator 2 - 3 cos(eta1) vanishes")]
    DenominatorSingular,
    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },
    #[error("collocation grid needs at least 20 intervals, got {0}")]
    BadGrid(usize),
    #[error("funnel violated at t = {t} in stage {stage}")]
    FunnelViolation { t: f64, stage: &'static str },
    #[error("constraint saddle-point system is singular")]
    SaddleSingular,
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("scenario: {0}")]
    Config(String),
    #[error("unknown model '{0}'")]
    UnknownModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;
