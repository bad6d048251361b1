use thiserror::Error;

use crate::run_expectancy::BaseOutState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("base-out state {0} never visited")]
    UnvisitedState(BaseOutState),
    #[error("season mismatch: transition is from {transition}, matrix is for {matrix}")]
    SeasonMismatch { transition: i32, matrix: i32 },
    #[error("invalid run expectancy matrix: {0}")]
    InvalidMatrix(String),

    #[error("hit coordinates missing")]
    MissingCoordinates,
    #[error("hit coordinates lie behind home plate (hc_y = {0})")]
    InvalidCoordinates(f64),
    #[error("no rows survived the exclusion cascade")]
    EmptyAfterExclusion,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("positivity violation: unit {unit} has treatment probability {prob:.3e} outside ({eps:e}, 1 - {eps:e})")]
    PositivityViolation { unit: usize, prob: f64, eps: f64 },

    #[error("only one treatment class present")]
    OneClass,
    #[error("complete or quasi-complete separation (max |coef| = {0:.1})")]
    Separation(f64),
    #[error("singular design: column `{0}` is collinear with earlier columns")]
    SingularDesign(String),
    #[error("covariate vector has {got} entries, model manifest has {expected}")]
    ManifestMismatch { expected: usize, got: usize },
    #[error("logistic fit did not converge in {0} iterations")]
    NoConvergence(usize),

    #[error("degenerate odds weight: control row {row} has propensity {prob}")]
    DegenerateWeights { row: usize, prob: f64 },
    #[error("interval ({lower}, {upper}) does not contain estimate {estimate}")]
    InvalidInterval { estimate: f64, lower: f64, upper: f64 },
    #[error("every bootstrap resample was degenerate ({0} skipped)")]
    AllResamplesDegenerate(usize),
    #[error("resample lost a treatment arm")]
    ResampleDegenerate,
    #[error("matched set is empty")]
    EmptyMatchedSet,

    #[error("stratum {0} has no treatment or instrument variation")]
    NoVariation(String),
    #[error("no stratum is usable for IV estimation")]
    AllStrataUnusable,

    #[error("dataset schema: {0}")]
    Schema(String),
    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
