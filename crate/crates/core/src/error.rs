use thiserror::Error;

/// Errors raised anywhere in the assessment stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible operating point: {0}")]
    InfeasibleOperatingPoint(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("near-singular evaluation at s = {re} + {im}j (distance {distance:.3e} to eigenvalue)")]
    NearSingularEvaluation { re: f64, im: f64, distance: f64 },

    #[error("interconnection assembly failed: {0}")]
    Assembly(String),

    #[error("near resonance at omega = {omega} rad/s (condition number {condition:.3e})")]
    NearResonance { omega: f64, condition: f64 },

    #[error("unidentifiable record set: {0}")]
    Unidentifiable(String),

    #[error("numerical conditioning: {0}")]
    Conditioning(String),

    #[error("unknown mode {re} + {im}j: no matching pole")]
    UnknownMode { re: f64, im: f64 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("insufficient data: {observations} observations for {coefficients} coefficients (need 3x)")]
    InsufficientData {
        observations: usize,
        coefficients: usize,
    },

    #[error("invalid surrogate: {0}")]
    InvalidSurrogate(String),

    #[error("surrogate evaluation singularity: denominator {0:.3e}")]
    EvaluationSingularity(f64),

    #[error("over-constrained attack set: feasible fraction {fraction:.3} below 0.5; review stealth thresholds")]
    OverConstrained { fraction: f64 },

    #[error("infeasible start: {0}")]
    InfeasibleStart(String),

    #[error("surrogate domain error: {0}")]
    SurrogateDomain(String),

    #[error("baseline already unstable: Re(lambda0) = {0}")]
    BaselineUnstable(f64),

    #[error("component singularity in {0}")]
    ComponentSingularity(String),

    #[error("invalid system description: {0}")]
    InvalidSystem(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a pipeline stage label.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, stripping stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
