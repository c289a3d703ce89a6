use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: endpoints must be finite with lo < hi")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid warp (a = {a}, b = {b}): dilation must be finite and positive")]
    InvalidWarp { a: f64, b: f64 },

    #[error("invalid curve `{id}`: {reason}")]
    InvalidCurve { id: String, reason: String },

    #[error("warp of curve `{id}` leaves fewer than 2 valid grid points")]
    DegenerateWarp { id: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("curves are not sampled on the same grid")]
    GridMismatch,

    #[error("curves have {left} and {right} codomain dimensions")]
    DimensionMismatch { left: usize, right: usize },

    #[error("domains of `{left}` and `{right}` overlap on fewer than 2 grid points")]
    EmptyIntersection { left: String, right: String },

    #[error("curve `{id}` has zero H1 semi-norm on the evaluation domain")]
    DegenerateSimilarity { id: String },

    #[error("curve `{id}` has {found} valid points in dimension {dim}, need at least {needed}")]
    TooFewPoints {
        id: String,
        dim: usize,
        found: usize,
        needed: usize,
    },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error(
        "sparse mode needs K >= 2: with a single group the weight function is not defined \
         (use --mode kma for pure alignment)"
    )]
    SingleClusterSparse,

    #[error("curve domains differ; use the pairwise criterion")]
    DomainsDiffer,

    #[error("criterion is non-positive everywhere: no region separates the clusters")]
    DegenerateCriterion,

    #[error("sparsity fraction {m} leaves no grid point in the support")]
    EmptySupport { m: f64 },

    #[error("cluster {cluster}: no grid point is observed by at least {min_count} members")]
    NoTemplateSupport { cluster: usize, min_count: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{context}: {source}")]
    Context {
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
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
