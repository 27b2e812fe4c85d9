use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid branching rate: {0}")]
    InvalidRate(String),

    #[error("no negative principal eigenvalue: {0}")]
    NoNegativeEigenvalue(String),

    #[error("degenerate principal root at k = {k} (next eigen-branch at {next})")]
    DegenerateRoot { k: f64, next: f64 },

    #[error("direction set is empty")]
    EmptyDirections,

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("rejection sampler gave up after {cap} proposals ({context})")]
    RejectionCap { cap: usize, context: &'static str },

    #[error(
        "explosion cap: population exceeded {cap} particles before t = {t}; \
         E[N_t] = E_x[exp(A_t^((Q-1)mu))] grows like exp(-lambda t), so rescale t or raise the cap"
    )]
    ExplosionCap { cap: usize, t: f64 },

    #[error("replica {replica}: {source}")]
    Replica {
        replica: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("memo grid: {0}")]
    MemoResolution(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
