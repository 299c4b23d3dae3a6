use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Pauli string: {0}")]
    InvalidPauli(String),

    #[error("site {site} outside chain of length {len}")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("{len} sites exceeds the dense limit of {limit}")]
    TooLarge { len: usize, limit: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("half-chain entropy needs an even number of sites, got {0}")]
    OddLength(usize),

    #[error("Hamiltonian does not conserve the parity charge")]
    NotParitySymmetric,

    #[error("requested {requested} eigenstates but the sector has dimension {dim}")]
    TooManyStates { requested: usize, dim: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("correlation length fit failed: {0}")]
    CorrelationFit(String),

    #[error("state cache of {needed} bytes exceeds the cap of {cap} bytes")]
    CacheTooLarge { needed: usize, cap: usize },

    #[error("initial state and target live in different symmetry sectors: {0}")]
    SectorMismatch(String),

    #[error("metric solve failed: {0}")]
    Solve(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}
