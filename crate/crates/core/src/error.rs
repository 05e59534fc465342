use thiserror::Error;

/// Errors produced by model construction, validation and the experiment
/// drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// The supplied coefficient or rate functions violate a structural
    /// requirement (non-finite value, negative rate, dimension mismatch).
    #[error("model definition error: {0}")]
    ModelDefinition(String),

    /// A rate evaluation returned a negative value.
    #[error("negative switching rate q[{from}->{to}] = {rate} at x = {x:?}")]
    NegativeRate {
        from: usize,
        to: usize,
        rate: f64,
        x: Vec<f64>,
    },

    /// The requested operation is not defined for this model (e.g. the
    /// jump-count series on a regime without a Gaussian kernel, or a
    /// measure-change run whose band does not match the auxiliary chain).
    #[error("unsupported model: {0}")]
    Unsupported(String),

    /// Invalid run or experiment configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An estimate could not be formed (all-zero weights, empty sample).
    #[error("degenerate estimate: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
