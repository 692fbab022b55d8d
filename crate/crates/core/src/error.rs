use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("label {label} outside 1..={num_labels}")]
    InvalidLabel { label: usize, num_labels: usize },

    #[error("domain mismatch: expected {expected}, got {actual}")]
    DomainMismatch { expected: String, actual: String },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("filter is not in G(Ω): (χ_Ω ∗ g)({pixel}) = {value} is not positive")]
    NotPositiveNormalization { pixel: usize, value: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget exceeded: {required} cases required, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
