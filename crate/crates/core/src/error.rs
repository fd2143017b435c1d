use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{name} = {value} is out of range; admissible: {admissible}")]
    OutOfRange { name: &'static str, value: f64, admissible: &'static str },
    #[error("{0}")]
    Numerical(String),
    #[error("{stage}: optimizer failed to converge (best objective {best_value:.6e}, gradient norm {grad_norm:.3e})")]
    NotConverged { stage: &'static str, best: Vec<f64>, best_value: f64, grad_norm: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::NotConverged { .. })
    }
}
