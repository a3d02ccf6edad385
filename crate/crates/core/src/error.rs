use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid argument to {op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("non-finite loss at training step {step}")]
    NonFiniteLoss { step: usize },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("infeasible sampling budget: {acs} ACS columns but only {total} sampled columns")]
    InfeasibleMask { acs: usize, total: usize },
    #[error("unsupported phantom size {0} (expected 16, 32 or 64)")]
    PhantomSize(usize),
    #[error("evaluation seeds overlap the training seed range")]
    SeedOverlap,
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            op,
            msg: msg.into(),
        }
    }
}
