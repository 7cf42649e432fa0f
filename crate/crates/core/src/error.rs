//! Error type shared by the library.

/// Everything that can go wrong outside of training (which has its own error
/// carrying the partial trajectory).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("leaky slope must lie in [0, 1], got {0}")]
    InvalidGamma(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("neuron index {k} out of range for width {l}")]
    NeuronIndex { k: usize, l: usize },

    #[error("operation is defined for the no-bias parameterization only")]
    BiasUnsupported,

    #[error("bias modes differ between the two parameter sets")]
    BiasModeMismatch,

    #[error("rescaling entry {k} must be positive and finite, got {value}")]
    NonPositiveRescale { k: usize, value: f64 },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("neuron {k}: all weights are zero, so its charge is pinned to 0; target {target} is unreachable")]
    RescaleDegenerate { k: usize, target: f64 },

    #[error("neuron {k}: in-weights are zero, so only negative charges are reachable; target {target} is not")]
    RescaleZeroIn { k: usize, target: f64 },

    #[error("neuron {k}: out-weights are zero, so only positive charges are reachable; target {target} is not")]
    RescaleZeroOut { k: usize, target: f64 },

    #[error(
        "sign sums differ ({from} vs {to}): the target lies in a different effective component"
    )]
    SignSumMismatch { from: i64, to: i64 },

    #[error("sign vector length {got} does not match the negative-charge count {expected}")]
    SignLength { expected: usize, got: usize },

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error(
        "charges differ at neuron {k} by {delta:e} (tolerance {tol:e}): not the same invariant set"
    )]
    ChargeMismatch { k: usize, delta: f64, tol: f64 },

    #[error("negative-charge neuron {k} has a zero out-weight; classification is inconsistent")]
    ZeroOutWeight { k: usize },

    #[error("sign vectors differ: the endpoints lie in different connected components")]
    DifferentComponent,

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("loss: {0}")]
    LossDomain(String),

    #[error("closed-form obstruction probability is defined for normal-family schemes only")]
    UnsupportedScheme,

    #[error("invalid {what}: {value}")]
    InvalidArgument { what: &'static str, value: String },
}

pub type Result<T> = std::result::Result<T, Error>;
