use thiserror::Error;

/// Errors raised by the solvers and model builders.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum VakonError {
    /// Inputs whose shape does not match the owning problem.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A caller-side precondition failed (empty sample list, too few steps, ...).
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("index range error: k={k}, width={width}, length={len}")]
    Range { k: usize, width: usize, len: usize },

    /// A function evaluation returned a non-finite value.
    #[error("non-finite evaluation at coordinates {coords:?}")]
    NumericDomain { coords: Vec<f64> },

    /// The Newton matrix is numerically singular.
    #[error("singular KKT matrix (pivot ratio {pivot_ratio:.3e} at pivot {pivot})")]
    SingularKkt { pivot: usize, pivot_ratio: f64 },

    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// Seed data violates the constraints it is required to satisfy.
    #[error("inconsistent seed: constraint residual {residual:.3e} exceeds {tolerance:.3e}")]
    InconsistentSeed { residual: f64, tolerance: f64 },

    #[error("integration blew up at step {step}")]
    BlowUp { step: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A failure inside a sequential flow, annotated with the node index.
    #[error("step at k={k} failed: {source}")]
    AtStep {
        k: usize,
        #[source]
        source: Box<VakonError>,
    },
}

impl VakonError {
    pub(crate) fn at_step(k: usize, err: VakonError) -> Self {
        VakonError::AtStep {
            k,
            source: Box::new(err),
        }
    }

    /// Variant name of the root cause, for log lines and exit messages.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            VakonError::Contract(_) => "Contract",
            VakonError::Precondition(_) => "Precondition",
            VakonError::Range { .. } => "Range",
            VakonError::NumericDomain { .. } => "NumericDomain",
            VakonError::SingularKkt { .. } => "SingularKkt",
            VakonError::NoConvergence { .. } => "NoConvergence",
            VakonError::InconsistentSeed { .. } => "InconsistentSeed",
            VakonError::BlowUp { .. } => "BlowUp",
            VakonError::InvalidParams(_) => "InvalidParams",
            VakonError::AtStep { .. } => unreachable!("root strips AtStep"),
        }
    }

    /// Strips any number of `AtStep` wrappers.
    pub fn root(&self) -> &VakonError {
        match self {
            VakonError::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, VakonError>;
