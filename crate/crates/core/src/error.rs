use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {left} vs {right}")]
    ShapeMismatch {
        context: &'static str,
        left: String,
        right: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CFL condition violated: c*dt/dx = {ratio:.6} exceeds the limit {limit}")]
    Cfl { ratio: f64, limit: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("spectrum is not Hermitian: imaginary residue {residue:.3e} exceeds {tolerance:.1e}")]
    NotHermitian { residue: f64, tolerance: f64 },

    #[error("spectral transform requires a periodic grid; embed the Dirichlet field periodically first")]
    NotPeriodic,

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("integrator step size underflow at t = {time:.6e} (h = {step:.3e}, |state|_inf = {state_norm:.3e})")]
    StepUnderflow {
        time: f64,
        step: f64,
        state_norm: f64,
    },

    #[error("training diverged at epoch {epoch}: validation loss {val_loss:.3e}")]
    Diverged { epoch: usize, val_loss: f64 },

    #[error("spectral multiplier norm {value:.3e} exceeds the bound {bound:.3e}")]
    MultiplierBound { value: f64, bound: f64 },

    #[error("symplectic defect {defect:.3e} exceeds {tolerance:.1e} at epoch {epoch}")]
    StructureViolation {
        epoch: usize,
        defect: f64,
        tolerance: f64,
    },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: &'static str, left: impl ToString, right: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    /// Whether the error is a domain validation failure (CFL, unsupported op, bad config).
    pub fn is_validation(&self) -> bool {
        if let Error::Sample { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::Cfl { .. } | Error::Unsupported(_) | Error::InvalidConfig(_) | Error::NotPeriodic
        )
    }

    /// Whether the error is a numerical failure (divergence, NaN, integrator breakdown).
    pub fn is_numerical(&self) -> bool {
        if let Error::Sample { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NonFinite(_)
                | Error::Diverged { .. }
                | Error::MultiplierBound { .. }
                | Error::StructureViolation { .. }
                | Error::StepUnderflow { .. }
                | Error::NotHermitian { .. }
        )
    }
}
