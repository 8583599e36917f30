use alloc::boxed::Box;
use alloc::string::String;

/// Errors produced by the geometry, control and diagnostics layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("expected {expected} ambient components, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("point is off the manifold (defect {defect:.3e})")]
    NotOnManifold { defect: f64 },

    #[error("vector is not tangent at its base point (defect {defect:.3e})")]
    NotTangent { defect: f64 },

    #[error("tangent vectors are attached to different base points")]
    BaseMismatch,

    #[error("matrix is not skew-symmetric (defect {defect:.3e})")]
    NotSkew { defect: f64 },

    #[error("point lies outside the retraction neighbourhood: {detail}")]
    RetractionDomain { detail: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("control columns are rank deficient (numerical rank {rank})")]
    RankDeficient { rank: usize },

    #[error("target acceleration is outside the span of the control columns (residual {residual:.3e})")]
    Infeasible { residual: f64 },

    #[error("state is off the invariant graph (residual {residual:.3e})")]
    OffGraph { residual: f64 },

    #[error("trajectory has not converged at the matching time (residual {residual:.3e})")]
    NotYetConverged { residual: f64 },

    #[error("could not build an orthonormal frame: {0}")]
    Frame(&'static str),

    #[error("integration failed at t = {time}: {source}")]
    Integration {
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            e @ Error::Integration { .. } => e,
            other => Error::Integration {
                time,
                source: Box::new(other),
            },
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
