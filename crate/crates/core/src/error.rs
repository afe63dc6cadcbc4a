use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, index ranges or grid parameters do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// A scalar argument lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// A field does not satisfy the boundary conditions an operation requires.
    #[error("contract violation: {what} (max defect {defect:.3e})")]
    Contract { what: String, defect: f64 },

    /// An iterative solver failed to reach its tolerance.
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("degenerate amplitude |w| = {amplitude:.3e} at k-index {k_index}, column ({j}, {s})")]
    DegenerateAmplitude {
        amplitude: f64,
        k_index: usize,
        j: usize,
        s: usize,
    },

    #[error("phase unwrapping failed: jump {jump:.3} rad between {from} and {to}")]
    Unwrap { jump: f64, from: String, to: String },

    #[error("extension construction failed on {face}: max defect {defect:.3e}")]
    Extension { face: String, defect: f64 },

    #[error("noise schedule: {0}")]
    Schedule(String),

    /// The gradient-projection iteration kept increasing the functional.
    #[error(
        "gradient projection diverged at iteration {iteration} after {halvings} step halvings"
    )]
    Divergence {
        iteration: usize,
        halvings: usize,
        history: Vec<f64>,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
