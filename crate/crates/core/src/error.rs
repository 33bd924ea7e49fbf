use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("mollifier stencil at cell {cell} covers no pore cell")]
    EmptyStencil { cell: usize },

    #[error("pore space of the unit cell is not connected ({components} components)")]
    Disconnected { components: usize },

    #[error("linear solver stalled after {iterations} iterations (relative residual {residual:e})")]
    LinearSolver { iterations: usize, residual: f64 },

    #[error(
        "fixed-point iteration did not converge in {iterations} iterations \
         (last increment {increment:e}); reduce dt"
    )]
    FixedPoint { iterations: usize, increment: f64 },

    #[error("effective tensor asymmetry {asymmetry:e} exceeds tolerance")]
    Asymmetric { asymmetry: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter { name: name.into(), reason: reason.into() }
    }
}
