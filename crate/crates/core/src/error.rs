use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: `{field}`: {message}")]
    Config { field: String, message: String },

    /// A hypothesis required by a check does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("time step {dt:e} exceeds the positivity bound {bound:e} (max face speed {max_face_speed:e})")]
    Cfl { dt: f64, bound: f64, max_face_speed: f64 },

    #[error("density became negative ({value:e}) at cell ({i}, {j})")]
    Negativity { value: f64, i: usize, j: usize },

    #[error("box of half-width {half_width} captures only a fraction {captured} of the mollified mass")]
    MassCapture { half_width: f64, captured: f64 },

    #[error("series has {have} rows, at least {needed} required")]
    TooFewRows { needed: usize, have: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures raised while a solver was stepping.
    pub fn is_runtime(&self) -> bool {
        matches!(self, Error::Cfl { .. } | Error::Negativity { .. })
    }
}
