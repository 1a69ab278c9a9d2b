use std::fmt;

/// A single invalid row found while reading a CSV input.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the domain of the operation (non-positive
    /// variance, non-finite value, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Structurally invalid input (portfolio shape, configuration, params).
    #[error("validation error: {0}")]
    Validation(String),

    /// One or more rows of a CSV input failed validation.
    #[error("{} invalid row(s):\n{}", .0.len(), join_rows(.0))]
    Rows(Vec<RowError>),

    /// The selection event `estimate < delta` has negligible probability.
    #[error("degenerate selection: Pr(estimate < {delta}) = {probability:e} is below {floor:e}")]
    DegenerateSelection {
        delta: f64,
        probability: f64,
        floor: f64,
    },

    /// Too few Monte Carlo draws landed in the conditioning window.
    #[error(
        "insufficient conditioning sample: {found} draws within {window} of {s} (need {required}); \
         increase n_draws or widen the window"
    )]
    InsufficientSample {
        s: f64,
        window: f64,
        found: u64,
        required: u64,
    },

    /// A sampler update or optimizer step produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The profile likelihood search failed to settle.
    #[error("profile search did not converge on [{lower}, {upper}]: {detail}")]
    NoConvergence {
        lower: f64,
        upper: f64,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Validation(_) | Error::Rows(_) | Error::Io(_)
        )
    }
}

fn join_rows(rows: &[RowError]) -> String {
    rows.iter()
        .map(|r| format!("  {r}"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be finite and positive, got {value}"
        )))
    }
}

pub(crate) fn require_finite(name: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {value}")))
    }
}
