use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A sample at which the Hill function cannot be inverted for the
/// requested `emax`, i.e. `y(k) - e0 + emax <= margin` or `y(k) > e0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvertibilityError {
    /// Index of the offending sample, when known.
    pub sample: Option<usize>,
    pub y: f64,
    pub e0: f64,
    pub emax: f64,
}

impl InvertibilityError {
    /// `y - e0 + emax`, the quantity that has to stay positive.
    pub fn slack(&self) -> f64 {
        self.y - self.e0 + self.emax
    }
}

impl fmt::Display for InvertibilityError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = match self.sample {
            Some(k) => format!("sample {k}"),
            None => "sample".to_string(),
        };
        if self.y > self.e0 {
            write!(f, "{at} has y={} above the baseline e0={}", self.y, self.e0)
        } else {
            write!(
                f,
                "Hill function not invertible at {at}: y - e0 + emax = {} - {} + {} = {:e}",
                self.y,
                self.e0,
                self.emax,
                self.slack()
            )
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error(transparent)]
    Invertibility(#[from] InvertibilityError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl std::error::Error for InvertibilityError {}
