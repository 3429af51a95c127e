use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use spectral_ot::error::Error;

#[derive(Debug)]
pub enum Failure {
    /// Malformed input or arguments.
    Usage(String),
    NonConvergence(String),
    Assertion(String),
    Other(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::NonConvergence(_) => 3,
            Failure::Assertion(_) | Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "malformed input: {m}"),
            Failure::NonConvergence(m) => write!(f, "did not converge: {m}"),
            Failure::Assertion(m) => write!(f, "assertion failed: {m}"),
            Failure::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::NonFinite(_)
            | Error::NotPsd { .. }
            | Error::DimensionMismatch(_)
            | Error::InvalidNorm(_)
            | Error::UnsupportedNorm(_)
            | Error::InvalidMeasure(_)
            | Error::InvalidCoupling(_)
            | Error::InvalidArgument(_)
            | Error::NonCommuting { .. }
            | Error::Singular(_)
            | Error::TooLarge(_)
            | Error::Serde(_) => Failure::Usage(msg),
            Error::Solver(_)
            | Error::Eigen(_)
            | Error::Diverged { .. }
            | Error::LostPsd { .. }
            | Error::RegularizationFloor(_) => Failure::NonConvergence(msg),
            Error::Io(_) => Failure::Other(msg),
        }
    }
}

/// Reads a JSON input; any failure is malformed input.
pub fn read_input<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    spectral_ot::io::read_json(path).map_err(|e| Failure::Usage(e.to_string()))
}

pub fn parse_p(raw: &str) -> Result<f64, Failure> {
    let p = spectral_ot::psd_norms::parse_exponent(raw).map_err(|e| Failure::Usage(e.to_string()))?;
    spectral_ot::psd_norms::NormSpec::schatten(p).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(p)
}

pub fn p_label(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}
