//! Similarity measures between measured and modelled noise.

mod compare;
mod divergence;
mod histogram;
mod spectrum;

pub use compare::{
    compare_report, BandGap, Characteristic, CharacteristicResult, CompareConfig, DivergenceScores,
    MetricsReport,
};
pub use divergence::{kl_divergence, mse_cdf};
pub use histogram::{histogram, Histogram};
pub use spectrum::{impulse_spectrum, trace_spectrum, Spectrum, Window};

use thiserror::Error;

use crate::detect::DetectError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("histograms do not share bin edges")]
    BinMismatch,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("fft size {fft_size} is shorter than the longest segment ({longest} samples)")]
    TooShort { fft_size: usize, longest: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("detection failed: {0}")]
    Detection(#[from] DetectError),
}

impl MetricsError {
    pub fn code(&self) -> &'static str {
        match self {
            MetricsError::EmptyInput(_) => "EmptyInput",
            MetricsError::BinMismatch => "BinMismatch",
            MetricsError::DegenerateInput(_) => "DegenerateInput",
            MetricsError::TooShort { .. } => "TooShort",
            MetricsError::InvalidArgument(_) => "InvalidArgument",
            MetricsError::Detection(e) => e.code(),
        }
    }
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(MetricsError::DegenerateInput(
            "at least two paired observations are needed".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateInput(
            "one of the variables has zero variance".into(),
        ));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
