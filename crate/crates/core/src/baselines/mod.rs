//! Comparison models: a two-state Bernoulli-Gaussian chain with memory and
//! the i.i.d. Middleton Class-A mixture.

mod bg_memory;
mod class_a;

pub use bg_memory::{
    fit_bg_memory, generate_bg, generate_bg_labeled, impulse_stay_from_duration, BgMemoryParams,
};
pub use class_a::{
    class_a_cdf, class_a_pdf, class_a_tail_mass, default_truncation, fit_class_a,
    fit_class_a_moments, generate_class_a, moment_ratios, ClassAParams,
};

use thiserror::Error;

use crate::detect::DetectError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BaselineError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(
        "no Class-A parameters reproduce the moment ratios r4={r4:.6e}, r6={r6:.6e} within the \
         search bounds"
    )]
    NoRoot { r4: f64, r6: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

impl BaselineError {
    pub fn code(&self) -> &'static str {
        match self {
            BaselineError::InvalidParams(_) => "InvalidParams",
            BaselineError::NoRoot { .. } => "NoRoot",
            BaselineError::Degenerate(_) => "DegenerateInput",
            BaselineError::Detect(e) => e.code(),
        }
    }
}
