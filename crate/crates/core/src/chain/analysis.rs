//! Closed-form sojourn and loop-period analysis.

use nalgebra::{DMatrix, DVector};

use super::{ChainError, StatesPerSystem};

/// Expected number of consecutive samples spent in a state whose
/// self-transition probability is `stay_prob`: `1 / (1 - p)`.
pub fn mean_sojourn(stay_prob: f64) -> Result<f64, ChainError> {
    if !(0.0..1.0).contains(&stay_prob) {
        return Err(ChainError::Domain(format!(
            "self-transition probability must lie in [0, 1), got {stay_prob}"
        )));
    }
    Ok(1.0 / (1.0 - stay_prob))
}

fn check_stays(stays: &[f64]) -> Result<(), ChainError> {
    if stays.is_empty() {
        return Err(ChainError::Domain("a loop needs at least one state".into()));
    }
    if let Some(&p) = stays.iter().find(|p| !(0.0..1.0).contains(*p)) {
        return Err(ChainError::Domain(format!(
            "stay probabilities must lie in [0, 1), got {p}"
        )));
    }
    Ok(())
}

/// Expected steps to absorption from every transient state of a ring that has
/// been cut open after its last state and routed into an absorbing state.
///
/// The transient block `Q` is upper bidiagonal (stay on the diagonal, advance
/// on the superdiagonal); the result is `t = (I - Q)^-1 1`.
pub fn absorption_times(stays: &[f64]) -> Result<DVector<f64>, ChainError> {
    check_stays(stays)?;
    let k = stays.len();
    let mut q = DMatrix::<f64>::zeros(k, k);
    for (j, &p) in stays.iter().enumerate() {
        q[(j, j)] = p;
        if j + 1 < k {
            q[(j, j + 1)] = 1.0 - p;
        }
    }
    let fundamental = (DMatrix::<f64>::identity(k, k) - q)
        .try_inverse()
        .ok_or_else(|| ChainError::Domain("I - Q is singular".into()))?;
    Ok(fundamental * DVector::<f64>::from_element(k, 1.0))
}

/// Mean number of samples for one full traversal of a ring with the given
/// per-state stay probabilities, computed through the fundamental matrix.
pub fn loop_period(stays: &[f64]) -> Result<f64, ChainError> {
    Ok(absorption_times(stays)?[0])
}

/// `sum_j 1 / (1 - p_j)`.
pub fn loop_period_closed_form(stays: &[f64]) -> Result<f64, ChainError> {
    check_stays(stays)?;
    Ok(stays.iter().map(|p| 1.0 / (1.0 - p)).sum())
}

/// Stay probability giving a mean loop period of `1 / freq` samples:
/// `1 - k f` for a ring of `k` states.
pub fn oscillation_stay_prob(
    freq_cycles_per_sample: f64,
    states_per_system: StatesPerSystem,
) -> Result<f64, ChainError> {
    let k = states_per_system.count() as f64;
    let f = freq_cycles_per_sample;
    if !(f > 0.0 && f * k <= 1.0) {
        return Err(ChainError::Domain(format!(
            "oscillation frequency {f} cycles/sample is outside (0, 1/{k}]"
        )));
    }
    Ok((1.0 - k * f).max(0.0))
}
