use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::detect::{detect_impulses, ThresholdRule};
use crate::trace::NoiseTrace;

/// Two-state chain alternating between a background and an impulse state,
/// both emitting zero-mean Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgMemoryParams {
    /// 1 disables impulses entirely.
    pub background_stay_prob: f64,
    pub impulse_stay_prob: f64,
    pub background_variance: f64,
    pub impulse_variance: f64,
    pub sampling_rate_hz: f64,
}

impl BgMemoryParams {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(0.0..=1.0).contains(&self.background_stay_prob) {
            return Err(BaselineError::InvalidParams(format!(
                "background stay probability {} outside [0, 1]",
                self.background_stay_prob
            )));
        }
        if !(0.0..1.0).contains(&self.impulse_stay_prob) {
            return Err(BaselineError::InvalidParams(format!(
                "impulse stay probability {} outside [0, 1)",
                self.impulse_stay_prob
            )));
        }
        if !(self.background_variance > 0.0 && self.impulse_variance > self.background_variance) {
            return Err(BaselineError::InvalidParams(format!(
                "variances must satisfy 0 < background ({}) < impulse ({})",
                self.background_variance, self.impulse_variance
            )));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(BaselineError::InvalidParams(format!(
                "sampling rate {} must be positive",
                self.sampling_rate_hz
            )));
        }
        Ok(())
    }

    /// Long-run fraction of samples in the impulse state.
    pub fn stationary_impulse_fraction(&self) -> f64 {
        let enter = 1.0 - self.background_stay_prob;
        let leave = 1.0 - self.impulse_stay_prob;
        enter / (enter + leave)
    }
}

/// Stay probability giving a mean sojourn of `mean_duration` samples.
pub fn impulse_stay_from_duration(mean_duration: f64) -> f64 {
    1.0 - 1.0 / mean_duration
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> (f64, usize) {
    let (sum, n) = values
        .clone()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        return (0.0, 0);
    }
    let mean = sum / n as f64;
    (
        values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64,
        n,
    )
}

/// Fits the two-state model from the impulses detected in `trace`.
pub fn fit_bg_memory(
    trace: &NoiseTrace,
    rule: ThresholdRule,
) -> Result<BgMemoryParams, BaselineError> {
    let detection = detect_impulses(trace, rule)?;
    let background_samples = detection.background_sample_count();
    let enter = detection.events.len() as f64 / background_samples as f64;

    let complete: Vec<f64> = detection
        .events
        .iter()
        .filter(|e| !e.truncated)
        .map(|e| e.duration as f64)
        .collect();
    let durations = if complete.is_empty() {
        detection.events.iter().map(|e| e.duration as f64).collect()
    } else {
        complete
    };
    let mean_duration = durations.iter().sum::<f64>() / durations.len() as f64;

    let mask = detection.impulse_mask();
    let samples = trace.samples();
    let pick = |impulse: bool| {
        samples
            .iter()
            .zip(&mask)
            .filter(move |(_, &m)| m == impulse)
            .map(|(&x, _)| f64::from(x))
    };
    let (background_variance, _) = variance(pick(false));
    let (impulse_variance, _) = variance(pick(true));

    let params = BgMemoryParams {
        background_stay_prob: 1.0 - enter,
        impulse_stay_prob: impulse_stay_from_duration(mean_duration),
        background_variance,
        impulse_variance,
        sampling_rate_hz: trace.sampling_rate_hz(),
    };
    params
        .validate()
        .map_err(|e| BaselineError::Degenerate(format!("fitted parameters are unusable: {e}")))?;
    Ok(params)
}

/// Generates `n` samples together with the impulse-state labels.
pub fn generate_bg_labeled(
    params: &BgMemoryParams,
    n: usize,
    seed: u64,
) -> Result<(NoiseTrace, Vec<bool>), BaselineError> {
    params.validate()?;
    let sd = [
        params.background_variance.sqrt(),
        params.impulse_variance.sqrt(),
    ];
    let stay = [params.background_stay_prob, params.impulse_stay_prob];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut state = 0usize;
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        samples.push((sd[state] * z) as f32);
        labels.push(state == 1);
        if rng.random::<f64>() >= stay[state] {
            state = 1 - state;
        }
    }
    Ok((NoiseTrace::new(samples, params.sampling_rate_hz), labels))
}

pub fn generate_bg(
    params: &BgMemoryParams,
    n: usize,
    seed: u64,
) -> Result<NoiseTrace, BaselineError> {
    generate_bg_labeled(params, n, seed).map(|(t, _)| t)
}
