//! Separation of a recorded trace into background noise and impulse events.
//!
//! Detection runs in two steps. A Bernoulli-Gaussian method-of-moments fit
//! gives the background standard deviation and with it an amplitude
//! threshold `th_a`. The gaps between consecutive above-threshold samples
//! then yield a duration threshold `th_d`: gaps up to `th_d` stay inside an
//! impulse, longer gaps separate impulses.

use thiserror::Error;

use crate::trace::NoiseTrace;

/// Minimum trace length for the sixth-moment fit.
pub const MIN_MOMENT_SAMPLES: usize = 10_000;

/// Gaps longer than this are never inspected when searching for `th_d`.
pub const GAP_SCAN_CAP: u64 = 10_000;

/// Default multiple of the background deviation used as amplitude threshold.
pub const DEFAULT_THRESHOLD_MULTIPLE: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error(
        "moment equations are degenerate (no impulsive component): e2={e2:.6e}, e4={e4:.6e}, \
         e6={e6:.6e}; treat the whole trace as background",
        e2 = .0.e2, e4 = .0.e4, e6 = .0.e6
    )]
    DegenerateMixture(SampleMoments),
    #[error(
        "negative discriminant {radicand:.6e} in the moment solution: e2={e2:.6e}, e4={e4:.6e}, \
         e6={e6:.6e}",
        e2 = .moments.e2, e4 = .moments.e4, e6 = .moments.e6
    )]
    NegativeDiscriminant {
        moments: SampleMoments,
        radicand: f64,
    },
    #[error("trace has {len} samples, at least {min} are needed")]
    TooShort { len: usize, min: usize },
    #[error("no impulses found: {0}")]
    NoImpulsesFound(String),
    #[error("invalid detection configuration: {0}")]
    InvalidConfig(String),
}

impl DetectError {
    pub fn code(&self) -> &'static str {
        match self {
            DetectError::DegenerateMixture(_) => "DegenerateMixture",
            DetectError::NegativeDiscriminant { .. } => "NegativeDiscriminant",
            DetectError::TooShort { .. } => "TooShort",
            DetectError::NoImpulsesFound(_) => "NoImpulsesFound",
            DetectError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Raw even sample moments `<x^2>`, `<x^4>`, `<x^6>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMoments {
    pub count: usize,
    pub e2: f64,
    pub e4: f64,
    pub e6: f64,
}

/// Streaming accumulator for [`SampleMoments`].
#[derive(Debug, Clone, Default)]
pub struct MomentAccumulator {
    count: usize,
    s2: CompensatedSum,
    s4: CompensatedSum,
    s6: CompensatedSum,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let x2 = x * x;
        let x4 = x2 * x2;
        self.count += 1;
        self.s2.add(x2);
        self.s4.add(x4);
        self.s6.add(x4 * x2);
    }

    pub fn extend<I: IntoIterator<Item = f64>>(&mut self, values: I) {
        for x in values {
            self.push(x);
        }
    }

    pub fn finish(&self) -> SampleMoments {
        let n = self.count.max(1) as f64;
        SampleMoments {
            count: self.count,
            e2: self.s2.value() / n,
            e4: self.s4.value() / n,
            e6: self.s6.value() / n,
        }
    }
}

impl SampleMoments {
    pub fn of(trace: &NoiseTrace) -> Self {
        let mut acc = MomentAccumulator::new();
        acc.extend(trace.samples().iter().map(|&x| f64::from(x)));
        acc.finish()
    }
}

/// Bernoulli-Gaussian mixture parameters recovered from even moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentsFit {
    pub background_variance: f64,
    pub impulse_variance: f64,
    /// Probability that a sample belongs to the background.
    pub background_prob: f64,
    pub moments: SampleMoments,
}

impl MomentsFit {
    pub fn background_sd(&self) -> f64 {
        self.background_variance.sqrt()
    }
}

/// Method-of-moments fit of a zero-mean two-component Gaussian mixture.
pub fn estimate_background_variance(trace: &NoiseTrace) -> Result<MomentsFit, DetectError> {
    if trace.len() < MIN_MOMENT_SAMPLES {
        return Err(DetectError::TooShort {
            len: trace.len(),
            min: MIN_MOMENT_SAMPLES,
        });
    }
    fit_moments(SampleMoments::of(trace))
}

/// Solves the three moment equations for background variance, impulse
/// variance and background probability.
pub fn fit_moments(moments: SampleMoments) -> Result<MomentsFit, DetectError> {
    let SampleMoments { count, e2, e4, e6 } = moments;
    if !(e2 > 0.0) {
        return Err(DetectError::DegenerateMixture(moments));
    }
    let gamma = 90.0 * e2 * e2 - 30.0 * e4;
    // A Gaussian has e4 = 3 e2^2 exactly. Sampled Gaussian data lands within
    // a few standard errors of it, so also require significant excess kurtosis.
    let excess_kurtosis = e4 / (e2 * e2) - 3.0;
    let kurtosis_se = (24.0 / count.max(1) as f64).sqrt();
    if gamma.abs() < 1e-9 * (e2 * e2).max(1.0) || excess_kurtosis <= 5.0 * kurtosis_se {
        return Err(DetectError::DegenerateMixture(moments));
    }
    let alpha = 15.0 * e2 * e4 - 3.0 * e6;
    let radicand = 75.0 * e4 * e4 * (4.0 * e4 - 9.0 * e2 * e2)
        + 270.0 * e2 * (2.0 * e2 * e2 - e4) * e6
        + 9.0 * e6 * e6;
    if radicand < 0.0 {
        return Err(DetectError::NegativeDiscriminant { moments, radicand });
    }
    let beta = radicand.sqrt();
    let background_variance = (alpha + beta) / gamma;
    if !(background_variance.is_finite() && background_variance > 0.0 && background_variance < e2) {
        return Err(DetectError::DegenerateMixture(moments));
    }
    // Remaining unknowns from the second and fourth moment equations.
    let v0 = background_variance;
    let impulse_variance = (e4 / 3.0 - v0 * v0) / (e2 - v0) - v0;
    if !(impulse_variance.is_finite() && impulse_variance > v0) {
        return Err(DetectError::DegenerateMixture(moments));
    }
    let background_prob = (1.0 - (e2 - v0) / (impulse_variance - v0)).clamp(0.0, 1.0);
    Ok(MomentsFit {
        background_variance,
        impulse_variance,
        background_prob,
        moments,
    })
}

/// How the amplitude threshold is derived from the background deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdRule {
    /// `th_a = multiple * sigma0`.
    Fixed { multiple: f64 },
    /// Universal threshold `sigma0 * sqrt(2 ln n)` for a window of `n` samples.
    Universal { window: u64 },
}

impl Default for ThresholdRule {
    fn default() -> Self {
        ThresholdRule::Fixed {
            multiple: DEFAULT_THRESHOLD_MULTIPLE,
        }
    }
}

pub fn amplitude_threshold(fit: &MomentsFit, rule: ThresholdRule) -> f64 {
    let sd = fit.background_sd();
    match rule {
        ThresholdRule::Fixed { multiple } => multiple * sd,
        ThresholdRule::Universal { window } => sd * (2.0 * (window.max(2) as f64).ln()).sqrt(),
    }
}

fn exceeds(x: f32, threshold: f64) -> bool {
    f64::from(x).abs() > threshold
}

/// Gaps, in samples, between consecutive samples whose magnitude exceeds `threshold`.
pub fn gap_sequence(trace: &NoiseTrace, threshold: f64) -> Result<Vec<u64>, DetectError> {
    let mut gaps = Vec::new();
    let mut previous: Option<usize> = None;
    for (i, &x) in trace.samples().iter().enumerate() {
        if exceeds(x, threshold) {
            if let Some(p) = previous {
                gaps.push((i - p) as u64);
            }
            previous = Some(i);
        }
    }
    if gaps.is_empty() {
        return Err(DetectError::NoImpulsesFound(format!(
            "fewer than two samples exceed {threshold}"
        )));
    }
    Ok(gaps)
}

/// Smallest positive integer missing from `gaps`.
pub fn duration_threshold(gaps: &[u64]) -> u64 {
    let mut present = vec![false; GAP_SCAN_CAP as usize + 2];
    for &g in gaps {
        if (1..=GAP_SCAN_CAP).contains(&g) {
            present[g as usize] = true;
        }
    }
    (1..present.len())
        .find(|&g| !present[g])
        .unwrap_or(present.len()) as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionConfig {
    pub amplitude_threshold: f64,
    pub duration_threshold: u64,
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.amplitude_threshold.is_finite() && self.amplitude_threshold > 0.0) {
            return Err(DetectError::InvalidConfig(format!(
                "amplitude threshold must be positive, got {}",
                self.amplitude_threshold
            )));
        }
        if self.duration_threshold < 1 {
            return Err(DetectError::InvalidConfig(
                "duration threshold must be at least 1 sample".into(),
            ));
        }
        Ok(())
    }
}

/// One detected impulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpulseEvent {
    /// Index of the first above-threshold sample.
    pub start: usize,
    /// Samples from the first to the last above-threshold sample, inclusive.
    pub duration: usize,
    /// Largest magnitude within the event.
    pub amplitude: f64,
    /// Samples since the previous event started.
    pub iat: Option<usize>,
    /// Samples strictly between the previous event's end and this start.
    pub iit: Option<usize>,
    /// The event may continue past the start or end of the trace.
    pub truncated: bool,
}

impl ImpulseEvent {
    /// Index of the last sample.
    pub fn end(&self) -> usize {
        self.start + self.duration - 1
    }
}

/// Groups above-threshold samples into events; gaps of at most `th_d`
/// samples stay within one event.
pub fn segment_impulses(
    trace: &NoiseTrace,
    config: &DetectionConfig,
) -> Result<Vec<ImpulseEvent>, DetectError> {
    config.validate()?;
    let th_a = config.amplitude_threshold;
    let th_d = config.duration_threshold as usize;
    let samples = trace.samples();
    let n = samples.len();

    let mut spans: Vec<(usize, usize, f64)> = Vec::new();
    for (i, &x) in samples.iter().enumerate() {
        if !exceeds(x, th_a) {
            continue;
        }
        let mag = f64::from(x).abs();
        match spans.last_mut() {
            Some((_, end, amp)) if i - *end <= th_d => {
                *end = i;
                *amp = amp.max(mag);
            }
            _ => spans.push((i, i, mag)),
        }
    }
    if spans.is_empty() {
        return Err(DetectError::NoImpulsesFound(format!(
            "no sample exceeds {th_a}"
        )));
    }

    let mut events = Vec::with_capacity(spans.len());
    let mut previous: Option<(usize, usize)> = None;
    for (start, end, amplitude) in spans {
        // A virtual crossing just outside the trace would have been merged.
        let truncated = start < th_d || n - end <= th_d;
        events.push(ImpulseEvent {
            start,
            duration: end - start + 1,
            amplitude,
            iat: previous.map(|(s, _)| start - s),
            iit: previous.map(|(_, e)| start - e - 1),
            truncated,
        });
        previous = Some((start, end));
    }
    Ok(events)
}

/// Output of the full detection procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub moments: MomentsFit,
    pub config: DetectionConfig,
    pub events: Vec<ImpulseEvent>,
    pub trace_len: usize,
}

impl Detection {
    pub fn impulse_sample_count(&self) -> usize {
        self.events.iter().map(|e| e.duration).sum()
    }

    pub fn background_sample_count(&self) -> usize {
        self.trace_len - self.impulse_sample_count()
    }

    pub fn impulse_sample_fraction(&self) -> f64 {
        self.impulse_sample_count() as f64 / self.trace_len as f64
    }

    /// `true` for samples covered by an event.
    pub fn impulse_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.trace_len];
        for e in &self.events {
            mask[e.start..=e.end()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

/// Moments fit, both thresholds, and segmentation in one pass over the pipeline.
pub fn detect_impulses(trace: &NoiseTrace, rule: ThresholdRule) -> Result<Detection, DetectError> {
    let moments = estimate_background_variance(trace)?;
    let amplitude_threshold = amplitude_threshold(&moments, rule);
    let gaps = gap_sequence(trace, amplitude_threshold)?;
    let config = DetectionConfig {
        amplitude_threshold,
        duration_threshold: duration_threshold(&gaps),
    };
    let events = segment_impulses(trace, &config)?;
    Ok(Detection {
        moments,
        config,
        events,
        trace_len: trace.len(),
    })
}
