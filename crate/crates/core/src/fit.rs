//! Estimation of every chain parameter from a recorded trace.
//!
//! The pipeline detects impulses, splits them into three amplitude groups,
//! reads emission parameters and entry probabilities off the groups, sets
//! the shared stay probability from the dominant oscillation frequency of
//! the impulses, and converts group durations into per-system exit
//! probabilities.

use std::fmt;

use thiserror::Error;

use crate::chain::{
    build_chain, oscillation_stay_prob, ChainConfig, ChainError, StatesPerSystem, SystemConfig,
    SYSTEM_COUNT,
};
use crate::detect::{
    amplitude_threshold, duration_threshold, estimate_background_variance, gap_sequence,
    segment_impulses, DetectError, DetectionConfig, ImpulseEvent, MomentsFit, ThresholdRule,
};
use crate::metrics::{impulse_spectrum, MetricsError, Window};
use crate::trace::NoiseTrace;

/// Smallest transform used for the oscillation-frequency estimate.
pub const MIN_FREQUENCY_FFT: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("too few events: {count}, at least 3 are needed")]
    TooFewEvents { count: usize },
    #[error("amplitude group {group} over [{lo}, {hi}] received no events")]
    EmptyGroup { group: usize, lo: f64, hi: f64 },
    #[error("no event spans at least {needed} samples")]
    TooShort { needed: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl FitError {
    pub fn code(&self) -> &'static str {
        match self {
            FitError::TooFewEvents { .. } => "TooFewEvents",
            FitError::EmptyGroup { .. } => "EmptyGroup",
            FitError::TooShort { .. } => "TooShort",
            FitError::Domain(_) => "DomainError",
            FitError::Detect(e) => e.code(),
            FitError::Chain(e) => e.code(),
            FitError::Metrics(e) => e.code(),
        }
    }
}

/// Pipeline stage, used to tag failures of [`fit_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStage {
    BackgroundVariance,
    GapSequence,
    Segmentation,
    GroupClassification,
    EntryProbabilities,
    OscillationFrequency,
    StayProbability,
    ChainValidation,
}

impl fmt::Display for FitStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitStage::BackgroundVariance => "background-variance",
            FitStage::GapSequence => "gap-sequence",
            FitStage::Segmentation => "segmentation",
            FitStage::GroupClassification => "group-classification",
            FitStage::EntryProbabilities => "entry-probabilities",
            FitStage::OscillationFrequency => "oscillation-frequency",
            FitStage::StayProbability => "stay-probability",
            FitStage::ChainValidation => "chain-validation",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("fit failed at stage {stage}: {error}")]
pub struct PipelineError {
    pub stage: FitStage,
    #[source]
    pub error: FitError,
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        self.error.code()
    }
}

trait AtStage<T> {
    fn at(self, stage: FitStage) -> Result<T, PipelineError>;
}

impl<T, E: Into<FitError>> AtStage<T> for Result<T, E> {
    fn at(self, stage: FitStage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError {
            stage,
            error: e.into(),
        })
    }
}

/// Amplitude statistics of one impulse group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    /// 1-based group index; 3 holds the largest impulses.
    pub group: usize,
    /// `(lo, hi)`; amplitudes equal to `hi` belong to this group.
    pub interval: (f64, f64),
    pub count: usize,
    pub amplitude_mean: f64,
    /// Maximum-likelihood (divide by `count`) variance.
    pub amplitude_variance: f64,
    /// Mean duration of the non-truncated events of the group, or of all of
    /// them when every event was truncated.
    pub mean_duration: f64,
}

/// Splits `[min, max]` of the event amplitudes into three equal-width
/// intervals and summarizes the events falling in each.
pub fn classify_groups(events: &[ImpulseEvent]) -> Result<[GroupStats; SYSTEM_COUNT], FitError> {
    if events.len() < SYSTEM_COUNT {
        return Err(FitError::TooFewEvents {
            count: events.len(),
        });
    }
    let lo = events
        .iter()
        .map(|e| e.amplitude)
        .fold(f64::INFINITY, f64::min);
    let hi = events
        .iter()
        .map(|e| e.amplitude)
        .fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / SYSTEM_COUNT as f64;
    let bounds = [lo, lo + width, lo + 2.0 * width, hi];
    let group_of = |a: f64| {
        if a <= bounds[1] {
            0
        } else if a <= bounds[2] {
            1
        } else {
            2
        }
    };

    let mut members: [Vec<&ImpulseEvent>; SYSTEM_COUNT] = Default::default();
    for e in events {
        members[group_of(e.amplitude)].push(e);
    }

    let mut out = Vec::with_capacity(SYSTEM_COUNT);
    for (g, list) in members.iter().enumerate() {
        let interval = (bounds[g], bounds[g + 1]);
        if list.is_empty() || width <= 0.0 {
            return Err(FitError::EmptyGroup {
                group: g + 1,
                lo: interval.0,
                hi: interval.1,
            });
        }
        let n = list.len() as f64;
        let mean = list.iter().map(|e| e.amplitude).sum::<f64>() / n;
        let variance = list
            .iter()
            .map(|e| (e.amplitude - mean).powi(2))
            .sum::<f64>()
            / n;
        let complete: Vec<f64> = list
            .iter()
            .filter(|e| !e.truncated)
            .map(|e| e.duration as f64)
            .collect();
        let mean_duration = if complete.is_empty() {
            list.iter().map(|e| e.duration as f64).sum::<f64>() / n
        } else {
            complete.iter().sum::<f64>() / complete.len() as f64
        };
        out.push(GroupStats {
            group: g + 1,
            interval,
            count: list.len(),
            amplitude_mean: mean,
            amplitude_variance: variance,
            mean_duration,
        });
    }
    Ok(out.try_into().expect("three groups"))
}

/// Background-to-system transition probabilities: impulse starts per
/// background sample.
pub fn estimate_entry_probs(
    groups: &[GroupStats; SYSTEM_COUNT],
    background_sample_count: usize,
) -> Result<[f64; SYSTEM_COUNT], FitError> {
    if background_sample_count == 0 {
        return Err(FitError::Domain("no background samples".into()));
    }
    let probs = groups.map(|g| g.count as f64 / background_sample_count as f64);
    let total: f64 = probs.iter().sum();
    if total >= 1.0 {
        return Err(FitError::Domain(format!(
            "entry probabilities sum to {total}: more impulse starts than background samples"
        )));
    }
    Ok(probs)
}

/// Frequency, in cycles per sample, of the largest non-DC peak of the
/// averaged spectrum of all events at least two loops of states long.
pub fn estimate_osc_freq(
    events: &[ImpulseEvent],
    trace: &NoiseTrace,
    states_per_system: StatesPerSystem,
    window: Window,
) -> Result<f64, FitError> {
    let needed = 2 * states_per_system.count();
    let eligible: Vec<ImpulseEvent> = events
        .iter()
        .filter(|e| e.duration >= needed)
        .copied()
        .collect();
    let longest = eligible
        .iter()
        .map(|e| e.duration)
        .max()
        .ok_or(FitError::TooShort { needed })?;
    let fft_size = longest.next_power_of_two().max(MIN_FREQUENCY_FFT);
    let spectrum = impulse_spectrum(&eligible, trace, fft_size, window)?;
    Ok(spectrum.peak_frequency_normalized())
}

/// Mean dwell targets per system, with a flag for each clamped target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellTargets {
    pub samples: [f64; SYSTEM_COUNT],
    pub clamped: [bool; SYSTEM_COUNT],
}

/// Converts group mean durations into per-system dwell times so that a
/// group-`i` impulse, which passes through systems `i, ..., 1`, lasts
/// `durations[i]` on average.
pub fn system_dwell_targets(durations: [f64; SYSTEM_COUNT]) -> DwellTargets {
    let mut samples = [0.0; SYSTEM_COUNT];
    let mut clamped = [false; SYSTEM_COUNT];
    let mut below = 0.0;
    for i in 0..SYSTEM_COUNT {
        let raw = durations[i] - below;
        clamped[i] = raw < 1.0;
        samples[i] = raw.max(1.0);
        below += samples[i];
    }
    DwellTargets { samples, clamped }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub states_per_system: StatesPerSystem,
    pub threshold_rule: ThresholdRule,
    /// Groups with fewer events produce a warning.
    pub min_group_count: usize,
    pub window: Window,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            states_per_system: StatesPerSystem::Six,
            threshold_rule: ThresholdRule::default(),
            min_group_count: 10,
            window: Window::Rectangular,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub event_count: usize,
    pub truncated_count: usize,
    pub background_sample_count: usize,
    /// Dominant impulse oscillation frequency, cycles per sample.
    pub oscillation_freq: f64,
    pub dwell_targets: DwellTargets,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub config: ChainConfig,
    pub groups: [GroupStats; SYSTEM_COUNT],
    pub detection: DetectionConfig,
    pub moments: MomentsFit,
    pub events: Vec<ImpulseEvent>,
    pub diagnostics: FitDiagnostics,
}

/// Runs the whole estimation pipeline on `trace`.
pub fn fit_chain(trace: &NoiseTrace, options: &FitOptions) -> Result<FitReport, PipelineError> {
    let moments = estimate_background_variance(trace).at(FitStage::BackgroundVariance)?;
    let th_a = amplitude_threshold(&moments, options.threshold_rule);
    let gaps = gap_sequence(trace, th_a).at(FitStage::GapSequence)?;
    let detection = DetectionConfig {
        amplitude_threshold: th_a,
        duration_threshold: duration_threshold(&gaps),
    };
    let events = segment_impulses(trace, &detection).at(FitStage::Segmentation)?;
    let groups = classify_groups(&events).at(FitStage::GroupClassification)?;

    let impulse_samples: usize = events.iter().map(|e| e.duration).sum();
    let background_sample_count = trace.len() - impulse_samples;
    let entry_probs =
        estimate_entry_probs(&groups, background_sample_count).at(FitStage::EntryProbabilities)?;

    let spsys = options.states_per_system;
    let oscillation_freq = estimate_osc_freq(&events, trace, spsys, options.window)
        .at(FitStage::OscillationFrequency)?;
    let stay_prob = oscillation_stay_prob(oscillation_freq, spsys).at(FitStage::StayProbability)?;

    let dwell_targets = system_dwell_targets(groups.map(|g| g.mean_duration));
    let mut warnings = Vec::new();
    for g in &groups {
        if g.count < options.min_group_count {
            warnings.push(format!(
                "group {} has {} events, fewer than the requested {}",
                g.group, g.count, options.min_group_count
            ));
        }
    }
    for (i, &c) in dwell_targets.clamped.iter().enumerate() {
        if c {
            warnings.push(format!(
                "system {} dwell target clamped to 1 sample: group mean durations are not increasing",
                i + 1
            ));
        }
    }

    let background_variance = moments.background_variance;
    let mut systems = [SystemConfig {
        amplitude_mean: 0.0,
        amplitude_variance: 0.0,
        exit_prob: 0.0,
    }; SYSTEM_COUNT];
    for (i, g) in groups.iter().enumerate() {
        let mut amplitude_variance = g.amplitude_variance;
        if amplitude_variance <= 0.0 {
            warnings.push(format!(
                "group {} amplitude variance is zero; using the background variance",
                g.group
            ));
            amplitude_variance = background_variance;
        }
        let mut exit_prob = 1.0 / dwell_targets.samples[i];
        if exit_prob > 1.0 - stay_prob {
            warnings.push(format!(
                "system {} exit probability {exit_prob} limited to {} by the stay probability",
                i + 1,
                1.0 - stay_prob
            ));
            exit_prob = 1.0 - stay_prob;
        }
        systems[i] = SystemConfig {
            amplitude_mean: g.amplitude_mean,
            amplitude_variance,
            exit_prob,
        };
    }

    let config = ChainConfig {
        states_per_system: spsys,
        background_variance,
        stay_prob,
        entry_probs,
        sampling_rate_hz: trace.sampling_rate_hz(),
        systems,
    };
    build_chain(config.clone()).at(FitStage::ChainValidation)?;

    Ok(FitReport {
        config,
        groups,
        detection,
        moments,
        diagnostics: FitDiagnostics {
            event_count: events.len(),
            truncated_count: events.iter().filter(|e| e.truncated).count(),
            background_sample_count,
            oscillation_freq,
            dwell_targets,
            warnings,
        },
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(amplitude: f64, duration: usize) -> ImpulseEvent {
        ImpulseEvent {
            start: 0,
            duration,
            amplitude,
            iat: None,
            iit: None,
            truncated: false,
        }
    }

    #[test]
    fn equal_width_partition() {
        let events: Vec<_> = [1.0, 2.0, 4.0, 5.0, 7.0, 8.0]
            .iter()
            .map(|&a| ev(a, 10))
            .collect();
        let g = classify_groups(&events).unwrap();
        assert_eq!(g.map(|s| s.count), [2, 2, 2]);
        assert!((g[0].interval.1 - 10.0 / 3.0).abs() < 1e-12);
        assert!((g[1].interval.1 - 17.0 / 3.0).abs() < 1e-12);
        assert_eq!(g[2].interval.1, 8.0);
        assert_eq!(g.map(|s| s.amplitude_mean), [1.5, 4.5, 7.5]);
        assert_eq!(g[0].amplitude_variance, 0.25);
        assert_eq!(g[1].mean_duration, 10.0);
    }

    #[test]
    fn boundary_amplitude_goes_to_lower_group() {
        let events: Vec<_> = [0.0, 3.0, 6.0, 9.0].iter().map(|&a| ev(a, 1)).collect();
        let g = classify_groups(&events).unwrap();
        assert_eq!(g.map(|s| s.count), [2, 1, 1]);
    }

    #[test]
    fn equal_amplitudes_are_degenerate() {
        let events: Vec<_> = (0..5).map(|_| ev(3.0, 4)).collect();
        assert!(matches!(
            classify_groups(&events),
            Err(FitError::EmptyGroup { .. })
        ));
        assert!(matches!(
            classify_groups(&events[..2]),
            Err(FitError::TooFewEvents { count: 2 })
        ));
    }

    #[test]
    fn empty_middle_group_reports_bounds() {
        let events: Vec<_> = [1.0, 1.1, 9.0].iter().map(|&a| ev(a, 1)).collect();
        match classify_groups(&events) {
            Err(FitError::EmptyGroup { group: 2, lo, hi }) => {
                assert!((lo - (1.0 + 8.0 / 3.0)).abs() < 1e-12);
                assert!((hi - (1.0 + 16.0 / 3.0)).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_events_skip_duration_mean() {
        let mut events: Vec<_> = [1.0, 2.0, 5.0, 9.0].iter().map(|&a| ev(a, 10)).collect();
        events[0].truncated = true;
        events[0].duration = 3;
        let g = classify_groups(&events).unwrap();
        assert_eq!(g[0].count, 2);
        assert_eq!(g[0].mean_duration, 10.0);
    }

    #[test]
    fn entry_probabilities() {
        let mut groups = classify_groups(&[ev(1.0, 1), ev(5.0, 1), ev(9.0, 1)]).unwrap();
        groups[0].count = 10;
        groups[1].count = 5;
        groups[2].count = 1;
        let p = estimate_entry_probs(&groups, 1_000_000).unwrap();
        assert_eq!(p, [1e-5, 5e-6, 1e-6]);
        groups.iter_mut().for_each(|g| g.count = 0);
        assert_eq!(estimate_entry_probs(&groups, 10).unwrap(), [0.0; 3]);
        groups[0].count = 10;
        assert!(estimate_entry_probs(&groups, 10).is_err());
    }

    #[test]
    fn dwell_targets_telescope() {
        let t = system_dwell_targets([10.0, 30.0, 100.0]);
        assert_eq!(t.samples, [10.0, 20.0, 70.0]);
        assert_eq!(t.clamped, [false; 3]);
        let t = system_dwell_targets([10.0, 8.0, 100.0]);
        assert_eq!(t.samples, [10.0, 1.0, 89.0]);
        assert_eq!(t.clamped, [false, true, false]);
    }

    fn burst_trace(
        freq: f64,
        bursts: usize,
        len: usize,
        rate: f64,
    ) -> (NoiseTrace, Vec<ImpulseEvent>) {
        let spacing = len + 100;
        let mut x = vec![0.0; bursts * spacing];
        let mut events = Vec::new();
        for b in 0..bursts {
            let start = b * spacing + 50;
            for i in 0..len {
                x[start + i] = 3.0 * (2.0 * std::f64::consts::PI * freq * i as f64).sin();
            }
            events.push(ImpulseEvent {
                start,
                ..ev(3.0, len)
            });
        }
        (NoiseTrace::from_f64(&x, rate), events)
    }

    #[test]
    fn sinusoid_bursts_at_800_mhz() {
        let (trace, events) = burst_trace(0.16, 20, 200, 5e9);
        let f =
            estimate_osc_freq(&events, &trace, StatesPerSystem::Six, Window::Rectangular).unwrap();
        assert!((f - 0.16).abs() <= 1.0 / 512.0, "{f}");
        assert!((f * 5e9 - 800e6).abs() <= 5e9 / 512.0);
    }

    #[test]
    fn alternating_bursts_sit_at_nyquist() {
        let mut x = vec![0.0; 1000];
        for (i, v) in x[100..140].iter_mut().enumerate() {
            *v = if i % 2 == 0 { 4.0 } else { -4.0 };
        }
        let trace = NoiseTrace::from_f64(&x, 1.0);
        let events = [ImpulseEvent {
            start: 100,
            ..ev(4.0, 40)
        }];
        let f =
            estimate_osc_freq(&events, &trace, StatesPerSystem::Four, Window::Rectangular).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn short_events_cannot_give_a_frequency() {
        let trace = NoiseTrace::new(vec![1.0; 100], 1.0);
        let events = [ev(1.0, 11)];
        assert!(matches!(
            estimate_osc_freq(&events, &trace, StatesPerSystem::Six, Window::Rectangular),
            Err(FitError::TooShort { needed: 12 })
        ));
    }
}
