use std::fmt;

use super::{
    histogram, impulse_spectrum, kl_divergence, mse_cdf, pearson, Histogram, MetricsError, Window,
};
use crate::detect::{detect_impulses, Detection, ThresholdRule};
use crate::trace::NoiseTrace;

/// Distributions compared between a measured and a model trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Characteristic {
    /// Every sample, background and impulses together.
    SamplesValue,
    ImpulseDuration,
    InterArrivalTime,
    ImpulseAmplitude,
}

impl Characteristic {
    pub const ALL: [Characteristic; 4] = [
        Characteristic::SamplesValue,
        Characteristic::ImpulseDuration,
        Characteristic::InterArrivalTime,
        Characteristic::ImpulseAmplitude,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Characteristic::SamplesValue => "samples_value",
            Characteristic::ImpulseDuration => "impulse_duration",
            Characteristic::InterArrivalTime => "iat",
            Characteristic::ImpulseAmplitude => "impulse_amplitude",
        }
    }

    fn values(self, trace: &NoiseTrace, detection: Option<&Detection>) -> Option<Vec<f64>> {
        match self {
            Characteristic::SamplesValue => {
                Some(trace.samples().iter().map(|&x| f64::from(x)).collect())
            }
            Characteristic::ImpulseDuration => Some(
                detection?
                    .events
                    .iter()
                    .map(|e| e.duration as f64)
                    .collect(),
            ),
            Characteristic::InterArrivalTime => Some(
                detection?
                    .events
                    .iter()
                    .filter_map(|e| e.iat.map(|v| v as f64))
                    .collect(),
            ),
            Characteristic::ImpulseAmplitude => {
                Some(detection?.events.iter().map(|e| e.amplitude).collect())
            }
        }
    }
}

impl fmt::Display for Characteristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub bins: usize,
    pub threshold_rule: ThresholdRule,
    /// Carrier frequencies at which spectrum gaps are reported.
    pub band_centers_hz: Vec<f64>,
    pub band_half_width_hz: f64,
    pub window: Window,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            bins: 200,
            threshold_rule: ThresholdRule::default(),
            band_centers_hz: vec![900e6, 1.8e9, 2.4e9],
            band_half_width_hz: 50e6,
            window: Window::Rectangular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceScores {
    /// KL(measured || model), natural log.
    pub kl: f64,
    pub mse_cdf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicResult {
    pub characteristic: Characteristic,
    pub scores: Result<DivergenceScores, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandGap {
    pub center_hz: f64,
    /// Mean absolute dB difference over the band; `None` when the band lies
    /// outside the spectrum or a spectrum could not be formed.
    pub gap_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub characteristics: Vec<CharacteristicResult>,
    pub band_gaps: Vec<BandGap>,
    /// Duration vs amplitude correlation of the model's impulses.
    pub pearson: Option<f64>,
    /// Detection failure on the model trace, if any.
    pub detection_error: Option<String>,
}

impl MetricsReport {
    pub fn scores(&self, c: Characteristic) -> Option<DivergenceScores> {
        self.characteristics
            .iter()
            .find(|r| r.characteristic == c)
            .and_then(|r| r.scores.as_ref().ok().copied())
    }
}

fn shared_histograms(
    measured: &[f64],
    model: &[f64],
    bins: usize,
) -> Result<(Histogram, Histogram), MetricsError> {
    let range = Histogram::range_of(measured)
        .ok_or_else(|| MetricsError::EmptyInput("no measured values".into()))?;
    Ok((
        histogram(measured, bins, range)?,
        histogram(model, bins, range)?,
    ))
}

fn band_gaps(
    measured: &NoiseTrace,
    measured_det: &Detection,
    model: &NoiseTrace,
    model_det: &Detection,
    config: &CompareConfig,
) -> Vec<BandGap> {
    let longest = measured_det
        .events
        .iter()
        .chain(&model_det.events)
        .map(|e| e.duration)
        .max()
        .unwrap_or(1);
    let fft_size = longest.next_power_of_two().max(2);
    let spectra = impulse_spectrum(&measured_det.events, measured, fft_size, config.window)
        .and_then(|a| {
            impulse_spectrum(&model_det.events, model, fft_size, config.window).map(|b| (a, b))
        });
    config
        .band_centers_hz
        .iter()
        .map(|&center| {
            let gap_db = spectra.as_ref().ok().and_then(|(a, b)| {
                let freqs = a.frequencies_hz();
                let (da, db) = (a.power_db(), b.power_db());
                let gaps: Vec<f64> = freqs
                    .iter()
                    .enumerate()
                    .filter(|(_, &f)| (f - center).abs() <= config.band_half_width_hz)
                    .map(|(k, _)| (da[k] - db[k]).abs())
                    .collect();
                (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64)
            });
            BandGap {
                center_hz: center,
                gap_db,
            }
        })
        .collect()
}

/// Scores each model trace against the measured trace.
///
/// Histogram edges for every characteristic come from the measured trace. A
/// model whose detection fails still gets its samples-value scores; the
/// impulse characteristics then carry the error.
pub fn compare_report(
    measured: &NoiseTrace,
    models: &[(String, NoiseTrace)],
    config: &CompareConfig,
) -> Result<Vec<MetricsReport>, MetricsError> {
    let measured_det = detect_impulses(measured, config.threshold_rule)?;
    let mut reports = Vec::with_capacity(models.len());
    for (name, trace) in models {
        let detection = detect_impulses(trace, config.threshold_rule);
        let det = detection.as_ref().ok();
        let characteristics = Characteristic::ALL
            .iter()
            .map(|&c| {
                let scores = match c.values(trace, det) {
                    None => Err(format!(
                        "detection failed: {}",
                        detection
                            .as_ref()
                            .err()
                            .map(ToString::to_string)
                            .unwrap_or_default()
                    )),
                    Some(model_values) => {
                        let measured_values = c
                            .values(measured, Some(&measured_det))
                            .expect("measured detection is available");
                        shared_histograms(&measured_values, &model_values, config.bins)
                            .and_then(|(p, q)| {
                                Ok(DivergenceScores {
                                    kl: kl_divergence(&p, &q)?,
                                    mse_cdf: mse_cdf(&p, &q)?,
                                })
                            })
                            .map_err(|e| e.to_string())
                    }
                };
                CharacteristicResult {
                    characteristic: c,
                    scores,
                }
            })
            .collect();
        let band_gaps = match det {
            Some(d) => band_gaps(measured, &measured_det, trace, d, config),
            None => config
                .band_centers_hz
                .iter()
                .map(|&center_hz| BandGap {
                    center_hz,
                    gap_db: None,
                })
                .collect(),
        };
        let pearson = det.and_then(|d| {
            let durations: Vec<f64> = d.events.iter().map(|e| e.duration as f64).collect();
            let amplitudes: Vec<f64> = d.events.iter().map(|e| e.amplitude).collect();
            pearson(&durations, &amplitudes).ok()
        });
        reports.push(MetricsReport {
            model: name.clone(),
            characteristics,
            band_gaps,
            pearson,
            detection_error: detection.err().map(|e| e.to_string()),
        });
    }
    Ok(reports)
}
