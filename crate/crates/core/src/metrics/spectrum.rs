use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::MetricsError;
use crate::detect::ImpulseEvent;
use crate::trace::NoiseTrace;

/// Taper applied to each segment before its transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn weights(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann if len == 1 => vec![1.0],
            Window::Hann => (0..len)
                .map(|n| {
                    0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()
                })
                .collect(),
        }
    }
}

/// One-sided power spectral density, in power per Hz.
///
/// Each segment's periodogram is scaled so that `sum(density) * bin_width`
/// equals the segment's mean-square value (for the rectangular window).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    sampling_rate_hz: f64,
    fft_size: usize,
    density: Vec<f64>,
    segments: usize,
}

impl Spectrum {
    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn bin_width_hz(&self) -> f64 {
        self.sampling_rate_hz / self.fft_size as f64
    }

    pub fn frequencies_hz(&self) -> Vec<f64> {
        let df = self.bin_width_hz();
        (0..self.density.len()).map(|k| k as f64 * df).collect()
    }

    pub fn power_db(&self) -> Vec<f64> {
        self.density
            .iter()
            .map(|&p| 10.0 * p.max(f64::MIN_POSITIVE).log10())
            .collect()
    }

    /// Total power, `sum(density) * bin_width`.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.bin_width_hz()
    }

    /// Bin with the largest density, ignoring DC. Bins are compared on
    /// their two-sided level so the unfolded Nyquist bin is not penalized.
    pub fn peak_bin(&self) -> usize {
        let nyquist = self.fft_size / 2;
        self.density
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &p)| (k, if k == nyquist { p } else { p / 2.0 }))
            .fold((1, f64::NEG_INFINITY), |best, (k, p)| {
                if p > best.1 {
                    (k, p)
                } else {
                    best
                }
            })
            .0
    }

    pub fn peak_frequency_hz(&self) -> f64 {
        self.peak_bin() as f64 * self.bin_width_hz()
    }

    /// Peak location in cycles per sample.
    pub fn peak_frequency_normalized(&self) -> f64 {
        self.peak_bin() as f64 / self.fft_size as f64
    }
}

struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    fft_size: usize,
    sampling_rate_hz: f64,
    window: Window,
    buffer: Vec<Complex<f64>>,
}

impl Periodogram {
    fn new(fft_size: usize, sampling_rate_hz: f64, window: Window) -> Result<Self, MetricsError> {
        if fft_size < 2 || !fft_size.is_power_of_two() {
            return Err(MetricsError::InvalidArgument(format!(
                "fft size must be a power of two >= 2, got {fft_size}"
            )));
        }
        Ok(Self {
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            fft_size,
            sampling_rate_hz,
            window,
            buffer: vec![Complex::default(); fft_size],
        })
    }

    /// Adds the one-sided density of `segment` (zero-padded) into `acc`.
    fn accumulate(&mut self, segment: &[f32], acc: &mut [f64]) {
        let w = self.window.weights(segment.len());
        let energy_norm: f64 = w.iter().map(|v| v * v).sum();
        self.buffer.iter_mut().for_each(|c| *c = Complex::default());
        for (slot, (&x, wn)) in self.buffer.iter_mut().zip(segment.iter().zip(&w)) {
            slot.re = f64::from(x) * wn;
        }
        self.fft.process(&mut self.buffer);
        let n = self.fft_size;
        let df = self.sampling_rate_hz / n as f64;
        let scale = 1.0 / (n as f64 * energy_norm * df);
        for (k, a) in acc.iter_mut().enumerate() {
            let mut p = self.buffer[k].norm_sqr();
            if k != 0 && k != n / 2 {
                p += self.buffer[n - k].norm_sqr();
            }
            *a += p * scale;
        }
    }
}

/// Mean of the per-event periodograms of the samples spanned by `events`.
pub fn impulse_spectrum(
    events: &[ImpulseEvent],
    trace: &NoiseTrace,
    fft_size: usize,
    window: Window,
) -> Result<Spectrum, MetricsError> {
    if events.is_empty() {
        return Err(MetricsError::EmptyInput("no impulse events".into()));
    }
    let longest = events.iter().map(|e| e.duration).max().unwrap_or(0);
    if fft_size < longest {
        return Err(MetricsError::TooShort { fft_size, longest });
    }
    let mut pg = Periodogram::new(fft_size, trace.sampling_rate_hz(), window)?;
    let mut acc = vec![0.0; fft_size / 2 + 1];
    for e in events {
        pg.accumulate(&trace.samples()[e.start..=e.end()], &mut acc);
    }
    let count = events.len() as f64;
    acc.iter_mut().for_each(|v| *v /= count);
    Ok(Spectrum {
        sampling_rate_hz: trace.sampling_rate_hz(),
        fft_size,
        density: acc,
        segments: events.len(),
    })
}

/// Averaged periodogram of consecutive non-overlapping `fft_size` segments.
pub fn trace_spectrum(
    trace: &NoiseTrace,
    fft_size: usize,
    window: Window,
) -> Result<Spectrum, MetricsError> {
    let mut pg = Periodogram::new(fft_size, trace.sampling_rate_hz(), window)?;
    if trace.len() < fft_size {
        return Err(MetricsError::TooShort {
            fft_size,
            longest: trace.len(),
        });
    }
    let mut acc = vec![0.0; fft_size / 2 + 1];
    let mut segments = 0;
    for chunk in trace.samples().chunks_exact(fft_size) {
        pg.accumulate(chunk, &mut acc);
        segments += 1;
    }
    acc.iter_mut().for_each(|v| *v /= segments as f64);
    Ok(Spectrum {
        sampling_rate_hz: trace.sampling_rate_hz(),
        fft_size,
        density: acc,
        segments,
    })
}
