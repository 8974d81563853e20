//! Uniformly sampled real-valued noise recordings.

/// A uniformly sampled real signal together with its sampling rate.
///
/// Samples are stored as `f32`, the on-disk precision of trace files, so a
/// trace written and read back is bit-identical. Statistics are always
/// accumulated in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    samples: Vec<f32>,
    sampling_rate_hz: f64,
}

impl NoiseTrace {
    /// Panics if `sampling_rate_hz` is not a positive finite number.
    pub fn new(samples: Vec<f32>, sampling_rate_hz: f64) -> Self {
        assert!(
            sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0,
            "sampling rate must be positive, got {sampling_rate_hz}"
        );
        Self {
            samples,
            sampling_rate_hz,
        }
    }

    pub fn from_f64(samples: &[f64], sampling_rate_hz: f64) -> Self {
        Self::new(
            samples.iter().map(|&x| x as f32).collect(),
            sampling_rate_hz,
        )
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample at `index` widened to `f64`.
    pub fn at(&self, index: usize) -> f64 {
        f64::from(self.samples[index])
    }

    /// Population variance about the sample mean.
    pub fn variance(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        self.samples
            .iter()
            .map(|&x| {
                let d = f64::from(x) - mean;
                d * d
            })
            .sum::<f64>()
            / n
    }
}
