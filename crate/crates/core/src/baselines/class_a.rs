use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use super::BaselineError;
use crate::detect::SampleMoments;
use crate::trace::NoiseTrace;

/// Bounds of the `(A, Gamma)` search box used by [`fit_class_a`].
pub const SEARCH_MIN: f64 = 1e-6;
pub const SEARCH_MAX: f64 = 10.0;

/// Middleton Class-A parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAParams {
    /// Impulsive index `A`: mean number of active emitters.
    pub impulsive_index: f64,
    /// Gaussian-to-impulsive power ratio `Gamma`.
    pub power_ratio: f64,
    /// Total variance.
    pub variance: f64,
    /// Highest Poisson term kept in the sum.
    pub truncation: u32,
    pub sampling_rate_hz: f64,
}

/// `max(20, ceil(A + 10 sqrt(A)))`.
pub fn default_truncation(impulsive_index: f64) -> u32 {
    let m = (impulsive_index + 10.0 * impulsive_index.sqrt()).ceil();
    (m as u32).max(20)
}

impl ClassAParams {
    pub fn new(
        impulsive_index: f64,
        power_ratio: f64,
        variance: f64,
        sampling_rate_hz: f64,
    ) -> Self {
        Self {
            impulsive_index,
            power_ratio,
            variance,
            truncation: default_truncation(impulsive_index),
            sampling_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.impulsive_index) || !ok(self.power_ratio) || !ok(self.variance) {
            return Err(BaselineError::InvalidParams(format!(
                "A ({}), Gamma ({}) and variance ({}) must be positive",
                self.impulsive_index, self.power_ratio, self.variance
            )));
        }
        if self.truncation < 1 {
            return Err(BaselineError::InvalidParams(
                "truncation order must be at least 1".into(),
            ));
        }
        if !ok(self.sampling_rate_hz) {
            return Err(BaselineError::InvalidParams(format!(
                "sampling rate {} must be positive",
                self.sampling_rate_hz
            )));
        }
        Ok(())
    }

    /// Poisson weights `e^-A A^m / m!` for `m = 0..=M`.
    pub fn poisson_weights(&self) -> Vec<f64> {
        let a = self.impulsive_index;
        (0..=self.truncation)
            .map(|m| {
                let m = f64::from(m);
                (-a + m * a.ln() - ln_gamma(m + 1.0)).exp()
            })
            .collect()
    }

    /// Variance of the `m`-th Gaussian term, `sigma^2 (m/A + Gamma) / (1 + Gamma)`.
    pub fn term_variance(&self, m: u32) -> f64 {
        self.variance * (f64::from(m) / self.impulsive_index + self.power_ratio)
            / (1.0 + self.power_ratio)
    }
}

/// Probability mass of the Poisson terms dropped by the truncation.
pub fn class_a_tail_mass(params: &ClassAParams) -> f64 {
    (1.0 - params.poisson_weights().iter().sum::<f64>()).max(0.0)
}

/// Truncated Class-A density at `x`. It integrates to one minus
/// [`class_a_tail_mass`].
pub fn class_a_pdf(x: f64, params: &ClassAParams) -> f64 {
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    params
        .poisson_weights()
        .iter()
        .enumerate()
        .map(|(m, w)| {
            let v = params.term_variance(m as u32);
            w * (-x * x / (2.0 * v)).exp() / (norm * v.sqrt())
        })
        .sum()
}

/// Distribution function of the truncated mixture renormalized over the kept
/// terms, i.e. the law sampled by [`generate_class_a`].
pub fn class_a_cdf(x: f64, params: &ClassAParams) -> f64 {
    let weights = params.poisson_weights();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .enumerate()
        .map(|(m, w)| {
            let sd = params.term_variance(m as u32).sqrt();
            w * Normal::new(0.0, sd).expect("positive sd").cdf(x)
        })
        .sum::<f64>()
        / total
}

/// Normalized excess moment ratios `(e4 / 3 e2^2 - 1, e6 / 15 e2^3 - 1)` of
/// the untruncated mixture.
pub fn moment_ratios(impulsive_index: f64, power_ratio: f64) -> (f64, f64) {
    let a = impulsive_index;
    let g1 = 1.0 + power_ratio;
    let r4 = 1.0 / (a * g1 * g1);
    let r6 = 3.0 / (a * g1 * g1) + 1.0 / (a * a * g1 * g1 * g1);
    (r4, r6)
}

/// Method-of-moments fit from a trace.
pub fn fit_class_a(trace: &NoiseTrace) -> Result<ClassAParams, BaselineError> {
    fit_class_a_moments(&SampleMoments::of(trace), trace.sampling_rate_hz())
}

/// Matches the fourth and sixth moment ratios.
///
/// For a given `Gamma` the fourth-moment equation fixes `A`; the remaining
/// sixth-moment residual is increasing in `Gamma` and is bisected over the
/// search box.
pub fn fit_class_a_moments(
    moments: &SampleMoments,
    sampling_rate_hz: f64,
) -> Result<ClassAParams, BaselineError> {
    let e2 = moments.e2;
    if !(e2 > 0.0) {
        return Err(BaselineError::Degenerate("zero second moment".into()));
    }
    let r4 = moments.e4 / (3.0 * e2 * e2) - 1.0;
    let r6 = moments.e6 / (15.0 * e2 * e2 * e2) - 1.0;
    let no_root = BaselineError::NoRoot { r4, r6 };
    if !(r4 > 0.0 && r6 > 0.0) {
        return Err(no_root);
    }
    let index_for = |gamma: f64| 1.0 / (r4 * (1.0 + gamma).powi(2));
    let residual = |gamma: f64| moment_ratios(index_for(gamma), gamma).1 - r6;

    let (mut lo, mut hi) = (SEARCH_MIN, SEARCH_MAX);
    let (r_lo, r_hi) = (residual(lo), residual(hi));
    if r_lo > 0.0 || r_hi < 0.0 {
        return Err(no_root);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if residual(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);
    let a = index_for(gamma);
    if !(SEARCH_MIN..=SEARCH_MAX).contains(&a) {
        return Err(no_root);
    }
    let params = ClassAParams::new(a, gamma, e2, sampling_rate_hz);
    params.validate()?;
    Ok(params)
}

/// Draws i.i.d. samples: a Poisson term index (renormalized over the kept
/// terms), then a zero-mean Gaussian of that term's variance.
pub fn generate_class_a(
    params: &ClassAParams,
    n: usize,
    seed: u64,
) -> Result<NoiseTrace, BaselineError> {
    params.validate()?;
    let weights = params.poisson_weights();
    let total: f64 = weights.iter().sum();
    let cumulative: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let sds: Vec<f64> = (0..=params.truncation)
        .map(|m| params.term_variance(m).sqrt())
        .collect();
    let last = sds.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let m = cumulative.partition_point(|&c| c <= u).min(last);
            let z: f64 = rng.sample(StandardNormal);
            (sds[m] * z) as f32
        })
        .collect();
    Ok(NoiseTrace::new(samples, params.sampling_rate_hz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heavy_tailed() -> ClassAParams {
        ClassAParams::new(0.1, 0.01, 1.0, 1.0)
    }

    /// Trapezoid rule on a uniform grid.
    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, steps: usize) -> f64 {
        let h = (hi - lo) / steps as f64;
        let inner: f64 = (1..steps).map(|i| f(lo + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(lo) + f(hi)))
    }

    #[test]
    fn truncation_default() {
        assert_eq!(default_truncation(0.1), 20);
        assert_eq!(default_truncation(1000.0), 1317);
    }

    #[test]
    fn density_integrates_to_one() {
        let p = heavy_tailed();
        // The narrowest term has sd ~0.1; the widest ~sqrt(200).
        let total = integrate(|x| class_a_pdf(x, &p), -200.0, 200.0, 800_000);
        let tail = class_a_tail_mass(&p);
        assert!(tail < 1e-12);
        assert!((total - 1.0).abs() < 1e-6, "{total}");
        assert!((total - (1.0 - tail)).abs() < 1e-8);
    }

    #[test]
    fn density_is_even_and_nonnegative() {
        let p = heavy_tailed();
        for i in 0..200 {
            let x = -20.0 + 0.2 * i as f64;
            assert_eq!(class_a_pdf(x, &p), class_a_pdf(-x, &p));
            assert!(class_a_pdf(x, &p) >= 0.0);
        }
    }

    #[test]
    fn large_index_approaches_gaussian() {
        let p = ClassAParams::new(1000.0, 0.01, 1.0, 1.0);
        let gauss = Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::Continuous;
        let sup = (0..=400)
            .map(|i| -5.0 + 0.025 * i as f64)
            .map(|x| (class_a_pdf(x, &p) - gauss.pdf(x)).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-3, "sup distance {sup}");
    }

    #[test]
    fn analytic_moments_are_inverted() {
        let (r4, r6) = moment_ratios(0.1, 0.01);
        let m = SampleMoments {
            count: 1,
            e2: 2.0,
            e4: 3.0 * 4.0 * (1.0 + r4),
            e6: 15.0 * 8.0 * (1.0 + r6),
        };
        let p = fit_class_a_moments(&m, 1.0).unwrap();
        assert!((p.impulsive_index - 0.1).abs() < 1e-9);
        assert!((p.power_ratio - 0.01).abs() < 1e-9);
        assert_eq!(p.variance, 2.0);
    }

    #[test]
    fn gaussian_moments_have_no_root() {
        let m = SampleMoments {
            count: 1,
            e2: 1.0,
            e4: 3.0,
            e6: 15.0,
        };
        assert!(matches!(
            fit_class_a_moments(&m, 1.0),
            Err(BaselineError::NoRoot { .. })
        ));
    }

    #[test]
    fn generation_is_deterministic_and_heavy_tailed() {
        let p = heavy_tailed();
        let a = generate_class_a(&p, 200_000, 5).unwrap();
        let b = generate_class_a(&p, 200_000, 5).unwrap();
        assert_eq!(a, b);
        let m = SampleMoments::of(&a);
        assert!(m.e4 / (m.e2 * m.e2) > 3.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = heavy_tailed();
        p.power_ratio = 0.0;
        assert!(generate_class_a(&p, 10, 0).is_err());
    }
}
