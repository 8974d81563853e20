use super::MetricsError;

/// Uniform-width histogram normalized to probability mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    lo: f64,
    hi: f64,
    masses: Vec<f64>,
    total_count: u64,
    clipped: u64,
}

/// Bins `values` into `bin_count` equal-width bins over `range`. Values
/// outside the range land in the end bins and are counted as clipped.
pub fn histogram(
    values: &[f64],
    bin_count: usize,
    range: (f64, f64),
) -> Result<Histogram, MetricsError> {
    let (lo, hi) = range;
    if bin_count < 2 {
        return Err(MetricsError::InvalidArgument(format!(
            "at least 2 bins are needed, got {bin_count}"
        )));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(MetricsError::InvalidArgument(format!(
            "histogram range [{lo}, {hi}] is degenerate"
        )));
    }
    if values.is_empty() {
        return Err(MetricsError::EmptyInput("no values to bin".into()));
    }
    let width = (hi - lo) / bin_count as f64;
    let mut counts = vec![0u64; bin_count];
    let mut clipped = 0;
    for &v in values {
        if v < lo || v > hi {
            clipped += 1;
        }
        let b = ((v - lo) / width).floor();
        let b = if b.is_nan() || b < 0.0 {
            0
        } else {
            (b as usize).min(bin_count - 1)
        };
        counts[b] += 1;
    }
    let mut h = Histogram::from_counts(lo, hi, &counts)?;
    h.clipped = clipped;
    Ok(h)
}

impl Histogram {
    pub fn from_counts(lo: f64, hi: f64, counts: &[u64]) -> Result<Self, MetricsError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MetricsError::EmptyInput("all bin counts are zero".into()));
        }
        if counts.len() < 2 || !(hi > lo) {
            return Err(MetricsError::InvalidArgument(
                "a histogram needs at least 2 bins over a nondegenerate range".into(),
            ));
        }
        Ok(Self {
            lo,
            hi,
            masses: counts.iter().map(|&c| c as f64 / total as f64).collect(),
            total_count: total,
            clipped: 0,
        })
    }

    /// Range spanning `values`, widened by half a unit on each side when
    /// every value is equal.
    pub fn range_of(values: &[f64]) -> Option<(f64, f64)> {
        let mut it = values.iter().copied().filter(|v| v.is_finite());
        let first = it.next()?;
        let (lo, hi) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi > lo {
            Some((lo, hi))
        } else {
            Some((lo - 0.5, hi + 0.5))
        }
    }

    pub fn bin_count(&self) -> usize {
        self.masses.len()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.masses.len() as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.masses.len())
            .map(|i| {
                if i == self.masses.len() {
                    self.hi
                } else {
                    self.lo + i as f64 * w
                }
            })
            .collect()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn clipped(&self) -> u64 {
        self.clipped
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.masses
            .iter()
            .scan(0.0, |acc, &m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }

    pub fn same_edges(&self, other: &Histogram) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.masses.len() == other.masses.len()
    }
}
