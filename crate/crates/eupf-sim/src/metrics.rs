//! Series smoothing and descriptive statistics for episode records.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty series")]
    EmptySeries,
    #[error("window of {requested} exceeds series length {available}")]
    WindowTooLarge { requested: usize, available: usize },
}

/// Trailing mean over `window` elements. Before a full window accumulates,
/// each element is the mean of the prefix so far, so the smoothed curve
/// starts at the first element instead of `window - 1` elements in.
pub fn rolling_mean(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (j, &v) in series.iter().enumerate() {
        sum += v;
        if j >= window {
            sum -= series[j - window];
        }
        let count = (j + 1).min(window);
        out.push(sum / count as f64);
    }
    out
}

/// Five-number-style summary of one metric over a set of episodes.
/// Standard deviation is the population form (divide by n, not n - 1).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DescriptiveStats {
    pub mean: f64,
    pub standard_deviation: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl DescriptiveStats {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::EmptySeries);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;

        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("metric values must be comparable"));
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        };
        Ok(DescriptiveStats {
            mean,
            standard_deviation: variance.sqrt(),
            median,
            min: sorted[0],
            max: *sorted.last().unwrap(),
        })
    }

    /// Spread of the values: max minus min.
    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

/// Statistics over the trailing `n` values. Rejects windows longer than the
/// series rather than silently shrinking them.
pub fn summarize_last(values: &[f64], n: usize) -> Result<DescriptiveStats, MetricsError> {
    if n == 0 || values.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    if n > values.len() {
        return Err(MetricsError::WindowTooLarge { requested: n, available: values.len() });
    }
    DescriptiveStats::from_values(&values[values.len() - n..])
}
