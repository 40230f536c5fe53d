use serde::{Deserialize, Serialize};

/// Empirical distribution of a per-snapshot metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfSummary {
    /// Samples in ascending order.
    pub sorted: Vec<f64>,
    pub mean: f64,
}

impl CdfSummary {
    /// Summary of `samples` (in snapshot order; the mean is summed in that order).
    pub fn new(samples: &[f64]) -> Self {
        let mean = if samples.is_empty() {
            f64::NAN
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        let mut sorted = samples.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        CdfSummary { sorted, mean }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Linearly interpolated percentile, `q ∈ [0, 1]`.
    pub fn percentile(&self, q: f64) -> f64 {
        let n = self.sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo])
    }

    /// Value exceeded with probability `p`; `likely(0.9)` is the 10th percentile.
    pub fn likely(&self, p: f64) -> f64 {
        self.percentile(1.0 - p)
    }
}
