//! Order statistics for sweep aggregation: nearest-rank percentiles and
//! boxplot summaries with 1.5 IQR whiskers.

use serde::{Deserialize, Serialize};

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest value (rank
/// clamped to at least 1). Deterministic and interpolation-free, so small
/// seed counts degrade to min/median/max rather than invented values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty slice");
    assert!((0.0..=100.0).contains(&p), "percentile {p} outside [0, 100]");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Five-number boxplot summary. Whiskers reach the most extreme data
/// points still within 1.5 IQR of the quartiles; everything beyond is an
/// outlier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    /// Points outside the whisker fences, ascending.
    pub outliers: Vec<f64>,
}

pub fn box_stats(values: &[f64]) -> BoxStats {
    assert!(!values.is_empty(), "box stats of an empty slice");
    let q1 = percentile(values, 25.0);
    let median = percentile(values, 50.0);
    let q3 = percentile(values, 75.0);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let whisker_lo = *sorted
        .iter()
        .find(|&&v| v >= lo_fence)
        .expect("q1 is within the fences");
    let whisker_hi = *sorted
        .iter()
        .rev()
        .find(|&&v| v <= hi_fence)
        .expect("q3 is within the fences");
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < lo_fence || v > hi_fence)
        .collect();
    BoxStats {
        q1,
        median,
        q3,
        whisker_lo,
        whisker_hi,
        outliers,
    }
}
