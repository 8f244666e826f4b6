//! Greedy variance-reduction split search on a single feature.

use crate::error::{Error, Result};

/// Best split found on one feature: rows with `value <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub threshold: f64,
    /// Reduction in the sum of squared errors.
    pub gain: f64,
}

/// Threshold strictly separating `lo < hi`: `lo <= t < hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Gains at or below this are rounding noise, not structure.
pub(crate) fn min_gain(count: usize, sum_sq: f64) -> f64 {
    1e-14 * sum_sq.max(f64::MIN_POSITIVE) + 1e-300 * count as f64
}

#[inline]
pub(crate) fn sse_reduction(left_n: f64, left_sum: f64, n: f64, sum: f64) -> f64 {
    let right_n = n - left_n;
    let right_sum = sum - left_sum;
    left_sum * left_sum / left_n + right_sum * right_sum / right_n - sum * sum / n
}

/// Running state of an ascending scan through one node's rows on one feature.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SplitScan {
    count: usize,
    sum: f64,
    last: f64,
    pub(crate) best: Option<Split>,
}

impl SplitScan {
    pub(crate) fn new() -> Self {
        SplitScan {
            count: 0,
            sum: 0.0,
            last: f64::NEG_INFINITY,
            best: None,
        }
    }

    /// Feeds the next row in ascending value order. `total_n`/`total_sum`
    /// describe the whole node.
    #[inline]
    pub(crate) fn push(
        &mut self,
        value: f64,
        target: f64,
        total_n: usize,
        total_sum: f64,
        min_leaf: usize,
    ) {
        if self.count > 0
            && value > self.last
            && self.count >= min_leaf
            && total_n - self.count >= min_leaf
        {
            let gain = sse_reduction(self.count as f64, self.sum, total_n as f64, total_sum);
            if self.best.is_none_or(|b| gain > b.gain) {
                self.best = Some(Split {
                    threshold: midpoint(self.last, value),
                    gain,
                });
            }
        }
        self.count += 1;
        self.sum += target;
        self.last = value;
    }
}

/// Best variance-reduction threshold over midpoints of consecutive distinct
/// values, with at least `min_leaf` rows per side. Ties go to the smallest
/// threshold. `None` when no split reduces the error.
pub fn split_search(values: &[f64], targets: &[f64], min_leaf: usize) -> Result<Option<Split>> {
    if values.len() != targets.len() {
        return Err(Error::LengthMismatch(values.len(), targets.len()));
    }
    let min_leaf = min_leaf.max(1);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total_sum: f64 = targets.iter().sum();
    let sum_sq: f64 = targets.iter().map(|t| t * t).sum();
    let mut scan = SplitScan::new();
    for &i in &order {
        scan.push(values[i], targets[i], values.len(), total_sum, min_leaf);
    }
    Ok(scan
        .best
        .filter(|s| s.gain > min_gain(values.len(), sum_sq)))
}
