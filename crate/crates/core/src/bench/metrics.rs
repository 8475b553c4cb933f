//! Accuracy and divergence metrics.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Running sums of squared errors, split by substate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SquaredErrors {
    pub sum_l: f64,
    pub count_l: usize,
    pub sum_n: f64,
    pub count_n: usize,
}

impl SquaredErrors {
    /// Adds one run's errors; `d_l` leading components form the linear block.
    pub fn add_run(&mut self, truth: &[Vector], estimate: &[Vector], d_l: usize) -> Result<()> {
        if truth.len() != estimate.len() {
            return Err(Error::LengthMismatch { expected: truth.len(), got: estimate.len() });
        }
        for (x, e) in truth.iter().zip(estimate) {
            if x.len() != e.len() || x.len() < d_l {
                return Err(Error::DimensionMismatch { expected: x.len(), got: e.len() });
            }
            let d = e - x;
            self.sum_l += d.rows(0, d_l).norm_squared();
            self.sum_n += d.rows(d_l, d.len() - d_l).norm_squared();
            self.count_l += d_l;
            self.count_n += d.len() - d_l;
        }
        Ok(())
    }

    pub fn merge(&mut self, o: &SquaredErrors) {
        self.sum_l += o.sum_l;
        self.count_l += o.count_l;
        self.sum_n += o.sum_n;
        self.count_n += o.count_n;
    }

    /// `(RMSE_L, RMSE_N)`; NaN for a block with no samples.
    pub fn rmse(&self) -> (f64, f64) {
        let r = |s: f64, c: usize| if c == 0 { f64::NAN } else { (s / c as f64).sqrt() };
        (r(self.sum_l, self.count_l), r(self.sum_n, self.count_n))
    }
}

/// RMSE over all runs, steps and components of each substate.
pub fn rmse(truths: &[Vec<Vector>], estimates: &[Vec<Vector>], d_l: usize) -> Result<(f64, f64)> {
    if truths.len() != estimates.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), got: estimates.len() });
    }
    let mut acc = SquaredErrors::default();
    for (t, e) in truths.iter().zip(estimates) {
        acc.add_run(t, e, d_l)?;
    }
    Ok(acc.rmse())
}

/// True when the error norm of any position sub-block of `x_N` exceeds
/// `threshold` at any step. Positions are consecutive blocks of size `block`
/// starting at `d_l`; non-finite estimates count as divergence.
pub fn detect_divergence(truth: &[Vector], estimate: &[Vector], d_l: usize, block: usize, threshold: f64) -> bool {
    let block = block.max(1);
    truth.iter().zip(estimate).any(|(x, e)| {
        let d = e - x;
        let d_n = d.len().saturating_sub(d_l);
        (0..d_n.div_ceil(block)).any(|i| {
            let start = d_l + i * block;
            let len = block.min(d.len() - start);
            let n = d.rows(start, len).norm();
            !(n <= threshold)
        })
    })
}

/// Median of the samples (mean of the middle pair for even counts); NaN
/// when empty.
pub fn median(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut v = samples.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
