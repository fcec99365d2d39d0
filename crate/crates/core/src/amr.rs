//! Fixed-fraction marking: the given share of elements with the largest
//! indicators is refined.

use serde::{Deserialize, Serialize};

use crate::estimator::ElementEstimates;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSet {
    pub flags: Vec<bool>,
    pub count: usize,
    pub fraction: f64,
}

/// Flags the `ceil(fraction * N)` largest indicators; equal values go to the
/// lower element id first.
pub fn flag_top_fraction(estimates: &ElementEstimates, fraction: f64) -> Result<FlagSet> {
    flag_values(&estimates.theta, fraction)
}

pub fn flag_values(theta: &[f64], fraction: f64) -> Result<FlagSet> {
    if theta.is_empty() {
        return Err(Error::EmptyEstimates);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("flag fraction {fraction} outside (0, 1]")));
    }
    let n = theta.len();
    // guard against 0.4 * 10 = 4.000000000000001
    let count = ((fraction * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| theta[b].total_cmp(&theta[a]).then(a.cmp(&b)));
    let mut flags = vec![false; n];
    for &e in &order[..count] {
        flags[e] = true;
    }
    Ok(FlagSet { flags, count, fraction })
}

/// Every element flagged.
pub fn flag_all(n: usize) -> FlagSet {
    FlagSet { flags: vec![true; n], count: n, fraction: 1.0 }
}
