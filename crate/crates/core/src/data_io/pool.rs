use serde::{Deserialize, Serialize};

use crate::conjugate::StudyEstimate;
use crate::error::{Error, Result};

/// Correctly rounded sum of `values` (Shewchuk's exact partials, as in
/// Python's `math.fsum`). The result does not depend on the input order.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }

    // Round the partials (non-overlapping, increasing magnitude) to nearest.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// Fixed-effect pooled estimate with its exact variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub estimate: f64,
    /// 1 / Σ w_j.
    pub variance: f64,
    pub std_error: f64,
    pub total_weight: f64,
}

/// Inverse-variance (fixed-effect) pooling with weights w_j = 1/se_j².
///
/// Sums are correctly rounded, so the result is exactly invariant to the
/// order of `estimates`, and pooling a list concatenated with itself
/// returns the same estimate with exactly half the variance.
pub fn pool_fixed_effect_detailed(estimates: &[StudyEstimate]) -> Result<PooledEstimate> {
    if estimates.is_empty() {
        return Err(Error::Validation(
            "cannot pool an empty list of estimates".into(),
        ));
    }
    for e in estimates {
        e.validate()?;
    }
    let weights: Vec<f64> = estimates.iter().map(|e| 1.0 / e.variance()).collect();
    let total = exact_sum(weights.iter().copied());
    let weighted = exact_sum(weights.iter().zip(estimates).map(|(w, e)| w * e.estimate));
    let variance = 1.0 / total;
    Ok(PooledEstimate {
        estimate: weighted / total,
        variance,
        std_error: variance.sqrt(),
        total_weight: total,
    })
}

/// Pools several estimates of the same effect into one. A single estimate
/// is returned unchanged.
pub fn pool_fixed_effect(estimates: &[StudyEstimate]) -> Result<StudyEstimate> {
    if let [single] = estimates {
        single.validate()?;
        return Ok(single.clone());
    }
    let p = pool_fixed_effect_detailed(estimates)?;
    Ok(StudyEstimate {
        estimate: p.estimate,
        std_error: p.std_error,
        label: None,
    })
}
