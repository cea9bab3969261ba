use crate::error::{Error, Result};

/// Floor applied to the target probability inside [`cross_entropy`].
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_row(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("softmax input is not finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// `−ln p[target]` with the probability clamped at [`PROBABILITY_FLOOR`].
pub fn cross_entropy(probabilities: &[f64], target_index: usize) -> Result<f64> {
    let p = probabilities.get(target_index).ok_or_else(|| {
        Error::arg(format!(
            "target index {target_index} out of range for {} classes",
            probabilities.len()
        ))
    })?;
    Ok(-p.max(PROBABILITY_FLOOR).ln())
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
