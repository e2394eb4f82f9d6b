//! Weighted soft Dice loss over per-voxel liver probabilities, its analytic
//! gradient, and the Jaccard index used for validation-based model selection.

use crate::error::{Error, Result};
use crate::volume::LabelVolume;

/// Smoothing added to the Dice denominator only, so a perfect prediction
/// still scores near zero and a liver-free batch cannot divide by zero.
pub const DICE_EPSILON: f64 = 1e-6;

fn check_inputs(p: &[f64], y: &[u8], w: &[u8]) -> Result<()> {
    if p.len() != y.len() || p.len() != w.len() {
        return Err(Error::invalid(format!(
            "dice loss inputs must have equal lengths, got p={}, y={}, w={}",
            p.len(),
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|&v| v > 1) || y.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels and weights must be 0 or 1".to_string()));
    }
    if w.iter().all(|&v| v == 0) {
        return Err(Error::EmptyAnnotation(
            "batch has no annotated voxels; resample instead of scoring".to_string(),
        ));
    }
    Ok(())
}

/// `L = 1 - 2*sum(w*y*p) / (sum(w*y) + sum(w*p) + eps)`.
pub fn dice_loss(p: &[f64], y: &[u8], w: &[u8]) -> Result<f64> {
    check_inputs(p, y, w)?;
    let mut num = 0.0;
    let mut den = DICE_EPSILON;
    for i in 0..p.len() {
        if w[i] == 1 {
            let yi = f64::from(y[i]);
            num += 2.0 * yi * p[i];
            den += yi + p[i];
        }
    }
    Ok(1.0 - num / den)
}

/// Analytic `dL/dp_i`; exactly zero wherever `w_i = 0`.
pub fn dice_loss_grad(p: &[f64], y: &[u8], w: &[u8]) -> Result<Vec<f64>> {
    check_inputs(p, y, w)?;
    let mut num = 0.0;
    let mut den = DICE_EPSILON;
    for i in 0..p.len() {
        if w[i] == 1 {
            let yi = f64::from(y[i]);
            num += 2.0 * yi * p[i];
            den += yi + p[i];
        }
    }
    let den2 = den * den;
    let grad = (0..p.len())
        .map(|i| {
            if w[i] == 1 {
                -(2.0 * f64::from(y[i]) * den - num) / den2
            } else {
                0.0
            }
        })
        .collect();
    Ok(grad)
}

/// `|X ∩ Y| / |X ∪ Y|`; two empty masks count as a perfect match.
pub fn jaccard(pred: &LabelVolume, reference: &LabelVolume) -> Result<f64> {
    if pred.dims() != reference.dims() {
        return Err(Error::invalid(format!(
            "jaccard dims mismatch: {:?} vs {:?}",
            pred.dims(),
            reference.dims()
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.data().iter().zip(reference.data()) {
        inter += usize::from(a == 1 && b == 1);
        union += usize::from(a == 1 || b == 1);
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}
