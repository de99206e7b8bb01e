//! Normalized log-domain MSE between a PSD estimate and the true PSD.

use serde::Serialize;

use crate::mtm::PsdEstimate;
use crate::{Error, Result};

/// Floor applied to non-positive estimate power before taking logs.
pub const POWER_FLOOR: f64 = 1e-30;

/// Result of the normalized-MSE evaluation.
///
/// `value = mean_f (ln est(f) - ln truth(f))^2` over the shared grid with
/// `f = 0` excluded (the DC estimate reflects the mean rate rather than the
/// spectrum): the squared error of the estimate normalized by the true PSD,
/// measured in the log scale.
#[derive(Debug, Clone, Serialize)]
pub struct NormalizedMse {
    pub value: f64,
    pub per_frequency_terms: Vec<f64>,
    /// Frequencies included in the average.
    pub freq_mask: Vec<f64>,
    /// Number of estimate values clamped up to [`POWER_FLOOR`].
    pub clamp_count: usize,
}

/// Compare an estimate against the true PSD on a shared frequency grid.
///
/// Truth power must be strictly positive on the mask; non-positive estimate
/// values are clamped to [`POWER_FLOOR`] and counted.
pub fn normalized_mse(estimate: &PsdEstimate, truth: &PsdEstimate) -> Result<NormalizedMse> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate grid has {} frequencies, truth {}",
            estimate.len(),
            truth.len()
        )));
    }
    for (a, b) in estimate.freqs.iter().zip(&truth.freqs) {
        if (a - b).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "frequency grids differ: {a} vs {b}"
            )));
        }
    }

    let mut terms = Vec::new();
    let mut mask = Vec::new();
    let mut clamp_count = 0;
    for i in 0..truth.len() {
        if truth.freqs[i] == 0.0 {
            continue;
        }
        let s_true = truth.power[i];
        if !(s_true > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "truth power must be positive, got {s_true} at f = {}",
                truth.freqs[i]
            )));
        }
        let mut s_est = estimate.power[i];
        if !(s_est > 0.0) {
            s_est = POWER_FLOOR;
            clamp_count += 1;
        }
        let log_ratio = s_est.ln() - s_true.ln();
        terms.push(log_ratio * log_ratio);
        mask.push(truth.freqs[i]);
    }
    if terms.is_empty() {
        return Err(Error::InvalidParameter(
            "no frequencies left after excluding f = 0".into(),
        ));
    }
    let value = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(NormalizedMse {
        value,
        per_frequency_terms: terms,
        freq_mask: mask,
        clamp_count,
    })
}
