//! Classic tapered eigen-spectra and the multitaper PSD average.

use serde::{Deserialize, Serialize};

use crate::dpss::TaperSet;
use crate::{Error, Result};

/// A power spectral density estimate on a grid of normalized frequencies
/// (cycles per sample, in `[0, 1/2]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
    pub estimator_tag: String,
    /// Half time-bandwidth product of the tapers used, when applicable.
    pub bandwidth: Option<f64>,
    /// Number of tapers averaged, when applicable.
    pub taper_count: Option<usize>,
}

impl PsdEstimate {
    /// Build an estimate, validating that frequencies are strictly increasing
    /// and the power values are non-negative.
    pub fn new(
        freqs: Vec<f64>,
        power: Vec<f64>,
        estimator_tag: impl Into<String>,
        bandwidth: Option<f64>,
        taper_count: Option<usize>,
    ) -> Result<Self> {
        if freqs.len() != power.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies vs {} power values",
                freqs.len(),
                power.len()
            )));
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "frequency grid must be strictly increasing".into(),
            ));
        }
        if power.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidParameter(
                "power values must be non-negative".into(),
            ));
        }
        Ok(PsdEstimate {
            freqs,
            power,
            estimator_tag: estimator_tag.into(),
            bandwidth,
            taper_count,
        })
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }
}

/// The default analysis grid `f_m = m / (2N)` for `m = 0..N-1`.
///
/// This matches the frequency bands of the spectral model, so classic and
/// point-process estimates are directly comparable.
pub fn default_freq_grid(freq_bins: usize) -> Vec<f64> {
    let n = freq_bins as f64;
    (0..freq_bins).map(|m| m as f64 / (2.0 * n)).collect()
}

/// Squared modulus of the Fourier transform of `series` tapered by `taper`,
/// evaluated by direct transform at each grid frequency.
pub fn eigen_spectrum(series: &[f64], taper: &[f64], freqs: &[f64]) -> Result<PsdEstimate> {
    if series.len() != taper.len() {
        return Err(Error::DimensionMismatch(format!(
            "series length {} vs taper length {}",
            series.len(),
            taper.len()
        )));
    }
    let tapered: Vec<f64> = series.iter().zip(taper).map(|(x, v)| x * v).collect();
    let power = freqs.iter().map(|&f| tapered_power(&tapered, f)).collect();
    PsdEstimate::new(freqs.to_vec(), power, "eigen-spectrum", None, Some(1))
}

// |sum_k y_k e^{-i 2 pi f k}|^2 via a phasor recurrence, O(K) per frequency.
fn tapered_power(tapered: &[f64], freq: f64) -> f64 {
    let (step_sin, step_cos) = (2.0 * std::f64::consts::PI * freq).sin_cos();
    // Phase starts at k = 1; the modulus is unaffected by the phase origin.
    let (mut c, mut s) = (step_cos, -step_sin);
    let (mut re, mut im) = (0.0, 0.0);
    for &y in tapered {
        re += y * c;
        im += y * s;
        let c_next = c * step_cos + s * step_sin;
        s = s * step_cos - c * step_sin;
        c = c_next;
    }
    re * re + im * im
}

/// Multitaper PSD estimate: the unweighted average of the eigen-spectra over
/// all tapers in `taper_set`.
pub fn mtm_psd(series: &[f64], taper_set: &TaperSet, freqs: &[f64]) -> Result<PsdEstimate> {
    if series.len() != taper_set.taper_len() {
        return Err(Error::DimensionMismatch(format!(
            "series length {} vs taper length {}",
            series.len(),
            taper_set.taper_len()
        )));
    }
    let count = taper_set.taper_count();
    let mut power = vec![0.0; freqs.len()];
    for j in 0..count {
        let eigen = eigen_spectrum(series, taper_set.taper(j), freqs)?;
        for (acc, p) in power.iter_mut().zip(&eigen.power) {
            *acc += p;
        }
    }
    for p in &mut power {
        *p /= count as f64;
    }
    PsdEstimate::new(
        freqs.to_vec(),
        power,
        "mtm",
        Some(taper_set.alpha()),
        Some(count),
    )
}
