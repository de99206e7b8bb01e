//! Synthetic benchmark data: autoregressive latent processes, linear-link
//! conditional intensities, and Bernoulli spike ensembles.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::mtm::PsdEstimate;
use crate::{Error, Result};

/// A stable autoregressive model `x_k = sum_i a_i x_{k-i} + noise_std e_k`
/// with unit-variance Gaussian innovations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArModel {
    coeffs: Vec<f64>,
    noise_std: f64,
    max_root_modulus: f64,
}

impl ArModel {
    /// Validates stability: all roots of `1 - sum_i a_i z^{-i}` must lie
    /// strictly inside the unit circle.
    pub fn new(coeffs: Vec<f64>, noise_std: f64) -> Result<Self> {
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise standard deviation must be positive and finite, got {noise_std}"
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite AR coefficient".into()));
        }
        let max_root_modulus = char_roots(&coeffs)
            .iter()
            .fold(0.0_f64, |m, r| m.max(r.norm()));
        if max_root_modulus >= 1.0 {
            return Err(Error::UnstableModel { max_root_modulus });
        }
        Ok(ArModel {
            coeffs,
            noise_std,
            max_root_modulus,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn max_root_modulus(&self) -> f64 {
        self.max_root_modulus
    }

    /// Normalized frequencies (in `(0, 1/2)`) of the complex pole pairs,
    /// ordered by decreasing pole modulus: the resonant peaks of the PSD.
    pub fn pole_frequencies(&self) -> Vec<f64> {
        let mut poles: Vec<(f64, f64)> = char_roots(&self.coeffs)
            .iter()
            .filter(|r| r.im > 1e-12)
            .map(|r| (r.norm(), r.arg() / (2.0 * std::f64::consts::PI)))
            .collect();
        poles.sort_by(|a, b| b.0.total_cmp(&a.0));
        poles.into_iter().map(|(_, f)| f).collect()
    }

    /// Default burn-in: `10 p / (1 - max|root|)`, capped at 4096 samples.
    pub fn default_burn_in(&self) -> usize {
        if self.coeffs.is_empty() {
            return 0;
        }
        let horizon = 10.0 * self.order() as f64 / (1.0 - self.max_root_modulus);
        horizon.ceil().min(4096.0) as usize
    }
}

// Roots of z^p - a_1 z^{p-1} - ... - a_p via companion-matrix eigenvalues.
fn char_roots(coeffs: &[f64]) -> Vec<nalgebra::Complex<f64>> {
    let p = coeffs.len();
    if p == 0 {
        return Vec::new();
    }
    if p == 1 {
        return vec![nalgebra::Complex::new(coeffs[0], 0.0)];
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            coeffs[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().copied().collect()
}

/// A realization of the latent process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentSeries {
    values: Vec<f64>,
}

impl LatentSeries {
    pub fn new(values: Vec<f64>) -> Self {
        LatentSeries { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bin_count(&self) -> usize {
        self.values.len()
    }
}

/// An `L x K` ensemble of binary spike trains, one row per trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeEnsemble {
    data: Vec<u8>, // row-major, entries 0/1
    trial_count: usize,
    bin_count: usize,
}

impl SpikeEnsemble {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let trial_count = rows.len();
        let bin_count = rows.first().map_or(0, Vec::len);
        if trial_count == 0 || bin_count == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let mut data = Vec::with_capacity(trial_count * bin_count);
        for (l, row) in rows.iter().enumerate() {
            if row.len() != bin_count {
                return Err(Error::DimensionMismatch(format!(
                    "trial {l} has {} bins, expected {bin_count}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        if data.iter().any(|&b| b > 1) {
            return Err(Error::InvalidParameter(
                "spike entries must be 0 or 1".into(),
            ));
        }
        Ok(SpikeEnsemble {
            data,
            trial_count,
            bin_count,
        })
    }

    pub fn trial_count(&self) -> usize {
        self.trial_count
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn trial(&self, l: usize) -> &[u8] {
        &self.data[l * self.bin_count..(l + 1) * self.bin_count]
    }

    pub fn get(&self, l: usize, k: usize) -> u8 {
        self.data[l * self.bin_count + k]
    }

    /// Per-bin spike counts summed over trials.
    pub fn bin_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.bin_count];
        for l in 0..self.trial_count {
            for (c, &n) in counts.iter_mut().zip(self.trial(l)) {
                *c += u32::from(n);
            }
        }
        counts
    }
}

/// Simulate the AR process, discarding `burn_in` initial samples.
/// Deterministic for a fixed seed.
pub fn simulate_ar(model: &ArModel, length: usize, burn_in: usize, seed: u64) -> LatentSeries {
    let p = model.order();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = vec![0.0_f64; p];
    let mut out = Vec::with_capacity(length);
    for step in 0..burn_in + length {
        let mut x = model.noise_std * rng.sample::<f64, _>(StandardNormal);
        for (i, &a) in model.coeffs.iter().enumerate() {
            x += a * history[i];
        }
        if p > 0 {
            history.rotate_right(1);
            history[0] = x;
        }
        if step >= burn_in {
            out.push(x);
        }
    }
    LatentSeries::new(out)
}

/// Analytic AR power spectral density on the requested frequencies:
/// `S(f) = noise_std^2 / |1 - sum_i a_i e^{-i 2 pi f i}|^2`.
///
/// Frequencies must be strictly increasing within `[0, 1/2]`.
pub fn ar_true_psd(model: &ArModel, freqs: &[f64]) -> Result<PsdEstimate> {
    if freqs.iter().any(|&f| !(0.0..=0.5).contains(&f)) {
        return Err(Error::InvalidParameter(
            "frequencies must lie in [0, 1/2]".into(),
        ));
    }
    let power = freqs
        .iter()
        .map(|&f| {
            let omega = 2.0 * std::f64::consts::PI * f;
            let mut re = 1.0;
            let mut im = 0.0;
            for (i, &a) in model.coeffs.iter().enumerate() {
                let phase = omega * (i + 1) as f64;
                re -= a * phase.cos();
                im += a * phase.sin();
            }
            model.noise_std * model.noise_std / (re * re + im * im)
        })
        .collect();
    PsdEstimate::new(freqs.to_vec(), power, "true-psd", None, None)
}

/// Form the conditional intensity `lambda_k = mean_rate + x_k`, clamped to
/// `[0, 1]`. Returns the intensity and the number of clamped bins.
pub fn cif_from_latent(mean_rate: f64, latent: &LatentSeries) -> (Vec<f64>, usize) {
    let mut clamped = 0;
    let cif = latent
        .values()
        .iter()
        .map(|&x| {
            let lambda = mean_rate + x;
            if (0.0..=1.0).contains(&lambda) {
                lambda
            } else {
                clamped += 1;
                lambda.clamp(0.0, 1.0)
            }
        })
        .collect();
    (cif, clamped)
}

/// Draw `trials` independent Bernoulli spike trains from a per-bin intensity.
/// Deterministic for a fixed seed.
pub fn generate_spikes(cif: &[f64], trials: usize, seed: u64) -> Result<SpikeEnsemble> {
    if cif.is_empty() || trials == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if cif.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(Error::InvalidParameter(
            "intensity values must lie in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bins = cif.len();
    let mut data = Vec::with_capacity(trials * bins);
    for _ in 0..trials {
        for &p in cif {
            data.push(u8::from(rng.random::<f64>() < p));
        }
    }
    Ok(SpikeEnsemble {
        data,
        trial_count: trials,
        bin_count: bins,
    })
}
