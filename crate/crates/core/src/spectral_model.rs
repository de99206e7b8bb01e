//! Discretized harmonic model of the latent process: the design matrix `A`
//! mapping spectral coefficients to the time domain, the prior variances on
//! those coefficients, and the PSD readout.
//!
//! The latent series is `x = A z` with `z = [a_1, a_2, b_2, ..., a_N, b_N]`
//! (2N-1 coefficients, one cosine/sine pair per frequency band plus a DC
//! term). Each `z_m` carries an independent zero-mean Gaussian prior with
//! variance `theta_m`; the estimated PSD is read directly off those
//! variances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::mtm::PsdEstimate;
use crate::{Error, Result};

/// The `K x (2N-1)` harmonic design matrix.
///
/// Row `k` (1-based) is
/// `(2/N) [1, cos(k pi/N), -sin(k pi/N), ..., cos(k(N-1)pi/N), -sin(k(N-1)pi/N)]`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    bin_count: usize,
    freq_bins: usize,
    // cos/sin of pi t / N for t in [0, 2N): lookup tables for the fast
    // weighted-Gram assembly.
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
}

/// Build the design matrix for `bin_count` time bins and `freq_bins`
/// frequency bands.
pub fn build_design_matrix(bin_count: usize, freq_bins: usize) -> Result<DesignMatrix> {
    if bin_count < 1 {
        return Err(Error::InvalidParameter("bin count must be positive".into()));
    }
    if freq_bins < 2 {
        return Err(Error::InvalidParameter(
            "frequency bin count must be at least 2".into(),
        ));
    }
    let k = bin_count;
    let n = freq_bins;
    let coeffs = 2 * n - 1;
    let scale = 2.0 / n as f64;

    let table_len = 2 * n;
    let mut cos_table = Vec::with_capacity(table_len);
    let mut sin_table = Vec::with_capacity(table_len);
    for t in 0..table_len {
        let angle = std::f64::consts::PI * t as f64 / n as f64;
        let (s, c) = angle.sin_cos();
        cos_table.push(c);
        sin_table.push(s);
    }

    let mut matrix = DMatrix::zeros(k, coeffs);
    for row in 0..k {
        let time = row + 1;
        matrix[(row, 0)] = scale;
        for m in 1..n {
            let t = (time * m) % table_len;
            matrix[(row, 2 * m - 1)] = scale * cos_table[t];
            matrix[(row, 2 * m)] = -scale * sin_table[t];
        }
    }

    Ok(DesignMatrix {
        matrix,
        bin_count: k,
        freq_bins: n,
        cos_table,
        sin_table,
    })
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn freq_bins(&self) -> usize {
        self.freq_bins
    }

    /// Number of spectral coefficients, `2N - 1`.
    pub fn coeff_count(&self) -> usize {
        2 * self.freq_bins - 1
    }

    /// `A z`: reconstruct the latent series from spectral coefficients.
    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z
    }

    /// `A' u`.
    pub fn apply_transpose(&self, u: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(u)
    }

    /// `A' diag(weights) A`, assembled in `O(K N + N^2)` through the angle
    /// addition identities: every entry is a combination of
    /// `P(r) = sum_k w_k cos(k pi r / N)` and `Q(r) = sum_k w_k sin(k pi r / N)`.
    pub fn weighted_gram(&self, weights: &[f64]) -> DMatrix<f64> {
        assert_eq!(weights.len(), self.bin_count, "weight vector length");
        let n = self.freq_bins;
        let coeffs = self.coeff_count();
        let table_len = 2 * n;
        let scale2 = (2.0 / n as f64) * (2.0 / n as f64);

        // P and Q for r = 0..2N-2.
        let mut p = vec![0.0_f64; 2 * n - 1];
        let mut q = vec![0.0_f64; 2 * n - 1];
        for r in 0..2 * n - 1 {
            let (mut acc_p, mut acc_q) = (0.0, 0.0);
            let mut t = 0usize;
            for &w in weights {
                t += r;
                if t >= table_len {
                    t -= table_len;
                }
                acc_p += w * self.cos_table[t];
                acc_q += w * self.sin_table[t];
            }
            p[r] = acc_p;
            q[r] = acc_q;
        }

        let mut gram = DMatrix::zeros(coeffs, coeffs);
        gram[(0, 0)] = scale2 * p[0];
        for m in 1..n {
            gram[(0, 2 * m - 1)] = scale2 * p[m];
            gram[(0, 2 * m)] = -scale2 * q[m];
        }
        for m in 1..n {
            for mp in m..n {
                let diff = mp - m;
                let sum = mp + m;
                // cos-cos, sin-sin, and the two cos-sin couplings.
                gram[(2 * m - 1, 2 * mp - 1)] = 0.5 * scale2 * (p[diff] + p[sum]);
                gram[(2 * m, 2 * mp)] = 0.5 * scale2 * (p[diff] - p[sum]);
                gram[(2 * m - 1, 2 * mp)] = -0.5 * scale2 * (q[sum] + q[diff]);
                if mp > m {
                    gram[(2 * m, 2 * mp - 1)] = -0.5 * scale2 * (q[sum] - q[diff]);
                }
            }
        }
        // Mirror the upper triangle.
        for i in 0..coeffs {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        gram
    }
}

/// Calibration constant mapping the prior-variance PSD readout onto the scale
/// of the classic tapered estimate, `(K/N)^2`.
///
/// Derivation: for `K = 2N` the design columns are orthogonal with squared
/// norm `(2/N)^2 K/2`, so a flat-spectrum latent series of variance `s^2`
/// yields coefficient variances `(N/K)^2 s^2` per cosine/sine pair while the
/// classic unit-energy-taper estimate sits at `s^2`.
pub fn flat_spectrum_calibration(bin_count: usize, freq_bins: usize) -> f64 {
    let ratio = bin_count as f64 / freq_bins as f64;
    ratio * ratio
}

/// Prior variances for one eigen-spectrum's coefficient vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralParams {
    variances: Vec<f64>,
    truncation_bound: f64,
}

impl SpectralParams {
    /// Requires strictly positive variances and an odd length `2N - 1 >= 3`.
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.len() < 3 || variances.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "variance vector length must be odd and at least 3, got {}",
                variances.len()
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "variances must be positive and finite".into(),
            ));
        }
        Ok(SpectralParams {
            variances,
            truncation_bound: 0.5,
        })
    }

    /// Uniform initialization over all `2N - 1` coefficients.
    pub fn uniform(coeff_count: usize, value: f64) -> Result<Self> {
        SpectralParams::new(vec![value; coeff_count])
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Half-width of the prior's truncation support. The truncation
    /// normalizer is dropped throughout the EM computations; the bound is
    /// carried as metadata only.
    pub fn truncation_bound(&self) -> f64 {
        self.truncation_bound
    }

    pub fn with_truncation_bound(mut self, bound: f64) -> Self {
        self.truncation_bound = bound;
        self
    }

    pub fn freq_bins(&self) -> usize {
        (self.variances.len() + 1) / 2
    }
}

/// PSD readout from prior variances: `S(0) = theta_1` and
/// `S(f_m) = theta_{2m} + theta_{2m+1}` on the grid `f_m = m / (2N)`.
pub fn psd_from_params(params: &SpectralParams) -> PsdEstimate {
    let n = params.freq_bins();
    let theta = params.variances();
    let mut power = Vec::with_capacity(n);
    power.push(theta[0]);
    for m in 1..n {
        power.push(theta[2 * m - 1] + theta[2 * m]);
    }
    let freqs = crate::mtm::default_freq_grid(n);
    PsdEstimate::new(freqs, power, "eigen-spectrum-ml", None, None)
        .expect("readout of valid params is a valid estimate")
}

/// Gaussian approximation of the coefficient posterior.
#[derive(Debug, Clone)]
pub struct LatentPosterior {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl LatentPosterior {
    /// Requires a square covariance, symmetric within `1e-10`, matching the
    /// mean's dimension. Positive definiteness is the producer's contract.
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "mean dimension {d} vs covariance {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let scale = covariance.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-10 * scale.max(1.0) {
                    return Err(Error::Numerical(format!(
                        "covariance asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(LatentPosterior { mean, covariance })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn single_row_matches_hand_evaluation() {
        // K = 1, N = 2: row = (2/N) [1, cos(pi/2), -sin(pi/2)] = [1, 0, -1].
        let design = build_design_matrix(1, 2).unwrap();
        let a = design.matrix();
        assert!((a[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(a[(0, 1)].abs() < 1e-15);
        assert!((a[(0, 2)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn dc_column_is_constant() {
        let design = build_design_matrix(16, 4).unwrap();
        let mut z = DVector::zeros(7);
        z[0] = 1.0;
        let x = design.apply(&z);
        assert!(x.iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    // Termwise oracle for the harmonic expansion.
    fn reconstruct_termwise(z: &[f64], k: usize, n: usize) -> Vec<f64> {
        (1..=k)
            .map(|time| {
                let mut x = 2.0 / n as f64 * z[0];
                for m in 1..n {
                    let angle = std::f64::consts::PI * (time * m) as f64 / n as f64;
                    x += 2.0 / n as f64
                        * (z[2 * m - 1] * angle.cos() - z[2 * m] * angle.sin());
                }
                x
            })
            .collect()
    }

    #[test]
    fn reconstruction_matches_termwise_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(k, n) in &[(5, 3), (32, 8), (100, 50), (17, 9)] {
            let design = build_design_matrix(k, n).unwrap();
            let z = DVector::from_fn(2 * n - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = design.apply(&z);
            let oracle = reconstruct_termwise(z.as_slice(), k, n);
            for (a, b) in x.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-10, "K={k} N={n}");
            }
        }
    }

    #[test]
    fn weighted_gram_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for &(k, n) in &[(3, 2), (16, 5), (64, 16), (33, 7)] {
            let design = build_design_matrix(k, n).unwrap();
            let weights: Vec<f64> = (0..k).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect();
            let fast = design.weighted_gram(&weights);
            let w = DMatrix::from_diagonal(&DVector::from_row_slice(&weights));
            let direct = design.matrix().tr_mul(&(&w * design.matrix()));
            let scale = direct.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let worst = (&fast - &direct).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(worst <= 1e-10 * scale.max(1.0), "K={k} N={n}: {worst}");
        }
    }

    #[test]
    fn weighted_gram_matches_at_benchmark_size() {
        let design = build_design_matrix(512, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let weights: Vec<f64> = (0..512).map(|_| 1.0 + 100.0 * rng.random::<f64>()).collect();
        let fast = design.weighted_gram(&weights);
        let w = DMatrix::from_diagonal(&DVector::from_row_slice(&weights));
        let direct = design.matrix().tr_mul(&(&w * design.matrix()));
        let scale = direct.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let worst = (&fast - &direct).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-9 * scale, "deviation {worst} at scale {scale}");
    }

    #[test]
    fn variance_matches_monte_carlo() {
        let k = 32;
        let n = 8;
        let design = build_design_matrix(k, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let theta: Vec<f64> = (0..2 * n - 1).map(|_| 0.2 + rng.random::<f64>()).collect();

        // Analytic: Var(x_k) = sum_m A_km^2 theta_m, averaged over k.
        let a = design.matrix();
        let analytic: f64 = (0..k)
            .map(|row| {
                (0..2 * n - 1)
                    .map(|m| a[(row, m)] * a[(row, m)] * theta[m])
                    .sum::<f64>()
            })
            .sum::<f64>()
            / k as f64;

        let samples = 100_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let z = DVector::from_fn(2 * n - 1, |m, _| {
                theta[m].sqrt() * rng.sample::<f64, _>(StandardNormal)
            });
            let x = design.apply(&z);
            acc += x.iter().map(|v| v * v).sum::<f64>() / k as f64;
        }
        let mc = acc / samples as f64;
        assert!(
            (mc - analytic).abs() < 0.02 * analytic,
            "MC {mc} vs analytic {analytic}"
        );
    }

    #[test]
    fn readout_edge_cases() {
        let n = 4;
        // DC-only process.
        let mut theta = vec![1e-12; 2 * n - 1];
        theta[0] = 1.0;
        let psd = psd_from_params(&SpectralParams::new(theta).unwrap());
        assert!((psd.power[0] - 1.0).abs() < 1e-15);
        assert!(psd.power[1..].iter().all(|&p| p < 1e-11));

        // Single band at m = 2 with both coefficients at c.
        let c = 0.7;
        let mut theta = vec![1e-12; 2 * n - 1];
        theta[2 * 2 - 1] = c;
        theta[2 * 2] = c;
        let psd = psd_from_params(&SpectralParams::new(theta).unwrap());
        assert!((psd.power[2] - 2.0 * c).abs() < 1e-12);

        // Uniform variances: flat at 2c except the DC bin at c.
        let c = 0.3;
        let psd = psd_from_params(&SpectralParams::uniform(2 * n - 1, c).unwrap());
        assert!((psd.power[0] - c).abs() < 1e-15);
        assert!(psd.power[1..].iter().all(|&p| (p - 2.0 * c).abs() < 1e-15));

        assert_eq!(psd.freqs, vec![0.0, 0.125, 0.25, 0.375]);
    }

    #[test]
    fn params_validation() {
        assert!(SpectralParams::new(vec![1.0, 1.0]).is_err());
        assert!(SpectralParams::new(vec![1.0, 0.0, 1.0]).is_err());
        assert!(SpectralParams::new(vec![1.0, -1.0, 1.0]).is_err());
        assert!(SpectralParams::new(vec![1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn posterior_validation() {
        let mean = DVector::from_row_slice(&[0.0, 1.0]);
        let good = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(LatentPosterior::new(mean.clone(), good).is_ok());
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.6, 1.0]);
        assert!(LatentPosterior::new(mean.clone(), asym).is_err());
        let wrong_dim = DMatrix::from_row_slice(1, 1, &[1.0]);
        assert!(LatentPosterior::new(mean, wrong_dim).is_err());
    }

    #[test]
    fn calibration_for_natural_resolution() {
        assert_eq!(flat_spectrum_calibration(512, 256), 4.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

        #[test]
        fn reconstruction_consistency(
            k in 1usize..40,
            n in 2usize..12,
            seed in 0u64..1000,
        ) {
            let design = build_design_matrix(k, n).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = DVector::from_fn(2 * n - 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = design.apply(&z);
            let oracle = reconstruct_termwise(z.as_slice(), k, n);
            for (a, b) in x.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
