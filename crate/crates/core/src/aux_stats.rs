//! Auxiliary spiking statistics: the real-valued sequences whose ensemble
//! average equals the tapered conditional intensity.
//!
//! For a taper value `v >= 0` the statistic keeps the spikes scaled by `v`;
//! where `v < 0` it switches to the complement process `1 - n`, whose
//! intensity is `1 - lambda`, so the sequence stays non-negative. Tapers are
//! normalized by their maximum absolute value first so every statistic lies
//! in `[0, 1]`.

use nalgebra::DMatrix;

use crate::simulate::SpikeEnsemble;
use crate::{Error, Result};

/// Per-taper auxiliary statistic: an `L x K` matrix of values in `[0, 1]`
/// together with the offset sequence of the tapered intensity model.
#[derive(Debug, Clone)]
pub struct AuxStatistic {
    values: DMatrix<f64>,
    trial_mean: Vec<f64>,
    offsets: Vec<f64>,
    normalized_taper: Vec<f64>,
    taper_index: usize,
    taper_scale: f64,
}

impl AuxStatistic {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Ensemble average over trials, one value per bin.
    pub fn trial_mean(&self) -> &[f64] {
        &self.trial_mean
    }

    /// Offsets `mu_k` of the tapered intensity `mu_k + x_k v_k`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// The taper after normalization by its maximum absolute value.
    pub fn normalized_taper(&self) -> &[f64] {
        &self.normalized_taper
    }

    pub fn taper_index(&self) -> usize {
        self.taper_index
    }

    /// Max absolute taper value used for normalization; eigen-spectra
    /// estimated from this statistic are rescaled by its square.
    pub fn taper_scale(&self) -> f64 {
        self.taper_scale
    }

    pub fn trial_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn bin_count(&self) -> usize {
        self.values.ncols()
    }

    #[cfg(test)]
    pub(crate) fn replace_values_with_offsets_for_test(&mut self) {
        for l in 0..self.values.nrows() {
            for k in 0..self.values.ncols() {
                self.values[(l, k)] = self.offsets[k];
            }
        }
        self.trial_mean = self.offsets.clone();
    }
}

/// Grand mean spike rate over all trials and bins.
pub fn estimate_mean_rate(spikes: &SpikeEnsemble) -> Result<f64> {
    let total_bins = spikes.trial_count() * spikes.bin_count();
    if total_bins == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let total: u64 = (0..spikes.trial_count())
        .map(|l| spikes.trial(l).iter().map(|&n| u64::from(n)).sum::<u64>())
        .sum();
    Ok(total as f64 / total_bins as f64)
}

/// Build the auxiliary statistic for one taper.
///
/// The taper is normalized by its maximum absolute value; with `vt` the
/// normalized taper, each entry is `n vt_k` where `vt_k >= 0` and
/// `-(1 - n) vt_k` where `vt_k < 0`, and the offsets are
/// `mu vt_k` / `-(1 - mu) vt_k` on the same split.
pub fn build_aux_statistic(
    spikes: &SpikeEnsemble,
    taper: &[f64],
    taper_index: usize,
    mean_rate: f64,
) -> Result<AuxStatistic> {
    if taper.len() != spikes.bin_count() {
        return Err(Error::DimensionMismatch(format!(
            "taper length {} vs {} bins",
            taper.len(),
            spikes.bin_count()
        )));
    }
    if !(0.0..=1.0).contains(&mean_rate) {
        return Err(Error::InvalidParameter(format!(
            "mean rate must lie in [0, 1], got {mean_rate}"
        )));
    }
    let scale = taper.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::DegenerateTaper);
    }
    let normalized: Vec<f64> = taper.iter().map(|v| v / scale).collect();

    let trials = spikes.trial_count();
    let bins = spikes.bin_count();
    let mut values = DMatrix::zeros(trials, bins);
    for l in 0..trials {
        let row = spikes.trial(l);
        for (k, &vt) in normalized.iter().enumerate() {
            let n = f64::from(row[k]);
            values[(l, k)] = if vt >= 0.0 { n * vt } else { -(1.0 - n) * vt };
        }
    }
    let trial_mean: Vec<f64> = (0..bins)
        .map(|k| values.column(k).sum() / trials as f64)
        .collect();
    let offsets: Vec<f64> = normalized
        .iter()
        .map(|&vt| {
            if vt >= 0.0 {
                mean_rate * vt
            } else {
                -(1.0 - mean_rate) * vt
            }
        })
        .collect();

    Ok(AuxStatistic {
        values,
        trial_mean,
        offsets,
        normalized_taper: normalized,
        taper_index,
        taper_scale: scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::generate_spikes;
    use proptest::prelude::*;

    fn ensemble_from(rows: Vec<Vec<u8>>) -> SpikeEnsemble {
        SpikeEnsemble::from_rows(rows).unwrap()
    }

    #[test]
    fn mean_rate_edge_cases() {
        let zeros = ensemble_from(vec![vec![0, 0], vec![0, 0]]);
        assert_eq!(estimate_mean_rate(&zeros).unwrap(), 0.0);
        let ones = ensemble_from(vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(estimate_mean_rate(&ones).unwrap(), 1.0);
        let half = ensemble_from(vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(estimate_mean_rate(&half).unwrap(), 0.5);
    }

    #[test]
    fn identity_taper_reproduces_spikes() {
        let spikes = ensemble_from(vec![vec![1, 0, 1], vec![0, 0, 1]]);
        let aux = build_aux_statistic(&spikes, &[1.0, 1.0, 1.0], 0, 0.4).unwrap();
        for l in 0..2 {
            for k in 0..3 {
                assert_eq!(aux.values()[(l, k)], f64::from(spikes.get(l, k)));
            }
        }
        assert!(aux.offsets().iter().all(|&o| o == 0.4));
        assert_eq!(aux.taper_scale(), 1.0);
    }

    #[test]
    fn negated_taper_on_all_ones_gives_zeros() {
        let spikes = ensemble_from(vec![vec![1, 1, 1, 1]]);
        let aux = build_aux_statistic(&spikes, &[-1.0; 4], 0, 0.7).unwrap();
        assert!(aux.values().iter().all(|&v| v == 0.0));
        for &o in aux.offsets() {
            assert!((o - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_mixed_sign_case() {
        // taper [0.5, -0.5, 1, -1], spikes [1, 0, 1, 0], mu = 0.2.
        let spikes = ensemble_from(vec![vec![1, 0, 1, 0]]);
        let aux = build_aux_statistic(&spikes, &[0.5, -0.5, 1.0, -1.0], 2, 0.2).unwrap();
        let want_values = [0.5, 0.5, 1.0, 1.0];
        let want_offsets = [0.1, 0.4, 0.2, 0.8];
        for k in 0..4 {
            assert!((aux.values()[(0, k)] - want_values[k]).abs() < 1e-15, "value {k}");
            assert!((aux.offsets()[k] - want_offsets[k]).abs() < 1e-15, "offset {k}");
        }
        assert_eq!(aux.taper_index(), 2);

        // Independent scalar evaluation of the same definition.
        let scalar = |n: f64, v: f64, mu: f64| -> (f64, f64) {
            let value = if v >= 0.0 { n * v } else { -(1.0 - n) * v };
            let offset = if v >= 0.0 { mu * v } else { -(1.0 - mu) * v };
            (value, offset)
        };
        let taper = [0.5, -0.5, 1.0, -1.0];
        let train = [1.0, 0.0, 1.0, 0.0];
        for k in 0..4 {
            let (v, o) = scalar(train[k], taper[k], 0.2);
            assert_eq!(aux.values()[(0, k)], v);
            assert_eq!(aux.offsets()[k], o);
        }
    }

    #[test]
    fn degenerate_taper_is_rejected() {
        let spikes = ensemble_from(vec![vec![1, 0]]);
        assert!(matches!(
            build_aux_statistic(&spikes, &[0.0, 0.0], 0, 0.5),
            Err(Error::DegenerateTaper)
        ));
    }

    #[test]
    fn ensemble_mean_tracks_tapered_intensity() {
        // Monte-Carlo check of the limit ensemble average at a modest size:
        // E[value_k] = mu_k + x_k vt_k with the true rate known.
        let bins = 48;
        let mu = 0.3;
        let x: Vec<f64> = (0..bins)
            .map(|k| 0.1 * (2.0 * std::f64::consts::PI * k as f64 / 16.0).sin())
            .collect();
        let cif: Vec<f64> = x.iter().map(|v| mu + v).collect();
        let trials = 50_000;
        let spikes = generate_spikes(&cif, trials, 99).unwrap();

        let taper: Vec<f64> = (0..bins)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / 24.0).cos())
            .collect();
        let aux = build_aux_statistic(&spikes, &taper, 0, mu).unwrap();
        let scale = aux.taper_scale();
        for k in 0..bins {
            let vt = taper[k] / scale;
            let expected = aux.offsets()[k] + x[k] * vt;
            let lambda_aux = expected.clamp(0.0, 1.0);
            let se = (lambda_aux * (1.0 - lambda_aux) / trials as f64).sqrt() * vt.abs().max(1e-9);
            let got = aux.trial_mean()[k];
            assert!(
                (got - expected).abs() <= 4.0 * se + 1e-12,
                "bin {k}: {got} vs {expected} (se {se})"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

        #[test]
        fn values_stay_in_unit_interval(
            rows in prop::collection::vec(
                prop::collection::vec(0u8..=1, 6),
                1..5,
            ),
            taper in prop::collection::vec(-2.0f64..2.0, 6),
            mu in 0.0f64..=1.0,
        ) {
            prop_assume!(taper.iter().any(|&v| v != 0.0));
            let spikes = ensemble_from(rows);
            let aux = build_aux_statistic(&spikes, &taper, 0, mu).unwrap();
            for &v in aux.values().iter() {
                prop_assert!((0.0..=1.0).contains(&v), "value {v}");
            }
            for &o in aux.offsets() {
                prop_assert!(o >= 0.0 && o <= 1.0, "offset {o}");
            }
        }

        #[test]
        fn nonnegative_taper_reduces_to_elementwise_product(
            rows in prop::collection::vec(
                prop::collection::vec(0u8..=1, 5),
                1..4,
            ),
            taper in prop::collection::vec(0.0f64..2.0, 5),
            mu in 0.0f64..=1.0,
        ) {
            prop_assume!(taper.iter().any(|&v| v > 0.0));
            let spikes = ensemble_from(rows);
            let aux = build_aux_statistic(&spikes, &taper, 0, mu).unwrap();
            let scale = aux.taper_scale();
            for l in 0..spikes.trial_count() {
                for k in 0..5 {
                    let want = f64::from(spikes.get(l, k)) * taper[k] / scale;
                    prop_assert!((aux.values()[(l, k)] - want).abs() < 1e-15);
                }
            }
        }
    }
}
