//! The simulation benchmark: repeated AR realizations and spike ensembles,
//! all four estimators, and normalized-MSE aggregation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{psth_psd, ss_psd};
use crate::dpss::generate_dpss;
use crate::em::EmConfig;
use crate::metrics::normalized_mse;
use crate::mtm::{default_freq_grid, mtm_psd, PsdEstimate};
use crate::pmtm::run_pmtm;
use crate::simulate::{ar_true_psd, cif_from_latent, generate_spikes, simulate_ar, ArModel};
use crate::{Error, Result};

/// Full benchmark configuration. The defaults reproduce the reference
/// setup: an AR(4) latent process driving 10 trials of 512 bins at mean
/// rate 0.12, analyzed with 8 tapers at `alpha = 5`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub ar_coeffs: Vec<f64>,
    pub ar_noise_std: f64,
    pub mean_rate: f64,
    pub bin_count: usize,
    pub trial_count: usize,
    pub alpha: f64,
    pub taper_count: usize,
    pub freq_bins: usize,
    pub em: EmConfig,
    pub ar_realizations: usize,
    pub ensemble_realizations: usize,
    pub base_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            ar_coeffs: vec![0.4152, -0.0922, 0.4170, -0.8852],
            ar_noise_std: 0.025,
            mean_rate: 0.12,
            bin_count: 512,
            trial_count: 10,
            alpha: 5.0,
            taper_count: 8,
            freq_bins: 256,
            em: EmConfig::default(),
            ar_realizations: 10,
            ensemble_realizations: 5,
            base_seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ar_realizations == 0 || self.ensemble_realizations == 0 {
            return Err(Error::InvalidParameter(
                "realization counts must be at least 1".into(),
            ));
        }
        if self.trial_count == 0 || self.bin_count == 0 {
            return Err(Error::InvalidParameter(
                "trial and bin counts must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.mean_rate) {
            return Err(Error::InvalidParameter(format!(
                "mean rate must lie in [0, 1], got {}",
                self.mean_rate
            )));
        }
        self.em.validate()
    }

    pub fn model(&self) -> Result<ArModel> {
        ArModel::new(self.ar_coeffs.clone(), self.ar_noise_std)
    }

    pub fn ar_seed(&self, ar_index: usize) -> u64 {
        derive_seed(self.base_seed, ar_index as u64)
    }

    pub fn spike_seed(&self, ar_index: usize, ensemble_index: usize) -> u64 {
        let stream = self.ar_realizations as u64
            + ar_index as u64 * self.ensemble_realizations as u64
            + ensemble_index as u64;
        derive_seed(self.base_seed, stream)
    }
}

/// Deterministic per-stream seed derivation (splitmix64 of the base seed
/// xored with the hashed stream index).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(1)))
}

fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Normalized MSE of each estimator for one run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RunMses {
    pub pmtm: f64,
    pub ss_psd: f64,
    pub psth_psd: f64,
    pub oracle_mtm: f64,
}

/// PSD curves of one run, kept when curve collection is requested.
#[derive(Debug, Clone, Serialize)]
pub struct RunCurves {
    pub pmtm: PsdEstimate,
    pub ss_psd: PsdEstimate,
    pub psth_psd: PsdEstimate,
    pub oracle_mtm: PsdEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub ar_index: usize,
    pub ensemble_index: usize,
    pub ar_seed: u64,
    pub spike_seed: u64,
    /// Bins where the intensity was clamped into [0, 1].
    pub clamped_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mses: Option<RunMses>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curves: Option<RunCurves>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub mean: f64,
    /// Two sample standard deviations across runs (0 for a single run).
    pub two_std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub truth_psd: PsdEstimate,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub failure_count: usize,
}

/// Run the full protocol: `ar_realizations x ensemble_realizations`
/// independent runs, each evaluating all four estimators against the
/// analytic PSD. Per-run numerical failures are recorded, not fatal.
pub fn run_experiment(cfg: &ExperimentConfig, collect_curves: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.model()?;
    let tapers = generate_dpss(cfg.bin_count, cfg.alpha, cfg.taper_count)?;
    let grid = default_freq_grid(cfg.freq_bins);
    let truth_psd = ar_true_psd(&model, &grid)?;

    let latents: Vec<_> = (0..cfg.ar_realizations)
        .map(|i| simulate_ar(&model, cfg.bin_count, model.default_burn_in(), cfg.ar_seed(i)))
        .collect();

    let pairs: Vec<(usize, usize)> = (0..cfg.ar_realizations)
        .flat_map(|i| (0..cfg.ensemble_realizations).map(move |j| (i, j)))
        .collect();

    let runs: Vec<RunRecord> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let ar_seed = cfg.ar_seed(i);
            let spike_seed = cfg.spike_seed(i, j);
            let latent = &latents[i];
            let (cif, clamped_bins) = cif_from_latent(cfg.mean_rate, latent);

            let outcome = (|| -> Result<(RunMses, RunCurves)> {
                let spikes = generate_spikes(&cif, cfg.trial_count, spike_seed)?;
                let pmtm = run_pmtm(&spikes, cfg.alpha, cfg.taper_count, cfg.freq_bins, &cfg.em)?;
                let psth = psth_psd(&spikes, &tapers, &grid)?;
                let ss = ss_psd(&spikes, &tapers, &grid)?;
                let mut oracle = mtm_psd(latent.values(), &tapers, &grid)?;
                oracle.estimator_tag = "oracle-mtm".into();

                let mses = RunMses {
                    pmtm: normalized_mse(&pmtm.psd, &truth_psd)?.value,
                    ss_psd: normalized_mse(&ss, &truth_psd)?.value,
                    psth_psd: normalized_mse(&psth, &truth_psd)?.value,
                    oracle_mtm: normalized_mse(&oracle, &truth_psd)?.value,
                };
                let curves = RunCurves {
                    pmtm: pmtm.psd,
                    ss_psd: ss,
                    psth_psd: psth,
                    oracle_mtm: oracle,
                };
                Ok((mses, curves))
            })();

            match outcome {
                Ok((mses, curves)) => RunRecord {
                    ar_index: i,
                    ensemble_index: j,
                    ar_seed,
                    spike_seed,
                    clamped_bins,
                    mses: Some(mses),
                    error: None,
                    curves: collect_curves.then_some(curves),
                },
                Err(e) => RunRecord {
                    ar_index: i,
                    ensemble_index: j,
                    ar_seed,
                    spike_seed,
                    clamped_bins,
                    mses: None,
                    error: Some(e.to_string()),
                    curves: None,
                },
            }
        })
        .collect();

    let failure_count = runs.iter().filter(|r| r.error.is_some()).count();
    let aggregates = aggregate(&runs);

    Ok(ExperimentReport {
        config: cfg.clone(),
        truth_psd,
        runs,
        aggregates,
        failure_count,
    })
}

fn aggregate(runs: &[RunRecord]) -> Vec<AggregateRow> {
    let extract: [(&str, fn(&RunMses) -> f64); 4] = [
        ("pmtm", |m| m.pmtm),
        ("ss-psd", |m| m.ss_psd),
        ("psth-psd", |m| m.psth_psd),
        ("oracle-mtm", |m| m.oracle_mtm),
    ];
    extract
        .iter()
        .map(|(name, f)| {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.mses.as_ref().map(f)).collect();
            let n = values.len();
            let mean = if n > 0 {
                values.iter().sum::<f64>() / n as f64
            } else {
                f64::NAN
            };
            let two_std = if n > 1 {
                let var =
                    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
                2.0 * var.sqrt()
            } else {
                0.0
            };
            AggregateRow {
                estimator: name.to_string(),
                mean,
                two_std,
                runs: n,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            bin_count: 64,
            trial_count: 5,
            alpha: 3.0,
            taper_count: 4,
            freq_bins: 32,
            em: EmConfig {
                max_em_iters: 8,
                ..EmConfig::default()
            },
            ar_realizations: 2,
            ensemble_realizations: 2,
            base_seed: 123,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_per_stream() {
        let cfg = tiny_config();
        let mut seen = std::collections::HashSet::new();
        for i in 0..cfg.ar_realizations {
            assert!(seen.insert(cfg.ar_seed(i)));
            for j in 0..cfg.ensemble_realizations {
                assert!(seen.insert(cfg.spike_seed(i, j)));
            }
        }
    }

    #[test]
    fn single_run_is_deterministic() {
        let cfg = ExperimentConfig {
            ar_realizations: 1,
            ensemble_realizations: 1,
            ..tiny_config()
        };
        let a = run_experiment(&cfg, false).unwrap();
        let b = run_experiment(&cfg, false).unwrap();
        assert_eq!(a.failure_count, 0);
        let (ma, mb) = (a.runs[0].mses.unwrap(), b.runs[0].mses.unwrap());
        assert_eq!(ma.pmtm, mb.pmtm);
        assert_eq!(ma.ss_psd, mb.ss_psd);
        assert_eq!(ma.psth_psd, mb.psth_psd);
        assert_eq!(ma.oracle_mtm, mb.oracle_mtm);
    }

    #[test]
    fn aggregate_mean_is_arithmetic_mean() {
        let cfg = tiny_config();
        let report = run_experiment(&cfg, false).unwrap();
        assert_eq!(report.runs.len(), 4);
        assert_eq!(report.failure_count, 0);
        for row in &report.aggregates {
            let values: Vec<f64> = report
                .runs
                .iter()
                .filter_map(|r| r.mses.as_ref())
                .map(|m| match row.estimator.as_str() {
                    "pmtm" => m.pmtm,
                    "ss-psd" => m.ss_psd,
                    "psth-psd" => m.psth_psd,
                    "oracle-mtm" => m.oracle_mtm,
                    other => panic!("unexpected estimator {other}"),
                })
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert_eq!(row.mean, mean, "{}", row.estimator);
            assert_eq!(row.runs, 4);
        }
    }

    #[test]
    fn runs_regenerate_from_recorded_seeds() {
        let cfg = tiny_config();
        let report = run_experiment(&cfg, false).unwrap();
        let record = &report.runs[3];

        let model = cfg.model().unwrap();
        let latent = simulate_ar(
            &model,
            cfg.bin_count,
            model.default_burn_in(),
            record.ar_seed,
        );
        let (cif, clamped) = cif_from_latent(cfg.mean_rate, &latent);
        assert_eq!(clamped, record.clamped_bins);
        let spikes = generate_spikes(&cif, cfg.trial_count, record.spike_seed).unwrap();
        let pmtm = run_pmtm(&spikes, cfg.alpha, cfg.taper_count, cfg.freq_bins, &cfg.em).unwrap();
        let mse = normalized_mse(&pmtm.psd, &report.truth_psd).unwrap();
        assert_eq!(mse.value, record.mses.unwrap().pmtm);
    }

    #[test]
    fn curves_are_collected_on_request() {
        let cfg = ExperimentConfig {
            ar_realizations: 1,
            ensemble_realizations: 1,
            ..tiny_config()
        };
        let without = run_experiment(&cfg, false).unwrap();
        assert!(without.runs[0].curves.is_none());
        let with = run_experiment(&cfg, true).unwrap();
        let curves = with.runs[0].curves.as_ref().unwrap();
        assert_eq!(curves.pmtm.len(), cfg.freq_bins);
        assert_eq!(curves.oracle_mtm.len(), cfg.freq_bins);
    }
}
