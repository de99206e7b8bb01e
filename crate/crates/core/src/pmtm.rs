//! The point-process multitaper estimator: tapers, auxiliary statistics,
//! per-taper maximum-likelihood eigen-spectra, rescaling, and averaging.

use rayon::prelude::*;
use serde::Serialize;

use crate::aux_stats::{build_aux_statistic, estimate_mean_rate};
use crate::dpss::generate_dpss;
use crate::em::{estimate_eigen_spectrum, EmConfig, EmTrace};
use crate::mtm::PsdEstimate;
use crate::simulate::SpikeEnsemble;
use crate::spectral_model::{build_design_matrix, flat_spectrum_calibration, psd_from_params};
use crate::Result;

/// Output of one estimator run: the averaged PSD plus everything needed to
/// audit it.
#[derive(Debug, Clone, Serialize)]
pub struct PmtmResult {
    pub psd: PsdEstimate,
    /// Per-taper eigen-spectrum estimates after rescaling; their elementwise
    /// mean is `psd`.
    pub per_taper_psds: Vec<PsdEstimate>,
    pub mean_rate: f64,
    pub alpha: f64,
    pub taper_count: usize,
    pub freq_bins: usize,
    pub em_config: EmConfig,
    pub traces: Vec<EmTrace>,
    /// Taper concentration eigenvalues, for reference.
    pub concentrations: Vec<f64>,
    /// Multiplier applied to every eigen-spectrum so the readout matches the
    /// classic tapered estimate of a flat-spectrum process; equals `(K/N)^2`.
    pub scale_calibration: f64,
}

/// Run the full estimator on a spike ensemble.
///
/// Requires `taper_count < floor(2 alpha)` and `alpha >= 1`. Estimation is
/// fanned out over tapers; the averaging order is fixed, so results are
/// deterministic for identical inputs.
pub fn run_pmtm(
    spikes: &SpikeEnsemble,
    alpha: f64,
    taper_count: usize,
    freq_bins: usize,
    em: &EmConfig,
) -> Result<PmtmResult> {
    em.validate()?;
    let bins = spikes.bin_count();
    let mean_rate = estimate_mean_rate(spikes)?;
    let tapers = generate_dpss(bins, alpha, taper_count)?;
    let design = build_design_matrix(bins, freq_bins)?;
    let calibration = flat_spectrum_calibration(bins, freq_bins);

    let per_taper: Vec<Result<(PsdEstimate, EmTrace)>> = (0..taper_count)
        .into_par_iter()
        .map(|j| {
            let aux = build_aux_statistic(spikes, tapers.taper(j), j, mean_rate)
                .map_err(|e| e.for_taper(j))?;
            let (params, trace) =
                estimate_eigen_spectrum(&aux, &design, em).map_err(|e| e.for_taper(j))?;
            let raw = psd_from_params(&params);
            let scale = aux.taper_scale() * aux.taper_scale() * calibration;
            let power = raw.power.iter().map(|p| p * scale).collect();
            let psd = PsdEstimate::new(
                raw.freqs,
                power,
                format!("pmtm-taper-{j}"),
                Some(alpha),
                Some(1),
            )
            .map_err(|e| e.for_taper(j))?;
            Ok((psd, trace))
        })
        .collect();

    // Any taper failure aborts the run: averaging over a silently reduced
    // taper set would change the estimator's statistical properties.
    let mut per_taper_psds = Vec::with_capacity(taper_count);
    let mut traces = Vec::with_capacity(taper_count);
    for result in per_taper {
        let (psd, trace) = result?;
        per_taper_psds.push(psd);
        traces.push(trace);
    }

    let grid_len = per_taper_psds[0].len();
    let mut power = vec![0.0; grid_len];
    for psd in &per_taper_psds {
        for (acc, p) in power.iter_mut().zip(&psd.power) {
            *acc += p;
        }
    }
    for p in &mut power {
        *p /= taper_count as f64;
    }
    let psd = PsdEstimate::new(
        per_taper_psds[0].freqs.clone(),
        power,
        "pmtm",
        Some(alpha),
        Some(taper_count),
    )?;

    Ok(PmtmResult {
        psd,
        per_taper_psds,
        mean_rate,
        alpha,
        taper_count,
        freq_bins,
        em_config: em.clone(),
        traces,
        concentrations: tapers.concentrations().to_vec(),
        scale_calibration: calibration,
    })
}

/// Total offset clamping events across tapers, a warning statistic surfaced
/// in run metadata.
pub fn total_offset_clamps(result: &PmtmResult) -> usize {
    result.traces.iter().map(|t| t.offset_clamp_count).sum()
}
