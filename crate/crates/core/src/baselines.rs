//! Comparison estimators: the multitaper PSD of the trial-averaged spike
//! train (PSTH-PSD) and of a random-walk state-space estimate of the latent
//! process (SS-PSD).

use serde::Serialize;

use crate::aux_stats::estimate_mean_rate;
use crate::dpss::TaperSet;
use crate::mtm::{mtm_psd, PsdEstimate};
use crate::simulate::SpikeEnsemble;
use crate::Result;

const RATE_MARGIN: f64 = 1e-8;

/// Fitted random-walk state-space model `x_k = x_{k-1} + w_k` with Bernoulli
/// observations through the linear link `lambda_k = mu + x_k`.
#[derive(Debug, Clone, Serialize)]
pub struct SsModel {
    /// Innovation variance of the random walk, estimated by EM.
    pub process_noise_var: f64,
    /// Fixed-interval smoothed latent states.
    pub smoothed_states: Vec<f64>,
    /// Bins where the rate had to be clamped back into (0, 1).
    pub clamp_events: usize,
    pub em_iterations: usize,
}

/// Multitaper PSD of the mean-centered trial average (PSTH).
pub fn psth_psd(spikes: &SpikeEnsemble, taper_set: &TaperSet, freqs: &[f64]) -> Result<PsdEstimate> {
    let trials = spikes.trial_count() as f64;
    let counts = spikes.bin_counts();
    let mut psth: Vec<f64> = counts.iter().map(|&c| c as f64 / trials).collect();
    let mean = psth.iter().sum::<f64>() / psth.len() as f64;
    for v in &mut psth {
        *v -= mean;
    }
    let mut psd = mtm_psd(&psth, taper_set, freqs)?;
    psd.estimator_tag = "psth-psd".into();
    Ok(psd)
}

/// Multitaper PSD of the mean-centered smoothed state estimate.
pub fn ss_psd(spikes: &SpikeEnsemble, taper_set: &TaperSet, freqs: &[f64]) -> Result<PsdEstimate> {
    let model = fit_ss_model(spikes)?;
    let mut states = model.smoothed_states;
    let mean = states.iter().sum::<f64>() / states.len() as f64;
    for v in &mut states {
        *v -= mean;
    }
    let mut psd = mtm_psd(&states, taper_set, freqs)?;
    psd.estimator_tag = "ss-psd".into();
    Ok(psd)
}

/// Fit the random-walk model: a Gaussian-approximation forward filter with a
/// mode-based observation update, fixed-interval (RTS) backward smoothing,
/// and EM over the process noise variance.
pub fn fit_ss_model(spikes: &SpikeEnsemble) -> Result<SsModel> {
    let mu = estimate_mean_rate(spikes)?;
    let bins = spikes.bin_count();
    let trials = spikes.trial_count() as f64;
    let counts: Vec<f64> = spikes.bin_counts().iter().map(|&c| c as f64).collect();

    let prior_var = 0.01;
    let mut q = 1e-4;
    let mut em_iterations = 0;
    let mut clamp_events = 0;
    let mut smoothed = vec![0.0; bins];

    for _ in 0..50 {
        em_iterations += 1;
        let pass = smooth_pass(&counts, trials, mu, q, prior_var, &mut clamp_events);
        smoothed = pass.smoothed;

        // EM update of q from the smoothed transition moments.
        let mut acc = 0.0;
        for k in 1..bins {
            let dx = smoothed[k] - smoothed[k - 1];
            acc += dx * dx + pass.smoothed_var[k] + pass.smoothed_var[k - 1]
                - 2.0 * pass.lag_one_cov[k];
        }
        let q_new = (acc / (bins - 1) as f64).max(1e-12);
        let rel = (q_new - q).abs() / q;
        q = q_new;
        if rel < 1e-3 {
            break;
        }
    }

    Ok(SsModel {
        process_noise_var: q,
        smoothed_states: smoothed,
        clamp_events,
        em_iterations,
    })
}

struct SmoothPass {
    smoothed: Vec<f64>,
    smoothed_var: Vec<f64>,
    /// `lag_one_cov[k]` approximates `Cov(x_k, x_{k-1} | data)`; entry 0 unused.
    lag_one_cov: Vec<f64>,
}

fn smooth_pass(
    counts: &[f64],
    trials: f64,
    mu: f64,
    q: f64,
    prior_var: f64,
    clamp_events: &mut usize,
) -> SmoothPass {
    let bins = counts.len();
    let mut filt_mean = vec![0.0; bins];
    let mut filt_var = vec![0.0; bins];
    let mut pred_mean = vec![0.0; bins];
    let mut pred_var = vec![0.0; bins];

    let mut prev_mean = 0.0;
    let mut prev_var = prior_var;
    for k in 0..bins {
        let xp = prev_mean;
        let pp = prev_var + q;
        pred_mean[k] = xp;
        pred_var[k] = pp;

        // Mode of the one-step posterior by scalar Newton.
        let s = counts[k];
        let miss = trials - s;
        let mut x = xp;
        for _ in 0..50 {
            let lambda = clamp_rate(mu + x, clamp_events);
            let grad = -(x - xp) / pp + s / lambda - miss / (1.0 - lambda);
            let curv = -1.0 / pp - s / (lambda * lambda) - miss / ((1.0 - lambda) * (1.0 - lambda));
            let step = grad / curv;
            x -= step;
            if step.abs() < 1e-12 * (1.0 + x.abs()) {
                break;
            }
        }
        let lambda = clamp_rate(mu + x, clamp_events);
        let info = 1.0 / pp + s / (lambda * lambda) + miss / ((1.0 - lambda) * (1.0 - lambda));
        filt_mean[k] = x;
        filt_var[k] = 1.0 / info;
        prev_mean = x;
        prev_var = filt_var[k];
    }

    // RTS backward pass.
    let mut smoothed = filt_mean.clone();
    let mut smoothed_var = filt_var.clone();
    let mut gain = vec![0.0; bins];
    for k in (0..bins - 1).rev() {
        let c = filt_var[k] / pred_var[k + 1];
        gain[k] = c;
        smoothed[k] = filt_mean[k] + c * (smoothed[k + 1] - pred_mean[k + 1]);
        smoothed_var[k] = filt_var[k] + c * c * (smoothed_var[k + 1] - pred_var[k + 1]);
    }
    let mut lag_one_cov = vec![0.0; bins];
    for k in 1..bins {
        lag_one_cov[k] = gain[k - 1] * smoothed_var[k];
    }

    SmoothPass {
        smoothed,
        smoothed_var,
        lag_one_cov,
    }
}

fn clamp_rate(lambda: f64, clamp_events: &mut usize) -> f64 {
    if (RATE_MARGIN..=1.0 - RATE_MARGIN).contains(&lambda) {
        lambda
    } else {
        *clamp_events += 1;
        lambda.clamp(RATE_MARGIN, 1.0 - RATE_MARGIN)
    }
}
