//! Maximum-likelihood estimation of one eigen-spectrum's prior variances from
//! one auxiliary statistic: EM with a Laplace-approximated E-step.
//!
//! The E-step posterior mode is found by damped Newton ascent kept strictly
//! inside the feasible set `D = { z : 0 <= mu_k + (Az)_k <= 1 }` by a
//! fraction-to-boundary step cap; the objective is concave on `D`, so every
//! Armijo-accepted step increases it. The Laplace covariance is the inverse
//! negative Hessian at the mode, and the M-step is the closed form
//! `theta_m = mode_m^2 + cov_mm`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::aux_stats::AuxStatistic;
use crate::spectral_model::{DesignMatrix, LatentPosterior, SpectralParams};
use crate::{Error, Result};

/// How the prior variances are initialized before the first EM iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    /// Moment-based start: ridge least squares of the centered trial mean on
    /// the design, plus the implied per-coefficient noise variance. Starts
    /// EM at the scale of the maximum-likelihood fixed point, which the
    /// multiplicative EM updates approach only slowly from a distant
    /// uniform start.
    Moment,
    /// Uniform start at `initial_theta`.
    Uniform,
}

/// Solver configuration. Field defaults are chosen for robust convergence at
/// desk scale; all of them are exposed as CLI flags and JSON config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_em_iters: usize,
    /// Relative L2 change of theta below which EM stops.
    pub em_tol: f64,
    pub max_newton_iters: usize,
    /// Gradient norm below which the Newton ascent stops.
    pub newton_grad_tol: f64,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    /// Margin epsilon: iterates keep `epsilon <= mu_k + (Az)_k <= 1 - epsilon`,
    /// and offsets are clamped inside the same band before solving.
    pub boundary_margin: f64,
    pub theta_init: ThetaInit,
    /// Uniform initial prior variance (used by `ThetaInit::Uniform`).
    pub initial_theta: f64,
    /// Strength (per trial) of the log-barrier at the margin walls. Bins
    /// whose taper value is near zero squeeze the intensity against the
    /// feasibility margin; without a barrier the fraction-to-boundary cap
    /// strangles the Newton step there. The barrier perturbs interior modes
    /// by O(barrier_strength), far below the estimation noise.
    pub barrier_strength: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_em_iters: 50,
            em_tol: 1e-4,
            max_newton_iters: 100,
            newton_grad_tol: 1e-6,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            boundary_margin: 1e-8,
            theta_init: ThetaInit::Moment,
            initial_theta: 1e-2,
            barrier_strength: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("em_tol", self.em_tol),
            ("newton_grad_tol", self.newton_grad_tol),
            ("boundary_margin", self.boundary_margin),
            ("initial_theta", self.initial_theta),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.boundary_margin >= 1e-3 {
            return Err(Error::InvalidParameter(format!(
                "boundary_margin must be below 1e-3, got {}",
                self.boundary_margin
            )));
        }
        for (name, value) in [
            ("armijo_c", self.armijo_c),
            ("backtrack_ratio", self.backtrack_ratio),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {value}"
                )));
            }
        }
        if !(self.barrier_strength >= 0.0 && self.barrier_strength < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "barrier_strength must lie in [0, 1), got {}",
                self.barrier_strength
            )));
        }
        if self.max_em_iters == 0 || self.max_newton_iters == 0 {
            return Err(Error::InvalidParameter(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One EM iteration's diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct EmIteration {
    /// Complete-data log-likelihood at the E-step mode (constants dropped).
    pub loglik: f64,
    /// Relative L2 change of theta produced by the M-step.
    pub theta_rel_change: f64,
    pub newton_iters: usize,
    /// Bins whose intensity sits against the feasibility margin at the mode.
    pub active_constraints: usize,
    /// Diagonal-jitter retries needed by the Hessian factorization.
    pub jitter_events: usize,
    /// E-step objective at each Newton iterate, for ascent diagnostics.
    pub newton_objective_path: Vec<f64>,
}

/// Full EM diagnostics for one taper.
#[derive(Debug, Clone, Serialize)]
pub struct EmTrace {
    pub iterations: Vec<EmIteration>,
    /// True when the relative-change criterion fired before the cap.
    pub converged: bool,
    /// Offsets clamped into the feasible band before solving.
    pub offset_clamp_count: usize,
    /// Bins outside the taper's numerical support, excluded from the solve.
    pub inert_bins: usize,
}

/// Bins whose normalized taper magnitude falls below this threshold carry
/// `O(threshold^2)` likelihood information but pin the intensity against the
/// feasibility boundary with enormous curvature; the solver excludes them
/// from the likelihood and the constraint set.
pub const TAPER_SUPPORT_THRESHOLD: f64 = 1e-3;

// Per-taper likelihood pieces shared by the public derivative operations and
// the Newton solver. Offsets here are whatever the caller supplied (raw for
// the public ops, clamped for the solver). `active[k] == false` marks bins
// outside the taper's numerical support; the solver path skips them.
struct TaperProblem<'a> {
    design: &'a DesignMatrix,
    trial_mean: &'a [f64],
    trial_count: f64,
    offsets: Vec<f64>,
    active: Vec<bool>,
}

impl<'a> TaperProblem<'a> {
    fn raw(aux: &'a AuxStatistic, design: &'a DesignMatrix) -> Result<Self> {
        if aux.bin_count() != design.bin_count() {
            return Err(Error::DimensionMismatch(format!(
                "auxiliary statistic has {} bins, design matrix {}",
                aux.bin_count(),
                design.bin_count()
            )));
        }
        Ok(TaperProblem {
            design,
            trial_mean: aux.trial_mean(),
            trial_count: aux.trial_count() as f64,
            offsets: aux.offsets().to_vec(),
            active: vec![true; aux.bin_count()],
        })
    }

    // Offsets are clamped to twice the margin so the zero start sits
    // strictly inside the barrier walls at the margin itself.
    fn clamped(aux: &'a AuxStatistic, design: &'a DesignMatrix, margin: f64) -> Result<(Self, usize)> {
        let mut problem = TaperProblem::raw(aux, design)?;
        problem.active = aux
            .normalized_taper()
            .iter()
            .map(|v| v.abs() > TAPER_SUPPORT_THRESHOLD)
            .collect();
        let mut clamp_count = 0;
        for o in &mut problem.offsets {
            if !o.is_finite() {
                return Err(Error::DegenerateOffsets("non-finite offset".into()));
            }
            let clamped = o.clamp(2.0 * margin, 1.0 - 2.0 * margin);
            if clamped != *o {
                clamp_count += 1;
                *o = clamped;
            }
        }
        if problem.active.iter().all(|a| !a) {
            return Err(Error::DegenerateOffsets(
                "no bins inside the taper support".into(),
            ));
        }
        Ok((problem, clamp_count))
    }

    fn inert_bins(&self) -> usize {
        self.active.iter().filter(|a| !**a).count()
    }

    fn intensity(&self, z: &DVector<f64>) -> Vec<f64> {
        let az = self.design.apply(z);
        self.offsets
            .iter()
            .zip(az.iter())
            .map(|(o, v)| o + v)
            .collect()
    }

    // sum_k L [ nbar_k ln lambda_k + (1 - nbar_k) ln(1 - lambda_k) ]
    fn data_loglik(&self, lambda: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&nbar, &lam), &active) in self.trial_mean.iter().zip(lambda).zip(&self.active) {
            if active {
                acc += nbar * lam.ln() + (1.0 - nbar) * (1.0 - lam).ln();
            }
        }
        self.trial_count * acc
    }

    // u_k = L [ nbar_k / lambda_k - (1 - nbar_k) / (1 - lambda_k) ]
    fn data_score(&self, lambda: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            lambda.len(),
            self.trial_mean
                .iter()
                .zip(lambda)
                .zip(&self.active)
                .map(|((&nbar, &lam), &active)| {
                    if active {
                        self.trial_count * (nbar / lam - (1.0 - nbar) / (1.0 - lam))
                    } else {
                        0.0
                    }
                }),
        )
    }

    // w_k = L [ nbar_k / lambda_k^2 + (1 - nbar_k) / (1 - lambda_k)^2 ] >= 0
    fn data_weights(&self, lambda: &[f64]) -> Vec<f64> {
        self.trial_mean
            .iter()
            .zip(lambda)
            .zip(&self.active)
            .map(|((&nbar, &lam), &active)| {
                if active {
                    self.trial_count
                        * (nbar / (lam * lam) + (1.0 - nbar) / ((1.0 - lam) * (1.0 - lam)))
                } else {
                    0.0
                }
            })
            .collect()
    }

    // E-step objective: data log-likelihood plus the prior quadratic.
    fn objective(&self, lambda: &[f64], z: &DVector<f64>, theta: &[f64]) -> f64 {
        let prior: f64 = z
            .iter()
            .zip(theta)
            .map(|(zm, &var)| zm * zm / (2.0 * var))
            .sum();
        self.data_loglik(lambda) - prior
    }

    fn check_interior(&self, lambda: &[f64]) -> Result<()> {
        for (k, &lam) in lambda.iter().enumerate() {
            if self.active[k] && !(lam > 0.0 && lam < 1.0) {
                return Err(Error::InfeasiblePoint(format!(
                    "intensity {lam} at bin {k} is outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

fn check_dims(z: &DVector<f64>, theta: &SpectralParams, design: &DesignMatrix) -> Result<()> {
    if z.len() != design.coeff_count() || theta.variances().len() != design.coeff_count() {
        return Err(Error::DimensionMismatch(format!(
            "z has {} coefficients, theta {}, design expects {}",
            z.len(),
            theta.variances().len(),
            design.coeff_count()
        )));
    }
    Ok(())
}

/// Complete-data log-likelihood of the auxiliary observations at `z`
/// (additive constants and the truncation normalizer dropped).
///
/// Requires `mu_k + (Az)_k` strictly inside `(0, 1)` for every bin.
pub fn complete_log_likelihood(
    z: &DVector<f64>,
    theta: &SpectralParams,
    aux: &AuxStatistic,
    design: &DesignMatrix,
) -> Result<f64> {
    check_dims(z, theta, design)?;
    let problem = TaperProblem::raw(aux, design)?;
    let lambda = problem.intensity(z);
    problem.check_interior(&lambda)?;
    let vars = theta.variances();
    let prior: f64 = z
        .iter()
        .zip(vars)
        .map(|(zm, &var)| zm * zm / (2.0 * var) + 0.5 * var.ln())
        .sum();
    Ok(problem.data_loglik(&lambda) - prior)
}

/// Analytic gradient of [`complete_log_likelihood`] with respect to `z`.
pub fn loglik_gradient(
    z: &DVector<f64>,
    theta: &SpectralParams,
    aux: &AuxStatistic,
    design: &DesignMatrix,
) -> Result<DVector<f64>> {
    check_dims(z, theta, design)?;
    let problem = TaperProblem::raw(aux, design)?;
    let lambda = problem.intensity(z);
    problem.check_interior(&lambda)?;
    let mut grad = design.apply_transpose(&problem.data_score(&lambda));
    for (g, (zm, &var)) in grad.iter_mut().zip(z.iter().zip(theta.variances())) {
        *g -= zm / var;
    }
    Ok(grad)
}

/// Analytic Hessian of [`complete_log_likelihood`] with respect to `z`:
/// `-A' W A - diag(1/theta)`, negative definite on the feasible set.
pub fn loglik_hessian(
    z: &DVector<f64>,
    theta: &SpectralParams,
    aux: &AuxStatistic,
    design: &DesignMatrix,
) -> Result<DMatrix<f64>> {
    check_dims(z, theta, design)?;
    let problem = TaperProblem::raw(aux, design)?;
    let lambda = problem.intensity(z);
    problem.check_interior(&lambda)?;
    let mut hessian = design.weighted_gram(&problem.data_weights(&lambda));
    hessian.neg_mut();
    for (m, &var) in theta.variances().iter().enumerate() {
        hessian[(m, m)] -= 1.0 / var;
    }
    Ok(hessian)
}

struct NewtonOutcome {
    mode: DVector<f64>,
    lambda: Vec<f64>,
    iterations: usize,
    objective_path: Vec<f64>,
    jitter_events: usize,
    active_constraints: usize,
}

// Exact negative Hessian at `lambda` (no barrier terms); used for the
// Laplace covariance.
fn factor_neg_hessian(
    problem: &TaperProblem<'_>,
    lambda: &[f64],
    theta: &[f64],
    jitter_events: &mut usize,
) -> Result<Cholesky<f64, Dyn>> {
    factor_gram_plus_prior(problem, &problem.data_weights(lambda), theta, jitter_events)
}

// Cholesky of (A' W A + diag(1/theta)) with the diagonal-jitter fallback:
// delta starts at 1e-10 and doubles up to 1e-6 before giving up.
fn factor_gram_plus_prior(
    problem: &TaperProblem<'_>,
    weights: &[f64],
    theta: &[f64],
    jitter_events: &mut usize,
) -> Result<Cholesky<f64, Dyn>> {
    let mut neg_h = problem.design.weighted_gram(weights);
    for (m, &var) in theta.iter().enumerate() {
        neg_h[(m, m)] += 1.0 / var;
    }
    if let Some(chol) = Cholesky::new(neg_h.clone()) {
        return Ok(chol);
    }
    let mut delta = 1e-10;
    while delta <= 1e-6 {
        *jitter_events += 1;
        let mut jittered = neg_h.clone();
        for m in 0..jittered.nrows() {
            jittered[(m, m)] += delta;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(chol);
        }
        delta *= 2.0;
    }
    Err(Error::Numerical(
        "negative Hessian not positive definite after jitter".into(),
    ))
}

// E-step solver objective: the exact objective plus a weak log-barrier at
// the margin walls. Returns negative infinity outside the open margin box,
// which the line search treats as a rejection.
fn barrier_objective(
    problem: &TaperProblem<'_>,
    lambda: &[f64],
    z: &DVector<f64>,
    theta: &[f64],
    eps: f64,
    tau: f64,
) -> f64 {
    let mut barrier = 0.0;
    if tau > 0.0 {
        for (&lam, &active) in lambda.iter().zip(&problem.active) {
            if !active {
                continue;
            }
            let lo = lam - eps;
            let hi = 1.0 - eps - lam;
            if lo <= 0.0 || hi <= 0.0 {
                return f64::NEG_INFINITY;
            }
            barrier += lo.ln() + hi.ln();
        }
    }
    problem.objective(lambda, z, theta) + tau * barrier
}

fn newton_mode(
    problem: &TaperProblem<'_>,
    theta: &[f64],
    cfg: &EmConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<NewtonOutcome> {
    let eps = cfg.boundary_margin;
    let tau = cfg.barrier_strength * problem.trial_count;
    let coeffs = problem.design.coeff_count();
    let mut z = match warm_start {
        Some(start) => {
            if start.len() != coeffs {
                return Err(Error::DimensionMismatch(format!(
                    "warm start has {} coefficients, expected {coeffs}",
                    start.len()
                )));
            }
            start.clone()
        }
        None => DVector::zeros(coeffs),
    };

    let mut lambda = problem.intensity(&z);
    check_margin(problem, &lambda, eps)?;

    let mut objective_path = Vec::new();
    let mut jitter_events = 0;
    let mut iterations = 0;

    for _ in 0..cfg.max_newton_iters {
        let value = barrier_objective(problem, &lambda, &z, theta, eps, tau);
        objective_path.push(value);

        // Gradient of the barrier objective.
        let mut score = problem.data_score(&lambda);
        if tau > 0.0 {
            for ((s, &lam), &active) in score.iter_mut().zip(&lambda).zip(&problem.active) {
                if active {
                    *s += tau * (1.0 / (lam - eps) - 1.0 / (1.0 - eps - lam));
                }
            }
        }
        let mut grad = problem.design.apply_transpose(&score);
        for (g, (zm, &var)) in grad.iter_mut().zip(z.iter().zip(theta)) {
            *g -= zm / var;
        }
        if grad.norm() < cfg.newton_grad_tol {
            break;
        }
        iterations += 1;

        // Negative Hessian: data and barrier curvature plus the prior.
        let mut weights = problem.data_weights(&lambda);
        if tau > 0.0 {
            for ((w, &lam), &active) in weights.iter_mut().zip(&lambda).zip(&problem.active) {
                if active {
                    let lo = lam - eps;
                    let hi = 1.0 - eps - lam;
                    *w += tau * (1.0 / (lo * lo) + 1.0 / (hi * hi));
                }
            }
        }
        let chol = factor_gram_plus_prior(problem, &weights, theta, &mut jitter_events)?;
        let direction = chol.solve(&grad);
        let slope = grad.dot(&direction);
        if !(slope > 0.0) {
            // Concavity guarantees an ascent direction; losing it means the
            // factorization has degenerated numerically.
            break;
        }
        let step_intensity = problem.design.apply(&direction);

        // Fraction-to-boundary backstop: scale the step so the closest
        // constraint keeps the margin eps, stopping just short of it.
        let mut t_boundary = f64::INFINITY;
        for ((&lam, &dl), &active) in lambda
            .iter()
            .zip(step_intensity.iter())
            .zip(&problem.active)
        {
            if !active {
                continue;
            }
            if dl > 0.0 {
                t_boundary = t_boundary.min((1.0 - eps - lam) / dl);
            } else if dl < 0.0 {
                t_boundary = t_boundary.min((eps - lam) / dl);
            }
        }
        let mut t = 1.0_f64.min(0.995 * t_boundary);
        if t <= 0.0 {
            break;
        }

        // Armijo backtracking on the ascent value.
        let mut accepted = false;
        while t > 1e-16 {
            let trial_z = &z + t * &direction;
            let trial_lambda: Vec<f64> = lambda
                .iter()
                .zip(step_intensity.iter())
                .map(|(lam, dl)| lam + t * dl)
                .collect();
            let trial_value = barrier_objective(problem, &trial_lambda, &trial_z, theta, eps, tau);
            if trial_value >= value + cfg.armijo_c * t * slope {
                z = trial_z;
                accepted = true;
                break;
            }
            t *= cfg.backtrack_ratio;
        }
        if !accepted {
            // No step passes the sufficient-increase test: the iterate is at
            // the resolution limit of the objective.
            break;
        }

        lambda = problem.intensity(&z);
        check_margin(problem, &lambda, eps)?;
    }

    let value = barrier_objective(problem, &lambda, &z, theta, eps, tau);
    objective_path.push(value);

    let active_constraints = lambda
        .iter()
        .zip(&problem.active)
        .filter(|&(&lam, &active)| active && (lam <= 1e3 * eps || lam >= 1.0 - 1e3 * eps))
        .count();

    Ok(NewtonOutcome {
        mode: z,
        lambda,
        iterations,
        objective_path,
        jitter_events,
        active_constraints,
    })
}

// Feasibility invariant, asserted on every accepted iterate. A small slack
// absorbs the rounding of the incremental intensity updates.
fn check_margin(problem: &TaperProblem<'_>, lambda: &[f64], eps: f64) -> Result<()> {
    let slack = 1e-11;
    for (k, &lam) in lambda.iter().enumerate() {
        if problem.active[k] && (lam < eps - slack || lam > 1.0 - eps + slack) {
            return Err(Error::Numerical(format!(
                "iterate violates the feasibility margin at bin {k}: intensity {lam}"
            )));
        }
    }
    Ok(())
}

// Inverse of L (lower triangular) by column-wise forward substitution,
// working on the column-major storage directly.
fn invert_lower_triangular(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let ls = l.as_slice();
    let mut inv = DMatrix::zeros(n, n);
    let inv_slice = inv.as_mut_slice();
    for j in 0..n {
        let col = &mut inv_slice[j * n..(j + 1) * n];
        col[j] = 1.0;
        for k in j..n {
            let x = col[k] / ls[k * n + k];
            col[k] = x;
            if x != 0.0 {
                let lcol = &ls[k * n..(k + 1) * n];
                for i in k + 1..n {
                    col[i] -= lcol[i] * x;
                }
            }
        }
    }
    inv
}

fn covariance_from_cholesky(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let linv = invert_lower_triangular(chol.l_dirty());
    // (L L')^{-1} = L^{-T} L^{-1}; symmetrize against rounding.
    let mut cov = linv.tr_mul(&linv);
    let n = cov.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }
    cov
}

fn covariance_diagonal_from_cholesky(chol: &Cholesky<f64, Dyn>) -> DVector<f64> {
    let linv = invert_lower_triangular(chol.l_dirty());
    let n = linv.nrows();
    DVector::from_fn(n, |m, _| linv.column(m).norm_squared())
}

/// E-step: the mode of the coefficient posterior over the feasible set and
/// the Laplace covariance (inverse negative Hessian at the mode).
pub fn e_step_mode(
    theta: &SpectralParams,
    aux: &AuxStatistic,
    design: &DesignMatrix,
    cfg: &EmConfig,
    warm_start: Option<&DVector<f64>>,
) -> Result<LatentPosterior> {
    cfg.validate()?;
    if theta.variances().len() != design.coeff_count() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} variances, design expects {}",
            theta.variances().len(),
            design.coeff_count()
        )));
    }
    let (problem, _clamps) = TaperProblem::clamped(aux, design, cfg.boundary_margin)?;
    let outcome = newton_mode(&problem, theta.variances(), cfg, warm_start)?;
    let mut jitter = 0;
    let chol = factor_neg_hessian(&problem, &outcome.lambda, theta.variances(), &mut jitter)?;
    let covariance = covariance_from_cholesky(&chol);
    LatentPosterior::new(outcome.mode, covariance)
}

/// M-step: `theta_m = mean_m^2 + cov_mm`, the unique maximizer of the
/// EM surrogate. Strictly positive by positive definiteness.
pub fn m_step(posterior: &LatentPosterior) -> Result<SpectralParams> {
    let mean = posterior.mean();
    let cov = posterior.covariance();
    let variances: Vec<f64> = (0..posterior.dim())
        .map(|m| mean[m] * mean[m] + cov[(m, m)])
        .collect();
    SpectralParams::new(variances)
}

// Moment-based theta start: ridge least squares of the centered trial mean
// on the design columns, plus the implied per-coefficient sampling variance
// under a white residual approximation. This is the EM update one would get
// from a flat prior, so it lands at the scale of the ML fixed point.
fn moment_theta_init(problem: &TaperProblem<'_>) -> Result<Vec<f64>> {
    let design = problem.design;
    let bins = design.bin_count();
    let residual = DVector::from_iterator(
        bins,
        problem
            .trial_mean
            .iter()
            .zip(&problem.offsets)
            .zip(&problem.active)
            .map(|((nbar, o), &active)| if active { nbar - o } else { 0.0 }),
    );
    let bin_weights: Vec<f64> = problem.active.iter().map(|&a| f64::from(u8::from(a))).collect();
    let mut gram = design.weighted_gram(&bin_weights);
    let ridge = 1e-6 * gram.diagonal().sum() / gram.nrows() as f64;
    for m in 0..gram.nrows() {
        gram[(m, m)] += ridge;
    }
    let chol = Cholesky::new(gram).ok_or_else(|| {
        Error::Numerical("design Gram matrix not positive definite".into())
    })?;
    let z0 = chol.solve(&design.apply_transpose(&residual));

    // Mean per-bin Bernoulli variance of the trial average.
    let noise: f64 = problem
        .trial_mean
        .iter()
        .map(|&nbar| {
            let p = nbar.clamp(1e-6, 1.0 - 1e-6);
            p * (1.0 - p)
        })
        .sum::<f64>()
        / (bins as f64 * problem.trial_count);
    let coeff_var = covariance_diagonal_from_cholesky(&chol);

    // Subtract the sampling variance so the start estimates the *prior*
    // variance of each coefficient, not its raw second moment; coordinates
    // indistinguishable from noise start at a small fraction of the
    // sampling scale, which parks them near the resolution floor of the
    // data (the floor fraction trades valley depth against slope capture).
    Ok(z0
        .iter()
        .zip(coeff_var.iter())
        .map(|(z, v)| {
            let sampling = noise * v;
            (z * z - sampling).clamp(0.3 * sampling.max(1e-12), 1e6)
        })
        .collect())
}

/// Alternate E- and M-steps until the relative change of theta drops below
/// `em_tol` or the iteration cap is reached. Each E-step is warm-started
/// from the previous mode.
pub fn estimate_eigen_spectrum(
    aux: &AuxStatistic,
    design: &DesignMatrix,
    cfg: &EmConfig,
) -> Result<(SpectralParams, EmTrace)> {
    cfg.validate()?;
    let (problem, offset_clamp_count) =
        TaperProblem::clamped(aux, design, cfg.boundary_margin)?;
    let coeffs = design.coeff_count();
    let mut theta = match cfg.theta_init {
        ThetaInit::Uniform => vec![cfg.initial_theta; coeffs],
        ThetaInit::Moment => moment_theta_init(&problem)?,
    };
    let mut warm: Option<DVector<f64>> = None;
    let mut iterations = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_em_iters {
        let outcome = newton_mode(&problem, &theta, cfg, warm.as_ref())?;

        let mut jitter = outcome.jitter_events;
        let chol = factor_neg_hessian(&problem, &outcome.lambda, &theta, &mut jitter)?;
        let cov_diag = covariance_diagonal_from_cholesky(&chol);

        // Complete-data log-likelihood at the mode under the current theta.
        let loglik = {
            let prior: f64 = outcome
                .mode
                .iter()
                .zip(&theta)
                .map(|(zm, &var)| zm * zm / (2.0 * var) + 0.5 * var.ln())
                .sum();
            problem.data_loglik(&outcome.lambda) - prior
        };

        let new_theta: Vec<f64> = outcome
            .mode
            .iter()
            .zip(cov_diag.iter())
            .map(|(zm, &v)| zm * zm + v)
            .collect();
        debug_assert!(new_theta.iter().all(|&v| v > 0.0));

        let change = theta
            .iter()
            .zip(&new_theta)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm = theta.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel_change = change / norm;

        iterations.push(EmIteration {
            loglik,
            theta_rel_change: rel_change,
            newton_iters: outcome.iterations,
            active_constraints: outcome.active_constraints,
            jitter_events: jitter,
            newton_objective_path: outcome.objective_path,
        });

        theta = new_theta;
        warm = Some(outcome.mode);

        if rel_change < cfg.em_tol {
            converged = true;
            break;
        }
    }

    let params = SpectralParams::new(theta)?;
    let trace = EmTrace {
        iterations,
        converged,
        offset_clamp_count,
        inert_bins: problem.inert_bins(),
    };
    Ok((params, trace))
}
