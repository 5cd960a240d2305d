//! Maximum (simulated) likelihood estimation.
//!
//! BFGS with Armijo backtracking on the negative log-likelihood, followed by a
//! few Newton steps on the finite-difference Hessian of the analytic gradient.
//! The same Hessian gives the covariance matrix.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, SeverityClass};
use crate::linalg::{invert_symmetric, symmetrize, to_rows};
use crate::model::{CompiledModel, ModelSpec, ParameterRole, ParameterSlot, ParameterVector};
use crate::numeric::{make_draws, std_normal_quantile, two_tailed_p, DrawMatrix};
use crate::{Error, Result};

/// |θ| beyond which a coefficient is taken to be diverging.
const SEPARATION_BOUND: f64 = 50.0;
/// |θ| above which a converged coefficient is probed for divergence.
const SEPARATION_PROBE: f64 = 15.0;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Largest coordinate change of a single BFGS trial step.
const MAX_STEP: f64 = 5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMethod {
    /// Inverse of the negative finite-difference Hessian.
    #[default]
    Hessian,
    /// Inverse outer product of per-observation scores.
    Bhhh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimationOptions {
    pub n_draws: usize,
    pub discard: u64,
    pub max_iterations: usize,
    /// Bound on `max_k |g_k|·max(1,|θ_k|) / max(1,|LL|)`.
    pub gradient_tolerance: f64,
    /// Bound on the largest coordinate of an accepted step.
    pub step_tolerance: f64,
    pub covariance: CovarianceMethod,
    /// Relative step for the central-difference Hessian.
    pub hessian_step: f64,
    /// Newton steps attempted after BFGS stops.
    pub newton_polish: usize,
    /// Parameters held at a fixed value, by parameter name.
    pub held: BTreeMap<String, f64>,
    /// Starting values by parameter name (others use the defaults).
    pub start: BTreeMap<String, f64>,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions {
            n_draws: 500,
            discard: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            step_tolerance: 1e-8,
            covariance: CovarianceMethod::Hessian,
            hessian_step: 1e-5,
            newton_polish: 3,
            held: BTreeMap::new(),
            start: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceStatus {
    Gradient,
    Step,
    /// No further improvement was possible along the search direction while
    /// the gradient was already small.
    LineSearch,
    /// Every parameter is held; nothing to optimize.
    NothingFree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: ConvergenceStatus,
    pub iterations: usize,
    pub newton_steps: usize,
    pub relative_gradient: f64,
    pub max_abs_gradient: f64,
}

/// One reported row of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub coefficient: String,
    pub role: ParameterRole,
    /// Estimate as reported; spreads are reported as |σ|.
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub held: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    /// Raw estimates (σ signed as found by the optimizer).
    pub estimates: ParameterVector,
    pub parameters: Vec<ParameterEstimate>,
    /// Covariance over all parameters in layout order; rows of held parameters are zero.
    pub covariance: Vec<Vec<f64>>,
    pub covariance_method: CovarianceMethod,
    /// The negative Hessian was not positive definite and a pseudo-inverse was used.
    pub covariance_fallback: bool,
    pub ll_converged: f64,
    /// Intercept-only log-likelihood, `Σ n_i ln(n_i / N)`.
    pub ll_restricted: f64,
    /// Equal-shares log-likelihood, `N ln(1 / J)`.
    pub ll_zero: f64,
    pub rho2: f64,
    pub n_obs: usize,
    /// Observations per alternative, in `spec.alternatives` order.
    pub class_counts: Vec<usize>,
    /// 0 for MNL fits.
    pub n_draws: usize,
    pub discard: u64,
    pub convergence: ConvergenceReport,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Number of estimated (non-held) parameters.
    pub fn n_estimated(&self) -> usize {
        self.parameters.iter().filter(|p| !p.held).count()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.estimates
            .to_flat(&self.spec)
            .expect("estimates always match their own spec")
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn is_mixed(&self) -> bool {
        !self.spec.random.is_empty()
    }

    /// Draws this fit used on its own data, rebuilt for `n_obs` observations.
    pub fn draws_for(&self, n_obs: usize) -> Result<Option<DrawMatrix>> {
        let n_random = self.spec.random.len();
        if n_random == 0 {
            return Ok(None);
        }
        make_draws(n_obs, self.n_draws, n_random, self.discard).map(Some)
    }
}

pub fn t_stat(estimate: f64, std_error: f64) -> f64 {
    estimate / std_error
}

/// Standard errors in layout order; `None` for held parameters.
pub fn standard_errors(fit: &FitResult) -> Vec<Option<f64>> {
    fit.parameters.iter().map(|p| p.std_error).collect()
}

/// (t, p) pairs in layout order.
pub fn t_stats_pvalues(fit: &FitResult) -> Vec<(Option<f64>, Option<f64>)> {
    fit.parameters.iter().map(|p| (p.t_stat, p.p_value)).collect()
}

pub fn mcfadden_rho2(ll_converged: f64, ll_restricted: f64) -> Result<f64> {
    if !(ll_restricted < 0.0) || ll_converged > 0.0 {
        return Err(Error::Domain(format!(
            "pseudo R² needs negative log-likelihoods (converged {ll_converged}, restricted {ll_restricted})"
        )));
    }
    if ll_converged < ll_restricted {
        return Err(Error::Domain(format!(
            "converged log-likelihood {ll_converged} is below the intercept-only value {ll_restricted}"
        )));
    }
    Ok(1.0 - ll_converged / ll_restricted)
}

/// `Σ n_i ln(n_i / N)` over nonzero counts.
pub fn intercept_only_ll(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let n = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| c as f64 * (c as f64 / n).ln())
        .sum()
}

struct Optimum {
    theta: Vec<f64>,
    ll: f64,
    hessian: Option<DMatrix<f64>>,
    report: ConvergenceReport,
}

fn relative_gradient(theta: &[f64], grad: &[f64], ll: f64, free: &[usize]) -> (f64, f64) {
    let scale = ll.abs().max(1.0);
    let mut rel = 0.0_f64;
    let mut max_abs = 0.0_f64;
    for &i in free {
        rel = rel.max(grad[i].abs() * theta[i].abs().max(1.0) / scale);
        max_abs = max_abs.max(grad[i].abs());
    }
    (rel, max_abs)
}

fn evaluate(model: &CompiledModel, theta: &[f64], draws: Option<&DrawMatrix>) -> Option<(f64, Vec<f64>)> {
    match model.value_and_gradient(theta, draws) {
        Ok((ll, g)) if ll.is_finite() && g.iter().all(|v| v.is_finite()) => Some((ll, g)),
        _ => None,
    }
}

/// Central-difference Hessian of the log-likelihood over the free parameters.
fn fd_hessian(
    model: &CompiledModel,
    theta: &[f64],
    draws: Option<&DrawMatrix>,
    free: &[usize],
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let m = free.len();
    let mut h = DMatrix::zeros(m, m);
    for (c, &k) in free.iter().enumerate() {
        let step = rel_step * theta[k].abs().max(1.0);
        let mut up = theta.to_vec();
        up[k] += step;
        let mut down = theta.to_vec();
        down[k] -= step;
        let (_, gu) = model.value_and_gradient(&up, draws)?;
        let (_, gd) = model.value_and_gradient(&down, draws)?;
        for (r, &i) in free.iter().enumerate() {
            h[(r, c)] = (gu[i] - gd[i]) / (2.0 * step);
        }
    }
    symmetrize(&mut h);
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Hessian has non-finite entries".into()));
    }
    Ok(h)
}

fn maximize(
    model: &CompiledModel,
    draws: Option<&DrawMatrix>,
    mut theta: Vec<f64>,
    free: &[usize],
    opts: &EstimationOptions,
) -> Result<Optimum> {
    let names = model.parameter_names();
    let (mut ll, mut grad) = evaluate(model, &theta, draws)
        .ok_or_else(|| Error::Numeric("log-likelihood is not finite at the starting values".into()))?;
    let m = free.len();
    if m == 0 {
        let (rel, max_abs) = relative_gradient(&theta, &grad, ll, free);
        return Ok(Optimum {
            theta,
            ll,
            hessian: None,
            report: ConvergenceReport {
                status: ConvergenceStatus::NothingFree,
                iterations: 0,
                newton_steps: 0,
                relative_gradient: rel,
                max_abs_gradient: max_abs,
            },
        });
    }

    // Minimize f = -LL over the free coordinates.
    let neg_free_grad = |g: &[f64]| DVector::from_iterator(m, free.iter().map(|&i| -g[i]));
    let mut inv_h = DMatrix::<f64>::identity(m, m);
    let mut fresh = true;
    let mut gf = neg_free_grad(&grad);
    let mut status = None;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let (rel, _) = relative_gradient(&theta, &grad, ll, free);
        if rel <= opts.gradient_tolerance {
            status = Some(ConvergenceStatus::Gradient);
            break;
        }
        iterations += 1;

        let mut dir = -(&inv_h * &gf);
        let mut slope = dir.dot(&gf);
        if !(slope < 0.0) {
            inv_h = DMatrix::identity(m, m);
            fresh = true;
            dir = -gf.clone();
            slope = dir.dot(&gf);
        }
        let longest = dir.amax();
        if longest > MAX_STEP {
            dir *= MAX_STEP / longest;
            slope = dir.dot(&gf);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = theta.clone();
            for (c, &i) in free.iter().enumerate() {
                trial[i] += alpha * dir[c];
            }
            if let Some((t_ll, t_grad)) = evaluate(model, &trial, draws) {
                if -t_ll <= -ll + ARMIJO * alpha * slope {
                    accepted = Some((trial, t_ll, t_grad));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((next, next_ll, next_grad)) = accepted else {
            if !fresh {
                inv_h = DMatrix::identity(m, m);
                fresh = true;
                continue;
            }
            status = Some(ConvergenceStatus::LineSearch);
            break;
        };

        let s = DVector::from_iterator(m, free.iter().map(|&i| next[i] - theta[i]));
        let next_gf = neg_free_grad(&next_grad);
        let y = &next_gf - &gf;
        theta = next;
        ll = next_ll;
        grad = next_grad;
        gf = next_gf;

        if let Some(&i) = free.iter().find(|&&i| theta[i].abs() > SEPARATION_BOUND) {
            return Err(Error::NonConvergence {
                iterations,
                gradient: relative_gradient(&theta, &grad, ll, free).0,
                message: format!(
                    "parameter {} diverged to {:.3e}; a covariate may perfectly predict a class (separation)",
                    names[i], theta[i]
                ),
                best: theta,
            });
        }
        if s.amax() <= opts.step_tolerance {
            status = Some(ConvergenceStatus::Step);
            break;
        }

        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                inv_h *= sy / y.dot(&y);
                fresh = false;
            }
            let rho = 1.0 / sy;
            let hy = &inv_h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            inv_h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            inv_h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
    }

    let Some(mut status) = status else {
        let (rel, _) = relative_gradient(&theta, &grad, ll, free);
        return Err(Error::NonConvergence {
            iterations,
            gradient: rel,
            message: "iteration limit reached".into(),
            best: theta,
        });
    };

    // Newton polish on the finite-difference Hessian.
    let mut newton_steps = 0;
    let mut hessian = fd_hessian(model, &theta, draws, free, opts.hessian_step)?;
    for _ in 0..opts.newton_polish {
        let neg = -&hessian;
        let Some(chol) = neg.clone().cholesky() else { break };
        let g = DVector::from_iterator(m, free.iter().map(|&i| grad[i]));
        let step = chol.solve(&g);
        let mut trial = theta.clone();
        for (c, &i) in free.iter().enumerate() {
            trial[i] += step[c];
        }
        match evaluate(model, &trial, draws) {
            Some((t_ll, t_grad))
                if t_ll >= ll
                    && relative_gradient(&trial, &t_grad, t_ll, free).0
                        <= relative_gradient(&theta, &grad, ll, free).0 =>
            {
                theta = trial;
                ll = t_ll;
                grad = t_grad;
                newton_steps += 1;
                hessian = fd_hessian(model, &theta, draws, free, opts.hessian_step)?;
                if step.amax() <= opts.step_tolerance {
                    break;
                }
            }
            _ => break,
        }
    }

    let (rel, max_abs) = relative_gradient(&theta, &grad, ll, free);
    // A large coefficient along which the likelihood keeps rising is diverging,
    // even if the gradient has flattened below tolerance.
    for &i in free {
        if theta[i].abs() > SEPARATION_PROBE {
            let mut probe = theta.clone();
            probe[i] += 10.0 * theta[i].signum();
            let rising = match model.value(&probe, draws) {
                Ok(v) => v >= ll - 1e-9 * ll.abs().max(1.0),
                Err(_) => false,
            };
            if rising {
                return Err(Error::NonConvergence {
                    iterations,
                    gradient: rel,
                    message: format!(
                        "parameter {} keeps improving the fit at {:.3e}; a covariate may perfectly predict a class (separation)",
                        names[i], theta[i]
                    ),
                    best: theta,
                });
            }
        }
    }
    if status == ConvergenceStatus::LineSearch {
        if rel <= opts.gradient_tolerance.sqrt() {
            log::debug!("line search stalled at relative gradient {rel:.2e}; accepted");
        } else {
            return Err(Error::NonConvergence {
                iterations,
                gradient: rel,
                message: "line search could not improve the log-likelihood".into(),
                best: theta,
            });
        }
    }
    if newton_steps > 0 && rel <= opts.gradient_tolerance && status != ConvergenceStatus::Gradient {
        status = ConvergenceStatus::Gradient;
    }
    Ok(Optimum {
        theta,
        ll,
        hessian: Some(hessian),
        report: ConvergenceReport {
            status,
            iterations,
            newton_steps,
            relative_gradient: rel,
            max_abs_gradient: max_abs,
        },
    })
}

fn class_counts(spec: &ModelSpec, data: &Dataset) -> Result<Vec<usize>> {
    let all = data.class_counts();
    let counts: Vec<usize> = spec.alternatives.iter().map(|a| all[a.index()]).collect();
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Domain(format!(
            "class {} is never chosen in the data; the model is not identified",
            spec.alternatives[j]
        )));
    }
    Ok(counts)
}

/// Multinomial logit fit. The spec must have no random coefficients.
pub fn fit_mnl(data: &Dataset, spec: &ModelSpec, opts: &EstimationOptions) -> Result<FitResult> {
    if !spec.random.is_empty() {
        return Err(Error::Argument(
            "fit_mnl called with random coefficients; use fit_mixed_logit".into(),
        ));
    }
    fit_with(data, spec, opts, None)
}

/// Mixed logit fit by simulated maximum likelihood over Halton draws built once
/// from `opts.n_draws` and `opts.discard`.
pub fn fit_mixed_logit(data: &Dataset, spec: &ModelSpec, opts: &EstimationOptions) -> Result<FitResult> {
    if spec.random.is_empty() {
        return Err(Error::Argument(
            "fit_mixed_logit needs at least one random coefficient".into(),
        ));
    }
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Domain("cannot fit a model to an empty dataset".into()));
    }
    let draws = make_draws(data.len(), opts.n_draws, spec.random.len(), opts.discard)?;
    fit_with(data, spec, opts, Some(&draws))
}

/// MNL or mixed logit depending on the spec.
pub fn fit(data: &Dataset, spec: &ModelSpec, opts: &EstimationOptions) -> Result<FitResult> {
    if spec.random.is_empty() {
        fit_mnl(data, spec, opts)
    } else {
        fit_mixed_logit(data, spec, opts)
    }
}

fn fit_with(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &EstimationOptions,
    draws: Option<&DrawMatrix>,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::Domain("cannot fit a model to an empty dataset".into()));
    }
    let counts = class_counts(spec, data)?;
    let model = CompiledModel::new(spec, data)?;
    let layout = spec.parameter_layout();
    let mut theta = ParameterVector::starting(spec).to_flat(spec)?;
    for (name, map) in [("start", &opts.start), ("held", &opts.held)] {
        for (key, &value) in map {
            let i = layout
                .iter()
                .position(|s| &s.name == key)
                .ok_or_else(|| Error::Argument(format!("{name} value for unknown parameter {key:?}")))?;
            theta[i] = value;
        }
    }
    let held: Vec<bool> = layout.iter().map(|s| opts.held.contains_key(&s.name)).collect();
    let free: Vec<usize> = (0..layout.len()).filter(|&i| !held[i]).collect();

    let opt = maximize(&model, draws, theta, &free, opts)?;
    let mut warnings = Vec::new();

    let (cov_free, fallback) = covariance(&model, draws, &opt, &free, opts, &mut warnings)?;
    let p = layout.len();
    let mut cov = DMatrix::zeros(p, p);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            cov[(i, j)] = cov_free[(r, c)];
        }
    }

    let parameters = report_rows(&layout, &opt.theta, &cov, &held, &mut warnings);

    let contributions = model.contributions(&opt.theta, draws)?;
    let underflow = contributions.iter().filter(|c| !(c.exp() > 0.0)).count();
    if underflow > 0 {
        warnings.push(format!(
            "{underflow} observations have a chosen-class probability below double precision"
        ));
    }
    let ll_converged = opt.ll;
    let ll_restricted = intercept_only_ll(&counts);
    let ll_zero = data.len() as f64 * (1.0 / spec.alternatives.len() as f64).ln();
    let rho2 = match mcfadden_rho2(ll_converged, ll_restricted) {
        Ok(r) => r,
        Err(e) => {
            warnings.push(e.to_string());
            1.0 - ll_converged / ll_restricted
        }
    };
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(FitResult {
        spec: spec.clone(),
        estimates: ParameterVector::from_flat(spec, &opt.theta)?,
        parameters,
        covariance: to_rows(&cov),
        covariance_method: opts.covariance,
        covariance_fallback: fallback,
        ll_converged,
        ll_restricted,
        ll_zero,
        rho2,
        n_obs: data.len(),
        class_counts: counts,
        n_draws: draws.map_or(0, |d| d.n_draws),
        discard: draws.map_or(0, |d| d.discard),
        convergence: opt.report,
        warnings,
    })
}

fn covariance(
    model: &CompiledModel,
    draws: Option<&DrawMatrix>,
    opt: &Optimum,
    free: &[usize],
    opts: &EstimationOptions,
    warnings: &mut Vec<String>,
) -> Result<(DMatrix<f64>, bool)> {
    let m = free.len();
    if m == 0 {
        return Ok((DMatrix::zeros(0, 0), false));
    }
    let information = match opts.covariance {
        CovarianceMethod::Hessian => match &opt.hessian {
            Some(h) => -h,
            None => -fd_hessian(model, &opt.theta, draws, free, opts.hessian_step)?,
        },
        CovarianceMethod::Bhhh => {
            let scores = model.scores(&opt.theta, draws)?;
            let mut b = DMatrix::zeros(m, m);
            for s in &scores {
                let v = DVector::from_iterator(m, free.iter().map(|&i| s[i]));
                b += &v * v.transpose();
            }
            b
        }
    };
    let inv = invert_symmetric(&information);
    if inv.is_singular() && draws.is_some() {
        return Err(Error::SingularHessian(format!(
            "rank {} of {m}; smallest eigenvalue {:.3e}",
            inv.rank, inv.min_eigenvalue
        )));
    }
    if inv.pseudo {
        warnings.push(format!(
            "information matrix is not positive definite (smallest eigenvalue {:.3e}); \
             covariance uses the pseudo-inverse",
            inv.min_eigenvalue
        ));
    }
    Ok((inv.inverse, inv.pseudo))
}

fn report_rows(
    layout: &[ParameterSlot],
    theta: &[f64],
    cov: &DMatrix<f64>,
    held: &[bool],
    warnings: &mut Vec<String>,
) -> Vec<ParameterEstimate> {
    layout
        .iter()
        .enumerate()
        .map(|(i, slot)| {
            let estimate = if slot.role == ParameterRole::Sd {
                theta[i].abs()
            } else {
                theta[i]
            };
            let var = cov[(i, i)];
            let std_error = if held[i] {
                None
            } else if var > 0.0 {
                Some(var.sqrt())
            } else {
                warnings.push(format!("parameter {} has non-positive variance {var:.3e}", slot.name));
                None
            };
            let t = std_error.map(|se| t_stat(estimate, se));
            ParameterEstimate {
                name: slot.name.clone(),
                coefficient: slot.coefficient.clone(),
                role: slot.role,
                estimate,
                std_error,
                t_stat: t,
                p_value: t.map(two_tailed_p),
                held: held[i],
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionAction {
    /// Remove the coefficient from the spec.
    Drop,
    /// Keep the coefficient but make it fixed (σ not significant).
    DemoteToFixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionFlag {
    pub coefficient: String,
    /// Parameter whose t-statistic triggered the flag.
    pub parameter: String,
    pub t_stat: f64,
    pub action: RetentionAction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub confidence: f64,
    pub critical_t: f64,
    pub flags: Vec<RetentionFlag>,
}

/// Two-tailed retention screen. Constants are never flagged. A random
/// coefficient is judged on its σ alone: an insignificant σ demotes it to
/// fixed, a significant σ keeps it whatever the mean's t.
pub fn refine_specification(fit: &FitResult, confidence: f64) -> Result<RetentionReport> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Argument(format!(
            "confidence must be in (0,1), got {confidence}"
        )));
    }
    let critical_t = std_normal_quantile(1.0 - (1.0 - confidence) / 2.0)?;
    let constants: Vec<String> = fit
        .spec
        .constants
        .iter()
        .map(|&a| crate::model::constant_id(a))
        .collect();
    let mut flags = Vec::new();
    for p in &fit.parameters {
        if p.held || constants.contains(&p.coefficient) {
            continue;
        }
        let action = match p.role {
            ParameterRole::Fixed => RetentionAction::Drop,
            ParameterRole::Sd => RetentionAction::DemoteToFixed,
            ParameterRole::Mean => continue,
        };
        // A missing t (non-positive variance) counts as insignificant.
        let t = p.t_stat.unwrap_or(0.0);
        if t.abs() < critical_t {
            flags.push(RetentionFlag {
                coefficient: p.coefficient.clone(),
                parameter: p.name.clone(),
                t_stat: t,
                action,
            });
        }
    }
    Ok(RetentionReport {
        confidence,
        critical_t,
        flags,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EliminationOutcome {
    pub fit: FitResult,
    /// Flags applied, in order.
    pub applied: Vec<RetentionFlag>,
}

/// Repeatedly applies the single weakest retention flag and refits until none remain.
pub fn backward_elimination(
    data: &Dataset,
    spec: &ModelSpec,
    opts: &EstimationOptions,
    confidence: f64,
) -> Result<EliminationOutcome> {
    let mut spec = spec.clone();
    let mut applied = Vec::new();
    loop {
        let current = fit(data, &spec, opts)?;
        let report = refine_specification(&current, confidence)?;
        let Some(worst) = report
            .flags
            .into_iter()
            .min_by(|a, b| a.t_stat.abs().total_cmp(&b.t_stat.abs()))
        else {
            return Ok(EliminationOutcome { fit: current, applied });
        };
        spec = match worst.action {
            RetentionAction::Drop => spec.drop_coefficient(&worst.coefficient),
            RetentionAction::DemoteToFixed => spec.demote_random(&worst.coefficient),
        };
        applied.push(worst);
    }
}

/// Observed shares of each class among `alternatives`.
pub fn class_shares(data: &Dataset, alternatives: &[SeverityClass]) -> Vec<f64> {
    let counts = data.class_counts();
    let total: usize = alternatives.iter().map(|a| counts[a.index()]).sum();
    alternatives
        .iter()
        .map(|a| counts[a.index()] as f64 / total as f64)
        .collect()
}
