//! Conditional maximum-likelihood estimation of the unit-root logistic
//! AR-ARCH family with skew-t (or Gaussian / Student-t) innovations,
//! standard errors from the numerical Hessian, and residual diagnostics.
//!
//! The estimated model (shared-gate form) is
//!
//!   y_t = y_{t-1} + nu (1 - 2 L(y_{t-1}; gamma, a)) + sigma_t eps_t
//!   sigma_t^2 = (omega + alpha_1 e_{t-1}^2 + ... + alpha_q e_{t-q}^2) L(y_{t-1}; gamma, a)
//!
//! with e_t = y_t - mean_t. The first 1 + q observations condition the
//! likelihood; initial squared errors are set to the sample variance of the
//! conditioning window. Free parameters are optimized on an unconstrained
//! scale (log for positive parameters, a logit-simplex for the alphas) with
//! a Nelder-Mead warm-up and a BFGS polish; standard errors come from the
//! inverse numerical Hessian in the natural parameterization.

use crate::dist::{skewt_standardize, Innovation, InnovationSpec};
use crate::error::{Error, Result};
use crate::model::logistic;
use crate::optim::{
    bfgs, nelder_mead, numerical_hessian, BfgsOpts, NelderMeadOpts,
};
use crate::sim::{acf, Acf};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

/// Large negative sentinel standing in for -infinity at constraint
/// violations, so derivative-free steps can walk back into the feasible set.
pub const LOGLIK_SENTINEL: f64 = -1e300;

/// One scalar parameter slot: estimated or held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Par {
    Free { init: f64 },
    Fixed { value: f64 },
}

impl Par {
    pub fn initial(&self) -> f64 {
        match *self {
            Par::Free { init } => init,
            Par::Fixed { value } => value,
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Par::Free { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanTemplate {
    /// mean_t = 0 (pure scale model).
    Zero,
    /// mean_t = y_{t-1} + nu (1 - 2 L(y_{t-1}; gamma, a)), nu > 0.
    UnitRootLogistic { nu: Par, gamma: Par, a: Par },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GateTemplate {
    /// No gate: plain linear ARCH.
    One,
    /// The variance gate reuses the mean's logistic (gamma, a).
    SharedWithMean,
    /// Separate logistic gate with its own parameters.
    Logistic { gamma: Par, a: Par },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InnovationTemplate {
    UnitNormal,
    StudentT { df: Par },
    SkewT { c: Par, d: Par },
}

/// Which parameters are free vs fixed, with initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTemplate {
    pub mean: MeanTemplate,
    pub omega: Par,
    /// ARCH coefficients; all free or all fixed, jointly constrained to the
    /// open simplex sum(alpha) < 1. May be empty (homoskedastic).
    pub alpha: Vec<Par>,
    pub gate: GateTemplate,
    pub innovation: InnovationTemplate,
}

impl FitTemplate {
    /// The empirical-application template: unit-root logistic mean with a
    /// shared gate, ARCH(q), skew-t errors, everything free, with
    /// data-driven starting values.
    pub fn lstar_arch(data: &[f64], q: usize) -> FitTemplate {
        let n = data.len();
        let mut sorted = data.to_vec();
        sorted.sort_by(|x, y| x.total_cmp(y));
        let a0 = sorted[n / 2];
        let dvar = if n > 1 {
            let diffs: Vec<f64> = data.windows(2).map(|w| w[1] - w[0]).collect();
            let m = diffs.iter().sum::<f64>() / diffs.len() as f64;
            diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / diffs.len() as f64
        } else {
            1.0
        };
        let alpha0 = match q {
            0 => vec![],
            1 => vec![0.4],
            2 => vec![0.35, 0.2],
            _ => {
                let mut v = vec![0.35, 0.25, 0.15];
                v.truncate(q.max(3));
                while v.len() < q {
                    v.push(0.05);
                }
                v
            }
        };
        FitTemplate {
            mean: MeanTemplate::UnitRootLogistic {
                nu: Par::Free { init: 0.2 },
                gamma: Par::Free { init: 0.2 },
                a: Par::Free { init: a0 },
            },
            omega: Par::Free {
                init: (dvar * 0.5).max(1e-4),
            },
            alpha: alpha0.into_iter().map(|v| Par::Free { init: v }).collect(),
            gate: GateTemplate::SharedWithMean,
            innovation: InnovationTemplate::SkewT {
                c: Par::Free { init: 3.0 },
                d: Par::Free { init: 3.0 },
            },
        }
    }

    pub fn q(&self) -> usize {
        self.alpha.len()
    }

    /// Observations used as initial values (p + q with p = 1).
    pub fn conditioned(&self) -> usize {
        1 + self.q()
    }
}

/// Fully resolved parameter values for likelihood evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub mean: ResolvedMean,
    pub omega: f64,
    pub alpha: Vec<f64>,
    pub gate: ResolvedGate,
    pub innovation: InnovationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResolvedMean {
    Zero,
    UnitRootLogistic { nu: f64, gamma: f64, a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResolvedGate {
    One,
    Logistic { gamma: f64, a: f64 },
}

impl ResolvedParams {
    fn mean_at(&self, y_prev: f64) -> f64 {
        match self.mean {
            ResolvedMean::Zero => 0.0,
            ResolvedMean::UnitRootLogistic { nu, gamma, a } => {
                y_prev + nu * (1.0 - 2.0 * logistic(y_prev, gamma, a))
            }
        }
    }

    fn gate_at(&self, y_prev: f64) -> f64 {
        match self.gate {
            ResolvedGate::One => 1.0,
            ResolvedGate::Logistic { gamma, a } => logistic(y_prev, gamma, a),
        }
    }

    fn constraints_ok(&self) -> bool {
        let mean_ok = match self.mean {
            ResolvedMean::Zero => true,
            ResolvedMean::UnitRootLogistic { nu, gamma, .. } => {
                nu > 0.0 && nu.is_finite() && gamma > 0.0 && gamma.is_finite()
            }
        };
        let gate_ok = match self.gate {
            ResolvedGate::One => true,
            ResolvedGate::Logistic { gamma, .. } => gamma > 0.0 && gamma.is_finite(),
        };
        let alpha_sum: f64 = self.alpha.iter().sum();
        let arch_ok = self.omega > 0.0
            && self.omega.is_finite()
            && self.alpha.iter().all(|&a| a >= 0.0 && a.is_finite())
            && alpha_sum < 1.0;
        let innov_ok = match self.innovation {
            InnovationSpec::UnitNormal => true,
            InnovationSpec::StudentT { df } => df > 2.0 && df.is_finite(),
            InnovationSpec::SkewT { c, d } => {
                c > 1.0 && d > 1.0 && c.is_finite() && d.is_finite()
            }
        };
        mean_ok && gate_ok && arch_ok && innov_ok
    }
}

/// Innovation log-density evaluator for the likelihood inner loop.
enum InnovEval {
    Normal,
    StudentT { df: f64, scale: f64, log_norm: f64 },
    SkewT { c: f64, d: f64, m: f64, s: f64 },
}

impl InnovEval {
    fn build(spec: InnovationSpec, cache: &RefCell<SkewTCache>) -> Result<InnovEval> {
        match spec {
            InnovationSpec::UnitNormal => Ok(InnovEval::Normal),
            InnovationSpec::StudentT { df } => {
                let scale = ((df - 2.0) / df).sqrt();
                let log_norm = statrs::function::gamma::ln_gamma((df + 1.0) / 2.0)
                    - statrs::function::gamma::ln_gamma(df / 2.0)
                    - 0.5 * (df * std::f64::consts::PI).ln()
                    - scale.ln();
                Ok(InnovEval::StudentT {
                    df,
                    scale,
                    log_norm,
                })
            }
            InnovationSpec::SkewT { c, d } => {
                let key = (c.to_bits(), d.to_bits());
                if let Some((m, s)) = cache.borrow().get(key) {
                    return Ok(InnovEval::SkewT { c, d, m, s });
                }
                let (m, s) = skewt_standardize(c, d)?;
                cache.borrow_mut().put(key, (m, s));
                Ok(InnovEval::SkewT { c, d, m, s })
            }
        }
    }

    fn log_density(&self, z: f64) -> f64 {
        match *self {
            InnovEval::Normal => -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln(),
            InnovEval::StudentT {
                df,
                scale,
                log_norm,
            } => {
                let t = z / scale;
                log_norm - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()
            }
            InnovEval::SkewT { c, d, m, s } => {
                s.ln() + crate::dist::skewt_log_density_raw(s * z + m, c, d)
            }
        }
    }
}

/// Tiny cache of skew-t standardization constants; gradient and Hessian
/// sweeps re-evaluate the likelihood at unchanged (c, d) many times.
struct SkewTCache {
    entries: Vec<((u64, u64), (f64, f64))>,
}

impl SkewTCache {
    fn new() -> Self {
        SkewTCache {
            entries: Vec::with_capacity(8),
        }
    }

    fn get(&self, key: (u64, u64)) -> Option<(f64, f64)> {
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
    }

    fn put(&mut self, key: (u64, u64), value: (f64, f64)) {
        if self.entries.len() >= 8 {
            self.entries.remove(0);
        }
        self.entries.push((key, value));
    }
}

/// Conditional log-likelihood of the data under the resolved parameters.
///
/// The first 1 + q observations are conditioning values; pre-sample squared
/// errors are the sample variance of that window. Constraint violations
/// yield the large negative sentinel rather than an error.
pub fn conditional_loglik(params: &ResolvedParams, data: &[f64]) -> Result<f64> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument("data contains non-finite values"));
    }
    let cond = 1 + params.alpha.len();
    if data.len() <= cond {
        return Err(Error::InsufficientData(format!(
            "need more than {cond} observations, got {}",
            data.len()
        )));
    }
    let cache = RefCell::new(SkewTCache::new());
    Ok(loglik_inner(params, data, &cache))
}

fn loglik_inner(params: &ResolvedParams, data: &[f64], cache: &RefCell<SkewTCache>) -> f64 {
    if !params.constraints_ok() {
        return LOGLIK_SENTINEL;
    }
    let innov = match InnovEval::build(params.innovation, cache) {
        Ok(e) => e,
        Err(_) => return LOGLIK_SENTINEL,
    };
    let q = params.alpha.len();
    let cond = 1 + q;

    // Pre-sample squared errors: sample variance of the conditioning window.
    let head = &data[..cond];
    let head_mean = head.iter().sum::<f64>() / cond as f64;
    let init_e2 = head.iter().map(|v| (v - head_mean) * (v - head_mean)).sum::<f64>()
        / cond as f64;
    let mut e2_hist = vec![init_e2.max(1e-12); q];

    let mut ll = 0.0;
    for t in cond..data.len() {
        let y_prev = data[t - 1];
        let mean_t = params.mean_at(y_prev);
        let mut base = params.omega;
        for (i, &a) in params.alpha.iter().enumerate() {
            base += a * e2_hist[i];
        }
        let sigma2 = base * params.gate_at(y_prev);
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return LOGLIK_SENTINEL;
        }
        let sigma = sigma2.sqrt();
        let e = data[t] - mean_t;
        let z = e / sigma;
        let lp = innov.log_density(z) - sigma.ln();
        if !lp.is_finite() {
            return LOGLIK_SENTINEL;
        }
        ll += lp;
        if q > 0 {
            e2_hist.rotate_right(1);
            e2_hist[0] = e * e;
        }
    }
    ll
}

/// Fitted mean and volatility series plus standardized residuals at given
/// parameter values (same conditioning convention as the likelihood).
pub fn fitted_series(
    params: &ResolvedParams,
    data: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let q = params.alpha.len();
    let cond = 1 + q;
    if data.len() <= cond {
        return Err(Error::InsufficientData(format!(
            "need more than {cond} observations"
        )));
    }
    let head = &data[..cond];
    let head_mean = head.iter().sum::<f64>() / cond as f64;
    let init_e2 = head.iter().map(|v| (v - head_mean) * (v - head_mean)).sum::<f64>()
        / cond as f64;
    let mut e2_hist = vec![init_e2.max(1e-12); q];

    let mut means = Vec::with_capacity(data.len() - cond);
    let mut sigmas = Vec::with_capacity(data.len() - cond);
    let mut resid = Vec::with_capacity(data.len() - cond);
    for t in cond..data.len() {
        let y_prev = data[t - 1];
        let mean_t = params.mean_at(y_prev);
        let mut base = params.omega;
        for (i, &a) in params.alpha.iter().enumerate() {
            base += a * e2_hist[i];
        }
        let sigma2 = base * params.gate_at(y_prev);
        if !(sigma2 > 0.0) {
            return Err(Error::Numeric(format!(
                "non-positive fitted variance at t = {t}"
            )));
        }
        let sigma = sigma2.sqrt();
        let e = data[t] - mean_t;
        means.push(mean_t);
        sigmas.push(sigma);
        resid.push(e / sigma);
        if q > 0 {
            e2_hist.rotate_right(1);
            e2_hist[0] = e * e;
        }
    }
    Ok((means, sigmas, resid))
}

// ---------------------------------------------------------------------------
// Packing between the natural parameter vector and the unconstrained scale.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    MeanNu,
    MeanGamma,
    MeanA,
    Omega,
    Alpha(usize),
    GateGamma,
    GateA,
    StudentDf,
    SkewC,
    SkewD,
}

#[derive(Debug, Clone)]
struct Layout {
    names: Vec<String>,
    slots: Vec<Slot>,
    /// Positions within the free vector forming the alpha simplex block.
    alpha_block: Vec<usize>,
}

fn layout_of(template: &FitTemplate) -> Layout {
    let mut names = Vec::new();
    let mut slots = Vec::new();
    let mut alpha_block = Vec::new();
    if let MeanTemplate::UnitRootLogistic { nu, gamma, a } = &template.mean {
        if nu.is_free() {
            names.push("nu".into());
            slots.push(Slot::MeanNu);
        }
        if gamma.is_free() {
            names.push("gamma".into());
            slots.push(Slot::MeanGamma);
        }
        if a.is_free() {
            names.push("a".into());
            slots.push(Slot::MeanA);
        }
    }
    if template.omega.is_free() {
        names.push("omega".into());
        slots.push(Slot::Omega);
    }
    for (i, par) in template.alpha.iter().enumerate() {
        if par.is_free() {
            names.push(format!("alpha{}", i + 1));
            alpha_block.push(slots.len());
            slots.push(Slot::Alpha(i));
        }
    }
    if let GateTemplate::Logistic { gamma, a } = &template.gate {
        if gamma.is_free() {
            names.push("gate_gamma".into());
            slots.push(Slot::GateGamma);
        }
        if a.is_free() {
            names.push("gate_a".into());
            slots.push(Slot::GateA);
        }
    }
    match &template.innovation {
        InnovationTemplate::UnitNormal => {}
        InnovationTemplate::StudentT { df } => {
            if df.is_free() {
                names.push("df".into());
                slots.push(Slot::StudentDf);
            }
        }
        InnovationTemplate::SkewT { c, d } => {
            if c.is_free() {
                names.push("c".into());
                slots.push(Slot::SkewC);
            }
            if d.is_free() {
                names.push("d".into());
                slots.push(Slot::SkewD);
            }
        }
    }
    Layout {
        names,
        slots,
        alpha_block,
    }
}

/// Resolve template + free natural values into full parameter values.
fn resolve(template: &FitTemplate, layout: &Layout, free: &[f64]) -> ResolvedParams {
    let get = |slot: Slot, fixed: f64| -> f64 {
        layout
            .slots
            .iter()
            .position(|s| *s == slot)
            .map(|i| free[i])
            .unwrap_or(fixed)
    };
    let mean = match &template.mean {
        MeanTemplate::Zero => ResolvedMean::Zero,
        MeanTemplate::UnitRootLogistic { nu, gamma, a } => ResolvedMean::UnitRootLogistic {
            nu: get(Slot::MeanNu, nu.initial()),
            gamma: get(Slot::MeanGamma, gamma.initial()),
            a: get(Slot::MeanA, a.initial()),
        },
    };
    let omega = get(Slot::Omega, template.omega.initial());
    let alpha: Vec<f64> = template
        .alpha
        .iter()
        .enumerate()
        .map(|(i, par)| get(Slot::Alpha(i), par.initial()))
        .collect();
    let gate = match &template.gate {
        GateTemplate::One => ResolvedGate::One,
        GateTemplate::SharedWithMean => match mean {
            ResolvedMean::UnitRootLogistic { gamma, a, .. } => {
                ResolvedGate::Logistic { gamma, a }
            }
            ResolvedMean::Zero => ResolvedGate::One,
        },
        GateTemplate::Logistic { gamma, a } => ResolvedGate::Logistic {
            gamma: get(Slot::GateGamma, gamma.initial()),
            a: get(Slot::GateA, a.initial()),
        },
    };
    let innovation = match &template.innovation {
        InnovationTemplate::UnitNormal => InnovationSpec::UnitNormal,
        InnovationTemplate::StudentT { df } => InnovationSpec::StudentT {
            df: get(Slot::StudentDf, df.initial()),
        },
        InnovationTemplate::SkewT { c, d } => InnovationSpec::SkewT {
            c: get(Slot::SkewC, c.initial()),
            d: get(Slot::SkewD, d.initial()),
        },
    };
    ResolvedParams {
        mean,
        omega,
        alpha,
        gate,
        innovation,
    }
}

/// Natural -> unconstrained. Positive parameters go through log, shifted
/// parameters through log(x - lower), locations stay, and the alpha block
/// uses z_i = ln(alpha_i / (1 - sum(alpha))).
fn to_unconstrained(layout: &Layout, natural: &[f64]) -> Vec<f64> {
    let alpha_sum: f64 = layout.alpha_block.iter().map(|&i| natural[i]).sum();
    let slack = (1.0 - alpha_sum).max(1e-12);
    layout
        .slots
        .iter()
        .zip(natural)
        .map(|(slot, &v)| match slot {
            Slot::MeanNu | Slot::MeanGamma | Slot::Omega | Slot::GateGamma => {
                v.max(1e-300).ln()
            }
            Slot::MeanA | Slot::GateA => v,
            Slot::Alpha(_) => (v.max(1e-300) / slack).ln(),
            Slot::StudentDf => (v - 2.0).max(1e-300).ln(),
            Slot::SkewC | Slot::SkewD => (v - 1.0).max(1e-300).ln(),
        })
        .collect()
}

/// Unconstrained -> natural (inverse of `to_unconstrained`).
fn to_natural(layout: &Layout, u: &[f64]) -> Vec<f64> {
    let exp_sum: f64 = layout
        .alpha_block
        .iter()
        .map(|&i| u[i].min(700.0).exp())
        .sum();
    let denom = 1.0 + exp_sum;
    layout
        .slots
        .iter()
        .zip(u)
        .map(|(slot, &v)| match slot {
            Slot::MeanNu | Slot::MeanGamma | Slot::Omega | Slot::GateGamma => {
                v.min(700.0).exp()
            }
            Slot::MeanA | Slot::GateA => v,
            Slot::Alpha(_) => v.min(700.0).exp() / denom,
            Slot::StudentDf => 2.0 + v.min(700.0).exp(),
            Slot::SkewC | Slot::SkewD => 1.0 + v.min(700.0).exp(),
        })
        .collect()
}

/// Optimizer settings for `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSpec {
    pub template: FitTemplate,
    pub nm_max_iter: usize,
    pub bfgs_max_iter: usize,
    pub bfgs_grad_tol: f64,
    /// Extra Nelder-Mead restarts from jittered points when the polish
    /// stage reports a poor gradient.
    pub retries: usize,
}

impl FitSpec {
    pub fn new(template: FitTemplate) -> Self {
        FitSpec {
            template,
            nm_max_iter: 2500,
            bfgs_max_iter: 200,
            bfgs_grad_tol: 1e-4,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    /// Names of the free parameters, in estimation order.
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// Standard errors from the inverse numerical Hessian; NaN entries mark
    /// directions where the Hessian was not positive definite.
    pub standard_errors: Vec<f64>,
    pub hessian_ok: bool,
    pub loglik: f64,
    pub convergence: Convergence,
    pub params: ResolvedParams,
    /// Observations used as initial values.
    pub conditioned: usize,
    /// Standardized residuals eps_hat for t > conditioned.
    pub residuals: Vec<f64>,
    /// Fitted volatility series sigma_hat.
    pub sigma: Vec<f64>,
    /// Fitted conditional means.
    pub fitted_mean: Vec<f64>,
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit result serializes")
    }
}

/// Two-stage conditional ML fit: Nelder-Mead warm-up on the unconstrained
/// scale, BFGS polish, Hessian-based standard errors at the optimum.
///
/// Non-convergence is reported in the result (with best-so-far values), not
/// as an error.
pub fn fit(data: &[f64], spec: &FitSpec) -> Result<FitResult> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_argument("data contains non-finite values"));
    }
    let template = &spec.template;
    let cond = template.conditioned();
    if data.len() < cond + 32 {
        return Err(Error::InsufficientData(format!(
            "need at least {} observations for a {}-lag fit",
            cond + 32,
            cond
        )));
    }
    let layout = layout_of(template);
    if layout.slots.is_empty() {
        return Err(Error::invalid_argument(
            "template has no free parameters to estimate",
        ));
    }
    let cache = RefCell::new(SkewTCache::new());
    let objective = |u: &[f64]| -> f64 {
        let natural = to_natural(&layout, u);
        let params = resolve(template, &layout, &natural);
        -loglik_inner(&params, data, &cache)
    };

    let natural0: Vec<f64> = layout
        .slots
        .iter()
        .map(|slot| match slot {
            Slot::MeanNu => mean_par(template, 0),
            Slot::MeanGamma => mean_par(template, 1),
            Slot::MeanA => mean_par(template, 2),
            Slot::Omega => template.omega.initial(),
            Slot::Alpha(i) => template.alpha[*i].initial(),
            Slot::GateGamma => gate_par(template, 0),
            Slot::GateA => gate_par(template, 1),
            Slot::StudentDf => innov_par(template, 0),
            Slot::SkewC => innov_par(template, 0),
            Slot::SkewD => innov_par(template, 1),
        })
        .collect();
    let u0 = to_unconstrained(&layout, &natural0);

    // Stage 1: simplex warm-up.
    let nm_opts = NelderMeadOpts {
        max_iter: spec.nm_max_iter,
        ..Default::default()
    };
    let warm = nelder_mead(&objective, &u0, &nm_opts);

    // Stage 2: quasi-Newton polish, with jittered restarts if the gradient
    // stays poor (the logistic steepness direction is near-flat).
    let bfgs_opts = BfgsOpts {
        max_iter: spec.bfgs_max_iter,
        grad_tol: spec.bfgs_grad_tol,
        grad_step: 1e-6,
    };
    let mut polish = bfgs(&objective, &warm.x, &bfgs_opts);
    let mut attempts = 0usize;
    while !polish.converged && attempts < spec.retries {
        attempts += 1;
        let jitter: Vec<f64> = polish
            .x
            .iter()
            .enumerate()
            .map(|(i, v)| v + 0.05 * ((attempts * 31 + i * 17) as f64).sin())
            .collect();
        let rewarm = nelder_mead(&objective, &jitter, &nm_opts);
        let candidate = bfgs(&objective, &rewarm.x, &bfgs_opts);
        if candidate.f < polish.f {
            polish = candidate;
        }
        if polish.converged {
            break;
        }
    }
    if polish.f > warm.f {
        polish.x = warm.x.clone();
        polish.f = warm.f;
        polish.converged = false;
    }
    let total_iterations = warm.iterations + polish.iterations;

    let natural_hat = to_natural(&layout, &polish.x);
    let params_hat = resolve(template, &layout, &natural_hat);
    let loglik = -polish.f;

    // Standard errors: inverse numerical Hessian of -loglik in the natural
    // parameterization at the optimum.
    let nat_objective = |nat: &[f64]| -> f64 {
        let params = resolve(template, &layout, nat);
        -loglik_inner(&params, data, &cache)
    };
    let hess = numerical_hessian(nat_objective, &natural_hat, 1e-4);
    let n_free = layout.slots.len();
    let mut standard_errors = vec![f64::NAN; n_free];
    let mut hessian_ok = false;
    if let Some(hinv) = hess.clone().try_inverse() {
        hessian_ok = true;
        for i in 0..n_free {
            let v = hinv[(i, i)];
            if v > 0.0 {
                standard_errors[i] = v.sqrt();
            } else {
                hessian_ok = false;
            }
        }
    }

    let (fitted_mean, sigma, residuals) = fitted_series(&params_hat, data)?;

    let converged = polish.converged;
    Ok(FitResult {
        names: layout.names.clone(),
        estimates: natural_hat,
        standard_errors,
        hessian_ok,
        loglik,
        convergence: Convergence {
            converged,
            iterations: total_iterations,
            message: if converged {
                "gradient tolerance reached".into()
            } else {
                "iteration budget exhausted; best point returned".into()
            },
        },
        params: params_hat,
        conditioned: cond,
        residuals,
        sigma,
        fitted_mean,
    })
}

fn mean_par(template: &FitTemplate, which: usize) -> f64 {
    match &template.mean {
        MeanTemplate::Zero => 0.0,
        MeanTemplate::UnitRootLogistic { nu, gamma, a } => {
            [nu.initial(), gamma.initial(), a.initial()][which]
        }
    }
}

fn gate_par(template: &FitTemplate, which: usize) -> f64 {
    match &template.gate {
        GateTemplate::Logistic { gamma, a } => [gamma.initial(), a.initial()][which],
        _ => 0.0,
    }
}

fn innov_par(template: &FitTemplate, which: usize) -> f64 {
    match &template.innovation {
        InnovationTemplate::UnitNormal => 0.0,
        InnovationTemplate::StudentT { df } => df.initial(),
        InnovationTemplate::SkewT { c, d } => [c.initial(), d.initial()][which],
    }
}

// ---------------------------------------------------------------------------
// Residual diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqPair {
    pub theoretical: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub acf_residuals: Acf,
    pub acf_squared_residuals: Acf,
    pub histogram: Vec<HistogramBin>,
    /// Fitted innovation density sampled on a fine grid over the data range.
    pub density_curve: Vec<(f64, f64)>,
    pub qq: Vec<QqPair>,
}

impl Diagnostics {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("lo,hi,count,density\n");
        for b in &self.histogram {
            out.push_str(&format!("{},{},{},{}\n", b.lo, b.hi, b.count, b.density));
        }
        out
    }

    pub fn density_csv(&self) -> String {
        let mut out = String::from("x,density\n");
        for (x, f) in &self.density_curve {
            out.push_str(&format!("{},{}\n", x, f));
        }
        out
    }

    pub fn qq_csv(&self) -> String {
        let mut out = String::from("theoretical,empirical\n");
        for p in &self.qq {
            out.push_str(&format!("{},{}\n", p.theoretical, p.empirical));
        }
        out
    }
}

/// Freedman-Diaconis histogram plus fitted-density curve and Q-Q pairs of
/// empirical vs fitted-innovation quantiles; ACFs of residuals and squared
/// residuals to lag 100 (or as much as the sample allows).
pub fn residual_diagnostics(fit: &FitResult) -> Result<Diagnostics> {
    let resid = &fit.residuals;
    let n = resid.len();
    if n < 16 {
        return Err(Error::InsufficientData(
            "too few residuals for diagnostics".into(),
        ));
    }
    let max_lag = 100.min(n - 1);
    let acf_residuals = acf(resid, max_lag)?;
    let squared: Vec<f64> = resid.iter().map(|v| v * v).collect();
    let acf_squared_residuals = acf(&squared, max_lag)?;

    let mut sorted = resid.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quant = |p: f64| sorted[((n - 1) as f64 * p) as usize];
    let iqr = quant(0.75) - quant(0.25);
    let width = if iqr > 0.0 {
        2.0 * iqr / (n as f64).cbrt()
    } else {
        0.5
    };
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let bins = (((hi - lo) / width).ceil() as usize).clamp(1, 400);
    let width = (hi - lo) / bins as f64;
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: lo + i as f64 * width,
            hi: lo + (i + 1) as f64 * width,
            count: 0,
            density: 0.0,
        })
        .collect();
    for &v in resid {
        let idx = (((v - lo) / width) as usize).min(bins - 1);
        histogram[idx].count += 1;
    }
    for b in histogram.iter_mut() {
        b.density = b.count as f64 / (n as f64 * width);
    }

    let innovation = Innovation::new(fit.params.innovation)?;
    let curve_n = 512;
    let density_curve: Vec<(f64, f64)> = (0..curve_n)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (curve_n - 1) as f64;
            (x, innovation.density(x))
        })
        .collect();

    let qq: Vec<QqPair> = sorted
        .iter()
        .enumerate()
        .map(|(i, &emp)| QqPair {
            theoretical: innovation.quantile((i as f64 + 0.5) / n as f64),
            empirical: emp,
        })
        .collect();

    Ok(Diagnostics {
        acf_residuals,
        acf_squared_residuals,
        histogram,
        density_curve,
        qq,
    })
}

/// Simulate a dataset from resolved parameter values (the estimation-side
/// twin of `sim::simulate`, usable for parametric bootstrap and recovery
/// experiments).
pub fn simulate_from_params(
    params: &ResolvedParams,
    n: usize,
    burn_in: usize,
    y0: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let innovation = Innovation::new(params.innovation)?;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let q = params.alpha.len();
    let mut e2_hist = vec![0.0f64; q];
    let mut y_prev = y0;
    let mut out = Vec::with_capacity(n);
    for step in 0..burn_in + n {
        let mean_t = params.mean_at(y_prev);
        let mut base = params.omega;
        for (i, &a) in params.alpha.iter().enumerate() {
            base += a * e2_hist[i];
        }
        let sigma2 = base * params.gate_at(y_prev);
        let e = sigma2.sqrt() * innovation.sample(&mut rng);
        let y = mean_t + e;
        if !y.is_finite() {
            return Err(Error::Explosion { index: step });
        }
        if step >= burn_in {
            out.push(y);
        }
        if q > 0 {
            e2_hist.rotate_right(1);
            e2_hist[0] = e * e;
        }
        y_prev = y;
    }
    Ok(out)
}

/// The parameter values reported in the empirical application; used by the
/// recovery experiments and as a canonical example model.
pub fn empirical_example_params() -> ResolvedParams {
    ResolvedParams {
        mean: ResolvedMean::UnitRootLogistic {
            nu: 0.187,
            gamma: 0.171,
            a: 25.366,
        },
        omega: 3.259,
        alpha: vec![0.406, 0.310, 0.149],
        gate: ResolvedGate::Logistic {
            gamma: 0.171,
            a: 25.366,
        },
        innovation: InnovationSpec::SkewT { c: 3.551, d: 2.138 },
    }
}
