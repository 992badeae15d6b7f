//! Model specifications and the core recursions: the nonlinear AR mean with
//! its u/e transforms, the gated nonlinear ARCH variance, and the companion
//! form matrices used by the stability machinery.
//!
//! The observed process is
//!
//!   y_t = pi_1 y_{t-1} + ... + pi_{p-1} y_{t-p+1} + g(u_{t-1}) + sigma_t eps_t,
//!   u_t = y_t - pi_1 y_{t-1} - ... - pi_{p-1} y_{t-p+1},
//!   e_t = u_t - g(u_{t-1}),
//!   sigma_t^2 = zeta_0(y_{t-1}) omega + sum_i alpha_i zeta_i(y_{t-1}) e_{t-i}^2.

use crate::dist::InnovationSpec;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Linear AR coefficients (pi_1, ..., pi_{p-1}); empty when p = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArCoefficients {
    pi: Vec<f64>,
}

impl ArCoefficients {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid_parameter("AR coefficients must be finite"));
        }
        Ok(ArCoefficients { pi })
    }

    /// Autoregressive order p = len(pi) + 1.
    pub fn order(&self) -> usize {
        self.pi.len() + 1
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }
}

/// Shape of the h function in the time-varying-slope mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HSpec {
    /// h(u) = 1 + |u - a|^rho
    AbsPower { a: f64, rho: f64 },
    /// h(u) = (1 + (u - a)^2)^{rho/2}
    QuadPower { a: f64, rho: f64 },
}

impl HSpec {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            HSpec::AbsPower { a, rho } => 1.0 + (u - a).abs().powf(rho),
            HSpec::QuadPower { a, rho } => (1.0 + (u - a) * (u - a)).powf(0.5 * rho),
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            HSpec::AbsPower { rho, .. } | HSpec::QuadPower { rho, .. } => rho,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlopeKind {
    /// S(u) = 1 - r0 / h(u)
    S1,
    /// S(u) = exp(-r0 / h(u))
    S2,
}

/// Nonlinear mean function g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MeanFunction {
    /// g(u) = u + nu1 L(u; gamma, a1) + nu2 (1 - L(u; gamma, a2)) with the
    /// logistic L(u; gamma, a) = 1 / (1 + exp(-gamma (u - a))).
    LogisticIntercept {
        nu1: f64,
        nu2: f64,
        gamma: f64,
        a1: f64,
        a2: f64,
    },
    /// g(u) = S(u) u with a slowly-decaying slope S.
    TimeVaryingSlope {
        kind: SlopeKind,
        r0: f64,
        h: HSpec,
    },
    /// g(u) = (1 - r |u|^{-rho}) u for |u| > threshold, 0 otherwise.
    BoundedShrink { r: f64, rho: f64, threshold: f64 },
}

pub fn logistic(u: f64, gamma: f64, a: f64) -> f64 {
    1.0 / (1.0 + (-gamma * (u - a)).exp())
}

impl MeanFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MeanFunction::LogisticIntercept {
                nu1,
                nu2,
                gamma,
                a1,
                a2,
            } => {
                if !(gamma > 0.0) {
                    return Err(Error::invalid_parameter("logistic mean needs gamma > 0"));
                }
                if !(a1 <= a2) {
                    return Err(Error::invalid_parameter("logistic mean needs a1 <= a2"));
                }
                if !(nu1 < 0.0 && nu2 > 0.0) {
                    return Err(Error::invalid_parameter(
                        "logistic mean needs nu1 < 0 < nu2",
                    ));
                }
                Ok(())
            }
            MeanFunction::TimeVaryingSlope { r0, ref h, .. } => {
                let rho = h.rho();
                if !(r0 > 0.0) {
                    return Err(Error::invalid_parameter("slope mean needs r0 > 0"));
                }
                if !(rho > 0.0 && rho < 2.0) {
                    return Err(Error::invalid_parameter("slope mean needs rho in (0, 2)"));
                }
                Ok(())
            }
            MeanFunction::BoundedShrink { r, rho, threshold } => {
                if !(r > 0.0) {
                    return Err(Error::invalid_parameter("shrink mean needs r > 0"));
                }
                if !(rho > 0.0 && rho < 2.0) {
                    return Err(Error::invalid_parameter("shrink mean needs rho in (0, 2)"));
                }
                if !(threshold >= r.powf(1.0 / rho)) {
                    return Err(Error::invalid_parameter(
                        "shrink mean needs threshold >= r^(1/rho)",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn g(&self, u: f64) -> f64 {
        match *self {
            MeanFunction::LogisticIntercept {
                nu1,
                nu2,
                gamma,
                a1,
                a2,
            } => u + nu1 * logistic(u, gamma, a1) + nu2 * (1.0 - logistic(u, gamma, a2)),
            MeanFunction::TimeVaryingSlope { kind, r0, ref h } => {
                let hv = h.eval(u);
                let s = match kind {
                    SlopeKind::S1 => 1.0 - r0 / hv,
                    SlopeKind::S2 => (-r0 / hv).exp(),
                };
                s * u
            }
            MeanFunction::BoundedShrink { r, rho, threshold } => {
                if u.abs() > threshold {
                    (1.0 - r * u.abs().powf(-rho)) * u
                } else {
                    0.0
                }
            }
        }
    }
}

/// State-dependent gate in the nonlinear ARCH recursion; maps into (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZetaGate {
    ConstantOne,
    /// zeta(y) = 1 / (1 + exp(-gamma (y - a))), evaluated at y_{t-1}.
    Logistic { gamma: f64, a: f64 },
}

impl ZetaGate {
    pub fn eval(&self, y_prev: f64) -> f64 {
        match *self {
            ZetaGate::ConstantOne => 1.0,
            ZetaGate::Logistic { gamma, a } => logistic(y_prev, gamma, a),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ZetaGate::ConstantOne => Ok(()),
            ZetaGate::Logistic { gamma, .. } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid_parameter("zeta gate needs gamma > 0"))
                }
            }
        }
    }
}

/// Gated ARCH(q) specification for the conditional variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    omega: f64,
    alpha: Vec<f64>,
    /// Gates zeta_0, ..., zeta_q (index 0 multiplies omega).
    zeta: Vec<ZetaGate>,
}

impl ArchSpec {
    pub fn new(omega: f64, alpha: Vec<f64>, zeta: Vec<ZetaGate>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid_parameter("ARCH order q must be >= 1"));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::invalid_parameter("ARCH needs omega > 0"));
        }
        if alpha.iter().any(|&a| !(a >= 0.0) || !a.is_finite()) {
            return Err(Error::invalid_parameter("ARCH needs alpha_i >= 0"));
        }
        let sum: f64 = alpha.iter().sum();
        if !(sum < 1.0) {
            return Err(Error::invalid_parameter(format!(
                "ARCH needs sum(alpha) < 1, got {sum}"
            )));
        }
        if zeta.len() != alpha.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "expected {} zeta gates (q + 1), got {}",
                alpha.len() + 1,
                zeta.len()
            )));
        }
        for z in &zeta {
            z.validate()?;
        }
        Ok(ArchSpec { omega, alpha, zeta })
    }

    /// Same gate applied to every term, as in the shared-gate models.
    pub fn with_shared_gate(omega: f64, alpha: Vec<f64>, gate: ZetaGate) -> Result<Self> {
        let q = alpha.len();
        ArchSpec::new(omega, alpha, vec![gate; q + 1])
    }

    /// The linear ARCH(q): all gates identically one.
    pub fn linear(omega: f64, alpha: Vec<f64>) -> Result<Self> {
        ArchSpec::with_shared_gate(omega, alpha, ZetaGate::ConstantOne)
    }

    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn zeta(&self) -> &[ZetaGate] {
        &self.zeta
    }
}

/// Complete model: AR coefficients, nonlinear mean, gated ARCH errors, and
/// the innovation law. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub ar: ArCoefficients,
    pub mean: MeanFunction,
    pub arch: ArchSpec,
    pub innovation: InnovationSpec,
}

impl ModelSpec {
    pub fn new(
        ar: ArCoefficients,
        mean: MeanFunction,
        arch: ArchSpec,
        innovation: InnovationSpec,
    ) -> Result<Self> {
        mean.validate()?;
        innovation.validate()?;
        Ok(ModelSpec {
            ar,
            mean,
            arch,
            innovation,
        })
    }

    pub fn p(&self) -> usize {
        self.ar.order()
    }

    pub fn q(&self) -> usize {
        self.arch.order()
    }

    /// State dimension p + q.
    pub fn dim(&self) -> usize {
        self.p() + self.q()
    }
}

/// A point in the state space: the p + q most recent observations (newest
/// first), optionally carrying an explicit tail of squared errors.
///
/// When `e2_tail` is present it overrides reconstruction: the q entries are
/// taken as (e_{t-1}^2, ..., e_{t-q}^2) directly. Otherwise the squared
/// errors are reconstructed exactly from the observation window through the
/// u/e recursions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    y: Vec<f64>,
    e2_tail: Option<Vec<f64>>,
}

impl StateVector {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("state entries must be finite"));
        }
        Ok(StateVector { y, e2_tail: None })
    }

    pub fn with_e2_tail(y: Vec<f64>, e2_tail: Vec<f64>) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_argument("state entries must be finite"));
        }
        if e2_tail.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid_argument(
                "e2 tail entries must be finite and nonnegative",
            ));
        }
        Ok(StateVector {
            y,
            e2_tail: Some(e2_tail),
        })
    }

    pub fn zeros(dim: usize) -> Self {
        StateVector {
            y: vec![0.0; dim],
            e2_tail: None,
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn e2_tail(&self) -> Option<&[f64]> {
        self.e2_tail.as_deref()
    }

    fn check_dim(&self, model: &ModelSpec) -> Result<()> {
        if self.y.len() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "state has length {}, model needs p + q = {}",
                self.y.len(),
                model.dim()
            )));
        }
        if let Some(tail) = &self.e2_tail {
            if tail.len() != model.q() {
                return Err(Error::DimensionMismatch(format!(
                    "e2 tail has length {}, model needs q = {}",
                    tail.len(),
                    model.q()
                )));
            }
        }
        Ok(())
    }
}

/// u_t = y_t - pi_1 y_{t-1} - ... - pi_{p-1} y_{t-p+1} for a window of the
/// p most recent observations, newest first.
pub fn compute_u(window: &[f64], ar: &ArCoefficients) -> Result<f64> {
    let p = ar.order();
    if window.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "window has length {}, expected p = {}",
            window.len(),
            p
        )));
    }
    let mut u = window[0];
    for (i, &pi) in ar.pi().iter().enumerate() {
        u -= pi * window[i + 1];
    }
    Ok(u)
}

/// g(u) for the configured mean variant.
pub fn mean_g(u: f64, mean: &MeanFunction) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::invalid_argument("u must be finite"));
    }
    Ok(mean.g(u))
}

/// e_t = u_t - g(u_{t-1}).
pub fn compute_e(u_t: f64, u_prev: f64, mean: &MeanFunction) -> f64 {
    u_t - mean.g(u_prev)
}

/// The squared-error block xi(x) = (e_{t-1}^2, ..., e_{t-q}^2) for a state
/// x standing for (y_{t-1}, ..., y_{t-p-q}), newest first.
///
/// With an explicit e2 tail the entries are returned as supplied; otherwise
/// they are reconstructed exactly: the window of length p + q determines
/// u_{t-1}, ..., u_{t-q-1} and hence every required e.
pub fn reconstruct_xi(state: &StateVector, model: &ModelSpec) -> Result<Vec<f64>> {
    state.check_dim(model)?;
    if let Some(tail) = state.e2_tail() {
        return Ok(tail.to_vec());
    }
    let p = model.p();
    let q = model.q();
    // u_{t-1-i} for i = 0..=q
    let mut us = Vec::with_capacity(q + 1);
    for i in 0..=q {
        us.push(compute_u(&state.y()[i..i + p], &model.ar)?);
    }
    let mut xi = Vec::with_capacity(q);
    for j in 0..q {
        let e = compute_e(us[j], us[j + 1], &model.mean);
        xi.push(e * e);
    }
    Ok(xi)
}

/// Conditional variance sigma_t^2 at the given state.
pub fn conditional_variance(state: &StateVector, model: &ModelSpec) -> Result<f64> {
    let xi = reconstruct_xi(state, model)?;
    let y_prev = state.y()[0];
    let gates = model.arch.zeta();
    let mut sigma2 = gates[0].eval(y_prev) * model.arch.omega();
    for (i, &a) in model.arch.alpha().iter().enumerate() {
        sigma2 += a * gates[i + 1].eval(y_prev) * xi[i];
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Numeric(format!(
            "conditional variance {sigma2} is not positive"
        )));
    }
    Ok(sigma2)
}

/// Companion-form matrices for a model, plus the Lemma-2 comparison matrix.
///
/// Pi = A Phi A^{-1} holds exactly by construction (structural form) and is
/// re-verified numerically at build time.
#[derive(Debug, Clone)]
pub struct CompanionSystem {
    pub phi: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub pi: DMatrix<f64>,
    /// Lower-right (p-1) x (p-1) corner of Pi; the companion matrix of the
    /// AR polynomial. Empty when p = 1.
    pub pi1: DMatrix<f64>,
    /// q x q matrix with first row alpha_i * mu_bar and a subdiagonal of
    /// ones; spectral radius < 1 iff sum(alpha_i) * mu_bar < 1.
    pub lambda_bar: DMatrix<f64>,
    pub iota_p: DVector<f64>,
    pub iota_pq: DVector<f64>,
}

/// Build the companion system. `bs0_moment` is the moment constant
/// mu_bar_{2 b s0} scaling the first row of `lambda_bar`.
pub fn build_companion(model: &ModelSpec, bs0_moment: f64) -> Result<CompanionSystem> {
    if !(bs0_moment.is_finite() && bs0_moment > 0.0) {
        return Err(Error::invalid_argument(
            "bs0 moment constant must be finite and positive",
        ));
    }
    let p = model.p();
    let q = model.q();
    let pi_coef = model.ar.pi();

    let mut phi = DMatrix::zeros(p, p);
    for (j, &c) in pi_coef.iter().enumerate() {
        phi[(0, j)] = c;
    }
    for i in 1..p {
        phi[(i, i - 1)] = 1.0;
    }

    let mut a = DMatrix::identity(p, p);
    for (j, &c) in pi_coef.iter().enumerate() {
        a[(0, j + 1)] = -c;
    }

    // Structural Pi: zero first row, iota_{p-1} below, companion block right.
    let mut pi = DMatrix::zeros(p, p);
    if p > 1 {
        pi[(1, 0)] = 1.0;
        for (j, &c) in pi_coef.iter().enumerate() {
            pi[(1, j + 1)] = c;
        }
        for i in 2..p {
            pi[(i, i - 1)] = 1.0;
        }
    }

    // Verify Pi = A Phi A^{-1} numerically.
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("companion matrix A is singular".into()))?;
    let check = &a * &phi * &a_inv;
    let max_dev = (&check - &pi).abs().max();
    if max_dev > 1e-12 {
        return Err(Error::Numeric(format!(
            "companion identity violated: max deviation {max_dev:.3e}"
        )));
    }

    let pi1 = if p > 1 {
        pi.view((1, 1), (p - 1, p - 1)).into_owned()
    } else {
        DMatrix::zeros(0, 0)
    };

    let mut lambda_bar = DMatrix::zeros(q, q);
    for (j, &alpha) in model.arch.alpha().iter().enumerate() {
        lambda_bar[(0, j)] = alpha * bs0_moment;
    }
    for i in 1..q {
        lambda_bar[(i, i - 1)] = 1.0;
    }

    let mut iota_p = DVector::zeros(p);
    iota_p[0] = 1.0;
    let mut iota_pq = DVector::zeros(p + q);
    iota_pq[0] = 1.0;

    Ok(CompanionSystem {
        phi,
        a,
        pi,
        pi1,
        lambda_bar,
        iota_p,
        iota_pq,
    })
}

/// The transformed state pieces used by the drift function.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTransforms {
    /// z1 = u computed from the first p state entries.
    pub z1: f64,
    /// z2 = (x_{1,2}, ..., x_{1,p}); empty when p = 1.
    pub z2: Vec<f64>,
    /// Squared-error block, length q.
    pub xi: Vec<f64>,
}

/// Split a state into (z1, z2, xi).
pub fn state_transforms(state: &StateVector, model: &ModelSpec) -> Result<StateTransforms> {
    state.check_dim(model)?;
    let p = model.p();
    let z1 = compute_u(&state.y()[..p], &model.ar)?;
    let z2 = state.y()[1..p].to_vec();
    let xi = reconstruct_xi(state, model)?;
    Ok(StateTransforms { z1, z2, xi })
}
