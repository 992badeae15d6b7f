//! Flat key=value configuration with dotted section names, e.g.
//!
//!   model.mean = logistic_intercept
//!   model.mean.nu1 = -0.187
//!   model.arch.alpha = 0.406, 0.310, 0.149
//!
//! Lines starting with '#' are comments. Values are strings until typed
//! accessors parse them.

use ararch::dist::InnovationSpec;
use ararch::estim::{FitTemplate, GateTemplate, InnovationTemplate, MeanTemplate, Par};
use ararch::model::{
    ArCoefficients, ArchSpec, HSpec, MeanFunction, ModelSpec, SlopeKind, ZetaGate,
};
use ararch::stability::DriftParams;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn empty() -> Self {
        Config::default()
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.clone()
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str, String> {
        self.get(key).ok_or_else(|| format!("missing key {key}"))
    }

    pub fn maybe_f64(&self, key: &str) -> Result<Option<f64>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| format!("{key}: not a number: {v}")),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, String> {
        Ok(self.maybe_f64(key)?.unwrap_or(default))
    }

    fn require_f64(&self, key: &str) -> Result<f64, String> {
        self.maybe_f64(key)?
            .ok_or_else(|| format!("missing key {key}"))
    }

    pub fn maybe_usize(&self, key: &str) -> Result<Option<usize>, String> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| format!("{key}: not an integer: {v}")),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, String> {
        Ok(self.maybe_usize(key)?.unwrap_or(default))
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>, String> {
        match self.get(key) {
            None => Ok(vec![]),
            Some(raw) if raw.trim().is_empty() => Ok(vec![]),
            Some(raw) => raw
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse()
                        .map_err(|_| format!("{key}: not a number: {tok}"))
                })
                .collect(),
        }
    }

    /// Build the full model from the `model.*` section.
    pub fn model(&self) -> Result<ModelSpec, String> {
        let pi = self.f64_list("model.pi")?;
        let ar = ArCoefficients::new(pi).map_err(|e| e.to_string())?;

        let mean = match self.require("model.mean")? {
            "logistic_intercept" => MeanFunction::LogisticIntercept {
                nu1: self.require_f64("model.mean.nu1")?,
                nu2: self.require_f64("model.mean.nu2")?,
                gamma: self.require_f64("model.mean.gamma")?,
                a1: self.require_f64("model.mean.a1")?,
                a2: self.require_f64("model.mean.a2")?,
            },
            "time_varying_slope" => {
                let kind = match self.require("model.mean.kind")? {
                    "s1" => SlopeKind::S1,
                    "s2" => SlopeKind::S2,
                    other => return Err(format!("model.mean.kind: unknown kind {other}")),
                };
                let a = self.require_f64("model.mean.h_a")?;
                let rho = self.require_f64("model.mean.h_rho")?;
                let h = match self.get("model.mean.h").unwrap_or("abs_power") {
                    "abs_power" => HSpec::AbsPower { a, rho },
                    "quad_power" => HSpec::QuadPower { a, rho },
                    other => return Err(format!("model.mean.h: unknown shape {other}")),
                };
                MeanFunction::TimeVaryingSlope {
                    kind,
                    r0: self.require_f64("model.mean.r0")?,
                    h,
                }
            }
            "bounded_shrink" => MeanFunction::BoundedShrink {
                r: self.require_f64("model.mean.r")?,
                rho: self.require_f64("model.mean.rho")?,
                threshold: self.require_f64("model.mean.threshold")?,
            },
            other => return Err(format!("model.mean: unknown variant {other}")),
        };
        mean.validate().map_err(|e| e.to_string())?;

        let omega = self.require_f64("model.arch.omega")?;
        let alpha = self.f64_list("model.arch.alpha")?;
        if alpha.is_empty() {
            return Err("model.arch.alpha: need at least one coefficient".into());
        }
        let gate = match self.get("model.arch.zeta").unwrap_or("one") {
            "one" => ZetaGate::ConstantOne,
            "logistic" => ZetaGate::Logistic {
                gamma: self.require_f64("model.arch.zeta.gamma")?,
                a: self.require_f64("model.arch.zeta.a")?,
            },
            other => return Err(format!("model.arch.zeta: unknown gate {other}")),
        };
        let arch = ArchSpec::with_shared_gate(omega, alpha, gate).map_err(|e| e.to_string())?;

        let innovation = match self.get("model.innovation").unwrap_or("normal") {
            "normal" => InnovationSpec::UnitNormal,
            "student_t" => InnovationSpec::StudentT {
                df: self.require_f64("model.innovation.df")?,
            },
            "skew_t" => InnovationSpec::SkewT {
                c: self.require_f64("model.innovation.c")?,
                d: self.require_f64("model.innovation.d")?,
            },
            other => return Err(format!("model.innovation: unknown variant {other}")),
        };

        ModelSpec::new(ar, mean, arch, innovation).map_err(|e| e.to_string())
    }

    /// Optional initial state for simulation from `sim.initial` (p+q lagged
    /// observations, newest first) and `sim.initial_e2` (q squared errors).
    pub fn initial_state(
        &self,
        model: &ModelSpec,
    ) -> Result<Option<ararch::model::StateVector>, String> {
        let y = self.f64_list("sim.initial")?;
        if y.is_empty() {
            return Ok(None);
        }
        if y.len() != model.dim() {
            return Err(format!(
                "sim.initial: expected {} values (p + q), got {}",
                model.dim(),
                y.len()
            ));
        }
        let e2 = self.f64_list("sim.initial_e2")?;
        let state = if e2.is_empty() {
            ararch::model::StateVector::new(y)
        } else {
            if e2.len() != model.q() {
                return Err(format!(
                    "sim.initial_e2: expected {} values (q), got {}",
                    model.q(),
                    e2.len()
                ));
            }
            ararch::model::StateVector::with_e2_tail(y, e2)
        };
        state.map(Some).map_err(|e| e.to_string())
    }

    /// Drift parameters from the `check.*` section, defaulting by variant.
    pub fn drift_params(&self, model: &ModelSpec) -> Result<DriftParams, String> {
        let mut params = DriftParams::default_for(model);
        params.s0 = self.f64_or("check.s0", params.s0)?;
        params.b = self.f64_or("check.b", params.b)?;
        params.rho = self.f64_or("check.rho", params.rho)?;
        params.s1 = self.f64_or("check.s1", if model.p() == 1 { 0.0 } else { 1e-3 })?;
        params.s2 = self.f64_or("check.s2", 1000.0)?;
        let delta_default = match model.mean {
            MeanFunction::LogisticIntercept { .. } => 2.0 * params.s0,
            _ => 2.0 * params.s0 / params.rho,
        };
        params.delta = self.f64_or("check.delta", delta_default)?;
        params.validate(model.p()).map_err(|e| e.to_string())?;
        Ok(params)
    }

    /// Fit template from the `fit.*` section; data-driven defaults.
    pub fn fit_template(&self, data: &[f64], q: usize) -> Result<FitTemplate, String> {
        let mut template = FitTemplate::lstar_arch(data, q);

        match self.get("fit.mean").unwrap_or("unit_root_logistic") {
            "unit_root_logistic" => {}
            "zero" => template.mean = MeanTemplate::Zero,
            other => return Err(format!("fit.mean: unknown variant {other}")),
        }
        match self.get("fit.gate").unwrap_or("shared") {
            "shared" => {}
            "one" => template.gate = GateTemplate::One,
            "separate" => {
                template.gate = GateTemplate::Logistic {
                    gamma: Par::Free {
                        init: self.f64_or("fit.init.gate_gamma", 0.2)?,
                    },
                    a: Par::Free {
                        init: self.f64_or("fit.init.gate_a", data.iter().sum::<f64>() / data.len() as f64)?,
                    },
                }
            }
            other => return Err(format!("fit.gate: unknown gate {other}")),
        }
        match self.get("fit.innovation").unwrap_or("skew_t") {
            "skew_t" => {}
            "normal" => template.innovation = InnovationTemplate::UnitNormal,
            "student_t" => {
                template.innovation = InnovationTemplate::StudentT {
                    df: Par::Free {
                        init: self.f64_or("fit.init.df", 6.0)?,
                    },
                }
            }
            other => return Err(format!("fit.innovation: unknown variant {other}")),
        }

        // Optional initial-value overrides.
        if let MeanTemplate::UnitRootLogistic { nu, gamma, a } = &mut template.mean {
            if let Some(v) = self.maybe_f64("fit.init.nu")? {
                *nu = Par::Free { init: v };
            }
            if let Some(v) = self.maybe_f64("fit.init.gamma")? {
                *gamma = Par::Free { init: v };
            }
            if let Some(v) = self.maybe_f64("fit.init.a")? {
                *a = Par::Free { init: v };
            }
        }
        if let Some(v) = self.maybe_f64("fit.init.omega")? {
            template.omega = Par::Free { init: v };
        }
        let alpha_init = self.f64_list("fit.init.alpha")?;
        if !alpha_init.is_empty() {
            if alpha_init.len() != q {
                return Err(format!(
                    "fit.init.alpha: expected {q} values, got {}",
                    alpha_init.len()
                ));
            }
            template.alpha = alpha_init.into_iter().map(|v| Par::Free { init: v }).collect();
        }
        if let InnovationTemplate::SkewT { c, d } = &mut template.innovation {
            if let Some(v) = self.maybe_f64("fit.init.c")? {
                *c = Par::Free { init: v };
            }
            if let Some(v) = self.maybe_f64("fit.init.d")? {
                *d = Par::Free { init: v };
            }
        }
        Ok(template)
    }
}
