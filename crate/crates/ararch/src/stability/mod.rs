//! Stability machinery: executable versions of the model assumptions, the
//! contraction norms, and Monte Carlo certification of the drift condition
//! with the resulting polynomial-rate / moment-order verdict.

mod checks;
mod drift;
mod norms;

pub use checks::{
    check_envelope_fn, check_lemma2, check_mean_envelope, check_root_condition, induced_norm_mc,
    moment_mu_bar, random_stable_pi, suggest_envelope_params, EnvelopePoint, EnvelopeReport,
    InducedNormEstimate, Lemma2Check, RootCheck,
};
pub use drift::{
    build_grid, ergodicity_report, geometric_levels, stationary_levels, verify_drift,
    DriftEvaluator, DriftParams, DriftPointRecord, DriftReport, ErgodicityOptions,
    ErgodicityReport, PointStatus,
};
pub use norms::{BulletNorm, StarNorm};
