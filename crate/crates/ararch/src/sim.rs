//! Path simulation of the full AR-ARCH process and empirical diagnostics
//! (sample autocorrelations, moment tracking across replications).

use crate::dist::Innovation;
use crate::error::{Error, Result};
use crate::model::{compute_u, reconstruct_xi, ModelSpec, StateVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A simulated trajectory with all derived series. The identity
/// sigma_t * eps_t = e_t holds exactly along the path, and y_t reconstructs
/// exactly from the recursion given the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPath {
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Vec<f64>,
    pub burn_in: usize,
    pub seed: u64,
    /// State (observation window and squared-error tail) at the start of
    /// the retained sample; reconstruction of the derived series from `y`
    /// alone starts here.
    pub initial_state: StateVector,
}

impl SimulatedPath {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// CSV with columns t, y, sigma, eps, u, e.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,y,sigma,eps,u,e\n");
        for i in 0..self.y.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                self.y[i],
                self.sigma[i],
                self.eps[i],
                self.u[i],
                self.e[i]
            ));
        }
        out
    }
}

/// Simulate `n` observations after discarding `burn_in` steps.
///
/// The state is initialized from `initial` (zeros with a zero squared-error
/// tail when absent); the seed fully determines the path. A non-finite
/// value aborts with the 0-based step index counted from the start of the
/// simulation, burn-in included.
pub fn simulate(
    model: &ModelSpec,
    n: usize,
    burn_in: usize,
    initial: Option<&StateVector>,
    seed: u64,
) -> Result<SimulatedPath> {
    if n == 0 {
        return Err(Error::invalid_argument("need n >= 1 observations"));
    }
    let p = model.p();
    let q = model.q();
    let innovation = Innovation::new(model.innovation)?;

    let default_init;
    let init = match initial {
        Some(s) => s,
        None => {
            default_init = StateVector::with_e2_tail(vec![0.0; p + q], vec![0.0; q])?;
            &default_init
        }
    };
    if init.len() != p + q {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, model needs {}",
            init.len(),
            p + q
        )));
    }

    // Working state: observation window (newest first) and e^2 window.
    let mut y_hist = init.y().to_vec();
    let mut e2_hist = reconstruct_xi(init, model)?;
    let mut u_prev = compute_u(&y_hist[..p], &model.ar)?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut path = SimulatedPath {
        y: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        burn_in,
        seed,
        initial_state: init.clone(),
    };

    let gates = model.arch.zeta();
    let alpha = model.arch.alpha();
    let omega = model.arch.omega();
    let pi = model.ar.pi();

    for step in 0..burn_in + n {
        let y_prev = y_hist[0];
        let mut sigma2 = gates[0].eval(y_prev) * omega;
        for (i, &a) in alpha.iter().enumerate() {
            sigma2 += a * gates[i + 1].eval(y_prev) * e2_hist[i];
        }
        let sigma = sigma2.sqrt();
        let eps = innovation.sample(&mut rng);
        let e = sigma * eps;
        let u = model.mean.g(u_prev) + e;
        let mut y = u;
        for (i, &c) in pi.iter().enumerate() {
            y += c * y_hist[i];
        }
        if !y.is_finite() || !sigma.is_finite() {
            return Err(Error::Explosion { index: step });
        }

        if step == burn_in {
            // Snapshot the state right before the first retained draw.
            path.initial_state =
                StateVector::with_e2_tail(y_hist.clone(), e2_hist.clone())?;
        }
        if step >= burn_in {
            path.y.push(y);
            path.sigma.push(sigma);
            path.eps.push(eps);
            path.u.push(u);
            path.e.push(e);
        }

        y_hist.rotate_right(1);
        y_hist[0] = y;
        e2_hist.rotate_right(1);
        e2_hist[0] = e * e;
        u_prev = u;
    }
    Ok(path)
}

/// Recompute (u, e, sigma) from observations alone, given the model and the
/// state at the start of the window. Used to verify path consistency and to
/// derive series for externally supplied data.
pub fn reconstruct_derived(
    model: &ModelSpec,
    initial: &StateVector,
    y: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let p = model.p();
    let mut y_hist = initial.y().to_vec();
    let mut e2_hist = reconstruct_xi(initial, model)?;
    let mut u_prev = compute_u(&y_hist[..p], &model.ar)?;

    let gates = model.arch.zeta();
    let alpha = model.arch.alpha();
    let omega = model.arch.omega();

    let mut us = Vec::with_capacity(y.len());
    let mut es = Vec::with_capacity(y.len());
    let mut sigmas = Vec::with_capacity(y.len());
    for &yt in y {
        let y_prev = y_hist[0];
        let mut sigma2 = gates[0].eval(y_prev) * omega;
        for (i, &a) in alpha.iter().enumerate() {
            sigma2 += a * gates[i + 1].eval(y_prev) * e2_hist[i];
        }
        let mut window = vec![yt];
        window.extend_from_slice(&y_hist[..p - 1]);
        let u = compute_u(&window, &model.ar)?;
        let e = u - model.mean.g(u_prev);

        us.push(u);
        es.push(e);
        sigmas.push(sigma2.sqrt());

        y_hist.rotate_right(1);
        y_hist[0] = yt;
        e2_hist.rotate_right(1);
        e2_hist[0] = e * e;
        u_prev = u;
    }
    Ok((us, es, sigmas))
}

/// Sample autocorrelation function with the lag-0 variance in the
/// denominator (denominator n convention), plus the +-1.96/sqrt(n) band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    /// Autocorrelations at lags 1..=max_lag.
    pub values: Vec<f64>,
    pub band: f64,
}

impl Acf {
    pub fn outside_band(&self) -> usize {
        self.values.iter().filter(|v| v.abs() > self.band).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lag,acf,band\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", k + 1, v, self.band));
        }
        out
    }
}

pub fn acf(series: &[f64], max_lag: usize) -> Result<Acf> {
    if series.len() <= max_lag {
        return Err(Error::invalid_argument(format!(
            "series length {} must exceed max_lag {max_lag}",
            series.len()
        )));
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0: f64 = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if c0 <= 0.0 || !c0.is_finite() {
        return Err(Error::DegenerateInput(
            "series has zero (or non-finite) variance".into(),
        ));
    }
    let mut values = Vec::with_capacity(max_lag);
    for k in 1..=max_lag {
        let ck: f64 = (k..n)
            .map(|t| (series[t] - mean) * (series[t - k] - mean))
            .sum::<f64>()
            / n as f64;
        values.push(ck / c0);
    }
    Ok(Acf {
        values,
        band: 1.96 / (n as f64).sqrt(),
    })
}

/// Across-replication moment estimates with a path-length divergence probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentScanEntry {
    pub order: f64,
    /// Mean over replications of the full-path estimate of E|y|^order.
    pub estimate: f64,
    /// Standard deviation of the estimate across replications.
    pub dispersion: f64,
    /// Same quantities over the first half of each path.
    pub estimate_half: f64,
    pub dispersion_half: f64,
    /// Interquartile range of the per-replication full/half estimate ratio.
    pub ratio_iqr: f64,
    /// Heuristic divergence flag; see `moment_scan`.
    pub diverging: bool,
}

/// Estimate E|y|^k per order across replications and flag orders whose
/// estimates fail to settle as the path grows.
///
/// With a finite moment, doubling the path shrinks the relative dispersion
/// of the estimate by about sqrt(2) and the per-replication full/half
/// estimate ratios concentrate near one. A divergent moment leaves the
/// relative dispersion stuck near its half-path level and spreads the
/// ratios out (single extreme observations dominate the sums), so either
/// signal raises the flag.
pub fn moment_scan(paths: &[SimulatedPath], orders: &[f64]) -> Result<Vec<MomentScanEntry>> {
    if paths.len() < 50 {
        return Err(Error::invalid_argument(
            "moment scan needs at least 50 replications",
        ));
    }
    let mut entries = Vec::with_capacity(orders.len());
    for &k in orders {
        let mut full = Vec::with_capacity(paths.len());
        let mut half = Vec::with_capacity(paths.len());
        for p in paths {
            let n = p.y.len();
            let m_full = p.y.iter().map(|v| v.abs().powf(k)).sum::<f64>() / n as f64;
            let m_half =
                p.y[..n / 2].iter().map(|v| v.abs().powf(k)).sum::<f64>() / (n / 2) as f64;
            full.push(m_full);
            half.push(m_half);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
        };
        let (mf, mh) = (mean(&full), mean(&half));
        let (df, dh) = (sd(&full, mf), sd(&half, mh));

        let mut ratios: Vec<f64> = full
            .iter()
            .zip(&half)
            .map(|(f, h)| if *h > 0.0 { f / h } else { 1.0 })
            .collect();
        ratios.sort_by(|a, b| a.total_cmp(b));
        let quart = |p: f64| ratios[((ratios.len() - 1) as f64 * p) as usize];
        let ratio_iqr = quart(0.75) - quart(0.25);

        let rel_full = if mf > 0.0 { df / mf } else { 0.0 };
        let rel_half = if mh > 0.0 { dh / mh } else { 0.0 };
        let diverging = (rel_half > 0.0 && rel_full >= 0.8 * rel_half) || ratio_iqr >= 0.75;
        entries.push(MomentScanEntry {
            order: k,
            estimate: mf,
            dispersion: df,
            estimate_half: mh,
            dispersion_half: dh,
            ratio_iqr,
            diverging,
        });
    }
    Ok(entries)
}

/// Simulate independent replications with per-replication seed streams.
pub fn replicate(
    model: &ModelSpec,
    replications: usize,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<SimulatedPath>> {
    (0..replications)
        .into_par_iter()
        .map(|r| simulate(model, n, burn_in, None, seed.wrapping_add(r as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::InnovationSpec;
    use crate::model::{ArCoefficients, ArchSpec, MeanFunction, ModelSpec, ZetaGate};

    fn shrink_mean() -> MeanFunction {
        MeanFunction::BoundedShrink {
            r: 1.0,
            rho: 1.0,
            threshold: 1.0,
        }
    }

    fn iid_model(omega: f64) -> ModelSpec {
        ModelSpec::new(
            ArCoefficients::new(vec![]).unwrap(),
            shrink_mean(),
            ArchSpec::linear(omega, vec![0.0]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_iid_case_variance() {
        // alpha = 0, g vanishing near zero, p = 1: y_t = sqrt(omega) eps_t
        // as long as |y| stays below the shrink threshold... use threshold
        // large enough that g is identically zero on the visited range.
        let model = ModelSpec::new(
            ArCoefficients::new(vec![]).unwrap(),
            MeanFunction::BoundedShrink {
                r: 1.0,
                rho: 1.0,
                threshold: 1e9,
            },
            ArchSpec::linear(2.0, vec![0.0]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let path = simulate(&model, 1_000_000, 100, None, 3).unwrap();
        let mean = path.y.iter().sum::<f64>() / path.len() as f64;
        let var = path.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / path.len() as f64;
        assert!((var - 2.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn sigma_eps_identity_exact() {
        let model = iid_model(1.0);
        let path = simulate(&model, 5000, 200, None, 9).unwrap();
        for i in 0..path.len() {
            assert_eq!(path.sigma[i] * path.eps[i], path.e[i]);
        }
    }

    #[test]
    fn saturated_logistic_gate_matches_linear_arch() {
        // gamma large and a far below the visited range: zeta ~= 1 exactly
        // in floating point, so the paths coincide for the same seed.
        let linear = ModelSpec::new(
            ArCoefficients::new(vec![0.3]).unwrap(),
            shrink_mean(),
            ArchSpec::linear(1.0, vec![0.4]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let gated = ModelSpec::new(
            ArCoefficients::new(vec![0.3]).unwrap(),
            shrink_mean(),
            ArchSpec::with_shared_gate(
                1.0,
                vec![0.4],
                ZetaGate::Logistic {
                    gamma: 50.0,
                    a: -1e6,
                },
            )
            .unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let a = simulate(&linear, 2000, 100, None, 21).unwrap();
        let b = simulate(&gated, 2000, 100, None, 21).unwrap();
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn seed_determinism_bytewise() {
        let model = iid_model(1.0);
        let a = simulate(&model, 1000, 50, None, 1234).unwrap();
        let b = simulate(&model, 1000, 50, None, 1234).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c = simulate(&model, 1000, 50, None, 1235).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn reconstruction_from_y_alone() {
        let model = ModelSpec::new(
            ArCoefficients::new(vec![0.4, -0.1]).unwrap(),
            shrink_mean(),
            ArchSpec::linear(0.5, vec![0.3, 0.2]).unwrap(),
            InnovationSpec::StudentT { df: 7.0 },
        )
        .unwrap();
        let path = simulate(&model, 3000, 500, None, 77).unwrap();
        let (u, e, sigma) = reconstruct_derived(&model, &path.initial_state, &path.y).unwrap();
        for i in 0..path.len() {
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            assert!(rel(u[i], path.u[i]) < 1e-10, "u mismatch at {i}");
            assert!(rel(e[i], path.e[i]) < 1e-10, "e mismatch at {i}");
            assert!(rel(sigma[i], path.sigma[i]) < 1e-10, "sigma mismatch at {i}");
        }
    }

    #[test]
    fn acf_of_ar1_matches_analytic() {
        // Homoskedastic AR(1) with coefficient 0.9 via the linear AR part:
        // p = 2, pi_1 = 0.9, g == 0 on the visited range.
        let model = ModelSpec::new(
            ArCoefficients::new(vec![0.9]).unwrap(),
            MeanFunction::BoundedShrink {
                r: 1.0,
                rho: 1.0,
                threshold: 1e9,
            },
            ArchSpec::linear(1.0, vec![0.0]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let path = simulate(&model, 100_000, 1000, None, 5).unwrap();
        let acf = acf(&path.y, 10).unwrap();
        for (k, v) in acf.values.iter().enumerate() {
            let expect = 0.9f64.powi(k as i32 + 1);
            assert!(
                (v - expect).abs() < 0.02,
                "lag {} acf {v} vs {expect}",
                k + 1
            );
        }
    }

    #[test]
    fn acf_iid_band_coverage() {
        let model = iid_model(1.0);
        let path = simulate(&model, 10_000, 100, None, 31).unwrap();
        let acf = acf(&path.y, 100).unwrap();
        // ~5% of lags outside the 95% band; allow generous slack.
        assert!(acf.outside_band() <= 12, "outside: {}", acf.outside_band());
    }

    #[test]
    fn acf_rejects_constant_series() {
        assert!(matches!(
            acf(&vec![1.0; 100], 10),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn moment_scan_degenerate_case() {
        // Pure IID case: g vanishes on the visited range, alpha = 0.
        let model = ModelSpec::new(
            ArCoefficients::new(vec![]).unwrap(),
            MeanFunction::BoundedShrink {
                r: 1.0,
                rho: 1.0,
                threshold: 1e9,
            },
            ArchSpec::linear(1.5, vec![0.0]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let paths = replicate(&model, 60, 4000, 100, 11).unwrap();
        let scan = moment_scan(&paths, &[2.0]).unwrap();
        assert!((scan[0].estimate - 1.5).abs() < 0.05, "E y^2 = {}", scan[0].estimate);
        assert!(!scan[0].diverging);
    }

    #[test]
    fn moment_scan_stable_below_moment_boundary() {
        // Unit-root logistic model with s0 = 1: moments up to order one, so
        // the order-0.9 estimate settles as the path grows.
        let model = ModelSpec::new(
            ArCoefficients::new(vec![]).unwrap(),
            MeanFunction::LogisticIntercept {
                nu1: -0.187,
                nu2: 0.187,
                gamma: 0.171,
                a1: 25.366,
                a2: 25.366,
            },
            ArchSpec::with_shared_gate(
                3.259,
                vec![0.406, 0.310, 0.149],
                ZetaGate::Logistic {
                    gamma: 0.171,
                    a: 25.366,
                },
            )
            .unwrap(),
            InnovationSpec::SkewT { c: 3.551, d: 2.138 },
        )
        .unwrap();
        let paths = replicate(&model, 50, 8000, 500, 19).unwrap();
        let scan = moment_scan(&paths, &[0.9]).unwrap();
        assert!(!scan[0].diverging, "ratio_iqr {}", scan[0].ratio_iqr);
    }

    #[test]
    fn moment_scan_flags_divergent_order() {
        // ARCH(1) with alpha = 0.9: fourth moment diverges
        // (0.9^2 * E eps^4 = 2.43 > 1) while the path itself is stable.
        let model = ModelSpec::new(
            ArCoefficients::new(vec![]).unwrap(),
            MeanFunction::BoundedShrink {
                r: 1.0,
                rho: 1.0,
                threshold: 1e9,
            },
            ArchSpec::linear(1.0, vec![0.9]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let paths = replicate(&model, 60, 20_000, 500, 13).unwrap();
        let scan = moment_scan(&paths, &[1.0, 4.0]).unwrap();
        assert!(!scan[0].diverging, "first moment should be stable");
        assert!(scan[1].diverging, "fourth moment should be flagged");
    }

    #[test]
    fn explosion_reports_index() {
        // y_1 = g(u_0) + e_1 + pi_1 y_0 with y_0 near f64::MAX overflows on
        // the first step: 1.9 * 1.7e308 is not representable.
        let model = ModelSpec::new(
            ArCoefficients::new(vec![0.9]).unwrap(),
            shrink_mean(),
            ArchSpec::linear(1.0, vec![0.5]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let init =
            StateVector::with_e2_tail(vec![1.7e308, 0.0, 0.0], vec![0.0]).unwrap();
        let r = simulate(&model, 10, 0, Some(&init), 1);
        assert!(matches!(r, Err(Error::Explosion { index: 0 })), "{r:?}");
    }
}
