//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (run with `cargo test --test acceptance --
//! --nocapture` to see them). Tolerances and budgets are pinned in code.

use ararch::dist::{Innovation, InnovationSpec};
use ararch::estim::{
    empirical_example_params, fit, residual_diagnostics, simulate_from_params, FitSpec,
    FitTemplate, ResolvedMean,
};
use ararch::model::{
    build_companion, ArCoefficients, ArchSpec, MeanFunction, ModelSpec, ZetaGate,
};
use ararch::sim::simulate;
use ararch::stability::{
    build_grid, ergodicity_report, geometric_levels, induced_norm_mc, moment_mu_bar,
    random_stable_pi, stationary_levels, verify_drift, BulletNorm, DriftParams,
    ErgodicityOptions,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::time::Instant;

fn companion_of(alpha_bar: &[f64]) -> DMatrix<f64> {
    let q = alpha_bar.len();
    let mut m = DMatrix::zeros(q, q);
    for (j, &a) in alpha_bar.iter().enumerate() {
        m[(0, j)] = a;
    }
    for i in 1..q {
        m[(i, i - 1)] = 1.0;
    }
    m
}

fn empirical_model() -> ModelSpec {
    ModelSpec::new(
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
    .unwrap()
}

/// Criterion 1: the contraction condition implies the induced-norm bound.
/// For q in {1,2,3}, 50 random alpha vectors with sum(alpha) mu_bar < 0.95
/// and b s0 in {1,2}: estimate + 2 SE < 1 in all 300 cases at 1e5 draws.
#[test]
fn acceptance_1_lemma2_contraction() {
    let start = Instant::now();
    let innovation = Innovation::new(InnovationSpec::UnitNormal).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC1);
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for q in 1..=3usize {
        for bs0 in [1.0f64, 2.0] {
            let mu_bar = moment_mu_bar(&innovation, 2.0 * bs0).unwrap();
            for _ in 0..50 {
                let raw: Vec<f64> = (0..q).map(|_| rng.random_range(0.01..1.0)).collect();
                let total: f64 = raw.iter().sum();
                let target = rng.random_range(0.05..0.95) / mu_bar;
                let alpha: Vec<f64> = raw.iter().map(|v| v * target / total).collect();
                let alpha_bar: Vec<f64> = alpha.iter().map(|a| a * mu_bar).collect();
                let norm = BulletNorm::from_lambda_bar(&companion_of(&alpha_bar)).unwrap();
                let est = induced_norm_mc(
                    &norm,
                    &alpha,
                    &innovation,
                    bs0,
                    100_000,
                    rng.random::<u64>(),
                )
                .unwrap();
                assert!(est.lemma2_pass);
                let bound = est.estimate + 2.0 * est.std_error;
                assert!(
                    bound < 1.0,
                    "q={q} bs0={bs0} alpha={alpha:?}: estimate {} + 2*{} >= 1",
                    est.estimate,
                    est.std_error
                );
                worst = worst.max(bound);
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 120.0, "budget exceeded: {elapsed:.1}s");
    println!(
        "ACCEPTANCE 1 (Lemma-2 contraction): PASS — {cases} cases, worst estimate+2SE = {worst:.4}, {elapsed:.1}s"
    );
}

/// Criterion 2: companion identity Pi = A Phi A^{-1} to 1e-12 for 100
/// random stable coefficient sets with p <= 5, in under a second.
#[test]
fn acceptance_2_companion_identity() {
    let start = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC2);
    let mean = MeanFunction::BoundedShrink {
        r: 1.0,
        rho: 1.0,
        threshold: 1.0,
    };
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let p = 1 + (i % 5);
        let pi = random_stable_pi(p - 1, &mut rng);
        let model = ModelSpec::new(
            ArCoefficients::new(pi).unwrap(),
            mean.clone(),
            ArchSpec::linear(1.0, vec![0.3]).unwrap(),
            InnovationSpec::UnitNormal,
        )
        .unwrap();
        let sys = build_companion(&model, 1.0).unwrap();
        let a_inv = sys.a.clone().try_inverse().unwrap();
        let dev = (&sys.a * &sys.phi * &a_inv - &sys.pi).abs().max();
        assert!(dev < 1e-12, "p={p}: deviation {dev:.3e}");
        worst = worst.max(dev);
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "budget exceeded: {elapsed:.2}s");
    println!(
        "ACCEPTANCE 2 (companion identity): PASS — 100 cases, worst deviation {worst:.2e}, {elapsed:.3}s"
    );
}

/// Criterion 3: homoskedastic control. BoundedShrink mean, p = 1, q = 1,
/// alpha = 0, s0 = 1, rho = 1: drift margins <= 0 within 2 MC standard
/// errors at every grid point with |x| >= 10 M0 (M0 = 2), 1e5 draws/point.
#[test]
fn acceptance_3_drift_homoskedastic() {
    let start = Instant::now();
    let model = ModelSpec::new(
        ArCoefficients::new(vec![]).unwrap(),
        MeanFunction::BoundedShrink {
            r: 1.0,
            rho: 1.0,
            threshold: 1.0,
        },
        ArchSpec::linear(1.0, vec![0.0]).unwrap(),
        InnovationSpec::UnitNormal,
    )
    .unwrap();
    let params = DriftParams {
        s0: 1.0,
        b: 1.0,
        rho: 1.0,
        s1: 0.0,
        s2: 1.0,
        delta: 2.0,
    };
    let m0 = 2.0;
    let grid = build_grid(
        &model,
        &[3.0, 6.0, 10.0 * m0, 63.2, 200.0, 632.0, 2000.0],
        &[],
        &[0.0],
    )
    .unwrap();
    // Candidate-set bound just below (10 M0)^2 so the listed points are all
    // outside it.
    let report = verify_drift(&model, &params, &grid, 100_000, 399.0, 0xACC3).unwrap();
    let mut checked = 0usize;
    for p in &report.grid {
        if p.z1.abs() >= 10.0 * m0 {
            assert!(!p.in_candidate_set);
            assert!(
                p.margin <= 2.0 * p.std_error + 1e-12,
                "margin {} (se {}) at z1 = {}",
                p.margin,
                p.std_error,
                p.z1
            );
            checked += 1;
        }
    }
    assert!(report.certified, "verdict: {}", report.verdict);
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 120.0, "budget exceeded: {elapsed:.1}s");
    println!(
        "ACCEPTANCE 3 (homoskedastic drift): PASS — {checked} outside points, e_tilde = {:.3}, {elapsed:.1}s",
        report.e_tilde
    );
}

/// Criterion 4: the fitted LSTAR-ARCH(3) model certifies with s0 = b = 1,
/// rho = 1 on a grid spanning the data range [11.71, 130.61] and out to
/// ten times the data maximum; rate exponent 1, moment order 1.
#[test]
fn acceptance_4_drift_empirical_model() {
    let start = Instant::now();
    let model = empirical_model();
    let params = DriftParams {
        s0: 1.0,
        b: 1.0,
        rho: 1.0,
        s1: 0.0,
        s2: 1.0,
        delta: 2.0,
    };
    let levels = geometric_levels(11.71, 1306.1, 10);
    let (_, xi_levels) = stationary_levels(&model, 4000, 500, 0xACC4).unwrap();
    let grid = build_grid(&model, &levels, &[], &xi_levels).unwrap();
    let opts = ErgodicityOptions {
        draws: 100_000,
        seed: 0xACC4,
        envelope: None,
        z1_max: Some(1306.1),
        z1_points: 10,
        petite_bound: Some(9.0e4),
        grid: Some(grid),
    };
    let report = ergodicity_report(&model, &params, &opts).unwrap();
    assert_eq!(report.verdict, "certified", "report: {}", report.verdict);
    assert_eq!(report.rate_exponent, 1.0);
    assert_eq!(report.moment_order, 1.0);
    let drift = report.drift.as_ref().unwrap();
    let outside = drift.grid.iter().filter(|p| !p.in_candidate_set).count();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed <= 300.0, "budget exceeded: {elapsed:.1}s");
    println!(
        "ACCEPTANCE 4 (empirical-model drift): PASS — certified, rate exponent 1, moment order 1, {} outside points, e_tilde = {:.3}, {elapsed:.1}s",
        outside, drift.e_tilde
    );
}

/// Criterion 5: skew-t correctness at the fitted parameters (3.551, 2.138):
/// unit mass to 1e-8, mean within 1e-7 and variance within 1e-6 by
/// quadrature, Kolmogorov-Smirnov distance of 1e5 draws below 0.006, and
/// exact density symmetry in the c = d case.
#[test]
fn acceptance_5_skew_t_correctness() {
    let start = Instant::now();
    let innov = Innovation::new(InnovationSpec::SkewT { c: 3.551, d: 2.138 }).unwrap();

    let mass = ararch::quad::integrate_real_line(|x| innov.density(x), 1e-10, 0.0)
        .unwrap()
        .value;
    assert!((mass - 1.0).abs() < 1e-8, "mass {mass}");
    let mean = ararch::quad::integrate_real_line(|x| x * innov.density(x), 1e-10, 1e-13)
        .unwrap()
        .value;
    assert!(mean.abs() < 1e-7, "mean {mean}");
    let var = ararch::quad::integrate_real_line(|x| x * x * innov.density(x), 1e-10, 0.0)
        .unwrap()
        .value;
    assert!((var - 1.0).abs() < 1e-6, "variance {var}");

    // KS distance between 1e5 draws and the quadrature CDF.
    let n = 100_000usize;
    let mut draws = innov.sample_n(n, 0xACC5);
    draws.sort_by(|a, b| a.total_cmp(b));
    let mut ks: f64 = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        let f = innov.cdf(x);
        let hi = (i + 1) as f64 / n as f64 - f;
        let lo = f - i as f64 / n as f64;
        ks = ks.max(hi.abs()).max(lo.abs());
    }
    assert!(ks < 0.006, "KS distance {ks}");

    // Exact symmetry when c = d.
    let sym_c = 2.0;
    for i in 0..1000 {
        let x = -25.0 + 50.0 * i as f64 / 999.0;
        let l = ararch::dist::skewt_log_density_raw(x, sym_c, sym_c);
        let r = ararch::dist::skewt_log_density_raw(-x, sym_c, sym_c);
        assert_eq!(l, r, "symmetry broken at x = {x}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    println!(
        "ACCEPTANCE 5 (skew-t correctness): PASS — mass err {:.1e}, |mean| {:.1e}, |var-1| {:.1e}, KS {:.4}, {elapsed:.1}s",
        (mass - 1.0).abs(), mean.abs(), (var - 1.0).abs(), ks
    );
}

/// Criterion 6: parameter recovery. 20 datasets of n = 2715 simulated at
/// the reported estimates; every free parameter within 3 reported standard
/// errors of the truth in at least 18 of 20 replications; median fit time
/// at most 60 seconds.
#[test]
fn acceptance_6_parameter_recovery() {
    let truth = empirical_example_params();
    let truth_values = [
        ("nu", 0.187),
        ("gamma", 0.171),
        ("a", 25.366),
        ("omega", 3.259),
        ("alpha1", 0.406),
        ("alpha2", 0.310),
        ("alpha3", 0.149),
        ("c", 3.551),
        ("d", 2.138),
    ];
    let reps = 20usize;
    let mut hits = vec![0usize; truth_values.len()];
    let mut estimates = vec![Vec::with_capacity(reps); truth_values.len()];
    let mut ses = vec![Vec::with_capacity(reps); truth_values.len()];
    let mut times = Vec::with_capacity(reps);
    for r in 0..reps {
        let data =
            simulate_from_params(&truth, 2715, 1000, 25.0, 0xACC6 + r as u64).unwrap();
        let template = FitTemplate::lstar_arch(&data, 3);
        let t0 = Instant::now();
        let result = fit(&data, &FitSpec::new(template)).unwrap();
        times.push(t0.elapsed().as_secs_f64());
        for (k, (name, value)) in truth_values.iter().enumerate() {
            let idx = result
                .names
                .iter()
                .position(|n| n == name)
                .unwrap_or_else(|| panic!("parameter {name} missing"));
            let dev = (result.estimates[idx] - value).abs();
            let se = result.standard_errors[idx];
            if se.is_finite() && dev <= 3.0 * se {
                hits[k] += 1;
            }
            estimates[k].push(result.estimates[idx]);
            ses[k].push(se);
        }
    }
    times.sort_by(|a, b| a.total_cmp(b));
    let median_time = times[reps / 2];
    for (k, (name, _)) in truth_values.iter().enumerate() {
        assert!(
            hits[k] >= 18,
            "{name}: only {}/{reps} within 3 SEs",
            hits[k]
        );
        // Reported standard errors should track the across-replication
        // dispersion of the estimates within a factor of two.
        let m = estimates[k].iter().sum::<f64>() / reps as f64;
        let disp = (estimates[k].iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / (reps - 1) as f64)
            .sqrt();
        let mean_se = ses[k].iter().sum::<f64>() / reps as f64;
        let ratio = disp / mean_se;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "{name}: dispersion {disp:.4} vs mean SE {mean_se:.4} (ratio {ratio:.2})"
        );
    }
    assert!(median_time <= 60.0, "median fit time {median_time:.1}s");
    println!(
        "ACCEPTANCE 6 (parameter recovery): PASS — per-parameter hits {:?} of {reps}, SEs track dispersion, median fit {median_time:.1}s",
        hits
    );
}

/// Criterion 7: residual diagnostics on correctly specified fits with
/// T = 2715 residuals: band equals 1.96/sqrt(T) (~0.0376) and the median
/// count of residual autocorrelations outside the band (100 lags) is <= 8
/// across 20 replications.
#[test]
fn acceptance_7_residual_diagnostics() {
    let truth = empirical_example_params();
    let reps = 20usize;
    let mut outside_counts = Vec::with_capacity(reps);
    let expected_band = 1.96 / 2715f64.sqrt();
    for r in 0..reps {
        let data =
            simulate_from_params(&truth, 2719, 1000, 25.0, 0xACC7 + r as u64).unwrap();
        let template = FitTemplate::lstar_arch(&data, 3);
        let result = fit(&data, &FitSpec::new(template)).unwrap();
        assert_eq!(result.residuals.len(), 2715);
        let diag = residual_diagnostics(&result).unwrap();
        assert!(
            (diag.acf_residuals.band - expected_band).abs() < 1e-12,
            "band {} vs {expected_band}",
            diag.acf_residuals.band
        );
        assert!((diag.acf_residuals.band - 0.0376).abs() < 2e-4);
        assert_eq!(diag.acf_residuals.values.len(), 100);
        outside_counts.push(diag.acf_residuals.outside_band());
    }
    outside_counts.sort_unstable();
    let median = outside_counts[reps / 2];
    assert!(median <= 8, "median outside-band count {median}");
    println!(
        "ACCEPTANCE 7 (residual diagnostics): PASS — band ±{expected_band:.4}, median outside-band {median}/100"
    );
}

/// Criterion 8: property suites. Bullet-norm monotonicity, triangle
/// inequality, and absolute homogeneity on 1000 random cases each; a
/// two-step Richardson check of the numerical log-likelihood gradient at 20
/// random feasible points; byte-level seed determinism of simulation.
#[test]
fn acceptance_8_property_suites() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC8);

    // Bullet-norm properties (strictly positive feedback rows).
    for case in 0..1000 {
        let q = rng.random_range(1..=4usize);
        let raw: Vec<f64> = (0..q).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let target = rng.random_range(0.1..0.9);
        let alpha_bar: Vec<f64> = raw.iter().map(|v| v * target / total).collect();
        let norm = BulletNorm::from_lambda_bar(&companion_of(&alpha_bar)).unwrap();

        let x: Vec<f64> = (0..q).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| v.abs() + rng.random_range(0.0..3.0))
            .collect();
        // Monotonicity: |x| <= y elementwise.
        assert!(
            norm.eval(&x) <= norm.eval(&y) + 1e-12,
            "monotonicity failed in case {case}"
        );
        // Strict domination of l1 for nonzero x.
        if x.iter().any(|v| *v != 0.0) {
            let l1: f64 = x.iter().map(|v| v.abs()).sum();
            assert!(norm.eval(&x) > l1, "l1 domination failed in case {case}");
        }
        // Triangle inequality.
        let z: Vec<f64> = (0..q).map(|_| rng.random_range(-5.0..5.0)).collect();
        let sum: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        assert!(
            norm.eval(&sum) <= norm.eval(&x) + norm.eval(&z) + 1e-12,
            "triangle inequality failed in case {case}"
        );
        // Absolute homogeneity.
        let t: f64 = rng.random_range(-4.0..4.0);
        let scaled: Vec<f64> = x.iter().map(|v| t * v).collect();
        let lhs = norm.eval(&scaled);
        let rhs = t.abs() * norm.eval(&x);
        assert!(
            (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0),
            "homogeneity failed in case {case}: {lhs} vs {rhs}"
        );
    }

    // Richardson consistency of the numerical log-likelihood gradient.
    let truth = empirical_example_params();
    let data = simulate_from_params(&truth, 800, 500, 25.0, 0xACC8).unwrap();
    for point in 0..20 {
        let nu = rng.random_range(0.05..0.5);
        let gamma = rng.random_range(0.05..0.5);
        let a = rng.random_range(20.0..30.0);
        let omega = rng.random_range(0.5..6.0);
        let scale = rng.random_range(0.3..0.9);
        let alpha = [0.45 * scale, 0.35 * scale, 0.2 * scale];
        let c = rng.random_range(2.0..6.0);
        let d = rng.random_range(1.5..4.0);
        let params = ararch::estim::ResolvedParams {
            mean: ResolvedMean::UnitRootLogistic { nu, gamma, a },
            omega,
            alpha: alpha.to_vec(),
            gate: ararch::estim::ResolvedGate::Logistic { gamma, a },
            innovation: InnovationSpec::SkewT { c, d },
        };
        let theta = [nu, gamma, a, omega, alpha[0], alpha[1], alpha[2], c, d];
        let obj = |t: &[f64]| {
            let p = ararch::estim::ResolvedParams {
                mean: ResolvedMean::UnitRootLogistic {
                    nu: t[0],
                    gamma: t[1],
                    a: t[2],
                },
                omega: t[3],
                alpha: vec![t[4], t[5], t[6]],
                gate: ararch::estim::ResolvedGate::Logistic {
                    gamma: t[1],
                    a: t[2],
                },
                innovation: InnovationSpec::SkewT { c: t[7], d: t[8] },
            };
            ararch::estim::conditional_loglik(&p, &data).unwrap()
        };
        assert!(obj(&theta) > ararch::estim::LOGLIK_SENTINEL / 2.0);
        let _ = &params;
        let g1 = ararch::optim::numerical_gradient(obj, &theta, 1e-4);
        let g2 = ararch::optim::numerical_gradient(obj, &theta, 5e-5);
        let norm = g1.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        for (i, (a1, b1)) in g1.iter().zip(&g2).enumerate() {
            assert!(
                (a1 - b1).abs() / norm < 1e-5,
                "gradient Richardson check failed at point {point}, coord {i}: {a1} vs {b1}"
            );
        }
    }

    // Seed determinism: byte-identical CSV exports.
    let model = empirical_model();
    let a = simulate(&model, 2000, 500, None, 0xACC8).unwrap();
    let b = simulate(&model, 2000, 500, None, 0xACC8).unwrap();
    assert_eq!(a.to_csv().into_bytes(), b.to_csv().into_bytes());

    println!(
        "ACCEPTANCE 8 (property suites): PASS — 1000 norm cases, 20 gradient points, byte-identical simulation"
    );
}
