//! End-to-end tests of the CLI: exit codes, artifact shapes, determinism,
//! and the simulate -> fit round trip.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ararch")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("ARARCH_SEED")
        .env_remove("ARARCH_OUT")
        .output()
        .expect("binary runs")
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn shrink_config(dir: &Path) -> String {
    let path = dir.join("model.conf");
    write(
        &path,
        "model.mean = bounded_shrink\n\
         model.mean.r = 1.0\n\
         model.mean.rho = 1.0\n\
         model.mean.threshold = 1.0\n\
         model.arch.omega = 1.0\n\
         model.arch.alpha = 0.3\n\
         model.innovation = normal\n\
         sim.n = 600\n\
         sim.burn_in = 200\n",
    );
    path.display().to_string()
}

#[test]
fn simulate_is_deterministic_and_round_trips_into_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = shrink_config(tmp.path());

    let out1 = tmp.path().join("sim1");
    let out2 = tmp.path().join("sim2");
    for out in [&out1, &out2] {
        let r = run(&[
            "--command",
            "simulate",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
        ]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let a = std::fs::read(out1.join("path.csv")).unwrap();
    let b = std::fs::read(out2.join("path.csv")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical path CSVs");

    // Round trip: fit directly on the emitted CSV.
    let fit_conf = tmp.path().join("fit.conf");
    write(
        &fit_conf,
        "fit.q = 1\nfit.mean = zero\nfit.gate = one\nfit.innovation = normal\n",
    );
    let fit_out = tmp.path().join("fit");
    let r = run(&[
        "--command",
        "fit",
        "--config",
        fit_conf.to_str().unwrap(),
        "--input",
        out1.join("path.csv").to_str().unwrap(),
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    // Artifacts parse.
    let fit_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fit_out.join("fit.json")).unwrap())
            .unwrap();
    assert!(fit_json["loglik"].is_number());
    for file in [
        "residuals.csv",
        "acf_residuals.csv",
        "acf_squared_residuals.csv",
        "histogram.csv",
        "qq.csv",
        "run_metadata.json",
    ] {
        assert!(fit_out.join(file).exists(), "missing {file}");
    }
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(fit_out.join("run_metadata.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["command"], "fit");
}

#[test]
fn missing_config_key_gives_config_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.conf");
    write(&path, "model.mean = bounded_shrink\n");
    let r = run(&[
        "--command",
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(10));
}

#[test]
fn data_errors_give_data_exit_code() {
    let tmp = tempfile::tempdir().unwrap();

    // Header-only file: insufficient data.
    let empty = tmp.path().join("empty.csv");
    write(&empty, "date,value\n");
    let r = run(&[
        "--command",
        "diagnose",
        "--input",
        empty.to_str().unwrap(),
        "--out",
        tmp.path().join("o1").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(20));

    // Unparseable row: error mentions the line number.
    let bad = tmp.path().join("bad.csv");
    write(&bad, "date,value\n2020-01-01,1.0\n2020-01-02,oops\n");
    let r = run(&[
        "--command",
        "diagnose",
        "--input",
        bad.to_str().unwrap(),
        "--out",
        tmp.path().join("o2").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(20));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains(":3:"), "stderr: {stderr}");
}

#[test]
fn missing_value_rows_are_dropped_with_count() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("fred.csv");
    let mut body = String::from("date,value\n");
    for i in 0..200 {
        if i % 50 == 7 {
            body.push_str(&format!("2020-01-{:02},.\n", (i % 28) + 1));
        } else {
            body.push_str(&format!("2020-01-{:02},{}\n", (i % 28) + 1, 20.0 + (i % 9) as f64));
        }
    }
    write(&csv, &body);
    let r = run(&[
        "--command",
        "diagnose",
        "--input",
        csv.to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("dropped 4 rows"), "stderr: {stderr}");
}

#[test]
fn forced_non_convergence_still_writes_partial_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let config = shrink_config(tmp.path());
    let sim_out = tmp.path().join("sim");
    assert!(run(&[
        "--command",
        "simulate",
        "--config",
        &config,
        "--out",
        sim_out.to_str().unwrap(),
        "--seed",
        "1",
    ])
    .status
    .success());

    let fit_conf = tmp.path().join("fit.conf");
    write(
        &fit_conf,
        "fit.q = 1\nfit.mean = zero\nfit.gate = one\nfit.innovation = normal\n\
         fit.nm_max_iter = 1\nfit.bfgs_max_iter = 1\n",
    );
    let fit_out = tmp.path().join("fit");
    let r = run(&[
        "--command",
        "fit",
        "--config",
        fit_conf.to_str().unwrap(),
        "--input",
        sim_out.join("path.csv").to_str().unwrap(),
        "--out",
        fit_out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(40));
    assert!(fit_out.join("fit.json").exists());
}

#[test]
fn failed_stability_check_gives_numeric_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("unstable.conf");
    // Unit root in the AR polynomial: the root-condition gate fails.
    write(
        &conf,
        "model.pi = 1.0\n\
         model.mean = bounded_shrink\n\
         model.mean.r = 1.0\n\
         model.mean.rho = 1.0\n\
         model.mean.threshold = 1.0\n\
         model.arch.omega = 1.0\n\
         model.arch.alpha = 0.3\n\
         model.innovation = normal\n\
         check.s1 = 0.001\n\
         check.draws = 10000\n",
    );
    let out = tmp.path().join("out");
    let r = run(&[
        "--command",
        "check",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(30));
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.join("ergodicity_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["verdict"], "failed:Assumption2(i)");
}

#[test]
fn check_writes_drift_artifacts_on_success() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("stable.conf");
    write(
        &conf,
        "model.mean = bounded_shrink\n\
         model.mean.r = 1.0\n\
         model.mean.rho = 1.0\n\
         model.mean.threshold = 1.0\n\
         model.arch.omega = 1.0\n\
         model.arch.alpha = 0.2\n\
         model.innovation = normal\n\
         check.s2 = 1.0\n\
         check.draws = 20000\n\
         check.z1_max = 2000\n",
    );
    let out = tmp.path().join("out");
    let r = run(&[
        "--command",
        "check",
        "--config",
        conf.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "5",
    ]);
    assert!(
        r.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert!(out.join("drift_report.json").exists());
    let margins = std::fs::read_to_string(out.join("margins.csv")).unwrap();
    assert!(margins.starts_with("index,z1,v,estimate,std_error,margin"));
}

#[test]
fn env_overrides_take_effect() {
    let tmp = tempfile::tempdir().unwrap();
    let config = shrink_config(tmp.path());
    let out_flag = tmp.path().join("flag_out");
    let out_env = tmp.path().join("env_out");
    let r = Command::new(bin())
        .args([
            "--command",
            "simulate",
            "--config",
            &config,
            "--out",
            out_flag.to_str().unwrap(),
            "--seed",
            "7",
        ])
        .env("ARARCH_OUT", out_env.to_str().unwrap())
        .env("ARARCH_SEED", "7")
        .output()
        .unwrap();
    assert!(r.status.success());
    assert!(out_env.join("path.csv").exists());
    assert!(!out_flag.join("path.csv").exists());
}
