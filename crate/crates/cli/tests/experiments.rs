use std::process::Command;

use approx::assert_relative_eq;
use zfhgm::config::{Scenario, WinnerConfig};
use zfhgm_cli::*;

fn small_cfg(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.mc.n_samples = 4000;
    cfg.mc.batch_size = 1000;
    cfg.validation.mc_samples = 2000;
    cfg.validation.lemma_samples = 4000;
    cfg.out_dir = dir.to_path_buf();
    cfg
}

fn pool(n: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .unwrap()
}

#[test]
fn outage_csv_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.engines = vec![Engine::Series, Engine::Mc, Engine::Rayleigh];
    cfg.sweep.values = vec![10.0, 15.0, 20.0];
    let mut outputs = Vec::new();
    for threads in [1, 3, 1] {
        let (rows, t) = pool(threads).install(|| run_outage_sweep(&cfg)).unwrap();
        let path = write_outputs(&cfg, "run", &rows, &t).unwrap();
        outputs.push(std::fs::read(path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    assert!(dir.path().join("run.config.json").exists());
    assert!(dir.path().join("run.timing.json").exists());
}

#[test]
fn rows_follow_grid_and_engine_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.engines = vec![Engine::Rayleigh, Engine::GammaApprox];
    cfg.sweep.values = vec![5.0, 12.0];
    let (rows, _) = run_outage_sweep(&cfg).unwrap();
    let keys: Vec<_> = rows
        .iter()
        .map(|r| (r.axis_value, r.engine.as_str()))
        .collect();
    assert_eq!(
        keys,
        vec![
            (5.0, "rayleigh"),
            (5.0, "gamma-approx"),
            (12.0, "rayleigh"),
            (12.0, "gamma-approx")
        ]
    );
    assert!(rows[0].value.unwrap() > rows[2].value.unwrap());
}

#[test]
fn series_and_hgm_agree_at_zero_k() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.scenario.k_db = 0.0;
    cfg.engines = vec![Engine::Series, Engine::Hgm];
    cfg.sweep.values = vec![5.0, 15.0, 25.0];
    let (rows, _) = run_outage_sweep(&cfg).unwrap();
    for pair in rows.chunks(2) {
        assert!(pair[0].converged.unwrap());
        assert_relative_eq!(
            pair[0].value.unwrap(),
            pair[1].value.unwrap(),
            max_relative = 1e-6
        );
    }
}

#[test]
fn per_point_failures_stay_in_their_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.scenario.n_arrays = 2;
    cfg.engines = vec![Engine::Series, Engine::Rayleigh];
    cfg.sweep.values = vec![11.0];
    cfg.solver.max_order = Some(1);
    let (rows, _) = run_outage_sweep(&cfg).unwrap();
    assert_eq!(rows[0].converged, Some(false));
    assert!(rows[1].value.is_some());
}

#[test]
fn config_rejects_bad_grids_and_engines() {
    let mut cfg = ExperimentConfig::default();
    cfg.sweep.values = vec![10.0, 5.0];
    assert!(cfg.validate().is_err());
    cfg.sweep.values = vec![];
    assert!(cfg.validate().is_err());
    cfg.sweep.values = vec![1.0];
    cfg.engines.clear();
    assert!(cfg.validate().is_err());
    assert!(parse_engines("series,warp").is_err());
    assert_eq!(
        parse_engines("hgm, mc").unwrap(),
        vec![Engine::Hgm, Engine::Mc]
    );
}

#[test]
fn config_loads_from_toml() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        "engines = [\"series\", \"gamma-approx\"]\nseed = 9\n[scenario]\nk_db = 3.0\nas_deg = 20.0\n[sweep]\naxis = \"as\"\nvalues = [10.0, 20.0]\n[mc]\nn_samples = 500\n",
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.sweep.axis, Axis::As);
    assert_eq!(cfg.mc.n_samples, 500);
    assert_eq!(cfg.scenario.n_rx, 6);
    cfg.validate().unwrap();
}

#[test]
fn validation_suite_passes_and_catches_x1_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    let report = run_validation_suite(&cfg);
    assert!(report.passed, "{report:#?}");
    cfg.validation.inject_x1_sign_error = true;
    let report = run_validation_suite(&cfg);
    let failed: Vec<_> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    assert_eq!(failed, vec!["x_proportionality"]);
}

fn averaged_cfg(dir: &std::path::Path, spread: bool) -> ExperimentConfig {
    let mut cfg = small_cfg(dir);
    cfg.scenario.winner = Some(Scenario::A1);
    cfg.scenario.winner_samples = 30;
    cfg.sweep.values = vec![20.0];
    let mut w = WinnerConfig::placeholder();
    if !spread {
        for law in w.scenarios.values_mut() {
            *law = law.degenerate();
        }
    }
    cfg.winner = Some(w);
    cfg
}

#[test]
fn zero_spread_average_equals_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = averaged_cfg(dir.path(), false);
    let avg = run_averaged_outage(&cfg).unwrap();
    let mut fixed = cfg.clone();
    fixed.engines = vec![Engine::Hgm, Engine::Rayleigh];
    let (rows, _) = run_outage_sweep(&fixed).unwrap();
    assert_eq!(avg[0].failures, 0);
    assert_eq!(avg[0].hgm_failures, 0);
    assert_eq!(avg[0].samples, 30);
    assert_relative_eq!(
        avg[0].rician_hgm,
        rows[0].value.unwrap(),
        max_relative = 1e-12
    );
    assert_relative_eq!(
        avg[0].rayleigh,
        rows[1].value.unwrap(),
        max_relative = 1e-12
    );
}

#[test]
fn lognormal_average_lies_above_fixed_and_above_rayleigh() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = averaged_cfg(dir.path(), true);
    let avg = run_averaged_outage(&cfg).unwrap();
    let mut fixed = cfg.clone();
    fixed.engines = vec![Engine::Hgm];
    let (rows, _) = run_outage_sweep(&fixed).unwrap();
    assert!(avg[0].rician_hgm > rows[0].value.unwrap());
    assert!(avg[0].rayleigh < avg[0].rician_hgm);
}

#[test]
fn averaged_requires_scenario() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        run_averaged_outage(&small_cfg(dir.path())),
        Err(CliError::Config(_))
    ));
}

#[test]
fn capacity_rows_carry_ml_only_for_mc() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_cfg(dir.path());
    cfg.sweep = Sweep {
        axis: Axis::K,
        values: vec![0.0],
    };
    cfg.engines = vec![
        Engine::Series,
        Engine::Mc,
        Engine::GammaApprox,
        Engine::Rayleigh,
    ];
    let (rows, _) = run_capacity_sweep(&cfg).unwrap();
    assert!(rows.iter().all(|r| r.error.is_none()), "{rows:#?}");
    let series = rows[0].zf_sum_rate.unwrap();
    let mc = &rows[1];
    assert!((mc.zf_sum_rate.unwrap() - series).abs() < 4.0 * mc.zf_se.unwrap());
    assert!(mc.ml_sum_rate.unwrap() > mc.zf_sum_rate.unwrap());
    assert!(rows[0].ml_sum_rate.is_none());
    assert!(rows[2].zf_sum_rate.unwrap() > 0.0 && rows[3].zf_sum_rate.unwrap() > 0.0);
}

#[test]
fn operator_json_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_cfg(dir.path());
    let kind = parse_measure("outage", cfg.tau()).unwrap();
    let op = guess_ode(&cfg, &kind, 15.0).unwrap();
    let prov = op.provenance.unwrap();
    assert_eq!(prov.measure, Some(kind));
    assert!(prov.params.is_some() && prov.fit_count > 0);
    assert!(parse_measure("mgf", 1.0).is_err());
    assert!(parse_measure("pdf:2.5", 1.0).is_ok());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zfhgm"))
}

#[test]
fn binary_validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, mutate: bool| {
        let path = dir.path().join(name);
        std::fs::write(
            &path,
            format!("[validation]\nmc_samples = 1000\nlemma_samples = 3000\ninject_x1_sign_error = {mutate}\n"),
        )
        .unwrap();
        path
    };
    let ok = bin()
        .args(["validate", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(write("ok.toml", false))
        .output()
        .unwrap();
    assert!(
        ok.status.success(),
        "{}",
        String::from_utf8_lossy(&ok.stdout)
    );
    assert!(dir.path().join("validation.json").exists());
    let bad = bin()
        .args(["validate", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(write("bad.toml", true))
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL x_proportionality"));
}

#[test]
fn binary_outage_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "outage-sweep",
            "--engines",
            "series,rayleigh",
            "--seed",
            "4",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("outage_sweep.csv")).unwrap();
    assert!(text.starts_with("axis,axis_value,engine,value,converged,se,ci_low,ci_high,error"));
    assert_eq!(text.lines().count(), 1 + 5 * 2);
    let cfg: ExperimentConfig = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("outage_sweep.config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(cfg.seed, 4);
    let bad = bin()
        .args(["outage-sweep", "--engines", "nope"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn hgm_failures_are_counted_and_strict_mode_aborts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = averaged_cfg(dir.path(), true);
    cfg.seed = 1;
    let rows = run_averaged_outage(&cfg).unwrap();
    assert!(rows[0].hgm_failures > 0);
    assert_eq!(rows[0].series_fallbacks, rows[0].hgm_failures);
    assert_eq!(rows[0].failures, 0);
    cfg.averaged_series_fallback = false;
    assert!(matches!(
        run_averaged_outage(&cfg),
        Err(CliError::TooManyFailures { .. })
    ));
}
