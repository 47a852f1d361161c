use std::path::{Path, PathBuf};
use std::process::Command;

use fermiclose::cli::{
    config_to_json, load_config, matrix_to_json, parse_config, run_scenario, validate, verify, EnvironmentConfig,
    InitialMomentsConfig,
};
use fermiclose::linalg::{identity, scale, C64};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fermiclose"))
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut rows = vec![header];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(String::from).collect());
    }
    rows
}

#[test]
fn fixtures_reproduce_golden_files_byte_for_byte() {
    for (name, output) in [
        ("channel_step_m3", "moments.csv"),
        ("gksl_m2", "trajectory.csv"),
        ("postselect_m2", "postselect.csv"),
        ("semigroup_m2", "moments.csv"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let status = bin()
            .args(["run", "--config"])
            .arg(fixtures().join(format!("{name}.json")))
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap();
        assert!(status.status.success(), "{name}: {}", String::from_utf8_lossy(&status.stderr));
        let ours = std::fs::read(dir.path().join(output)).unwrap();
        let golden = std::fs::read(fixtures().join(format!("{name}.{output}"))).unwrap();
        assert!(ours == golden, "{name} differs from its golden file");
    }
}

#[test]
fn gksl_fixture_matches_master_equation_golden() {
    let ours = read_csv(&fixtures().join("gksl_m2.trajectory.csv"));
    let oracle = read_csv(&fixtures().join("gksl_m2.oracle.csv"));
    assert_eq!(ours[0], oracle[0]);
    assert_eq!(ours.len(), oracle.len());
    for (a, b) in ours[1..].iter().zip(&oracle[1..]) {
        for (x, y) in a.iter().zip(b) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-9);
        }
    }
}

#[test]
fn fixture_configs_round_trip() {
    for name in ["channel_step_m3", "gksl_m2", "postselect_m2", "semigroup_m2"] {
        let text = std::fs::read_to_string(fixtures().join(format!("{name}.json"))).unwrap();
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&config_to_json(&cfg)).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(config_to_json(&again), text);
    }
}

#[test]
fn verify_passes_on_fixture_and_flags_faults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixtures().join("gksl_m2.json");
    let out = bin().arg("verify").arg("--config").arg(&cfg).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    for c in report["checks"].as_array().unwrap() {
        assert!(c["max_deviation"].as_f64().unwrap() < 1e-8, "{c}");
    }

    let out = bin()
        .args(["verify", "--perturb-a", "1e-3", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("verify.json")).unwrap()).unwrap();
    let even = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "even_action").unwrap();
    assert_eq!(even["passed"], false);
    assert!(even["max_deviation"].as_f64().unwrap() > 1e-6);

    let scn = load_config(&fixtures().join("channel_step_m3.json")).unwrap();
    let mut big = scn.config.clone();
    big.modes = 4;
    big.transform = fermiclose::cli::TransformConfig::Isometry {
        a: matrix_to_json(&identity(4)),
        b: matrix_to_json(&fermiclose::linalg::CMat::zeros(4, 4)),
    };
    big.environment = EnvironmentConfig::Vacuum;
    let path = dir.path().join("m4.json");
    std::fs::write(&path, config_to_json(&big)).unwrap();
    let out = bin().arg("verify").arg("--config").arg(&path).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(verify(&validate(big).unwrap(), 0, 1e-6, 0.0).is_err());
}

#[test]
fn runs_are_deterministic() {
    let scn = load_config(&fixtures().join("postselect_m2.json")).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = run_scenario(&scn, a.path()).unwrap();
    let pb = run_scenario(&scn, b.path()).unwrap();
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn uniform_and_matching_gaussian_environments_agree_to_second_order() {
    let mut cfg = load_config(&fixtures().join("channel_step_m3.json")).unwrap().config;
    let (m, n) = (3usize, 2usize);
    cfg.order_cap = 2;
    cfg.environment = EnvironmentConfig::Uniform { particles: n };
    let uniform = fermiclose::cli::channel_step_moments(&validate(cfg.clone()).unwrap()).unwrap();
    let c = scale(&identity(m), C64::new(n as f64 / m as f64, 0.0));
    cfg.environment = EnvironmentConfig::Gaussian { c: matrix_to_json(&c) };
    let gaussian = fermiclose::cli::channel_step_moments(&validate(cfg.clone()).unwrap()).unwrap();
    assert_eq!(uniform.0, gaussian.0);
    for (a, b) in uniform.1.iter().zip(&gaussian.1) {
        assert!((a - b).norm() < 1e-12);
    }
    // the two states differ at fourth order
    cfg.order_cap = 4;
    cfg.initial_moments = InitialMomentsConfig::FockOccupation { occupied: vec![1, 2] };
    cfg.environment = EnvironmentConfig::Uniform { particles: n };
    let u4 = fermiclose::cli::channel_step_moments(&validate(cfg.clone()).unwrap()).unwrap();
    cfg.environment = EnvironmentConfig::Gaussian { c: matrix_to_json(&c) };
    let g4 = fermiclose::cli::channel_step_moments(&validate(cfg).unwrap()).unwrap();
    let diff = u4.1.iter().zip(&g4.1).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff > 1e-6);
}

#[test]
fn identity_channel_leaves_moments_unchanged() {
    let mut cfg = load_config(&fixtures().join("channel_step_m3.json")).unwrap().config;
    cfg.transform = fermiclose::cli::TransformConfig::Isometry {
        a: matrix_to_json(&identity(3)),
        b: matrix_to_json(&fermiclose::linalg::CMat::zeros(3, 3)),
    };
    let scn = validate(cfg).unwrap();
    let (keys, out) = fermiclose::cli::channel_step_moments(&scn).unwrap();
    assert_eq!(out, scn.initial.vector(&keys).unwrap());
}

#[test]
fn other_subcommands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let run = |args: &[&str], cfg: &str| {
        bin()
            .args(args)
            .arg("--config")
            .arg(fixtures().join(cfg))
            .arg("--out-dir")
            .arg(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run(&["transfer-matrix"], "channel_step_m3.json"), Some(0));
    let t = read_csv(&dir.path().join("transfer_matrix.csv"));
    assert_eq!(t.len(), 1 + 22);
    assert_eq!(t[0].len(), 1 + 2 * 22);
    assert_eq!(run(&["postselect"], "postselect_m2.json"), Some(0));
    assert_eq!(run(&["postselect"], "gksl_m2.json"), Some(1));
    assert_eq!(run(&["secondquant", "--probe", "1|2"], "semigroup_m2.json"), Some(0));
    let sq: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("secondquant.json")).unwrap()).unwrap();
    assert!(sq["exterior_power"].as_array().unwrap().iter().all(|c| c["max_deviation"].as_f64().unwrap() < 1e-9));
    assert_eq!(run(&["secondquant"], "gksl_m2.json"), Some(1));
    let out = bin().args(["benchmark", "--m-list", "2,3", "--k", "2", "--out-dir"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("benchmark.json")).unwrap()).unwrap();
    assert_eq!(b["runs"][0]["dimension"], 11);
    assert!(b["runs"][1]["oracle_seconds"].is_number());
}

#[test]
fn bad_configs_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("channel_step_m3.json")).unwrap();
    let broken = text.replacen("\"modes\": 3", "\"modes\": 3,,", 1);
    let path = dir.path().join("broken.json");
    std::fs::write(&path, broken).unwrap();
    let out = bin().arg("run").arg("--config").arg(&path).arg("--out-dir").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}
