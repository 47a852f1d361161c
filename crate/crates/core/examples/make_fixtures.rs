//! Regenerates the scenario fixtures and golden CSVs under `tests/fixtures`.
//!
//! `cargo run --example make_fixtures -- crates/core/tests/fixtures`

use std::path::Path;

use fermiclose::cli::{
    config_to_json, matrix_to_json, run_scenario, validate, write_trajectory_csv, DynamicsConfig, EffectConfig,
    EnvironmentConfig, InitialMomentsConfig, ScenarioConfig, TransformConfig, SCHEMA_VERSION,
};
use fermiclose::fock_oracle::{build_rep, environment_density, gaussian_density, implement_unitary, liouvillian, master_equation_evolve, moments};
use fermiclose::environment::{gamma_fock, gamma_vacuum};
use fermiclose::linalg::{CMat, C64};
use fermiclose::multiindex::{MonomialKey, MultiIndex};
use fermiclose::secondquant::check_semigroup_failure;
use fermiclose::sampling::{random_correlation, random_dilated_unitary, random_dissipative, random_hermitian, random_unitary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn emit(dir: &Path, name: &str, cfg: &ScenarioConfig) -> fermiclose::Result<()> {
    std::fs::write(dir.join(format!("{name}.json")), config_to_json(cfg))?;
    let scn = validate(cfg.clone())?;
    let tmp = dir.join(format!(".{name}.tmp"));
    let out = run_scenario(&scn, &tmp)?;
    let file = out.file_name().unwrap().to_string_lossy().to_string();
    std::fs::rename(&out, dir.join(format!("{name}.{file}")))?;
    std::fs::remove_dir_all(&tmp)?;
    Ok(())
}

fn main() -> fermiclose::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/fixtures".into());
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let w = random_dilated_unitary(&mut rng, 3);
    let a = CMat::from_fn(3, 3, |i, j| w[(i, j)]);
    let b = CMat::from_fn(3, 3, |i, j| w[(i, j + 3)]);
    let channel = ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        modes: 3,
        order_cap: 2,
        transform: TransformConfig::Isometry { a: matrix_to_json(&a), b: matrix_to_json(&b) },
        environment: EnvironmentConfig::Gaussian { c: matrix_to_json(&random_correlation(&mut rng, 3)) },
        dynamics: DynamicsConfig::ChannelStep,
        initial_moments: InitialMomentsConfig::FockOccupation { occupied: vec![1, 3] },
    };
    emit(dir, "channel_step_m3", &channel)?;

    let w = random_unitary(&mut rng, 4);
    let h = random_hermitian(&mut rng, 2);
    let c0 = random_correlation(&mut rng, 2);
    let t_grid = vec![0.1, 0.5, 1.0];
    let gksl = ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        modes: 2,
        order_cap: 4,
        transform: TransformConfig::Unitary { w: matrix_to_json(&w) },
        environment: EnvironmentConfig::Fock { occupied: vec![1] },
        dynamics: DynamicsConfig::Gksl { t_grid: t_grid.clone(), hamiltonian: Some(matrix_to_json(&h)) },
        initial_moments: InitialMomentsConfig::Gaussian { c0: matrix_to_json(&c0) },
    };
    emit(dir, "gksl_m2", &gksl)?;

    // Dense master-equation reference for the same scenario.
    let scn = validate(gksl)?;
    let rep = build_rep(2)?;
    let u = implement_unitary(&w)?;
    let sup = liouvillian(&u, &environment_density(scn.spec.gamma())?, Some(&h))?;
    let rho0 = gaussian_density(&c0, &rep)?;
    let keys = fermiclose::channel::basis_keys(2, 4)?;
    let rows = t_grid
        .iter()
        .map(|&t| Ok(moments(&rep, &master_equation_evolve(&sup, &rho0, t)?, &keys)))
        .collect::<fermiclose::Result<Vec<Vec<C64>>>>()?;
    write_trajectory_csv(&dir.join("gksl_m2.oracle.csv"), &keys, &t_grid, &rows)?;

    let post = ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        modes: 2,
        order_cap: 2,
        transform: TransformConfig::Unitary { w: matrix_to_json(&random_unitary(&mut rng, 4)) },
        environment: EnvironmentConfig::Uniform { particles: 1 },
        dynamics: DynamicsConfig::Postselect { effect: EffectConfig::Parity { even: true } },
        initial_moments: InitialMomentsConfig::Gaussian { c0: matrix_to_json(&random_correlation(&mut rng, 2)) },
    };
    emit(dir, "postselect_m2", &post)?;

    let semigroup = ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        modes: 2,
        order_cap: 2,
        transform: TransformConfig::Semigroup { h_eff: matrix_to_json(&random_dissipative(&mut rng, 2)), t: 0.7 },
        environment: EnvironmentConfig::Vacuum,
        dynamics: DynamicsConfig::ChannelStep,
        initial_moments: InitialMomentsConfig::FockOccupation { occupied: vec![2] },
    };
    emit(dir, "semigroup_m2", &semigroup)?;

    witness_search(dir)
}

/// Random search for a mixed-monomial probe whose channel family
/// `t ↦ Φ_{e^{iHt}}` fails the semigroup law, once with the vacuum and once
/// with a one-particle Fock environment.
fn witness_search(dir: &Path) -> fermiclose::Result<()> {
    let (m, t1, t2, seeds) = (2usize, 0.3, 0.5, 200u64);
    let probe: MonomialKey = "1|1".parse()?;
    let vacuum = gamma_vacuum(m)?;
    let fock = gamma_fock(m, MultiIndex::from_labels(&[1])?)?;
    let mut best_vacuum = (0u64, 0.0f64);
    let mut fock_witness = None;
    for seed in 0..seeds {
        let h = random_dissipative(&mut ChaCha8Rng::seed_from_u64(seed), m);
        let dv = check_semigroup_failure(&h, &vacuum, t1, t2, probe)?.max_deviation;
        if dv > best_vacuum.1 {
            best_vacuum = (seed, dv);
        }
        let df = check_semigroup_failure(&h, &fock, t1, t2, probe)?.max_deviation;
        if fock_witness.is_none() && df > 1e-6 {
            fock_witness = Some((seed, df));
        }
    }
    let (fs, fd) = fock_witness.expect("a one-particle environment breaks the semigroup law");
    let report = serde_json::json!({
        "modes": m,
        "t1": t1,
        "t2": t2,
        "probe": probe.to_string(),
        "generator": "random_dissipative(ChaCha8Rng::seed_from_u64(seed), modes)",
        "vacuum": { "searched_seeds": seeds, "seed": best_vacuum.0, "max_deviation": best_vacuum.1 },
        "fock_1": { "seed": fs, "max_deviation": fd },
    });
    std::fs::write(dir.join("semigroup_witness.json"), serde_json::to_string_pretty(&report).unwrap() + "\n")?;
    Ok(())
}
