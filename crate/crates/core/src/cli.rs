//! Scenario files, runs, oracle verification, benchmarks and the command-line
//! front end.
//!
//! Scenarios are JSON documents with a `schema_version` field; complex
//! numbers are `[re, im]` pairs and matrices are arrays of rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    basis_dimension, basis_keys, dual_action_even, dual_action_general, transfer_matrix, ChannelSpec,
};
use crate::environment::{
    gamma_fock, gamma_from_density, gamma_gaussian, gamma_uniform, gamma_vacuum, CorrelationTensor,
};
use crate::error::{Error, Result};
use crate::fock_oracle::{
    build_rep, dual_apply, environment_density, expand_in_monomials, expand_with_parity, gaussian_density,
    implement_unitary, liouvillian, master_equation_evolve, moments, poly_matrix, postselected_dual,
    MAX_COMBINED_MODES,
};
use crate::gksl::{check_time_grid, moment_ode_system, trajectory};
use crate::linalg::{hermiticity_residual, CMat, C64};
use crate::multiindex::{combinations, enumerate_multiindices, MonomialKey, MultiIndex, MAX_MODES};
use crate::poly::MonomialPoly;
use crate::postselect::{
    conditional_moments, dual_action_postselected, dual_action_postselected_even, expand_effect,
    instrument_sum, EffectExpansion,
};
use crate::sampling::{random_correlation, random_density, random_even_effect};
use crate::secondquant::{check_semigroup_failure, contraction_semigroup, exterior_power};
use crate::format_real;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest mode count for effects given as full parity or vacuum projectors.
pub const MAX_PROJECTOR_MODES: usize = 20;

/// Rows of `[re, im]` pairs.
pub type MatrixJson = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub modes: usize,
    pub order_cap: usize,
    pub transform: TransformConfig,
    pub environment: EnvironmentConfig,
    pub dynamics: DynamicsConfig,
    pub initial_moments: InitialMomentsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    /// `(A | B)` with `AA^† + BB^† = 1`.
    Isometry { a: MatrixJson, b: MatrixJson },
    /// Full `2m × 2m` unitary `W`.
    Unitary { w: MatrixJson },
    /// `A = e^{i H_eff t}`, dilated with `B = (1 - AA^†)^{1/2}`.
    Semigroup { h_eff: MatrixJson, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentConfig {
    Vacuum,
    Gaussian { c: MatrixJson },
    Fock { occupied: Vec<usize> },
    Uniform { particles: usize },
    Explicit { sigma: MatrixJson },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsConfig {
    ChannelStep,
    Gksl {
        t_grid: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hamiltonian: Option<MatrixJson>,
    },
    Postselect { effect: EffectConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EffectConfig {
    Identity,
    /// `f_j^† f_j`.
    Number { mode: usize },
    /// `(1 ± P) / 2`.
    Parity { even: bool },
    /// Projector onto the environment vacuum.
    VacuumProjector,
    Coefficients { terms: Vec<MomentEntry> },
    Matrix { e: MatrixJson },
    Sum { parts: Vec<EffectConfig> },
}

/// One coefficient attached to `f_J^† f_I`; labels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentEntry {
    pub creation: Vec<usize>,
    pub annihilation: Vec<usize>,
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialMomentsConfig {
    FockOccupation { occupied: Vec<usize> },
    Gaussian { c0: MatrixJson },
    /// Every moment a run needs must be listed.
    Explicit { entries: Vec<MomentEntry> },
}

/// Initial state, known through its moments.
#[derive(Debug, Clone)]
pub enum InitialState {
    Tensor(CorrelationTensor),
    Table(BTreeMap<MonomialKey, C64>),
}

impl InitialState {
    pub fn moment(&self, key: &MonomialKey) -> Result<C64> {
        match self {
            InitialState::Tensor(g) => Ok(g.gamma(key.creation, key.annihilation)),
            InitialState::Table(t) => t
                .get(key)
                .copied()
                .ok_or_else(|| Error::Usage(format!("initial_moments: moment [{key}] is not listed"))),
        }
    }

    pub fn vector(&self, keys: &[MonomialKey]) -> Result<Vec<C64>> {
        keys.iter().map(|k| self.moment(k)).collect()
    }
}

#[derive(Debug, Clone)]
pub enum Dynamics {
    ChannelStep,
    Gksl { t_grid: Vec<f64>, hamiltonian: Option<CMat> },
    Postselect { effect: EffectExpansion },
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub spec: ChannelSpec,
    pub isometry_residual: f64,
    pub initial: InitialState,
    pub dynamics: Dynamics,
}

pub fn matrix_from_json(x: &MatrixJson, rows: usize, cols: usize, what: &str) -> Result<CMat> {
    if x.len() != rows || x.iter().any(|r| r.len() != cols) {
        let got_cols = x.first().map_or(0, |r| r.len());
        return Err(Error::Shape(format!("{what} must be {rows}x{cols}, got {}x{got_cols}", x.len())));
    }
    let out = CMat::from_fn(rows, cols, |i, j| C64::new(x[i][j][0], x[i][j][1]));
    crate::linalg::ensure_finite(&out, what)?;
    Ok(out)
}

pub fn matrix_to_json(x: &CMat) -> MatrixJson {
    (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| [x[(i, j)].re, x[(i, j)].im]).collect()).collect()
}

fn labels(l: &[usize], m: usize) -> Result<MultiIndex> {
    let s = MultiIndex::from_labels(l)?;
    s.check_range(m)?;
    Ok(s)
}

fn entry_key(e: &MomentEntry, m: usize) -> Result<MonomialKey> {
    Ok(MonomialKey::new(labels(&e.creation, m)?, labels(&e.annihilation, m)?))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn config_to_json(cfg: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("scenario configs always serialize") + "\n"
}

pub fn load_config(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text).map_err(|e| e.context(&path.display().to_string()))?;
    validate(cfg)
}

fn build_environment(cfg: &EnvironmentConfig, m: usize) -> Result<CorrelationTensor> {
    match cfg {
        EnvironmentConfig::Vacuum => gamma_vacuum(m),
        EnvironmentConfig::Gaussian { c } => gamma_gaussian(&matrix_from_json(c, m, m, "C")?),
        EnvironmentConfig::Fock { occupied } => gamma_fock(m, labels(occupied, m)?),
        EnvironmentConfig::Uniform { particles } => gamma_uniform(m, *particles),
        EnvironmentConfig::Explicit { sigma } => {
            let d = 1usize
                .checked_shl(m as u32)
                .filter(|_| m <= crate::environment::MAX_EXPLICIT_MODES)
                .ok_or_else(|| {
                    Error::Resource(format!(
                        "explicit environments support at most {} modes",
                        crate::environment::MAX_EXPLICIT_MODES
                    ))
                })?;
            gamma_from_density(&matrix_from_json(sigma, d, d, "sigma")?)
        }
    }
}

fn build_spec(cfg: &TransformConfig, m: usize, gamma: CorrelationTensor) -> Result<ChannelSpec> {
    match cfg {
        TransformConfig::Isometry { a, b } => {
            ChannelSpec::new(matrix_from_json(a, m, m, "A")?, matrix_from_json(b, m, m, "B")?, gamma)
        }
        TransformConfig::Unitary { w } => ChannelSpec::with_unitary(matrix_from_json(w, 2 * m, 2 * m, "W")?, gamma),
        TransformConfig::Semigroup { h_eff, t } => {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(Error::Range(format!("t must be finite and nonnegative, got {t}")));
            }
            let a = contraction_semigroup(&matrix_from_json(h_eff, m, m, "H_eff")?, *t)?;
            ChannelSpec::from_contraction(&a, gamma)
        }
    }
}

fn diagonal_effect(m: usize, weight: impl Fn(usize) -> f64) -> Result<EffectExpansion> {
    if m > MAX_PROJECTOR_MODES {
        return Err(Error::Resource(format!("projector effects support at most {MAX_PROJECTOR_MODES} modes")));
    }
    let mut coeffs = BTreeMap::new();
    for r in 0..=m {
        let w = weight(r);
        if w != 0.0 {
            for s in combinations(m, r) {
                coeffs.insert((s, s), C64::new(w, 0.0));
            }
        }
    }
    Ok(EffectExpansion { m, coeffs, psd_checked: true })
}

pub fn build_effect(cfg: &EffectConfig, m: usize) -> Result<EffectExpansion> {
    match cfg {
        EffectConfig::Identity => Ok(EffectExpansion::identity(m)),
        EffectConfig::Number { mode } => {
            let s = labels(&[*mode], m)?;
            let mut coeffs = BTreeMap::new();
            coeffs.insert((s, s), C64::new(1.0, 0.0));
            Ok(EffectExpansion { m, coeffs, psd_checked: true })
        }
        // P = Σ_J (-2)^{|J|} f_J^† f_J
        EffectConfig::Parity { even } => {
            let s = if *even { 1.0 } else { -1.0 };
            diagonal_effect(m, |r| if r == 0 { (1.0 + s) / 2.0 } else { s * (-2f64).powi(r as i32) / 2.0 })
        }
        // Π_j (1 - n_j) = Σ_J (-1)^{|J|} f_J^† f_J
        EffectConfig::VacuumProjector => diagonal_effect(m, |r| if r % 2 == 0 { 1.0 } else { -1.0 }),
        EffectConfig::Coefficients { terms } => {
            let mut coeffs = BTreeMap::new();
            for t in terms {
                let k = entry_key(t, m)?;
                if coeffs.insert((k.creation, k.annihilation), C64::new(t.re, t.im)).is_some() {
                    return Err(Error::Usage(format!("effect coefficient [{k}] is listed twice")));
                }
            }
            EffectExpansion::from_coefficients(m, coeffs)
        }
        EffectConfig::Matrix { e } => {
            if m > crate::fock_oracle::MAX_EXPANSION_MODES {
                return Err(Error::Resource(format!(
                    "matrix effects support at most {} modes",
                    crate::fock_oracle::MAX_EXPANSION_MODES
                )));
            }
            expand_effect(&matrix_from_json(e, 1 << m, 1 << m, "E")?, 1e-9)
        }
        EffectConfig::Sum { parts } => {
            let parts = parts.iter().map(|p| build_effect(p, m)).collect::<Result<Vec<_>>>()?;
            instrument_sum(m, &parts)
        }
    }
}

fn build_initial(cfg: &InitialMomentsConfig, m: usize) -> Result<InitialState> {
    match cfg {
        InitialMomentsConfig::FockOccupation { occupied } => Ok(InitialState::Tensor(gamma_fock(m, labels(occupied, m)?)?)),
        InitialMomentsConfig::Gaussian { c0 } => {
            Ok(InitialState::Tensor(gamma_gaussian(&matrix_from_json(c0, m, m, "C0")?)?))
        }
        InitialMomentsConfig::Explicit { entries } => {
            let mut table = BTreeMap::new();
            for e in entries {
                let k = entry_key(e, m)?;
                if !(e.re.is_finite() && e.im.is_finite()) {
                    return Err(Error::Constraint(format!("moment [{k}] is not finite")));
                }
                if table.insert(k, C64::new(e.re, e.im)).is_some() {
                    return Err(Error::Usage(format!("moment [{k}] is listed twice")));
                }
            }
            Ok(InitialState::Table(table))
        }
    }
}

fn build_dynamics(cfg: &DynamicsConfig, m: usize) -> Result<Dynamics> {
    match cfg {
        DynamicsConfig::ChannelStep => Ok(Dynamics::ChannelStep),
        DynamicsConfig::Gksl { t_grid, hamiltonian } => {
            check_time_grid(t_grid).map_err(|e| e.context("t_grid"))?;
            let hamiltonian = match hamiltonian {
                Some(h) => {
                    let h = matrix_from_json(h, m, m, "hamiltonian")?;
                    let res = hermiticity_residual(&h);
                    if res > 1e-9 {
                        return Err(Error::Constraint(format!("hamiltonian is not Hermitian (residual {res:.3e})")));
                    }
                    Some(h)
                }
                None => None,
            };
            Ok(Dynamics::Gksl { t_grid: t_grid.clone(), hamiltonian })
        }
        DynamicsConfig::Postselect { effect } => {
            Ok(Dynamics::Postselect { effect: build_effect(effect, m).map_err(|e| e.context("effect"))? })
        }
    }
}

/// Checks every invariant of the configuration and builds the channel.
pub fn validate(cfg: ScenarioConfig) -> Result<Scenario> {
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(Error::Usage(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    let m = cfg.modes;
    if m == 0 || m > MAX_MODES {
        return Err(Error::Range(format!("modes must lie in 1..={MAX_MODES}, got {m}")));
    }
    if cfg.order_cap > 2 * m {
        return Err(Error::Range(format!("order_cap {} exceeds 2m = {}", cfg.order_cap, 2 * m)));
    }
    let gamma = build_environment(&cfg.environment, m).map_err(|e| e.context("environment"))?;
    let spec = build_spec(&cfg.transform, m, gamma).map_err(|e| e.context("transform"))?;
    let isometry_residual = spec.isometry_residual();
    let initial = build_initial(&cfg.initial_moments, m).map_err(|e| e.context("initial_moments"))?;
    let dynamics = build_dynamics(&cfg.dynamics, m).map_err(|e| e.context("dynamics"))?;
    Ok(Scenario { config: cfg, spec, isometry_residual, initial, dynamics })
}

pub fn write_moments_csv(path: &Path, keys: &[MonomialKey], values: &[C64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["key", "re", "im"])?;
    for (k, v) in keys.iter().zip(values) {
        w.write_record([k.to_string(), format_real(v.re), format_real(v.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, keys: &[MonomialKey], t_grid: &[f64], rows: &[Vec<C64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    for k in keys {
        header.push(format!("re({k})"));
        header.push(format!("im({k})"));
    }
    w.write_record(&header)?;
    for (t, row) in t_grid.iter().zip(rows) {
        let mut rec = vec![format_real(*t)];
        for v in row {
            rec.push(format_real(v.re));
            rec.push(format_real(v.im));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Moments after one application of the channel.
pub fn channel_step_moments(scn: &Scenario) -> Result<(Vec<MonomialKey>, Vec<C64>)> {
    let t = transfer_matrix(&scn.spec, scn.config.order_cap).map_err(|e| e.context("environment"))?;
    let mu0 = scn.initial.vector(&t.basis)?;
    let out = crate::channel::apply_transfer(&t, &mu0)?;
    Ok((t.basis, out))
}

/// Moments along the configured time grid.
pub fn gksl_trajectory(scn: &Scenario) -> Result<(Vec<MonomialKey>, Vec<f64>, Vec<Vec<C64>>)> {
    let Dynamics::Gksl { t_grid, hamiltonian } = &scn.dynamics else {
        return Err(Error::Usage("dynamics: scenario does not describe GKSL dynamics".into()));
    };
    let sys = moment_ode_system(&scn.spec, scn.config.order_cap, hamiltonian.as_ref())
        .map_err(|e| e.context("environment"))?;
    let mu0 = scn.initial.vector(&sys.basis)?;
    let rows = trajectory(&sys, &mu0, t_grid)?;
    Ok((sys.basis, t_grid.clone(), rows))
}

/// Unnormalized conditional moments for the configured effect.
pub fn postselect_moments(scn: &Scenario) -> Result<(Vec<MonomialKey>, Vec<C64>)> {
    let Dynamics::Postselect { effect } = &scn.dynamics else {
        return Err(Error::Usage("dynamics: scenario does not describe post-selection".into()));
    };
    let w = scn.spec.unitary()?;
    let keys = basis_keys(scn.config.modes, scn.config.order_cap)?;
    let lookup = |k: &MonomialKey| scn.initial.moment(k);
    let out = conditional_moments(&w, scn.spec.gamma(), effect, &keys, &lookup).map_err(|e| match e {
        Error::NotEven(_) => e.context("environment"),
        other => other,
    })?;
    Ok((keys, out))
}

/// Runs the configured dynamics and writes its CSV into `out_dir`.
pub fn run_scenario(scn: &Scenario, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    match &scn.dynamics {
        Dynamics::ChannelStep => {
            let (keys, values) = channel_step_moments(scn)?;
            let path = out_dir.join("moments.csv");
            write_moments_csv(&path, &keys, &values)?;
            Ok(path)
        }
        Dynamics::Gksl { .. } => {
            let (keys, t_grid, rows) = gksl_trajectory(scn)?;
            let path = out_dir.join("trajectory.csv");
            write_trajectory_csv(&path, &keys, &t_grid, &rows)?;
            Ok(path)
        }
        Dynamics::Postselect { .. } => {
            let (keys, values) = postselect_moments(scn)?;
            let path = out_dir.join("postselect.csv");
            write_moments_csv(&path, &keys, &values)?;
            Ok(path)
        }
    }
}

pub fn write_transfer_matrix(scn: &Scenario, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let t = transfer_matrix(&scn.spec, scn.config.order_cap).map_err(|e| e.context("environment"))?;
    let path = out_dir.join("transfer_matrix.csv");
    t.write_csv(fs::File::create(&path)?)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub max_deviation: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub modes: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub perturbation: f64,
    pub isometry_residual: f64,
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

fn all_keys(m: usize) -> Result<Vec<(MultiIndex, MultiIndex)>> {
    let sets = enumerate_multiindices(m, m)?;
    Ok(sets.iter().flat_map(|&j| sets.iter().map(move |&i| (j, i))).collect())
}

fn max_dev(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Compares every formula path with the Fock-space oracle at `m ≤ 3`.
///
/// `perturbation` is added to `A_11` on the formula side only (fault
/// injection); the oracle always uses the configured transform.
pub fn verify(scn: &Scenario, seed: u64, tolerance: f64, perturbation: f64) -> Result<VerifyReport> {
    let m = scn.config.modes;
    if m > MAX_COMBINED_MODES {
        return Err(Error::Resource(format!(
            "verification builds 2^(2m)-dimensional operators and is limited to m <= {MAX_COMBINED_MODES}, got m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rep = build_rep(m)?;
    let gamma = scn.spec.gamma().clone();
    let w = scn.spec.unitary()?;
    let u = implement_unitary(&w)?;
    let sigma = environment_density(&gamma)?;
    let formula = if perturbation != 0.0 {
        let mut a = scn.spec.a().clone();
        a[(0, 0)] += C64::new(perturbation, 0.0);
        scn.spec.with_a_unchecked(a)
    } else {
        scn.spec.clone()
    };
    let keys = all_keys(m)?;
    let mut checks = Vec::new();
    let mut push = |name: &str, dev: f64, note: Option<String>| {
        checks.push(VerifyCheck { name: name.into(), max_deviation: dev, passed: dev <= tolerance, note });
    };

    let mut dev: f64 = 0.0;
    for &(j, i) in &keys {
        let x = rep.monomial_matrix(&MonomialKey::new(j, i))?;
        let oracle = expand_with_parity(&rep, &dual_apply(&u, &sigma, &x)?, ((j.len() + i.len()) % 2) as u8)?;
        dev = dev.max(dual_action_general(&formula, j, i)?.max_abs_diff(&oracle));
    }
    push("general_action", dev, None);

    if gamma.is_even() {
        let mut dev: f64 = 0.0;
        for &(j, i) in &keys {
            let x = rep.monomial_matrix(&MonomialKey::new(j, i))?;
            let oracle = expand_in_monomials(&rep, &dual_apply(&u, &sigma, &x)?)?;
            dev = dev.max(dual_action_even(&formula, j, i)?.max_abs_diff(&oracle));
        }
        push("even_action", dev, None);

        let (t_grid, h) = match &scn.dynamics {
            Dynamics::Gksl { t_grid, hamiltonian } => (t_grid.clone(), hamiltonian.clone()),
            _ => (vec![0.1, 0.5, 1.0], None),
        };
        let sys = moment_ode_system(&formula, 2 * m, h.as_ref())?;
        let sup = liouvillian(&u, &sigma, h.as_ref())?;
        let rho0 = random_density(&mut rng, rep.dim());
        let mu0 = moments(&rep, &rho0, &sys.basis);
        let ours = trajectory(&sys, &mu0, &t_grid)?;
        let mut dev: f64 = 0.0;
        for (t, row) in t_grid.iter().zip(&ours) {
            let oracle = moments(&rep, &master_equation_evolve(&sup, &rho0, *t)?, &sys.basis);
            dev = dev.max(max_dev(row, &oracle));
        }
        push("gksl_trajectory", dev, Some(format!("{} times, random initial state", t_grid.len())));
    } else {
        push("even_action", 0.0, Some("skipped: environment state is not even".into()));
        push("gksl_trajectory", 0.0, Some("skipped: environment state is not even".into()));
    }

    let (effect, e_matrix, source) = match &scn.dynamics {
        Dynamics::Postselect { effect } => {
            let poly: MonomialPoly =
                effect.coeffs.iter().map(|(&(a, b), c)| (MonomialKey::new(a, b), *c)).collect();
            (effect.clone(), poly_matrix(&rep, &poly)?, "configured effect")
        }
        _ => {
            let e = random_even_effect(&mut rng, m);
            (expand_effect(&e, 1e-9)?, e, "random even effect")
        }
    };
    let mut dev: f64 = 0.0;
    for &(j, i) in &keys {
        let x = rep.monomial_matrix(&MonomialKey::new(j, i))?;
        let oracle = expand_with_parity(
            &rep,
            &postselected_dual(&u, &sigma, &e_matrix, &x)?,
            ((j.len() + i.len()) % 2) as u8,
        )?;
        let ours = if gamma.is_even() {
            dual_action_postselected_even(&w, &gamma, &effect, j, i)?
        } else {
            dual_action_postselected(&w, &gamma, &effect, j, i)?
        };
        dev = dev.max(ours.max_abs_diff(&oracle));
    }
    push("postselect", dev, Some(source.into()));

    let c = random_correlation(&mut rng, m);
    let wick_formula = gamma_gaussian(&c)?;
    let wick_oracle = gamma_from_density(&gaussian_density(&c, &rep)?)?;
    let env_oracle = gamma_from_density(&sigma)?;
    let mut dev: f64 = 0.0;
    for &(xi, om) in &keys {
        dev = dev.max((wick_formula.gamma(xi, om) - wick_oracle.gamma(xi, om)).norm());
        dev = dev.max((gamma.gamma(xi, om) - env_oracle.gamma(xi, om)).norm());
    }
    push("correlation_tensor", dev, Some("random Gaussian state and configured environment".into()));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        modes: m,
        seed,
        tolerance,
        perturbation,
        isometry_residual: scn.isometry_residual,
        checks,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRun {
    pub m: usize,
    pub k: usize,
    /// Size of the assembled moment basis.
    pub dimension: usize,
    /// `Σ_{p+q≤k} C(m,p) C(m,q)`.
    pub formula_dimension: u128,
    pub assembly_seconds: f64,
    pub expm_seconds: f64,
    pub total_seconds: f64,
    /// Dense master-equation cost, only for `m ≤ 3`.
    pub oracle_seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub k: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub runs: Vec<BenchmarkRun>,
}

/// Best-of-`repetitions` timings of generator assembly and one propagator
/// evaluation for a random channel with a random Gaussian environment.
pub fn benchmark(m_list: &[usize], k: usize, repetitions: usize, seed: u64) -> Result<BenchmarkReport> {
    if repetitions == 0 {
        return Err(Error::Usage("repetitions must be positive".into()));
    }
    let mut runs = Vec::new();
    for &m in m_list {
        if m == 0 || m > MAX_MODES {
            return Err(Error::Range(format!("modes must lie in 1..={MAX_MODES}, got {m}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ m as u64);
        let w = crate::sampling::random_unitary(&mut rng, 2 * m);
        let spec = ChannelSpec::with_unitary(w.clone(), gamma_gaussian(&random_correlation(&mut rng, m))?)?;
        let (mut best_assembly, mut best_expm) = (f64::INFINITY, f64::INFINITY);
        let mut dimension = 0;
        for _ in 0..repetitions {
            let start = Instant::now();
            let sys = moment_ode_system(&spec, k, None)?;
            let mid = Instant::now();
            let p = sys.propagator(1.0)?;
            let end = Instant::now();
            dimension = p.nrows();
            best_assembly = best_assembly.min((mid - start).as_secs_f64());
            best_expm = best_expm.min((end - mid).as_secs_f64());
        }
        let oracle_seconds = if m <= MAX_COMBINED_MODES {
            let start = Instant::now();
            let u = implement_unitary(&w)?;
            let sup = liouvillian(&u, &environment_density(spec.gamma())?, None)?;
            let rho0 = random_density(&mut rng, 1 << m);
            master_equation_evolve(&sup, &rho0, 1.0)?;
            Some(start.elapsed().as_secs_f64())
        } else {
            None
        };
        runs.push(BenchmarkRun {
            m,
            k,
            dimension,
            formula_dimension: basis_dimension(m, k),
            assembly_seconds: best_assembly,
            expm_seconds: best_expm,
            total_seconds: best_assembly + best_expm,
            oracle_seconds,
        });
    }
    Ok(BenchmarkReport { k, repetitions, seed, runs })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExteriorPowerCheck {
    pub p: usize,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SecondQuantReport {
    pub modes: usize,
    pub t1: f64,
    pub t2: f64,
    pub probe: String,
    /// `∧^p(A_{t1} A_{t2})` against `∧^p A_{t1} ∧^p A_{t2}`.
    pub exterior_power: Vec<ExteriorPowerCheck>,
    /// `Φ^*_{t2} ∘ Φ^*_{t1}` against `Φ^*_{t1+t2}` on the probe.
    pub semigroup_deviation: f64,
}

/// Contraction-semigroup diagnostics for a scenario whose transform is a
/// semigroup `e^{i H_eff t}`.
pub fn secondquant_report(scn: &Scenario, t1: f64, t2: f64, probe: MonomialKey, max_power: usize) -> Result<SecondQuantReport> {
    let TransformConfig::Semigroup { h_eff, .. } = &scn.config.transform else {
        return Err(Error::Usage("transform: the secondquant report needs a semigroup transform".into()));
    };
    let m = scn.config.modes;
    let h = matrix_from_json(h_eff, m, m, "H_eff")?;
    probe.creation.check_range(m)?;
    probe.annihilation.check_range(m)?;
    let a1 = contraction_semigroup(&h, t1)?;
    let a2 = contraction_semigroup(&h, t2)?;
    let prod = &a1 * &a2;
    let mut exterior = Vec::new();
    for p in 0..=max_power.min(m) {
        let lhs = exterior_power(&prod, p)?.data;
        let rhs = exterior_power(&a1, p)?.data * exterior_power(&a2, p)?.data;
        exterior.push(ExteriorPowerCheck { p, max_deviation: crate::linalg::max_abs_diff(&lhs, &rhs) });
    }
    let sg = check_semigroup_failure(&h, scn.spec.gamma(), t1, t2, probe).map_err(|e| e.context("environment"))?;
    Ok(SecondQuantReport {
        modes: m,
        t1,
        t2,
        probe: probe.to_string(),
        exterior_power: exterior,
        semigroup_deviation: sg.max_deviation,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))? + "\n";
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "fermiclose", version, about = "Closed moment dynamics for fermionic channels")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Deviation threshold for `verify`.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured dynamics and write its CSV.
    Run,
    /// Compare every formula path against the Fock-space oracle (m <= 3).
    Verify {
        /// Added to A_11 on the formula side only, to check that faults are caught.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        perturb_a: f64,
    },
    /// Time generator assembly and propagation for growing mode counts.
    Benchmark {
        #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
        m_list: Vec<usize>,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
    },
    /// Exterior-power and semigroup diagnostics for a semigroup transform.
    Secondquant {
        #[arg(long, default_value_t = 0.3)]
        t1: f64,
        #[arg(long, default_value_t = 0.5)]
        t2: f64,
        /// Probe monomial as "J|I", e.g. "1|2".
        #[arg(long, default_value = "1|2")]
        probe: String,
        #[arg(long, default_value_t = 3)]
        max_power: usize,
    },
    /// Dump the moment transfer matrix of the channel.
    TransferMatrix,
    /// Run a post-selection scenario.
    Postselect,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_DEVIATION: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Resource(_) => EXIT_RESOURCE,
        _ => EXIT_VALIDATION,
    }
}

fn scenario(global: &GlobalArgs) -> Result<Scenario> {
    let path = global.config.as_ref().ok_or_else(|| Error::Usage("--config is required".into()))?;
    load_config(path)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let g = &cli.global;
    match &cli.command {
        Command::Run => {
            let path = run_scenario(&scenario(g)?, &g.out_dir)?;
            println!("wrote {}", path.display());
        }
        Command::Postselect => {
            let scn = scenario(g)?;
            if !matches!(scn.dynamics, Dynamics::Postselect { .. }) {
                return Err(Error::Usage("dynamics: the postselect command needs postselect dynamics".into()));
            }
            let path = run_scenario(&scn, &g.out_dir)?;
            println!("wrote {}", path.display());
        }
        Command::TransferMatrix => {
            let path = write_transfer_matrix(&scenario(g)?, &g.out_dir)?;
            println!("wrote {}", path.display());
        }
        Command::Verify { perturb_a } => {
            let scn = scenario(g)?;
            let report = verify(&scn, g.seed, g.tolerance, *perturb_a)?;
            fs::create_dir_all(&g.out_dir)?;
            let path = g.out_dir.join("verify.json");
            write_json(&path, &report)?;
            for c in &report.checks {
                println!("{:<20} {:>12.3e} {}", c.name, c.max_deviation, if c.passed { "ok" } else { "DEVIATION" });
            }
            println!("wrote {}", path.display());
            if !report.passed {
                return Ok(EXIT_DEVIATION);
            }
        }
        Command::Benchmark { m_list, k, repetitions } => {
            let report = benchmark(m_list, *k, *repetitions, g.seed)?;
            fs::create_dir_all(&g.out_dir)?;
            let path = g.out_dir.join("benchmark.json");
            write_json(&path, &report)?;
            for r in &report.runs {
                println!("m={:<4} D={:<8} total {:.3}s", r.m, r.dimension, r.total_seconds);
            }
            println!("wrote {}", path.display());
        }
        Command::Secondquant { t1, t2, probe, max_power } => {
            let scn = scenario(g)?;
            let probe: MonomialKey = probe.parse()?;
            let report = secondquant_report(&scn, *t1, *t2, probe, *max_power)?;
            fs::create_dir_all(&g.out_dir)?;
            let path = g.out_dir.join("secondquant.json");
            write_json(&path, &report)?;
            println!("semigroup deviation {:.3e}", report.semigroup_deviation);
            println!("wrote {}", path.display());
        }
    }
    Ok(EXIT_OK)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_json(m: usize) -> MatrixJson {
        matrix_to_json(&crate::linalg::identity(m))
    }

    fn minimal(m: usize) -> ScenarioConfig {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            modes: m,
            order_cap: 2,
            transform: TransformConfig::Isometry { a: identity_json(m), b: matrix_to_json(&CMat::zeros(m, m)) },
            environment: EnvironmentConfig::Vacuum,
            dynamics: DynamicsConfig::ChannelStep,
            initial_moments: InitialMomentsConfig::FockOccupation { occupied: vec![1] },
        }
    }

    #[test]
    fn minimal_config_round_trips() {
        let cfg = minimal(2);
        let text = config_to_json(&cfg);
        assert_eq!(parse_config(&text).unwrap(), cfg);
        let scn = validate(cfg).unwrap();
        assert_eq!(scn.isometry_residual, 0.0);
        let (keys, out) = channel_step_moments(&scn).unwrap();
        assert_eq!(out, scn.initial.vector(&keys).unwrap());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = minimal(2);
        cfg.transform = TransformConfig::Isometry { a: identity_json(2), b: identity_json(2) };
        let err = validate(cfg).unwrap_err();
        assert!(matches!(err, Error::Constraint(ref s) if s.contains("AA^† + BB^† = 1")), "{err}");
        let mut cfg = minimal(2);
        cfg.schema_version = 7;
        assert!(validate(cfg).is_err());
        let mut cfg = minimal(2);
        cfg.dynamics = DynamicsConfig::Gksl { t_grid: vec![0.0, 1.0, 0.5], hamiltonian: None };
        assert!(matches!(validate(cfg), Err(Error::Range(_))));
        let err = parse_config("{\n  \"schema_version\": 1,\n  \"modes\": \"two\"\n}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_config(&config_to_json(&minimal(2)).replace("\"vacuum\"", "\"thermal\"")).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }

    #[test]
    fn structured_effects_match_dense_expansion() {
        let m = 2;
        let rep = build_rep(m).unwrap();
        let vac = rep.fock_projector(MultiIndex::EMPTY).unwrap();
        let dense = expand_effect(&vac, 1e-9).unwrap();
        assert!(build_effect(&EffectConfig::VacuumProjector, m).unwrap().max_abs_diff(&dense) < 1e-12);
        let p = rep.parity();
        let id = crate::linalg::identity(4);
        for (even, s) in [(true, 1.0), (false, -1.0)] {
            let e = crate::linalg::scale(&(&id + crate::linalg::scale(&p, C64::new(s, 0.0))), C64::new(0.5, 0.0));
            let dense = expand_effect(&e, 1e-9).unwrap();
            assert!(build_effect(&EffectConfig::Parity { even }, m).unwrap().max_abs_diff(&dense) < 1e-12);
        }
        let sum = build_effect(
            &EffectConfig::Sum { parts: vec![EffectConfig::Parity { even: true }, EffectConfig::Parity { even: false }] },
            m,
        )
        .unwrap();
        assert!(sum.max_abs_diff(&EffectExpansion::identity(m)) < 1e-12);
    }

    #[test]
    fn cli_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = minimal(4);
        cfg.order_cap = 2;
        let path = dir.path().join("m4.json");
        fs::write(&path, config_to_json(&cfg)).unwrap();
        let out = dir.path().join("out");
        let args = |cmd: &str| {
            vec![
                "fermiclose".to_string(),
                cmd.to_string(),
                "--config".into(),
                path.display().to_string(),
                "--out-dir".into(),
                out.display().to_string(),
            ]
        };
        assert_eq!(run_cli(args("verify")), EXIT_RESOURCE);
        assert_eq!(run_cli(args("run")), EXIT_OK);
        assert!(out.join("moments.csv").exists());
        assert_eq!(run_cli(args("postselect")), EXIT_VALIDATION);
        assert_eq!(run_cli(["fermiclose", "run"]), EXIT_VALIDATION);
        assert_eq!(run_cli(["fermiclose", "bogus"]), EXIT_VALIDATION);
    }
}
