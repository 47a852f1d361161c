//! Environment correlation tensors `Γ_{Ξ;Ω} = Tr(σ f_Ξ^† f_Ω)`.

use crate::error::{Error, Result};
use crate::fock_oracle::{build_rep, correlation_table};
use crate::linalg::{hermitian_eigenvalues, hermiticity_residual, max_abs_diff, CMat, C64};
use crate::multiindex::{binomial, MinorScratch, MultiIndex, MAX_MODES};

/// Largest mode count for environments given by an explicit density matrix.
pub const MAX_EXPLICIT_MODES: usize = 6;
/// Tolerance used to measure evenness and gauge invariance of explicit states.
pub const SYMMETRY_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone)]
pub enum EnvironmentKind {
    Vacuum,
    /// Gauge-invariant Gaussian state with `C_{αβ} = Tr(σ f_β^† f_α)`.
    Gaussian { c: CMat },
    Fock { occupied: MultiIndex },
    /// Uniform mixture of all states with `particles` fermions.
    Uniform { particles: usize },
    /// Tabulated from a density matrix; `table[(Ξ << m) | Ω]`.
    Explicit { sigma: CMat, table: Vec<C64> },
}

impl EnvironmentKind {
    pub fn name(&self) -> &'static str {
        match self {
            EnvironmentKind::Vacuum => "vacuum",
            EnvironmentKind::Gaussian { .. } => "gaussian",
            EnvironmentKind::Fock { .. } => "fock",
            EnvironmentKind::Uniform { .. } => "uniform",
            EnvironmentKind::Explicit { .. } => "explicit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorrelationTensor {
    m: usize,
    kind: EnvironmentKind,
    is_even: bool,
    is_gauge_invariant: bool,
    normalization: C64,
}

fn check_modes(m: usize) -> Result<()> {
    if m == 0 || m > MAX_MODES {
        return Err(Error::Range(format!("mode count must be in 1..={MAX_MODES}, got {m}")));
    }
    Ok(())
}

/// Checks that `C` is Hermitian with spectrum in `[0, 1]` up to `tol`.
pub fn validate_correlation(c: &CMat, tol: f64) -> Result<()> {
    if c.nrows() != c.ncols() {
        return Err(Error::Shape(format!("C must be square, got {}x{}", c.nrows(), c.ncols())));
    }
    let asym = hermiticity_residual(c);
    if asym > tol {
        return Err(Error::Constraint(format!("C is not Hermitian (residual {asym:.3e})")));
    }
    let ev = hermitian_eigenvalues(c)?;
    if let (Some(&lo), Some(&hi)) = (ev.first(), ev.last()) {
        if lo < -tol || hi > 1.0 + tol {
            return Err(Error::Constraint(format!(
                "spectrum of C must lie in [0, 1], found [{lo:.3e}, {hi:.6}]"
            )));
        }
    }
    Ok(())
}

pub fn gamma_vacuum(m: usize) -> Result<CorrelationTensor> {
    check_modes(m)?;
    Ok(CorrelationTensor::builtin(m, EnvironmentKind::Vacuum))
}

pub fn gamma_gaussian(c: &CMat) -> Result<CorrelationTensor> {
    check_modes(c.nrows())?;
    validate_correlation(c, 1e-9)?;
    Ok(CorrelationTensor::builtin(c.nrows(), EnvironmentKind::Gaussian { c: c.clone() }))
}

pub fn gamma_fock(m: usize, occupied: MultiIndex) -> Result<CorrelationTensor> {
    check_modes(m)?;
    occupied.check_range(m)?;
    Ok(CorrelationTensor::builtin(m, EnvironmentKind::Fock { occupied }))
}

pub fn gamma_uniform(m: usize, particles: usize) -> Result<CorrelationTensor> {
    check_modes(m)?;
    if particles > m {
        return Err(Error::Range(format!("particle number {particles} exceeds {m} modes")));
    }
    Ok(CorrelationTensor::builtin(m, EnvironmentKind::Uniform { particles }))
}

/// Tabulates `Γ` from a density matrix on `2^m` dimensions.
///
/// Evenness and gauge invariance are measured. When a flag is set, the entries
/// it forces to vanish are stored as exact zeros.
pub fn gamma_from_density(sigma: &CMat) -> Result<CorrelationTensor> {
    let d = sigma.nrows();
    if d != sigma.ncols() || d < 2 || !d.is_power_of_two() {
        return Err(Error::Shape(format!("sigma must be 2^m x 2^m, got {}x{}", d, sigma.ncols())));
    }
    let m = d.trailing_zeros() as usize;
    if m > MAX_EXPLICIT_MODES {
        return Err(Error::Resource(format!(
            "explicit environments support at most {MAX_EXPLICIT_MODES} modes, got {m}"
        )));
    }
    crate::linalg::ensure_finite(sigma, "sigma")?;
    let asym = hermiticity_residual(sigma);
    if asym > 1e-9 {
        return Err(Error::Constraint(format!("sigma is not Hermitian (residual {asym:.3e})")));
    }
    let lo = hermitian_eigenvalues(sigma)?[0];
    if lo < -1e-9 {
        return Err(Error::Constraint(format!("sigma is not positive semidefinite (eigenvalue {lo:.3e})")));
    }
    let rep = build_rep(m)?;
    let p = rep.parity();
    let n = rep.number_op();
    let is_even = max_abs_diff(&(&p * sigma), &(sigma * &p)) <= SYMMETRY_TOL;
    let is_gauge_invariant = max_abs_diff(&(&n * sigma), &(sigma * &n)) <= SYMMETRY_TOL;
    let mut table = vec![ZERO; 1 << (2 * m)];
    for ((xi, om), v) in correlation_table(&rep, sigma)? {
        let odd = (xi.len() + om.len()) % 2 == 1;
        let unbalanced = xi.len() != om.len();
        let forced_zero = (is_even && odd) || (is_gauge_invariant && unbalanced);
        table[((xi.mask() as usize) << m) | om.mask() as usize] = if forced_zero { ZERO } else { v };
    }
    let normalization = table[0];
    Ok(CorrelationTensor {
        m,
        kind: EnvironmentKind::Explicit { sigma: sigma.clone(), table },
        is_even,
        is_gauge_invariant,
        normalization,
    })
}

impl CorrelationTensor {
    fn builtin(m: usize, kind: EnvironmentKind) -> Self {
        Self { m, kind, is_even: true, is_gauge_invariant: true, normalization: ONE }
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> &EnvironmentKind {
        &self.kind
    }

    pub fn is_even(&self) -> bool {
        self.is_even
    }

    pub fn is_gauge_invariant(&self) -> bool {
        self.is_gauge_invariant
    }

    /// `Γ_{∅;∅} = Tr σ`.
    pub fn normalization(&self) -> C64 {
        self.normalization
    }

    /// `Γ_{Ξ;Ω}`. Labels beyond the mode count give 0.
    pub fn gamma(&self, xi: MultiIndex, omega: MultiIndex) -> C64 {
        if xi.check_range(self.m).is_err() || omega.check_range(self.m).is_err() {
            return ZERO;
        }
        match &self.kind {
            EnvironmentKind::Vacuum => {
                if xi.is_empty() && omega.is_empty() {
                    ONE
                } else {
                    ZERO
                }
            }
            EnvironmentKind::Fock { occupied } => {
                if xi == omega && xi.is_subset_of(*occupied) {
                    ONE
                } else {
                    ZERO
                }
            }
            EnvironmentKind::Uniform { particles } => {
                if xi != omega {
                    return ZERO;
                }
                let num = binomial((self.m - xi.len()) as i64, *particles as i64 - xi.len() as i64);
                let den = binomial(self.m as i64, *particles as i64);
                C64::new(num as f64 / den as f64, 0.0)
            }
            EnvironmentKind::Gaussian { c } => {
                if xi.len() != omega.len() {
                    return ZERO;
                }
                let rows: Vec<usize> = omega.positions().collect();
                let cols: Vec<usize> = xi.positions().collect();
                MinorScratch::new().det(c, &rows, &cols)
            }
            EnvironmentKind::Explicit { table, .. } => {
                table[((xi.mask() as usize) << self.m) | omega.mask() as usize]
            }
        }
    }
}
