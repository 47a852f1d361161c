//! Second quantization of one-particle contractions: dilations, exterior
//! powers, contractive semigroups and the action on annihilation monomials.

use crate::channel::{dual_action_even, dual_action_even_poly, ChannelSpec};
use crate::environment::CorrelationTensor;
use crate::error::{Error, Result};
use crate::linalg::{
    adjoint, expm, hermitian_eigenvalues, hermitian_sqrt, identity, scale, spectral_norm, CMat, C64,
};
use crate::multiindex::{combinations, MinorScratch, MonomialKey, MultiIndex};
use crate::poly::MonomialPoly;

/// Slack allowed on `‖A‖ ≤ 1` and on dissipativity.
pub const CONTRACTION_TOL: f64 = 1e-9;

/// A contraction `A` with `B = (1 - AA^†)^{1/2}`, so that `(A | B)` is an isometry.
#[derive(Debug, Clone)]
pub struct ContractionDilation {
    pub a: CMat,
    pub b: CMat,
}

pub fn dilate_contraction(a: &CMat) -> Result<ContractionDilation> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::Shape(format!("A must be square, got {}x{}", m, a.ncols())));
    }
    crate::linalg::ensure_finite(a, "A")?;
    let s = spectral_norm(a)?;
    if s > 1.0 + CONTRACTION_TOL {
        return Err(Error::Constraint(format!(
            "A is not a contraction (largest singular value {s:.12}) and is not admissible"
        )));
    }
    let defect = crate::linalg::hermitian_part(&(identity(m) - a * adjoint(a)));
    let b = hermitian_sqrt(&defect, 10.0 * CONTRACTION_TOL)?;
    Ok(ContractionDilation { a: a.clone(), b })
}

/// `∧^p A` over the canonical basis of `p`-subsets: entry `(I, L) = det(A_{I×L})`.
#[derive(Debug, Clone)]
pub struct ExteriorPowerMatrix {
    pub p: usize,
    pub basis: Vec<MultiIndex>,
    pub data: CMat,
}

pub fn exterior_power(a: &CMat, p: usize) -> Result<ExteriorPowerMatrix> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::Shape(format!("A must be square, got {}x{}", m, a.ncols())));
    }
    if p > m {
        return Err(Error::Range(format!("exterior power {p} exceeds dimension {m}")));
    }
    let basis: Vec<MultiIndex> = combinations(m, p).collect();
    let pos: Vec<Vec<usize>> = basis.iter().map(|s| s.positions().collect()).collect();
    let mut scratch = MinorScratch::new();
    let n = basis.len();
    let mut data = CMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            data[(r, c)] = scratch.det(a, &pos[r], &pos[c]);
        }
    }
    Ok(ExteriorPowerMatrix { p, basis, data })
}

/// Checks `i(H - H^†) ≤ 0` up to [`CONTRACTION_TOL`].
pub fn check_dissipative(h_eff: &CMat) -> Result<()> {
    let m = h_eff.nrows();
    if h_eff.ncols() != m {
        return Err(Error::Shape(format!("H_eff must be square, got {}x{}", m, h_eff.ncols())));
    }
    crate::linalg::ensure_finite(h_eff, "H_eff")?;
    let k = CMat::from_fn(m, m, |i, j| (h_eff[(i, j)] - h_eff[(j, i)].conj()) * C64::new(0.0, 1.0));
    let top = hermitian_eigenvalues(&k)?.last().copied().unwrap_or(0.0);
    if top > CONTRACTION_TOL {
        return Err(Error::Constraint(format!(
            "H_eff is not dissipative: i(H - H^†) has eigenvalue {top:.3e} > 0"
        )));
    }
    Ok(())
}

/// `A(t) = exp(i t H_eff)`, a contraction for `t ≥ 0` when `H_eff` is dissipative.
pub fn contraction_semigroup(h_eff: &CMat, t: f64) -> Result<CMat> {
    check_dissipative(h_eff)?;
    if !(t >= 0.0) {
        return Err(Error::Range(format!("time must be nonnegative, got {t}")));
    }
    expm(&scale(h_eff, C64::new(0.0, t)))
}

/// `Σ_{|L|=|I|} det(A_{I×L}) f_L`, the action on annihilation monomials for a
/// gauge-invariant normalized environment.
pub fn annihilation_action_gauge_invariant(a: &CMat, i: MultiIndex) -> Result<MonomialPoly> {
    let m = a.nrows();
    i.check_range(m)?;
    let rows: Vec<usize> = i.positions().collect();
    let mut scratch = MinorScratch::new();
    let mut out = MonomialPoly::zero();
    for l in combinations(m, i.len()) {
        let cols: Vec<usize> = l.positions().collect();
        out.add_term(MonomialKey::new(MultiIndex::EMPTY, l), scratch.det(a, &rows, &cols));
    }
    Ok(out.pruned())
}

/// `Σ_{|L|+|Ω|=|I|, |Ω| even} Γ_{∅;Ω} det(A_{I×L} | B_{I×Ω}) f_L` for an even environment.
pub fn annihilation_action_general(
    a: &CMat,
    b: &CMat,
    gamma: &CorrelationTensor,
    i: MultiIndex,
) -> Result<MonomialPoly> {
    if !gamma.is_even() {
        return Err(Error::NotEven("the annihilation-monomial action requires an even environment".into()));
    }
    let m = gamma.modes();
    if a.nrows() != m || a.ncols() != m || b.nrows() != m || b.ncols() != m {
        return Err(Error::Shape(format!("A and B must be {m}x{m}")));
    }
    i.check_range(m)?;
    let r = CMat::from_fn(m, 2 * m, |x, y| if y < m { a[(x, y)] } else { b[(x, y - m)] });
    let rows: Vec<usize> = i.positions().collect();
    let mut scratch = MinorScratch::new();
    let mut out = MonomialPoly::zero();
    for om_len in (0..=i.len().min(m)).step_by(2) {
        let l_len = i.len() - om_len;
        if l_len > m {
            continue;
        }
        for om in combinations(m, om_len) {
            let g = gamma.gamma(MultiIndex::EMPTY, om);
            if g == C64::new(0.0, 0.0) {
                continue;
            }
            for l in combinations(m, l_len) {
                let mut cols: Vec<usize> = l.positions().collect();
                cols.extend(om.positions().map(|p| p + m));
                out.add_term(MonomialKey::new(MultiIndex::EMPTY, l), g * scratch.det(&r, &rows, &cols));
            }
        }
    }
    Ok(out.pruned())
}

#[derive(Debug, Clone)]
pub struct SemigroupReport {
    /// `Φ^*_{t2}(Φ^*_{t1}(X))`.
    pub lhs: MonomialPoly,
    /// `Φ^*_{t1+t2}(X)`.
    pub rhs: MonomialPoly,
    pub max_deviation: f64,
}

/// Compares the composition of the channels built from `e^{iH t1}` and
/// `e^{iH t2}` (each dilated with `B = (1 - AA^†)^{1/2}`) with the channel at
/// `t1 + t2`, on one probe monomial.
pub fn check_semigroup_failure(
    h_eff: &CMat,
    gamma: &CorrelationTensor,
    t1: f64,
    t2: f64,
    probe: MonomialKey,
) -> Result<SemigroupReport> {
    let spec_at = |t: f64| -> Result<ChannelSpec> {
        ChannelSpec::from_contraction(&contraction_semigroup(h_eff, t)?, gamma.clone())
    };
    if probe.parity != 0 {
        return Err(Error::Usage("probe must be a parity-0 monomial".into()));
    }
    let s1 = spec_at(t1)?;
    let s2 = spec_at(t2)?;
    let s12 = spec_at(t1 + t2)?;
    let first = dual_action_even(&s1, probe.creation, probe.annihilation)?;
    let lhs = dual_action_even_poly(&s2, &first)?;
    let rhs = dual_action_even(&s12, probe.creation, probe.annihilation)?;
    let max_deviation = lhs.max_abs_diff(&rhs);
    Ok(SemigroupReport { lhs, rhs, max_deviation })
}
