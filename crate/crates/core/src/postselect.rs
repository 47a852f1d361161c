//! Post-selected maps `Φ_E^*(X) = Tr_2[(1 ⊗ σ) U^† (X ⊗ E) U]` for an even
//! environment effect `E = Σ e_{M;N} f_M^† f_N`.
//!
//! The expansion uses block minors of the full unitary `W`: rows
//! `J ∪ (M + m)` against columns `K ∪ (Ξ + m)`. When only `(A, B)` is known
//! the lower blocks come from a completion of the isometry, and `Φ_E` depends
//! on which completion is chosen.

use std::collections::BTreeMap;

use crate::channel::{contract, MinorExpansion};
use crate::environment::CorrelationTensor;
use crate::error::{Error, Result};
use crate::fock_oracle::{build_rep, expand_in_monomials, MAX_EXPANSION_MODES};
use crate::linalg::{ensure_finite, hermiticity_residual, hermitian_eigenvalues, max_abs_diff, unitarity_residual, CMat, C64};
use crate::multiindex::{MinorScratch, MonomialKey, MultiIndex};
use crate::poly::MonomialPoly;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Coefficients below this are dropped from effect expansions.
pub const EFFECT_PRUNE: f64 = 1e-12;

/// `E = Σ e_{M;N} f_M^† f_N` with `|M| + |N|` even.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectExpansion {
    pub m: usize,
    pub coeffs: BTreeMap<(MultiIndex, MultiIndex), C64>,
    /// True when `0 ≤ E ≤ 1` was verified on the dense matrix.
    pub psd_checked: bool,
}

impl EffectExpansion {
    /// `E = 1`.
    pub fn identity(m: usize) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert((MultiIndex::EMPTY, MultiIndex::EMPTY), ONE);
        Self { m, coeffs, psd_checked: true }
    }

    pub fn zero(m: usize) -> Self {
        Self { m, coeffs: BTreeMap::new(), psd_checked: true }
    }

    /// Trusted coefficient table. Checks range, even support and Hermitian
    /// symmetry `conj(e_{M;N}) = e_{N;M}`, but not `0 ≤ E ≤ 1`.
    pub fn from_coefficients(m: usize, coeffs: BTreeMap<(MultiIndex, MultiIndex), C64>) -> Result<Self> {
        for (&(mm, nn), c) in &coeffs {
            mm.check_range(m)?;
            nn.check_range(m)?;
            if !(c.re.is_finite() && c.im.is_finite()) {
                return Err(Error::Constraint(format!("effect coefficient ({mm}|{nn}) is not finite")));
            }
            if (mm.len() + nn.len()) % 2 == 1 && c.norm() > EFFECT_PRUNE {
                return Err(Error::NotEven(format!("effect coefficient ({mm}|{nn}) has odd degree")));
            }
            let partner = coeffs.get(&(nn, mm)).copied().unwrap_or(ZERO);
            if (partner - c.conj()).norm() > 1e-10 {
                return Err(Error::Constraint(format!("effect coefficients ({mm}|{nn}) and ({nn}|{mm}) are not conjugate")));
            }
        }
        let coeffs = coeffs.into_iter().filter(|(_, c)| c.norm() >= EFFECT_PRUNE).collect();
        Ok(Self { m, coeffs, psd_checked: false })
    }

    pub fn get(&self, mm: MultiIndex, nn: MultiIndex) -> C64 {
        self.coeffs.get(&(mm, nn)).copied().unwrap_or(ZERO)
    }

    pub fn max_abs_diff(&self, other: &EffectExpansion) -> f64 {
        let mut keys: Vec<_> = self.coeffs.keys().chain(other.coeffs.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        keys.iter().map(|&(a, b)| (self.get(a, b) - other.get(a, b)).norm()).fold(0.0, f64::max)
    }
}

/// Expands a dense effect on `m ≤ 5` modes through the monomial Gram system.
pub fn expand_effect(e: &CMat, tol: f64) -> Result<EffectExpansion> {
    let d = e.nrows();
    if d != e.ncols() || !d.is_power_of_two() || d < 2 {
        return Err(Error::Shape(format!("effect must be 2^m x 2^m, got {}x{}", d, e.ncols())));
    }
    let m = d.trailing_zeros() as usize;
    if m > MAX_EXPANSION_MODES {
        return Err(Error::Resource(format!(
            "dense effects are limited to {MAX_EXPANSION_MODES} modes, got {m}; pass a coefficient table instead"
        )));
    }
    ensure_finite(e, "effect")?;
    let herm = hermiticity_residual(e);
    if herm > tol {
        return Err(Error::Constraint(format!("effect is not Hermitian (residual {herm:.3e})")));
    }
    let ev = hermitian_eigenvalues(e)?;
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if lo < -tol || hi > 1.0 + tol {
        return Err(Error::Constraint(format!("effect eigenvalues must lie in [0, 1], found [{lo:.3e}, {hi:.3e}]")));
    }
    let rep = build_rep(m)?;
    let p = rep.parity();
    let comm = max_abs_diff(&(&p * e), &(e * &p));
    if comm > tol {
        return Err(Error::NotEven(format!("effect does not commute with parity (residual {comm:.3e})")));
    }
    let poly = expand_in_monomials(&rep, e)?;
    let coeffs = poly
        .iter()
        .filter(|(_, c)| c.norm() >= EFFECT_PRUNE)
        .map(|(k, c)| ((k.creation, k.annihilation), *c))
        .collect();
    Ok(EffectExpansion { m, coeffs, psd_checked: true })
}

/// Coefficientwise sum of effects on `m` modes.
pub fn instrument_sum(m: usize, parts: &[EffectExpansion]) -> Result<EffectExpansion> {
    let mut out = EffectExpansion::zero(m);
    for p in parts {
        if p.m != m {
            return Err(Error::Shape(format!("effect on {} modes in an instrument on {m} modes", p.m)));
        }
        out.psd_checked &= p.psd_checked;
        for (k, c) in &p.coeffs {
            *out.coeffs.entry(*k).or_insert(ZERO) += c;
        }
    }
    out.coeffs.retain(|_, c| c.norm() >= EFFECT_PRUNE);
    Ok(out)
}

fn check_inputs(w: &CMat, gamma: &CorrelationTensor, eff: &EffectExpansion, j: MultiIndex, i: MultiIndex) -> Result<usize> {
    let m = gamma.modes();
    if w.nrows() != 2 * m || w.ncols() != 2 * m {
        return Err(Error::Shape(format!("W must be {0}x{0}, got {1}x{2}", 2 * m, w.nrows(), w.ncols())));
    }
    ensure_finite(w, "W")?;
    let res = unitarity_residual(w);
    if res > 1e-9 {
        return Err(Error::Constraint(format!("W is not unitary (residual {res:.3e})")));
    }
    if eff.m != m {
        return Err(Error::Shape(format!("effect acts on {} modes, environment has {m}", eff.m)));
    }
    j.check_range(m)?;
    i.check_range(m)?;
    Ok(m)
}

fn rows(s: MultiIndex, env: MultiIndex, m: usize) -> Vec<usize> {
    s.positions().chain(env.positions().map(|p| p + m)).collect()
}

fn action(
    w: &CMat,
    gamma: &CorrelationTensor,
    eff: &EffectExpansion,
    j: MultiIndex,
    i: MultiIndex,
    even_only: bool,
) -> Result<MonomialPoly> {
    let m = check_inputs(w, gamma, eff, j, i)?;
    let mut scratch = MinorScratch::new();
    let mut left_cache: BTreeMap<MultiIndex, MinorExpansion> = BTreeMap::new();
    let mut right_cache: BTreeMap<MultiIndex, MinorExpansion> = BTreeMap::new();
    let mut out = MonomialPoly::zero();
    for (&(mm, nn), &e) in &eff.coeffs {
        let left = left_cache.entry(mm).or_insert_with(|| MinorExpansion::new(w, m, &rows(j, mm, m), &mut scratch));
        let right = right_cache.entry(nn).or_insert_with(|| MinorExpansion::new(w, m, &rows(i, nn, m), &mut scratch));
        let odd = (i.len() + j.len()) * mm.len() % 2 == 1;
        let coeff = if odd { -e } else { e };
        contract(left, right, gamma, coeff, even_only, &mut |k, v| out.add_term(k, v));
    }
    Ok(out.pruned())
}

/// `Φ_E^*(f_J^† f_I)` for any environment state; odd `Γ` entries produce
/// parity terms.
pub fn dual_action_postselected(
    w: &CMat,
    gamma: &CorrelationTensor,
    eff: &EffectExpansion,
    j: MultiIndex,
    i: MultiIndex,
) -> Result<MonomialPoly> {
    action(w, gamma, eff, j, i, false)
}

/// `Φ_E^*(f_J^† f_I)` for an even environment state.
pub fn dual_action_postselected_even(
    w: &CMat,
    gamma: &CorrelationTensor,
    eff: &EffectExpansion,
    j: MultiIndex,
    i: MultiIndex,
) -> Result<MonomialPoly> {
    if !gamma.is_even() {
        return Err(Error::NotEven("the even-state post-selected action requires an even environment state".into()));
    }
    action(w, gamma, eff, j, i, true)
}

/// Unnormalized conditional moments: for each output key, the coefficients of
/// `Φ_E^*(f_J^† f_I)` contracted with input moments supplied by `input`.
/// Post-selection can raise the order, so `input` may be asked for keys of
/// order above that of the requested outputs.
pub fn conditional_moments(
    w: &CMat,
    gamma: &CorrelationTensor,
    eff: &EffectExpansion,
    keys: &[MonomialKey],
    input: &dyn Fn(&MonomialKey) -> Result<C64>,
) -> Result<Vec<C64>> {
    keys.iter()
        .map(|key| {
            let poly = dual_action_postselected_even(w, gamma, eff, key.creation, key.annihilation)?;
            poly.iter().map(|(k, c)| Ok(c * input(k)?)).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{dual_action_even, dual_action_general, ChannelSpec};
    use crate::environment::{gamma_fock, gamma_from_density, gamma_gaussian, gamma_vacuum};
    use crate::fock_oracle::{channel_apply, environment_density, expand_with_parity, implement_unitary, postselected_dual};
    use crate::linalg::{identity, scale, trace};
    use crate::multiindex::enumerate_multiindices;
    use crate::sampling::{random_correlation, random_density, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mi(l: &[usize]) -> MultiIndex {
        MultiIndex::from_labels(l).unwrap()
    }

    #[test]
    fn effect_expansion_examples() {
        let rep = build_rep(2).unwrap();
        assert_eq!(expand_effect(&identity(4), 1e-9).unwrap(), EffectExpansion::identity(2));
        let n1 = rep.monomial_matrix(&MonomialKey::new(mi(&[1]), mi(&[1]))).unwrap();
        let e = expand_effect(&n1, 1e-9).unwrap();
        assert_eq!(e.coeffs.len(), 1);
        assert!((e.get(mi(&[1]), mi(&[1])) - ONE).norm() < 1e-12);
        let proj = scale(&(identity(4) + rep.parity()), C64::new(0.5, 0.0));
        let e = expand_effect(&proj, 1e-9).unwrap();
        assert_eq!(e.coeffs.len(), 4);
        assert!((e.get(MultiIndex::EMPTY, MultiIndex::EMPTY) - ONE).norm() < 1e-12);
        assert!((e.get(mi(&[1]), mi(&[1])) + ONE).norm() < 1e-12);
        assert!((e.get(mi(&[2]), mi(&[2])) + ONE).norm() < 1e-12);
        assert!((e.get(mi(&[1, 2]), mi(&[1, 2])) - C64::new(2.0, 0.0)).norm() < 1e-12);

        assert!(matches!(expand_effect(&scale(&identity(4), C64::new(1.5, 0.0)), 1e-9), Err(Error::Constraint(_))));
        let a1 = rep.annihilation(1).unwrap();
        let odd = scale(&(&a1 + crate::linalg::adjoint(&a1) + identity(4)), C64::new(0.5, 0.0));
        assert!(matches!(expand_effect(&odd, 1e-9), Err(Error::NotEven(_))));
        assert!(matches!(expand_effect(&identity(64), 1e-9), Err(Error::Resource(_))));
        let mut bad = BTreeMap::new();
        bad.insert((mi(&[1]), MultiIndex::EMPTY), ONE);
        assert!(matches!(EffectExpansion::from_coefficients(2, bad), Err(Error::NotEven(_))));
    }

    #[test]
    fn instrument_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let e1 = crate::sampling::random_even_effect(&mut rng, 2);
        let e2 = crate::sampling::random_even_effect(&mut rng, 2);
        let x1 = expand_effect(&e1, 1e-9).unwrap();
        let x2 = expand_effect(&e2, 1e-9).unwrap();
        let sum = instrument_sum(2, &[x1.clone(), x2.clone()]).unwrap();
        let half = scale(&(&e1 + &e2), C64::new(0.5, 0.0));
        let direct = expand_effect(&half, 1e-9).unwrap();
        let halved: BTreeMap<_, _> = sum.coeffs.iter().map(|(k, c)| (*k, c * 0.5)).collect();
        assert!(EffectExpansion::from_coefficients(2, halved).unwrap().max_abs_diff(&direct) < 1e-10);
        let comp = expand_effect(&(identity(4) - &e1), 1e-9).unwrap();
        let total = instrument_sum(2, &[x1, comp]).unwrap();
        assert!(total.max_abs_diff(&EffectExpansion::identity(2)) < 1e-10);
        assert!(instrument_sum(2, &[]).unwrap().coeffs.is_empty());
        assert!(instrument_sum(3, &[x2]).is_err());
    }

    #[test]
    fn identity_effect_reduces_to_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let w = random_unitary(&mut rng, 6);
        let gamma = gamma_gaussian(&random_correlation(&mut rng, 3)).unwrap();
        let spec = ChannelSpec::with_unitary(w.clone(), gamma.clone()).unwrap();
        let eff = EffectExpansion::identity(3);
        for j in enumerate_multiindices(3, 2).unwrap() {
            for i in enumerate_multiindices(3, 2).unwrap() {
                let a = dual_action_postselected_even(&w, &gamma, &eff, j, i).unwrap();
                assert_eq!(a, dual_action_even(&spec, j, i).unwrap());
                let a = dual_action_postselected(&w, &gamma, &eff, j, i).unwrap();
                assert_eq!(a, dual_action_general(&spec, j, i).unwrap());
            }
        }
        let id = dual_action_postselected_even(&identity(6), &gamma_vacuum(3).unwrap(), &eff, mi(&[1, 3]), mi(&[2])).unwrap();
        assert_eq!(id, MonomialPoly::term(MonomialKey::new(mi(&[1, 3]), mi(&[2])), ONE));
    }

    fn oracle_check(w: &CMat, gamma: &CorrelationTensor, e: &CMat, grade_even: bool) -> f64 {
        let m = gamma.modes();
        let rep = build_rep(m).unwrap();
        let u = implement_unitary(w).unwrap();
        let sigma = environment_density(gamma).unwrap();
        let eff = expand_effect(e, 1e-9).unwrap();
        let mut worst: f64 = 0.0;
        for j in enumerate_multiindices(m, m).unwrap() {
            for i in enumerate_multiindices(m, m).unwrap() {
                let key = MonomialKey::new(j, i);
                let x = rep.monomial_matrix(&key).unwrap();
                let oracle = postselected_dual(&u, &sigma, e, &x).unwrap();
                let ours = if grade_even {
                    dual_action_postselected_even(w, gamma, &eff, j, i).unwrap()
                } else {
                    dual_action_postselected(w, gamma, &eff, j, i).unwrap()
                };
                let expect = expand_with_parity(&rep, &oracle, ((j.len() + i.len()) % 2) as u8).unwrap();
                worst = worst.max(ours.max_abs_diff(&expect));
            }
        }
        worst
    }

    #[test]
    fn matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let rep = build_rep(2).unwrap();
        let w = random_unitary(&mut rng, 4);
        let parity_proj = scale(&(identity(4) + rep.parity()), C64::new(0.5, 0.0));
        assert!(oracle_check(&w, &gamma_fock(2, mi(&[2])).unwrap(), &parity_proj, false) < 1e-8);
        let n1 = rep.monomial_matrix(&MonomialKey::new(mi(&[1]), mi(&[1]))).unwrap();
        assert!(oracle_check(&w, &gamma_vacuum(2).unwrap(), &n1, true) < 1e-8);
        for m in [2, 3] {
            for _ in 0..3 {
                let w = random_unitary(&mut rng, 2 * m);
                let g = gamma_gaussian(&random_correlation(&mut rng, m)).unwrap();
                let e = crate::sampling::random_even_effect(&mut rng, m);
                assert!(oracle_check(&w, &g, &e, true) < 1e-8, "m={m}");
            }
        }
        // non-even environment state exercises the parity terms
        let sigma = random_density(&mut rng, 4);
        let g = gamma_from_density(&sigma).unwrap();
        assert!(!g.is_even());
        let e = crate::sampling::random_even_effect(&mut rng, 2);
        assert!(oracle_check(&w, &g, &e, false) < 1e-8);
        assert!(dual_action_postselected_even(&w, &g, &EffectExpansion::identity(2), mi(&[1]), mi(&[1])).is_err());
    }

    #[test]
    fn trace_domination() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let w = random_unitary(&mut rng, 4);
        let u = implement_unitary(&w).unwrap();
        let sigma = environment_density(&gamma_fock(2, mi(&[1])).unwrap()).unwrap();
        let e = crate::sampling::random_even_effect(&mut rng, 2);
        let with_effect = |rho: &CMat| {
            let full = &u * crate::linalg::kron(rho, &sigma) * crate::linalg::adjoint(&u);
            let emb = crate::linalg::kron(&identity(4), &e);
            crate::linalg::trace(&(&emb * full)).re
        };
        for _ in 0..10 {
            let rho = random_density(&mut rng, 4);
            let full = trace(&channel_apply(&u, &sigma, &rho).unwrap()).re;
            assert!(with_effect(&rho) <= full + 1e-10);
        }
    }
}
