//! Heisenberg action `Φ^*` of the channel induced by `a ↦ Aa + Bb` with the
//! environment in a state with correlation tensor `Γ`, and the moment transfer
//! matrices it induces on monomials of bounded order.

use std::collections::HashMap;
use std::io::Write;

use crate::environment::{CorrelationTensor, EnvironmentKind};
use crate::error::{Error, Result};
use crate::linalg::{
    adjoint, complete_isometry, ensure_finite, identity, max_abs_diff, unitarity_residual, CMat,
    C64, DEFAULT_TOL,
};
use crate::multiindex::{binomial, combinations, MinorScratch, MonomialKey, MultiIndex};
use crate::poly::{MonomialPoly, PRUNE_THRESHOLD};
use crate::secondquant::dilate_contraction;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Mode transformation `(A | B)` (optionally its unitary completion `W`) and
/// the environment tensor.
#[derive(Debug, Clone)]
pub struct ChannelSpec {
    m: usize,
    a: CMat,
    b: CMat,
    /// `R = (A | B)`, `m × 2m`.
    r: CMat,
    w: Option<CMat>,
    gamma: CorrelationTensor,
}

fn check_block(x: &CMat, m: usize, what: &str) -> Result<()> {
    if x.nrows() != m || x.ncols() != m {
        return Err(Error::Shape(format!("{what} must be {m}x{m}, got {}x{}", x.nrows(), x.ncols())));
    }
    ensure_finite(x, what)
}

impl ChannelSpec {
    /// Checks `AA^† + BB^† = 1` to `1e-9`.
    pub fn new(a: CMat, b: CMat, gamma: CorrelationTensor) -> Result<Self> {
        let m = gamma.modes();
        check_block(&a, m, "A")?;
        check_block(&b, m, "B")?;
        let r = CMat::from_fn(m, 2 * m, |i, j| if j < m { a[(i, j)] } else { b[(i, j - m)] });
        let res = max_abs_diff(&(&r * adjoint(&r)), &identity(m));
        if res > DEFAULT_TOL {
            return Err(Error::Constraint(format!(
                "isometry condition AA^† + BB^† = 1 violated (residual {res:.3e})"
            )));
        }
        Ok(Self { m, a, b, r, w: None, gamma })
    }

    /// Uses the top blocks of a `2m × 2m` unitary; checks `WW^† = 1` to `1e-10`.
    pub fn with_unitary(w: CMat, gamma: CorrelationTensor) -> Result<Self> {
        let m = gamma.modes();
        if w.nrows() != 2 * m || w.ncols() != 2 * m {
            return Err(Error::Shape(format!("W must be {0}x{0}, got {1}x{2}", 2 * m, w.nrows(), w.ncols())));
        }
        ensure_finite(&w, "W")?;
        let res = unitarity_residual(&w);
        if res > 1e-10 {
            return Err(Error::Constraint(format!("W is not unitary (residual {res:.3e})")));
        }
        let a = CMat::from_fn(m, m, |i, j| w[(i, j)]);
        let b = CMat::from_fn(m, m, |i, j| w[(i, j + m)]);
        let mut spec = Self::new(a, b, gamma)?;
        spec.w = Some(w);
        Ok(spec)
    }

    /// Dilates a contraction with `B = (1 - AA^†)^{1/2}`.
    pub fn from_contraction(a: &CMat, gamma: CorrelationTensor) -> Result<Self> {
        let d = dilate_contraction(a)?;
        Self::new(d.a, d.b, gamma)
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn gamma(&self) -> &CorrelationTensor {
        &self.gamma
    }

    pub fn stored_unitary(&self) -> Option<&CMat> {
        self.w.as_ref()
    }

    /// The stored `W`, or a completion of `(A | B)`.
    pub fn unitary(&self) -> Result<CMat> {
        match &self.w {
            Some(w) => Ok(w.clone()),
            None => complete_isometry(&self.a, &self.b, DEFAULT_TOL),
        }
    }

    /// `max |AA^† + BB^† - 1|`.
    pub fn isometry_residual(&self) -> f64 {
        max_abs_diff(&(&self.r * adjoint(&self.r)), &identity(self.m))
    }

    /// Replaces `A` without re-checking the isometry condition; used only to
    /// inject faults into verification runs.
    pub(crate) fn with_a_unchecked(&self, a: CMat) -> Self {
        let mut out = self.clone();
        for i in 0..self.m {
            for j in 0..self.m {
                out.r[(i, j)] = a[(i, j)];
            }
        }
        out.a = a;
        out.w = None;
        out
    }

    pub fn with_gamma(&self, gamma: CorrelationTensor) -> Result<Self> {
        if gamma.modes() != self.m {
            return Err(Error::Shape(format!("environment has {} modes, expected {}", gamma.modes(), self.m)));
        }
        Ok(Self { gamma, ..self.clone() })
    }

    fn check_indices(&self, j: MultiIndex, i: MultiIndex) -> Result<()> {
        j.check_range(self.m)?;
        i.check_range(self.m)
    }
}

/// Minors of a row block split by the environment part of the column set:
/// for each `Ξ`, the pairs `(K, det)` with columns `K ∪ (Ξ + m)`.
#[derive(Debug, Clone, Default)]
pub(crate) struct MinorExpansion {
    pub groups: Vec<(MultiIndex, Vec<(MultiIndex, C64)>)>,
}

impl MinorExpansion {
    /// All maximal minors of `x` restricted to `rows` (0-based), over column
    /// sets of size `rows.len()` drawn from `0..2m`.
    pub fn new(x: &CMat, m: usize, rows: &[usize], scratch: &mut MinorScratch) -> Self {
        let r = rows.len();
        let mut groups = Vec::new();
        let mut cols = Vec::with_capacity(r);
        for xi_len in 0..=r.min(m) {
            let k_len = r - xi_len;
            if k_len > m {
                continue;
            }
            for xi in combinations(m, xi_len) {
                let mut terms = Vec::new();
                for k in combinations(m, k_len) {
                    cols.clear();
                    cols.extend(k.positions());
                    cols.extend(xi.positions().map(|p| p + m));
                    let d = scratch.det(x, rows, &cols);
                    if d != ZERO {
                        terms.push((k, d));
                    }
                }
                if !terms.is_empty() {
                    groups.push((xi, terms));
                }
            }
        }
        Self { groups }
    }

    fn identity_row() -> Self {
        Self { groups: vec![(MultiIndex::EMPTY, vec![(MultiIndex::EMPTY, C64::new(1.0, 0.0))])] }
    }
}

/// Sums `coeff · (-1)^{|Ξ|(|K|+|L|)} · conj(left) · Γ_{Ξ;Ω} · right` onto the
/// key `(K, L, (|Ξ|+|Ω|) mod 2)`.
pub(crate) fn contract(
    left: &MinorExpansion,
    right: &MinorExpansion,
    gamma: &CorrelationTensor,
    coeff: C64,
    even_only: bool,
    sink: &mut impl FnMut(MonomialKey, C64),
) {
    for (xi, lterms) in &left.groups {
        for (omega, rterms) in &right.groups {
            let parity = ((xi.len() + omega.len()) % 2) as u8;
            if even_only && parity == 1 {
                continue;
            }
            let g = gamma.gamma(*xi, *omega);
            if g == ZERO {
                continue;
            }
            let g = g * coeff;
            for (k, dl) in lterms {
                let gl = dl.conj() * g;
                for (l, dr) in rterms {
                    let odd = xi.len() * (k.len() + l.len()) % 2 == 1;
                    let v = gl * dr;
                    sink(MonomialKey::with_parity(*k, *l, parity), if odd { -v } else { v });
                }
            }
        }
    }
}

fn rows_of(j: MultiIndex) -> Vec<usize> {
    j.positions().collect()
}

fn action(spec: &ChannelSpec, j: MultiIndex, i: MultiIndex, even_only: bool) -> Result<MonomialPoly> {
    spec.check_indices(j, i)?;
    let mut scratch = MinorScratch::new();
    let left = MinorExpansion::new(&spec.r, spec.m, &rows_of(j), &mut scratch);
    let right = MinorExpansion::new(&spec.r, spec.m, &rows_of(i), &mut scratch);
    let mut out = MonomialPoly::zero();
    contract(&left, &right, &spec.gamma, C64::new(1.0, 0.0), even_only, &mut |k, v| out.add_term(k, v));
    Ok(out.pruned())
}

fn require_even(gamma: &CorrelationTensor, what: &str) -> Result<()> {
    if !gamma.is_even() {
        return Err(Error::NotEven(format!("{what} requires an even environment state")));
    }
    Ok(())
}

/// `Φ^*(f_J^† f_I)` for an arbitrary environment state, parity terms included.
pub fn dual_action_general(spec: &ChannelSpec, j: MultiIndex, i: MultiIndex) -> Result<MonomialPoly> {
    action(spec, j, i, false)
}

/// `Φ^*(f_J^† f_I)` for an even environment state; all output terms have
/// parity exponent 0.
pub fn dual_action_even(spec: &ChannelSpec, j: MultiIndex, i: MultiIndex) -> Result<MonomialPoly> {
    require_even(&spec.gamma, "the even-state action")?;
    action(spec, j, i, true)
}

/// Applies `Φ^*` to a polynomial of parity-0 monomials (even environments).
pub fn dual_action_even_poly(spec: &ChannelSpec, x: &MonomialPoly) -> Result<MonomialPoly> {
    let mut out = MonomialPoly::zero();
    for (k, c) in x.iter() {
        if k.parity != 0 {
            return Err(Error::Usage(format!("cannot apply the even-state action to parity term [{k}]")));
        }
        out.add_assign_scaled(&dual_action_even(spec, k.creation, k.annihilation)?, *c);
    }
    Ok(out.pruned())
}

/// Reduced formulas for the built-in environment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialCase {
    Vacuum,
    Gaussian,
    Fock,
    Uniform,
}

impl SpecialCase {
    fn matches(self, kind: &EnvironmentKind) -> bool {
        matches!(
            (self, kind),
            (SpecialCase::Vacuum, EnvironmentKind::Vacuum)
                | (SpecialCase::Gaussian, EnvironmentKind::Gaussian { .. })
                | (SpecialCase::Fock, EnvironmentKind::Fock { .. })
                | (SpecialCase::Uniform, EnvironmentKind::Uniform { .. })
        )
    }
}

/// `Φ^*(f_J^† f_I)` by enumerating only the support of `Γ` for the given family.
pub fn dual_action_special(
    spec: &ChannelSpec,
    j: MultiIndex,
    i: MultiIndex,
    case: SpecialCase,
) -> Result<MonomialPoly> {
    spec.check_indices(j, i)?;
    let kind = spec.gamma.kind();
    if !case.matches(kind) {
        return Err(Error::Usage(format!("special case {case:?} does not match a {} environment", kind.name())));
    }
    let m = spec.m;
    let max_xi = j.len().min(i.len());
    // (Ξ, Ω, Γ_{Ξ;Ω}) over the support of Γ
    let mut support: Vec<(MultiIndex, MultiIndex, C64)> = Vec::new();
    match kind {
        EnvironmentKind::Vacuum => support.push((MultiIndex::EMPTY, MultiIndex::EMPTY, C64::new(1.0, 0.0))),
        EnvironmentKind::Fock { occupied } => {
            for s in 0..=max_xi.min(occupied.len()) {
                for sub in combinations(occupied.len(), s) {
                    let labels = occupied.labels();
                    let xi = MultiIndex::from_labels(&sub.labels().iter().map(|&p| labels[p - 1]).collect::<Vec<_>>())?;
                    support.push((xi, xi, C64::new(1.0, 0.0)));
                }
            }
        }
        EnvironmentKind::Uniform { particles } => {
            let den = binomial(m as i64, *particles as i64) as f64;
            for s in 0..=max_xi {
                let w = binomial((m - s) as i64, *particles as i64 - s as i64) as f64 / den;
                if w == 0.0 {
                    continue;
                }
                for xi in combinations(m, s) {
                    support.push((xi, xi, C64::new(w, 0.0)));
                }
            }
        }
        EnvironmentKind::Gaussian { c } => {
            let mut scratch = MinorScratch::new();
            for s in 0..=max_xi {
                for xi in combinations(m, s) {
                    let cols: Vec<usize> = xi.positions().collect();
                    for om in combinations(m, s) {
                        let rows: Vec<usize> = om.positions().collect();
                        support.push((xi, om, scratch.det(c, &rows, &cols)));
                    }
                }
            }
        }
        EnvironmentKind::Explicit { .. } => unreachable!("rejected by the case check"),
    }
    let mut scratch = MinorScratch::new();
    let jr = rows_of(j);
    let ir = rows_of(i);
    let mut out = MonomialPoly::zero();
    for (xi, om, g) in support {
        if g == ZERO || xi.len() > j.len() || om.len() > i.len() {
            continue;
        }
        for k in combinations(m, j.len() - xi.len()) {
            let mut cols: Vec<usize> = k.positions().collect();
            cols.extend(xi.positions().map(|p| p + m));
            let dl = scratch.det(&spec.r, &jr, &cols);
            if dl == ZERO {
                continue;
            }
            for l in combinations(m, i.len() - om.len()) {
                let mut cols: Vec<usize> = l.positions().collect();
                cols.extend(om.positions().map(|p| p + m));
                let dr = scratch.det(&spec.r, &ir, &cols);
                let odd = xi.len() * (k.len() + l.len()) % 2 == 1;
                let v = dl.conj() * g * dr;
                out.add_term(MonomialKey::new(k, l), if odd { -v } else { v });
            }
        }
    }
    Ok(out.pruned())
}

/// Parity-0 monomials `f_J^† f_I` with `|J| + |I| ≤ k`, in canonical order.
pub fn basis_keys(m: usize, k: usize) -> Result<Vec<MonomialKey>> {
    if k > 2 * m {
        return Err(Error::Range(format!("order cap {k} exceeds 2m = {}", 2 * m)));
    }
    let idx = crate::multiindex::enumerate_multiindices(m, k.min(m))?;
    let mut keys = Vec::new();
    for &j in &idx {
        for &i in &idx {
            if j.len() + i.len() <= k {
                keys.push(MonomialKey::new(j, i));
            }
        }
    }
    keys.sort();
    Ok(keys)
}

/// `D(m, k) = Σ_{p+q≤k} C(m,p) C(m,q)`.
pub fn basis_dimension(m: usize, k: usize) -> u128 {
    let mut d = 0;
    for p in 0..=k {
        for q in 0..=k - p {
            d += binomial(m as i64, p as i64) * binomial(m as i64, q as i64);
        }
    }
    d
}

/// Matrix of `Φ^*` (or a generator) on the span of monomials of order `≤ k`.
/// Row `(J,I)`, column `(K,L)` holds the coefficient of `f_K^† f_L` in the
/// image of `f_J^† f_I`.
#[derive(Debug, Clone)]
pub struct MomentTransferMatrix {
    pub m: usize,
    pub k: usize,
    pub basis: Vec<MonomialKey>,
    pub data: CMat,
}

impl MomentTransferMatrix {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_map(&self) -> HashMap<MonomialKey, usize> {
        self.basis.iter().enumerate().map(|(n, k)| (*k, n)).collect()
    }

    /// CSV with a `key` column followed by `re(K|L)`, `im(K|L)` column pairs.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["key".to_string()];
        for k in &self.basis {
            header.push(format!("re({k})"));
            header.push(format!("im({k})"));
        }
        w.write_record(&header).map_err(io_err)?;
        for (r, key) in self.basis.iter().enumerate() {
            let mut rec = vec![key.to_string()];
            for c in 0..self.dim() {
                let z = self.data[(r, c)];
                rec.push(crate::format_real(z.re));
                rec.push(crate::format_real(z.im));
            }
            w.write_record(&rec).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn io_err(e: csv::Error) -> Error {
    Error::Io(format!("CSV write failed: {e}"))
}

/// Minor expansions of `(A | B)` for every row set of size `≤ k`.
pub(crate) fn expansions_up_to(r: &CMat, m: usize, k: usize) -> Result<HashMap<MultiIndex, MinorExpansion>> {
    let mut scratch = MinorScratch::new();
    let mut out = HashMap::new();
    for s in crate::multiindex::enumerate_multiindices(m, k.min(m))? {
        let e = if s.is_empty() { MinorExpansion::identity_row() } else { MinorExpansion::new(r, m, &rows_of(s), &mut scratch) };
        out.insert(s, e);
    }
    Ok(out)
}

/// Transfer matrix of `Φ^*` on monomials of order `≤ k` (even environments).
pub fn transfer_matrix(spec: &ChannelSpec, k: usize) -> Result<MomentTransferMatrix> {
    require_even(&spec.gamma, "the moment transfer matrix")?;
    let m = spec.m;
    let basis = basis_keys(m, k)?;
    let index: HashMap<MonomialKey, usize> = basis.iter().enumerate().map(|(n, key)| (*key, n)).collect();
    let exps = expansions_up_to(&spec.r, m, k)?;
    let d = basis.len();
    let mut data = CMat::zeros(d, d);
    for (row, key) in basis.iter().enumerate() {
        let left = &exps[&key.creation];
        let right = &exps[&key.annihilation];
        contract(left, right, &spec.gamma, C64::new(1.0, 0.0), true, &mut |out_key, v| {
            let col = index[&out_key];
            data[(row, col)] += v;
        });
    }
    for c in 0..d {
        for r in 0..d {
            if data[(r, c)].norm() < PRUNE_THRESHOLD {
                data[(r, c)] = ZERO;
            }
        }
    }
    Ok(MomentTransferMatrix { m, k, basis, data })
}

/// Output moments `⟨f_J^† f_I⟩_out = Σ T[(J,I),(K,L)] ⟨f_K^† f_L⟩_in`.
pub fn apply_transfer(t: &MomentTransferMatrix, moments: &[C64]) -> Result<Vec<C64>> {
    crate::linalg::mat_vec(&t.data, moments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{gamma_fock, gamma_from_density, gamma_gaussian, gamma_uniform, gamma_vacuum};
    use crate::fock_oracle::{build_rep, dual_apply, environment_density, expand_in_monomials, expand_with_parity, implement_unitary};
    use crate::linalg::diag;
    use crate::sampling::{random_correlation, random_density, random_dilated_unitary, random_multiindex, random_unitary};
    use crate::multiindex::enumerate_multiindices;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mi(l: &[usize]) -> MultiIndex {
        MultiIndex::from_labels(l).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn identity_spec(m: usize, gamma: CorrelationTensor) -> ChannelSpec {
        ChannelSpec::new(identity(m), CMat::zeros(m, m), gamma).unwrap()
    }

    #[test]
    fn identity_channel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let spec = identity_spec(3, gamma_gaussian(&random_correlation(&mut rng, 3)).unwrap());
        for j in enumerate_multiindices(3, 3).unwrap() {
            for i in enumerate_multiindices(3, 3).unwrap() {
                let p = dual_action_even(&spec, j, i).unwrap();
                assert_eq!(p.len(), 1);
                assert!((p.coeff(&MonomialKey::new(j, i)) - c(1.0, 0.0)).norm() < 1e-15);
            }
        }
        let t = transfer_matrix(&spec, 2).unwrap();
        assert_eq!(t.dim(), 22);
        assert_eq!(basis_dimension(3, 2), 22);
        assert_eq!(max_abs_diff(&t.data, &identity(t.dim())), 0.0);
    }

    #[test]
    fn unitality_and_single_mode_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let w = random_dilated_unitary(&mut rng, 3);
        let spec = ChannelSpec::with_unitary(w, gamma_uniform(3, 2).unwrap()).unwrap();
        let p = dual_action_even(&spec, MultiIndex::EMPTY, MultiIndex::EMPTY).unwrap();
        assert_eq!(p, MonomialPoly::term(MonomialKey::IDENTITY, c(1.0, 0.0)));
        for j in 1..=3 {
            let p = dual_action_even(&spec, MultiIndex::EMPTY, mi(&[j])).unwrap();
            for l in 1..=3 {
                let expect = spec.a()[(j - 1, l - 1)];
                assert!((p.coeff(&MonomialKey::new(MultiIndex::EMPTY, mi(&[l]))) - expect).norm() < 1e-14);
            }
            assert_eq!(p.len(), 3);
        }
        let vac = spec.with_gamma(gamma_vacuum(3).unwrap()).unwrap();
        let p = dual_action_even(&vac, mi(&[2]), mi(&[2])).unwrap();
        for k in 1..=3 {
            for l in 1..=3 {
                let expect = spec.a()[(1, k - 1)].conj() * spec.a()[(1, l - 1)];
                assert!((p.coeff(&MonomialKey::new(mi(&[k]), mi(&[l]))) - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = gamma_vacuum(2).unwrap();
        let err = ChannelSpec::new(identity(2), identity(2), g.clone()).unwrap_err();
        assert!(matches!(err, Error::Constraint(ref s) if s.contains("AA^† + BB^† = 1")));
        assert!(ChannelSpec::new(identity(3), CMat::zeros(3, 3), g.clone()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let odd = gamma_from_density(&random_density(&mut rng, 4)).unwrap();
        let spec = identity_spec(2, odd);
        assert!(matches!(dual_action_even(&spec, mi(&[1]), mi(&[])), Err(Error::NotEven(_))));
        assert!(matches!(transfer_matrix(&spec, 2), Err(Error::NotEven(_))));
        let spec = identity_spec(2, g);
        assert!(matches!(dual_action_special(&spec, mi(&[1]), mi(&[1]), SpecialCase::Fock), Err(Error::Usage(_))));
        assert!(dual_action_even(&spec, mi(&[3]), mi(&[])).is_err());
    }

    #[test]
    fn special_paths_match_even_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let m = 3;
        for _ in 0..3 {
            let w = random_dilated_unitary(&mut rng, m);
            let envs = [
                (gamma_vacuum(m).unwrap(), SpecialCase::Vacuum),
                (gamma_fock(m, random_multiindex(&mut rng, m)).unwrap(), SpecialCase::Fock),
                (gamma_uniform(m, rng.random_range(0..=m)).unwrap(), SpecialCase::Uniform),
                (gamma_gaussian(&random_correlation(&mut rng, m)).unwrap(), SpecialCase::Gaussian),
            ];
            for (g, case) in envs {
                let spec = ChannelSpec::with_unitary(w.clone(), g).unwrap();
                for j in enumerate_multiindices(m, m).unwrap() {
                    for i in enumerate_multiindices(m, m).unwrap() {
                        let a = dual_action_even(&spec, j, i).unwrap();
                        let b = dual_action_special(&spec, j, i, case).unwrap();
                        assert!(a.max_abs_diff(&b) < 1e-12, "{case:?} {j:?} {i:?}");
                    }
                }
            }
        }
        let d = diag(&[c(0.6, 0.0), c(0.0, 0.8)]);
        let b = diag(&[c(0.8, 0.0), c(0.6, 0.0)]);
        let spec = ChannelSpec::new(d, b, gamma_vacuum(2).unwrap()).unwrap();
        let p = dual_action_special(&spec, mi(&[1, 2]), mi(&[1, 2]), SpecialCase::Vacuum).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p.coeff(&MonomialKey::new(mi(&[1, 2]), mi(&[1, 2]))) - c(0.48 * 0.48, 0.0)).norm() < 1e-14);
        let fock_empty = spec.with_gamma(gamma_fock(2, MultiIndex::EMPTY).unwrap()).unwrap();
        let q = dual_action_special(&fock_empty, mi(&[1, 2]), mi(&[1, 2]), SpecialCase::Fock).unwrap();
        assert!(p.max_abs_diff(&q) < 1e-15);
    }

    #[test]
    fn matches_oracle_for_even_and_odd_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let m = 2;
        let rep = build_rep(m).unwrap();
        let w = random_unitary(&mut rng, 2 * m);
        let u = implement_unitary(&w).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = [c(0.0, 0.0); 4];
        psi[0] = c(s, 0.0);
        psi[2] = c(s, 0.0);
        let odd_sigma = CMat::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        let fock = gamma_fock(m, mi(&[1, 2])).unwrap();
        for (gamma, sigma) in [
            (gamma_from_density(&odd_sigma).unwrap(), odd_sigma.clone()),
            (fock.clone(), environment_density(&fock).unwrap()),
        ] {
            let spec = ChannelSpec::with_unitary(w.clone(), gamma).unwrap();
            for j in enumerate_multiindices(m, m).unwrap() {
                for i in enumerate_multiindices(m, m).unwrap() {
                    let x = rep.monomial_matrix(&MonomialKey::new(j, i)).unwrap();
                    let y = dual_apply(&u, &sigma, &x).unwrap();
                    let grade = ((j.len() + i.len()) % 2) as u8;
                    let oracle = expand_with_parity(&rep, &y, grade).unwrap();
                    let ours = dual_action_general(&spec, j, i).unwrap();
                    assert!(ours.max_abs_diff(&oracle) < 1e-8, "{j:?} {i:?}");
                    if spec.gamma().is_even() {
                        let even = dual_action_even(&spec, j, i).unwrap();
                        assert!(even.max_abs_diff(&expand_in_monomials(&rep, &y).unwrap()) < 1e-8);
                    }
                }
            }
        }
        let spec = ChannelSpec::with_unitary(w, gamma_from_density(&odd_sigma).unwrap()).unwrap();
        let p = dual_action_general(&spec, MultiIndex::EMPTY, mi(&[1])).unwrap();
        assert!(p.keys().any(|k| k.parity == 1));
    }
}
