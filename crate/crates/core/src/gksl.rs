//! GKSL generators `𝓛^*(X) = Φ^*(X) - Γ_{∅;∅} X`, optionally with a quadratic
//! Hamiltonian, and the closed linear ODE they induce on moments of bounded
//! order.
//!
//! Hamiltonian convention: `Ĥ = Σ_{ab} H_ab f_a^† f_b` generates
//! `𝓛_H^*(X) = -i[Ĥ, X]`, i.e. `df_l/dt = i (H f)_l` and
//! `df_j^†/dt = -i Σ_b conj(H_jb) f_b^†`, matching `A(t) = e^{iHt}` for the
//! mode transformation. In the Schrödinger picture this is `𝓛_H(ρ) = i[Ĥ, ρ]`.

use std::collections::{BTreeMap, BTreeSet};

use crate::channel::{basis_keys, dual_action_even, transfer_matrix, ChannelSpec};
use crate::error::{Error, Result};
use crate::linalg::{expm, hermiticity_residual, identity, kron, mat_vec, scale, CMat, C64};
use crate::multiindex::{combinations, MonomialKey, MultiIndex};
use crate::poly::MonomialPoly;

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Largest dimension `m^{p+q}` accepted by [`tensor_power_evolution`].
pub const MAX_TENSOR_DIM: usize = 1024;

/// `Φ^*(f_J^† f_I) - Γ_{∅;∅} f_J^† f_I`.
pub fn generator_action(spec: &ChannelSpec, j: MultiIndex, i: MultiIndex) -> Result<MonomialPoly> {
    let mut out = dual_action_even(spec, j, i)?;
    out.add_term(MonomialKey::new(j, i), -spec.gamma().normalization());
    Ok(out.pruned())
}

fn check_hamiltonian(h: &CMat, m: usize) -> Result<()> {
    if h.nrows() != m || h.ncols() != m {
        return Err(Error::Shape(format!("Hamiltonian must be {m}x{m}, got {}x{}", h.nrows(), h.ncols())));
    }
    crate::linalg::ensure_finite(h, "Hamiltonian")?;
    let res = hermiticity_residual(h);
    if res > 1e-9 {
        return Err(Error::Constraint(format!("Hamiltonian is not Hermitian (residual {res:.3e})")));
    }
    Ok(())
}

/// Replaces one member of `set` by `b`; returns the new set and the sign of
/// restoring increasing order, or `None` if `b` is already present elsewhere.
fn replace_one(set: MultiIndex, old: usize, b: usize) -> Option<(MultiIndex, f64)> {
    if b == old {
        return Some((set, 1.0));
    }
    if set.mask() >> b & 1 == 1 {
        return None;
    }
    let moved = MultiIndex::from_mask(set.mask() & !(1u64 << old) | 1u64 << b);
    let sign = if set.count_between(old, b) % 2 == 0 { 1.0 } else { -1.0 };
    Some((moved, sign))
}

/// `-i[Ĥ, f_J^† f_I]` expanded by replacing one index at a time.
pub fn hamiltonian_action(h: &CMat, j: MultiIndex, i: MultiIndex) -> Result<MonomialPoly> {
    let m = h.nrows();
    check_hamiltonian(h, m)?;
    j.check_range(m)?;
    i.check_range(m)?;
    let mut out = MonomialPoly::zero();
    for old in i.positions() {
        for b in 0..m {
            let hv = h[(old, b)];
            if hv == ZERO {
                continue;
            }
            if let Some((ni, s)) = replace_one(i, old, b) {
                out.add_term(MonomialKey::new(j, ni), I * hv * s);
            }
        }
    }
    for old in j.positions() {
        for b in 0..m {
            let hv = h[(old, b)];
            if hv == ZERO {
                continue;
            }
            if let Some((nj, s)) = replace_one(j, old, b) {
                out.add_term(MonomialKey::new(nj, i), -I * hv.conj() * s);
            }
        }
    }
    Ok(out.pruned())
}

/// Closed linear system `dμ/dt = (G + H_part) μ` for moments
/// `μ_{(J,I)} = ⟨f_J^† f_I⟩` with `|J| + |I| ≤ k`.
#[derive(Debug, Clone)]
pub struct MomentOdeSystem {
    pub m: usize,
    pub k: usize,
    pub basis: Vec<MonomialKey>,
    /// `T - Γ_{∅;∅} 1` with `T` the transfer matrix of `Φ^*`.
    pub generator: CMat,
    pub hamiltonian_part: Option<CMat>,
}

pub fn moment_ode_system(spec: &ChannelSpec, k: usize, h: Option<&CMat>) -> Result<MomentOdeSystem> {
    let t = transfer_matrix(spec, k)?;
    let d = t.dim();
    let gamma0 = spec.gamma().normalization();
    let mut generator = t.data;
    for n in 0..d {
        generator[(n, n)] -= gamma0;
    }
    let hamiltonian_part = match h {
        Some(h) => Some(hamiltonian_matrix(h, &t.basis)?),
        None => None,
    };
    Ok(MomentOdeSystem { m: t.m, k, basis: t.basis, generator, hamiltonian_part })
}

/// Matrix of `-i[Ĥ, ·]` over a basis closed under index replacement.
pub fn hamiltonian_matrix(h: &CMat, basis: &[MonomialKey]) -> Result<CMat> {
    let index: BTreeMap<MonomialKey, usize> = basis.iter().enumerate().map(|(n, k)| (*k, n)).collect();
    let d = basis.len();
    let mut out = CMat::zeros(d, d);
    for (row, key) in basis.iter().enumerate() {
        for (k, c) in hamiltonian_action(h, key.creation, key.annihilation)?.iter() {
            let col = index
                .get(k)
                .ok_or_else(|| Error::Shape(format!("basis is not closed under the Hamiltonian action ([{k}])")))?;
            out[(row, *col)] = *c;
        }
    }
    Ok(out)
}

fn closure_contains(top: (usize, usize), s: (usize, usize)) -> bool {
    s.0 <= top.0 && s.1 <= top.1 && (top.0 - s.0 + top.1 - s.1) % 2 == 0
}

impl MomentOdeSystem {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `G + H_part`.
    pub fn total(&self) -> CMat {
        match &self.hamiltonian_part {
            Some(h) => &self.generator + h,
            None => self.generator.clone(),
        }
    }

    /// Generator of the sum of several GKSL generators over a common basis.
    pub fn sum(systems: &[&MomentOdeSystem]) -> Result<MomentOdeSystem> {
        let first = systems.first().ok_or_else(|| Error::Usage("cannot sum an empty list of generators".into()))?;
        let mut out = (*first).clone();
        for s in &systems[1..] {
            if s.m != out.m || s.k != out.k || s.basis != out.basis {
                return Err(Error::Shape("generators live on different moment bases".into()));
            }
            out.generator = &out.generator + &s.generator;
            out.hamiltonian_part = match (&out.hamiltonian_part, &s.hamiltonian_part) {
                (Some(a), Some(b)) => Some(a + b),
                (Some(a), None) | (None, Some(a)) => Some(a.clone()),
                (None, None) => None,
            };
        }
        Ok(out)
    }

    /// `exp(t (G + H_part))` evaluated sector by sector.
    ///
    /// A row in sector `(p, q)` (creation and annihilation counts) only couples
    /// to sectors `(p', q')` with `p' ≤ p`, `q' ≤ q` and an even total drop, so
    /// the span of a sector's downward closure is invariant and the matrix
    /// exponential restricted to it is exact. Falls back to the dense
    /// exponential if the generator does not have this structure.
    pub fn propagator(&self, t: f64) -> Result<CMat> {
        if !(t >= 0.0) {
            return Err(Error::Range(format!("time must be nonnegative, got {t}")));
        }
        let g = self.total();
        let d = self.dim();
        let sector: Vec<(usize, usize)> = self.basis.iter().map(|k| k.sector()).collect();
        for c in 0..d {
            for r in 0..d {
                if g[(r, c)] != ZERO && !closure_contains(sector[r], sector[c]) {
                    return self.propagator_dense(t);
                }
            }
        }
        let sectors: BTreeSet<(usize, usize)> = sector.iter().copied().collect();
        let maximal: Vec<(usize, usize)> = sectors
            .iter()
            .copied()
            .filter(|&s| !sectors.iter().any(|&o| o != s && closure_contains(o, s)))
            .collect();
        let mut out = CMat::zeros(d, d);
        let mut done = vec![false; d];
        for top in maximal {
            let idx: Vec<usize> = (0..d).filter(|&n| closure_contains(top, sector[n])).collect();
            let n = idx.len();
            let sub = CMat::from_fn(n, n, |a, b| g[(idx[a], idx[b])] * t);
            let e = expm(&sub)?;
            for (a, &row) in idx.iter().enumerate() {
                if done[row] {
                    continue;
                }
                done[row] = true;
                for (b, &col) in idx.iter().enumerate() {
                    out[(row, col)] = e[(a, b)];
                }
            }
        }
        debug_assert!(done.iter().all(|&x| x));
        Ok(out)
    }

    /// Plain dense `exp(t (G + H_part))`.
    pub fn propagator_dense(&self, t: f64) -> Result<CMat> {
        expm(&scale(&self.total(), C64::new(t, 0.0)))
    }
}

/// `exp(t (G + H_part)) μ_0`.
pub fn evolve_moments(sys: &MomentOdeSystem, mu0: &[C64], t: f64) -> Result<Vec<C64>> {
    if mu0.len() != sys.dim() {
        return Err(Error::Shape(format!("moment vector has length {}, expected {}", mu0.len(), sys.dim())));
    }
    mat_vec(&sys.propagator(t)?, mu0)
}

/// Moments at every time of a strictly increasing, nonnegative grid.
pub fn trajectory(sys: &MomentOdeSystem, mu0: &[C64], t_grid: &[f64]) -> Result<Vec<Vec<C64>>> {
    check_time_grid(t_grid)?;
    t_grid.iter().map(|&t| evolve_moments(sys, mu0, t)).collect()
}

pub fn check_time_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::Range("time grid must be finite and nonnegative".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Range("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn tensor_operator(a: &CMat, p: usize, q: usize) -> Result<CMat> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(Error::Shape(format!("A must be square, got {}x{}", m, a.ncols())));
    }
    let n = m.checked_pow((p + q) as u32).unwrap_or(usize::MAX);
    if n > MAX_TENSOR_DIM {
        return Err(Error::Resource(format!("tensor power dimension {n} exceeds {MAX_TENSOR_DIM}")));
    }
    let conj = CMat::from_fn(m, m, |i, j| a[(i, j)].conj());
    let mut out = identity(1);
    for _ in 0..p {
        out = kron(&out, &conj);
    }
    for _ in 0..q {
        out = kron(&out, a);
    }
    Ok(out)
}

/// `exp(γ_0 t [conj(A)^{⊗p} ⊗ A^{⊗q} - 1])` on full tensor indices
/// `(j_1 … j_p, i_1 … i_q)`, first slot slowest.
///
/// The creation slots use the entrywise conjugate, matching
/// `Φ^*(f_j^†) = Σ_k conj(A_jk) f_k^†`.
pub fn tensor_power_evolution(a: &CMat, p: usize, q: usize, gamma0: C64, t: f64) -> Result<CMat> {
    let op = tensor_operator(a, p, q)?;
    let n = op.nrows();
    let gen = CMat::from_fn(n, n, |r, c| {
        let delta = if r == c { C64::new(1.0, 0.0) } else { ZERO };
        (op[(r, c)] - delta) * gamma0 * t
    });
    expm(&gen)
}

fn permutations_with_sign(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    if items.is_empty() {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for (pos, &first) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(pos);
        let s = if pos % 2 == 0 { 1.0 } else { -1.0 };
        for (mut tail, ts) in permutations_with_sign(&rest) {
            tail.insert(0, first);
            out.push((tail, s * ts));
        }
    }
    out
}

/// Restricts a full-tensor matrix on `p` creation and `q` annihilation slots
/// to ordered multi-indices: entry `((J,I),(K,L)) = Σ_{π,τ} sgn π sgn τ
/// E[(J,I), (πK, τL)]`. Rows and columns follow the canonical key order.
pub fn antisymmetrized_block(e: &CMat, m: usize, p: usize, q: usize) -> Result<(Vec<MonomialKey>, CMat)> {
    let n = m.pow((p + q) as u32);
    if e.nrows() != n || e.ncols() != n {
        return Err(Error::Shape(format!("expected a {n}x{n} tensor matrix")));
    }
    let mut keys: Vec<MonomialKey> = Vec::new();
    for j in combinations(m, p) {
        for i in combinations(m, q) {
            keys.push(MonomialKey::new(j, i));
        }
    }
    keys.sort();
    let flat = |slots: &[usize]| slots.iter().fold(0usize, |acc, &s| acc * m + s);
    let ordered = |key: &MonomialKey| -> Vec<usize> { key.creation.positions().chain(key.annihilation.positions()).collect() };
    let d = keys.len();
    let mut out = CMat::zeros(d, d);
    for (r, rk) in keys.iter().enumerate() {
        let row = flat(&ordered(rk));
        for (c, ck) in keys.iter().enumerate() {
            let kpos: Vec<usize> = ck.creation.positions().collect();
            let lpos: Vec<usize> = ck.annihilation.positions().collect();
            let mut acc = ZERO;
            for (pk, sk) in permutations_with_sign(&kpos) {
                for (pl, sl) in permutations_with_sign(&lpos) {
                    let slots: Vec<usize> = pk.iter().chain(pl.iter()).copied().collect();
                    acc += e[(row, flat(&slots))] * (sk * sl);
                }
            }
            out[(r, c)] = acc;
        }
    }
    Ok((keys, out))
}

/// `i Σ_r 1 ⊗ … ⊗ H ⊗ … ⊗ 1` on `q` annihilation slots.
pub fn kronecker_sum_hamiltonian(h: &CMat, q: usize) -> Result<CMat> {
    let m = h.nrows();
    check_hamiltonian(h, m)?;
    let n = m.checked_pow(q as u32).unwrap_or(usize::MAX);
    if n > MAX_TENSOR_DIM {
        return Err(Error::Resource(format!("tensor power dimension {n} exceeds {MAX_TENSOR_DIM}")));
    }
    let mut out = CMat::zeros(n, n);
    for r in 0..q {
        let mut term = identity(1);
        for s in 0..q {
            term = kron(&term, &if s == r { h.clone() } else { identity(m) });
        }
        out = &out + &term;
    }
    Ok(scale(&out, I))
}

/// Canonical basis keys for `m` modes and order cap `k`.
pub fn moment_basis(m: usize, k: usize) -> Result<Vec<MonomialKey>> {
    basis_keys(m, k)
}
