//! Brute-force Jordan–Wigner realization on the full Fock space.
//!
//! Basis convention: `f_j = Z^{⊗(j-1)} ⊗ S ⊗ 1^{⊗(m-j)}` with `S = [[0,1],[0,0]]`,
//! `Z = diag(1,-1)` and `|0⟩ = (1,0)^T`. Mode 1 is the slowest tensor factor, so
//! the basis state with occupations `n_1 … n_m` has index `Σ_j n_j 2^{m-j}`.
//!
//! For `m = 2` the basis reads
//!
//! | index | `n_1 n_2` | state           |
//! |-------|-----------|-----------------|
//! | 0     | `00`      | `|0⟩`           |
//! | 1     | `01`      | `f_2^†|0⟩`      |
//! | 2     | `10`      | `f_1^†|0⟩`      |
//! | 3     | `11`      | `f_1^† f_2^†|0⟩` |
//!
//! The system and environment families of the combined space,
//! `a_i = f_i ⊗ 1` and `b_i = P ⊗ f_i`, coincide with modes `i` and `m + i` of
//! the `2m`-mode representation.

use std::collections::BTreeMap;

use faer::prelude::Solve;

use crate::environment::{CorrelationTensor, EnvironmentKind};
use crate::error::{Error, Result};
use crate::linalg::{
    adjoint, complete_isometry, expm, hermitian_eigen, identity, kron, max_abs, max_abs_diff,
    partial_trace_second, scale, unitary_log, CMat, C64, DEFAULT_TOL,
};
use crate::multiindex::{enumerate_multiindices, MonomialKey, MultiIndex};
use crate::poly::MonomialPoly;

/// Largest mode count accepted by [`build_rep`].
pub const MAX_REP_MODES: usize = 14;
/// Largest system mode count for operations on the `2^{2m}` combined space.
pub const MAX_COMBINED_MODES: usize = 3;
/// Largest mode count for Gram-system expansions over the `4^m` monomials.
pub const MAX_EXPANSION_MODES: usize = 5;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Jordan–Wigner representation of `m` modes on a `2^m`-dimensional space.
///
/// Operators are stored implicitly: every monomial acts on basis states as a
/// signed partial permutation, and dense matrices are produced on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockRep {
    m: usize,
}

pub fn build_rep(m: usize) -> Result<FockRep> {
    if m == 0 || m > MAX_REP_MODES {
        return Err(Error::Resource(format!(
            "Fock representation supports 1..={MAX_REP_MODES} modes, got {m}"
        )));
    }
    Ok(FockRep { m })
}

fn guard_combined(m: usize) -> Result<()> {
    if m > MAX_COMBINED_MODES {
        return Err(Error::Resource(format!(
            "combined-space oracle supports at most {MAX_COMBINED_MODES} system modes, got {m}"
        )));
    }
    Ok(())
}

impl FockRep {
    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        1 << self.m
    }

    fn bit(&self, label: usize) -> usize {
        self.m - label
    }

    /// `f_j |x⟩` as `(y, sign)`, or `None` when mode `j` is empty.
    pub fn annihilate(&self, label: usize, x: usize) -> Option<(usize, f64)> {
        let b = self.bit(label);
        if x >> b & 1 == 0 {
            return None;
        }
        let before = (x >> (b + 1)).count_ones();
        Some((x ^ (1 << b), if before % 2 == 0 { 1.0 } else { -1.0 }))
    }

    /// `f_j^† |x⟩` as `(y, sign)`, or `None` when mode `j` is occupied.
    pub fn create(&self, label: usize, x: usize) -> Option<(usize, f64)> {
        let b = self.bit(label);
        if x >> b & 1 == 1 {
            return None;
        }
        let before = (x >> (b + 1)).count_ones();
        Some((x ^ (1 << b), if before % 2 == 0 { 1.0 } else { -1.0 }))
    }

    /// `f_J^† f_I P^s |x⟩` with `f_J^† = (f_{j_1}⋯f_{j_q})^†` and `f_I = f_{i_1}⋯f_{i_p}`.
    pub fn apply_monomial(&self, key: &MonomialKey, x: usize) -> Option<(usize, f64)> {
        let mut sign = if key.parity == 1 && x.count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        let mut y = x;
        let ann = key.annihilation.labels();
        for &l in ann.iter().rev() {
            let (ny, s) = self.annihilate(l, y)?;
            y = ny;
            sign *= s;
        }
        for l in key.creation.labels() {
            let (ny, s) = self.create(l, y)?;
            y = ny;
            sign *= s;
        }
        Some((y, sign))
    }

    fn signed_map(&self, key: &MonomialKey) -> Vec<Option<(usize, f64)>> {
        (0..self.dim()).map(|x| self.apply_monomial(key, x)).collect()
    }

    pub fn monomial_matrix(&self, key: &MonomialKey) -> Result<CMat> {
        key.creation.check_range(self.m)?;
        key.annihilation.check_range(self.m)?;
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for x in 0..d {
            if let Some((y, s)) = self.apply_monomial(key, x) {
                out[(y, x)] = C64::new(s, 0.0);
            }
        }
        Ok(out)
    }

    pub fn annihilation(&self, label: usize) -> Result<CMat> {
        self.monomial_matrix(&MonomialKey::new(MultiIndex::EMPTY, MultiIndex::single(label)?))
    }

    pub fn creation(&self, label: usize) -> Result<CMat> {
        self.monomial_matrix(&MonomialKey::new(MultiIndex::single(label)?, MultiIndex::EMPTY))
    }

    pub fn parity(&self) -> CMat {
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| {
            if i != j {
                ZERO
            } else if i.count_ones() % 2 == 0 {
                ONE
            } else {
                -ONE
            }
        })
    }

    pub fn number_op(&self) -> CMat {
        let d = self.dim();
        CMat::from_fn(d, d, |i, j| if i == j { C64::new(i.count_ones() as f64, 0.0) } else { ZERO })
    }

    /// Basis index of the Fock state with the given occupied modes.
    pub fn fock_index(&self, occupied: MultiIndex) -> usize {
        occupied.labels().iter().map(|&l| 1usize << self.bit(l)).sum()
    }

    pub fn fock_projector(&self, occupied: MultiIndex) -> Result<CMat> {
        occupied.check_range(self.m)?;
        let d = self.dim();
        let k = self.fock_index(occupied);
        Ok(CMat::from_fn(d, d, |i, j| if i == k && j == k { ONE } else { ZERO }))
    }

    /// `Tr(X f_J^† f_I P^s)`.
    pub fn trace_with(&self, x: &CMat, key: &MonomialKey) -> C64 {
        let mut acc = ZERO;
        for col in 0..self.dim() {
            if let Some((y, s)) = self.apply_monomial(key, col) {
                acc += x[(col, y)] * s;
            }
        }
        acc
    }

    /// `Σ_{ab} H_ab f_a^† f_b`.
    pub fn quadratic(&self, h: &CMat) -> Result<CMat> {
        if h.nrows() != self.m || h.ncols() != self.m {
            return Err(Error::Shape(format!("one-particle matrix must be {}x{}", self.m, self.m)));
        }
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for a in 1..=self.m {
            for b in 1..=self.m {
                let hab = h[(a - 1, b - 1)];
                if hab == ZERO {
                    continue;
                }
                let key = MonomialKey::new(MultiIndex::single(a)?, MultiIndex::single(b)?);
                for x in 0..d {
                    if let Some((y, s)) = self.apply_monomial(&key, x) {
                        out[(y, x)] += hab * s;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Unitary `U` on this space with `U^† f_l U = (V f)_l`.
    pub fn implement_mode_unitary(&self, v: &CMat) -> Result<CMat> {
        if v.nrows() != self.m || v.ncols() != self.m {
            return Err(Error::Shape(format!("mode transformation must be {}x{}", self.m, self.m)));
        }
        let h = unitary_log(v, DEFAULT_TOL)?;
        let g = self.quadratic(&h)?;
        let u = expm(&scale(&g, C64::new(0.0, -1.0)))?;
        let mut worst = 0.0f64;
        let ud = adjoint(&u);
        for l in 1..=self.m {
            let lhs = &ud * self.annihilation(l)? * &u;
            let mut rhs = CMat::zeros(self.dim(), self.dim());
            for k in 1..=self.m {
                rhs = &rhs + scale(&self.annihilation(k)?, v[(l - 1, k - 1)]);
            }
            worst = worst.max(max_abs_diff(&lhs, &rhs));
        }
        if worst > 1e-8 {
            return Err(Error::Numeric(format!(
                "implemented unitary misses the mode relations by {worst:.3e}"
            )));
        }
        Ok(u)
    }
}

/// Annihilation operators of the combined system ⊗ environment space:
/// `a_i = f_i ⊗ 1` and `b_i = P ⊗ f_i`.
pub fn combined_modes(rep: &FockRep) -> Result<(Vec<CMat>, Vec<CMat>)> {
    guard_combined(rep.m)?;
    let id = identity(rep.dim());
    let p = rep.parity();
    let mut a = Vec::with_capacity(rep.m);
    let mut b = Vec::with_capacity(rep.m);
    for l in 1..=rep.m {
        let f = rep.annihilation(l)?;
        a.push(kron(&f, &id));
        b.push(kron(&p, &f));
    }
    Ok((a, b))
}

/// Unitary `U` on the combined space with `U^† c_l U = (W c)_l`, `c = (a; b)`.
pub fn implement_unitary(w: &CMat) -> Result<CMat> {
    if w.nrows() != w.ncols() || w.nrows() % 2 != 0 || w.nrows() == 0 {
        return Err(Error::Shape(format!("W must be 2m x 2m, got {}x{}", w.nrows(), w.ncols())));
    }
    let m = w.nrows() / 2;
    guard_combined(m)?;
    build_rep(2 * m)?.implement_mode_unitary(w)
}

fn check_square(x: &CMat, d: usize, what: &str) -> Result<()> {
    if x.nrows() != d || x.ncols() != d {
        return Err(Error::Shape(format!("{what} must be {d}x{d}, got {}x{}", x.nrows(), x.ncols())));
    }
    Ok(())
}

fn system_dim(u: &CMat) -> Result<usize> {
    let n = u.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if u.ncols() != n || d * d != n {
        return Err(Error::Shape(format!("combined unitary has invalid size {}x{}", n, u.ncols())));
    }
    Ok(d)
}

/// `Φ(ρ) = Tr_2[U (ρ ⊗ σ) U^†]`.
pub fn channel_apply(u: &CMat, sigma: &CMat, rho: &CMat) -> Result<CMat> {
    let d = system_dim(u)?;
    check_square(sigma, d, "sigma")?;
    check_square(rho, d, "rho")?;
    partial_trace_second(&(u * kron(rho, sigma) * adjoint(u)), d, d)
}

/// `Φ^*(X) = Tr_2[(1 ⊗ σ) U^† (X ⊗ 1) U]`.
pub fn dual_apply(u: &CMat, sigma: &CMat, x: &CMat) -> Result<CMat> {
    let d = system_dim(u)?;
    postselected_dual(u, sigma, &identity(d), x)
}

/// `Φ_E^*(X) = Tr_2[(1 ⊗ σ) U^† (X ⊗ E) U]`.
pub fn postselected_dual(u: &CMat, sigma: &CMat, effect: &CMat, x: &CMat) -> Result<CMat> {
    let d = system_dim(u)?;
    check_square(sigma, d, "sigma")?;
    check_square(effect, d, "effect")?;
    check_square(x, d, "X")?;
    let inner = adjoint(u) * kron(x, effect) * u;
    partial_trace_second(&(kron(&identity(d), sigma) * inner), d, d)
}

/// Gauge-invariant Gaussian density with `Tr(σ f_β^† f_α) = C_{αβ}`.
pub fn gaussian_density(c: &CMat, rep: &FockRep) -> Result<CMat> {
    let m = rep.m;
    check_square(c, m, "C")?;
    crate::environment::validate_correlation(c, DEFAULT_TOL)?;
    let (nu, v) = hermitian_eigen(c)?;
    let nu: Vec<f64> = nu.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    let d = rep.dim();
    let product = CMat::from_fn(d, d, |i, j| {
        if i != j {
            return ZERO;
        }
        let mut w = 1.0;
        for (k, &n) in nu.iter().enumerate() {
            let occupied = i >> (m - 1 - k) & 1 == 1;
            w *= if occupied { n } else { 1.0 - n };
        }
        C64::new(w, 0.0)
    });
    let u = rep.implement_mode_unitary(&v)?;
    let sigma = &u * product * adjoint(&u);
    let mut worst = 0.0f64;
    for a in 1..=m {
        for b in 1..=m {
            let key = MonomialKey::new(MultiIndex::single(b)?, MultiIndex::single(a)?);
            worst = worst.max((rep.trace_with(&sigma, &key) - c[(a - 1, b - 1)]).norm());
        }
    }
    if worst > 1e-9 {
        return Err(Error::Numeric(format!("Gaussian density misses C by {worst:.3e}")));
    }
    Ok(sigma)
}

/// Uniform mixture of all `N`-particle Fock states.
pub fn uniform_density(rep: &FockRep, particles: usize) -> Result<CMat> {
    if particles > rep.m {
        return Err(Error::Range(format!("particle number {particles} exceeds {} modes", rep.m)));
    }
    let states: Vec<usize> = (0..rep.dim()).filter(|x| x.count_ones() as usize == particles).collect();
    let w = 1.0 / states.len() as f64;
    let d = rep.dim();
    Ok(CMat::from_fn(d, d, |i, j| {
        if i == j && i.count_ones() as usize == particles {
            C64::new(w, 0.0)
        } else {
            ZERO
        }
    }))
}

/// Density matrix realizing an environment tensor.
pub fn environment_density(gamma: &CorrelationTensor) -> Result<CMat> {
    let rep = build_rep(gamma.modes())?;
    match gamma.kind() {
        EnvironmentKind::Vacuum => rep.fock_projector(MultiIndex::EMPTY),
        EnvironmentKind::Fock { occupied } => rep.fock_projector(*occupied),
        EnvironmentKind::Uniform { particles } => uniform_density(&rep, *particles),
        EnvironmentKind::Gaussian { c } => gaussian_density(c, &rep),
        EnvironmentKind::Explicit { sigma, .. } => Ok(sigma.clone()),
    }
}

fn all_monomial_keys(m: usize) -> Result<Vec<MonomialKey>> {
    let idx = enumerate_multiindices(m, m)?;
    let mut keys = Vec::with_capacity(idx.len() * idx.len());
    for &j in &idx {
        for &i in &idx {
            keys.push(MonomialKey::new(j, i));
        }
    }
    keys.sort();
    Ok(keys)
}

/// Coefficients of `X = Σ x_{J,I} f_J^† f_I` from the Hilbert–Schmidt Gram
/// system over all `4^m` monomials.
pub fn expand_in_monomials(rep: &FockRep, x: &CMat) -> Result<MonomialPoly> {
    let m = rep.m;
    if m > MAX_EXPANSION_MODES {
        return Err(Error::Resource(format!(
            "monomial expansion supports at most {MAX_EXPANSION_MODES} modes, got {m}"
        )));
    }
    let d = rep.dim();
    check_square(x, d, "operator")?;
    let keys = all_monomial_keys(m)?;
    let n = keys.len();
    let maps: Vec<Vec<Option<(usize, f64)>>> = keys.iter().map(|k| rep.signed_map(k)).collect();

    // Monomials act on basis states as signed partial permutations, so the
    // Gram entries only pair up terms landing on the same output state.
    let mut gram = CMat::zeros(n, n);
    let mut by_col: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); d];
    for (a, map) in maps.iter().enumerate() {
        for (col, t) in map.iter().enumerate() {
            if let Some((y, s)) = t {
                by_col[col].push((a, *y, *s));
            }
        }
    }
    for entries in &by_col {
        for &(a, ya, sa) in entries {
            for &(b, yb, sb) in entries {
                if ya == yb {
                    gram[(a, b)] += C64::new(sa * sb, 0.0);
                }
            }
        }
    }
    let rhs = CMat::from_fn(n, 1, |a, _| {
        maps[a]
            .iter()
            .enumerate()
            .filter_map(|(col, t)| t.map(|(y, s)| x[(y, col)] * s))
            .sum()
    });
    let sol = gram.partial_piv_lu().solve(&rhs);

    let mut recon = CMat::zeros(d, d);
    for (a, map) in maps.iter().enumerate() {
        let c = sol[(a, 0)];
        for (col, t) in map.iter().enumerate() {
            if let Some((y, s)) = t {
                recon[(*y, col)] += c * *s;
            }
        }
    }
    let res = max_abs_diff(&recon, x);
    if !(res <= 1e-9 * max_abs(x).max(1.0)) {
        return Err(Error::Numeric(format!("monomial expansion residual {res:.3e}")));
    }
    let poly: MonomialPoly = keys.iter().enumerate().map(|(a, k)| (*k, sol[(a, 0)])).collect();
    Ok(poly.pruned())
}

/// Splits `X` into `Y_0 + Y_1 P` where `Y_0` carries parity grade `grade`
/// (so `P Y_0 P = (-1)^grade Y_0`) and returns both parts as one polynomial
/// whose `Y_1` keys carry parity exponent 1.
pub fn expand_with_parity(rep: &FockRep, x: &CMat, grade: u8) -> Result<MonomialPoly> {
    let p = rep.parity();
    let pxp = &p * x * &p;
    let sgn = if grade % 2 == 0 { 1.0 } else { -1.0 };
    let same = scale(&(x + scale(&pxp, C64::new(sgn, 0.0))), C64::new(0.5, 0.0));
    let other = x - &same;
    let mut out = expand_in_monomials(rep, &same)?;
    for (k, c) in expand_in_monomials(rep, &(&other * &p))?.iter() {
        out.add_term(MonomialKey::with_parity(k.creation, k.annihilation, 1), *c);
    }
    Ok(out.pruned())
}

/// Dense operator `Σ c_k f_{J_k}^† f_{I_k} P^{s_k}`.
pub fn poly_matrix(rep: &FockRep, poly: &MonomialPoly) -> Result<CMat> {
    let d = rep.dim();
    let mut out = CMat::zeros(d, d);
    for (k, c) in poly.iter() {
        k.creation.check_range(rep.m)?;
        k.annihilation.check_range(rep.m)?;
        for x in 0..d {
            if let Some((y, s)) = rep.apply_monomial(k, x) {
                out[(y, x)] += c * s;
            }
        }
    }
    Ok(out)
}

/// Tabulates `Tr(σ f_Ξ^† f_Ω)` for all `Ξ, Ω`, keyed by `(Ξ, Ω)`.
pub fn correlation_table(rep: &FockRep, sigma: &CMat) -> Result<BTreeMap<(MultiIndex, MultiIndex), C64>> {
    check_square(sigma, rep.dim(), "sigma")?;
    let idx = enumerate_multiindices(rep.m, rep.m)?;
    let mut out = BTreeMap::new();
    for &xi in &idx {
        for &om in &idx {
            out.insert((xi, om), rep.trace_with(sigma, &MonomialKey::new(xi, om)));
        }
    }
    Ok(out)
}

/// Moments `Tr(ρ f_J^† f_I)` over a list of keys.
pub fn moments(rep: &FockRep, rho: &CMat, keys: &[MonomialKey]) -> Vec<C64> {
    keys.iter().map(|k| rep.trace_with(rho, k)).collect()
}

/// Superoperator of `𝓛(ρ) = Φ(ρ) - Tr(σ) ρ + i[Ĥ, ρ]` on row-major
/// vectorized `2^m × 2^m` matrices, with `Ĥ = Σ H_ab f_a^† f_b`.
pub fn liouvillian(u: &CMat, sigma: &CMat, hamiltonian: Option<&CMat>) -> Result<CMat> {
    let d = system_dim(u)?;
    let m = d.trailing_zeros() as usize;
    guard_combined(m)?;
    check_square(sigma, d, "sigma")?;
    let gamma0: C64 = (0..d).map(|i| sigma[(i, i)]).sum();
    let h_op = match hamiltonian {
        Some(h) => Some(build_rep(m)?.quadratic(h)?),
        None => None,
    };
    let n = d * d;
    let mut sup = CMat::zeros(n, n);
    for col in 0..n {
        let unit = CMat::from_fn(d, d, |i, j| if i * d + j == col { ONE } else { ZERO });
        let mut out = channel_apply(u, sigma, &unit)?;
        out = &out - scale(&unit, gamma0);
        if let Some(h) = &h_op {
            let comm = h * &unit - &unit * h;
            out = &out + scale(&comm, C64::new(0.0, 1.0));
        }
        for i in 0..d {
            for j in 0..d {
                sup[(i * d + j, col)] = out[(i, j)];
            }
        }
    }
    Ok(sup)
}

/// `ρ_t = exp(t 𝓛) ρ_0` for a superoperator from [`liouvillian`].
pub fn master_equation_evolve(superop: &CMat, rho0: &CMat, t: f64) -> Result<CMat> {
    let d = rho0.nrows();
    check_square(rho0, d, "rho0")?;
    if superop.nrows() != d * d || superop.ncols() != d * d {
        return Err(Error::Shape("superoperator does not match rho0".into()));
    }
    if t < 0.0 {
        return Err(Error::Range(format!("time must be nonnegative, got {t}")));
    }
    let prop = expm(&scale(superop, C64::new(t, 0.0)))?;
    let mut out = CMat::zeros(d, d);
    for r in 0..d * d {
        let mut acc = ZERO;
        for c in 0..d * d {
            acc += prop[(r, c)] * rho0[(c / d, c % d)];
        }
        out[(r / d, r % d)] = acc;
    }
    Ok(out)
}

/// Combined-space unitary for a channel given only `(A | B)`.
pub fn implement_isometry(a: &CMat, b: &CMat) -> Result<CMat> {
    implement_unitary(&complete_isometry(a, b, DEFAULT_TOL)?)
}
