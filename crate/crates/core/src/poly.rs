//! Finite linear combinations of normally ordered monomials `f_K^† f_L P^s`.

use std::collections::BTreeMap;
use std::fmt;

use crate::linalg::C64;
use crate::multiindex::MonomialKey;

/// Coefficients with modulus below this are dropped by [`MonomialPoly::pruned`].
pub const PRUNE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonomialPoly {
    terms: BTreeMap<MonomialKey, C64>,
}

impl MonomialPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn term(key: MonomialKey, coeff: C64) -> Self {
        let mut p = Self::zero();
        p.add_term(key, coeff);
        p
    }

    /// Accumulates `coeff` onto `key` without pruning.
    pub fn add_term(&mut self, key: MonomialKey, coeff: C64) {
        *self.terms.entry(key).or_insert(C64::new(0.0, 0.0)) += coeff;
    }

    pub fn coeff(&self, key: &MonomialKey) -> C64 {
        self.terms.get(key).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MonomialKey, &C64)> {
        self.terms.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &MonomialKey> {
        self.terms.keys()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn prune(&mut self, threshold: f64) {
        self.terms.retain(|_, c| c.norm() >= threshold);
    }

    pub fn pruned(mut self) -> Self {
        self.prune(PRUNE_THRESHOLD);
        self
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self { terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect() }
    }

    pub fn add_assign_scaled(&mut self, other: &MonomialPoly, c: C64) {
        for (k, v) in &other.terms {
            self.add_term(*k, v * c);
        }
    }

    pub fn sum(&self, other: &MonomialPoly) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, C64::new(1.0, 0.0));
        out
    }

    pub fn difference(&self, other: &MonomialPoly) -> Self {
        let mut out = self.clone();
        out.add_assign_scaled(other, C64::new(-1.0, 0.0));
        out
    }

    /// Largest coefficient modulus.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Largest coefficient deviation over the union of both supports.
    pub fn max_abs_diff(&self, other: &MonomialPoly) -> f64 {
        self.difference(other).max_abs()
    }

    /// Terms with the given parity exponent.
    pub fn with_parity(&self, parity: u8) -> Self {
        Self { terms: self.terms.iter().filter(|(k, _)| k.parity == parity).map(|(k, v)| (*k, *v)).collect() }
    }

    pub fn into_map(self) -> BTreeMap<MonomialKey, C64> {
        self.terms
    }
}

impl FromIterator<(MonomialKey, C64)> for MonomialPoly {
    fn from_iter<T: IntoIterator<Item = (MonomialKey, C64)>>(iter: T) -> Self {
        let mut p = Self::zero();
        for (k, c) in iter {
            p.add_term(k, c);
        }
        p
    }
}

impl fmt::Display for MonomialPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (k, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({:.6}{:+.6}i)[{}]", c.re, c.im, k)?;
        }
        Ok(())
    }
}
