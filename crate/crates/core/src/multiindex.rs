//! Multi-indices over fermionic modes, monomial keys, and the minor kernels
//! shared by every Heisenberg-action formula.
//!
//! Mode labels are 1-based on the public surface. Internally a [`MultiIndex`]
//! is a bitmask with bit `l - 1` set for label `l`, so at most 64 modes are
//! addressable.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{det_in_place, CMat, C64};

/// Largest mode count a [`MultiIndex`] can address.
pub const MAX_MODES: usize = 64;

/// Strictly increasing set of mode labels in `1..=m`.
///
/// Ordered by cardinality first, then lexicographically on the sorted labels.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MultiIndex(u64);

impl MultiIndex {
    pub const EMPTY: MultiIndex = MultiIndex(0);

    /// Builds an index from strictly increasing 1-based labels.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut mask = 0u64;
        let mut prev = 0usize;
        for &l in labels {
            if l == 0 || l > MAX_MODES {
                return Err(Error::Range(format!("mode label {l} outside 1..={MAX_MODES}")));
            }
            if l <= prev {
                return Err(Error::Range(format!(
                    "labels must be strictly increasing, got {labels:?}"
                )));
            }
            prev = l;
            mask |= 1 << (l - 1);
        }
        Ok(MultiIndex(mask))
    }

    pub fn single(label: usize) -> Result<Self> {
        Self::from_labels(&[label])
    }

    pub const fn from_mask(mask: u64) -> Self {
        MultiIndex(mask)
    }

    pub const fn mask(self) -> u64 {
        self.0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, label: usize) -> bool {
        label >= 1 && label <= MAX_MODES && self.0 & (1 << (label - 1)) != 0
    }

    pub fn is_subset_of(self, other: MultiIndex) -> bool {
        self.0 & !other.0 == 0
    }

    /// 1-based labels in increasing order.
    pub fn labels(self) -> Vec<usize> {
        self.positions().map(|p| p + 1).collect()
    }

    /// 0-based positions in increasing order.
    pub fn positions(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let p = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(p)
            }
        })
    }

    /// Fails unless every label lies in `1..=m`.
    pub fn check_range(self, m: usize) -> Result<()> {
        if m < MAX_MODES && self.0 >> m != 0 {
            return Err(Error::Range(format!("multi-index {{{self}}} exceeds mode count {m}")));
        }
        Ok(())
    }

    /// Number of members strictly between the two given 0-based positions.
    pub(crate) fn count_between(self, a: usize, b: usize) -> usize {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi <= lo + 1 {
            return 0;
        }
        let span = ((1u128 << hi) - (1u128 << (lo + 1))) as u64;
        (self.0 & span).count_ones() as usize
    }
}

fn lex_cmp(a: u64, b: u64) -> Ordering {
    if a == b {
        return Ordering::Equal;
    }
    // the lowest label in the symmetric difference decides
    let diff = a ^ b;
    let lowest = diff & diff.wrapping_neg();
    if a & lowest != 0 {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| lex_cmp(self.0, other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for l in self.labels() {
            if !first {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
            first = false;
        }
        Ok(())
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(MultiIndex::EMPTY);
        }
        let labels = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Range(format!("bad mode label {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        MultiIndex::from_labels(&labels)
    }
}

/// Key of a normally ordered monomial `f_J^† f_I P^s`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct MonomialKey {
    /// Creation part `J`.
    pub creation: MultiIndex,
    /// Annihilation part `I`.
    pub annihilation: MultiIndex,
    /// Exponent of the parity operator, 0 or 1.
    pub parity: u8,
}

impl MonomialKey {
    pub const IDENTITY: MonomialKey = MonomialKey {
        creation: MultiIndex::EMPTY,
        annihilation: MultiIndex::EMPTY,
        parity: 0,
    };

    pub const fn new(creation: MultiIndex, annihilation: MultiIndex) -> Self {
        MonomialKey { creation, annihilation, parity: 0 }
    }

    pub const fn with_parity(creation: MultiIndex, annihilation: MultiIndex, parity: u8) -> Self {
        MonomialKey { creation, annihilation, parity: parity & 1 }
    }

    /// Total order `|J| + |I|`.
    pub const fn order(&self) -> usize {
        self.creation.len() + self.annihilation.len()
    }

    /// The `(|J|, |I|)` sector.
    pub const fn sector(&self) -> (usize, usize) {
        (self.creation.len(), self.annihilation.len())
    }

    /// Key of the adjoint monomial with the creation and annihilation parts swapped.
    pub const fn swapped(&self) -> Self {
        MonomialKey::with_parity(self.annihilation, self.creation, self.parity)
    }
}

impl Ord for MonomialKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.creation.len().cmp(&other.creation.len()))
            .then_with(|| lex_cmp(self.creation.0, other.creation.0))
            .then_with(|| lex_cmp(self.annihilation.0, other.annihilation.0))
            .then_with(|| self.parity.cmp(&other.parity))
    }
}

impl PartialOrd for MonomialKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MonomialKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.creation, self.annihilation)?;
        if self.parity == 1 {
            f.write_str("|P")?;
        }
        Ok(())
    }
}

impl FromStr for MonomialKey {
    type Err = Error;

    /// Parses `"J|I"` or `"J|I|P"`, e.g. `"1,3|2"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('|').collect();
        match parts.as_slice() {
            [j, i] => Ok(MonomialKey::new(j.parse()?, i.parse()?)),
            [j, i, p] if p.trim() == "P" => Ok(MonomialKey::with_parity(j.parse()?, i.parse()?, 1)),
            _ => Err(Error::Range(format!("bad monomial key {s:?}, expected \"J|I\""))),
        }
    }
}

/// Lexicographic iterator over all `r`-subsets of `1..=m`.
#[derive(Clone, Debug)]
pub struct Combinations {
    m: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Iterator for Combinations {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        if self.done {
            return None;
        }
        let out = MultiIndex(self.idx.iter().fold(0u64, |acc, &p| acc | 1 << p));
        let r = self.idx.len();
        // advance to the next combination
        let mut pos = r;
        loop {
            if pos == 0 {
                self.done = true;
                break;
            }
            pos -= 1;
            if self.idx[pos] < self.m - r + pos {
                self.idx[pos] += 1;
                for q in pos + 1..r {
                    self.idx[q] = self.idx[q - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// All `r`-subsets of `1..=m` in lexicographic order (empty when `r > m`).
pub fn combinations(m: usize, r: usize) -> Combinations {
    Combinations { m, idx: (0..r).collect(), done: r > m }
}

/// All subsets of `1..=m` with at most `max_card` elements, in canonical order.
pub fn enumerate_multiindices(m: usize, max_card: usize) -> Result<Vec<MultiIndex>> {
    if m == 0 || m > MAX_MODES {
        return Err(Error::Range(format!("mode count {m} outside 1..={MAX_MODES}")));
    }
    if max_card > m {
        return Err(Error::Range(format!("max cardinality {max_card} exceeds mode count {m}")));
    }
    Ok((0..=max_card).flat_map(|r| combinations(m, r)).collect())
}

/// Binomial coefficient in exact integer arithmetic; zero outside `0 <= k <= n`.
pub fn binomial(n: i64, k: i64) -> u128 {
    if k < 0 || n < 0 || k > n {
        return 0;
    }
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Rows `rows`, columns `cols` of `x`.
pub fn submatrix(x: &CMat, rows: MultiIndex, cols: MultiIndex) -> Result<CMat> {
    rows.check_range(x.nrows())?;
    cols.check_range(x.ncols())?;
    let r: Vec<usize> = rows.positions().collect();
    let c: Vec<usize> = cols.positions().collect();
    Ok(CMat::from_fn(r.len(), c.len(), |s, t| x[(r[s], c[t])]))
}

/// `det(a_sub | b_sub)` of the horizontal concatenation; the empty determinant is 1.
pub fn concat_det(a_sub: &CMat, b_sub: &CMat) -> Result<C64> {
    let p = a_sub.nrows();
    if b_sub.nrows() != p || a_sub.ncols() + b_sub.ncols() != p {
        return Err(Error::Shape(format!(
            "concatenation of {}x{} and {}x{} is not square",
            a_sub.nrows(),
            a_sub.ncols(),
            b_sub.nrows(),
            b_sub.ncols()
        )));
    }
    let r = a_sub.ncols();
    let mut buf: Vec<C64> = Vec::with_capacity(p * p);
    for s in 0..p {
        for t in 0..p {
            buf.push(if t < r { a_sub[(s, t)] } else { b_sub[(s, t - r)] });
        }
    }
    Ok(det_in_place(&mut buf, p))
}

/// Reusable buffers for minor evaluation in hot loops.
#[derive(Default, Debug, Clone)]
pub struct MinorScratch {
    rows: Vec<usize>,
    cols: Vec<usize>,
    buf: Vec<C64>,
}

impl MinorScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Determinant of `x` restricted to the listed rows and columns (0-based, in order).
    pub fn det(&mut self, x: &CMat, rows: &[usize], cols: &[usize]) -> C64 {
        debug_assert_eq!(rows.len(), cols.len());
        let n = rows.len();
        match n {
            0 => C64::new(1.0, 0.0),
            1 => x[(rows[0], cols[0])],
            2 => {
                x[(rows[0], cols[0])] * x[(rows[1], cols[1])]
                    - x[(rows[0], cols[1])] * x[(rows[1], cols[0])]
            }
            _ => {
                self.buf.clear();
                for &r in rows {
                    for &c in cols {
                        self.buf.push(x[(r, c)]);
                    }
                }
                det_in_place(&mut self.buf, n)
            }
        }
    }

    /// `det(X_{rows_top x cols_left} X_{rows_top x cols_right}; X_{rows_bottom x ...})`
    /// where the bottom rows and right columns are offset by `offset`.
    ///
    /// With `x = (A | B)` and no bottom rows this is `det(A_{I x L} | B_{I x Ω})`;
    /// with `x = W` it is the block minor of `W = (A B; C D)`.
    pub fn block_det(
        &mut self,
        x: &CMat,
        offset: usize,
        rows_top: MultiIndex,
        rows_bottom: MultiIndex,
        cols_left: MultiIndex,
        cols_right: MultiIndex,
    ) -> C64 {
        let mut rows = std::mem::take(&mut self.rows);
        let mut cols = std::mem::take(&mut self.cols);
        rows.clear();
        cols.clear();
        rows.extend(rows_top.positions());
        rows.extend(rows_bottom.positions().map(|p| p + offset));
        cols.extend(cols_left.positions());
        cols.extend(cols_right.positions().map(|p| p + offset));
        let d = if rows.len() == cols.len() { self.det(x, &rows, &cols) } else { C64::new(0.0, 0.0) };
        self.rows = rows;
        self.cols = cols;
        d
    }
}

/// Block minor `det(A_{I×L} B_{I×Ω}; C_{N×L} D_{N×Ω})` of a `2m × 2m` matrix `W`.
pub fn block_det_w(
    w: &CMat,
    i: MultiIndex,
    n: MultiIndex,
    l: MultiIndex,
    omega: MultiIndex,
) -> Result<C64> {
    if w.nrows() != w.ncols() || w.nrows() % 2 != 0 {
        return Err(Error::Shape(format!("W must be 2m x 2m, got {}x{}", w.nrows(), w.ncols())));
    }
    let m = w.nrows() / 2;
    for idx in [i, n, l, omega] {
        idx.check_range(m)?;
    }
    if i.len() + n.len() != l.len() + omega.len() {
        return Err(Error::Shape(format!(
            "|I|+|N| = {} but |L|+|Ω| = {}",
            i.len() + n.len(),
            l.len() + omega.len()
        )));
    }
    Ok(MinorScratch::new().block_det(w, m, i, n, l, omega))
}

/// `(-1)^exponent`.
pub fn sign_pow(exponent: i64) -> f64 {
    if exponent.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}
