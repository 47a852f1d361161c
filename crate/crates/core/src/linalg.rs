//! Dense complex linear algebra: determinants, matrix exponential, Hermitian
//! square roots, unitary logarithms, isometry completion, Kronecker products
//! and partial traces.
//!
//! Matrices are `faer::Mat<Complex64>`. Kronecker products and partial traces
//! treat the first factor as the slow index.

use faer::Side;

use crate::error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type CMat = faer::Mat<C64>;

/// Default tolerance for structural checks (hermiticity, unitarity, PSD).
pub const DEFAULT_TOL: f64 = 1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

pub fn identity(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

/// Builds a matrix from row vectors; every row must have the same length.
pub fn from_rows(rows: &[Vec<C64>]) -> Result<CMat> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(Error::Shape("ragged row lengths".into()));
    }
    Ok(CMat::from_fn(n, c, |i, j| rows[i][j]))
}

pub fn to_rows(x: &CMat) -> Vec<Vec<C64>> {
    (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)]).collect()).collect()
}

pub fn diag(values: &[C64]) -> CMat {
    CMat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { ZERO })
}

pub fn adjoint(x: &CMat) -> CMat {
    CMat::from_fn(x.ncols(), x.nrows(), |i, j| x[(j, i)].conj())
}

pub fn scale(x: &CMat, c: C64) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * c)
}

pub fn trace(x: &CMat) -> C64 {
    (0..x.nrows().min(x.ncols())).map(|i| x[(i, i)]).sum()
}

/// Largest entrywise modulus.
pub fn max_abs(x: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            best = best.max(x[(i, j)].norm());
        }
    }
    best
}

/// Largest entrywise modulus of `x - y`; infinite when the shapes differ.
pub fn max_abs_diff(x: &CMat, y: &CMat) -> f64 {
    if x.nrows() != y.nrows() || x.ncols() != y.ncols() {
        return f64::INFINITY;
    }
    let mut best = 0.0f64;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            best = best.max((x[(i, j)] - y[(i, j)]).norm());
        }
    }
    best
}

/// Rejects NaN or infinite entries.
pub fn ensure_finite(x: &CMat, what: &str) -> Result<()> {
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let z = x[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(Error::Constraint(format!("{what} has a non-finite entry at ({i},{j})")));
            }
        }
    }
    Ok(())
}

fn ensure_square(x: &CMat, what: &str) -> Result<usize> {
    if x.nrows() != x.ncols() {
        return Err(Error::Shape(format!("{what} must be square, got {}x{}", x.nrows(), x.ncols())));
    }
    Ok(x.nrows())
}

/// `max |X - X^†|` over entries.
pub fn hermiticity_residual(x: &CMat) -> f64 {
    max_abs_diff(x, &adjoint(x))
}

/// `(X + X^†) / 2`.
pub fn hermitian_part(x: &CMat) -> CMat {
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] + x[(j, i)].conj()) * 0.5)
}

/// `max |X X^† - 1|` over entries.
pub fn unitarity_residual(x: &CMat) -> f64 {
    max_abs_diff(&(x * adjoint(x)), &identity(x.nrows()))
}

/// Determinant of the row-major `n × n` matrix in `buf` by LU with partial
/// pivoting. The buffer is overwritten. The 0 × 0 determinant is 1.
pub fn det_in_place(buf: &mut [C64], n: usize) -> C64 {
    debug_assert!(buf.len() >= n * n);
    let mut det = ONE;
    for k in 0..n {
        let mut piv = k;
        let mut best = buf[k * n + k].norm();
        for r in k + 1..n {
            let v = buf[r * n + k].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return ZERO;
        }
        if piv != k {
            for c in 0..n {
                buf.swap(k * n + c, piv * n + c);
            }
            det = -det;
        }
        let pivot = buf[k * n + k];
        det *= pivot;
        let inv = pivot.inv();
        for r in k + 1..n {
            let factor = buf[r * n + k] * inv;
            if factor == ZERO {
                continue;
            }
            for c in k + 1..n {
                let upd = factor * buf[k * n + c];
                buf[r * n + c] -= upd;
            }
        }
    }
    det
}

pub fn det(x: &CMat) -> Result<C64> {
    let n = ensure_square(x, "determinant argument")?;
    let mut buf: Vec<C64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            buf.push(x[(i, j)]);
        }
    }
    Ok(det_in_place(&mut buf, n))
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// unitary whose columns are the eigenvectors. Only the lower triangle of the
/// Hermitian part is read.
pub fn hermitian_eigen(x: &CMat) -> Result<(Vec<f64>, CMat)> {
    ensure_square(x, "Hermitian eigenproblem")?;
    let h = hermitian_part(x);
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numeric(format!("self-adjoint eigendecomposition failed: {e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn hermitian_eigenvalues(x: &CMat) -> Result<Vec<f64>> {
    Ok(hermitian_eigen(x)?.0)
}

/// Largest singular value (spectral norm).
pub fn spectral_norm(x: &CMat) -> Result<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Ok(0.0);
    }
    let s = x
        .singular_values()
        .map_err(|e| Error::Numeric(format!("singular value decomposition failed: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

fn one_norm(x: &CMat) -> f64 {
    (0..x.ncols())
        .map(|j| (0..x.nrows()).map(|i| x[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn lin_comb(terms: &[(f64, &CMat)], n: usize, diag_shift: f64) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        let mut acc = if i == j { C64::new(diag_shift, 0.0) } else { ZERO };
        for (c, m) in terms {
            acc += m[(i, j)] * *c;
        }
        acc
    })
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

fn pade_solve(u: &CMat, v: &CMat) -> CMat {
    use faer::prelude::Solve;
    let n = u.nrows();
    let p = CMat::from_fn(n, n, |i, j| v[(i, j)] + u[(i, j)]);
    let q = CMat::from_fn(n, n, |i, j| v[(i, j)] - u[(i, j)]);
    q.partial_piv_lu().solve(&p)
}

fn pade_low(a: &CMat, coeffs: &[f64]) -> CMat {
    let n = a.nrows();
    let a2 = a * a;
    // even powers A^0, A^2, A^4, ...
    let mut powers: Vec<CMat> = vec![a2.clone()];
    while 2 * (powers.len() + 1) < coeffs.len() {
        let next = powers.last().unwrap() * &a2;
        powers.push(next);
    }
    let odd: Vec<(f64, &CMat)> =
        powers.iter().enumerate().map(|(k, p)| (coeffs[2 * k + 3], p)).collect();
    let even: Vec<(f64, &CMat)> =
        powers.iter().enumerate().map(|(k, p)| (coeffs[2 * k + 2], p)).collect();
    let u_inner = lin_comb(&odd, n, coeffs[1]);
    let u = a * u_inner;
    let v = lin_comb(&even, n, coeffs[0]);
    pade_solve(&u, &v)
}

/// Matrix exponential by scaling and squaring with Padé approximants of
/// degree 3, 5, 7, 9 or 13.
pub fn expm(x: &CMat) -> Result<CMat> {
    let n = ensure_square(x, "expm argument")?;
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let norm = one_norm(x);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    if !norm.is_finite() {
        return Err(Error::Numeric("expm argument has non-finite entries".into()));
    }
    for (deg, theta) in THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            return Ok(pade_low(x, coeffs));
        }
    }
    let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
    let a = scale(x, C64::new(2f64.powi(-s), 0.0));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_hi = lin_comb(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n, 0.0);
    let u_inner = &a6 * &u_hi;
    let u_inner = lin_comb(&[(1.0, &u_inner), (b[7], &a6), (b[5], &a4), (b[3], &a2)], n, b[1]);
    let u = &a * &u_inner;
    let v_hi = lin_comb(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n, 0.0);
    let v_inner = &a6 * &v_hi;
    let v = lin_comb(&[(1.0, &v_inner), (b[6], &a6), (b[4], &a4), (b[2], &a2)], n, b[0]);
    let mut r = pade_solve(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Eigenvalues in `[-tol, 0)` are clamped to zero.
pub fn hermitian_sqrt(x: &CMat, tol: f64) -> Result<CMat> {
    let n = ensure_square(x, "square-root argument")?;
    let asym = hermiticity_residual(x);
    if asym > tol {
        return Err(Error::Constraint(format!("matrix is not Hermitian (residual {asym:.3e})")));
    }
    let (vals, vecs) = hermitian_eigen(x)?;
    if let Some(&lo) = vals.first() {
        if lo < -tol {
            return Err(Error::Constraint(format!(
                "matrix is not positive semidefinite (eigenvalue {lo:.3e})"
            )));
        }
    }
    let roots: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(CMat::from_fn(n, n, |i, j| {
        (0..n).map(|k| vecs[(i, k)] * roots[k] * vecs[(j, k)].conj()).sum()
    }))
}

/// Hermitian `H` with `exp(-iH) = W`; eigenphases of `W` are taken in `(-π, π]`.
pub fn unitary_log(w: &CMat, tol: f64) -> Result<CMat> {
    let n = ensure_square(w, "unitary")?;
    let res = unitarity_residual(w);
    if res > tol {
        return Err(Error::Constraint(format!("matrix is not unitary (residual {res:.3e})")));
    }
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let evd = w
        .eigen()
        .map_err(|e| Error::Numeric(format!("eigendecomposition failed: {e:?}")))?;
    let lambdas: Vec<C64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();

    // A unitary is normal: eigenvectors of distinct eigenvalues are orthogonal,
    // and a degenerate eigenspace only needs re-orthonormalising.
    let mut assigned = vec![false; n];
    let mut basis = CMat::zeros(n, n);
    let mut phases = vec![0.0f64; n];
    let mut filled = 0;
    for a in 0..n {
        if assigned[a] {
            continue;
        }
        let cluster: Vec<usize> =
            (a..n).filter(|&b| !assigned[b] && (lambdas[b] - lambdas[a]).norm() < 1e-7).collect();
        let block = CMat::from_fn(n, cluster.len(), |i, j| u[(i, cluster[j])]);
        let q = block.qr().compute_thin_Q();
        for (c, &b) in cluster.iter().enumerate() {
            assigned[b] = true;
            let col: Vec<C64> = (0..n).map(|i| q[(i, c)]).collect();
            let wq: Vec<C64> = (0..n).map(|i| (0..n).map(|k| w[(i, k)] * col[k]).sum()).collect();
            let rayleigh: C64 = (0..n).map(|i| col[i].conj() * wq[i]).sum();
            phases[filled] = -rayleigh.arg();
            for i in 0..n {
                basis[(i, filled)] = col[i];
            }
            filled += 1;
        }
    }
    let h = CMat::from_fn(n, n, |i, j| {
        (0..n).map(|k| basis[(i, k)] * phases[k] * basis[(j, k)].conj()).sum()
    });
    let h = hermitian_part(&h);
    let back = expm(&scale(&h, C64::new(0.0, -1.0)))?;
    let err = max_abs_diff(&back, w);
    if err > 1e-9_f64.max(tol) {
        return Err(Error::Numeric(format!("unitary logarithm failed to reconstruct W ({err:.3e})")));
    }
    Ok(h)
}

/// Completes the isometry `(A | B)` to a unitary `W = (A B; C D)`.
///
/// `C, D` span the orthogonal complement of the row space of `(A | B)`; any
/// such completion is valid and the top blocks are copied exactly.
pub fn complete_isometry(a: &CMat, b: &CMat, tol: f64) -> Result<CMat> {
    let m = ensure_square(a, "A")?;
    if b.nrows() != m || b.ncols() != m {
        return Err(Error::Shape(format!("B must be {m}x{m}, got {}x{}", b.nrows(), b.ncols())));
    }
    let r = CMat::from_fn(m, 2 * m, |i, j| if j < m { a[(i, j)] } else { b[(i, j - m)] });
    let res = max_abs_diff(&(&r * adjoint(&r)), &identity(m));
    if res > tol {
        return Err(Error::Constraint(format!(
            "AA^† + BB^† = 1 violated (residual {res:.3e})"
        )));
    }
    let q = adjoint(&r).qr().compute_Q();
    Ok(CMat::from_fn(2 * m, 2 * m, |i, j| {
        if i < m {
            r[(i, j)]
        } else {
            q[(j, i)].conj()
        }
    }))
}

/// Kronecker product; the first factor is the slow index.
pub fn kron(x: &CMat, y: &CMat) -> CMat {
    let (ry, cy) = (y.nrows(), y.ncols());
    CMat::from_fn(x.nrows() * ry, x.ncols() * cy, |r, c| x[(r / ry, c / cy)] * y[(r % ry, c % cy)])
}

/// Trace over the second (fast) factor of a `(d1·d2) × (d1·d2)` matrix.
pub fn partial_trace_second(x: &CMat, d1: usize, d2: usize) -> Result<CMat> {
    if x.nrows() != d1 * d2 || x.ncols() != d1 * d2 {
        return Err(Error::Shape(format!(
            "partial trace expects {}x{}, got {}x{}",
            d1 * d2,
            d1 * d2,
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(CMat::from_fn(d1, d1, |i, j| (0..d2).map(|k| x[(i * d2 + k, j * d2 + k)]).sum()))
}

/// Matrix-vector product.
pub fn mat_vec(x: &CMat, v: &[C64]) -> Result<Vec<C64>> {
    if x.ncols() != v.len() {
        return Err(Error::Shape(format!("vector of length {} for {} columns", v.len(), x.ncols())));
    }
    Ok((0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)] * v[j]).sum()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_complex, random_contraction, random_hermitian, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn leibniz(x: &CMat) -> C64 {
        fn perms(n: usize) -> Vec<(Vec<usize>, f64)> {
            if n == 0 {
                return vec![(vec![], 1.0)];
            }
            let mut out = Vec::new();
            for (p, s) in perms(n - 1) {
                for pos in 0..n {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    let sign = if (n - 1 - pos) % 2 == 0 { s } else { -s };
                    out.push((q, sign));
                }
            }
            out
        }
        let n = x.nrows();
        perms(n)
            .into_iter()
            .map(|(p, s)| (0..n).map(|i| x[(i, p[i])]).product::<C64>() * s)
            .sum()
    }

    #[test]
    fn det_examples() {
        assert_eq!(det(&identity(3)).unwrap(), c(1.0, 0.0));
        assert_eq!(det(&diag(&[c(2.0, 0.0), c(0.0, 3.0)])).unwrap(), c(0.0, 6.0));
        assert_eq!(det(&CMat::zeros(0, 0)).unwrap(), c(1.0, 0.0));
        assert!(det(&CMat::zeros(2, 3)).is_err());
    }

    #[test]
    fn det_matches_leibniz() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=4 {
            let x = random_complex(&mut rng, n, n);
            let d = det(&x).unwrap();
            let l = leibniz(&x);
            assert!((d - l).norm() <= 1e-10 * l.norm().max(1.0), "n={n}: {d} vs {l}");
        }
    }

    #[test]
    fn det_is_multiplicative() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in 1..=6 {
            let x = random_complex(&mut rng, n, n);
            let y = random_complex(&mut rng, n, n);
            let lhs = det(&(&x * &y)).unwrap();
            let rhs = det(&x).unwrap() * det(&y).unwrap();
            assert!((lhs - rhs).norm() <= 1e-9 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn expm_examples() {
        assert!(max_abs_diff(&expm(&CMat::zeros(3, 3)).unwrap(), &identity(3)) == 0.0);
        let e = expm(&diag(&[c(0.0, std::f64::consts::PI)])).unwrap();
        assert!((e[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expm_inverse_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for scale_to in [0.01, 0.2, 0.9, 2.0, 5.0] {
            let x = random_complex(&mut rng, 6, 6);
            let x = scale(&x, c(scale_to / spectral_norm(&x).unwrap(), 0.0));
            let p = expm(&x).unwrap() * expm(&scale(&x, c(-1.0, 0.0))).unwrap();
            assert!(max_abs_diff(&p, &identity(6)) <= 1e-9, "norm {scale_to}");
        }
    }

    #[test]
    fn expm_matches_taylor_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = scale(&random_complex(&mut rng, 5, 5), c(0.3, 0.0));
        let mut term = identity(5);
        let mut sum = identity(5);
        for k in 1..60 {
            term = scale(&(&term * &x), c(1.0 / k as f64, 0.0));
            sum = &sum + &term;
        }
        assert!(max_abs_diff(&expm(&x).unwrap(), &sum) <= 1e-12);
    }

    #[test]
    fn sqrt_examples() {
        let s = hermitian_sqrt(&identity(2), DEFAULT_TOL).unwrap();
        assert!(max_abs_diff(&s, &identity(2)) < 1e-14);
        let s = hermitian_sqrt(&diag(&[c(4.0, 0.0), c(0.0, 0.0)]), DEFAULT_TOL).unwrap();
        assert!(max_abs_diff(&s, &diag(&[c(2.0, 0.0), c(0.0, 0.0)])) < 1e-14);
        let bad = diag(&[c(-1.0, 0.0)]);
        assert!(matches!(hermitian_sqrt(&bad, DEFAULT_TOL), Err(Error::Constraint(_))));
        let mut asym = identity(2);
        asym[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(hermitian_sqrt(&asym, DEFAULT_TOL), Err(Error::Constraint(_))));
    }

    #[test]
    fn sqrt_of_contraction_defect() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..5 {
            let a = random_contraction(&mut rng, 4);
            let x = &identity(4) - &a * adjoint(&a);
            let y = hermitian_sqrt(&x, DEFAULT_TOL).unwrap();
            assert!(max_abs_diff(&(&y * &y), &x) <= 1e-9);
            assert!(hermiticity_residual(&y) <= 1e-12);
        }
    }

    #[test]
    fn unitary_log_examples() {
        let h = unitary_log(&identity(3), DEFAULT_TOL).unwrap();
        assert!(max_abs(&h) < 1e-12);
        let w = diag(&[C64::from_polar(1.0, std::f64::consts::FRAC_PI_2)]);
        let h = unitary_log(&w, DEFAULT_TOL).unwrap();
        assert!((h[(0, 0)] - c(-std::f64::consts::FRAC_PI_2, 0.0)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..5 {
            let w = random_unitary(&mut rng, 4);
            let h = unitary_log(&w, DEFAULT_TOL).unwrap();
            assert!(hermiticity_residual(&h) < 1e-12);
            let back = expm(&scale(&h, c(0.0, -1.0))).unwrap();
            assert!(max_abs_diff(&back, &w) <= 1e-9);
        }
        assert!(unitary_log(&scale(&identity(2), c(2.0, 0.0)), DEFAULT_TOL).is_err());
    }

    #[test]
    fn unitary_log_degenerate_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v = random_unitary(&mut rng, 4);
        let phases = [c(0.0, 1.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, 1.0)];
        let w = &v * diag(&phases) * adjoint(&v);
        let h = unitary_log(&w, DEFAULT_TOL).unwrap();
        assert!(max_abs_diff(&expm(&scale(&h, c(0.0, -1.0))).unwrap(), &w) <= 1e-9);
    }

    #[test]
    fn isometry_completion() {
        let m = 2;
        let id = identity(m);
        let zero = CMat::zeros(m, m);
        for (a, b) in [(id.clone(), zero.clone()), (zero.clone(), id.clone())] {
            let w = complete_isometry(&a, &b, DEFAULT_TOL).unwrap();
            for i in 0..m {
                for j in 0..m {
                    assert_eq!(w[(i, j)], a[(i, j)]);
                    assert_eq!(w[(i, j + m)], b[(i, j)]);
                }
            }
            assert!(unitarity_residual(&w) <= 1e-10);
            assert!(max_abs_diff(&(adjoint(&w) * &w), &identity(2 * m)) <= 1e-10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let a = random_contraction(&mut rng, 3);
        let b = hermitian_sqrt(&(&identity(3) - &a * adjoint(&a)), DEFAULT_TOL).unwrap();
        let w = complete_isometry(&a, &b, DEFAULT_TOL).unwrap();
        assert!(unitarity_residual(&w) <= 1e-10);
        assert!(complete_isometry(&id, &id, DEFAULT_TOL).is_err());
    }

    #[test]
    fn kron_examples() {
        assert!(max_abs_diff(&kron(&identity(2), &identity(2)), &identity(4)) == 0.0);
        let k = kron(&diag(&[c(1.0, 0.0), c(2.0, 0.0)]), &identity(2));
        assert!(max_abs_diff(&k, &diag(&[c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0)])) == 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_complex(&mut rng, 2, 2);
        let y = random_complex(&mut rng, 3, 3);
        let k = kron(&x, &y);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    for q in 0..3 {
                        assert_eq!(k[(i * 3 + p, j * 3 + q)], x[(i, j)] * y[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let r = random_complex(&mut rng, 2, 2);
        let s = random_complex(&mut rng, 3, 3);
        let pt = partial_trace_second(&kron(&r, &s), 2, 3).unwrap();
        assert!(max_abs_diff(&pt, &scale(&r, trace(&s))) <= 1e-14);
        let pt = partial_trace_second(&identity(4), 2, 2).unwrap();
        assert!(max_abs_diff(&pt, &scale(&identity(2), c(2.0, 0.0))) == 0.0);
        let h = random_hermitian(&mut rng, 4);
        let pt = partial_trace_second(&h, 2, 2).unwrap();
        assert!((trace(&pt) - trace(&h)).norm() < 1e-14);
        assert!(partial_trace_second(&identity(5), 2, 2).is_err());
    }
}
