//! Seeded random instances used by verification, benchmarks and tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{adjoint, identity, scale, spectral_norm, trace, CMat, C64};
use crate::multiindex::MultiIndex;

/// Matrix with i.i.d. standard complex Gaussian entries (`E|z|² = 1`).
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases
/// of `diag(R)` moved into `Q`.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_complex(rng, n, n);
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    let phases: Vec<C64> = (0..n)
        .map(|k| {
            let d = r[(k, k)];
            if d.norm() == 0.0 {
                C64::new(1.0, 0.0)
            } else {
                d / d.norm()
            }
        })
        .collect();
    CMat::from_fn(n, n, |i, j| q[(i, j)] * phases[j])
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_complex(rng, n, n);
    CMat::from_fn(n, n, |i, j| (g[(i, j)] + g[(j, i)].conj()) * 0.5)
}

/// Strict contraction with spectral norm drawn uniformly from `[0.2, 0.95]`.
pub fn random_contraction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = random_complex(rng, n, n);
    let target: f64 = rng.random_range(0.2..0.95);
    let norm = spectral_norm(&g).unwrap_or(1.0).max(f64::MIN_POSITIVE);
    scale(&g, C64::new(target / norm, 0.0))
}

/// Full-rank density matrix `G G^† / Tr(G G^†)`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMat {
    let g = random_complex(rng, dim, dim);
    let p = &g * adjoint(&g);
    let t = trace(&p);
    scale(&p, t.inv())
}

/// Valid second-moment matrix `V diag(ν) V^†` with `ν ∈ [0, 1]`.
pub fn random_correlation<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMat {
    let v = random_unitary(rng, m);
    let nu: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    CMat::from_fn(m, m, |i, j| (0..m).map(|k| v[(i, k)] * nu[k] * v[(j, k)].conj()).sum())
}

/// `H₀ + iγD` with `H₀` Hermitian, `D` positive semidefinite and `γ ∈ [0.1, 1]`,
/// so that `e^{iHt}` is a contraction for `t ≥ 0`.
pub fn random_dissipative<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMat {
    let h0 = random_hermitian(rng, m);
    let g = random_complex(rng, m, m);
    let d = &g * adjoint(&g);
    let gamma: f64 = rng.random_range(0.1..1.0);
    CMat::from_fn(m, m, |i, j| h0[(i, j)] + d[(i, j)] * C64::new(0.0, gamma))
}

/// Uniformly random subset of `{1, …, m}`.
pub fn random_multiindex<R: Rng + ?Sized>(rng: &mut R, m: usize) -> MultiIndex {
    let mut mask = 0u64;
    for p in 0..m {
        if rng.random_bool(0.5) {
            mask |= 1 << p;
        }
    }
    MultiIndex::from_mask(mask)
}

/// `W = (A B; C D)` from a random contraction `A` and `B = (1 - AA^†)^{1/2}`
/// rotated by a random unitary, completed to a unitary.
pub fn random_dilated_unitary<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMat {
    let a = random_contraction(rng, m);
    let defect = &identity(m) - &a * adjoint(&a);
    let b = crate::linalg::hermitian_sqrt(&defect, 1e-9).expect("defect of a contraction is PSD");
    let v = random_unitary(rng, m);
    let b = &b * &v;
    crate::linalg::complete_isometry(&a, &b, 1e-9).expect("(A|B) is an isometry")
}

/// Even effect `0.05 ≤ E ≤ 0.95` on `m` modes: a random Hermitian matrix made
/// parity-even and affinely rescaled in its eigenbasis.
pub fn random_even_effect<R: Rng + ?Sized>(rng: &mut R, m: usize) -> CMat {
    let d = 1usize << m;
    let p = CMat::from_fn(d, d, |a, b| {
        if a != b {
            C64::new(0.0, 0.0)
        } else if a.count_ones() % 2 == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    });
    let x = random_hermitian(rng, d);
    let even = scale(&(&x + &p * &x * &p), C64::new(0.5, 0.0));
    let (ev, v) = crate::linalg::hermitian_eigen(&even).expect("Hermitian input");
    let (lo, hi) = (ev[0], ev[d - 1]);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let vals: Vec<C64> = ev.iter().map(|e| C64::new(0.05 + 0.9 * (e - lo) / span, 0.0)).collect();
    &v * crate::linalg::diag(&vals) * adjoint(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, max_abs_diff, unitarity_residual};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_satisfy_their_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=5 {
            assert!(unitarity_residual(&random_unitary(&mut rng, n)) < 1e-12);
            assert!(spectral_norm(&random_contraction(&mut rng, n)).unwrap() < 0.95 + 1e-12);
            let rho = random_density(&mut rng, n);
            assert!((trace(&rho) - C64::new(1.0, 0.0)).norm() < 1e-12);
            assert!(hermitian_eigenvalues(&rho).unwrap()[0] > -1e-12);
            let c = random_correlation(&mut rng, n);
            let ev = hermitian_eigenvalues(&c).unwrap();
            assert!(ev[0] > -1e-12 && ev[n - 1] < 1.0 + 1e-12);
            let w = random_dilated_unitary(&mut rng, n);
            assert!(unitarity_residual(&w) < 1e-10);
        }
    }

    #[test]
    fn seeding_is_reproducible() {
        let a = random_unitary(&mut ChaCha8Rng::seed_from_u64(9), 3);
        let b = random_unitary(&mut ChaCha8Rng::seed_from_u64(9), 3);
        assert_eq!(max_abs_diff(&a, &b), 0.0);
    }
}
