//! Seeded random objects used by the device generators.
//!
//! Every generator takes a `ChaCha8Rng` so that a 64-bit seed fixes the
//! whole device.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{c, hermitian_function, re, ComplexMatrix, StateVector};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard complex Gaussian `(x + iy)/√2`.
pub fn complex_gaussian(rng: &mut ChaCha8Rng) -> crate::tensor::C64 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    c(x, y) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> StateVector {
    StateVector::new((0..dim).map(|_| complex_gaussian(rng)).collect())
}

/// Unit vector drawn from the unitarily invariant distribution.
pub fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> StateVector {
    loop {
        let v = gaussian_vector(rng, dim);
        if let Ok(n) = v.to_normalized() {
            return n;
        }
    }
}

/// Orthonormalizes the columns of `m` in order (modified Gram–Schmidt,
/// two passes). Columns that vanish are dropped.
pub fn orthonormalize_columns(m: &ComplexMatrix) -> ComplexMatrix {
    let mut cols: Vec<Vec<crate::tensor::C64>> = Vec::with_capacity(m.cols());
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    for j in 0..m.cols() {
        let mut v: Vec<_> = (0..m.rows()).map(|i| m[(i, j)]).collect();
        for _ in 0..2 {
            for q in &cols {
                let proj: crate::tensor::C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 1e-10 * scale {
            cols.push(v.into_iter().map(|z| z / n).collect());
        }
    }
    ComplexMatrix::from_fn(m.rows(), cols.len(), |i, j| cols[j][i])
}

/// `n × k` matrix with orthonormal columns, unitarily invariant.
pub fn random_isometry(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ComplexMatrix {
    assert!(k <= n, "isometry from {k} into {n} dimensions");
    loop {
        let w = orthonormalize_columns(&gaussian_matrix(rng, n, k));
        if w.cols() == k {
            return w;
        }
    }
}

pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    random_isometry(rng, n, n)
}

/// Hermitian matrix with unit operator norm.
pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let g = gaussian_matrix(rng, n, n);
    let h = g.add(&g.adjoint()).expect("square");
    let norm = h.op_norm();
    if norm > 0.0 {
        h.scale(re(1.0 / norm))
    } else {
        ComplexMatrix::identity(n)
    }
}

/// Density matrix `G G† / tr(G G†)`.
pub fn random_density(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let g = gaussian_matrix(rng, n, n);
    let rho = g.matmul(&g.adjoint()).expect("square");
    let tr = rho.trace().re;
    rho.scale(re(1.0 / tr))
}

/// `exp(−i t H)` for Hermitian `H`.
pub fn unitary_from_generator(h: &ComplexMatrix, t: f64) -> ComplexMatrix {
    hermitian_function(h, |lam| {
        let (s, co) = (-t * lam).sin_cos();
        c(co, s)
    })
    .expect("square generator")
}

/// Random two-outcome effect: `E = V diag(λ) V†` with `λ ∈ [0, 1]`.
pub fn random_effect(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let v = random_unitary(rng, n);
    let lams: Vec<_> = (0..n).map(|_| re(rng.random_range(0.0..=1.0))).collect();
    v.matmul(&ComplexMatrix::diagonal(&lams)).and_then(|m| m.matmul(&v.adjoint())).expect("square")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isometries_have_orthonormal_columns() {
        let mut rng = rng_from_seed(1);
        for (n, k) in [(2, 2), (5, 3), (11, 8), (9, 1)] {
            let w = random_isometry(&mut rng, n, k);
            let gram = w.adjoint().matmul(&w).unwrap();
            assert!(gram.max_abs_diff(&ComplexMatrix::identity(k)) < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_draws() {
        let a = random_isometry(&mut rng_from_seed(9), 4, 2);
        let b = random_isometry(&mut rng_from_seed(9), 4, 2);
        assert_eq!(a, b);
    }

    #[test]
    fn generated_unitary_is_unitary() {
        let mut rng = rng_from_seed(4);
        let h = random_hermitian(&mut rng, 4);
        assert!((h.op_norm() - 1.0).abs() < 1e-12);
        let u = unitary_from_generator(&h, 0.3);
        assert!(u.adjoint().matmul(&u).unwrap().max_abs_diff(&ComplexMatrix::identity(4)) < 1e-12);
    }
}
