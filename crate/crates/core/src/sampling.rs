//! Seeded random matrices and states for property tests and randomized runs.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::matcore::ComplexMatrix;

pub use rand_chacha::ChaCha8Rng as SeededRng;

pub fn seeded(seed: u64) -> SeededRng {
    rand::SeedableRng::seed_from_u64(seed)
}

fn normal(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| normal(rng)).collect()
}

/// Dense matrix with independent complex Gaussian entries.
pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Hermitian matrix `(G + G^H) / 2` with Gaussian `G`, scaled by `scale`.
pub fn random_hermitian(rng: &mut impl Rng, n: usize, scale: f64) -> ComplexMatrix {
    let g = random_matrix(rng, n, n);
    (&g + &g.adjoint()).scale_real(0.5 * scale)
}

/// Haar-like unitary from Gram-Schmidt on Gaussian columns.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    loop {
        let g = random_matrix(rng, n, n);
        let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut ok = true;
        for j in 0..n {
            let mut v = g.column(j);
            for _ in 0..2 {
                for q in &cols {
                    let p: Complex64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (x, y) in v.iter_mut().zip(q) {
                        *x -= p * y;
                    }
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            v.iter_mut().for_each(|z| *z /= norm);
            cols.push(v);
        }
        if ok {
            return ComplexMatrix::from_fn(n, n, |i, j| cols[j][i]);
        }
    }
}

/// Hermitian `V diag(d) V^H` with eigenvalues uniform in `[lo, hi]`.
pub fn random_hermitian_with_spectrum(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> ComplexMatrix {
    let v = random_unitary(rng, n);
    let dist = Uniform::new_inclusive(lo, hi);
    let d: Vec<f64> = (0..n).map(|_| rng.sample(dist)).collect();
    let m = &(&v * &ComplexMatrix::real_diag(&d)) * &v.adjoint();
    m.hermitian_part()
}
