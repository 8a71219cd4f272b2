//! Random matrices, tensors and states for tests, sweeps and benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::kernel::{c64, ComplexMatrix, DenseTensor3, C64};

pub fn gaussian(rng: &mut impl Rng) -> C64 {
    c64(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn hermitian(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let g = gaussian_matrix(rng, n, n);
    (&g + g.adjoint()) * c64(0.5, 0.0)
}

/// Haar-distributed unitary (QR of a Ginibre matrix with the phase fix).
pub fn unitary(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let qr = gaussian_matrix(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..n {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c64(1.0, 0.0) };
        for row in 0..n {
            q[(row, c)] *= phase;
        }
    }
    q
}

pub fn unit_vector(rng: &mut impl Rng, len: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..len).map(|_| gaussian(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

pub fn tensor3(rng: &mut impl Rng, left: usize, phys: usize, right: usize) -> DenseTensor3 {
    DenseTensor3::from_fn(left, phys, right, |_, _, _| gaussian(rng))
}

pub fn positive_vector(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.1..1.0)).collect()
}
