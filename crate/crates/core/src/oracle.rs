//! Exact references: dense state vectors for short chains and the two-magnon
//! sector of the ferromagnetic Heisenberg chain for long ones.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TebdError};
use crate::hamiltonian::LocalHamiltonian;
use crate::kernel::{self, c64, ComplexMatrix, C64};
use crate::mps::VidalMps;

/// Largest dense Hilbert-space dimension accepted without an explicit cap.
pub const DEFAULT_DENSE_CAP: usize = 16_384;

const UNIT_TOL: f64 = 1e-12;

fn hilbert_dim(n: usize, d: usize, cap: usize) -> Result<usize> {
    match d.checked_pow(n as u32) {
        Some(dim) if dim <= cap => Ok(dim),
        Some(dim) => Err(TebdError::CapExceeded { dim, cap }),
        None => Err(TebdError::CapExceeded { dim: usize::MAX, cap }),
    }
}

/// Normalized state vector over `dⁿ` configurations, site 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    n: usize,
    d: usize,
    amplitudes: DVector<C64>,
}

impl DenseState {
    pub fn new(n: usize, d: usize, amplitudes: DVector<C64>) -> Result<Self> {
        let dim = hilbert_dim(n, d, usize::MAX)?;
        if amplitudes.len() != dim {
            return Err(TebdError::DimensionMismatch(format!(
                "expected {dim} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(TebdError::InvalidArgument(format!("dense state has norm {norm}, expected 1")));
        }
        Ok(Self { n, d, amplitudes })
    }

    pub fn basis(n: usize, d: usize, config: &[usize]) -> Result<Self> {
        let dim = hilbert_dim(n, d, usize::MAX)?;
        if config.len() != n || config.iter().any(|&k| k >= d) {
            return Err(TebdError::IndexOutOfRange(format!("configuration {config:?}")));
        }
        let idx = config.iter().fold(0, |acc, &k| acc * d + k);
        let mut v = DVector::zeros(dim);
        v[idx] = c64(1.0, 0.0);
        Ok(Self { n, d, amplitudes: v })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    /// Applies a unitary acting on `k` consecutive sites starting at `first`,
    /// where `op` is `dᵏ × dᵏ`.
    pub fn apply_local(&mut self, first: usize, op: &ComplexMatrix) -> Result<()> {
        self.amplitudes = apply_local_vector(self.n, self.d, &self.amplitudes, first, op)?;
        Ok(())
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> Result<C64> {
        if op.nrows() != self.amplitudes.len() || op.ncols() != self.amplitudes.len() {
            return Err(TebdError::DimensionMismatch("operator does not match state".into()));
        }
        Ok(self.amplitudes.dotc(&(op * &self.amplitudes)))
    }
}

/// Applies a `dᵏ × dᵏ` operator on sites `first..first + k` of a raw vector.
pub fn apply_local_vector(
    n: usize,
    d: usize,
    v: &DVector<C64>,
    first: usize,
    op: &ComplexMatrix,
) -> Result<DVector<C64>> {
    let block = op.nrows();
    let mut k = 0;
    let mut size = 1;
    while size < block {
        size *= d;
        k += 1;
    }
    if size != block || op.ncols() != block || first + k > n || k == 0 {
        return Err(TebdError::DimensionMismatch(format!(
            "operator of size {}x{} cannot act on sites from {first} of a {n}-site chain",
            op.nrows(),
            op.ncols()
        )));
    }
    let outer = d.pow(first as u32);
    let inner = d.pow((n - first - k) as u32);
    let mut out = DVector::zeros(v.len());
    for o in 0..outer {
        for i in 0..inner {
            for r in 0..block {
                let mut acc = c64(0.0, 0.0);
                for c in 0..block {
                    let x = op[(r, c)];
                    if x != c64(0.0, 0.0) {
                        acc += x * v[(o * block + c) * inner + i];
                    }
                }
                out[(o * block + r) * inner + i] = acc;
            }
        }
    }
    Ok(out)
}

/// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` starting at site `first`.
pub fn dense_local_operator(n: usize, d: usize, first: usize, op: &ComplexMatrix) -> ComplexMatrix {
    let mut k = 0;
    let mut size = 1;
    while size < op.nrows() {
        size *= d;
        k += 1;
    }
    assert!(size == op.nrows() && first + k <= n, "operator does not fit the chain");
    let left = kernel::identity(d.pow(first as u32));
    let right = kernel::identity(d.pow((n - first - k) as u32));
    left.kronecker(op).kronecker(&right)
}

/// Dense `dⁿ × dⁿ` matrix of a local Hamiltonian.
pub fn dense_hamiltonian(h: &LocalHamiltonian) -> ComplexMatrix {
    let (n, d) = (h.n(), h.d());
    let dim = d.pow(n as u32);
    let mut out = ComplexMatrix::zeros(dim, dim);
    for (site, k1) in h.k1().iter().enumerate() {
        out += dense_local_operator(n, d, site, k1);
    }
    for (idx, k2) in h.k2().iter().enumerate() {
        out += dense_local_operator(n, d, idx, k2);
    }
    out
}

pub fn dense_from_mps(state: &VidalMps, cap: usize) -> Result<DenseState> {
    hilbert_dim(state.n(), state.d(), cap)?;
    Ok(DenseState { n: state.n(), d: state.d(), amplitudes: state.to_amplitudes()? })
}

/// Cached eigendecomposition of a dense Hamiltonian.
#[derive(Clone, Debug)]
pub struct DensePropagator {
    n: usize,
    d: usize,
    energies: DVector<f64>,
    vectors: ComplexMatrix,
}

impl DensePropagator {
    pub fn new(h: &LocalHamiltonian, cap: usize) -> Result<Self> {
        hilbert_dim(h.n(), h.d(), cap)?;
        let (energies, vectors) = kernel::hermitian_eigen(&dense_hamiltonian(h))?;
        Ok(Self { n: h.n(), d: h.d(), energies, vectors })
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    pub fn ground_state(&self) -> (f64, DenseState) {
        let v = self.vectors.column(0).into_owned();
        (self.energies[0], DenseState { n: self.n, d: self.d, amplitudes: v })
    }

    /// `exp(-iHt)` applied to a raw vector.
    pub fn evolve_vector(&self, v: &DVector<C64>, t: f64) -> DVector<C64> {
        let mut coeffs = self.vectors.adjoint() * v;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= c64(0.0, -self.energies[k] * t).exp();
        }
        &self.vectors * coeffs
    }

    pub fn evolve(&self, state: &DenseState, t: f64) -> Result<DenseState> {
        if state.n != self.n || state.d != self.d {
            return Err(TebdError::DimensionMismatch("state does not match Hamiltonian".into()));
        }
        Ok(DenseState { n: self.n, d: self.d, amplitudes: self.evolve_vector(&state.amplitudes, t) })
    }
}

/// `exp(-iHt)|ψ⟩` by full diagonalization.
pub fn dense_evolve(state: &DenseState, h: &LocalHamiltonian, t: f64) -> Result<DenseState> {
    DensePropagator::new(h, DEFAULT_DENSE_CAP)?.evolve(state, t)
}

pub fn dense_ground_state(h: &LocalHamiltonian) -> Result<(f64, DenseState)> {
    Ok(DensePropagator::new(h, DEFAULT_DENSE_CAP)?.ground_state())
}

/// Configurations with exactly two flipped spins `(i, j)`, `i < j`, in
/// lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TwoMagnonBasis {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl TwoMagnonBasis {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(TebdError::InvalidArgument(format!("two magnons need n >= 2, got {n}")));
        }
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Ok(Self { n, pairs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn index_of(&self, i: usize, j: usize) -> Option<usize> {
        if i >= j || j >= self.n {
            return None;
        }
        // Rows before i hold (n-1) + (n-2) + ... + (n-i) pairs.
        Some(i * (2 * self.n - i - 1) / 2 + (j - i - 1))
    }

    pub fn configuration(&self, k: usize) -> Vec<usize> {
        let (i, j) = self.pairs[k];
        let mut config = vec![0; self.n];
        config[i] = 1;
        config[j] = 1;
        config
    }

    /// Restriction of `-B Σ σz - J Σ σ·σ` to the sector.
    pub fn ferromagnet_matrix(&self, b_field: f64, j_coupling: f64) -> DMatrix<f64> {
        let n = self.n;
        let dim = self.len();
        let mut h = DMatrix::zeros(dim, dim);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            let flipped = |s: usize| s == i || s == j;
            let spin = |s: usize| if flipped(s) { -1.0 } else { 1.0 };
            let mut diag = -b_field * (n as f64 - 4.0);
            for s in 0..n - 1 {
                diag -= j_coupling * spin(s) * spin(s + 1);
                if flipped(s) != flipped(s + 1) {
                    // σx σx + σy σy swaps |01⟩ and |10⟩ with amplitude 2.
                    let (from, to) = if flipped(s) { (s, s + 1) } else { (s + 1, s) };
                    let (a, b) = if i == from { (to, j) } else { (i, to) };
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    let target = self.index_of(a, b).expect("hop stays in the sector");
                    h[(target, k)] += -2.0 * j_coupling;
                }
            }
            h[(k, k)] += diag;
        }
        h
    }
}

/// Amplitudes over a [`TwoMagnonBasis`].
#[derive(Clone, Debug)]
pub struct TwoMagnonState {
    basis: TwoMagnonBasis,
    amplitudes: DVector<C64>,
}

impl TwoMagnonState {
    pub fn basis(&self) -> &TwoMagnonBasis {
        &self.basis
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, i: usize, j: usize) -> Option<C64> {
        self.basis.index_of(i, j).map(|k| self.amplitudes[k])
    }

    pub fn to_dense(&self, cap: usize) -> Result<DenseState> {
        let n = self.basis.n;
        let dim = hilbert_dim(n, 2, cap)?;
        let mut v = DVector::zeros(dim);
        for (k, &(i, j)) in self.basis.pairs.iter().enumerate() {
            let idx = (1usize << (n - 1 - i)) | (1usize << (n - 1 - j));
            v[idx] = self.amplitudes[k];
        }
        Ok(DenseState { n, d: 2, amplitudes: v })
    }
}

/// Exact propagator of the ferromagnetic chain inside the two-magnon sector.
#[derive(Clone, Debug)]
pub struct TwoMagnonPropagator {
    basis: TwoMagnonBasis,
    energies: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl TwoMagnonPropagator {
    pub fn new(n: usize, b_field: f64, j_coupling: f64) -> Result<Self> {
        let basis = TwoMagnonBasis::new(n)?;
        let h = basis.ferromagnet_matrix(b_field, j_coupling);
        let eig = h
            .try_symmetric_eigen(f64::EPSILON, 100_000)
            .ok_or(TebdError::NoConvergence { routine: "two-magnon eigensolver" })?;
        Ok(Self { basis, energies: eig.eigenvalues, vectors: eig.eigenvectors })
    }

    pub fn basis(&self) -> &TwoMagnonBasis {
        &self.basis
    }

    /// Amplitudes of `exp(-iHt)|init⟩` where `init` flips sites `(i, j)`.
    pub fn evolve(&self, init: (usize, usize), t: f64) -> Result<TwoMagnonState> {
        let (i, j) = init;
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let k0 = self.basis.index_of(i, j).ok_or_else(|| {
            TebdError::IndexOutOfRange(format!("pair {init:?} is not in the two-magnon sector of n={}", self.basis.n))
        })?;
        let dim = self.basis.len();
        let mut amplitudes = DVector::zeros(dim);
        for m in 0..dim {
            let phase = c64(0.0, -self.energies[m] * t).exp() * self.vectors[(k0, m)];
            for r in 0..dim {
                amplitudes[r] += phase * self.vectors[(r, m)];
            }
        }
        Ok(TwoMagnonState { basis: self.basis.clone(), amplitudes })
    }
}

pub fn two_magnon_evolve(
    n: usize,
    b_field: f64,
    j_coupling: f64,
    init: (usize, usize),
    t: f64,
) -> Result<TwoMagnonState> {
    TwoMagnonPropagator::new(n, b_field, j_coupling)?.evolve(init, t)
}

/// `⟨self|other⟩` between different state representations.
pub trait StateOverlap<Rhs: ?Sized> {
    fn overlap(&self, other: &Rhs) -> Result<C64>;
}

pub trait SquaredNorm {
    fn squared_norm(&self) -> Result<f64>;
}

impl SquaredNorm for DenseState {
    fn squared_norm(&self) -> Result<f64> {
        Ok(self.amplitudes.norm_squared())
    }
}

impl SquaredNorm for TwoMagnonState {
    fn squared_norm(&self) -> Result<f64> {
        Ok(self.amplitudes.norm_squared())
    }
}

impl SquaredNorm for VidalMps {
    fn squared_norm(&self) -> Result<f64> {
        Ok(self.inner_product(self)?.re)
    }
}

impl StateOverlap<DenseState> for DenseState {
    fn overlap(&self, other: &DenseState) -> Result<C64> {
        if self.amplitudes.len() != other.amplitudes.len() {
            return Err(TebdError::DimensionMismatch("dense states differ in size".into()));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }
}

impl StateOverlap<VidalMps> for VidalMps {
    fn overlap(&self, other: &VidalMps) -> Result<C64> {
        self.inner_product(other)
    }
}

impl StateOverlap<VidalMps> for DenseState {
    fn overlap(&self, other: &VidalMps) -> Result<C64> {
        if self.n != other.n() || self.d != other.d() {
            return Err(TebdError::DimensionMismatch("dense state does not match MPS".into()));
        }
        Ok(self.amplitudes.dotc(&other.to_amplitudes()?))
    }
}

impl StateOverlap<DenseState> for VidalMps {
    fn overlap(&self, other: &DenseState) -> Result<C64> {
        Ok(other.overlap(self)?.conj())
    }
}

impl StateOverlap<VidalMps> for TwoMagnonState {
    /// Sum of `n(n-1)/2` MPS amplitudes; never forms a dense vector.
    fn overlap(&self, other: &VidalMps) -> Result<C64> {
        if self.basis.n != other.n() || other.d() != 2 {
            return Err(TebdError::DimensionMismatch("two-magnon state does not match MPS".into()));
        }
        let mut acc = c64(0.0, 0.0);
        for k in 0..self.basis.len() {
            acc += self.amplitudes[k].conj() * other.amplitude(&self.basis.configuration(k))?;
        }
        Ok(acc)
    }
}

impl StateOverlap<TwoMagnonState> for VidalMps {
    fn overlap(&self, other: &TwoMagnonState) -> Result<C64> {
        Ok(other.overlap(self)?.conj())
    }
}

impl StateOverlap<DenseState> for TwoMagnonState {
    fn overlap(&self, other: &DenseState) -> Result<C64> {
        if self.basis.n != other.n || other.d != 2 {
            return Err(TebdError::DimensionMismatch("two-magnon state does not match dense state".into()));
        }
        let n = self.basis.n;
        let mut acc = c64(0.0, 0.0);
        for (k, &(i, j)) in self.basis.pairs.iter().enumerate() {
            let idx = (1usize << (n - 1 - i)) | (1usize << (n - 1 - j));
            acc += self.amplitudes[k].conj() * other.amplitudes[idx];
        }
        Ok(acc)
    }
}

impl StateOverlap<TwoMagnonState> for DenseState {
    fn overlap(&self, other: &TwoMagnonState) -> Result<C64> {
        Ok(other.overlap(self)?.conj())
    }
}

/// `1 - |⟨a|b⟩|² / (⟨a|a⟩⟨b|b⟩)`; equals `1 - |⟨a|b⟩|²` for normalized inputs.
pub fn fidelity_error<A, B>(a: &A, b: &B) -> Result<f64>
where
    A: StateOverlap<B> + SquaredNorm,
    B: SquaredNorm,
{
    let ov = a.overlap(b)?;
    let na = a.squared_norm()?;
    let nb = b.squared_norm()?;
    if na <= 0.0 || nb <= 0.0 {
        return Err(TebdError::ZeroNorm("fidelity of a zero vector".into()));
    }
    Ok(1.0 - ov.norm_sqr() / (na * nb))
}
