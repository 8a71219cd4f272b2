//! Dense complex linear algebra shared by the rest of the crate.
//!
//! Matrices are `nalgebra` dynamic matrices of `Complex<f64>`; factorizations
//! are delegated to `faer`. Site tensors are rank-3 [`DenseTensor3`] values
//! stored row-major in
//! `(left bond, physical, right bond)` order, so that the two natural
//! groupings `(left·physical) × right` and `left × (physical·right)` are plain
//! reinterpretations of the same buffer.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

use crate::error::{Result, TebdError};

pub type ComplexMatrix = DMatrix<C64>;

/// Tolerance used when validating that an input is Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Rank-3 tensor with indices `(left bond, physical, right bond)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor3 {
    dims: (usize, usize, usize),
    data: Vec<C64>,
}

impl DenseTensor3 {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        assert!(left > 0 && phys > 0 && right > 0, "tensor dimensions must be positive");
        Self { dims: (left, phys, right), data: vec![C64::new(0.0, 0.0); left * phys * right] }
    }

    pub fn from_fn(
        left: usize,
        phys: usize,
        right: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut t = Self::zeros(left, phys, right);
        for a in 0..left {
            for i in 0..phys {
                for b in 0..right {
                    t.data[(a * phys + i) * right + b] = f(a, i, b);
                }
            }
        }
        t
    }

    /// Builds a tensor from a row-major buffer.
    pub fn from_vec(dims: (usize, usize, usize), data: Vec<C64>) -> Result<Self> {
        let (l, p, r) = dims;
        if l == 0 || p == 0 || r == 0 {
            return Err(TebdError::DimensionMismatch(format!("tensor dims {dims:?} must be positive")));
        }
        if data.len() != l * p * r {
            return Err(TebdError::DimensionMismatch(format!(
                "tensor dims {dims:?} need {} entries, got {}",
                l * p * r,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.is_finite()) {
            return Err(TebdError::NonFinite("tensor entries".into()));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn left_dim(&self) -> usize {
        self.dims.0
    }

    pub fn phys_dim(&self) -> usize {
        self.dims.1
    }

    pub fn right_dim(&self) -> usize {
        self.dims.2
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, a: usize, i: usize, b: usize) -> C64 {
        let (_, p, r) = self.dims;
        self.data[(a * p + i) * r + b]
    }

    #[inline]
    pub fn set(&mut self, a: usize, i: usize, b: usize, value: C64) {
        let (_, p, r) = self.dims;
        self.data[(a * p + i) * r + b] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.is_finite())
    }

    pub fn scale(&mut self, factor: C64) {
        self.data.iter_mut().for_each(|z| *z *= factor);
    }

    /// Matrix view `(left·physical) × right`.
    pub fn left_fused(&self) -> ComplexMatrix {
        let (l, p, r) = self.dims;
        DMatrix::from_row_slice(l * p, r, &self.data)
    }

    /// Matrix view `left × (physical·right)`.
    pub fn right_fused(&self) -> ComplexMatrix {
        let (l, p, r) = self.dims;
        DMatrix::from_row_slice(l, p * r, &self.data)
    }

    /// The `left × right` matrix for a fixed physical index.
    pub fn physical_slice(&self, i: usize) -> ComplexMatrix {
        let (l, _, r) = self.dims;
        DMatrix::from_fn(l, r, |a, b| self.get(a, i, b))
    }

    pub fn from_left_fused(m: &ComplexMatrix, phys: usize) -> Result<Self> {
        if phys == 0 || m.nrows() % phys != 0 {
            return Err(TebdError::DimensionMismatch(format!(
                "{} rows cannot be split by physical dimension {phys}",
                m.nrows()
            )));
        }
        let l = m.nrows() / phys;
        Ok(Self::from_fn(l, phys, m.ncols(), |a, i, b| m[(a * phys + i, b)]))
    }

    pub fn from_right_fused(m: &ComplexMatrix, phys: usize) -> Result<Self> {
        if phys == 0 || m.ncols() % phys != 0 {
            return Err(TebdError::DimensionMismatch(format!(
                "{} columns cannot be split by physical dimension {phys}",
                m.ncols()
            )));
        }
        let r = m.ncols() / phys;
        Ok(Self::from_fn(m.nrows(), phys, r, |a, i, b| m[(a, i * r + b)]))
    }
}

/// Thin singular value decomposition `m = u · diag(s) · vh`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    /// Singular values, non-increasing. Tiny values are reported as computed.
    pub s: Vec<f64>,
    pub vh: ComplexMatrix,
}

pub fn ensure_finite(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.is_finite()) {
        Ok(())
    } else {
        Err(TebdError::NonFinite(what.to_string()))
    }
}

/// Thin SVD with singular values sorted non-increasing. Values below any
/// threshold are reported as computed; truncation is the caller's business.
pub fn svd(m: &ComplexMatrix) -> Result<Svd> {
    ensure_finite(m, "svd input")?;
    let dec = to_faer(m).thin_svd().map_err(|_| TebdError::NoConvergence { routine: "svd" })?;
    let u = from_faer(dec.U());
    let v = dec.V();
    let vh = ComplexMatrix::from_fn(v.ncols(), v.nrows(), |r, c| v[(c, r)].conj());
    let s: Vec<f64> = dec.S().column_vector().iter().map(|z| z.re).collect();
    if s.windows(2).any(|w| w[1] > w[0]) {
        return Err(TebdError::NoConvergence { routine: "svd" });
    }
    Ok(Svd { u, s, vh })
}

fn to_faer(m: &ComplexMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)])
}

/// Largest entry-wise deviation of `h` from its own adjoint.
pub fn hermitian_deviation(h: &ComplexMatrix) -> f64 {
    if !h.is_square() {
        return f64::INFINITY;
    }
    let n = h.nrows();
    let mut dev: f64 = 0.0;
    for r in 0..n {
        for c in r..n {
            dev = dev.max((h[(r, c)] - h[(c, r)].conj()).norm());
        }
    }
    dev
}

/// Largest entry-wise deviation of `u† u` from the identity.
pub fn unitary_deviation(u: &ComplexMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    let g = u.adjoint() * u;
    identity_deviation(&g)
}

pub fn identity_deviation(g: &ComplexMatrix) -> f64 {
    let mut dev: f64 = 0.0;
    for r in 0..g.nrows() {
        for c in 0..g.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((g[(r, c)] - C64::new(target, 0.0)).norm());
        }
    }
    dev
}

/// Eigendecomposition of a Hermitian matrix: ascending real eigenvalues and
/// the unitary whose columns are the eigenvectors.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<(DVector<f64>, ComplexMatrix)> {
    ensure_finite(h, "Hermitian eigensolver input")?;
    let deviation = hermitian_deviation(h);
    if deviation > HERMITIAN_TOL * h.camax().max(1.0) {
        return Err(TebdError::NotHermitian { deviation });
    }
    let eig = to_faer(h)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| TebdError::NoConvergence { routine: "Hermitian eigensolver" })?;
    let values = DVector::from_iterator(h.nrows(), eig.S().column_vector().iter().map(|z| z.re));
    let vectors = from_faer(eig.U());
    Ok((values, vectors))
}

/// `exp(scale · h)` for Hermitian `h`, via its eigendecomposition.
///
/// Use `scale = -iδ` for a real-time propagator and `scale = -δ` for an
/// imaginary-time step.
pub fn expm_hermitian(h: &ComplexMatrix, scale: C64) -> Result<ComplexMatrix> {
    if !h.is_square() {
        return Err(TebdError::DimensionMismatch(format!(
            "expm needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let (values, v) = hermitian_eigen(h)?;
    let n = h.nrows();
    let mut scaled = v.clone();
    for c in 0..n {
        let f = (scale * values[c]).exp();
        for r in 0..n {
            scaled[(r, c)] *= f;
        }
    }
    Ok(scaled * v.adjoint())
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Forms the two-site matrix
///
/// `Θ[(a,i),(j,c)] = Σ_{i',j'} V[(i,j),(i',j')] Σ_b λL_a Γ1[a,i',b] λM_b Γ2[b,j',c] λR_c`
///
/// with rows grouped `(left bond, physical)` and columns grouped
/// `(physical, right bond)`. Passing `gate = None` skips the gate.
pub fn contract_bond_gate(
    lambda_left: &[f64],
    left: &DenseTensor3,
    lambda_mid: &[f64],
    right: &DenseTensor3,
    lambda_right: &[f64],
    gate: Option<&ComplexMatrix>,
) -> Result<ComplexMatrix> {
    let (cl, d, cm) = left.dims();
    let (cm2, d2, cr) = right.dims();
    if cm != cm2 || d != d2 {
        return Err(TebdError::DimensionMismatch(format!(
            "cannot contract {:?} with {:?}",
            left.dims(),
            right.dims()
        )));
    }
    if lambda_left.len() != cl || lambda_mid.len() != cm || lambda_right.len() != cr {
        return Err(TebdError::DimensionMismatch(format!(
            "lambda lengths ({}, {}, {}) do not match bond dims ({cl}, {cm}, {cr})",
            lambda_left.len(),
            lambda_mid.len(),
            lambda_right.len()
        )));
    }
    if let Some(g) = gate {
        if g.nrows() != d * d || g.ncols() != d * d {
            return Err(TebdError::DimensionMismatch(format!(
                "two-site gate must be {0}x{0}, got {1}x{2}",
                d * d,
                g.nrows(),
                g.ncols()
            )));
        }
    }

    let a = ComplexMatrix::from_fn(cl * d, cm, |row, b| {
        left.get(row / d, row % d, b) * (lambda_left[row / d] * lambda_mid[b])
    });
    let b = ComplexMatrix::from_fn(cm, d * cr, |bb, col| {
        right.get(bb, col / cr, col % cr) * lambda_right[col % cr]
    });
    let theta = a * b;
    let Some(gate) = gate else {
        return Ok(theta);
    };

    // Gather the joint physical index into rows, apply the gate, scatter back.
    let mut stacked = ComplexMatrix::zeros(d * d, cl * cr);
    for al in 0..cl {
        for i in 0..d {
            for j in 0..d {
                for c in 0..cr {
                    stacked[(i * d + j, al * cr + c)] = theta[(al * d + i, j * cr + c)];
                }
            }
        }
    }
    let applied = gate * stacked;
    let mut out = ComplexMatrix::zeros(cl * d, d * cr);
    for al in 0..cl {
        for i in 0..d {
            for j in 0..d {
                for c in 0..cr {
                    out[(al * d + i, j * cr + c)] = applied[(i * d + j, al * cr + c)];
                }
            }
        }
    }
    Ok(out)
}
