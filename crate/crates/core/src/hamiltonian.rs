//! Nearest-neighbour Hamiltonians `H = Σ_l K1[l] + Σ_b K2[b]`, their split
//! into two commuting families of bond terms, and the Trotter gate layers
//! built from that split.
//!
//! Bonds are numbered `1..n`; bond `b` joins sites `b - 1` and `b`. The
//! "even" family collects the bonds with even `b` and the "odd" family the
//! bonds with odd `b`. The single-site term of site `s` is attached to bond
//! `s + 1` as `K1 ⊗ I`, so it joins the family of that bond. The last site
//! has no bond to its right and its term becomes a single-site gate in the
//! family of bond `n`.

use crate::error::{Result, TebdError};
use crate::kernel::{self, c64, ComplexMatrix, C64};
use crate::mps::LocalGate;

/// Standard spin-1/2 operators with `|0⟩` = spin up.
pub mod pauli {
    use crate::kernel::{c64, ComplexMatrix};

    fn m(entries: [(f64, f64); 4]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &entries.map(|(re, im)| c64(re, im)))
    }

    pub fn identity() -> ComplexMatrix {
        m([(1., 0.), (0., 0.), (0., 0.), (1., 0.)])
    }

    pub fn sigma_x() -> ComplexMatrix {
        m([(0., 0.), (1., 0.), (1., 0.), (0., 0.)])
    }

    pub fn sigma_y() -> ComplexMatrix {
        m([(0., 0.), (0., -1.), (0., 1.), (0., 0.)])
    }

    pub fn sigma_z() -> ComplexMatrix {
        m([(1., 0.), (0., 0.), (0., 0.), (-1., 0.)])
    }

    /// Lowers the spin: `σ⁻|0⟩ = |1⟩`, `σ⁻|1⟩ = 0`.
    pub fn sigma_minus() -> ComplexMatrix {
        m([(0., 0.), (0., 0.), (1., 0.), (0., 0.)])
    }

    /// Raises the spin: `σ⁺|1⟩ = |0⟩`, `σ⁺|0⟩ = 0`.
    pub fn sigma_plus() -> ComplexMatrix {
        m([(0., 0.), (1., 0.), (0., 0.), (0., 0.)])
    }

    /// `σ·σ = σx⊗σx + σy⊗σy + σz⊗σz`.
    pub fn heisenberg_exchange() -> ComplexMatrix {
        sigma_x().kronecker(&sigma_x()) + sigma_y().kronecker(&sigma_y()) + sigma_z().kronecker(&sigma_z())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalHamiltonian {
    n: usize,
    d: usize,
    k1: Vec<ComplexMatrix>,
    k2: Vec<ComplexMatrix>,
}

impl LocalHamiltonian {
    /// `k1` holds one `d × d` term per site, `k2` one `d² × d²` term per
    /// bond (bond `b` at index `b - 1`). All terms must be Hermitian.
    pub fn new(k1: Vec<ComplexMatrix>, k2: Vec<ComplexMatrix>) -> Result<Self> {
        let n = k1.len();
        if n < 2 {
            return Err(TebdError::InvalidArgument(format!("need at least 2 sites, got {n}")));
        }
        if k2.len() != n - 1 {
            return Err(TebdError::DimensionMismatch(format!(
                "{n} sites need {} bond terms, got {}",
                n - 1,
                k2.len()
            )));
        }
        let d = k1[0].nrows();
        if d < 2 {
            return Err(TebdError::InvalidArgument("local dimension must be at least 2".into()));
        }
        for (site, t) in k1.iter().enumerate() {
            check_term(t, d, &format!("K1 at site {site}"))?;
        }
        for (idx, t) in k2.iter().enumerate() {
            check_term(t, d * d, &format!("K2 at bond {}", idx + 1))?;
        }
        Ok(Self { n, d, k1, k2 })
    }

    pub fn zero(n: usize, d: usize) -> Result<Self> {
        Self::uniform(n, ComplexMatrix::zeros(d, d), ComplexMatrix::zeros(d * d, d * d))
    }

    pub fn uniform(n: usize, k1: ComplexMatrix, k2: ComplexMatrix) -> Result<Self> {
        if n < 2 {
            return Err(TebdError::InvalidArgument(format!("need at least 2 sites, got {n}")));
        }
        Self::new(vec![k1; n], vec![k2; n - 1])
    }

    /// `H = -B Σ σz - J Σ σ·σ`, the spin-1/2 ferromagnetic Heisenberg chain
    /// in a longitudinal field.
    pub fn heisenberg_ferromagnet(n: usize, b_field: f64, j_coupling: f64) -> Result<Self> {
        Self::uniform(
            n,
            pauli::sigma_z() * c64(-b_field, 0.0),
            pauli::heisenberg_exchange() * c64(-j_coupling, 0.0),
        )
    }

    /// `H = -h Σ σx - J Σ σz⊗σz`.
    pub fn transverse_ising(n: usize, field: f64, coupling: f64) -> Result<Self> {
        Self::uniform(
            n,
            pauli::sigma_x() * c64(-field, 0.0),
            pauli::sigma_z().kronecker(&pauli::sigma_z()) * c64(-coupling, 0.0),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k1(&self) -> &[ComplexMatrix] {
        &self.k1
    }

    /// Bond terms, bond `b` at index `b - 1`.
    pub fn k2(&self) -> &[ComplexMatrix] {
        &self.k2
    }

    /// Splits `H` into the even- and odd-bond families.
    ///
    /// Bond `b` carries `K1[b-1] ⊗ I + K2[b-1]`; the last bond also carries
    /// `I ⊗ K1[n-1]`, so every term is a bond term.
    pub fn even_odd_split(&self) -> SplitTerms {
        let n = self.n;
        let id = kernel::identity(self.d);
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for bond in 1..n {
            let mut matrix = self.k1[bond - 1].kronecker(&id) + &self.k2[bond - 1];
            if bond == n - 1 {
                matrix += id.kronecker(&self.k1[n - 1]);
            }
            let term = LocalTerm::Bond { bond, matrix };
            if bond % 2 == 0 {
                even.push(term);
            } else {
                odd.push(term);
            }
        }
        SplitTerms { even, odd }
    }
}

fn check_term(t: &ComplexMatrix, dim: usize, what: &str) -> Result<()> {
    if t.nrows() != dim || t.ncols() != dim {
        return Err(TebdError::DimensionMismatch(format!(
            "{what} must be {dim}x{dim}, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    kernel::ensure_finite(t, what)?;
    let deviation = kernel::hermitian_deviation(t);
    if deviation > kernel::HERMITIAN_TOL {
        return Err(TebdError::NotHermitian { deviation });
    }
    Ok(())
}

/// Term-wise `(1 - s)·start + s·end`.
pub fn interpolate(start: &LocalHamiltonian, end: &LocalHamiltonian, s: f64) -> Result<LocalHamiltonian> {
    if start.n != end.n || start.d != end.d {
        return Err(TebdError::DimensionMismatch(format!(
            "cannot interpolate (n={}, d={}) with (n={}, d={})",
            start.n, start.d, end.n, end.d
        )));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(TebdError::InvalidArgument(format!("interpolation parameter {s} outside [0, 1]")));
    }
    let a = c64(1.0 - s, 0.0);
    let b = c64(s, 0.0);
    let mix = |x: &[ComplexMatrix], y: &[ComplexMatrix]| -> Vec<ComplexMatrix> {
        x.iter().zip(y).map(|(p, q)| p * a + q * b).collect()
    };
    Ok(LocalHamiltonian {
        n: start.n,
        d: start.d,
        k1: mix(&start.k1, &end.k1),
        k2: mix(&start.k2, &end.k2),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum LocalTerm {
    Site { site: usize, matrix: ComplexMatrix },
    Bond { bond: usize, matrix: ComplexMatrix },
}

impl LocalTerm {
    pub fn matrix(&self) -> &ComplexMatrix {
        match self {
            LocalTerm::Site { matrix, .. } | LocalTerm::Bond { matrix, .. } => matrix,
        }
    }
}

/// The two commuting families of local terms. Within a family no two terms
/// share a site.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitTerms {
    pub even: Vec<LocalTerm>,
    pub odd: Vec<LocalTerm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrotterOrder {
    First,
    Second,
}

impl TryFrom<u32> for TrotterOrder {
    type Error = TebdError;

    fn try_from(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Self::First),
            2 => Ok(Self::Second),
            _ => Err(TebdError::InvalidArgument(format!("unsupported Trotter order {p}; use 1 or 2"))),
        }
    }
}

impl TrotterOrder {
    pub fn as_u32(self) -> u32 {
        match self {
            Self::First => 1,
            Self::Second => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeAxis {
    Real,
    Imaginary,
}

impl TimeAxis {
    /// Scale factor `s` in `exp(s·H)` for a step of length `dt`.
    pub fn scale(self, dt: f64) -> C64 {
        match self {
            Self::Real => c64(0.0, -dt),
            Self::Imaginary => c64(-dt, 0.0),
        }
    }
}

/// Exponentiates every term of a family into one gate layer.
pub fn make_layer(terms: &[LocalTerm], dt: f64, axis: TimeAxis) -> Result<Vec<LocalGate>> {
    let scale = axis.scale(dt);
    terms
        .iter()
        .map(|t| {
            let matrix = kernel::expm_hermitian(t.matrix(), scale)?;
            Ok(match t {
                LocalTerm::Site { site, .. } => LocalGate::Site { site: *site, matrix },
                LocalTerm::Bond { bond, .. } => LocalGate::Bond { bond: *bond, matrix },
            })
        })
        .collect()
}

/// Gate layers for one Trotter step, in application order.
///
/// First order applies `[even(δ), odd(δ)]`; second order applies the
/// symmetric sequence `[even(δ/2), odd(δ), even(δ/2)]`.
#[derive(Clone, Debug)]
pub struct GateSchedule {
    pub delta: f64,
    pub order: TrotterOrder,
    pub axis: TimeAxis,
    pub layers: Vec<Vec<LocalGate>>,
}

pub fn make_schedule(
    h: &LocalHamiltonian,
    delta: f64,
    order: TrotterOrder,
    axis: TimeAxis,
) -> Result<GateSchedule> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(TebdError::InvalidArgument(format!("time step must be positive, got {delta}")));
    }
    let split = h.even_odd_split();
    let layers = match order {
        TrotterOrder::First => {
            vec![make_layer(&split.even, delta, axis)?, make_layer(&split.odd, delta, axis)?]
        }
        TrotterOrder::Second => {
            let half = make_layer(&split.even, delta / 2.0, axis)?;
            vec![half.clone(), make_layer(&split.odd, delta, axis)?, half]
        }
    };
    Ok(GateSchedule { delta, order, axis, layers })
}
