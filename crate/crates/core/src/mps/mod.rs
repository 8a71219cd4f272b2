//! Matrix product states in Vidal's Γ/λ form.
//!
//! ```text
//!   λ[0]  Γ[0]  λ[1]  Γ[1]  λ[2]  ...  Γ[n-1]  λ[n]
//!    (1) --o----[ ]---o----[ ]-- ... ----o----  (1)
//!          |          |                  |
//!          i0         i1                 i(n-1)
//! ```
//!
//! Every interior `λ[b]` holds the Schmidt coefficients of the cut between
//! sites `b - 1` and `b`. The boundary vectors `λ[0]` and `λ[n]` are the dummy
//! value `(1)` and all Γ tensors are rank 3, with bond dimension 1 at the open
//! ends.

mod snapshot;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Result, TebdError};
use crate::kernel::{self, c64, ComplexMatrix, DenseTensor3, C64};

/// Schmidt coefficients below this fraction of the largest one are treated as
/// numerical zeros and always dropped.
pub const SPECTRUM_CUTOFF: f64 = 1e-14;

/// Boundary Schmidt coefficients below this value are never used as divisors;
/// the matching Γ entries are zeroed instead.
pub const DIVISOR_FLOOR: f64 = 1e-12;

/// Norms below this are treated as an annihilated state.
pub const ZERO_NORM: f64 = 1e-14;

/// Tolerance for unit-norm checks on user supplied local vectors.
const UNIT_TOL: f64 = 1e-12;

/// Tolerance for the unitarity check of single-site gates.
const UNITARY_TOL: f64 = 1e-10;

/// How Schmidt spectra are cut after a two-site update.
///
/// The retained rank is the smallest one whose discarded weight does not
/// exceed `weight_tol`, then capped at `chi_max`. The cap wins conflicts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub chi_max: usize,
    pub weight_tol: f64,
    pub renormalize: bool,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self::exact()
    }
}

impl TruncationPolicy {
    /// Keeps every non-negligible Schmidt coefficient.
    pub fn exact() -> Self {
        Self { chi_max: usize::MAX, weight_tol: 0.0, renormalize: true }
    }

    pub fn with_chi_max(chi_max: usize) -> Self {
        Self { chi_max, ..Self::exact() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chi_max < 1 {
            return Err(TebdError::InvalidArgument("chi_max must be at least 1".into()));
        }
        if !(self.weight_tol >= 0.0) {
            return Err(TebdError::InvalidArgument(format!(
                "weight_tol must be non-negative, got {}",
                self.weight_tol
            )));
        }
        Ok(())
    }

    /// Number of leading singular values to keep and the discarded weight
    /// relative to the full spectrum.
    ///
    /// The discarded weight is summed over the dropped tail in index order.
    pub fn select(&self, s: &[f64]) -> (usize, f64) {
        if s.is_empty() {
            return (0, 0.0);
        }
        let floor = SPECTRUM_CUTOFF * s[0];
        let significant = s.iter().take_while(|&&x| x > floor).count().max(1);
        let total: f64 = s.iter().map(|x| x * x).sum();

        let mut keep = significant;
        if self.weight_tol > 0.0 && total > 0.0 {
            // Grow the dropped tail while it stays within tolerance.
            let mut tail = 0.0;
            while keep > 1 {
                let next = tail + s[keep - 1] * s[keep - 1];
                if next / total > self.weight_tol {
                    break;
                }
                tail = next;
                keep -= 1;
            }
        }
        keep = keep.min(self.chi_max).max(1);

        let mut dropped = 0.0;
        for x in &s[keep..] {
            dropped += x * x;
        }
        let discarded = if total > 0.0 { dropped / total } else { 0.0 };
        (keep, discarded)
    }
}

/// A gate acting on one site or on the two sites of a bond.
#[derive(Clone, Debug, PartialEq)]
pub enum LocalGate {
    Site { site: usize, matrix: ComplexMatrix },
    Bond { bond: usize, matrix: ComplexMatrix },
}

impl LocalGate {
    /// Sites touched by the gate.
    pub fn sites(&self) -> (usize, usize) {
        match self {
            LocalGate::Site { site, .. } => (*site, *site),
            LocalGate::Bond { bond, .. } => (bond - 1, *bond),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        match self {
            LocalGate::Site { matrix, .. } | LocalGate::Bond { matrix, .. } => matrix,
        }
    }
}

/// Result of a two-site update, computed without touching the state.
#[derive(Clone, Debug)]
pub struct TwoSiteUpdate {
    pub bond: usize,
    pub left: DenseTensor3,
    pub lambda: Vec<f64>,
    pub right: DenseTensor3,
    /// Discarded weight of this update relative to the full spectrum.
    pub discarded_weight: f64,
}

/// Per-bond Schmidt ranks (bond `b` at index `b - 1`) and their maximum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChiProfile {
    pub ranks: Vec<usize>,
    pub chi: usize,
}

/// Largest deviation from the identity of the left and right environment
/// contractions, per bond.
#[derive(Clone, Debug)]
pub struct CanonicalResiduals {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl CanonicalResiduals {
    pub fn max(&self) -> f64 {
        self.left.iter().chain(&self.right).copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VidalMps {
    d: usize,
    gammas: Vec<DenseTensor3>,
    lambdas: Vec<Vec<f64>>,
}

impl VidalMps {
    /// Product state `⊗ |locals[l]⟩`. Each local vector must have unit norm.
    pub fn from_product_state(locals: &[Vec<C64>]) -> Result<Self> {
        if locals.len() < 2 {
            return Err(TebdError::InvalidArgument(format!(
                "a chain needs at least 2 sites, got {}",
                locals.len()
            )));
        }
        let d = locals[0].len();
        if d < 2 {
            return Err(TebdError::InvalidArgument("local dimension must be at least 2".into()));
        }
        let mut gammas = Vec::with_capacity(locals.len());
        for (site, v) in locals.iter().enumerate() {
            if v.len() != d {
                return Err(TebdError::DimensionMismatch(format!(
                    "site {site} has dimension {}, expected {d}",
                    v.len()
                )));
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(TebdError::InvalidArgument(format!(
                    "local vector at site {site} has norm {norm}, expected 1"
                )));
            }
            gammas.push(DenseTensor3::from_fn(1, d, 1, |_, i, _| v[i]));
        }
        let lambdas = vec![vec![1.0]; locals.len() + 1];
        Ok(Self { d, gammas, lambdas })
    }

    /// Computational basis state `|config[0] config[1] ...⟩`.
    pub fn basis_state(d: usize, config: &[usize]) -> Result<Self> {
        let locals: Vec<Vec<C64>> = config
            .iter()
            .enumerate()
            .map(|(site, &k)| {
                if k >= d {
                    return Err(TebdError::IndexOutOfRange(format!(
                        "basis index {k} at site {site} exceeds dimension {d}"
                    )));
                }
                Ok((0..d).map(|i| c64(if i == k { 1.0 } else { 0.0 }, 0.0)).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_product_state(&locals)
    }

    /// Assembles a state from raw parts, checking the bond chaining.
    pub fn from_parts(d: usize, gammas: Vec<DenseTensor3>, lambdas: Vec<Vec<f64>>) -> Result<Self> {
        let n = gammas.len();
        if n < 2 || d < 2 {
            return Err(TebdError::InvalidArgument(format!("need n >= 2 and d >= 2, got n={n}, d={d}")));
        }
        if lambdas.len() != n + 1 {
            return Err(TebdError::DimensionMismatch(format!(
                "{n} sites need {} lambda vectors, got {}",
                n + 1,
                lambdas.len()
            )));
        }
        if lambdas[0].len() != 1 || lambdas[n].len() != 1 {
            return Err(TebdError::DimensionMismatch("boundary lambdas must have length 1".into()));
        }
        for (site, g) in gammas.iter().enumerate() {
            let (l, p, r) = g.dims();
            if p != d || l != lambdas[site].len() || r != lambdas[site + 1].len() {
                return Err(TebdError::DimensionMismatch(format!(
                    "site {site} has dims {:?}, inconsistent with d={d} and bonds ({}, {})",
                    g.dims(),
                    lambdas[site].len(),
                    lambdas[site + 1].len()
                )));
            }
            if !g.is_finite() {
                return Err(TebdError::NonFinite(format!("gamma at site {site}")));
            }
        }
        if lambdas.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(TebdError::NonFinite("lambda entries must be finite and non-negative".into()));
        }
        Ok(Self { d, gammas, lambdas })
    }

    pub fn n(&self) -> usize {
        self.gammas.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gammas(&self) -> &[DenseTensor3] {
        &self.gammas
    }

    /// All `n + 1` lambda vectors, including the dummy boundaries.
    pub fn lambdas(&self) -> &[Vec<f64>] {
        &self.lambdas
    }

    pub fn is_finite(&self) -> bool {
        self.gammas.iter().all(DenseTensor3::is_finite)
            && self.lambdas.iter().flatten().all(|x| x.is_finite())
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.n() {
            return Err(TebdError::IndexOutOfRange(format!("site {site} outside 0..{}", self.n())));
        }
        Ok(())
    }

    fn check_bond(&self, bond: usize) -> Result<()> {
        if bond < 1 || bond >= self.n() {
            return Err(TebdError::IndexOutOfRange(format!("bond {bond} outside 1..{}", self.n())));
        }
        Ok(())
    }

    /// Applies a unitary to one site. Canonical form is preserved.
    pub fn apply_single_site_gate(&mut self, site: usize, u: &ComplexMatrix) -> Result<()> {
        self.check_site(site)?;
        self.check_single_site_shape(u)?;
        let deviation = kernel::unitary_deviation(u);
        if deviation > UNITARY_TOL {
            return Err(TebdError::NotUnitary { deviation });
        }
        self.rotate_site(site, u);
        Ok(())
    }

    /// Applies an arbitrary single-site operator. A non-unitary operator
    /// leaves the state unnormalized and breaks canonical form; follow up
    /// with [`VidalMps::normalize`].
    pub fn apply_single_site_operator(&mut self, site: usize, op: &ComplexMatrix) -> Result<()> {
        self.check_site(site)?;
        self.check_single_site_shape(op)?;
        kernel::ensure_finite(op, "single-site operator")?;
        self.rotate_site(site, op);
        Ok(())
    }

    fn check_single_site_shape(&self, op: &ComplexMatrix) -> Result<()> {
        if op.nrows() != self.d || op.ncols() != self.d {
            return Err(TebdError::DimensionMismatch(format!(
                "single-site operator must be {0}x{0}, got {1}x{2}",
                self.d,
                op.nrows(),
                op.ncols()
            )));
        }
        Ok(())
    }

    fn rotate_site(&mut self, site: usize, op: &ComplexMatrix) {
        let old = &self.gammas[site];
        let (l, d, r) = old.dims();
        self.gammas[site] = DenseTensor3::from_fn(l, d, r, |a, i, b| {
            (0..d).map(|j| op[(i, j)] * old.get(a, j, b)).sum()
        });
    }

    /// Computes the two-site update for `gate` on `bond` without modifying
    /// the state.
    pub fn two_site_update(
        &self,
        bond: usize,
        gate: &ComplexMatrix,
        policy: &TruncationPolicy,
    ) -> Result<TwoSiteUpdate> {
        self.check_bond(bond)?;
        policy.validate()?;
        let d = self.d;
        if gate.nrows() != d * d || gate.ncols() != d * d {
            return Err(TebdError::DimensionMismatch(format!(
                "two-site gate must be {0}x{0}, got {1}x{2}",
                d * d,
                gate.nrows(),
                gate.ncols()
            )));
        }
        let lam_left = &self.lambdas[bond - 1];
        let lam_right = &self.lambdas[bond + 1];
        let theta = kernel::contract_bond_gate(
            lam_left,
            &self.gammas[bond - 1],
            &self.lambdas[bond],
            &self.gammas[bond],
            lam_right,
            Some(gate),
        )?;
        let kernel::Svd { u, s, vh } = kernel::svd(&theta)?;
        let (keep, discarded_weight) = policy.select(&s);

        let mut lambda: Vec<f64> = s[..keep].to_vec();
        if policy.renormalize {
            let norm = lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                lambda.iter_mut().for_each(|x| *x /= norm);
            }
        }

        let cl = lam_left.len();
        let cr = lam_right.len();
        let left = DenseTensor3::from_fn(cl, d, keep, |a, i, beta| {
            let lam = lam_left[a];
            if lam < DIVISOR_FLOOR {
                C64::new(0.0, 0.0)
            } else {
                u[(a * d + i, beta)] / lam
            }
        });
        let right = DenseTensor3::from_fn(keep, d, cr, |beta, j, c| {
            let lam = lam_right[c];
            if lam < DIVISOR_FLOOR {
                C64::new(0.0, 0.0)
            } else {
                vh[(beta, j * cr + c)] / lam
            }
        });
        Ok(TwoSiteUpdate { bond, left, lambda, right, discarded_weight })
    }

    /// Installs an update computed by [`VidalMps::two_site_update`].
    pub fn commit(&mut self, update: TwoSiteUpdate) {
        let b = update.bond;
        self.gammas[b - 1] = update.left;
        self.gammas[b] = update.right;
        self.lambdas[b] = update.lambda;
    }

    /// Applies a `d² × d²` gate to the sites of `bond` and restores the
    /// local Schmidt form, truncating per `policy`. Returns the discarded
    /// weight of this update.
    pub fn apply_two_site_gate(
        &mut self,
        bond: usize,
        gate: &ComplexMatrix,
        policy: &TruncationPolicy,
    ) -> Result<f64> {
        let update = self.two_site_update(bond, gate, policy)?;
        let w = update.discarded_weight;
        self.commit(update);
        Ok(w)
    }

    pub fn apply_gate(&mut self, gate: &LocalGate, policy: &TruncationPolicy) -> Result<f64> {
        match gate {
            LocalGate::Site { site, matrix } => {
                self.apply_single_site_operator(*site, matrix)?;
                Ok(0.0)
            }
            LocalGate::Bond { bond, matrix } => self.apply_two_site_gate(*bond, matrix, policy),
        }
    }

    /// Applies a layer of gates on pairwise disjoint sites. With `parallel`
    /// the two-site updates are computed concurrently; each update is a pure
    /// function of disjoint tensors, so the result is identical either way.
    /// Returns the summed discarded weight.
    pub fn apply_layer(
        &mut self,
        gates: &[LocalGate],
        policy: &TruncationPolicy,
        parallel: bool,
    ) -> Result<f64> {
        let mut touched = vec![false; self.n()];
        for g in gates {
            let (a, b) = g.sites();
            if b >= self.n() || (matches!(g, LocalGate::Bond { .. }) && a + 1 != b) {
                return Err(TebdError::IndexOutOfRange(format!("gate on sites ({a}, {b})")));
            }
            for s in a..=b {
                if touched[s] {
                    return Err(TebdError::InvalidArgument(format!(
                        "gates in one layer overlap on site {s}"
                    )));
                }
                touched[s] = true;
            }
        }
        if !parallel {
            let mut total = 0.0;
            for g in gates {
                total += self.apply_gate(g, policy)?;
            }
            return Ok(total);
        }

        let updates: Vec<TwoSiteUpdate> = gates
            .par_iter()
            .filter_map(|g| match g {
                LocalGate::Bond { bond, matrix } => Some(self.two_site_update(*bond, matrix, policy)),
                LocalGate::Site { .. } => None,
            })
            .collect::<Result<_>>()?;
        let mut total = 0.0;
        for u in updates {
            total += u.discarded_weight;
            self.commit(u);
        }
        for g in gates {
            if let LocalGate::Site { site, matrix } = g {
                self.apply_single_site_operator(*site, matrix)?;
            }
        }
        Ok(total)
    }

    /// Schmidt coefficients of the cut at `bond` (`1 ≤ bond ≤ n - 1`).
    pub fn schmidt_spectrum(&self, bond: usize) -> Result<&[f64]> {
        self.check_bond(bond)?;
        Ok(&self.lambdas[bond])
    }

    pub fn chi_profile(&self) -> ChiProfile {
        let ranks: Vec<usize> = self.lambdas[1..self.n()].iter().map(Vec::len).collect();
        let chi = ranks.iter().copied().max().unwrap_or(1);
        ChiProfile { ranks, chi }
    }

    /// The coefficient `c_{i_0 ... i_{n-1}}` of a basis configuration.
    pub fn amplitude(&self, config: &[usize]) -> Result<C64> {
        if config.len() != self.n() {
            return Err(TebdError::DimensionMismatch(format!(
                "configuration has {} entries for {} sites",
                config.len(),
                self.n()
            )));
        }
        let mut row = vec![C64::new(1.0, 0.0)];
        for (site, (&i, g)) in config.iter().zip(&self.gammas).enumerate() {
            if i >= self.d {
                return Err(TebdError::IndexOutOfRange(format!(
                    "basis index {i} at site {site} exceeds dimension {}",
                    self.d
                )));
            }
            let (l, _, r) = g.dims();
            let lam = &self.lambdas[site + 1];
            let mut next = vec![C64::new(0.0, 0.0); r];
            for (b, out) in next.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for (a, &x) in row.iter().enumerate().take(l) {
                    acc += x * g.get(a, i, b);
                }
                *out = acc * lam[b];
            }
            row = next;
        }
        Ok(row[0])
    }

    /// `⟨self|other⟩` by left-to-right transfer contraction.
    pub fn inner_product(&self, other: &VidalMps) -> Result<C64> {
        if self.n() != other.n() || self.d != other.d {
            return Err(TebdError::DimensionMismatch(format!(
                "inner product of (n={}, d={}) with (n={}, d={})",
                self.n(),
                self.d,
                other.n(),
                other.d
            )));
        }
        let mut env = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for site in 0..self.n() {
            let la = &self.lambdas[site + 1];
            let lb = &other.lambdas[site + 1];
            let ga = &self.gammas[site];
            let gb = &other.gammas[site];
            let mut next = ComplexMatrix::zeros(ga.right_dim(), gb.right_dim());
            for i in 0..self.d {
                let mut a = ga.physical_slice(i);
                let mut b = gb.physical_slice(i);
                scale_columns(&mut a, la);
                scale_columns(&mut b, lb);
                next += a.adjoint() * &env * b;
            }
            env = next;
        }
        Ok(env[(0, 0)])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner_product(self).map(|z| z.re).unwrap_or(f64::NAN)
    }

    /// `⟨O⟩` for a single-site operator, normalized by the local norm. Uses
    /// the canonical-form environments `λ²`.
    pub fn expect_local(&self, site: usize, op: &ComplexMatrix) -> Result<C64> {
        self.check_site(site)?;
        self.check_single_site_shape(op)?;
        let g = &self.gammas[site];
        let (l, d, r) = g.dims();
        let ll = &self.lambdas[site];
        let lr = &self.lambdas[site + 1];
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for a in 0..l {
            for b in 0..r {
                let w = ll[a] * ll[a] * lr[b] * lr[b];
                let mut acc = C64::new(0.0, 0.0);
                for ip in 0..d {
                    let bra = g.get(a, ip, b).conj();
                    den += w * bra.norm_sqr();
                    for i in 0..d {
                        acc += bra * op[(ip, i)] * g.get(a, i, b);
                    }
                }
                num += acc * w;
            }
        }
        if den <= 0.0 {
            return Err(TebdError::ZeroNorm(format!("local weight at site {site}")));
        }
        Ok(num / den)
    }

    /// `⟨O⟩` for a `d² × d²` operator on the two sites of `bond`, normalized
    /// by the local norm.
    pub fn expect_bond(&self, bond: usize, op: &ComplexMatrix) -> Result<C64> {
        self.check_bond(bond)?;
        let theta = kernel::contract_bond_gate(
            &self.lambdas[bond - 1],
            &self.gammas[bond - 1],
            &self.lambdas[bond],
            &self.gammas[bond],
            &self.lambdas[bond + 1],
            None,
        )?;
        let applied = kernel::contract_bond_gate(
            &self.lambdas[bond - 1],
            &self.gammas[bond - 1],
            &self.lambdas[bond],
            &self.gammas[bond],
            &self.lambdas[bond + 1],
            Some(op),
        )?;
        let den = theta.norm_squared();
        if den <= 0.0 {
            return Err(TebdError::ZeroNorm(format!("local weight at bond {bond}")));
        }
        Ok(theta.dotc(&applied) / den)
    }

    /// Rebuilds exact Vidal canonical form with a left-to-right QR sweep and
    /// a right-to-left SVD sweep, normalizing the state. Returns the norm the
    /// state had before.
    pub fn canonicalize(&mut self) -> Result<f64> {
        let n = self.n();
        let d = self.d;
        // Absorb each right lambda: the state is then a plain product of A's.
        let mut sites: Vec<DenseTensor3> = self
            .gammas
            .iter()
            .enumerate()
            .map(|(s, g)| {
                let lam = &self.lambdas[s + 1];
                DenseTensor3::from_fn(g.left_dim(), d, g.right_dim(), |a, i, b| g.get(a, i, b) * lam[b])
            })
            .collect();

        for s in 0..n - 1 {
            let qr = sites[s].left_fused().qr();
            let (q, r) = (qr.q(), qr.r());
            let next = r * sites[s + 1].right_fused();
            sites[s] = DenseTensor3::from_left_fused(&q, d)?;
            sites[s + 1] = DenseTensor3::from_right_fused(&next, d)?;
        }
        let norm = sites[n - 1].left_fused().norm();
        if !norm.is_finite() {
            return Err(TebdError::NonFinite("state norm".into()));
        }
        if norm < ZERO_NORM {
            return Err(TebdError::ZeroNorm(format!("norm {norm:.3e}")));
        }

        let mut gammas = vec![DenseTensor3::zeros(1, d, 1); n];
        let mut lambdas = vec![vec![1.0]; n + 1];
        let mut center = sites[n - 1].clone();
        for s in (1..n).rev() {
            let kernel::Svd { u, s: sv, vh } = kernel::svd(&center.right_fused())?;
            let floor = SPECTRUM_CUTOFF * sv[0];
            let keep = sv.iter().take_while(|&&x| x > floor).count().max(1);
            let weight = sv[..keep].iter().map(|x| x * x).sum::<f64>().sqrt();
            let lam: Vec<f64> = sv[..keep].iter().map(|x| x / weight).collect();

            let right_lam = &lambdas[s + 1];
            let cr = right_lam.len();
            gammas[s] = DenseTensor3::from_fn(keep, d, cr, |beta, j, c| {
                let l = right_lam[c];
                if l < DIVISOR_FLOOR {
                    C64::new(0.0, 0.0)
                } else {
                    vh[(beta, j * cr + c)] / l
                }
            });
            let mut us = u.columns(0, keep).into_owned();
            scale_columns(&mut us, &sv[..keep]);
            let moved = sites[s - 1].left_fused() * us;
            center = DenseTensor3::from_left_fused(&moved, d)?;
            lambdas[s] = lam;
        }
        let c_norm = center.left_fused().norm();
        let right_lam = lambdas[1].clone();
        gammas[0] = DenseTensor3::from_fn(1, d, right_lam.len(), |a, i, b| {
            let l = right_lam[b];
            if l < DIVISOR_FLOOR {
                C64::new(0.0, 0.0)
            } else {
                center.get(a, i, b) / (c_norm * l)
            }
        });
        self.gammas = gammas;
        self.lambdas = lambdas;
        Ok(norm)
    }

    /// Normalizes the state to `⟨Ψ|Ψ⟩ = 1` with unit-weight Schmidt
    /// spectra, restoring canonical form on the way.
    pub fn normalize(&mut self) -> Result<()> {
        self.canonicalize().map(|_| ())
    }

    /// Deviations of the left and right environment contractions from the
    /// identity at every interior bond.
    pub fn canonical_residuals(&self) -> CanonicalResiduals {
        let n = self.n();
        let d = self.d;
        let mut left = Vec::with_capacity(n - 1);
        let mut env = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for s in 0..n - 1 {
            let lam = &self.lambdas[s];
            let weighted = ComplexMatrix::from_fn(env.nrows(), env.ncols(), |a, b| env[(a, b)] * lam[a] * lam[b]);
            let g = &self.gammas[s];
            let mut next = ComplexMatrix::zeros(g.right_dim(), g.right_dim());
            for i in 0..d {
                let slice = g.physical_slice(i);
                next += slice.adjoint() * &weighted * slice;
            }
            left.push(kernel::identity_deviation(&next));
            env = next;
        }

        let mut right = vec![0.0; n - 1];
        let mut env = ComplexMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for s in (1..n).rev() {
            let lam = &self.lambdas[s + 1];
            let weighted = ComplexMatrix::from_fn(env.nrows(), env.ncols(), |a, b| env[(a, b)] * lam[a] * lam[b]);
            let g = &self.gammas[s];
            let mut next = ComplexMatrix::zeros(g.left_dim(), g.left_dim());
            for i in 0..d {
                let slice = g.physical_slice(i);
                next += &slice * &weighted * slice.adjoint();
            }
            right[s - 1] = kernel::identity_deviation(&next);
            env = next;
        }
        CanonicalResiduals { left, right }
    }

    /// Dense vector of all `dⁿ` amplitudes, site 0 most significant.
    pub fn to_amplitudes(&self) -> Result<DVector<C64>> {
        let n = self.n();
        let dim = self
            .d
            .checked_pow(n as u32)
            .ok_or_else(|| TebdError::CapExceeded { dim: usize::MAX, cap: usize::MAX })?;
        // Contract left to right keeping every prefix configuration.
        let mut rows: Vec<Vec<C64>> = vec![vec![C64::new(1.0, 0.0)]];
        for site in 0..n {
            let g = &self.gammas[site];
            let lam = &self.lambdas[site + 1];
            let (l, _, r) = g.dims();
            let mut next = Vec::with_capacity(rows.len() * self.d);
            for row in &rows {
                for i in 0..self.d {
                    let mut out = vec![C64::new(0.0, 0.0); r];
                    for (b, o) in out.iter_mut().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for (a, &x) in row.iter().enumerate().take(l) {
                            acc += x * g.get(a, i, b);
                        }
                        *o = acc * lam[b];
                    }
                    next.push(out);
                }
            }
            rows = next;
        }
        debug_assert_eq!(rows.len(), dim);
        Ok(DVector::from_iterator(dim, rows.into_iter().map(|r| r[0])))
    }
}

fn scale_columns(m: &mut ComplexMatrix, weights: &[f64]) {
    for (c, &w) in weights.iter().enumerate() {
        m.column_mut(c).iter_mut().for_each(|z| *z *= w);
    }
}

/// `⟨a|b⟩`.
pub fn inner_product(a: &VidalMps, b: &VidalMps) -> Result<C64> {
    a.inner_product(b)
}
