//! Time evolution of one-dimensional quantum lattice systems with
//! nearest-neighbour interactions, using matrix product states in Vidal's
//! Γ/λ form and Suzuki-Trotter gate layers.
//!
//! # Index conventions
//!
//! * Sites are numbered from `0` to `n - 1`.
//! * Bonds are numbered from `1` to `n - 1`; bond `b` joins sites `b - 1` and
//!   `b`, so `b` is also the number of sites in the left block of the cut. The
//!   Schmidt coefficients of bond `b` live in `VidalMps::lambdas()[b]`, with
//!   dummy vectors `(1)` at `0` and `n`.
//! * A site tensor Γ carries indices `(left bond, physical, right bond)`.
//!   Two-site operators act on the product basis `|i⟩|j⟩` with combined index
//!   `i * d + j`, where `i` is the left site.
//! * For spin 1/2, `|0⟩` is spin up (σ_z = +1) and `|1⟩` is spin down.
//! * Dense state vectors order configurations with site `0` most significant.

pub mod error;
pub mod evolution;
pub mod hamiltonian;
pub mod kernel;
pub mod mps;
pub mod observables;
pub mod oracle;
pub mod random;

pub use error::{Result, TebdError};
pub use kernel::{ComplexMatrix, DenseTensor3, C64};
pub use mps::{TruncationPolicy, VidalMps};
