//! Spin-motion dephasing channel for driven Rydberg atom chains.
//!
//! The frozen-gas spin dynamics of a chain of trapped atoms is computed exactly
//! in the eigenbasis of the spin Hamiltonian. Motion of the atoms in their traps
//! enters through a closed-form Gaussian overlap matrix `Γ_nm(t)` that multiplies
//! the frozen-gas density matrix elementwise.
//!
//! All internal quantities use normalized units: lengths in units of the trap
//! ground-state width, times in units of one inverse trap angular frequency and
//! energies in units of the trap quantum. See [`units`].

extern crate ndarray_linalg;

pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod spin;
pub mod transport;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
