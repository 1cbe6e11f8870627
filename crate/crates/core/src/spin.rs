//! Frozen-gas spin Hamiltonian and its eigenbasis.
//!
//! Basis states are bit strings with atom 0 as the most significant bit,
//! `|g⟩ = 0` and `|r⟩ = 1`; for two atoms the order is `gg, gr, rg, rr`.

use crate::linalg::symmetric_eigen;
use crate::units::NormalizedChain;
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2, ArrayView2};

/// Largest chain handled with dense matrices.
pub const MAX_ATOMS: usize = 14;

/// Whether `atom` is excited in basis state `state` of an `n_atoms` chain.
#[inline]
pub fn is_excited(state: usize, atom: usize, n_atoms: usize) -> bool {
    state >> (n_atoms - 1 - atom) & 1 == 1
}

/// Basis index of a product state given as a string over `{g, r}`.
pub fn basis_index(label: &str) -> Result<usize> {
    let mut idx = 0usize;
    for c in label.chars() {
        idx <<= 1;
        match c {
            'g' => {}
            'r' => idx |= 1,
            _ => return Err(Error::Config(format!("basis label {label:?} may contain only 'g' and 'r'"))),
        }
    }
    Ok(idx)
}

#[derive(Clone, Debug)]
pub struct SpinHamiltonian {
    n_atoms: usize,
    matrix: Array2<f64>,
}

impl SpinHamiltonian {
    /// Wraps an explicit real symmetric matrix.
    pub fn from_matrix(n_atoms: usize, matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Usage("Hamiltonian must be square".into()));
        }
        Ok(SpinHamiltonian { n_atoms, matrix })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }
}

/// Dense frozen-gas Hamiltonian `Σ_l (Ω_l σx/2 − Δ_l n_l) + Σ_b V_b n_b n_{b+1}`.
pub fn build_hamiltonian(chain: &NormalizedChain) -> Result<SpinHamiltonian> {
    let l = chain.n_atoms;
    if !(2..=MAX_ATOMS).contains(&l) {
        return Err(Error::Capacity(format!("{l} atoms outside the supported range 2..={MAX_ATOMS}")));
    }
    if chain.rabi.len() != l || chain.detuning.len() != l || chain.v0.len() != l - 1 {
        return Err(Error::Usage("chain parameter lengths do not match the atom count".into()));
    }
    let dim = 1usize << l;
    let mut h = Array2::<f64>::zeros((dim, dim));
    for s in 0..dim {
        let mut diag = 0.0;
        for a in 0..l {
            if is_excited(s, a, l) {
                diag -= chain.detuning[a];
            }
        }
        for b in 0..l - 1 {
            if is_excited(s, b, l) && is_excited(s, b + 1, l) {
                diag += chain.v0[b];
            }
        }
        h[[s, s]] = diag;
        for a in 0..l {
            let t = s ^ (1 << (l - 1 - a));
            h[[s, t]] = 0.5 * chain.rabi[a];
        }
    }
    Ok(SpinHamiltonian { n_atoms: l, matrix: h })
}

/// Eigenpairs of a real symmetric spin Hamiltonian.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    /// Ascending energies.
    pub energies: Array1<f64>,
    /// Orthogonal matrix whose columns are the eigenvectors.
    pub vectors: Array2<f64>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `Vᵀ ρ V`: computational-basis operator expressed in the eigenbasis.
    pub fn to_eigen_basis(&self, a: &ArrayView2<C64>) -> Array2<C64> {
        crate::linalg::congruence(&self.vectors.view(), a)
    }

    /// `V ρ Vᵀ`: eigenbasis operator expressed in the computational basis.
    pub fn to_computational_basis(&self, a: &ArrayView2<C64>) -> Array2<C64> {
        crate::linalg::congruence_transpose(&self.vectors.view(), a)
    }

    /// Energy spread `E_max − E_min`.
    pub fn spectral_range(&self) -> f64 {
        let n = self.energies.len();
        if n == 0 {
            0.0
        } else {
            self.energies[n - 1] - self.energies[0]
        }
    }
}

/// Diagonalizes a Hamiltonian, checking its symmetry first.
pub fn diagonalize(h: SpinHamiltonian) -> Result<EigenSystem> {
    diagonalize_symmetric(h.into_matrix())
}

pub fn diagonalize_symmetric(m: Array2<f64>) -> Result<EigenSystem> {
    let scale = m.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-12 * scale {
                return Err(Error::Numerical(format!("Hamiltonian not symmetric at ({i}, {j})")));
            }
        }
    }
    let (energies, vectors) = symmetric_eigen(m)?;
    Ok(EigenSystem { energies, vectors })
}

/// Eigenbasis matrix elements `⟨n|π^b π^{b+1}|m⟩` for every bond `b`.
pub fn pair_elements(es: &EigenSystem, n_atoms: usize) -> Vec<Array2<f64>> {
    let dim = es.dim();
    (0..n_atoms - 1)
        .map(|b| {
            let rows: Vec<usize> =
                (0..dim).filter(|&s| is_excited(s, b, n_atoms) && is_excited(s, b + 1, n_atoms)).collect();
            let sub = es.vectors.select(ndarray::Axis(0), &rows);
            sub.t().dot(&sub)
        })
        .collect()
}
