//! Perturbative spin-motion coupling and its normal-mode decomposition.
//!
//! The motional part of the Hamiltonian is `−Σ_b (x_{b+1} − x_b) O_b`, where
//! bond `b` joins coordinates `b` and `b + 1` and `O_b` is a spin operator
//! (`F_b π^b π^{b+1}` for a Rydberg chain). With `w^l = O^{l−1} − O^l` in the
//! spin eigenbasis, eigenstate `n` sees the energy
//! `E_n − f_nᵀx + xᵀM_n x` with force `f_n^l = w^l_nn` and curvature
//! `M_n^{lk} = Σ_{m≠n} w^l_mn w^k_nm / (E_n − E_m)`.

use crate::linalg::symmetric_eigen;
use crate::spin::{is_excited, EigenSystem};
use crate::units::NormalizedChain;
use crate::{Error, Result};
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

/// Relative gap below which two energies count as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;
/// Relative coupling above which a degenerate pair is an error.
pub const DEGENERACY_COUPLING: f64 = 1e-12;

/// A bond operator in the computational basis.
#[derive(Clone, Debug)]
pub enum BondOperator {
    /// Diagonal operator given by its nonzero entries.
    Diagonal { states: Vec<usize>, values: Vec<f64> },
    /// Dense real symmetric operator.
    Dense(Array2<f64>),
}

impl BondOperator {
    fn max_abs(&self) -> f64 {
        match self {
            BondOperator::Diagonal { values, .. } => values.iter().fold(0.0, |a, v| a.max(v.abs())),
            BondOperator::Dense(m) => m.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }

    /// `⟨m|O|n⟩` for all `m` and the eigenvector columns `cols`.
    fn eigen_block(&self, vectors: &Array2<f64>, gathered: Option<&Array2<f64>>, cols: std::ops::Range<usize>) -> Array2<f64> {
        match self {
            BondOperator::Diagonal { states, values } => {
                let rows = gathered.expect("diagonal bonds are pre-gathered");
                let mut right = Array2::<f64>::zeros((states.len(), cols.len()));
                for (i, (&s, &v)) in states.iter().zip(values).enumerate() {
                    let src = vectors.slice(s![s, cols.clone()]);
                    right.row_mut(i).zip_mut_with(&src, |r, &x| *r = v * x);
                }
                rows.t().dot(&right)
            }
            BondOperator::Dense(op) => {
                let block = vectors.slice(s![.., cols]);
                vectors.t().dot(&op.dot(&block))
            }
        }
    }
}

/// Bond operators together with the number of motional coordinates.
#[derive(Clone, Debug)]
pub struct MixingModel {
    n_sites: usize,
    dim: usize,
    bonds: Vec<BondOperator>,
}

impl MixingModel {
    pub fn new(n_sites: usize, dim: usize, bonds: Vec<BondOperator>) -> Result<Self> {
        if n_sites < 2 || bonds.len() != n_sites - 1 {
            return Err(Error::Usage(format!("{} bonds for {n_sites} sites", bonds.len())));
        }
        for b in &bonds {
            let ok = match b {
                BondOperator::Diagonal { states, values } => {
                    states.len() == values.len() && states.iter().all(|&s| s < dim)
                }
                BondOperator::Dense(m) => m.dim() == (dim, dim),
            };
            if !ok {
                return Err(Error::Usage("bond operator does not match the Hilbert space".into()));
            }
        }
        Ok(MixingModel { n_sites, dim, bonds })
    }

    /// `O_b = F_b π^b π^{b+1}` for a Rydberg chain.
    pub fn rydberg(chain: &NormalizedChain) -> Self {
        let l = chain.n_atoms;
        let dim = 1usize << l;
        let bonds = (0..l - 1)
            .map(|b| {
                let states: Vec<usize> =
                    (0..dim).filter(|&s| is_excited(s, b, l) && is_excited(s, b + 1, l)).collect();
                let values = vec![chain.force[b]; states.len()];
                BondOperator::Diagonal { states, values }
            })
            .collect();
        MixingModel { n_sites: l, dim, bonds }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bonds(&self) -> &[BondOperator] {
        &self.bonds
    }

    /// Largest matrix element of any bond operator.
    pub fn scale(&self) -> f64 {
        self.bonds.iter().fold(0.0, |a, b| a.max(b.max_abs()))
    }

    fn gather(&self, es: &EigenSystem) -> Vec<Option<Array2<f64>>> {
        self.bonds
            .iter()
            .map(|b| match b {
                BondOperator::Diagonal { states, .. } => Some(es.vectors.select(Axis(0), states)),
                BondOperator::Dense(_) => None,
            })
            .collect()
    }
}

/// Forces and curvatures of every eigenstate.
#[derive(Clone, Debug)]
pub struct CouplingData {
    /// Row `n` is the force vector `f_n`.
    pub forces: Array2<f64>,
    /// `M_n` for every eigenstate.
    pub curvature: Vec<Array2<f64>>,
}

/// Full tensor `w[l, n, m]`. Memory grows as `L·4^L`; intended for small systems.
pub fn compute_w(es: &EigenSystem, model: &MixingModel) -> Array3<f64> {
    let dim = es.dim();
    let l = model.n_sites;
    let gathered = model.gather(es);
    let ops: Vec<Array2<f64>> = model
        .bonds
        .iter()
        .zip(&gathered)
        .map(|(b, g)| b.eigen_block(&es.vectors, g.as_ref(), 0..dim))
        .collect();
    let mut w = Array3::<f64>::zeros((l, dim, dim));
    for site in 0..l {
        let mut slab = w.index_axis_mut(Axis(0), site);
        if site > 0 {
            slab += &ops[site - 1];
        }
        if site < l - 1 {
            slab -= &ops[site];
        }
    }
    w
}

fn degeneracy_thresholds(es: &EigenSystem, scale: f64) -> (f64, f64) {
    (DEGENERACY_GAP * es.spectral_range(), DEGENERACY_COUPLING * scale)
}

/// `f_n` and `M_n` from an explicit `w` tensor.
pub fn compute_quadratic(es: &EigenSystem, w: &Array3<f64>) -> Result<CouplingData> {
    let (l, dim, _) = w.dim();
    let scale = w.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (eps_gap, eps_w) = degeneracy_thresholds(es, scale);
    let e = &es.energies;
    let mut forces = Array2::<f64>::zeros((dim, l));
    let mut curvature = Vec::with_capacity(dim);
    for n in 0..dim {
        forces.row_mut(n).assign(&w.slice(s![.., n, n]));
        let mut m_n = Array2::<f64>::zeros((l, l));
        for m in 0..dim {
            if m == n {
                continue;
            }
            let gap = e[n] - e[m];
            let col = w.slice(s![.., m, n]);
            if gap.abs() <= eps_gap {
                let coupling = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if coupling > eps_w {
                    return Err(Error::Degeneracy { n, m, gap, coupling });
                }
                continue;
            }
            for a in 0..l {
                for b in 0..l {
                    m_n[[a, b]] += col[a] * col[b] / gap;
                }
            }
        }
        curvature.push(m_n);
    }
    Ok(CouplingData { forces, curvature })
}

/// Columns of eigenstates processed together by [`quadratic_coupling`].
const BLOCK: usize = 256;

/// `f_n` and `M_n` without materializing `w`: bond operators are transformed
/// into the eigenbasis one block of eigenstates at a time.
pub fn quadratic_coupling(es: &EigenSystem, model: &MixingModel) -> Result<CouplingData> {
    let dim = es.dim();
    if dim != model.dim {
        return Err(Error::Usage("eigensystem and mixing model dimensions differ".into()));
    }
    let l = model.n_sites;
    let nb = model.bonds.len();
    let (eps_gap, eps_w) = degeneracy_thresholds(es, model.scale());
    let gathered = model.gather(es);
    let e = &es.energies;

    let mut forces = Array2::<f64>::zeros((dim, l));
    let mut curvature = Vec::with_capacity(dim);
    let mut start = 0;
    while start < dim {
        let end = (start + BLOCK).min(dim);
        let ops: Vec<Array2<f64>> = model
            .bonds
            .iter()
            .zip(&gathered)
            .map(|(b, g)| b.eigen_block(&es.vectors, g.as_ref(), start..end))
            .collect();
        let block: Vec<Result<(Array1<f64>, Array2<f64>)>> = (start..end)
            .into_par_iter()
            .map(|n| {
                let j = n - start;
                let cols: Vec<ArrayView1<f64>> = ops.iter().map(|o| o.column(j)).collect();
                let mut inv_gap = Array1::<f64>::zeros(dim);
                for m in 0..dim {
                    if m == n {
                        continue;
                    }
                    let gap = e[n] - e[m];
                    if gap.abs() <= eps_gap {
                        let coupling = site_coupling(&cols, m);
                        if coupling > eps_w {
                            return Err(Error::Degeneracy { n, m, gap, coupling });
                        }
                        continue;
                    }
                    inv_gap[m] = 1.0 / gap;
                }
                let mut bond_sums = Array2::<f64>::zeros((nb, nb));
                for a in 0..nb {
                    let weighted = &cols[a] * &inv_gap;
                    for b in a..nb {
                        let v = weighted.dot(&cols[b]);
                        bond_sums[[a, b]] = v;
                        bond_sums[[b, a]] = v;
                    }
                }
                let mut force = Array1::<f64>::zeros(l);
                for b in 0..nb {
                    force[b + 1] += cols[b][n];
                    force[b] -= cols[b][n];
                }
                Ok((force, bonds_to_sites(&bond_sums)))
            })
            .collect();
        for (j, r) in block.into_iter().enumerate() {
            let (f, m) = r?;
            forces.row_mut(start + j).assign(&f);
            curvature.push(m);
        }
        start = end;
    }
    Ok(CouplingData { forces, curvature })
}

/// `max_l |w^l_mn|` from bond elements.
fn site_coupling(cols: &[ArrayView1<f64>], m: usize) -> f64 {
    let nb = cols.len();
    (0..=nb)
        .map(|site| {
            let left = if site > 0 { cols[site - 1][m] } else { 0.0 };
            let right = if site < nb { cols[site][m] } else { 0.0 };
            (left - right).abs()
        })
        .fold(0.0, f64::max)
}

/// Maps bond-pair sums `N^{bb'}` to site curvature via `w^l = O^{l−1} − O^l`.
fn bonds_to_sites(n: &Array2<f64>) -> Array2<f64> {
    let nb = n.nrows();
    let l = nb + 1;
    let coeff = |site: usize, bond: usize| -> f64 {
        if bond + 1 == site {
            1.0
        } else if bond == site {
            -1.0
        } else {
            0.0
        }
    };
    let mut m = Array2::<f64>::zeros((l, l));
    for a in 0..l {
        for b in 0..l {
            let mut acc = 0.0;
            for p in a.saturating_sub(1)..(a + 1).min(nb) {
                for q in b.saturating_sub(1)..(b + 1).min(nb) {
                    acc += coeff(a, p) * coeff(b, q) * n[[p, q]];
                }
            }
            m[[a, b]] = acc;
        }
    }
    m
}

/// Orthonormal basis of the relative coordinates: rows span the complement of
/// the centre-of-mass direction.
#[derive(Clone, Debug, PartialEq)]
pub struct GramSchmidtBasis {
    matrix: Array2<f64>,
}

impl GramSchmidtBasis {
    /// Orthonormalizes the adjacent separations `x_{k+1} − x_k` in order.
    pub fn iterative(n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::Usage("need at least two sites".into()));
        }
        let mut g = Array2::<f64>::zeros((n_sites - 1, n_sites));
        for k in 0..n_sites - 1 {
            let mut u = Array1::<f64>::zeros(n_sites);
            u[k] = -1.0;
            u[k + 1] = 1.0;
            for j in 0..k {
                let proj = g.row(j).dot(&u);
                u.scaled_add(-proj, &g.row(j));
            }
            let norm = u.dot(&u).sqrt();
            g.row_mut(k).assign(&(u / norm));
        }
        Ok(GramSchmidtBasis { matrix: g })
    }

    /// Row `l` (1-based) is `(−1, …, −1, l, 0, …)/√(l + l²)` with `l` leading entries.
    pub fn closed_form(n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::Usage("need at least two sites".into()));
        }
        let mut g = Array2::<f64>::zeros((n_sites - 1, n_sites));
        for row in 0..n_sites - 1 {
            let l = (row + 1) as f64;
            let norm = (l + l * l).sqrt();
            for k in 0..=row {
                g[[row, k]] = -1.0 / norm;
            }
            g[[row, row + 1]] = l / norm;
        }
        Ok(GramSchmidtBasis { matrix: g })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn n_sites(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn gram_schmidt(n_sites: usize) -> Result<GramSchmidtBasis> {
    GramSchmidtBasis::iterative(n_sites)
}

/// Normal modes of one eigenstate.
#[derive(Clone, Debug)]
pub struct ModeSet {
    /// Orthogonal `Q`; row `l` is mode `l` in relative coordinates.
    pub rotation: Array2<f64>,
    /// Eigenvalues `d_l` of `S = G M Gᵀ`, descending.
    pub curvature: Array1<f64>,
    /// `T = Q G`, mapping site coordinates to mode coordinates.
    pub transform: Array2<f64>,
    /// Mode forces `T f`.
    pub forces: Array1<f64>,
}

impl ModeSet {
    /// Squared angular frequency of mode `l`. The quadratic energy `d s²`
    /// equals `ω² s²/2` for unit mass, so `ω² = 2d`.
    pub fn omega_sq(&self, l: usize) -> f64 {
        2.0 * self.curvature[l]
    }

    pub fn n_modes(&self) -> usize {
        self.curvature.len()
    }

    /// Mode set with no curvature and no force.
    pub fn free(basis: &GramSchmidtBasis) -> Self {
        let d = basis.n_sites() - 1;
        ModeSet {
            rotation: Array2::eye(d),
            curvature: Array1::zeros(d),
            transform: basis.matrix().clone(),
            forces: Array1::zeros(d),
        }
    }
}

/// Diagonalizes `G M Gᵀ` and transforms the force into mode coordinates.
pub fn disentangle(m: &ArrayView2<f64>, basis: &GramSchmidtBasis, force: &ArrayView1<f64>) -> Result<ModeSet> {
    let g = basis.matrix();
    let s = g.dot(m).dot(&g.t());
    let s = (&s + &s.t()) * 0.5;
    let (vals, vecs) = symmetric_eigen(s)?;
    let d = vals.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let mut rotation = Array2::<f64>::zeros((d, d));
    let mut curvature = Array1::<f64>::zeros(d);
    for (row, &k) in order.iter().enumerate() {
        rotation.row_mut(row).assign(&vecs.column(k));
        curvature[row] = vals[k];
    }
    let transform = rotation.dot(g);
    let forces = transform.dot(force);
    Ok(ModeSet { rotation, curvature, transform, forces })
}

/// Normal modes of every eigenstate.
#[derive(Clone, Debug)]
pub struct DisentangledModes {
    pub basis: GramSchmidtBasis,
    pub modes: Vec<ModeSet>,
}

impl DisentangledModes {
    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn n_sites(&self) -> usize {
        self.basis.n_sites()
    }

    /// Every eigenstate free of force and curvature.
    pub fn free(n_sites: usize, dim: usize) -> Result<Self> {
        let basis = GramSchmidtBasis::closed_form(n_sites)?;
        let modes = vec![ModeSet::free(&basis); dim];
        Ok(DisentangledModes { basis, modes })
    }
}

pub fn disentangle_all(data: &CouplingData, basis: &GramSchmidtBasis) -> Result<DisentangledModes> {
    let modes: Result<Vec<ModeSet>> = data
        .curvature
        .par_iter()
        .enumerate()
        .map(|(n, m)| disentangle(&m.view(), basis, &data.forces.row(n)))
        .collect();
    Ok(DisentangledModes { basis: basis.clone(), modes: modes? })
}

/// Coupling, Gram–Schmidt and normal modes in one pass.
pub fn channel_modes(es: &EigenSystem, model: &MixingModel) -> Result<DisentangledModes> {
    let data = quadratic_coupling(es, model)?;
    let basis = GramSchmidtBasis::closed_form(model.n_sites)?;
    disentangle_all(&data, &basis)
}
