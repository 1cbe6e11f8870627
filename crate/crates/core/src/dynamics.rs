//! Frozen-gas evolution, the channel action and two-atom observables.

use crate::coupling::{channel_modes, DisentangledModes, MixingModel};
use crate::kernel::{build_channel, ChannelMatrix};
use crate::linalg::{hermitian_defect, hermitian_eigvals};
use crate::spin::{build_hamiltonian, diagonalize, EigenSystem};
use crate::units::NormalizedChain;
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    Computational,
    Eigen,
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub matrix: Array2<C64>,
    pub basis: Basis,
}

impl DensityMatrix {
    pub fn new(matrix: Array2<C64>, basis: Basis) -> Self {
        DensityMatrix { matrix, basis }
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn pure(psi: &Array1<C64>, basis: Basis) -> Self {
        let n = psi.len();
        let mut m = Array2::<C64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] = psi[i] * psi[j].conj();
            }
        }
        DensityMatrix { matrix: m, basis }
    }

    pub fn basis_state(dim: usize, index: usize, basis: Basis) -> Self {
        let mut m = Array2::<C64>::zeros((dim, dim));
        m[[index, index]] = C64::new(1.0, 0.0);
        DensityMatrix { matrix: m, basis }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn population(&self, index: usize) -> f64 {
        self.matrix[[index, index]].re
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(hermitian_eigvals(&self.matrix.view())?.iter().cloned().fold(f64::INFINITY, f64::min))
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-10) and positivity (−1e-8).
    pub fn validate(&self) -> Result<()> {
        let defect = hermitian_defect(&self.matrix.view());
        if defect > 1e-10 {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).norm() > 1e-10 {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue()?;
        if min < -1e-8 {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    pub fn to_eigen(&self, es: &EigenSystem) -> DensityMatrix {
        match self.basis {
            Basis::Eigen => self.clone(),
            Basis::Computational => DensityMatrix::new(es.to_eigen_basis(&self.matrix.view()), Basis::Eigen),
        }
    }

    pub fn to_computational(&self, es: &EigenSystem) -> DensityMatrix {
        match self.basis {
            Basis::Computational => self.clone(),
            Basis::Eigen => DensityMatrix::new(es.to_computational_basis(&self.matrix.view()), Basis::Computational),
        }
    }
}

/// `ρ_nm(t) = e^{−i(E_n−E_m)t} ρ_nm(0)` in the eigenbasis.
pub fn evolve_fga(rho0: &DensityMatrix, es: &EigenSystem, t: f64) -> DensityMatrix {
    let rho = rho0.to_eigen(es);
    let e = &es.energies;
    let mut m = rho.matrix;
    for ((n, k), v) in m.indexed_iter_mut() {
        *v *= C64::from_polar(1.0, -(e[n] - e[k]) * t);
    }
    DensityMatrix::new(m, Basis::Eigen)
}

/// Elementwise product `Γ_nm ρ_nm`.
pub fn apply_channel(rho: &DensityMatrix, channel: &ChannelMatrix) -> Result<DensityMatrix> {
    if rho.basis != Basis::Eigen {
        return Err(Error::Usage("the channel acts on eigenbasis density matrices".into()));
    }
    if rho.dim() != channel.dim() {
        return Err(Error::Usage(format!("density matrix is {}-dimensional, channel {}", rho.dim(), channel.dim())));
    }
    Ok(DensityMatrix::new(&rho.matrix * &channel.gamma, Basis::Eigen))
}

fn same_basis(a: &DensityMatrix, b: &DensityMatrix) -> Result<()> {
    if a.basis != b.basis || a.dim() != b.dim() {
        return Err(Error::Usage("density matrices are in different bases".into()));
    }
    Ok(())
}

/// `Re tr(ρ_a ρ_b)`.
pub fn trace_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    same_basis(a, b)?;
    let n = a.dim();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a.matrix[[i, j]] * b.matrix[[j, i]]).re;
        }
    }
    Ok(acc)
}

/// `½ tr|ρ_a − ρ_b|`.
pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    same_basis(a, b)?;
    crate::linalg::trace_distance(&a.matrix.view(), &b.matrix.view())
}

/// Frozen-gas eigensystem with the normal modes that define its channel.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub es: EigenSystem,
    /// `None` disables dephasing (`Γ ≡ 1`).
    pub modes: Option<DisentangledModes>,
}

impl ChannelModel {
    pub fn rydberg(chain: &NormalizedChain) -> Result<Self> {
        let es = diagonalize(build_hamiltonian(chain)?)?;
        let modes = channel_modes(&es, &MixingModel::rydberg(chain))?;
        Ok(ChannelModel { es, modes: Some(modes) })
    }

    pub fn new(es: EigenSystem, mixing: &MixingModel) -> Result<Self> {
        let modes = channel_modes(&es, mixing)?;
        Ok(ChannelModel { es, modes: Some(modes) })
    }

    pub fn without_dephasing(es: EigenSystem) -> Self {
        ChannelModel { es, modes: None }
    }

    pub fn dim(&self) -> usize {
        self.es.dim()
    }

    pub fn channel(&self, t: f64) -> Result<ChannelMatrix> {
        match &self.modes {
            Some(m) => build_channel(m, t),
            None => Ok(ChannelMatrix::identity(self.dim(), t)),
        }
    }

    /// Frozen-gas and dephased states at time `t`, both in the eigenbasis.
    pub fn evolve(&self, rho0: &DensityMatrix, t: f64) -> Result<(DensityMatrix, DensityMatrix)> {
        let fga = evolve_fga(rho0, &self.es, t);
        let dephased = apply_channel(&fga, &self.channel(t)?)?;
        Ok((fga, dephased))
    }
}

/// Breakdown times of the two-atom channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownEstimate {
    /// Eigenstate most parallel to `|rr⟩`.
    pub doubly_excited: usize,
    /// `(n, T*_n)` for every other eigenstate; infinite when `n` has no `|rr⟩` weight.
    pub per_state: Vec<(usize, f64)>,
    /// Minimum over `per_state`.
    pub t_star: f64,
}

const RR: usize = 3;

fn check_two_atom(es: &EigenSystem, chain: &NormalizedChain) -> Result<()> {
    if chain.n_atoms != 2 || es.dim() != 4 {
        return Err(Error::Usage("two-atom system required".into()));
    }
    Ok(())
}

fn doubly_excited_index(es: &EigenSystem) -> usize {
    let v = &es.vectors;
    (0..4).fold(0, |best, n| if v[[RR, n]].abs() > v[[RR, best]].abs() + 1e-12 { n } else { best })
}

/// Time at which the displacement `F t²/2` of the doubly excited branch makes
/// its first-order energy `F x̄ |⟨n|π¹π²|rr′⟩|` reach the gap `|E_rr′ − E_n|`.
pub fn breakdown_time(es: &EigenSystem, chain: &NormalizedChain) -> Result<BreakdownEstimate> {
    check_two_atom(es, chain)?;
    let f = chain.force[0];
    let rr = doubly_excited_index(es);
    let v = &es.vectors;
    let mut per_state = Vec::new();
    for n in (0..4).filter(|&n| n != rr) {
        let p = (v[[RR, n]] * v[[RR, rr]]).abs();
        let gap = (es.energies[rr] - es.energies[n]).abs();
        let t = if p < 1e-12 { f64::INFINITY } else { (2.0 * gap / p).sqrt() / f };
        per_state.push((n, t));
    }
    let t_star = per_state.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(BreakdownEstimate { doubly_excited: rr, per_state, t_star })
}

/// The van der Waals closed form `T* = r/(3V) sqrt(|ΔE/P|/2)` (unit mass).
pub fn breakdown_time_closed_form(es: &EigenSystem, chain: &NormalizedChain) -> Result<BreakdownEstimate> {
    check_two_atom(es, chain)?;
    if chain.exponent != 6 {
        return Err(Error::Domain("the closed form assumes a van der Waals interaction".into()));
    }
    let (r, v0) = (chain.spacings[0], chain.v0[0]);
    let rr = doubly_excited_index(es);
    let v = &es.vectors;
    let mut per_state = Vec::new();
    for n in (0..4).filter(|&n| n != rr) {
        let p = (v[[RR, n]] * v[[RR, rr]]).abs();
        let gap = (es.energies[rr] - es.energies[n]).abs();
        let t = if p < 1e-12 { f64::INFINITY } else { r / (3.0 * v0) * (0.5 * gap / p).sqrt() };
        per_state.push((n, t));
    }
    let t_star = per_state.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(BreakdownEstimate { doubly_excited: rr, per_state, t_star })
}

/// Synthetic exchange rate `J = Ω²V/(4Δ(Δ − V))`.
pub fn spin_exchange_rate(rabi: f64, detuning: f64, v0: f64) -> Result<f64> {
    let scale = v0.abs().max(detuning.abs()).max(f64::MIN_POSITIVE);
    if detuning.abs() <= 1e-12 * scale || (detuning - v0).abs() <= 1e-12 * scale {
        return Err(Error::Domain(format!("exchange rate has a pole at Δ = {detuning}, V = {v0}")));
    }
    Ok(rabi * rabi * v0 / (4.0 * detuning * (detuning - v0)))
}

pub fn chain_exchange_rate(chain: &NormalizedChain) -> Result<f64> {
    spin_exchange_rate(chain.rabi[0], chain.detuning[0], chain.v0[0])
}

/// Two-atom labels: `|a⟩` is the eigenstate most parallel to the
/// antisymmetric single excitation; the rest take the closest of `|gg⟩`, `|s⟩`, `|rr⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchLabel {
    Gg,
    S,
    Rr,
    A,
}

impl BranchLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchLabel::Gg => "gg",
            BranchLabel::S => "s",
            BranchLabel::Rr => "rr",
            BranchLabel::A => "a",
        }
    }
}

pub fn branch_labels(es: &EigenSystem) -> Result<Vec<BranchLabel>> {
    if es.dim() != 4 {
        return Err(Error::Usage("two-atom system required".into()));
    }
    let v = &es.vectors;
    let r = 1.0 / 2f64.sqrt();
    let sym = |n: usize| (r * (v[[1, n]] + v[[2, n]])).powi(2);
    let anti = |n: usize| (r * (v[[1, n]] - v[[2, n]])).powi(2);
    let a_index = (0..4).fold(0, |best, n| if anti(n) > anti(best) + 1e-12 { n } else { best });
    Ok((0..4)
        .map(|n| {
            if n == a_index {
                return BranchLabel::A;
            }
            let weights = [(BranchLabel::Gg, v[[0, n]].powi(2)), (BranchLabel::S, sym(n)), (BranchLabel::Rr, v[[RR, n]].powi(2))];
            weights.iter().fold(weights[0], |best, w| if w.1 > best.1 + 1e-12 { *w } else { best }).0
        })
        .collect())
}

/// Returns of a two-atom exchange started in `|rg⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeCycles {
    /// `π/|J|`.
    pub nominal_period: f64,
    /// First detected return time.
    pub detected_period: f64,
    /// Peak times of the frozen-gas return probability.
    pub return_times: Vec<f64>,
    /// Frozen-gas `⟨rg|ρ|rg⟩` at each return.
    pub fidelity_fga: Vec<f64>,
    /// Dephased `⟨rg|ρ′|rg⟩` at each return.
    pub fidelity_channel: Vec<f64>,
}

impl ExchangeCycles {
    /// Consecutive returns, from the first, whose dephased return probability
    /// reaches `threshold`.
    pub fn count(&self, threshold: f64) -> usize {
        self.fidelity_channel.iter().take_while(|&&f| f >= threshold).count()
    }
}

const RG: usize = 2;
const WINDOW_SAMPLES: usize = 400;
const MAX_WINDOW_SAMPLES: usize = 4_000_000;

fn rg_probability(es: &EigenSystem, weights: &Array1<f64>, t: f64) -> f64 {
    // |Σ_n v_rg,n² e^{−iE_n t}|² for a start in |rg⟩.
    let mut amp = C64::new(0.0, 0.0);
    for n in 0..es.dim() {
        amp += weights[n] * C64::from_polar(1.0, -es.energies[n] * t);
    }
    amp.norm_sqr()
}

/// Locates the maximum of the frozen-gas return probability in `[lo, hi]` by
/// dense sampling and a parabola through the best sample and its neighbours.
/// The sampling resolves the fastest Bohr frequency with at least sixteen
/// points per oscillation.
fn locate_return(es: &EigenSystem, weights: &Array1<f64>, lo: f64, hi: f64) -> f64 {
    let fast = (hi - lo) * es.spectral_range() / (2.0 * PI);
    let samples_n = ((16.0 * fast).ceil() as usize).clamp(WINDOW_SAMPLES, MAX_WINDOW_SAMPLES);
    let h = (hi - lo) / samples_n as f64;
    let samples: Vec<f64> = (0..=samples_n).map(|k| rg_probability(es, weights, lo + k as f64 * h)).collect();
    let best = (0..samples.len()).fold(0, |b, k| if samples[k] > samples[b] { k } else { b });
    if best == 0 || best == samples_n {
        return lo + best as f64 * h;
    }
    let (y0, y1, y2) = (samples[best - 1], samples[best], samples[best + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom < 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    lo + (best as f64 + shift.clamp(-1.0, 1.0)) * h
}

/// First frozen-gas return to `|rg⟩`, searched within half a nominal period
/// of `π/|J|`.
pub fn first_return_time(es: &EigenSystem, chain: &NormalizedChain) -> Result<f64> {
    check_two_atom(es, chain)?;
    let period = PI / chain_exchange_rate(chain)?.abs();
    let weights = es.vectors.row(RG).mapv(|x| x * x);
    Ok(locate_return(es, &weights, 0.5 * period, 1.5 * period))
}

/// Follows the exchange from `|rg⟩` over `horizon` (normalized time) and
/// records the return probabilities with and without dephasing.
pub fn exchange_cycle_metrics(model: &ChannelModel, chain: &NormalizedChain, horizon: f64) -> Result<ExchangeCycles> {
    check_two_atom(&model.es, chain)?;
    let es = &model.es;
    let nominal = PI / chain_exchange_rate(chain)?.abs();
    let weights = es.vectors.row(RG).mapv(|x| x * x);
    let rho0 = DensityMatrix::basis_state(4, RG, Basis::Computational).to_eigen(es);
    let mut return_times = Vec::new();
    let mut fidelity_fga = Vec::new();
    let mut fidelity_channel = Vec::new();
    let mut prev = 0.0;
    let mut period = nominal;
    loop {
        let t = locate_return(es, &weights, prev + 0.5 * period, prev + 1.5 * period);
        if t > horizon {
            break;
        }
        if return_times.is_empty() {
            period = t;
        }
        let (fga, dephased) = model.evolve(&rho0, t)?;
        fidelity_fga.push(fga.to_computational(es).population(RG));
        fidelity_channel.push(dephased.to_computational(es).population(RG));
        return_times.push(t);
        prev = t;
    }
    let detected = return_times.first().copied().unwrap_or(f64::NAN);
    Ok(ExchangeCycles { nominal_period: nominal, detected_period: detected, return_times, fidelity_fga, fidelity_channel })
}

/// Time at which `tr(ρ′ρ_fga)` first falls to `level`, by bisection after a
/// coarse scan with step `dt` up to `horizon`. `None` if it never does.
pub fn fidelity_crossing(model: &ChannelModel, rho0: &DensityMatrix, level: f64, dt: f64, horizon: f64) -> Result<Option<f64>> {
    let fidelity = |t: f64| -> Result<f64> {
        let (fga, dephased) = model.evolve(rho0, t)?;
        trace_fidelity(&dephased, &fga)
    };
    let mut lo = 0.0;
    let mut t = dt;
    while t <= horizon {
        if fidelity(t)? <= level {
            let mut hi = t;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if fidelity(mid)? <= level {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Some(hi));
        }
        lo = t;
        t += dt;
    }
    Ok(None)
}
