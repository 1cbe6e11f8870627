//! Single-excitation transport along an effective exchange chain.
//!
//! Sites `0..=L` carry one shared excitation. Bond `b` joins sites `b` and
//! `b + 1` with exchange `J_b` and slope `J′_b = ∂J_b/∂r`; the motional term is
//! `Σ_b J′_b (x_{b+1} − x_b)(|b⟩⟨b+1| + |b+1⟩⟨b|)`. Site 0 is the auxiliary
//! half of the Bell pair and is normally left uncoupled.

use crate::coupling::{BondOperator, MixingModel};
use crate::dynamics::{Basis, ChannelModel, DensityMatrix};
use crate::linalg::{hermitian_eigen, symmetric_eigen};
use crate::spin::EigenSystem;
use crate::units::Scales;
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use rayon::prelude::*;

/// Largest supported chain length `L`.
pub const MAX_CHAIN_SITES: usize = 1000;

/// Exchange couplings of a single-excitation chain in normalized units.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChain {
    /// On-site energies `μ_l`, one per site `0..=L`.
    pub on_site: Vec<f64>,
    /// `J_b` for bonds `0..L`.
    pub coupling: Vec<f64>,
    /// `∂J_b/∂r` for bonds `0..L`.
    pub coupling_slope: Vec<f64>,
    /// Bond rest lengths.
    pub spacings: Vec<f64>,
    pub scales: Scales,
}

/// Per-bond drive of a physical chain. The auxiliary bond is not driven.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportParams {
    /// Number of chain sites `L` (excluding the auxiliary).
    pub n_chain: usize,
    /// Trap spacing in metres.
    pub spacing: f64,
    pub interaction_coefficient: f64,
    pub interaction_exponent: u32,
    /// Common detuning in rad/s.
    pub detuning: f64,
    /// Rabi frequency of each of the `L − 1` chain bonds in rad/s.
    pub rabi: Vec<f64>,
    pub atom_mass: f64,
    pub trap_frequency: f64,
}

/// `J = Ω²V/(4Δ(Δ − V))` and `dJ/dV = Ω²/(4(Δ − V)²)`.
pub fn exchange_coupling(rabi: f64, detuning: f64, v0: f64) -> Result<(f64, f64)> {
    let j = crate::dynamics::spin_exchange_rate(rabi, detuning, v0)?;
    let dj = rabi * rabi / (4.0 * (detuning - v0).powi(2));
    Ok((j, dj))
}

/// Rabi frequencies `Ω_n ∝ (n(L − n))^{1/4}` for bonds `n = 1..L−1`, scaled
/// so the strongest bond is driven at `peak_rabi`. At fixed detuning this
/// makes `J_n ∝ √(n(L − n))`, the perfect-transfer profile.
pub fn perfect_transfer_rabi(n_chain: usize, peak_rabi: f64) -> Vec<f64> {
    let weight = |n: usize| ((n * (n_chain - n)) as f64).sqrt();
    let top = (1..n_chain).map(weight).fold(0.0, f64::max);
    (1..n_chain).map(|n| peak_rabi * (weight(n) / top).sqrt()).collect()
}

impl EffectiveChain {
    /// Takes couplings verbatim.
    pub fn direct(on_site: Vec<f64>, coupling: Vec<f64>, coupling_slope: Vec<f64>, spacings: Vec<f64>, scales: Scales) -> Result<Self> {
        let bonds = on_site.len().saturating_sub(1);
        if on_site.len() < 3 {
            return Err(Error::Usage("an effective chain needs at least two sites besides the auxiliary".into()));
        }
        if bonds > MAX_CHAIN_SITES {
            return Err(Error::Capacity(format!("{bonds} chain sites exceed the supported {MAX_CHAIN_SITES}")));
        }
        if coupling.len() != bonds || coupling_slope.len() != bonds || spacings.len() != bonds {
            return Err(Error::Usage(format!("expected {bonds} bonds for {} sites", on_site.len())));
        }
        let all = on_site.iter().chain(&coupling).chain(&coupling_slope).chain(&spacings);
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::Domain("effective couplings must be finite".into()));
        }
        Ok(EffectiveChain { on_site, coupling, coupling_slope, spacings, scales })
    }

    /// Builds `J_b` and `J′_b = (dJ/dV)(−αV/r)` from the two-site formula for
    /// each chain bond. The auxiliary bond gets zero coupling.
    pub fn physical(p: &TransportParams) -> Result<Self> {
        if p.n_chain < 2 {
            return Err(Error::Usage("transport needs at least two chain sites".into()));
        }
        if p.n_chain > MAX_CHAIN_SITES {
            return Err(Error::Capacity(format!("{} chain sites exceed the supported {MAX_CHAIN_SITES}", p.n_chain)));
        }
        if p.rabi.len() != p.n_chain - 1 {
            return Err(Error::Usage(format!("{} bond drives for {} chain sites", p.rabi.len(), p.n_chain)));
        }
        if !(p.spacing > 0.0) || !(p.trap_frequency > 0.0) || !(p.atom_mass > 0.0) {
            return Err(Error::Config("spacing, trap frequency and mass must be positive".into()));
        }
        let scales = Scales::new(p.trap_frequency, p.atom_mass);
        let v = crate::units::interaction_energy(p.interaction_coefficient, p.interaction_exponent, p.spacing)?;
        let v0 = scales.energy_to_normalized(v);
        let detuning = scales.frequency_to_normalized(p.detuning);
        let r = scales.length_to_normalized(p.spacing);
        let alpha = p.interaction_exponent as f64;
        let mut coupling = vec![0.0];
        let mut slope = vec![0.0];
        for &rabi in &p.rabi {
            let (j, dj) = exchange_coupling(scales.frequency_to_normalized(rabi), detuning, v0)?;
            coupling.push(j);
            slope.push(dj * (-alpha * v0 / r));
        }
        EffectiveChain::direct(vec![0.0; p.n_chain + 1], coupling, slope, vec![r; p.n_chain], scales)
    }

    /// `J_n = peak·√(n(L − n))/max_n √(n(L − n))` on the chain with
    /// `J′_n = slope_ratio·J_n`, auxiliary uncoupled, uniform zero on-site energy.
    pub fn perfect_transfer(n_chain: usize, peak: f64, slope_ratio: f64, spacing: f64, scales: Scales) -> Result<Self> {
        if n_chain < 2 {
            return Err(Error::Usage("transport needs at least two chain sites".into()));
        }
        let weight = |n: usize| ((n * (n_chain - n)) as f64).sqrt();
        let top = (1..n_chain).map(weight).fold(0.0, f64::max);
        let mut coupling = vec![0.0];
        coupling.extend((1..n_chain).map(|n| peak * weight(n) / top));
        let slope = coupling.iter().map(|j| slope_ratio * j).collect();
        EffectiveChain::direct(vec![0.0; n_chain + 1], coupling, slope, vec![spacing; n_chain], scales)
    }

    /// Chain length `L`.
    pub fn n_chain(&self) -> usize {
        self.on_site.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.on_site.len()
    }

    fn hopping(&self, b: usize, value: f64) -> Array2<f64> {
        let mut m = Array2::zeros((self.dim(), self.dim()));
        m[[b, b + 1]] = value;
        m[[b + 1, b]] = value;
        m
    }

    /// Single-excitation Hamiltonian in the site basis.
    pub fn hamiltonian(&self) -> Array2<f64> {
        let mut h = Array2::from_diag(&Array1::from(self.on_site.clone()));
        for (b, &j) in self.coupling.iter().enumerate() {
            h[[b, b + 1]] += j;
            h[[b + 1, b]] += j;
        }
        h
    }

    /// Bond operators `O_b = −J′_b(|b⟩⟨b+1| + h.c.)`; one motional coordinate per site.
    pub fn mixing_model(&self) -> Result<MixingModel> {
        let bonds = self.coupling_slope.iter().enumerate().map(|(b, &s)| BondOperator::Dense(self.hopping(b, -s))).collect();
        MixingModel::new(self.dim(), self.dim(), bonds)
    }

    /// Transfer time `π/δ` of a perfect-transfer chain, where `δ` is the
    /// smallest level spacing of the chain (the auxiliary excluded when
    /// uncoupled).
    pub fn transfer_time(&self) -> Result<f64> {
        let h = self.hamiltonian();
        let block = if self.coupling[0] == 0.0 { h.slice(ndarray::s![1.., 1..]).to_owned() } else { h };
        let (e, _) = symmetric_eigen(block)?;
        let range = e[e.len() - 1] - e[0];
        let gap = e.as_slice().expect("contiguous").windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 1e-9 * range).fold(f64::INFINITY, f64::min);
        if !gap.is_finite() {
            return Err(Error::Domain("chain spectrum has no level spacing".into()));
        }
        Ok(std::f64::consts::PI / gap)
    }

    /// Eigenpairs of [`Self::hamiltonian`] with ascending energies. An
    /// uncoupled auxiliary is split off first so that it never mixes with a
    /// degenerate chain state.
    pub fn eigensystem(&self) -> Result<EigenSystem> {
        let h = self.hamiltonian();
        let n = self.dim();
        if self.coupling[0] != 0.0 || self.coupling_slope[0] != 0.0 {
            let (energies, vectors) = symmetric_eigen(h)?;
            return Ok(EigenSystem { energies, vectors });
        }
        let block = h.slice(ndarray::s![1.., 1..]).to_owned();
        let (e, v) = symmetric_eigen(block)?;
        let mut pairs: Vec<(f64, Array1<f64>)> = Vec::with_capacity(n);
        let mut aux = Array1::zeros(n);
        aux[0] = 1.0;
        pairs.push((self.on_site[0], aux));
        for k in 0..n - 1 {
            let mut col = Array1::zeros(n);
            col.slice_mut(ndarray::s![1..]).assign(&v.column(k));
            pairs.push((e[k], col));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let energies = Array1::from_iter(pairs.iter().map(|p| p.0));
        let mut vectors = Array2::zeros((n, n));
        for (k, (_, col)) in pairs.iter().enumerate() {
            vectors.column_mut(k).assign(col);
        }
        Ok(EigenSystem { energies, vectors })
    }
}

/// Wootters concurrence of a two-qubit state (basis `gg, gr, rg, rr`).
pub fn concurrence(rho: &Array2<C64>) -> Result<f64> {
    if rho.dim() != (4, 4) {
        return Err(Error::Usage("concurrence needs a 4×4 density matrix".into()));
    }
    let (w, v) = hermitian_eigen(&rho.view())?;
    if w.iter().any(|&x| x < -1e-8) {
        return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", w.iter().cloned().fold(f64::INFINITY, f64::min))));
    }
    let sqrt_rho = {
        let d = w.mapv(|x| C64::new(x.max(0.0).sqrt(), 0.0));
        let vd = &v * &d.view().insert_axis(ndarray::Axis(0));
        vd.dot(&v.t().mapv(|c| c.conj()))
    };
    // σ_y ⊗ σ_y reverses the basis with signs (+, −, −, +) up to a global factor.
    let sign = [1.0, -1.0, -1.0, 1.0];
    let tilde = Array2::from_shape_fn((4, 4), |(i, j)| rho[[3 - i, 3 - j]].conj() * (sign[i] * sign[j]));
    let m = sqrt_rho.dot(&tilde).dot(&sqrt_rho);
    let herm = (&m + &m.t().mapv(|c| c.conj())).mapv(|c| c * 0.5);
    let (mu, _) = hermitian_eigen(&herm.view())?;
    let mut lambda: Vec<f64> = mu.iter().map(|&x| x.max(0.0).sqrt()).collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    Ok((lambda[0] - lambda[1] - lambda[2] - lambda[3]).clamp(0.0, 1.0))
}

/// Two-qubit state of sites 0 and `L` from a single-excitation density
/// matrix in the site basis. Weight on the other sites maps to `|gg⟩`.
pub fn end_pair_state(rho: &Array2<C64>) -> Array2<C64> {
    let last = rho.nrows() - 1;
    let (p0, pl) = (rho[[0, 0]], rho[[last, last]]);
    let mut out = Array2::zeros((4, 4));
    out[[0, 0]] = C64::new(1.0, 0.0) - p0 - pl;
    // Index 1 = |g₀ r_L⟩, index 2 = |r₀ g_L⟩.
    out[[1, 1]] = pl;
    out[[2, 2]] = p0;
    out[[2, 1]] = rho[[0, last]];
    out[[1, 2]] = rho[[last, 0]];
    out
}

/// Channel model for one effective chain with its Bell-pair initial state.
#[derive(Clone, Debug)]
pub struct TransportModel {
    pub chain: EffectiveChain,
    pub model: ChannelModel,
    rho0: DensityMatrix,
}

impl TransportModel {
    pub fn new(chain: EffectiveChain, dephasing: bool) -> Result<Self> {
        let es = chain.eigensystem()?;
        let model = if dephasing { ChannelModel::new(es, &chain.mixing_model()?)? } else { ChannelModel::without_dephasing(es) };
        let n = chain.dim();
        let mut psi = Array1::<C64>::zeros(n);
        psi[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        psi[1] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let rho0 = DensityMatrix::pure(&psi, Basis::Computational).to_eigen(&model.es);
        Ok(TransportModel { chain, model, rho0 })
    }

    /// Dephased site-basis state at time `t`.
    pub fn state(&self, t: f64) -> Result<DensityMatrix> {
        let (_, dephased) = self.model.evolve(&self.rho0, t)?;
        Ok(dephased.to_computational(&self.model.es))
    }

    pub fn concurrence(&self, t: f64) -> Result<f64> {
        concurrence(&end_pair_state(&self.state(t)?.matrix))
    }

    pub fn transfer_time(&self) -> Result<f64> {
        self.chain.transfer_time()
    }
}

/// Concurrence series and its peak.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportResult {
    pub times: Vec<f64>,
    pub concurrence: Vec<f64>,
    pub peak_concurrence: f64,
    pub peak_time: f64,
    /// Peak below one half.
    pub crossover: bool,
}

/// Concurrence between site 0 and site `L` at each time, with the peak
/// refined by golden-section search around the best sample.
pub fn transport_channel(model: &TransportModel, times: &[f64]) -> Result<TransportResult> {
    if times.is_empty() {
        return Err(Error::Usage("empty time grid".into()));
    }
    let c: Result<Vec<f64>> = times.par_iter().map(|&t| model.concurrence(t)).collect();
    let c = c?;
    let best = (0..c.len()).fold(0, |b, k| if c[k] > c[b] { k } else { b });
    let lo = if best > 0 { times[best - 1] } else { times[best] };
    let hi = if best + 1 < times.len() { times[best + 1] } else { times[best] };
    let (peak_time, peak) = golden_max(|t| model.concurrence(t), lo, hi, times[best], c[best])?;
    Ok(TransportResult { times: times.to_vec(), concurrence: c, peak_concurrence: peak, peak_time, crossover: peak < 0.5 })
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, t0: f64, f0: f64) -> Result<(f64, f64)> {
    let (mut best_t, mut best_f) = (t0, f0);
    if hi <= lo {
        return Ok((best_t, best_f));
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    for _ in 0..24 {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b)?;
        }
    }
    for (t, v) in [(a, fa), (b, fb)] {
        if v > best_f {
            best_t = t;
            best_f = v;
        }
    }
    Ok((best_t, best_f))
}

/// Peak concurrence over `[0, window·t_π]` sampled at `samples` points.
pub fn peak_concurrence(model: &TransportModel, window: f64, samples: usize) -> Result<TransportResult> {
    let t_pi = model.transfer_time()?;
    let times: Vec<f64> = (1..=samples).map(|k| window * t_pi * k as f64 / samples as f64).collect();
    transport_channel(model, &times)
}

/// `L_max` for one trap width.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossoverPoint {
    pub sigma0: f64,
    pub trap_frequency: f64,
    /// Peak concurrence per scanned `L`.
    pub peaks: Vec<(usize, f64)>,
    /// Largest scanned `L` whose peak reaches one half; 0 if none does.
    pub l_max: usize,
    /// Length at which the peak crosses one half by linear interpolation.
    pub l_interpolated: f64,
}

/// Settings shared by every point of a crossover scan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanOptions {
    pub dephasing: bool,
    /// Search window in units of the transfer time.
    pub window: f64,
    pub samples: usize,
    /// Skip lengths beyond the first one whose peak falls below one half.
    pub stop_at_crossing: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions { dephasing: true, window: 1.5, samples: 96, stop_at_crossing: false }
    }
}

/// Scans chain lengths for every trap width. `build(L, trap_frequency)`
/// supplies the effective chain.
pub fn crossover_scan(
    trap_frequencies: &[f64],
    lengths: &[usize],
    atom_mass: f64,
    build: impl Fn(usize, f64) -> Result<EffectiveChain> + Sync,
    options: ScanOptions,
) -> Result<Vec<CrossoverPoint>> {
    if trap_frequencies.is_empty() || lengths.is_empty() {
        return Err(Error::Usage("crossover scan needs nonempty grids".into()));
    }
    trap_frequencies
        .par_iter()
        .map(|&nu| {
            let mut peaks = Vec::new();
            for &l in lengths {
                let model = TransportModel::new(build(l, nu)?, options.dephasing)?;
                let peak = peak_concurrence(&model, options.window, options.samples)?.peak_concurrence;
                peaks.push((l, peak));
                if options.stop_at_crossing && peak < 0.5 {
                    break;
                }
            }
            let l_max = peaks.iter().filter(|p| p.1 >= 0.5).map(|p| p.0).max().unwrap_or(0);
            let l_interpolated = interpolate_crossing(&peaks);
            let scales = Scales::new(nu, atom_mass);
            Ok(CrossoverPoint { sigma0: scales.length, trap_frequency: nu, peaks, l_max, l_interpolated })
        })
        .collect()
}

fn interpolate_crossing(peaks: &[(usize, f64)]) -> f64 {
    for w in peaks.windows(2) {
        let ((l0, c0), (l1, c1)) = (w[0], w[1]);
        if c0 >= 0.5 && c1 < 0.5 {
            return l0 as f64 + (c0 - 0.5) / (c0 - c1) * (l1 - l0) as f64;
        }
    }
    match peaks.first() {
        Some(&(_, c)) if c < 0.5 => 0.0,
        _ => peaks.last().map_or(0.0, |p| p.0 as f64),
    }
}

/// Least-squares parabola `y = a + b x + c x²`, returned as `(a, b, c)`.
pub fn quadratic_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Usage("a quadratic fit needs at least three points".into()));
    }
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    for (&xi, &yi) in x.iter().zip(y) {
        let mut p = 1.0;
        for k in 0..5 {
            s[k] += p;
            if k < 3 {
                t[k] += p * yi;
            }
            p *= xi;
        }
    }
    let a = ndarray::array![[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let rhs = ndarray::array![t[0], t[1], t[2]];
    use ndarray_linalg::Solve;
    let sol = a.solve_into(rhs).map_err(|e| Error::Numerical(format!("quadratic fit: {e}")))?;
    Ok((sol[0], sol[1], sol[2]))
}

/// Vertex of a fitted parabola; `None` unless it opens downward.
pub fn fit_maximum(coeffs: (f64, f64, f64)) -> Option<f64> {
    let (_, b, c) = coeffs;
    (c < 0.0).then(|| -b / (2.0 * c))
}

/// Largest interior diagonal force `|w^l_nn|` over chain eigenstates,
/// relative to the largest force on the first chain site. Interior means
/// sites `2..L`; the auxiliary eigenstate is excluded when uncoupled.
pub fn bulk_force_ratio(chain: &EffectiveChain) -> Result<f64> {
    let l = chain.n_chain();
    if l < 3 {
        return Err(Error::Usage("bulk forces need at least three chain sites".into()));
    }
    let es = chain.eigensystem()?;
    let w = crate::coupling::compute_w(&es, &chain.mixing_model()?);
    let states: Vec<usize> = (0..chain.dim()).filter(|&n| es.vectors[[0, n]].abs() < 1.0 - 1e-12).collect();
    let edge = states.iter().fold(0.0f64, |a, &n| a.max(w[[1, n, n]].abs()));
    let bulk = states
        .iter()
        .flat_map(|&n| (2..l).map(move |site| (site, n)))
        .fold(0.0f64, |a, (site, n)| a.max(w[[site, n, n]].abs()));
    if edge == 0.0 {
        return Err(Error::Domain("first chain site feels no force".into()));
    }
    Ok(bulk / edge)
}
