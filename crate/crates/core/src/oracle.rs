//! Exact two-atom benchmark on a grid of the relative coordinate.
//!
//! The centre of mass decouples, leaving `y = x₂ − x₁` with reduced mass ½:
//! `H = −∂²_y + H_spin − F·y·|rr⟩⟨rr|`. The state is four partial
//! wavefunctions, one per two-atom basis state, propagated with a Strang
//! split-operator scheme: exact pointwise 4×4 exponentials for the spin part
//! and spectral kinetic steps.

use crate::dynamics::{Basis, DensityMatrix};
use crate::linalg::{hermitian_eigen, symmetric_eigen};
use crate::units::NormalizedChain;
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Uniform periodic grid `y_j = −X + j·dx`, `dx = 2X/N`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeGrid {
    pub points: usize,
    pub extent: f64,
}

impl RelativeGrid {
    pub fn new(points: usize, extent: f64) -> Result<Self> {
        if !points.is_power_of_two() || points < 16 {
            return Err(Error::Usage(format!("grid size {points} must be a power of two ≥ 16")));
        }
        if !(extent > 0.0) {
            return Err(Error::Usage("grid extent must be positive".into()));
        }
        Ok(RelativeGrid { points, extent })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.extent / self.points as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        -self.extent + j as f64 * self.dx()
    }

    /// Angular wavenumber of FFT bin `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let n = self.points as i64;
        let k = k as i64;
        let signed = if k < n / 2 { k } else { k - n };
        2.0 * PI * signed as f64 / (2.0 * self.extent)
    }

    pub fn max_wavenumber(&self) -> f64 {
        PI / self.dx()
    }
}

impl Default for RelativeGrid {
    fn default() -> Self {
        RelativeGrid { points: 1024, extent: 40.0 }
    }
}

/// Interaction along the relative coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Potential {
    /// `V − F·y`, the model the channel approximates.
    Linearized,
    /// `V·(r/(r + y))^α`, for studying the linearization error.
    PowerLaw,
}

/// What to do with density that reaches the edges of the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Boundary {
    /// Fail with a grid error once the density in the outer sixteenth of the
    /// grid exceeds the threshold.
    Strict { threshold: f64 },
    /// Damp density in the outer eighth of the grid and in the top fifth of
    /// the momentum range at `rate·depth²` (depth runs 0 to 1 across the band).
    /// The removed part is kept as an incoherent spin density matrix so the
    /// reduced state stays trace one; fail once the removed weight exceeds
    /// `max_escape`. A rate of `None` uses the kinetic cutoff `k_max²`.
    Absorbing { max_escape: f64, rate: Option<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSettings {
    pub grid: RelativeGrid,
    pub potential: Potential,
    pub boundary: Boundary,
    /// Largest phase any term may advance per step.
    pub phase_per_step: f64,
    /// Overrides the step derived from `phase_per_step`.
    pub max_step: Option<f64>,
    /// Repeat the run at half the step and fail if any reduced-density
    /// element moves by more than this.
    pub convergence_tolerance: Option<f64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        OracleSettings {
            grid: RelativeGrid::default(),
            potential: Potential::Linearized,
            boundary: Boundary::Strict { threshold: 1e-10 },
            phase_per_step: 0.05,
            max_step: None,
            convergence_tolerance: None,
        }
    }
}

/// Four partial wavefunctions on the grid.
#[derive(Clone, Debug)]
pub struct SpinMotionState {
    pub grid: RelativeGrid,
    pub components: [Vec<C64>; 4],
    /// Density removed by an absorbing boundary, as a spin density matrix.
    pub escaped: Array2<C64>,
}

impl SpinMotionState {
    /// `φ ⊗ (2π)^{−1/4} exp(−y²/4)`, renormalized on the grid.
    pub fn gaussian(grid: RelativeGrid, spin: &Array1<C64>) -> Self {
        let dx = grid.dx();
        let profile: Vec<f64> = (0..grid.points).map(|j| (-grid.position(j).powi(2) / 4.0).exp()).collect();
        let norm = (profile.iter().map(|p| p * p).sum::<f64>() * dx).sqrt();
        let spin_norm = spin.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let components = std::array::from_fn(|a| profile.iter().map(|p| spin[a] * (p / (norm * spin_norm))).collect());
        SpinMotionState { grid, components, escaped: Array2::zeros((4, 4)) }
    }

    pub fn branch_norm(&self, a: usize) -> f64 {
        self.components[a].iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// Norm on the grid plus any escaped weight.
    pub fn norm(&self) -> f64 {
        (0..4).map(|a| self.branch_norm(a)).sum::<f64>() + self.escaped.diag().iter().map(|c| c.re).sum::<f64>()
    }

    /// Spin density matrix after tracing out the motion.
    pub fn reduced(&self) -> Array2<C64> {
        let dx = self.grid.dx();
        let mut rho = self.escaped.clone();
        for a in 0..4 {
            for b in 0..=a {
                let s: C64 = self.components[a].iter().zip(&self.components[b]).map(|(x, y)| x * y.conj()).sum();
                rho[[a, b]] += s * dx;
                if a != b {
                    rho[[b, a]] += s.conj() * dx;
                }
            }
        }
        rho
    }

    /// Probability in the outer sixteenth of the grid on either side.
    pub fn boundary_density(&self) -> f64 {
        let n = self.grid.points;
        let band = n / 16;
        let dx = self.grid.dx();
        self.components
            .iter()
            .map(|c| c[..band].iter().chain(&c[n - band..]).map(|x| x.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * dx
    }
}

/// Branch-normalized mean separation `∫ y |ψ_a|² / ∫ |ψ_a|²`.
pub fn mean_separation(state: &SpinMotionState, branch: usize) -> Result<f64> {
    let norm = state.branch_norm(branch);
    if norm < 1e-12 {
        return Err(Error::UndefinedMoment(norm));
    }
    let dx = state.grid.dx();
    let first: f64 =
        state.components[branch].iter().enumerate().map(|(j, c)| state.grid.position(j) * c.norm_sqr()).sum::<f64>() * dx;
    Ok(first / norm)
}

/// Branch-normalized second moment `∫ y² |ψ_a|² / ∫ |ψ_a|²`.
pub fn second_moment(state: &SpinMotionState, branch: usize) -> Result<f64> {
    let norm = state.branch_norm(branch);
    if norm < 1e-12 {
        return Err(Error::UndefinedMoment(norm));
    }
    let dx = state.grid.dx();
    let s: f64 =
        state.components[branch].iter().enumerate().map(|(j, c)| state.grid.position(j).powi(2) * c.norm_sqr()).sum::<f64>() * dx;
    Ok(s / norm)
}

/// Split-operator propagator for one chain and grid.
pub struct ExactPropagator {
    settings: OracleSettings,
    /// Eigenvalues and eigenvectors of the local spin Hamiltonian per point.
    local: Vec<([f64; 4], [[f64; 4]; 4])>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    step: f64,
    absorption_rate: f64,
    position_depth: Vec<f64>,
    momentum_depth: Vec<f64>,
}

fn band_depth(x: f64) -> f64 {
    x.clamp(0.0, 1.0).powi(2)
}

impl ExactPropagator {
    pub fn new(chain: &NormalizedChain, settings: &OracleSettings) -> Result<Self> {
        if chain.n_atoms != 2 {
            return Err(Error::Usage("the exact oracle handles two atoms".into()));
        }
        let grid = settings.grid;
        let (v0, f, r0, alpha) = (chain.v0[0], chain.force[0], chain.spacings[0], chain.exponent as i32);
        let (om1, om2) = (0.5 * chain.rabi[0], 0.5 * chain.rabi[1]);
        let (d1, d2) = (chain.detuning[0], chain.detuning[1]);
        let mut local = Vec::with_capacity(grid.points);
        for j in 0..grid.points {
            let y = grid.position(j);
            let interaction = match settings.potential {
                Potential::Linearized => v0 - f * y,
                Potential::PowerLaw => {
                    let r = (r0 + y).max(0.1 * r0);
                    v0 * (r0 / r).powi(alpha)
                }
            };
            let h = ndarray::array![
                [0.0, om2, om1, 0.0],
                [om2, -d2, 0.0, om1],
                [om1, 0.0, -d1, om2],
                [0.0, om1, om2, -d1 - d2 + interaction]
            ];
            let (w, v) = symmetric_eigen(h)?;
            let mut vals = [0.0; 4];
            let mut vecs = [[0.0; 4]; 4];
            for a in 0..4 {
                vals[a] = w[a];
                for b in 0..4 {
                    vecs[a][b] = v[[a, b]];
                }
            }
            local.push((vals, vecs));
        }
        let kmax = grid.max_wavenumber();
        let fastest = v0.abs().max(om1.abs() * 2.0).max(om2.abs() * 2.0).max(d1.abs()).max(d2.abs()).max(kmax * kmax);
        let step = settings.max_step.unwrap_or(settings.phase_per_step / fastest);
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(grid.points);
        let ifft = planner.plan_fft_inverse(grid.points);
        let band = grid.extent / 8.0;
        let position_depth =
            (0..grid.points).map(|j| band_depth((grid.position(j).abs() - (grid.extent - band)) / band)).collect();
        let kband = 0.2 * kmax;
        let momentum_depth =
            (0..grid.points).map(|k| band_depth((grid.wavenumber(k).abs() - (kmax - kband)) / kband)).collect();
        let absorption_rate = match settings.boundary {
            Boundary::Absorbing { rate, .. } => rate.unwrap_or(kmax * kmax),
            Boundary::Strict { .. } => 0.0,
        };
        Ok(ExactPropagator {
            settings: settings.clone(),
            local,
            fft,
            ifft,
            step,
            absorption_rate,
            position_depth,
            momentum_depth,
        })
    }

    /// Largest time step used between outputs.
    pub fn step(&self) -> f64 {
        self.step
    }

    fn potential_factors(&self, dt: f64) -> Vec<[[C64; 4]; 4]> {
        self.local
            .iter()
            .map(|(vals, vecs)| {
                let phases: [C64; 4] = std::array::from_fn(|k| C64::from_polar(1.0, -vals[k] * dt));
                let mut u = [[C64::new(0.0, 0.0); 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        let mut acc = C64::new(0.0, 0.0);
                        for k in 0..4 {
                            acc += phases[k] * (vecs[a][k] * vecs[b][k]);
                        }
                        u[a][b] = acc;
                    }
                }
                u
            })
            .collect()
    }

    fn apply_potential(state: &mut SpinMotionState, u: &[[[C64; 4]; 4]]) {
        let [c0, c1, c2, c3] = &mut state.components;
        for j in 0..u.len() {
            let v = [c0[j], c1[j], c2[j], c3[j]];
            let m = &u[j];
            let out: [C64; 4] = std::array::from_fn(|a| m[a][0] * v[0] + m[a][1] * v[1] + m[a][2] * v[2] + m[a][3] * v[3]);
            c0[j] = out[0];
            c1[j] = out[1];
            c2[j] = out[2];
            c3[j] = out[3];
        }
    }

    fn absorbing(&self) -> bool {
        matches!(self.settings.boundary, Boundary::Absorbing { .. })
    }

    /// Adds `Σ (1 − m²) ψψ†` to the escaped density and scales `ψ` by `m`.
    fn absorb(escaped: &mut Array2<C64>, comps: &mut [Vec<C64>; 4], mask: &[f64], weight: f64) {
        let mut removed = [[C64::new(0.0, 0.0); 4]; 4];
        for (j, &m) in mask.iter().enumerate() {
            if m >= 1.0 {
                continue;
            }
            let loss = 1.0 - m * m;
            for a in 0..4 {
                for b in 0..4 {
                    removed[a][b] += loss * comps[a][j] * comps[b][j].conj();
                }
            }
            for c in comps.iter_mut() {
                c[j] *= m;
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                escaped[[a, b]] += removed[a][b] * weight;
            }
        }
    }

    fn kinetic(&self, state: &mut SpinMotionState, phases: &[C64], masks: &(Vec<f64>, Vec<f64>)) {
        let n = state.grid.points;
        let absorbing = self.absorbing();
        for c in state.components.iter_mut() {
            self.fft.process(c);
        }
        if absorbing {
            // Parseval: Σ_j |ψ_j|² dx = Σ_k |ψ̃_k|² dx / N.
            let weight = state.grid.dx() / n as f64;
            Self::absorb(&mut state.escaped, &mut state.components, &masks.1, weight);
        }
        for c in state.components.iter_mut() {
            for (x, p) in c.iter_mut().zip(phases) {
                *x *= p;
            }
            self.ifft.process(c);
        }
        if absorbing {
            let dx = state.grid.dx();
            Self::absorb(&mut state.escaped, &mut state.components, &masks.0, dx);
        }
    }

    /// Advances `state` by `duration` in equal steps no longer than [`Self::step`].
    pub fn advance(&self, state: &mut SpinMotionState, duration: f64) {
        if duration <= 0.0 {
            return;
        }
        let steps = (duration / self.step).ceil().max(1.0) as usize;
        let dt = duration / steps as f64;
        let grid = state.grid;
        let inv_n = 1.0 / grid.points as f64;
        let phases: Vec<C64> =
            (0..grid.points).map(|k| C64::from_polar(inv_n, -grid.wavenumber(k).powi(2) * dt)).collect();
        let half = self.potential_factors(0.5 * dt);
        let full = self.potential_factors(dt);
        let mask = |depth: &[f64]| depth.iter().map(|d| (-self.absorption_rate * d * dt).exp()).collect::<Vec<f64>>();
        let masks = (mask(&self.position_depth), mask(&self.momentum_depth));
        Self::apply_potential(state, &half);
        for s in 0..steps {
            self.kinetic(state, &phases, &masks);
            Self::apply_potential(state, if s + 1 == steps { &half } else { &full });
        }
    }

    /// `⟨H⟩` on the grid (kinetic plus spin and interaction).
    pub fn energy(&self, state: &SpinMotionState) -> f64 {
        let grid = state.grid;
        let dx = grid.dx();
        let n = grid.points;
        let mut kinetic = 0.0;
        for c in &state.components {
            let mut buf = c.clone();
            self.fft.process(&mut buf);
            kinetic += buf.iter().enumerate().map(|(k, x)| grid.wavenumber(k).powi(2) * x.norm_sqr()).sum::<f64>();
        }
        kinetic *= dx / n as f64;
        let mut potential = 0.0;
        for (j, (vals, vecs)) in self.local.iter().enumerate() {
            for k in 0..4 {
                let mut proj = C64::new(0.0, 0.0);
                for a in 0..4 {
                    proj += vecs[a][k] * state.components[a][j];
                }
                potential += vals[k] * proj.norm_sqr();
            }
        }
        kinetic + potential * dx
    }

    fn check_boundary(&self, state: &SpinMotionState) -> Result<f64> {
        match self.settings.boundary {
            Boundary::Strict { threshold } => {
                let density = state.boundary_density();
                if density > threshold {
                    return Err(Error::Grid { density, threshold, suggested_extent: 2.0 * state.grid.extent });
                }
                Ok(density)
            }
            Boundary::Absorbing { max_escape, .. } => {
                let escaped: f64 = state.escaped.diag().iter().map(|c| c.re).sum();
                if escaped > max_escape {
                    return Err(Error::Grid { density: escaped, threshold: max_escape, suggested_extent: 2.0 * state.grid.extent });
                }
                Ok(escaped)
            }
        }
    }

    /// Evolves a pure spin state times the initial Gaussian, returning the
    /// grid state at each output time.
    pub fn trajectory(&self, spin: &Array1<C64>, times: &[f64]) -> Result<Vec<SpinMotionState>> {
        check_times(times)?;
        let mut state = SpinMotionState::gaussian(self.settings.grid, spin);
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            self.advance(&mut state, t - now);
            now = t;
            self.check_boundary(&state)?;
            out.push(state.clone());
        }
        Ok(out)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| t < 0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Usage("output times must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

/// Reduced states from an exact run, with diagnostics.
#[derive(Clone, Debug)]
pub struct ExactRun {
    pub times: Vec<f64>,
    /// Computational-basis spin density matrices.
    pub states: Vec<DensityMatrix>,
    pub step: f64,
    /// Largest deviation of the total norm from one.
    pub max_norm_drift: f64,
    /// Largest boundary density (strict) or escaped weight (absorbing).
    pub max_boundary: f64,
    /// Largest element change against a half-step rerun, when requested.
    pub refinement_change: Option<f64>,
}

fn run(prop: &ExactPropagator, rho0: &DensityMatrix, times: &[f64]) -> Result<ExactRun> {
    let (weights, vectors) = hermitian_eigen(&rho0.matrix.view())?;
    let branches: Vec<(f64, Array1<C64>)> =
        (0..4).filter(|&k| weights[k] > 1e-14).map(|k| (weights[k], vectors.column(k).to_owned())).collect();
    let runs: Result<Vec<(f64, Vec<SpinMotionState>)>> =
        branches.par_iter().map(|(p, spin)| Ok((*p, prop.trajectory(spin, times)?))).collect();
    let runs = runs?;
    let mut states = Vec::with_capacity(times.len());
    let mut max_norm_drift = 0.0f64;
    let mut max_boundary = 0.0f64;
    for i in 0..times.len() {
        let mut rho = Array2::<C64>::zeros((4, 4));
        for (p, traj) in &runs {
            let s = &traj[i];
            rho = rho + s.reduced() * *p;
            max_norm_drift = max_norm_drift.max((s.norm() - 1.0).abs());
            max_boundary = max_boundary.max(match prop.settings.boundary {
                Boundary::Strict { .. } => s.boundary_density(),
                Boundary::Absorbing { .. } => s.escaped.diag().iter().map(|c| c.re).sum(),
            });
        }
        states.push(DensityMatrix::new(rho, Basis::Computational));
    }
    Ok(ExactRun { times: times.to_vec(), states, step: prop.step, max_norm_drift, max_boundary, refinement_change: None })
}

/// Exact reduced spin states of a two-atom chain at the given times.
pub fn evolve_exact(chain: &NormalizedChain, rho0: &DensityMatrix, times: &[f64], settings: &OracleSettings) -> Result<ExactRun> {
    if rho0.basis != Basis::Computational || rho0.dim() != 4 {
        return Err(Error::Usage("initial state must be a two-atom computational-basis density matrix".into()));
    }
    check_times(times)?;
    let prop = ExactPropagator::new(chain, settings)?;
    let mut result = run(&prop, rho0, times)?;
    if let Some(tol) = settings.convergence_tolerance {
        let mut fine = settings.clone();
        fine.max_step = Some(0.5 * prop.step);
        let refined = run(&ExactPropagator::new(chain, &fine)?, rho0, times)?;
        let change = result
            .states
            .iter()
            .zip(&refined.states)
            .flat_map(|(a, b)| a.matrix.iter().zip(b.matrix.iter()).map(|(x, y)| (x - y).norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max);
        if change > tol {
            return Err(Error::Step { change, tolerance: tol });
        }
        result.refinement_change = Some(change);
    }
    Ok(result)
}
