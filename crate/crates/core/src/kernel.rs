//! Gaussian overlap kernel `Γ_nm(t)`.
//!
//! Each normal mode `s` of eigenstate `n` evolves under
//! `−½∂² + ½ω²s² − Fs` from `exp(−s²/2)` and stays Gaussian:
//! `exp(−½K̄s² + b̄s + α)/√γ`. With
//!
//! ```text
//! c  = cos ωt            s1 = sin(ωt)/ω         s2 = (1 − c)/ω²
//! s3 = (t·c − s1)/ω²     s4 = (t·s1 − 2·s2)/ω²
//! ```
//!
//! the coefficients are `γ = c + i·s1`, `K̄ = (c + iω²s1)/γ`,
//! `b̄ = iF(s1 + i·s2)/γ` and `α = (i/2)F²(s3 + i·s4)/γ`. All five auxiliary
//! functions are entire in `ω²`, so small `|ω²|t²` is handled by their power
//! series and negative `ω²` by the hyperbolic continuation; no node of
//! `sin ωt` is singular in this form.

use crate::coupling::{DisentangledModes, ModeSet};
use crate::linalg::accretive_ldl_quadratic;
use crate::{Error, Result, C64};
use ndarray::{Array1, Array2};
use rayon::prelude::*;
use std::f64::consts::{LN_2, PI};

/// Below this `|ω²|t²` the power series is used.
const SERIES_SWITCH: f64 = 1.0;
/// Smallest `|det K_nm|` accepted before reporting underflow.
const MIN_DET: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Propagator {
    c: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    s4: f64,
}

fn propagator(omega_sq: f64, t: f64) -> Result<Propagator> {
    let u = omega_sq * t * t;
    if u.abs() <= SERIES_SWITCH {
        let x = -u;
        let (mut c, mut s1, mut s2, mut s3, mut s4) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut tc, mut t1, mut t2, mut t3, mut t4) = (1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0);
        for k in 0..40 {
            let kf = k as f64;
            c += tc;
            s1 += t1;
            s2 += t2;
            s3 -= (2.0 * kf + 2.0) * t3;
            s4 -= (2.0 * kf + 2.0) * t4;
            tc *= x / ((2.0 * kf + 1.0) * (2.0 * kf + 2.0));
            t1 *= x / ((2.0 * kf + 2.0) * (2.0 * kf + 3.0));
            t2 *= x / ((2.0 * kf + 3.0) * (2.0 * kf + 4.0));
            t3 *= x / ((2.0 * kf + 4.0) * (2.0 * kf + 5.0));
            t4 *= x / ((2.0 * kf + 5.0) * (2.0 * kf + 6.0));
            if tc.abs() < 1e-18 && t4.abs() < 1e-18 {
                break;
            }
        }
        let t2p = t * t;
        return Ok(Propagator { c, s1: s1 * t, s2: s2 * t2p, s3: s3 * t2p * t, s4: s4 * t2p * t2p });
    }
    let (c, s1) = if omega_sq > 0.0 {
        let w = omega_sq.sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    } else {
        let k = (-omega_sq).sqrt();
        ((k * t).cosh(), (k * t).sinh() / k)
    };
    if !c.is_finite() || !s1.is_finite() {
        return Err(Error::Numerical(format!("inverted mode with ω² = {omega_sq} overflows at t = {t}")));
    }
    let s2 = (1.0 - c) / omega_sq;
    let s3 = (t * c - s1) / omega_sq;
    let s4 = (t * s1 - 2.0 * s2) / omega_sq;
    Ok(Propagator { c, s1, s2, s3, s4 })
}

/// Gaussian parameters of one mode at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeCoefficients {
    pub kbar: C64,
    pub bbar: C64,
    pub alpha: C64,
    pub gamma: C64,
    /// `ln γ` on the branch continuous in `t` from `ln 1 = 0`.
    pub log_gamma: C64,
}

impl ModeCoefficients {
    /// Coefficients for squared frequency `omega_sq` (any sign) and force `force`.
    pub fn evaluate(omega_sq: f64, force: f64, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time must be non-negative, got {t}")));
        }
        let p = propagator(omega_sq, t)?;
        let i = C64::i();
        let gamma = C64::new(p.c, p.s1);
        let inv = gamma.inv();
        let kbar = C64::new(p.c, omega_sq * p.s1) * inv;
        let bbar = i * force * C64::new(p.s1, p.s2) * inv;
        let alpha = 0.5 * i * force * force * C64::new(p.s3, p.s4) * inv;
        let principal = gamma.arg();
        let phase = if omega_sq > 0.0 && omega_sq * t * t > SERIES_SWITCH {
            // γ winds once per period; follow the winding of ωt.
            let theta = omega_sq.sqrt() * t;
            principal + 2.0 * PI * ((theta - principal) / (2.0 * PI)).round()
        } else {
            principal
        };
        let log_gamma = C64::new(gamma.norm().ln(), phase);
        Ok(ModeCoefficients { kbar, bbar, alpha, gamma, log_gamma })
    }

    /// The `ω → 0` limits: `K̄ = 1/(1+it)`, `b̄ = F(2i−t)t/(2(1+it))`,
    /// `α = F²(t−4i)t³/(24(1+it))`, `γ = 1 + it`.
    pub fn free_limit(force: f64, t: f64) -> Self {
        let i = C64::i();
        let gamma = C64::new(1.0, t);
        let inv = gamma.inv();
        ModeCoefficients {
            kbar: inv,
            bbar: force * (2.0 * i - t) * t * 0.5 * inv,
            alpha: force * force * (t - 4.0 * i) * t.powi(3) / 24.0 * inv,
            gamma,
            log_gamma: gamma.ln(),
        }
    }

    /// Trigonometric closed form for real `ω > 0`, valid away from the nodes
    /// of `sin ωt`.
    pub fn trigonometric(omega: f64, force: f64, t: f64) -> Self {
        let i = C64::i();
        let (sn, cs) = (omega * t).sin_cos();
        let cot = cs / sn;
        let gamma = C64::new(cs, sn / omega);
        let lead = C64::new(1.0, sn / omega);
        let kbar = i * omega / (gamma * sn) - i * omega * cot;
        let bbar = i * force / omega * (lead / (gamma * sn) - cot);
        let alpha = 0.5 * i * force * force / omega.powi(3)
            * (omega * t + cot + i / omega - lead * lead / (gamma * sn));
        ModeCoefficients { kbar, bbar, alpha, gamma, log_gamma: gamma.ln() }
    }
}

/// `mode_coefficients` for a complex frequency whose square is real.
pub fn mode_coefficients(omega: C64, force: f64, t: f64) -> Result<ModeCoefficients> {
    let w2 = omega * omega;
    if w2.im.abs() > 1e-12 * w2.norm().max(1.0) {
        return Err(Error::Domain(format!("ω² = {w2} is not real")));
    }
    ModeCoefficients::evaluate(w2.re, force, t)
}

/// `C_n`, `K_n`, `b_n` of one eigenstate at one time.
#[derive(Clone, Debug)]
pub struct StateFactors {
    /// `ln C_n = Σ_l (α_l − ½ ln γ_l)`.
    pub log_c: C64,
    /// `Qᵀ diag(K̄) Q`.
    pub k: Array2<C64>,
    /// `Qᵀ b̄`.
    pub b: Array1<C64>,
}

impl StateFactors {
    pub fn c(&self) -> C64 {
        self.log_c.exp()
    }

    pub fn n_modes(&self) -> usize {
        self.b.len()
    }
}

pub fn assemble_state_factors(modes: &ModeSet, t: f64) -> Result<StateFactors> {
    let d = modes.n_modes();
    let mut kbar = Array1::<C64>::zeros(d);
    let mut bbar = Array1::<C64>::zeros(d);
    let mut log_c = C64::new(0.0, 0.0);
    for l in 0..d {
        let mc = ModeCoefficients::evaluate(modes.omega_sq(l), modes.forces[l], t)?;
        kbar[l] = mc.kbar;
        bbar[l] = mc.bbar;
        log_c += mc.alpha - 0.5 * mc.log_gamma;
    }
    let q = &modes.rotation;
    let mut k = Array2::<C64>::zeros((d, d));
    for a in 0..d {
        for b in 0..=a {
            let mut acc = C64::new(0.0, 0.0);
            for l in 0..d {
                acc += kbar[l] * (q[[l, a]] * q[[l, b]]);
            }
            k[[a, b]] = acc;
            k[[b, a]] = acc;
        }
    }
    let mut b = Array1::<C64>::zeros(d);
    for a in 0..d {
        let mut acc = C64::new(0.0, 0.0);
        for l in 0..d {
            acc += bbar[l] * q[[l, a]];
        }
        b[a] = acc;
    }
    Ok(StateFactors { log_c, k, b })
}

/// Lower triangles and conjugates laid out for the pair loop.
struct Packed {
    d: usize,
    k: Vec<C64>,
    b: Vec<C64>,
    log_c: C64,
}

impl Packed {
    fn new(f: &StateFactors) -> Self {
        let d = f.n_modes();
        Packed { d, k: f.k.iter().cloned().collect(), b: f.b.to_vec(), log_c: f.log_c }
    }
}

struct Scratch {
    k: Vec<C64>,
    b: Vec<C64>,
    pivots: Vec<C64>,
}

impl Scratch {
    fn new(d: usize) -> Self {
        let z = C64::new(0.0, 0.0);
        Scratch { k: vec![z; d * d], b: vec![z; d], pivots: vec![z; d] }
    }
}

fn overlap_packed(a: &Packed, b: &Packed, scratch: &mut Scratch) -> Result<C64> {
    let d = a.d;
    for i in 0..d {
        for j in 0..=i {
            let idx = i * d + j;
            scratch.k[idx] = a.k[idx] + b.k[idx].conj();
        }
        scratch.b[i] = a.b[i] + b.b[i].conj();
    }
    let (half_quad, half_log_det) = accretive_ldl_quadratic(&mut scratch.k, &mut scratch.b, &mut scratch.pivots, d)?;
    if 2.0 * half_log_det.re < MIN_DET.ln() {
        return Err(Error::Numerical(format!(
            "det K_nm underflows (log|det| = {:.1})",
            2.0 * half_log_det.re
        )));
    }
    let log_gamma = 0.5 * d as f64 * LN_2 + a.log_c + b.log_c.conj() + half_quad - half_log_det;
    Ok(log_gamma.exp())
}

/// Motional overlap `Γ_nm = ⟨χ_m|χ_n⟩ = 2^{d/2} C_n C_m* exp(½ bᵀK⁻¹b) / √det K`
/// with `K = K_n + K_m*`, `b = b_n + b_m*` and `d` the number of relative
/// modes. This is the factor multiplying `ρ_nm ∝ χ_n χ_m*`.
pub fn gamma_overlap(a: &StateFactors, b: &StateFactors) -> Result<C64> {
    if a.n_modes() != b.n_modes() {
        return Err(Error::Usage("state factors have different mode counts".into()));
    }
    let mut scratch = Scratch::new(a.n_modes());
    overlap_packed(&Packed::new(a), &Packed::new(b), &mut scratch)
}

/// `Γ(t)` together with the per-state factors it was built from.
#[derive(Clone, Debug)]
pub struct ChannelMatrix {
    pub time: f64,
    pub gamma: Array2<C64>,
    pub factors: Vec<StateFactors>,
}

impl ChannelMatrix {
    /// The identity channel (`Γ ≡ 1`).
    pub fn identity(dim: usize, time: f64) -> Self {
        ChannelMatrix { time, gamma: Array2::from_elem((dim, dim), C64::new(1.0, 0.0)), factors: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }
}

/// Builds `Γ(t)` over all eigenstate pairs. Rows are evaluated in parallel;
/// the result is independent of the thread count.
pub fn build_channel(modes: &DisentangledModes, t: f64) -> Result<ChannelMatrix> {
    let factors: Result<Vec<StateFactors>> =
        modes.modes.par_iter().map(|m| assemble_state_factors(m, t)).collect();
    let factors = factors?;
    let gamma = overlap_matrix(&factors)?;
    Ok(ChannelMatrix { time: t, gamma, factors })
}

/// Hermitian matrix of pairwise overlaps.
pub fn overlap_matrix(factors: &[StateFactors]) -> Result<Array2<C64>> {
    let dim = factors.len();
    let packed: Vec<Packed> = factors.iter().map(Packed::new).collect();
    let d = packed.first().map_or(0, |p| p.d);
    let rows: Result<Vec<Vec<C64>>> = (0..dim)
        .into_par_iter()
        .map_init(
            || Scratch::new(d),
            |scratch, n| {
                let mut row = Vec::with_capacity(dim - n);
                row.push(C64::new(1.0, 0.0));
                for m in n + 1..dim {
                    row.push(overlap_packed(&packed[n], &packed[m], scratch)?);
                }
                Ok(row)
            },
        )
        .collect();
    let rows = rows?;
    let mut gamma = Array2::<C64>::zeros((dim, dim));
    for (n, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            gamma[[n, n + j]] = v;
            gamma[[n + j, n]] = v.conj();
        }
    }
    Ok(gamma)
}
