//! Physical inputs and their conversion to normalized units.
//!
//! The length unit is the trap ground-state width `σ0 = sqrt(ħ / (m·2πν_t))`,
//! the time unit is `1/ω_t` with `ω_t = 2πν_t`, and energies are measured in
//! units of `ħω_t`. In these units `ħ = m = 1` and a trapped atom starts in
//! the Gaussian `exp(−x²/2)`.

use crate::{Error, Result};
use std::f64::consts::PI;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054571817e-34;
/// Atomic mass unit in kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.66053906660e-27;

/// Chain parameters in SI units (angular frequencies in rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Atomic mass in atomic mass units.
    pub atom_mass: f64,
    /// Trap frequency `ν_t` in Hz.
    pub trap_frequency: f64,
    /// Trap centers in metres, strictly increasing.
    pub trap_centers: Vec<f64>,
    /// Rabi frequency per atom in rad/s.
    pub rabi: Vec<f64>,
    /// Detuning per atom in rad/s.
    pub detuning: Vec<f64>,
    /// Interaction coefficient `c_α` in J·m^α.
    pub interaction_coefficient: f64,
    /// Interaction exponent `α`, either 3 or 6.
    pub interaction_exponent: u32,
}

impl PhysicalParams {
    pub fn n_atoms(&self) -> usize {
        self.trap_centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.n_atoms();
        if l < 2 {
            return Err(Error::Config(format!("need at least two trap centers, got {l}")));
        }
        if let Some(i) = self.trap_centers.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "trap_centers must be strictly increasing (entries {i} and {})",
                i + 1
            )));
        }
        if self.trap_centers.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("trap_centers must be finite".into()));
        }
        if !(self.trap_frequency > 0.0 && self.trap_frequency.is_finite()) {
            return Err(Error::Config("trap_frequency must be positive".into()));
        }
        if !(self.atom_mass > 0.0 && self.atom_mass.is_finite()) {
            return Err(Error::Config("atom_mass must be positive".into()));
        }
        if !(self.interaction_coefficient > 0.0 && self.interaction_coefficient.is_finite()) {
            return Err(Error::Config("interaction_coefficient must be positive".into()));
        }
        if !matches!(self.interaction_exponent, 3 | 6) {
            return Err(Error::Config(format!(
                "interaction_exponent must be 3 or 6, got {}",
                self.interaction_exponent
            )));
        }
        for (name, v) in [("rabi", &self.rabi), ("detuning", &self.detuning)] {
            if v.len() != l {
                return Err(Error::Config(format!("{name} has {} entries for {l} atoms", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn scales(&self) -> Scales {
        Scales::new(self.trap_frequency, self.atom_mass)
    }

    /// Nearest-neighbour separations in metres.
    pub fn spacings(&self) -> Vec<f64> {
        self.trap_centers.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Conversion factors between SI and normalized units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scales {
    /// `σ0` in metres.
    pub length: f64,
    /// Seconds per normalized time unit, `1/ω_t`.
    pub time: f64,
    /// Trap angular frequency `ω_t` in rad/s; one normalized energy unit is `ħω_t`.
    pub angular_frequency: f64,
    /// Atomic mass in kg.
    pub mass: f64,
}

impl Scales {
    pub fn new(trap_frequency: f64, atom_mass_u: f64) -> Self {
        let omega = 2.0 * PI * trap_frequency;
        let mass = atom_mass_u * ATOMIC_MASS_UNIT;
        Scales { length: (HBAR / (mass * omega)).sqrt(), time: 1.0 / omega, angular_frequency: omega, mass }
    }

    /// Trap frequency `ν_t` (Hz) whose ground-state width is `sigma0` (m).
    pub fn trap_frequency_for_width(sigma0: f64, atom_mass_u: f64) -> f64 {
        let mass = atom_mass_u * ATOMIC_MASS_UNIT;
        HBAR / (mass * sigma0 * sigma0) / (2.0 * PI)
    }

    pub fn trap_frequency(&self) -> f64 {
        self.angular_frequency / (2.0 * PI)
    }

    pub fn time_to_normalized(&self, seconds: f64) -> f64 {
        seconds / self.time
    }

    pub fn time_to_physical(&self, t: f64) -> f64 {
        t * self.time
    }

    pub fn length_to_normalized(&self, metres: f64) -> f64 {
        metres / self.length
    }

    pub fn length_to_physical(&self, x: f64) -> f64 {
        x * self.length
    }

    /// Angular frequency (rad/s) to normalized energy.
    pub fn frequency_to_normalized(&self, rad_per_s: f64) -> f64 {
        rad_per_s / self.angular_frequency
    }

    pub fn frequency_to_physical(&self, e: f64) -> f64 {
        e * self.angular_frequency
    }

    /// Energy in joules to normalized energy.
    pub fn energy_to_normalized(&self, joules: f64) -> f64 {
        joules / (HBAR * self.angular_frequency)
    }

    /// Force in newtons to normalized force.
    pub fn force_to_normalized(&self, newtons: f64) -> f64 {
        newtons * self.length / (HBAR * self.angular_frequency)
    }

    /// Root-mean-square width (m) of a freely spreading trap ground state
    /// released at `t = 0`: `σ_rms(0)·sqrt(1 + (ħt/(2mσ_rms(0)²))²)`.
    pub fn free_rms_width(&self, seconds: f64) -> f64 {
        let s0 = self.length / 2f64.sqrt();
        let tau = HBAR * seconds / (2.0 * self.mass * s0 * s0);
        s0 * (1.0 + tau * tau).sqrt()
    }
}

/// Amplitude width of a freely spreading `exp(−x²/2)` packet in normalized units.
pub fn free_amplitude_width(t: f64) -> f64 {
    (1.0 + t * t).sqrt()
}

/// A chain in normalized units. Bond `b` joins atoms `b` and `b + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedChain {
    pub n_atoms: usize,
    /// Rest lengths of the bonds.
    pub spacings: Vec<f64>,
    /// Static interaction at the rest length of each bond.
    pub v0: Vec<f64>,
    /// Linearized repulsive force of each bond.
    pub force: Vec<f64>,
    pub rabi: Vec<f64>,
    pub detuning: Vec<f64>,
    pub exponent: u32,
    pub scales: Scales,
}

impl NormalizedChain {
    /// A uniform chain specified directly in normalized units. The force is
    /// derived from the power law, `F = αV/r`.
    pub fn uniform(n_atoms: usize, spacing: f64, v0: f64, rabi: f64, detuning: f64, exponent: u32) -> Self {
        let bonds = n_atoms.saturating_sub(1);
        NormalizedChain {
            n_atoms,
            spacings: vec![spacing; bonds],
            v0: vec![v0; bonds],
            force: vec![exponent as f64 * v0 / spacing; bonds],
            rabi: vec![rabi; n_atoms],
            detuning: vec![detuning; n_atoms],
            exponent,
            scales: Scales { length: 1.0, time: 1.0, angular_frequency: 1.0, mass: 1.0 },
        }
    }

    pub fn n_bonds(&self) -> usize {
        self.n_atoms.saturating_sub(1)
    }
}

/// Linearized force `α c_α r0^{−(α+1)}` of a repulsive power-law potential.
pub fn linearized_force(c_alpha: f64, alpha: u32, r0: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(Error::Domain(format!("bond length must be positive, got {r0}")));
    }
    Ok(alpha as f64 * c_alpha * r0.powi(-(alpha as i32 + 1)))
}

/// Interaction energy `c_α r0^{−α}`.
pub fn interaction_energy(c_alpha: f64, alpha: u32, r0: f64) -> Result<f64> {
    if !(r0 > 0.0) {
        return Err(Error::Domain(format!("bond length must be positive, got {r0}")));
    }
    Ok(c_alpha * r0.powi(-(alpha as i32)))
}

pub fn normalize(p: &PhysicalParams) -> Result<NormalizedChain> {
    p.validate()?;
    let scales = p.scales();
    let alpha = p.interaction_exponent;
    let c = p.interaction_coefficient;
    let mut spacings = Vec::new();
    let mut v0 = Vec::new();
    let mut force = Vec::new();
    for r in p.spacings() {
        let rn = scales.length_to_normalized(r);
        let vn = scales.energy_to_normalized(interaction_energy(c, alpha, r)?);
        spacings.push(rn);
        v0.push(vn);
        // Same power law in normalized units keeps F·r = αV exact.
        force.push(alpha as f64 * vn / rn);
    }
    Ok(NormalizedChain {
        n_atoms: p.n_atoms(),
        spacings,
        v0,
        force,
        rabi: p.rabi.iter().map(|&w| scales.frequency_to_normalized(w)).collect(),
        detuning: p.detuning.iter().map(|&w| scales.frequency_to_normalized(w)).collect(),
        exponent: alpha,
        scales,
    })
}
