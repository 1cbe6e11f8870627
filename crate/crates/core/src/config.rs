//! TOML configuration files.
//!
//! ```toml
//! [chain]
//! trap_centers = [0.0, 2.8e-6]          # m
//! [trap]
//! trap_frequency = 1.0e5                 # Hz
//! atom_mass = 86.909                     # u
//! [drive]
//! rabi = 6.283185307179586e7             # rad/s, scalar or one per atom
//! detuning = 0.0                         # rad/s, or `detuning_over_v0`
//! [interaction]
//! interaction_coefficient = 5.716e-58    # J·m^α
//! interaction_exponent = 6
//! ```
//!
//! `detuning_over_v0` sets every detuning to a multiple of the first bond's
//! static interaction, and `rabi_over_detuning` sets the Rabi frequency to a
//! multiple of `|Δ|`. An optional `[experiment]` table is passed through
//! untouched for the experiment driver.

use crate::units::{interaction_energy, PhysicalParams, HBAR};
use crate::{Error, Result};
use serde::Deserialize;
use std::path::Path;
use toml::Spanned;

#[derive(Clone, Debug)]
pub struct ConfigFile {
    pub params: PhysicalParams,
    pub experiment: Option<toml::Table>,
    pub source: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    chain: RawChain,
    trap: RawTrap,
    drive: RawDrive,
    interaction: RawInteraction,
    experiment: Option<toml::Table>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChain {
    trap_centers: Spanned<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrap {
    trap_frequency: Spanned<f64>,
    atom_mass: Spanned<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    rabi: Option<Spanned<ScalarOrList>>,
    rabi_over_detuning: Option<Spanned<f64>>,
    detuning: Option<Spanned<ScalarOrList>>,
    detuning_over_v0: Option<Spanned<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInteraction {
    interaction_coefficient: Spanned<f64>,
    interaction_exponent: Spanned<i64>,
}

struct Located<'a> {
    text: &'a str,
    source: &'a str,
}

impl Located<'_> {
    fn err<T>(&self, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> Result<T> {
        let line = self.text[..span.start.min(self.text.len())].matches('\n').count() + 1;
        Err(Error::Config(format!("{}:{}: {}", self.source, line, msg)))
    }

    fn expand(&self, v: &Spanned<ScalarOrList>, n: usize, name: &str) -> Result<Vec<f64>> {
        match v.get_ref() {
            ScalarOrList::Scalar(x) => Ok(vec![*x; n]),
            ScalarOrList::List(xs) if xs.len() == n => Ok(xs.clone()),
            ScalarOrList::List(xs) => {
                self.err(v.span(), format!("{name} has {} entries for {n} atoms", xs.len()))
            }
        }
    }
}

pub fn load(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

pub fn parse(text: &str, source: &str) -> Result<ConfigFile> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))?;
    let loc = Located { text, source };

    let centers = raw.chain.trap_centers.get_ref().clone();
    let n = centers.len();
    if n < 2 {
        return loc.err(raw.chain.trap_centers.span(), "need at least two trap centers");
    }
    if centers.windows(2).any(|w| !(w[1] > w[0])) {
        return loc.err(raw.chain.trap_centers.span(), "trap_centers must be strictly increasing");
    }
    let exponent = *raw.interaction.interaction_exponent.get_ref();
    if exponent != 3 && exponent != 6 {
        return loc.err(
            raw.interaction.interaction_exponent.span(),
            format!("interaction_exponent must be 3 or 6, got {exponent}"),
        );
    }
    let exponent = exponent as u32;
    let c = *raw.interaction.interaction_coefficient.get_ref();
    if !(c > 0.0) {
        return loc.err(raw.interaction.interaction_coefficient.span(), "interaction_coefficient must be positive");
    }
    for v in [&raw.trap.trap_frequency, &raw.trap.atom_mass] {
        if !(*v.get_ref() > 0.0) {
            return loc.err(v.span(), "value must be positive");
        }
    }

    let d = &raw.drive;
    let detuning = match (&d.detuning, &d.detuning_over_v0) {
        (Some(v), None) => loc.expand(v, n, "detuning")?,
        (None, Some(ratio)) => {
            let v0 = interaction_energy(c, exponent, centers[1] - centers[0])? / HBAR;
            vec![ratio.get_ref() * v0; n]
        }
        (Some(v), Some(_)) => return loc.err(v.span(), "give either detuning or detuning_over_v0, not both"),
        (None, None) => return Err(Error::Config(format!("{source}: [drive] needs detuning or detuning_over_v0"))),
    };
    let rabi = match (&d.rabi, &d.rabi_over_detuning) {
        (Some(v), None) => loc.expand(v, n, "rabi")?,
        (None, Some(ratio)) => detuning.iter().map(|x| ratio.get_ref() * x.abs()).collect(),
        (Some(v), Some(_)) => return loc.err(v.span(), "give either rabi or rabi_over_detuning, not both"),
        (None, None) => return Err(Error::Config(format!("{source}: [drive] needs rabi or rabi_over_detuning"))),
    };

    let params = PhysicalParams {
        atom_mass: *raw.trap.atom_mass.get_ref(),
        trap_frequency: *raw.trap.trap_frequency.get_ref(),
        trap_centers: centers,
        rabi,
        detuning,
        interaction_coefficient: c,
        interaction_exponent: exponent,
    };
    params.validate().map_err(|e| Error::Config(format!("{source}: {e}")))?;
    Ok(ConfigFile { params, experiment: raw.experiment, source: source.to_string() })
}
