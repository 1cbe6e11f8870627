//! The `[experiment]` table of a configuration file.

use rydchan::config::ConfigFile;
use rydchan::{Error, Result};
use serde::Deserialize;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// End of the output time grid in microseconds.
    #[serde(default = "default_t_max")]
    pub t_max_us: f64,
    /// Points of the time grid, which always starts at zero.
    #[serde(default = "default_points")]
    pub n_points: usize,
    /// Two-atom spacings; defaults to the configured first bond.
    #[serde(default)]
    pub spacings_um: Vec<f64>,
    /// Trap frequencies; defaults to the configured one.
    #[serde(default)]
    pub trap_frequencies_hz: Vec<f64>,
    #[serde(default)]
    pub detuning_over_v0: Vec<f64>,
    /// Chain lengths for transport and crossover scans.
    #[serde(default)]
    pub lengths: Vec<usize>,
    /// Two-atom initial spin state, e.g. `"gg"` or `"rg"`.
    #[serde(default = "default_initial")]
    pub initial_state: String,
    /// Transport search window in units of the transfer time.
    #[serde(default = "default_window")]
    pub transport_window: f64,
    #[serde(default = "default_samples")]
    pub transport_samples: usize,
}

fn default_t_max() -> f64 {
    1.0
}

fn default_points() -> usize {
    41
}

fn default_initial() -> String {
    "gg".into()
}

fn default_window() -> f64 {
    1.5
}

fn default_samples() -> usize {
    96
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            t_max_us: default_t_max(),
            n_points: default_points(),
            spacings_um: Vec::new(),
            trap_frequencies_hz: Vec::new(),
            detuning_over_v0: Vec::new(),
            lengths: Vec::new(),
            initial_state: default_initial(),
            transport_window: default_window(),
            transport_samples: default_samples(),
        }
    }
}

impl ExperimentSpec {
    pub fn from_config(cfg: &ConfigFile) -> Result<Self> {
        let spec = match &cfg.experiment {
            Some(table) => table
                .clone()
                .try_into::<ExperimentSpec>()
                .map_err(|e| Error::Config(format!("{}: [experiment]: {e}", cfg.source)))?,
            None => ExperimentSpec::default(),
        };
        spec.validate().map_err(|e| Error::Config(format!("{}: [experiment]: {e}", cfg.source)))?;
        Ok(spec)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.n_points == 0 {
            return Err("n_points must be at least 1".into());
        }
        if !(self.t_max_us >= 0.0 && self.t_max_us.is_finite()) {
            return Err("t_max_us must be finite and non-negative".into());
        }
        if self.n_points > 1 && self.t_max_us == 0.0 {
            return Err("a time grid with several points needs t_max_us > 0".into());
        }
        if self.spacings_um.iter().chain(&self.trap_frequencies_hz).any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err("spacings and trap frequencies must be positive".into());
        }
        if self.detuning_over_v0.iter().any(|x| !x.is_finite()) {
            return Err("detuning_over_v0 must be finite".into());
        }
        if let Some(x) = self.detuning_over_v0.iter().find(|x| **x == 0.0 || **x == 1.0) {
            return Err(format!("detuning_over_v0 = {x} is a pole of the exchange rate"));
        }
        if self.lengths.iter().any(|&l| l < 2) {
            return Err("chain lengths must be at least 2".into());
        }
        if !(self.transport_window > 0.0) || self.transport_samples < 2 {
            return Err("transport_window must be positive and transport_samples at least 2".into());
        }
        Ok(())
    }

    /// Output times in microseconds: `n_points` values from 0 to `t_max_us`.
    pub fn times_us(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![0.0];
        }
        let last = (self.n_points - 1) as f64;
        (0..self.n_points).map(|k| self.t_max_us * k as f64 / last).collect()
    }

    pub fn trap_frequencies(&self, cfg: &ConfigFile) -> Vec<f64> {
        if self.trap_frequencies_hz.is_empty() {
            vec![cfg.params.trap_frequency]
        } else {
            self.trap_frequencies_hz.clone()
        }
    }

    /// Spacings in metres.
    pub fn spacings(&self, cfg: &ConfigFile) -> Vec<f64> {
        if self.spacings_um.is_empty() {
            vec![cfg.params.spacings()[0]]
        } else {
            self.spacings_um.iter().map(|s| s * 1e-6).collect()
        }
    }
}
