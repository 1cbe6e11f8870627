//! One function per subcommand. Each writes its CSV files into the output
//! directory and returns their paths.

use crate::output::{fmt_f64, fmt_opt, Table};
use crate::spec::ExperimentSpec;
use rayon::prelude::*;
use rydchan::config::ConfigFile;
use rydchan::coupling::gram_schmidt;
use rydchan::dynamics::{
    branch_labels, breakdown_time, first_return_time, fidelity_crossing, trace_distance, trace_fidelity, Basis,
    ChannelModel, DensityMatrix,
};
use rydchan::linalg::{hermitian_defect, hermitian_eigvals};
use rydchan::oracle::{evolve_exact, Boundary, OracleSettings};
use rydchan::spin::{basis_index, build_hamiltonian, diagonalize};
use rydchan::transport::{
    crossover_scan, fit_maximum, peak_concurrence, perfect_transfer_rabi, quadratic_fit, EffectiveChain,
    ScanOptions, TransportModel, TransportParams,
};
use rydchan::units::{interaction_energy, normalize, NormalizedChain, PhysicalParams, Scales, HBAR};
use rydchan::{Error, Result};
use std::path::{Path, PathBuf};

/// Longest normalized time searched for the 80% fidelity crossing.
const CROSSING_HORIZON: f64 = 200.0;
const CROSSING_STEP: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub dephasing: bool,
    pub exact: bool,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Numerical(format!("writing output: {e}"))
}

fn write(table: &Table, dir: &Path, name: &str) -> Result<PathBuf> {
    table.write(dir, name).map_err(io_err)
}

fn model_for(chain: &NormalizedChain, dephasing: bool) -> Result<ChannelModel> {
    if dephasing {
        ChannelModel::rydberg(chain)
    } else {
        Ok(ChannelModel::without_dephasing(diagonalize(build_hamiltonian(chain)?)?))
    }
}

fn oracle_settings() -> OracleSettings {
    OracleSettings { boundary: Boundary::Absorbing { max_escape: 0.5, rate: None }, ..OracleSettings::default() }
}

fn static_interaction(p: &PhysicalParams, spacing: f64) -> Result<f64> {
    Ok(interaction_energy(p.interaction_coefficient, p.interaction_exponent, spacing)? / HBAR)
}

fn require_two_atoms(cfg: &ConfigFile) -> Result<()> {
    if cfg.params.n_atoms() != 2 {
        return Err(Error::Config(format!("{}: this experiment needs exactly two trap centers", cfg.source)));
    }
    Ok(())
}

fn two_atom_params(p: &PhysicalParams, spacing: f64, nu: f64, detuning: Option<f64>) -> PhysicalParams {
    let mut q = p.clone();
    q.trap_centers = vec![0.0, spacing];
    q.trap_frequency = nu;
    if let Some(d) = detuning {
        q.detuning = vec![d; 2];
    }
    q
}

fn scale_columns(s: &Scales) -> [String; 2] {
    [fmt_f64(s.length), fmt_f64(s.time)]
}

/// Fidelity and `|rg⟩` population traces for each spacing, trap frequency
/// and (optional) detuning ratio.
pub fn run_two_atom(cfg: &ConfigFile, spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    require_two_atoms(cfg)?;
    let initial = basis_index(&spec.initial_state)?;
    if spec.initial_state.len() != 2 {
        return Err(Error::Config(format!("initial_state {:?} is not a two-atom label", spec.initial_state)));
    }
    let ratios: Vec<Option<f64>> =
        if spec.detuning_over_v0.is_empty() { vec![None] } else { spec.detuning_over_v0.iter().map(|&x| Some(x)).collect() };
    let mut points = Vec::new();
    for &r in &spec.spacings(cfg) {
        for &nu in &spec.trap_frequencies(cfg) {
            for &x in &ratios {
                points.push((r, nu, x));
            }
        }
    }
    let times_us = spec.times_us();
    let rg = basis_index("rg")?;
    points
        .par_iter()
        .map(|&(r, nu, ratio)| {
            let detuning = match ratio {
                Some(x) => Some(x * static_interaction(&cfg.params, r)?),
                None => None,
            };
            let chain = normalize(&two_atom_params(&cfg.params, r, nu, detuning))?;
            let model = model_for(&chain, opts.dephasing)?;
            let t_star = breakdown_time(&model.es, &chain)?.t_star;
            let t_star_us = chain.scales.time_to_physical(t_star) * 1e6;
            let times: Vec<f64> = times_us.iter().map(|t| chain.scales.time_to_normalized(t * 1e-6)).collect();
            let rho0 = DensityMatrix::basis_state(4, initial, Basis::Computational);
            let exact = if opts.exact { Some(evolve_exact(&chain, &rho0, &times, &oracle_settings())?) } else { None };
            let rho0 = rho0.to_eigen(&model.es);
            let mut table = Table::new(&[
                "t_us",
                "fidelity_channel",
                "fidelity_exact",
                "overlap_rg_channel",
                "overlap_rg_exact",
                "T_star_us",
                "sigma0_m",
                "time_unit_s",
            ]);
            for (i, (&t, &t_us)) in times.iter().zip(&times_us).enumerate() {
                let (fga, dephased) = model.evolve(&rho0, t)?;
                let fga = fga.to_computational(&model.es);
                let dephased = dephased.to_computational(&model.es);
                let (f_exact, rg_exact) = match &exact {
                    Some(run) => {
                        let s = &run.states[i];
                        (Some(trace_fidelity(s, &fga)?), Some(s.population(rg)))
                    }
                    None => (None, None),
                };
                let [l, tu] = scale_columns(&chain.scales);
                table.push(vec![
                    fmt_f64(t_us),
                    fmt_f64(trace_fidelity(&dephased, &fga)?),
                    fmt_opt(f_exact),
                    fmt_f64(dephased.population(rg)),
                    fmt_opt(rg_exact),
                    fmt_f64(t_star_us),
                    l,
                    tu,
                ]);
            }
            let mut name = format!("two_atom_r{}um_nu{}hz", (r * 1e12).round() / 1e6, nu);
            if let Some(x) = ratio {
                name.push_str(&format!("_d{x}"));
            }
            name.push_str(".csv");
            write(&table, &opts.out, &name)
        })
        .collect()
}

/// Spin-exchange fidelity after one exchange cycle from `|rg⟩` across the
/// detuning grid.
pub fn run_detuning_sweep(cfg: &ConfigFile, spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    require_two_atoms(cfg)?;
    if spec.detuning_over_v0.is_empty() {
        return Err(Error::Config(format!("{}: [experiment] detuning_over_v0 is required for a sweep", cfg.source)));
    }
    let spacing = spec.spacings(cfg)[0];
    let nu = spec.trap_frequencies(cfg)[0];
    let v0 = static_interaction(&cfg.params, spacing)?;
    let rg = basis_index("rg")?;
    let rows: Result<Vec<Vec<String>>> = spec
        .detuning_over_v0
        .par_iter()
        .map(|&x| {
            let chain = normalize(&two_atom_params(&cfg.params, spacing, nu, Some(x * v0)))?;
            let model = model_for(&chain, opts.dephasing)?;
            let t1 = first_return_time(&model.es, &chain)?;
            let rho0c = DensityMatrix::basis_state(4, rg, Basis::Computational);
            let rho0 = rho0c.to_eigen(&model.es);
            let (fga, dephased) = model.evolve(&rho0, t1)?;
            let mut fidelity_exact = None;
            let mut log_infidelity = None;
            if opts.exact {
                let settings = oracle_settings();
                let run = evolve_exact(&chain, &rho0c, &[t1], &settings)?;
                fidelity_exact = Some(run.states[0].population(rg));
                if let Some(t80) = fidelity_crossing(&model, &rho0, 0.8, CROSSING_STEP, CROSSING_HORIZON)? {
                    let at = evolve_exact(&chain, &rho0c, &[t80], &settings)?;
                    let (_, d) = model.evolve(&rho0, t80)?;
                    let td = trace_distance(&d.to_computational(&model.es), &at.states[0])?;
                    log_infidelity = Some(td.log10());
                }
            }
            let v0n = chain.v0[0];
            let energies: Vec<String> = model.es.energies.iter().map(|e| fmt_f64(e / v0n)).collect();
            let labels: Vec<&str> = branch_labels(&model.es)?.iter().map(|l| l.as_str()).collect();
            let [l, tu] = scale_columns(&chain.scales);
            Ok(vec![
                fmt_f64(x),
                fmt_f64(fga.to_computational(&model.es).population(rg)),
                fmt_f64(dephased.to_computational(&model.es).population(rg)),
                fmt_opt(fidelity_exact),
                energies.join(";"),
                labels.join(";"),
                fmt_opt(log_infidelity),
                fmt_f64(chain.scales.time_to_physical(t1) * 1e6),
                l,
                tu,
            ])
        })
        .collect();
    let mut table = Table::new(&[
        "delta_over_v0",
        "fidelity_fga",
        "fidelity_channel",
        "fidelity_exact",
        "branch_energies",
        "branch_labels",
        "channel_log_infidelity_at_80pct",
        "cycle_time_us",
        "sigma0_m",
        "time_unit_s",
    ]);
    for r in rows? {
        table.push(r);
    }
    Ok(vec![write(&table, &opts.out, "detuning_sweep.csv")?])
}

/// Physical transport chain of length `l` built from the first bond of the
/// configuration, with the strongest bond driven at the configured Rabi
/// frequency and the rest following the perfect-transfer profile.
pub fn transport_chain(p: &PhysicalParams, l: usize, nu: f64) -> Result<EffectiveChain> {
    EffectiveChain::physical(&TransportParams {
        n_chain: l,
        spacing: p.spacings()[0],
        interaction_coefficient: p.interaction_coefficient,
        interaction_exponent: p.interaction_exponent,
        detuning: p.detuning[0],
        rabi: perfect_transfer_rabi(l, p.rabi[0]),
        atom_mass: p.atom_mass,
        trap_frequency: nu,
    })
}

fn require_lengths(cfg: &ConfigFile, spec: &ExperimentSpec) -> Result<()> {
    if spec.lengths.is_empty() {
        return Err(Error::Config(format!("{}: [experiment] lengths is required", cfg.source)));
    }
    Ok(())
}

pub fn run_transport(cfg: &ConfigFile, spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    require_lengths(cfg, spec)?;
    let mut points = Vec::new();
    for &nu in &spec.trap_frequencies(cfg) {
        for &l in &spec.lengths {
            points.push((l, nu));
        }
    }
    let results: Result<Vec<_>> = points
        .par_iter()
        .map(|&(l, nu)| {
            let model = TransportModel::new(transport_chain(&cfg.params, l, nu)?, opts.dephasing)?;
            Ok((l, nu, model.chain.scales, peak_concurrence(&model, spec.transport_window, spec.transport_samples)?))
        })
        .collect();
    let mut summary = Table::new(&[
        "L",
        "nu_t_hz",
        "peak_concurrence",
        "peak_time_us",
        "crossover_flag",
        "sigma0_m",
        "time_unit_s",
    ]);
    let mut series = Table::new(&["L", "nu_t_hz", "t_us", "concurrence", "sigma0_m", "time_unit_s"]);
    for (l, nu, scales, r) in results? {
        let [sl, st] = scale_columns(&scales);
        summary.push(vec![
            l.to_string(),
            fmt_f64(nu),
            fmt_f64(r.peak_concurrence),
            fmt_f64(scales.time_to_physical(r.peak_time) * 1e6),
            r.crossover.to_string(),
            sl.clone(),
            st.clone(),
        ]);
        for (&t, &c) in r.times.iter().zip(&r.concurrence) {
            series.push(vec![
                l.to_string(),
                fmt_f64(nu),
                fmt_f64(scales.time_to_physical(t) * 1e6),
                fmt_f64(c),
                sl.clone(),
                st.clone(),
            ]);
        }
    }
    Ok(vec![write(&summary, &opts.out, "transport.csv")?, write(&series, &opts.out, "transport_series.csv")?])
}

/// `L_max` per trap width plus a parabola in `ln σ0` through the
/// interpolated crossings.
pub fn run_crossover(cfg: &ConfigFile, spec: &ExperimentSpec, opts: &RunOptions) -> Result<Vec<PathBuf>> {
    require_lengths(cfg, spec)?;
    let nus = spec.trap_frequencies(cfg);
    let options = ScanOptions {
        dephasing: opts.dephasing,
        window: spec.transport_window,
        samples: spec.transport_samples,
        stop_at_crossing: true,
    };
    let points = crossover_scan(&nus, &spec.lengths, cfg.params.atom_mass, |l, nu| transport_chain(&cfg.params, l, nu), options)?;
    let mut table = Table::new(&["sigma0_m", "nu_t_hz", "L_max", "L_interpolated", "time_unit_s"]);
    for p in &points {
        let s = Scales::new(p.trap_frequency, cfg.params.atom_mass);
        table.push(vec![fmt_f64(p.sigma0), fmt_f64(p.trap_frequency), p.l_max.to_string(), fmt_f64(p.l_interpolated), fmt_f64(s.time)]);
    }
    let mut files = vec![write(&table, &opts.out, "crossover.csv")?];
    if points.len() >= 3 {
        let x: Vec<f64> = points.iter().map(|p| p.sigma0.ln()).collect();
        let y: Vec<f64> = points.iter().map(|p| p.l_interpolated).collect();
        let coeffs = quadratic_fit(&x, &y)?;
        let vertex = fit_maximum(coeffs).map(f64::exp);
        let mut fit = Table::new(&["quantity", "value"]);
        for (k, v) in [("fit_a", coeffs.0), ("fit_b", coeffs.1), ("fit_c", coeffs.2)] {
            fit.push(vec![k.into(), fmt_f64(v)]);
        }
        fit.push(vec!["sigma0_at_max_m".into(), fmt_opt(vertex)]);
        let nu_at = vertex.map(|s| Scales::trap_frequency_for_width(s, cfg.params.atom_mass));
        fit.push(vec!["nu_t_at_max_hz".into(), fmt_opt(nu_at)]);
        let l_at = vertex.map(|s| {
            let u = s.ln();
            coeffs.0 + coeffs.1 * u + coeffs.2 * u * u
        });
        fit.push(vec!["L_max_at_max".into(), fmt_opt(l_at)]);
        files.push(write(&fit, &opts.out, "crossover_fit.csv")?);
    }
    Ok(files)
}

/// One line of the invariant report.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

fn line(name: &str, value: f64, limit: f64) -> CheckLine {
    CheckLine { name: name.into(), value, limit, passed: value <= limit }
}

/// Channel, Gram–Schmidt and (for two atoms) oracle invariants on the
/// configured chain over the experiment time grid.
pub fn run_check(cfg: &ConfigFile, spec: &ExperimentSpec, opts: &RunOptions) -> Result<(Vec<CheckLine>, PathBuf)> {
    let chain = normalize(&cfg.params)?;
    let l = chain.n_atoms;
    let model = model_for(&chain, opts.dephasing)?;
    let initial = if spec.initial_state.len() == l { basis_index(&spec.initial_state)? } else { 0 };
    let rho0c = DensityMatrix::basis_state(model.dim(), initial, Basis::Computational);
    let rho0 = rho0c.to_eigen(&model.es);
    let times: Vec<f64> = spec.times_us().iter().map(|t| chain.scales.time_to_normalized(t * 1e-6)).collect();

    let mut diag = 0.0f64;
    let mut herm = 0.0f64;
    let mut gamma_neg = 0.0f64;
    let mut trace = 0.0f64;
    let mut rho_neg = 0.0f64;
    for &t in &times {
        let g = model.channel(t)?.gamma;
        diag = g.diag().iter().fold(diag, |a, z| a.max((*z - 1.0).norm()));
        herm = herm.max(hermitian_defect(&g.view()));
        gamma_neg = gamma_neg.max(-hermitian_eigvals(&g.view())?[0]);
        let (_, dephased) = model.evolve(&rho0, t)?;
        trace = trace.max((dephased.trace() - 1.0).norm());
        rho_neg = rho_neg.max(-dephased.min_eigenvalue()?);
    }
    let gs = gram_schmidt(l)?;
    let g = gs.matrix();
    let orth = (g.dot(&g.t()) - ndarray::Array2::<f64>::eye(l - 1)).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let com = g.sum_axis(ndarray::Axis(1)).iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut lines = vec![
        line("gamma_diagonal", diag, 1e-8),
        line("gamma_hermitian", herm, 1e-12),
        line("gamma_negative_eigenvalue", gamma_neg, 1e-8),
        line("state_trace", trace, 1e-10),
        line("state_negative_eigenvalue", rho_neg, 1e-8),
        line("gram_schmidt_orthonormal", orth, 1e-12),
        line("gram_schmidt_centre_of_mass", com, 1e-12),
    ];
    if l == 2 {
        let t_star = breakdown_time(&model.es, &chain)?.t_star;
        let horizon = times.last().copied().unwrap_or(0.0).min(t_star);
        if horizon > 0.0 {
            let settings = OracleSettings { convergence_tolerance: Some(1e-6), ..oracle_settings() };
            let change = match evolve_exact(&chain, &rho0c, &[horizon], &settings) {
                Ok(run) => run.refinement_change.unwrap_or(f64::NAN),
                Err(Error::Step { change, .. }) => change,
                Err(e) => return Err(e),
            };
            lines.push(line("oracle_step_convergence", change, 1e-6));
        }
    }
    let mut table = Table::new(&["check", "value", "limit", "passed"]);
    for c in &lines {
        table.push(vec![c.name.clone(), fmt_f64(c.value), fmt_f64(c.limit), c.passed.to_string()]);
    }
    let path = write(&table, &opts.out, "check.csv")?;
    Ok((lines, path))
}
