//! Method execution and output file generation.
//!
//! A scenario names up to three routes to the same observables: the moment
//! equations (deterministic, exact where applicable), the Monte Carlo
//! ensemble (general, carries standard errors), and the truncated number
//! basis reference (exact quantum evolution, small systems only). The runner
//! executes every requested route that applies, skips the rest with a
//! recorded warning, and writes one series file per route plus a manifest
//! sufficient to reproduce the run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use noisychain::analytics;
use noisychain::fockoracle::{self, FockBasis, LindbladOptions};
use noisychain::model::TimeGrid;
use noisychain::moments::{self, g2_series, Label};
use noisychain::montecarlo::{self, EstimateOptions};
use thiserror::Error;

use crate::manifest::{Manifest, ManifestError, OutputFile};
use crate::scenario::{MethodChoice, Scenario, ScenarioError};
use crate::table::{series_header, Table, TableError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl From<ScenarioError> for RunError {
    fn from(e: ScenarioError) -> RunError {
        match e {
            ScenarioError::Io(inner) => RunError::Io(inner.to_string()),
            other => RunError::Validation(other.to_string()),
        }
    }
}

impl From<TableError> for RunError {
    fn from(e: TableError) -> RunError {
        match e {
            TableError::Io { .. } => RunError::Io(e.to_string()),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

impl From<ManifestError> for RunError {
    fn from(e: ManifestError) -> RunError {
        match e {
            ManifestError::Io { .. } => RunError::Io(e.to_string()),
            other => RunError::Validation(other.to_string()),
        }
    }
}

/// Total occupation cutoff for the number-basis route. Keeps the truncation
/// tail far below the comparison tolerances for amplitudes up to one quantum
/// per mode while the basis stays small enough to integrate.
const FOCK_CUTOFF: u32 = 12;
/// Largest amplitude the number-basis route accepts per mode.
const FOCK_MAX_AMP: f64 = 1.0 + 1e-12;
/// Most modes the number-basis route accepts (the basis dimension grows
/// binomially with the mode count).
const FOCK_MAX_MODES: usize = 3;

#[derive(Debug)]
pub struct MethodOutput {
    pub method: &'static str,
    pub table: Table,
}

#[derive(Debug)]
pub struct RunResult {
    pub outputs: Vec<MethodOutput>,
    pub warnings: Vec<String>,
}

fn wants(choice: MethodChoice, m: MethodChoice) -> bool {
    choice == m || choice == MethodChoice::All
}

/// Runs every applicable requested method, in a fixed order.
pub fn run_methods(scn: &Scenario, quiet: bool) -> Result<RunResult, RunError> {
    scn.validate()?;
    let grid = scn.grid()?;
    let noise = scn.noise()?;
    scn.initial()?; // surface initial-state problems before any heavy work
    let chain = noise
        .effective_chain(scn.dt())
        .map_err(|e| RunError::Validation(e.to_string()))?;

    let mut outputs = Vec::new();
    let mut warnings = Vec::new();

    if wants(scn.method, MethodChoice::Moments) {
        match moments_applicability(&chain) {
            Ok(()) => {
                let table = run_moments(scn, &chain, &grid, &mut warnings)?;
                outputs.push(MethodOutput {
                    method: "moments",
                    table,
                });
            }
            Err(reason) => {
                if scn.method == MethodChoice::Moments {
                    return Err(RunError::Validation(reason));
                }
                warnings.push(format!("moments: skipped: {reason}"));
            }
        }
    }

    if wants(scn.method, MethodChoice::Montecarlo) {
        let table = run_montecarlo(scn, &noise, &grid, quiet, &mut warnings)?;
        outputs.push(MethodOutput {
            method: "montecarlo",
            table,
        });
    }

    if wants(scn.method, MethodChoice::Fock) {
        match fock_applicability(scn) {
            Ok(()) => {
                let table = run_fock(scn, &chain, &grid, &mut warnings)?;
                outputs.push(MethodOutput {
                    method: "fock",
                    table,
                });
            }
            Err(reason) => {
                if scn.method == MethodChoice::Fock {
                    return Err(RunError::Validation(reason));
                }
                warnings.push(format!("fock: skipped: {reason}"));
            }
        }
    }

    if outputs.is_empty() {
        return Err(RunError::Validation(
            "no requested method applies to this scenario".into(),
        ));
    }
    Ok(RunResult { outputs, warnings })
}

fn moments_applicability(chain: &noisychain::model::ChainSpec) -> Result<(), String> {
    if chain.n_modes() == 2 || chain.is_circular_zero_mean() {
        Ok(())
    } else if chain.mean_couplings().iter().all(|v| v.norm() == 0.0) {
        Err(
            "pair correlations close only for circular noise on chains longer than two modes \
             (set ellipticity = 1 or use montecarlo)"
                .into(),
        )
    } else {
        Err(
            "moment equations close only for two modes or zero-mean circular noise \
             (use montecarlo)"
                .into(),
        )
    }
}

fn fock_applicability(scn: &Scenario) -> Result<(), String> {
    if scn.n_modes > FOCK_MAX_MODES {
        return Err(format!(
            "number basis limited to {FOCK_MAX_MODES} modes, scenario has {}",
            scn.n_modes
        ));
    }
    let amax = scn
        .alpha
        .iter()
        .map(|a| (a[0] * a[0] + a[1] * a[1]).sqrt())
        .fold(0.0f64, f64::max);
    if amax > FOCK_MAX_AMP {
        return Err(format!(
            "number basis limited to coherent amplitudes up to 1, scenario has {amax:.3}"
        ));
    }
    Ok(())
}

fn run_moments(
    scn: &Scenario,
    chain: &noisychain::model::ChainSpec,
    grid: &TimeGrid,
    warnings: &mut Vec<String>,
) -> Result<Table, RunError> {
    let init = scn.initial()?;
    let numerical = |e: moments::MomentError| RunError::Numerical(e.to_string());
    let (occ, quartic) = if chain.n_modes() == 2 {
        let second = moments::two_mode_second(chain).map_err(numerical)?;
        let fourth = moments::two_mode_fourth(chain).map_err(numerical)?;
        let asym = analytics::two_mode_asymptote(
            chain.mean_couplings()[0],
            chain.gamma()[0],
            chain.kappa()[0],
        )
        .map_err(|e| RunError::Validation(e.to_string()))?;
        if asym.slow_convergence {
            warnings.push(format!(
                "moments: relaxation gap {:.2e} is small; the late-time plateau may lie \
                 beyond t_max",
                asym.degeneracy_gap
            ));
        }
        let s0 = second.initial_moments(&init).map_err(numerical)?;
        let f0 = fourth.initial_moments(&init).map_err(numerical)?;
        (
            second.integrate(&s0, grid).map_err(numerical)?,
            fourth.integrate(&f0, grid).map_err(numerical)?,
        )
    } else {
        let photon = moments::nmode_photon(chain).map_err(numerical)?;
        let fourth = moments::nmode_fourth(chain).map_err(numerical)?;
        let p0 = photon.initial_moments(&init).map_err(numerical)?;
        let f0 = fourth.initial_moments(&init).map_err(numerical)?;
        (
            photon.integrate(&p0, grid).map_err(numerical)?,
            fourth.integrate(&f0, grid).map_err(numerical)?,
        )
    };

    let m = scn.n_modes;
    let mut n_cols = Vec::with_capacity(m);
    for j in 0..m {
        let idx = occ
            .index_of(Label::Occ(j))
            .ok_or_else(|| RunError::Numerical(format!("occupation of mode {} missing", j + 1)))?;
        n_cols.push(
            occ.values
                .iter()
                .map(|v| v[idx].re)
                .collect::<Vec<f64>>(),
        );
    }
    let mut g2_cols = Vec::with_capacity(m);
    for j in 0..m {
        g2_cols.push(g2_series(&quartic, &occ, j).map_err(numerical)?);
    }

    let mut table = Table::new(series_header(m, false));
    for (t, &time) in occ.times.iter().enumerate() {
        let mut row = Vec::with_capacity(1 + 2 * m);
        row.push(time);
        for col in &n_cols {
            row.push(col[t]);
        }
        for col in &g2_cols {
            row.push(col[t]);
        }
        table.push_row(row);
    }
    Ok(table)
}

fn run_montecarlo(
    scn: &Scenario,
    noise: &montecarlo::NoiseSpec,
    grid: &TimeGrid,
    quiet: bool,
    warnings: &mut Vec<String>,
) -> Result<Table, RunError> {
    let init = scn.initial()?;
    sample_size_advice(scn, noise, warnings);

    let opts = EstimateOptions {
        base_seed: scn.seed,
        realizations: scn.realizations,
        progress: !quiet,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(scn.workers)
        .build()
        .map_err(|e| RunError::Validation(format!("cannot build worker pool: {e}")))?;
    let est = pool
        .install(|| montecarlo::estimate(noise, &init, grid, &opts))
        .map_err(|e| RunError::Numerical(e.to_string()))?;

    let m = scn.n_modes;
    let mut table = Table::new(series_header(m, true));
    for (t, &time) in est.times.iter().enumerate() {
        let mut row = Vec::with_capacity(1 + 4 * m);
        row.push(time);
        row.extend_from_slice(&est.n[t]);
        row.extend_from_slice(&est.g2[t]);
        row.extend_from_slice(&est.se_n[t]);
        row.extend_from_slice(&est.se_g2[t]);
        table.push_row(row);
    }
    Ok(table)
}

/// Estimates whether the requested ensemble can resolve the pair correlation
/// at the far end of the chain; the relative variance of the short-time
/// correlation grows like `(d + 1) x^(2d)` with the link count `d`.
fn sample_size_advice(
    scn: &Scenario,
    noise: &montecarlo::NoiseSpec,
    warnings: &mut Vec<String>,
) {
    let links = scn.n_modes - 1;
    if links < 2 {
        return;
    }
    let x = (0..links)
        .map(|l| noise.link_amplification(l))
        .fold(0.0f64, f64::max);
    if !(x.is_finite() && x > 1.0) {
        return;
    }
    let needed = montecarlo::sample_size_planner(x, links, 0.1);
    if needed > scn.realizations {
        // farthest mode whose short-time correlation stays resolvable at 10%
        let reach = (0..=links)
            .rev()
            .find(|&d| montecarlo::sample_size_planner(x, d, 0.1) <= scn.realizations)
            .unwrap_or(0);
        warnings.push(format!(
            "montecarlo: resolving the pair correlation at mode {} to 10% needs about \
             {needed} realizations; {} reach mode {} (growth factor {x:.2} per link)",
            scn.n_modes,
            scn.realizations,
            reach + 1,
        ));
    }
}

fn run_fock(
    scn: &Scenario,
    chain: &noisychain::model::ChainSpec,
    grid: &TimeGrid,
    warnings: &mut Vec<String>,
) -> Result<Table, RunError> {
    let init = scn.initial()?;
    let basis = FockBasis::new(scn.n_modes, FOCK_CUTOFF)
        .map_err(|e| RunError::Validation(e.to_string()))?;
    let opts = LindbladOptions::default();
    let (_, tail) = fockoracle::product_state(&basis, &init, opts.tail_tol)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    if tail > 1e-10 {
        warnings.push(format!(
            "fock: initial state loses {tail:.2e} probability to the occupation cutoff {}",
            FOCK_CUTOFF
        ));
    }
    let series = fockoracle::evolve_lindblad(&basis, chain, &init, &grid.times(), &opts)
        .map_err(|e| RunError::Numerical(e.to_string()))?;

    let m = scn.n_modes;
    let mut table = Table::new(series_header(m, false));
    for (t, &time) in series.times.iter().enumerate() {
        let mut row = Vec::with_capacity(1 + 2 * m);
        row.push(time);
        row.extend_from_slice(&series.n[t]);
        row.extend_from_slice(&series.g2[t]);
        table.push_row(row);
    }
    Ok(table)
}

/// Runs the scenario and writes `<kind>_<method>.tsv` per method plus
/// `manifest.json` into `out_dir`. Returns the manifest and the paths
/// written.
pub fn execute(
    scn: &Scenario,
    out_dir: &Path,
    quiet: bool,
) -> Result<(Manifest, Vec<PathBuf>), RunError> {
    let started = Instant::now();
    let result = run_methods(scn, quiet)?;

    std::fs::create_dir_all(out_dir)
        .map_err(|e| RunError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let mut manifest = Manifest::new(scn.clone());
    manifest.warnings = result.warnings;
    let mut paths = Vec::new();
    for out in &result.outputs {
        let name = format!("{}_{}.tsv", scn.kind.name(), out.method);
        let path = out_dir.join(&name);
        out.table.save(&path)?;
        manifest.outputs.push(OutputFile {
            method: out.method.to_string(),
            path: name,
        });
        paths.push(path);
    }
    manifest.wall_ms = started.elapsed().as_millis() as u64;
    let mpath = out_dir.join("manifest.json");
    manifest.save(&mpath)?;
    paths.push(mpath);
    Ok((manifest, paths))
}
