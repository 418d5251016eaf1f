//! Experiment drivers: the epsilon sweep against the limit solvers, the
//! acoustic decay study and single runs. Rows run concurrently on up to
//! `workers` threads; results are gathered in input order, so outputs do not
//! depend on scheduling.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};

use crate::acoustic::{decay_study, DecayRow, DecayStudy, DECAY_HEADER};
use crate::compressible::{cfl_limit, CompressibleSolver, DiagnosticsRow, Trajectory, DIAGNOSTICS_HEADER};
use crate::config::{ExperimentConfig, Regime};
use crate::eos::{solve_static, Potential, StaticProfile};
use crate::error::{Error, Result};
use crate::grid::{make_grid, Hypotheses, PlaneField, PlaneVector, SimParams, SlabGrid};
use crate::io::{fmt_num, CsvTable};
use crate::planar::{project_initial, PlanarSolver, PlanarState};
use crate::presets::{build_initial, InitialData};
use crate::radial::{init_from_data, radial_to_plane, run_radial, OuterBoundary, RadialMesh, RadialOperators};
use crate::spectral::SpectralWorkspace;

pub const CONVERGENCE_HEADER: [&str; 5] = ["epsilon", "t_compare", "error_norm", "balance_residual", "energy_drift"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    pub t_compare: f64,
    /// `L^2(K)` distance to the limit solution.
    pub error_norm: f64,
    /// Incompressibility residual for the planar limit, geostrophic residual
    /// for the radial one.
    pub balance_residual: f64,
    pub energy_drift: f64,
}

impl ConvergenceRow {
    pub fn as_record(&self) -> [f64; 5] {
        [self.epsilon, self.t_compare, self.error_norm, self.balance_residual, self.energy_drift]
    }
}

/// Outcome of one sweep. Failed rows keep their epsilon and the error text.
#[derive(Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<std::result::Result<ConvergenceRow, (f64, Error)>>,
}

impl ConvergenceReport {
    pub fn successes(&self) -> Vec<ConvergenceRow> {
        self.rows.iter().filter_map(|r| r.as_ref().ok().copied()).collect()
    }

    /// Failed rows are written with `NaN` in every measured column.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&CONVERGENCE_HEADER);
        for r in &self.rows {
            match r {
                Ok(row) => t.push_numbers(&row.as_record()),
                Err((eps, _)) => t.push_numbers(&[*eps, f64::NAN, f64::NAN, f64::NAN, f64::NAN]),
            }
        }
        t
    }
}

/// Largest increase of the total energy between consecutive outputs,
/// relative to the initial total; 0 for a non-increasing series.
pub fn energy_drift(diagnostics: &[DiagnosticsRow]) -> f64 {
    let e0 = diagnostics.first().map_or(0.0, |d| d.energy.total());
    if e0 <= 0.0 {
        return 0.0;
    }
    diagnostics
        .windows(2)
        .map(|w| (w[1].energy.total() - w[0].energy.total()) / e0)
        .fold(0.0, f64::max)
}

/// `true` when `values` never increase, except for at most one increase of
/// at most `slack` relative to the preceding value.
pub fn monotone_with_slack(values: &[f64], slack: f64) -> bool {
    let mut inversions = 0;
    for w in values.windows(2) {
        if w[1] > w[0] {
            if w[1] > w[0] * (1.0 + slack) {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= 1
}

/// Grid, workspace and static profile for one parameter set.
pub struct Setup {
    pub params: SimParams,
    pub ws: SpectralWorkspace,
    pub profile: StaticProfile,
}

impl Setup {
    pub fn new(params: &SimParams) -> Result<Self> {
        params.validate()?;
        let grid = make_grid(params)?;
        let ws = SpectralWorkspace::new(&grid);
        let profile = solve_static(params, &Potential::tapered(&grid), &ws)?;
        Ok(Self {
            params: params.clone(),
            ws,
            profile,
        })
    }

    pub fn grid(&self) -> &SlabGrid {
        &self.ws.grid
    }
}

/// Step size not above `dt_max` and half the initial CFL limit, with a
/// step count that is a multiple of `cadence` and lands exactly on `t`.
pub fn plan_steps(t: f64, dt_max: f64, cfl: f64, cadence: usize) -> (f64, usize) {
    let dt = dt_max.min(0.5 * cfl);
    let blocks = (t / (dt * cadence as f64)).ceil().max(1.0) as usize;
    let n = blocks * cadence;
    (t / n as f64, n)
}

/// Compressible run of `data` to time `t`, with diagnostics every `cadence` steps.
pub fn run_compressible(setup: &Setup, data: &InitialData, t: f64, cadence: usize) -> Result<Trajectory> {
    let (cfl, term) = cfl_limit(&data.state, &setup.profile, &setup.params, &setup.ws);
    let (dt, n) = plan_steps(t, setup.params.dt, cfl, cadence);
    info!(
        "eps = {}, m = {}: {n} steps of {dt:.3e} (initial limit {cfl:.3e}, {term})",
        setup.params.epsilon, setup.params.m
    );
    let params = SimParams {
        dt,
        t_end: t,
        ..setup.params.clone()
    };
    let mut solver = CompressibleSolver::new(&setup.ws, &setup.profile, &params, &data.state)?;
    solver.run_steps(n, cadence)
}

/// Planar limit velocity at time `t`.
pub fn planar_limit(setup: &Setup, data: &InitialData, t: f64) -> Result<PlanarState> {
    let ws = &setup.ws;
    let vel = data.state.velocity();
    let initial = project_initial(&vel, ws);
    let u_max = initial.velocity(ws).max_abs().max(1e-12);
    let h = ws.grid.dx.min(ws.grid.dy);
    let (dt, n) = plan_steps(t, setup.params.dt, 0.5 * h / u_max, 1);
    let mut solver = PlanarSolver::new(ws, &initial, setup.params.mu, dt)?;
    for _ in 0..n {
        solver.step()?;
    }
    Ok(solver.state())
}

/// Radial operators for the static profile on `0 < s < 0.8 L`.
pub fn radial_operators(setup: &Setup, nodes: usize) -> Result<RadialOperators> {
    let mesh = RadialMesh::new(nodes, setup.grid().analysis_radius())?;
    let p = &setup.profile;
    RadialOperators::new(mesh, |s| p.rho_at(s), |s| p.pp_at(s), setup.params.mu, OuterBoundary::Dirichlet)
}

/// Radial limit density perturbation at time `t`, sampled on the plane.
pub fn radial_limit(setup: &Setup, data: &InitialData, t: f64, nodes: usize) -> Result<PlaneField> {
    let ops = radial_operators(setup, nodes)?;
    let r0 = init_from_data(&data.r0, &data.u0h, &setup.profile.rho_plane, &ops, &setup.ws)?;
    let n = ((t / setup.params.dt).ceil() as usize).max(1);
    let traj = run_radial(&r0, &ops, t / n as f64, n, n)?;
    let last = &traj.snapshots.last().expect("trajectory has a final state").1;
    Ok(radial_to_plane(&last.r, &ops.mesh, setup.grid()))
}

/// Vertically averaged horizontal velocity.
pub fn averaged_velocity(setup: &Setup, traj: &Trajectory) -> PlaneVector {
    let u = traj.snapshots.last().expect("trajectory has a final state").velocity();
    PlaneVector::new(setup.ws.vertical_average(&u.comps[0]), setup.ws.vertical_average(&u.comps[1]))
}

/// One row of the sweep at `eps`.
pub fn convergence_row(config: &ExperimentConfig, eps: f64) -> Result<ConvergenceRow> {
    let params = SimParams {
        epsilon: eps,
        ..config.params.clone()
    };
    let hyp = match config.regime {
        Regime::AnisotropicM1 => Hypotheses::Anisotropic,
        Regime::IsotropicM1 => Hypotheses::Isotropic,
        _ => Hypotheses::None,
    };
    for w in params.hypothesis_warnings(hyp) {
        warn!("{w}");
    }
    let setup = Setup::new(&params)?;
    let data = build_initial(config.preset, config.amplitude, &setup.profile, &params, &setup.ws)?;
    let t = config.t_compare.unwrap_or(data.turnover);
    let traj = run_compressible(&setup, &data, t, config.cadence)?;
    let last = traj.diagnostics.last().expect("trajectory has a final row");
    let k = setup.grid().analysis_radius();
    let (error_norm, balance_residual) = match config.regime {
        Regime::AnisotropicM1 => {
            let limit = planar_limit(&setup, &data, t)?.velocity(&setup.ws);
            let diff = averaged_velocity(&setup, &traj).zip_with(&limit, |a, b| a - b);
            (diff.l2_on_disk(setup.grid(), k), last.balance.divergence)
        }
        Regime::IsotropicM1 => {
            let limit = radial_limit(&setup, &data, t, config.radial_nodes)?;
            let r_eps = scaled_perturbation(&setup, &traj);
            let diff = r_eps.zip_with(&limit, |a, b| a - b);
            (diff.l2_on_disk(setup.grid(), k), last.balance.geostrophic)
        }
        other => return Err(Error::Config(format!("regime {other} has no convergence study"))),
    };
    Ok(ConvergenceRow {
        epsilon: eps,
        t_compare: t,
        error_norm,
        balance_residual,
        energy_drift: energy_drift(&traj.diagnostics),
    })
}

/// `<rho - rho_tilde> / eps^m` at the final time.
pub fn scaled_perturbation(setup: &Setup, traj: &Trajectory) -> PlaneField {
    let st = traj.snapshots.last().expect("trajectory has a final state");
    let dev = st.scaled_deviation(&setup.profile.rho_tilde, &setup.params);
    setup.ws.vertical_average(&dev)
}

/// Map `f` over `items` on up to `workers` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every item is processed"))
        .collect()
}

/// Sweep over `config.epsilon_list`. A failing row is recorded and does not
/// affect the others.
pub fn run_convergence(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    if !matches!(config.regime, Regime::AnisotropicM1 | Regime::IsotropicM1) {
        return Err(Error::Config(format!("regime {} has no convergence study", config.regime)));
    }
    let rows = parallel_map(&config.epsilon_list, config.workers, |&eps| {
        convergence_row(config, eps).map_err(|e| {
            warn!("row eps = {eps} failed: {e}");
            (eps, e)
        })
    });
    Ok(ConvergenceReport { rows })
}

/// Decay table and fitted slope.
#[derive(Debug, Clone)]
pub struct AcousticReport {
    pub rows: Vec<DecayRow>,
    pub slope: f64,
}

impl AcousticReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&DECAY_HEADER);
        for r in &self.rows {
            t.push_numbers(&r.as_record());
        }
        t
    }

    pub fn slope_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["m", "slope"]);
        t.push_numbers(&[self.rows.first().map_or(f64::NAN, |r| r.m), self.slope]);
        t
    }
}

pub fn run_acoustic_study(config: &ExperimentConfig) -> Result<AcousticReport> {
    let p = &config.params;
    let grid = make_grid(p)?;
    let ws = SpectralWorkspace::new(&grid);
    let d = &config.decay;
    let study = DecayStudy {
        m: p.m,
        alpha: p.alpha,
        gamma: p.gamma,
        radius: d.radius,
        horizon: d.horizon,
        n_times: d.samples,
        packet_width: d.packet_width,
        k_max: d.packet_kmax,
        seed: config.seed,
    };
    let (rows, slope) = decay_study(&study, &config.epsilon_list, &ws)?;
    Ok(AcousticReport { rows, slope })
}

/// Diagnostics table of a compressible trajectory.
pub fn diagnostics_csv(traj: &Trajectory) -> CsvTable {
    let mut t = CsvTable::new(&DIAGNOSTICS_HEADER);
    for d in &traj.diagnostics {
        t.push_numbers(&d.as_record());
    }
    t
}

/// Write a table under `dir`, logging the path.
pub fn write_table(dir: &Path, name: &str, table: &CsvTable) -> Result<()> {
    let path = dir.join(name);
    table.write(&path)?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Plain `key,value` table for scalar summaries.
pub fn summary_csv(entries: &[(&str, f64)]) -> CsvTable {
    let mut t = CsvTable::new(&["quantity", "value"]);
    for (k, v) in entries {
        t.push(vec![k.to_string(), fmt_num(*v)]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressible::{BalanceResiduals, EnergyReport};

    fn row(total: f64) -> DiagnosticsRow {
        DiagnosticsRow {
            energy: EnergyReport {
                time: 0.0,
                kinetic: total,
                entropy: 0.0,
                cumulative_dissipation: 0.0,
            },
            mass_defect: 0.0,
            balance: BalanceResiduals {
                geostrophic: 0.0,
                divergence: 0.0,
            },
        }
    }

    #[test]
    fn drift_is_the_largest_relative_increase() {
        assert_eq!(energy_drift(&[row(1.0), row(0.9), row(0.8)]), 0.0);
        let d = energy_drift(&[row(2.0), row(1.0), row(1.5), row(1.6)]);
        assert!((d - 0.25).abs() < 1e-15);
        assert_eq!(energy_drift(&[]), 0.0);
    }

    #[test]
    fn monotone_trend_allows_one_small_inversion() {
        assert!(monotone_with_slack(&[3.0, 2.0, 1.0], 0.1));
        assert!(monotone_with_slack(&[3.0, 3.2, 1.0], 0.1));
        assert!(!monotone_with_slack(&[3.0, 3.5, 1.0], 0.1));
        assert!(!monotone_with_slack(&[3.0, 3.1, 1.0, 1.05], 0.1));
    }

    #[test]
    fn step_plans_hit_the_target_time() {
        let (dt, n) = plan_steps(1.0, 1e-3, 1.0, 20);
        assert_eq!(n, 1000);
        assert!((dt * n as f64 - 1.0).abs() < 1e-12);
        let (dt, n) = plan_steps(0.5, 1e-2, 1e-3, 7);
        assert_eq!(n % 7, 0);
        assert!(dt <= 0.5e-3);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..17).collect();
        for w in [1, 3, 8] {
            assert_eq!(parallel_map(&items, w, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
        }
    }
}
