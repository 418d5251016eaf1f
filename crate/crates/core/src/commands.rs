//! The subcommands of the `slabflow` binary. Each one reads an
//! [`ExperimentConfig`], writes its tables and fields under the output
//! directory and returns the paths it produced.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::{
    diagnostics_csv, energy_drift, plan_steps, radial_operators, run_acoustic_study, run_compressible,
    run_convergence, summary_csv, Setup,
};
use crate::grid::{Parity, PlaneField, ScalarField, SlabGrid};
use crate::io::{fmt_num, save_field, write_atomic, CsvTable};
use crate::planar::{project_initial, run2d, PLANAR_HEADER};
use crate::presets::build_initial;
use crate::radial::{init_from_data, run_radial};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    StaticProfile,
    RunFull,
    Run2d,
    RunRadial,
    Acoustic,
    Converge,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::StaticProfile,
        Command::RunFull,
        Command::Run2d,
        Command::RunRadial,
        Command::Acoustic,
        Command::Converge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::StaticProfile => "static-profile",
            Command::RunFull => "run-full",
            Command::Run2d => "run-2d",
            Command::RunRadial => "run-radial",
            Command::Acoustic => "acoustic",
            Command::Converge => "converge",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command '{s}'")))
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(out) = &self.out {
            config.output_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(Error::Config("workers must be at least 1".into()));
            }
            config.workers = w;
        }
        Ok(())
    }
}

/// Read and parse a config file. Unreadable files count as config errors.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    crate::config::parse_config(&text)
}

/// Run `command`; the config used is echoed to `config_used.txt`.
pub fn execute(command: Command, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let dir = config.output_dir.as_path();
    let mut out = Writer { dir, written: Vec::new() };
    out.bytes("config_used.txt", config.serialize().as_bytes())?;
    match command {
        Command::StaticProfile => static_profile(config, &mut out)?,
        Command::RunFull => run_full(config, &mut out)?,
        Command::Run2d => run_planar(config, &mut out)?,
        Command::RunRadial => run_radial_limit(config, &mut out)?,
        Command::Acoustic => {
            let report = run_acoustic_study(config)?;
            out.table("decay.csv", &report.to_csv())?;
            out.table("decay_slope.csv", &report.slope_csv())?;
        }
        Command::Converge => {
            let report = run_convergence(config)?;
            out.table("convergence.csv", &report.to_csv())?;
            let failed: Vec<String> = report
                .rows
                .iter()
                .filter_map(|r| r.as_ref().err().map(|(eps, e)| format!("eps = {eps}: {e}")))
                .collect();
            if !failed.is_empty() {
                return Err(Error::Solver(format!("{} row(s) failed: {}", failed.len(), failed.join("; "))));
            }
        }
    }
    Ok(out.written)
}

struct Writer<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Writer<'_> {
    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    fn table(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        self.bytes(name, table.render().as_bytes())
    }

    fn field(&mut self, name: &str, field: &ScalarField) -> Result<()> {
        let path = self.dir.join(name);
        save_field(&path, field)?;
        info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }
}

/// `x, y, <names...>` for planar fields sampled on the grid.
fn plane_table(grid: &SlabGrid, names: &[&str], fields: &[&PlaneField]) -> CsvTable {
    let mut header = vec!["x", "y"];
    header.extend_from_slice(names);
    let mut t = CsvTable::new(&header);
    for j in 0..grid.shape.ny {
        for i in 0..grid.shape.nx {
            let mut row = vec![grid.x[i], grid.y[j]];
            row.extend(fields.iter().map(|f| f.at(i, j)));
            t.push_numbers(&row);
        }
    }
    t
}

fn horizon(config: &ExperimentConfig) -> f64 {
    config.t_compare.unwrap_or(config.params.t_end)
}

fn static_profile(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let setup = Setup::new(&config.params)?;
    let p = &setup.profile;
    let residual = crate::eos::static_balance_residual(p, &setup.params, &setup.ws);
    out.table(
        "static_profile.csv",
        &plane_table(setup.grid(), &["rho_tilde", "pressure_slope"], &[&p.rho_plane, &p.pp_plane]),
    )?;
    out.field("rho_tilde.slabf", &p.rho_tilde)?;
    out.table(
        "static_summary.csv",
        &summary_csv(&[
            ("balance_residual", residual),
            ("mean_rho", p.horizontal_mean_rho()),
        ]),
    )
}

fn run_full(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let setup = Setup::new(&config.params)?;
    let data = build_initial(config.preset, config.amplitude, &setup.profile, &setup.params, &setup.ws)?;
    let traj = run_compressible(&setup, &data, horizon(config), config.cadence)?;
    out.table("diagnostics.csv", &diagnostics_csv(&traj))?;
    let last = traj.snapshots.last().expect("trajectory has a final state");
    out.field("rho.slabf", &last.rho)?;
    for (a, comp) in last.mom.comps.iter().enumerate() {
        out.field(&format!("m{}.slabf", a + 1), comp)?;
    }
    let d = traj.diagnostics.last().expect("trajectory has a final row");
    out.table(
        "summary.csv",
        &summary_csv(&[
            ("time", last.time),
            ("energy_drift", energy_drift(&traj.diagnostics)),
            ("divergence_residual", d.balance.divergence),
            ("geostrophic_residual", d.balance.geostrophic),
        ]),
    )
}

fn run_planar(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let setup = Setup::new(&config.params)?;
    let ws = &setup.ws;
    let data = build_initial(config.preset, config.amplitude, &setup.profile, &setup.params, ws)?;
    let initial = project_initial(&data.state.velocity(), ws);
    let u_max = initial.velocity(ws).max_abs().max(1e-12);
    let h = ws.grid.dx.min(ws.grid.dy);
    let (dt, n) = plan_steps(horizon(config), setup.params.dt, 0.5 * h / u_max, config.cadence);
    let traj = run2d(&initial, setup.params.mu, dt, n, config.cadence, ws)?;
    let mut t = CsvTable::new(&PLANAR_HEADER);
    for row in &traj.rows {
        t.push_numbers(row);
    }
    out.table("planar.csv", &t)?;
    let last = traj.snapshots.last().expect("trajectory has a final state");
    let u = last.velocity(ws);
    out.table(
        "planar_final.csv",
        &plane_table(&ws.grid, &["omega", "u1", "u2"], &[&last.omega, &u.comps[0], &u.comps[1]]),
    )?;
    out.field(
        "omega.slabf",
        &ScalarField {
            values: last.omega.values.clone(),
            ..ScalarField::zeros(crate::grid::Shape { nx: last.omega.nx, ny: last.omega.ny, nz: 1 }, Parity::Even)
        },
    )
}

fn run_radial_limit(config: &ExperimentConfig, out: &mut Writer) -> Result<()> {
    let setup = Setup::new(&config.params)?;
    let data = build_initial(config.preset, config.amplitude, &setup.profile, &setup.params, &setup.ws)?;
    let ops = radial_operators(&setup, config.radial_nodes)?;
    let r0 = init_from_data(&data.r0, &data.u0h, &setup.profile.rho_plane, &ops, &setup.ws)?;
    let t = horizon(config);
    let blocks = (t / (setup.params.dt * config.cadence as f64)).ceil().max(1.0) as usize;
    let n = blocks * config.cadence;
    let traj = run_radial(&r0, &ops, t / n as f64, n, config.cadence)?;
    out.table("radial.csv", &traj.to_csv(&ops))?;
    let mut e = CsvTable::new(&["time", "energy"]);
    for (time, energy) in &traj.energy {
        e.push(vec![fmt_num(*time), fmt_num(*energy)]);
    }
    out.table("radial_energy.csv", &e)?;
    let mut nodes = CsvTable::new(&["s"]);
    for &s in &ops.mesh.nodes {
        nodes.push_numbers(&[s]);
    }
    out.table("radial_nodes.csv", &nodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_names_round_trip() {
        for c in Command::ALL {
            assert_eq!(c.name().parse::<Command>().unwrap(), c);
        }
        assert!("run-3d".parse::<Command>().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = ExperimentConfig::default();
        Overrides {
            out: Some("elsewhere".into()),
            seed: Some(9),
            workers: Some(3),
        }
        .apply(&mut c)
        .unwrap();
        assert_eq!((c.output_dir.to_str().unwrap(), c.seed, c.workers), ("elsewhere", 9, 3));
        let zero = Overrides { workers: Some(0), ..Default::default() };
        assert_eq!(zero.apply(&mut c).unwrap_err().exit_code(), 2);
    }
}
