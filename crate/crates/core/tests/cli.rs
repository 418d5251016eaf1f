//! End-to-end checks of the `slabflow` binary: output schemas, exit codes,
//! determinism and isolation of failed sweep rows.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slabflow::acoustic::DECAY_HEADER;
use slabflow::compressible::DIAGNOSTICS_HEADER;
use slabflow::experiments::CONVERGENCE_HEADER;
use slabflow::io::load_field;
use slabflow::planar::PLANAR_HEADER;
use tempfile::TempDir;

const SMALL: &str = "regime = single-run
m = 1
gamma = 2
nx = 32
ny = 32
nz = 4
t_end = 0.04
cadence = 10
preset = balanced-radial
amplitude = 0.1
";

const DECAY: &str = "regime = acoustic-decay
m = 1
gamma = 2
nx = 32
ny = 32
nz = 4
epsilon_list = [0.2, 0.1]
decay_samples = 40
";

fn run(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{sub}.cfg"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{sub}-{}", extra.join("_")));
    let output = Command::new(env!("CARGO_BIN_EXE_slabflow"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    (output, out)
}

fn header(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().next().unwrap().split(',').map(str::to_string).collect()
}

fn data_rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn single_run_commands_write_their_tables() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();

    let (o, out) = run(d, "static-profile", SMALL, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("static_profile.csv")), ["x", "y", "rho_tilde", "pressure_slope"]);
    let rho = load_field(&out.join("rho_tilde.slabf")).unwrap();
    assert_eq!((rho.shape.nx, rho.shape.ny, rho.shape.nz), (32, 32, 4));

    let (o, out) = run(d, "run-full", SMALL, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("diagnostics.csv")), DIAGNOSTICS_HEADER);
    assert!(data_rows(&out.join("diagnostics.csv")).len() >= 2);
    for name in ["rho", "m1", "m2", "m3"] {
        assert_eq!(load_field(&out.join(format!("{name}.slabf"))).unwrap().values.len(), 32 * 32 * 4);
    }
    assert_eq!(header(&out.join("summary.csv")), ["quantity", "value"]);

    let (o, out) = run(d, "run-2d", SMALL, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("planar.csv")), PLANAR_HEADER);
    assert_eq!(header(&out.join("planar_final.csv")), ["x", "y", "omega", "u1", "u2"]);

    let (o, out) = run(d, "run-radial", SMALL, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("radial_energy.csv")), ["time", "energy"]);
    let energy = data_rows(&out.join("radial_energy.csv"));
    assert!(energy.windows(2).all(|w| w[1][1] <= w[0][1] * (1.0 + 1e-12)));
    let h = header(&out.join("radial.csv"));
    assert_eq!((h[0].as_str(), h[1].as_str(), h.last().unwrap().as_str()), ("time", "r_0", "energy"));
}

#[test]
fn acoustic_study_is_deterministic_in_the_seed() {
    let tmp = TempDir::new().unwrap();
    let (o, a) = run(tmp.path(), "acoustic", DECAY, &["--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&a.join("decay.csv")), DECAY_HEADER);
    assert_eq!(header(&a.join("decay_slope.csv")), ["m", "slope"]);

    let (_, b) = run(tmp.path(), "acoustic", DECAY, &["--seed", "5", "--workers", "2"]);
    assert_eq!(fs::read(a.join("decay.csv")).unwrap(), fs::read(b.join("decay.csv")).unwrap());
    let (_, c) = run(tmp.path(), "acoustic", DECAY, &["--seed", "6"]);
    assert_ne!(fs::read(a.join("decay.csv")).unwrap(), fs::read(c.join("decay.csv")).unwrap());
}

#[test]
fn full_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    let (_, a) = run(tmp.path(), "run-full", SMALL, &["--seed", "1"]);
    let (_, b) = run(tmp.path(), "run-full", SMALL, &["--seed", "2"]);
    for name in ["diagnostics.csv", "rho.slabf", "m1.slabf"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn configuration_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cases = [
        ("static-profile", "regime = single-run\nm = 1\n"),
        ("static-profile", "regime = single-run\nm = 1\ngamma = 2\ncolour = red\n"),
        ("converge", "regime = isotropic-m1\nm = 1\ngamma = 4\nepsilon_list = [0.1, 0.2]\n"),
        ("converge", SMALL),
        ("run-full", "regime = single-run\nm = 1\ngamma = 2\nnx = 31\n"),
    ];
    for (sub, cfg) in cases {
        let (o, _) = run(d, sub, cfg, &[]);
        assert_eq!(o.status.code(), Some(2), "{sub}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let missing = Command::new(env!("CARGO_BIN_EXE_slabflow"))
        .args(["run-full", "--config"])
        .arg(d.join("absent.cfg"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let bad_flag = Command::new(env!("CARGO_BIN_EXE_slabflow")).args(["run-full", "--frobnicate"]).output().unwrap();
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = SMALL.replace("amplitude = 0.1", "amplitude = -20");
    let (o, _) = run(tmp.path(), "run-full", &cfg, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn a_failed_row_leaves_the_others_intact() {
    let tmp = TempDir::new().unwrap();
    // The bump pushes the density below zero at eps = 0.2 only.
    let cfg = "regime = isotropic-m1
m = 1
gamma = 4
nx = 32
ny = 32
nz = 4
preset = balanced-radial
amplitude = -8
epsilon_list = [0.2, 0.05]
t_compare = 0.01
cadence = 5
radial_nodes = 32
";
    let (o, out) = run(tmp.path(), "converge", cfg, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let path = out.join("convergence.csv");
    assert_eq!(header(&path), CONVERGENCE_HEADER);
    let rows = data_rows(&path);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], 0.2);
    assert!(rows[0][1..].iter().all(|v| v.is_nan()));
    assert_eq!(rows[1][0], 0.05);
    assert!(rows[1][1..].iter().all(|v| v.is_finite()));
    assert!(rows[1][2] >= 0.0);
}
