//! Experiment configuration: a flat `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! regime = isotropic-m1
//! gamma = 4
//! m = 1
//! epsilon_list = [0.2, 0.1, 0.05]
//! preset = balanced-radial
//! ```
//!
//! Values are reals, integers, bare strings or bracketed real lists. Every key
//! must be one of the documented keys; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::SimParams;
use crate::presets::Preset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Planar incompressible limit, `m > 1`.
    AnisotropicM1,
    /// Radial linear limit, `m = 1`.
    IsotropicM1,
    AcousticDecay,
    SingleRun,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::AnisotropicM1, Regime::IsotropicM1, Regime::AcousticDecay, Regime::SingleRun];

    pub fn name(self) -> &'static str {
        match self {
            Regime::AnisotropicM1 => "anisotropic-m1-theorem",
            Regime::IsotropicM1 => "isotropic-m1",
            Regime::AcousticDecay => "acoustic-decay",
            Regime::SingleRun => "single-run",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown regime '{s}'")))
    }
}

/// Settings of the acoustic decay study.
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySettings {
    /// Radius `K` of the observation disk.
    pub radius: f64,
    /// Physical horizon before the wrap cap.
    pub horizon: f64,
    /// Quadrature intervals in time.
    pub samples: usize,
    pub packet_width: f64,
    pub packet_kmax: f64,
}

impl Default for DecaySettings {
    fn default() -> Self {
        Self {
            radius: 2.0,
            horizon: 1.0,
            samples: 160,
            packet_width: 0.7,
            packet_kmax: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub regime: Regime,
    pub params: SimParams,
    /// Strictly decreasing, positive.
    pub epsilon_list: Vec<f64>,
    pub preset: Preset,
    pub amplitude: f64,
    pub output_dir: PathBuf,
    /// Diagnostics every `cadence` steps.
    pub cadence: usize,
    pub seed: u64,
    pub workers: usize,
    /// Comparison time; one eddy turnover of the preset when absent.
    pub t_compare: Option<f64>,
    /// Nodes of the radial limit mesh.
    pub radial_nodes: usize,
    pub decay: DecaySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            regime: Regime::SingleRun,
            params: SimParams::default(),
            epsilon_list: vec![0.2, 0.1, 0.05],
            preset: Preset::Vortex,
            amplitude: 0.5,
            output_dir: PathBuf::from("out"),
            cadence: 20,
            seed: 0,
            workers: 1,
            t_compare: None,
            radial_nodes: 128,
            decay: DecaySettings::default(),
        }
    }
}

/// Keys in serialization order, with a flag marking the required ones.
const KEYS: &[(&str, bool)] = &[
    ("regime", true),
    ("m", true),
    ("gamma", true),
    ("epsilon", false),
    ("epsilon_list", false),
    ("mu", false),
    ("half_width", false),
    ("nx", false),
    ("ny", false),
    ("nz", false),
    ("dt", false),
    ("t_end", false),
    ("alpha", false),
    ("delta", false),
    ("rotation", false),
    ("preset", false),
    ("amplitude", false),
    ("output_dir", false),
    ("cadence", false),
    ("seed", false),
    ("workers", false),
    ("t_compare", false),
    ("radial_nodes", false),
    ("decay_radius", false),
    ("decay_horizon", false),
    ("decay_samples", false),
    ("packet_width", false),
    ("packet_kmax", false),
];

struct Entry {
    line: usize,
    raw: String,
}

struct Doc(BTreeMap<String, Entry>);

impl Doc {
    fn take<T>(&mut self, key: &str, conv: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(e) => conv(&e.raw).map(Some).map_err(|msg| Error::Parse {
                line: e.line,
                msg: format!("{key}: {msg}"),
            }),
        }
    }

    fn line_of(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }
}

fn real(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a real number, found '{s}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, found '{s}'"))
    }
}

fn integer(s: &str) -> std::result::Result<u64, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, found '{s}'"))
}

fn size(s: &str) -> std::result::Result<usize, String> {
    integer(s).map(|v| v as usize)
}

fn boolean(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found '{s}'")),
    }
}

fn real_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected a list like [0.2, 0.1], found '{s}'"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner.split(',').map(|t| real(t.trim())).collect()
}

fn string(s: &str) -> std::result::Result<String, String> {
    let t = s
        .strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .unwrap_or(s);
    if t.is_empty() {
        Err("empty string".into())
    } else {
        Ok(t.to_string())
    }
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut map = BTreeMap::new();
    for (no, raw_line) in text.lines().enumerate() {
        let line = no + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected 'key = value', found '{content}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key '{key}'"),
            });
        }
        if value.is_empty() {
            return Err(Error::Parse {
                line,
                msg: format!("{key}: missing value"),
            });
        }
        if let Some(prev) = map.insert(key.to_string(), Entry { line, raw: value.to_string() }) {
            return Err(Error::Parse {
                line,
                msg: format!("{key}: repeated (first set on line {})", prev.line),
            });
        }
    }
    for (key, required) in KEYS {
        if *required && !map.contains_key(*key) {
            return Err(Error::Config(format!("missing required key '{key}'")));
        }
    }

    let mut doc = Doc(map);
    let mut cfg = ExperimentConfig::default();
    let regime_line = doc.line_of("regime");
    let regime = doc.take("regime", string)?.unwrap();
    cfg.regime = regime.parse().map_err(|_| Error::Parse {
        line: regime_line,
        msg: format!("regime: unknown value '{regime}'"),
    })?;
    let p = &mut cfg.params;
    p.m = doc.take("m", real)?.unwrap();
    p.gamma = doc.take("gamma", real)?.unwrap();
    let eps_line = doc.line_of("epsilon_list");
    if let Some(v) = doc.take("epsilon_list", real_list)? {
        if v.is_empty() || v.iter().any(|e| *e <= 0.0) || v.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Parse {
                line: eps_line,
                msg: "epsilon_list: must be non-empty, positive and strictly decreasing".into(),
            });
        }
        cfg.epsilon_list = v;
    }
    p.epsilon = doc.take("epsilon", real)?.unwrap_or(cfg.epsilon_list[0]);
    macro_rules! set {
        ($key:literal, $conv:expr, $dst:expr) => {
            if let Some(v) = doc.take($key, $conv)? {
                $dst = v;
            }
        };
    }
    set!("mu", real, p.mu);
    set!("half_width", real, p.half_width);
    set!("nx", size, p.nx);
    set!("ny", size, p.ny);
    set!("nz", size, p.nz);
    set!("dt", real, p.dt);
    set!("t_end", real, p.t_end);
    set!("alpha", real, p.alpha);
    set!("delta", real, p.delta);
    set!("rotation", boolean, p.rotation);
    let preset_line = doc.line_of("preset");
    if let Some(name) = doc.take("preset", string)? {
        cfg.preset = name.parse().map_err(|e: Error| Error::Parse {
            line: preset_line,
            msg: e.to_string(),
        })?;
    }
    set!("amplitude", real, cfg.amplitude);
    if let Some(v) = doc.take("output_dir", string)? {
        cfg.output_dir = PathBuf::from(v);
    }
    set!("cadence", size, cfg.cadence);
    set!("seed", integer, cfg.seed);
    set!("workers", size, cfg.workers);
    cfg.t_compare = doc.take("t_compare", real)?;
    set!("radial_nodes", size, cfg.radial_nodes);
    set!("decay_radius", real, cfg.decay.radius);
    set!("decay_horizon", real, cfg.decay.horizon);
    set!("decay_samples", size, cfg.decay.samples);
    set!("packet_width", real, cfg.decay.packet_width);
    set!("packet_kmax", real, cfg.decay.packet_kmax);
    debug_assert!(doc.0.is_empty());

    cfg.params.validate()?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Checks beyond the per-key types.
    pub fn validate(&self) -> Result<()> {
        if self.cadence == 0 {
            return Err(Error::Config("cadence must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.radial_nodes < 8 {
            return Err(Error::Config("radial_nodes must be at least 8".into()));
        }
        if let Some(t) = self.t_compare {
            if !(t > 0.0) {
                return Err(Error::Config("t_compare must be positive".into()));
            }
        }
        let d = &self.decay;
        if !(d.radius > 0.0 && d.horizon > 0.0 && d.packet_width > 0.0 && d.packet_kmax > 0.0) || d.samples == 0 {
            return Err(Error::Config("decay settings must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form; `parse_config(&c.serialize())` returns `c`.
    pub fn serialize(&self) -> String {
        let p = &self.params;
        let list = |v: &[f64]| {
            let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            format!("[{}]", items.join(", "))
        };
        let mut lines = vec![
            format!("regime = {}", self.regime),
            format!("m = {}", p.m),
            format!("gamma = {}", p.gamma),
            format!("epsilon = {}", p.epsilon),
            format!("epsilon_list = {}", list(&self.epsilon_list)),
            format!("mu = {}", p.mu),
            format!("half_width = {}", p.half_width),
            format!("nx = {}", p.nx),
            format!("ny = {}", p.ny),
            format!("nz = {}", p.nz),
            format!("dt = {}", p.dt),
            format!("t_end = {}", p.t_end),
            format!("alpha = {}", p.alpha),
            format!("delta = {}", p.delta),
            format!("rotation = {}", p.rotation),
            format!("preset = {}", self.preset),
            format!("amplitude = {}", self.amplitude),
            format!("output_dir = \"{}\"", self.output_dir.display()),
            format!("cadence = {}", self.cadence),
            format!("seed = {}", self.seed),
            format!("workers = {}", self.workers),
        ];
        if let Some(t) = self.t_compare {
            lines.push(format!("t_compare = {t}"));
        }
        let d = &self.decay;
        lines.extend([
            format!("radial_nodes = {}", self.radial_nodes),
            format!("decay_radius = {}", d.radius),
            format!("decay_horizon = {}", d.horizon),
            format!("decay_samples = {}", d.samples),
            format!("packet_width = {}", d.packet_width),
            format!("packet_kmax = {}", d.packet_kmax),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
