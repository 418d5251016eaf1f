//! Initial-data presets.
//!
//! All presets live inside the plateau of the centrifugal potential, where the
//! static profile is well resolved:
//!
//! * `vortex`: a Taylor-Green cell pattern under a smooth window, `r0 = 0`.
//! * `balanced-radial`: a Gaussian bump `r0` with the geostrophic velocity
//!   `U0 = grad_h^perp(P'(rho_tilde) r0)`.
//! * `unbalanced`: the same `r0` at rest, which radiates acoustic waves.
//!
//! The density is `rho0 = rho_tilde + eps^m r0` and the momentum `rho0 U0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::eos::StaticProfile;
use crate::error::{Error, Result};
use crate::grid::{FluidState, PlaneField, PlaneVector, ScalarField, SimParams, VectorField};
use crate::spectral::{smooth_ramp, SpectralWorkspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Vortex,
    BalancedRadial,
    Unbalanced,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Vortex, Preset::BalancedRadial, Preset::Unbalanced];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Vortex => "vortex",
            Preset::BalancedRadial => "balanced-radial",
            Preset::Unbalanced => "unbalanced",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset '{s}' (expected vortex, balanced-radial or unbalanced)")))
    }
}

/// Width of the Gaussian bump, as a fraction of `L`.
pub const BUMP_WIDTH: f64 = 0.16;

/// Horizontal wave number of the vortex cells: one period across the box.
pub fn vortex_wavenumber(half_width: f64) -> f64 {
    2.0 * PI / half_width
}

/// Window equal to 1 for `s <= 0.3 L` and 0 for `s >= 0.75 L`.
pub fn vortex_window(s: f64, half_width: f64) -> f64 {
    1.0 - smooth_ramp((s - 0.3 * half_width) / (0.45 * half_width))
}

/// Initial data together with the limit-side ingredients.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub preset: Preset,
    pub state: FluidState,
    /// Density perturbation `r0`.
    pub r0: PlaneField,
    /// Horizontal velocity `U_0h`.
    pub u0h: PlaneVector,
    /// One horizontal eddy-turnover time, the default comparison time.
    pub turnover: f64,
}

pub fn build_initial(preset: Preset, amplitude: f64, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> Result<InitialData> {
    if !amplitude.is_finite() {
        return Err(Error::Config(format!("amplitude must be finite, got {amplitude}")));
    }
    let grid = &ws.grid;
    let l = grid.half_width;
    let (nx, ny, nz) = (grid.shape.nx, grid.shape.ny, grid.shape.nz);
    let width = BUMP_WIDTH * l;
    let bump = |x: f64, y: f64| amplitude * (-(x * x + y * y) / (2.0 * width * width)).exp();

    let (r0, u0h, turnover) = match preset {
        Preset::Vortex => {
            let k = vortex_wavenumber(l);
            let psi = PlaneField::from_fn(grid, |x, y| -(amplitude / k) * (k * x).sin() * (k * y).sin() * vortex_window(x.hypot(y), l));
            let u = ws.plane_perp_grad(&ws.plane_dealias(&psi));
            (PlaneField::zeros(nx, ny), u, turnover(1.0 / (k * amplitude.abs())))
        }
        Preset::BalancedRadial | Preset::Unbalanced => {
            let r0 = ws.plane_dealias(&PlaneField::from_fn(grid, bump));
            let big_r = r0.zip_with(&profile.pp_plane, |a, b| a * b);
            let geo = ws.plane_perp_grad(&big_r);
            let u = if preset == Preset::BalancedRadial { geo.clone() } else { PlaneVector::zeros(nx, ny) };
            (r0, u, turnover(width / geo.max_abs()))
        }
    };

    let rho = profile
        .rho_tilde
        .zip_with(&ScalarField::from_plane(&r0, nz), |a, b| a + params.mach() * b);
    let vel = VectorField::new(
        ScalarField::from_plane(&u0h.comps[0], nz),
        ScalarField::from_plane(&u0h.comps[1], nz),
        ScalarField::zeros(grid.shape, crate::grid::Parity::Odd),
    );
    let mom = vel.times(&rho);
    Ok(InitialData {
        preset,
        state: FluidState { rho, mom, time: 0.0 },
        r0,
        u0h,
        turnover,
    })
}

/// Zero amplitude has no turnover; fall back to one time unit.
fn turnover(t: f64) -> f64 {
    if t.is_finite() && t > 0.0 {
        t
    } else {
        1.0
    }
}
