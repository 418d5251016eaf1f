//! Time integration of the scaled primitive system
//!
//! ```text
//! d_t rho + div(rho u) = 0
//! d_t(rho u) + div(rho u (x) u) + eps^-1 b x rho u + eps^-2m grad p(rho)
//!     = div S(grad u) + eps^-2 rho grad G
//! ```
//!
//! The prognostic variables are the spectra of `sigma = rho - rho_tilde` and
//! of the momentum. Pressure and centrifugal force are combined as
//! `-eps^-2m rho grad(P(rho) - P(rho_tilde))`, which vanishes identically at
//! the static state, so the equilibrium is preserved to round-off.
//!
//! Each step is a Strang splitting: half a step of the constant-coefficient
//! acoustic/Coriolis system (solved exactly per Fourier mode), an RK4 step of
//! the remainder, and another exact half step.

use log::debug;
use nalgebra::{Matrix4, Vector4};

use crate::eos::StaticProfile;
use crate::error::{Error, Result};
use crate::grid::{FluidState, Parity, PlaneField, PlaneVector, ScalarField, SimParams, VectorField};
use crate::spectral::{SpectralWorkspace, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Densities below this abort the run.
pub const DENSITY_FLOOR: f64 = 1e-6;

/// Right-hand side split by physical origin.
#[derive(Debug, Clone)]
pub struct TermBreakdown {
    pub convection: VectorField,
    pub coriolis: VectorField,
    pub pressure: VectorField,
    pub viscous: VectorField,
    pub centrifugal: VectorField,
}

#[derive(Debug, Clone)]
pub struct RhsBundle {
    pub drho_dt: ScalarField,
    pub dmom_dt: VectorField,
    pub terms: TermBreakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub time: f64,
    pub kinetic: f64,
    pub entropy: f64,
    pub cumulative_dissipation: f64,
}

impl EnergyReport {
    pub fn total(&self) -> f64 {
        self.kinetic + self.entropy + self.cumulative_dissipation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceResiduals {
    /// `|| grad_h R + <u_h>^perp ||_{L^2(K)}`.
    pub geostrophic: f64,
    /// `|| div_h(rho_tilde <u_h>) ||_{L^2(K)}`.
    pub divergence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRow {
    pub energy: EnergyReport,
    pub mass_defect: f64,
    pub balance: BalanceResiduals,
}

pub const DIAGNOSTICS_HEADER: [&str; 8] = [
    "time",
    "kinetic",
    "entropy",
    "dissipation",
    "total",
    "mass_defect",
    "geo_residual",
    "div_residual",
];

impl DiagnosticsRow {
    pub fn as_record(&self) -> [f64; 8] {
        let e = &self.energy;
        [
            e.time,
            e.kinetic,
            e.entropy,
            e.cumulative_dissipation,
            e.total(),
            self.mass_defect,
            self.balance.geostrophic,
            self.balance.divergence,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<FluidState>,
    pub diagnostics: Vec<DiagnosticsRow>,
}

/// `rho = rho_tilde`, `u = 0`.
pub fn static_state(profile: &StaticProfile) -> FluidState {
    FluidState {
        rho: profile.rho_tilde.clone(),
        mom: VectorField::zeros(profile.rho_tilde.shape),
        time: 0.0,
    }
}

fn coriolis_rate(params: &SimParams) -> f64 {
    if params.rotation {
        1.0 / params.epsilon
    } else {
        0.0
    }
}

fn check_density(rho: &[f64], shape: crate::grid::Shape, time: f64) -> Result<()> {
    let (mut min, mut at) = (f64::INFINITY, 0);
    for (idx, &r) in rho.iter().enumerate() {
        if !(r >= min) {
            min = r;
            at = idx;
        }
    }
    if !(min >= DENSITY_FLOOR) {
        let i = at % shape.nx;
        let j = (at / shape.nx) % shape.ny;
        let k = at / shape.plane_len();
        return Err(Error::Positivity {
            time,
            min_rho: min,
            node: (i, j, k),
        });
    }
    Ok(())
}

/// `P(rho) - P(rho_tilde)` without cancellation for small deviations.
#[inline]
fn potential_gap(gamma: f64, rho: f64, rho_tilde: f64) -> f64 {
    let x = (rho - rho_tilde) / rho_tilde;
    gamma / (gamma - 1.0) * rho_tilde.powf(gamma - 1.0) * ((gamma - 1.0) * x.ln_1p()).exp_m1()
}

/// Largest admissible step and the name of the term that limits it.
pub fn cfl_limit(state: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> (f64, &'static str) {
    let u_max = state.velocity().max_abs();
    let c2 = profile.law.dp(profile.horizontal_mean_rho());
    limit_from(u_max, sound_mismatch(&state.rho.values, profile, c2), c2, params, ws)
}

/// Largest phase the exact propagator may advance the fastest resolved mode
/// in one step. Larger steps let the split nonlinear terms resonate with the
/// fast oscillation and blow up.
pub const FAST_PHASE_LIMIT: f64 = 3.0;

/// Fastest linear frequency on the dealiased spectrum.
fn fastest_frequency(c2: f64, params: &SimParams, ws: &SpectralWorkspace) -> f64 {
    let k2_max = ws
        .mask()
        .iter()
        .enumerate()
        .filter(|(_, &keep)| keep)
        .map(|(idx, _)| {
            let k = ws.wavevector(idx);
            k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
        })
        .fold(0.0, f64::max);
    let f = coriolis_rate(params);
    (c2 * k2_max / params.mach().powi(2) + f * f).sqrt()
}

/// Largest gap between the local sound speed and the one of the
/// constant-coefficient propagator; the explicit pressure remainder carries
/// waves at this relative speed.
fn sound_mismatch(rho: &[f64], profile: &StaticProfile, c2: f64) -> f64 {
    let c0 = c2.sqrt();
    rho.iter()
        .map(|&r| (profile.law.dp(r).max(0.0).sqrt() - c0).abs())
        .fold(0.0, f64::max)
}

fn limit_from(u_max: f64, c_rem: f64, c2: f64, params: &SimParams, ws: &SpectralWorkspace) -> (f64, &'static str) {
    let g = &ws.grid;
    let h = g.dx.min(g.dy).min(g.dz);
    let wave = c_rem / params.mach();
    let adv = if u_max + wave > 0.0 {
        0.5 * h / (u_max + wave)
    } else {
        f64::INFINITY
    };
    let visc = 0.5 * h * h / (4.0 * params.mu);
    let omega = fastest_frequency(c2, params, ws);
    let fast = if omega > 0.0 { FAST_PHASE_LIMIT / omega } else { f64::INFINITY };
    let term = if wave > u_max { "pressure-remainder" } else { "advection" };
    [(adv, term), (visc, "viscous"), (fast, "fast-phase")]
        .into_iter()
        .fold((f64::INFINITY, "advection"), |best, cand| if cand.0 < best.0 { cand } else { best })
}

fn spectra(ws: &SpectralWorkspace, v: &VectorField) -> [Vec<C64>; 3] {
    [0, 1, 2].map(|a| ws.forward(&v.comps[a].values))
}

fn vector_from_spectra(ws: &SpectralWorkspace, h: &[Vec<C64>; 3]) -> VectorField {
    let shape = ws.shape();
    let par = [Parity::Even, Parity::Even, Parity::Odd];
    VectorField {
        comps: [0, 1, 2].map(|a| ScalarField {
            shape,
            values: ws.inverse(&h[a]),
            parity: par[a],
        }),
    }
}

fn clean(ws: &SpectralWorkspace, h: &mut [C64], parity: Parity) {
    ws.dealias_spectrum(h);
    ws.project_parity_spectrum(h, parity);
}

const MOM_PARITY: [Parity; 3] = [Parity::Even, Parity::Even, Parity::Odd];

/// `-div(m (x) u)` as spectra, from physical momentum and density.
fn convection_spectra(ws: &SpectralWorkspace, mom: &[Vec<f64>; 3], rho: &[f64]) -> [Vec<C64>; 3] {
    let n = rho.len();
    let inv: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let mut prod: Vec<Vec<C64>> = Vec::with_capacity(6);
    let pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    for &(a, b) in &pairs {
        let p: Vec<f64> = (0..n).map(|i| mom[a][i] * mom[b][i] * inv[i]).collect();
        prod.push(ws.forward(&p));
    }
    let pick = |a: usize, b: usize| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        pairs.iter().position(|&p| p == (a, b)).unwrap()
    };
    let mut out = [vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]];
    for idx in 0..n {
        let k = ws.wavevector(idx);
        for a in 0..3 {
            let mut acc = C64::default();
            for b in 0..3 {
                acc += k[b] * prod[pick(a, b)][idx];
            }
            out[a][idx] = -I * acc;
        }
    }
    out
}

/// `mu (Delta u + grad div u / 3)` as spectra, from velocity spectra.
fn viscous_spectra(ws: &SpectralWorkspace, uh: &[Vec<C64>; 3], mu: f64) -> [Vec<C64>; 3] {
    let n = uh[0].len();
    let mut out = [vec![C64::default(); n], vec![C64::default(); n], vec![C64::default(); n]];
    for idx in 0..n {
        let k = ws.wavevector(idx);
        let kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let kdot = k[0] * uh[0][idx] + k[1] * uh[1][idx] + k[2] * uh[2][idx];
        for a in 0..3 {
            out[a][idx] = -mu * (kk * uh[a][idx] + kdot * k[a] / 3.0);
        }
    }
    out
}

/// `mu int |grad u|^2 + |div u|^2 / 3` over the retained modes, which is the
/// work done by the dealiased viscous force.
fn dissipation_from_spectra(ws: &SpectralWorkspace, uh: &[Vec<C64>; 3], mu: f64) -> f64 {
    let n = uh[0].len();
    let mut acc = 0.0;
    for idx in (0..n).filter(|&i| ws.mask()[i]) {
        let k = ws.wavevector(idx);
        let kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let kdot = k[0] * uh[0][idx] + k[1] * uh[1][idx] + k[2] * uh[2][idx];
        acc += kk * (uh[0][idx].norm_sqr() + uh[1][idx].norm_sqr() + uh[2][idx].norm_sqr())
            + kdot.norm_sqr() / 3.0;
    }
    mu * acc * ws.grid.cell_volume() / n as f64
}

/// Instantaneous viscous dissipation rate `int S(grad u) : grad u`.
pub fn dissipation_rate(state: &FluidState, params: &SimParams, ws: &SpectralWorkspace) -> f64 {
    let u = state.velocity();
    dissipation_from_spectra(ws, &spectra(ws, &u), params.mu)
}

/// Full right-hand side with its physical decomposition.
pub fn eval_rhs(state: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> Result<RhsBundle> {
    check_density(&state.rho.values, state.shape(), state.time)?;
    let shape = state.shape();
    let n = shape.len();
    let em2m = params.epsilon.powf(-2.0 * params.m);
    let f = coriolis_rate(params);
    let rho = &state.rho.values;
    let mom = [0, 1, 2].map(|a| state.mom.comps[a].values.clone());
    let finish = |mut h: [Vec<C64>; 3]| {
        for a in 0..3 {
            clean(ws, &mut h[a], MOM_PARITY[a]);
        }
        vector_from_spectra(ws, &h)
    };

    let convection = finish(convection_spectra(ws, &mom, rho));

    let u = state.velocity();
    let viscous = finish(viscous_spectra(ws, &spectra(ws, &u), params.mu));

    let coriolis = VectorField::new(
        state.mom.comps[1].map(|v| f * v).enforce_parity(),
        state.mom.comps[0].map(|v| -f * v).enforce_parity(),
        ScalarField::zeros(shape, Parity::Odd),
    );

    let law = profile.law;
    let grad_times_rho = |q: Vec<f64>| {
        let qf = ScalarField { shape, values: q, parity: Parity::Even };
        let g = ws.grad(&qf);
        let h: [Vec<C64>; 3] = [0, 1, 2].map(|a| {
            let v: Vec<f64> = (0..n).map(|i| -em2m * rho[i] * g.comps[a].values[i]).collect();
            ws.forward(&v)
        });
        h
    };
    let pressure = finish(grad_times_rho(rho.iter().map(|&r| law.big_p(r)).collect()));
    let mut centrifugal = finish(grad_times_rho(
        profile.rho_tilde.values.iter().map(|&r| law.big_p(r)).collect(),
    ));
    for c in centrifugal.comps.iter_mut() {
        c.values.iter_mut().for_each(|v| *v = -*v);
    }
    let combined = finish(grad_times_rho(
        rho.iter()
            .zip(&profile.rho_tilde.values)
            .map(|(&r, &rt)| potential_gap(law.gamma, r, rt))
            .collect(),
    ));

    let mut dmom = convection.zip_with(&viscous, |a, b| a + b);
    dmom = dmom.zip_with(&coriolis, |a, b| a + b);
    dmom = dmom.zip_with(&combined, |a, b| a + b);

    let mh = spectra(ws, &state.mom);
    let mut dr: Vec<C64> = (0..n)
        .map(|idx| {
            let k = ws.wavevector(idx);
            -I * (k[0] * mh[0][idx] + k[1] * mh[1][idx] + k[2] * mh[2][idx])
        })
        .collect();
    clean(ws, &mut dr, Parity::Even);
    let drho_dt = ScalarField {
        shape,
        values: ws.inverse(&dr),
        parity: Parity::Even,
    };

    Ok(RhsBundle {
        drho_dt,
        dmom_dt: dmom,
        terms: TermBreakdown {
            convection,
            coriolis,
            pressure,
            viscous,
            centrifugal,
        },
    })
}

/// Kinetic and relative-entropy parts of the energy (dissipation left at 0).
pub fn energy_report(state: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> EnergyReport {
    let vol = ws.grid.cell_volume();
    let rho = &state.rho.values;
    let mut kinetic = 0.0;
    for i in 0..rho.len() {
        let m2: f64 = (0..3).map(|a| state.mom.comps[a].values[i].powi(2)).sum();
        kinetic += 0.5 * m2 / rho[i];
    }
    let entropy: f64 = rho
        .iter()
        .zip(&profile.rho_tilde.values)
        .map(|(&r, &rt)| profile.law.entropy_density(r, rt))
        .sum();
    EnergyReport {
        time: state.time,
        kinetic: kinetic * vol,
        entropy: entropy * vol * params.epsilon.powf(-2.0 * params.m),
        cumulative_dissipation: 0.0,
    }
}

/// Geostrophic and anelastic balance residuals on `K = {|x_h| <= 0.8 L}`.
///
/// The density deviation is scaled as `r = (rho - rho_tilde) / eps^{2m-1}`,
/// which reduces to `(rho - rho_tilde) / eps` for `m = 1`.
pub fn diagnostics_geostrophic(state: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> BalanceResiduals {
    let scale = params.epsilon.powf(1.0 - 2.0 * params.m);
    let sigma = state.rho.zip_with(&profile.rho_tilde, |a, b| (a - b) * scale);
    let r_avg = ws.vertical_average(&sigma);
    let big_r = r_avg.zip_with(&profile.pp_plane, |a, b| a * b);
    let u = state.velocity();
    let uh = PlaneVector::new(ws.vertical_average(&u.comps[0]), ws.vertical_average(&u.comps[1]));
    let grad_r = ws.plane_grad(&big_r);
    let geo = grad_r.zip_with(&uh.perp(), |a, b| a + b);
    let flux = PlaneVector::new(
        uh.comps[0].zip_with(&profile.rho_plane, |a, b| a * b),
        uh.comps[1].zip_with(&profile.rho_plane, |a, b| a * b),
    );
    let div: PlaneField = ws.plane_div(&flux);
    let k = ws.grid.analysis_radius();
    BalanceResiduals {
        geostrophic: geo.l2_on_disk(&ws.grid, k),
        divergence: div.l2_on_disk(&ws.grid, k),
    }
}

type Prop = [[C64; 4]; 4];

/// Exact propagator of the constant-coefficient linear part over `tau`,
/// acting on `(sigma, m1, m2, m3)` of a single mode.
fn mode_propagator(k: [f64; 3], a: f64, f: f64, tau: f64) -> Prop {
    // In scaled variables (a sigma, m) the generator is anti-Hermitian;
    // i * generator is Hermitian and is diagonalized.
    let z = C64::default();
    let ik = |x: f64| C64::new(0.0, -a * x);
    let gen = Matrix4::new(
        z,
        ik(k[0]),
        ik(k[1]),
        ik(k[2]),
        ik(k[0]),
        z,
        C64::new(f, 0.0),
        z,
        ik(k[1]),
        C64::new(-f, 0.0),
        z,
        z,
        ik(k[2]),
        z,
        z,
        z,
    );
    let herm = gen * I;
    let eig = herm.symmetric_eigen();
    let v = eig.eigenvectors;
    let phases = Vector4::from_iterator(eig.eigenvalues.iter().map(|&lam| C64::from_polar(1.0, -lam * tau)));
    let e = v * Matrix4::from_diagonal(&phases) * v.adjoint();
    let mut out = [[z; 4]; 4];
    let d = [a, 1.0, 1.0, 1.0];
    for r in 0..4 {
        for c in 0..4 {
            out[r][c] = e[(r, c)] * (d[c] / d[r]);
        }
    }
    out
}

/// Pseudo-spectral integrator for one `(eps, m)` configuration.
pub struct CompressibleSolver<'a> {
    ws: &'a SpectralWorkspace,
    profile: &'a StaticProfile,
    params: SimParams,
    dt: f64,
    c2: f64,
    props: Vec<Option<Prop>>,
    sigma_hat: Vec<C64>,
    mom_hat: [Vec<C64>; 3],
    time: f64,
    mass0: f64,
    dissipated: f64,
    rate: f64,
    steps: u64,
}

impl<'a> CompressibleSolver<'a> {
    pub fn new(ws: &'a SpectralWorkspace, profile: &'a StaticProfile, params: &SimParams, initial: &FluidState) -> Result<Self> {
        params.validate()?;
        if initial.shape() != ws.shape() {
            return Err(Error::Config("initial state does not match the grid".into()));
        }
        check_density(&initial.rho.values, initial.shape(), initial.time)?;
        let c2 = profile.law.dp(profile.horizontal_mean_rho());
        let a = c2.sqrt() / params.mach();
        let f = coriolis_rate(params);
        let half = 0.5 * params.dt;
        let mask = ws.mask();
        let props = (0..ws.shape().len())
            .map(|idx| {
                if !mask[idx] || idx == 0 {
                    None
                } else {
                    Some(mode_propagator(ws.wavevector(idx), a, f, half))
                }
            })
            .collect();

        let sigma = initial.rho.zip_with(&profile.rho_tilde, |r, rt| r - rt);
        let mut sigma_hat = ws.forward(&sigma.values);
        clean(ws, &mut sigma_hat, Parity::Even);
        let mut mom_hat = spectra(ws, &initial.mom);
        for a in 0..3 {
            clean(ws, &mut mom_hat[a], MOM_PARITY[a]);
        }
        let mut s = Self {
            ws,
            profile,
            params: params.clone(),
            dt: params.dt,
            c2,
            props,
            sigma_hat,
            mom_hat,
            time: initial.time,
            mass0: 0.0,
            dissipated: 0.0,
            rate: 0.0,
            steps: 0,
        };
        let st = s.state();
        check_density(&st.rho.values, st.shape(), st.time)?;
        s.mass0 = st.rho.integral(&ws.grid);
        s.rate = dissipation_rate(&st, &s.params, ws);
        Ok(s)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn cumulative_dissipation(&self) -> f64 {
        self.dissipated
    }

    /// Current state in physical space.
    pub fn state(&self) -> FluidState {
        let ws = self.ws;
        let shape = ws.shape();
        let sigma = ws.inverse(&self.sigma_hat);
        let rho = ScalarField {
            shape,
            values: sigma
                .iter()
                .zip(&self.profile.rho_tilde.values)
                .map(|(s, r)| s + r)
                .collect(),
            parity: Parity::Even,
        };
        FluidState {
            rho,
            mom: vector_from_spectra(ws, &self.mom_hat),
            time: self.time,
        }
    }

    fn apply_linear(&mut self) {
        let f = coriolis_rate(&self.params);
        // zero mode: sigma frozen, horizontal momentum rotated by Coriolis
        let (s, c) = (f * 0.5 * self.dt).sin_cos();
        let (m1, m2) = (self.mom_hat[0][0], self.mom_hat[1][0]);
        self.mom_hat[0][0] = m1 * c + m2 * s;
        self.mom_hat[1][0] = -m1 * s + m2 * c;
        for (idx, p) in self.props.iter().enumerate() {
            let Some(p) = p else { continue };
            let v = [
                self.sigma_hat[idx],
                self.mom_hat[0][idx],
                self.mom_hat[1][idx],
                self.mom_hat[2][idx],
            ];
            let mut w = [C64::default(); 4];
            for r in 0..4 {
                w[r] = p[r][0] * v[0] + p[r][1] * v[1] + p[r][2] * v[2] + p[r][3] * v[3];
            }
            self.sigma_hat[idx] = w[0];
            self.mom_hat[0][idx] = w[1];
            self.mom_hat[1][idx] = w[2];
            self.mom_hat[2][idx] = w[3];
        }
    }

    /// Variable-coefficient pressure remainder
    /// `-eps^-2m (rho grad(P(rho) - P(rho_tilde)) - p'(rho_bar) grad sigma)`;
    /// depends on `sigma` only, which the remainder leaves unchanged.
    fn pressure_remainder(&self, rho: &[f64]) -> [Vec<C64>; 3] {
        let ws = self.ws;
        let shape = ws.shape();
        let n = shape.len();
        let em2m = self.params.epsilon.powf(-2.0 * self.params.m);
        let gamma = self.profile.law.gamma;
        let q: Vec<f64> = rho
            .iter()
            .zip(&self.profile.rho_tilde.values)
            .map(|(&r, &rt)| potential_gap(gamma, r, rt))
            .collect();
        let qh = ws.forward(&q);
        let mut out: [Vec<C64>; 3] = [vec![], vec![], vec![]];
        for a in 0..3 {
            let d: Vec<C64> = qh
                .iter()
                .enumerate()
                .map(|(idx, &c)| I * ws.wavevector(idx)[a] * c)
                .collect();
            let g = ws.inverse(&d);
            let prod: Vec<f64> = (0..n).map(|i| rho[i] * g[i]).collect();
            let mut h = ws.forward(&prod);
            for (idx, c) in h.iter_mut().enumerate() {
                let ka = ws.wavevector(idx)[a];
                *c = -em2m * (*c - self.c2 * I * ka * self.sigma_hat[idx]);
            }
            out[a] = h;
        }
        out
    }

    /// Convection + viscosity; returns the velocity maximum for the CFL check.
    fn momentum_tendency(&self, mom_hat: &[Vec<C64>; 3], rho: &[f64], pressure: &[Vec<C64>; 3]) -> ([Vec<C64>; 3], f64) {
        let ws = self.ws;
        let mom = [0, 1, 2].map(|a| ws.inverse(&mom_hat[a]));
        let n = rho.len();
        let mut conv = convection_spectra(ws, &mom, rho);
        let mut umax: f64 = 0.0;
        let u: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
            let v: Vec<f64> = (0..n).map(|i| mom[a][i] / rho[i]).collect();
            v
        });
        for i in 0..n {
            umax = umax.max(u[0][i].abs()).max(u[1][i].abs()).max(u[2][i].abs());
        }
        let uh = [0, 1, 2].map(|a| ws.forward(&u[a]));
        let visc = viscous_spectra(ws, &uh, self.params.mu);
        for a in 0..3 {
            for idx in 0..n {
                conv[a][idx] += visc[a][idx] + pressure[a][idx];
            }
            clean(ws, &mut conv[a], MOM_PARITY[a]);
        }
        (conv, umax)
    }

    /// Advance by one step of size `dt`.
    pub fn step(&mut self) -> Result<()> {
        let ws = self.ws;
        let dt = self.dt;
        self.apply_linear();

        let sigma = ws.inverse(&self.sigma_hat);
        let rho: Vec<f64> = sigma
            .iter()
            .zip(&self.profile.rho_tilde.values)
            .map(|(s, r)| s + r)
            .collect();
        check_density(&rho, ws.shape(), self.time + 0.5 * dt)?;
        let c_rem = sound_mismatch(&rho, self.profile, self.c2);
        let pressure = self.pressure_remainder(&rho);

        let m0 = self.mom_hat.clone();
        let axpy = |base: &[Vec<C64>; 3], k: &[Vec<C64>; 3], h: f64| -> [Vec<C64>; 3] {
            [0, 1, 2].map(|a| base[a].iter().zip(&k[a]).map(|(x, y)| x + y * h).collect())
        };
        let (k1, umax) = self.momentum_tendency(&m0, &rho, &pressure);
        let (limit, term) = limit_from(umax, c_rem, self.c2, &self.params, ws);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, limit, term });
        }
        let (k2, _) = self.momentum_tendency(&axpy(&m0, &k1, 0.5 * dt), &rho, &pressure);
        let (k3, _) = self.momentum_tendency(&axpy(&m0, &k2, 0.5 * dt), &rho, &pressure);
        let (k4, _) = self.momentum_tendency(&axpy(&m0, &k3, dt), &rho, &pressure);
        for a in 0..3 {
            for idx in 0..m0[a].len() {
                self.mom_hat[a][idx] =
                    m0[a][idx] + (k1[a][idx] + (k2[a][idx] + k3[a][idx]) * 2.0 + k4[a][idx]) * (dt / 6.0);
            }
        }

        self.apply_linear();
        ws.project_parity_spectrum(&mut self.sigma_hat, Parity::Even);
        for a in 0..3 {
            ws.project_parity_spectrum(&mut self.mom_hat[a], MOM_PARITY[a]);
        }
        self.time += dt;
        self.steps += 1;

        let st = self.state();
        check_density(&st.rho.values, st.shape(), self.time)?;
        let rate = dissipation_rate(&st, &self.params, ws);
        self.dissipated += 0.5 * dt * (self.rate + rate);
        self.rate = rate;
        Ok(())
    }

    pub fn diagnostics(&self) -> DiagnosticsRow {
        let st = self.state();
        let mut energy = energy_report(&st, self.profile, &self.params, self.ws);
        energy.cumulative_dissipation = self.dissipated;
        let mass = st.rho.integral(&self.ws.grid);
        DiagnosticsRow {
            energy,
            mass_defect: (mass - self.mass0) / self.mass0,
            balance: diagnostics_geostrophic(&st, self.profile, &self.params, self.ws),
        }
    }

    /// Integrate `n_steps` steps, recording every `cadence` steps (and at the start).
    pub fn run_steps(&mut self, n_steps: usize, cadence: usize) -> Result<Trajectory> {
        if cadence == 0 || !n_steps.is_multiple_of(cadence) {
            return Err(Error::Config(format!(
                "output cadence {cadence} must divide the step count {n_steps}"
            )));
        }
        let mut traj = Trajectory {
            snapshots: vec![self.state()],
            diagnostics: vec![self.diagnostics()],
        };
        for n in 1..=n_steps {
            self.step()?;
            if n % cadence == 0 {
                traj.snapshots.push(self.state());
                traj.diagnostics.push(self.diagnostics());
                debug!("t = {:.4}: total energy {:.6e}", self.time, traj.diagnostics.last().unwrap().energy.total());
            }
        }
        Ok(traj)
    }
}

/// Number of steps of size `dt` covering `t_end`; errors when `dt` does not
/// divide `t_end` to round-off.
pub fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    let n = (t_end / dt).round();
    if ((n * dt) - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::Config(format!("dt = {dt} does not divide t_end = {t_end}")));
    }
    Ok(n as usize)
}

/// Integrate from `initial` to `params.t_end`.
pub fn run(initial: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace, cadence: usize) -> Result<Trajectory> {
    let n = step_count(params.t_end, params.dt)?;
    let mut solver = CompressibleSolver::new(ws, profile, params, initial)?;
    solver.run_steps(n, cadence)
}

/// Single step from a physical state (builds the propagators; use
/// [`CompressibleSolver`] for repeated stepping).
pub fn step(state: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> Result<FluidState> {
    let mut s = CompressibleSolver::new(ws, profile, params, state)?;
    s.step()?;
    Ok(s.state())
}
