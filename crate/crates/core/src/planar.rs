//! Two-dimensional incompressible Navier–Stokes in vorticity form,
//! `d_t w + div_h(U w) = mu Delta_h w`, `U = grad_h^perp psi`, `Delta_h psi = w`.
//!
//! Time stepping is RK4 with an integrating factor for the viscous term, so
//! diffusion is treated exactly.

use crate::error::{Error, Result};
use crate::grid::{PlaneField, PlaneVector, VectorField};
use crate::spectral::{SpectralWorkspace, C64};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarState {
    pub omega: PlaneField,
    pub time: f64,
}

impl PlanarState {
    pub fn new(omega: PlaneField) -> Self {
        Self { omega, time: 0.0 }
    }

    /// Zero-mean stream function.
    pub fn psi(&self, ws: &SpectralWorkspace) -> PlaneField {
        ws.plane_inverse_laplacian(&self.omega)
    }

    pub fn velocity(&self, ws: &SpectralWorkspace) -> PlaneVector {
        ws.plane_perp_grad(&self.psi(ws))
    }

    /// `1/2 ||U||^2`.
    pub fn energy(&self, ws: &SpectralWorkspace) -> f64 {
        0.5 * self.velocity(ws).l2(&ws.grid).powi(2)
    }

    /// `1/2 ||w||^2`.
    pub fn enstrophy(&self, ws: &SpectralWorkspace) -> f64 {
        0.5 * self.omega.l2(&ws.grid).powi(2)
    }
}

/// Initial vorticity from a slab velocity: vertical average of the horizontal
/// components, planar Leray projection, then `curl_h`.
pub fn project_initial(u0: &VectorField, ws: &SpectralWorkspace) -> PlanarState {
    let avg = PlaneVector::new(ws.vertical_average(&u0.comps[0]), ws.vertical_average(&u0.comps[1]));
    let solenoidal = ws.plane_helmholtz(&avg);
    PlanarState::new(ws.plane_curl(&solenoidal))
}

/// Time-stepper with precomputed integrating factors.
pub struct PlanarSolver<'a> {
    ws: &'a SpectralWorkspace,
    mu: f64,
    dt: f64,
    decay: Vec<f64>,
    decay_half: Vec<f64>,
    omega_hat: Vec<C64>,
    time: f64,
}

impl<'a> PlanarSolver<'a> {
    pub fn new(ws: &'a SpectralWorkspace, initial: &PlanarState, mu: f64, dt: f64) -> Result<Self> {
        if !(mu >= 0.0) || dt == 0.0 || !dt.is_finite() {
            return Err(Error::Config(format!("invalid planar step: mu = {mu}, dt = {dt}")));
        }
        let n = ws.grid.shape.plane_len();
        let mut decay = Vec::with_capacity(n);
        let mut decay_half = Vec::with_capacity(n);
        for idx in 0..n {
            let k = ws.plane_wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1];
            decay.push((-mu * kk * dt).exp());
            decay_half.push((-mu * kk * 0.5 * dt).exp());
        }
        let mut omega_hat = ws.forward_plane(&initial.omega.values);
        ws.dealias_plane_spectrum(&mut omega_hat);
        Ok(Self {
            ws,
            mu,
            dt,
            decay,
            decay_half,
            omega_hat,
            time: initial.time,
        })
    }

    pub fn state(&self) -> PlanarState {
        let s = self.ws.grid.shape;
        PlanarState {
            omega: PlaneField {
                nx: s.nx,
                ny: s.ny,
                values: self.ws.inverse_plane(&self.omega_hat),
            },
            time: self.time,
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `-div_h(U w)` (dealiased) and the velocity maximum.
    fn advection(&self, wh: &[C64]) -> (Vec<C64>, f64) {
        let ws = self.ws;
        let n = wh.len();
        let mut u1 = vec![C64::default(); n];
        let mut u2 = vec![C64::default(); n];
        for idx in 0..n {
            let k = ws.plane_wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1];
            if kk > 0.0 {
                let psi = -wh[idx] / kk;
                u1[idx] = -I * k[1] * psi;
                u2[idx] = I * k[0] * psi;
            }
        }
        let u1 = ws.inverse_plane(&u1);
        let u2 = ws.inverse_plane(&u2);
        let w = ws.inverse_plane(wh);
        let umax = u1.iter().chain(&u2).fold(0.0f64, |m, v| m.max(v.abs()));
        let f1 = ws.forward_plane(&u1.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>());
        let f2 = ws.forward_plane(&u2.iter().zip(&w).map(|(a, b)| a * b).collect::<Vec<_>>());
        let mut out: Vec<C64> = (0..n)
            .map(|idx| {
                let k = ws.plane_wavevector(idx);
                -I * (k[0] * f1[idx] + k[1] * f2[idx])
            })
            .collect();
        ws.dealias_plane_spectrum(&mut out);
        (out, umax)
    }

    pub fn step(&mut self) -> Result<()> {
        let dt = self.dt;
        let h = 0.5 * dt;
        let w0 = &self.omega_hat;
        let (a, umax) = self.advection(w0);
        let g = &self.ws.grid;
        let limit = g.dx.min(g.dy) / umax.max(1e-300);
        if dt.abs() > limit {
            return Err(Error::Cfl {
                dt: dt.abs(),
                limit,
                term: "advection",
            });
        }
        let n = w0.len();
        let eh = &self.decay_half;
        let e = &self.decay;
        let wa: Vec<C64> = (0..n).map(|i| (w0[i] + a[i] * h) * eh[i]).collect();
        let (b, _) = self.advection(&wa);
        let wb: Vec<C64> = (0..n).map(|i| w0[i] * eh[i] + b[i] * h).collect();
        let (c, _) = self.advection(&wb);
        let wc: Vec<C64> = (0..n).map(|i| w0[i] * e[i] + c[i] * (dt * eh[i])).collect();
        let (d, _) = self.advection(&wc);
        self.omega_hat = (0..n)
            .map(|i| w0[i] * e[i] + (a[i] * e[i] + (b[i] + c[i]) * (2.0 * eh[i]) + d[i]) * (dt / 6.0))
            .collect();
        self.time += dt;
        Ok(())
    }
}

/// Vorticity tendency `-div_h(U w) + mu Delta_h w`.
pub fn planar_rhs(state: &PlanarState, mu: f64, ws: &SpectralWorkspace) -> PlaneField {
    let solver = PlanarSolver::new(ws, state, mu, 1.0).expect("valid parameters");
    let (mut adv, _) = solver.advection(&solver.omega_hat);
    for (idx, c) in adv.iter_mut().enumerate() {
        let k = ws.plane_wavevector(idx);
        *c -= mu * (k[0] * k[0] + k[1] * k[1]) * solver.omega_hat[idx];
    }
    let s = ws.grid.shape;
    PlaneField {
        nx: s.nx,
        ny: s.ny,
        values: ws.inverse_plane(&adv),
    }
}

/// One step of size `dt`.
pub fn step2d(state: &PlanarState, mu: f64, dt: f64, ws: &SpectralWorkspace) -> Result<PlanarState> {
    let mut s = PlanarSolver::new(ws, state, mu, dt)?;
    s.step()?;
    Ok(s.state())
}

pub const PLANAR_HEADER: [&str; 3] = ["time", "energy", "enstrophy"];

#[derive(Debug, Clone)]
pub struct PlanarTrajectory {
    pub snapshots: Vec<PlanarState>,
    /// `(time, energy, enstrophy)` at every recorded step.
    pub rows: Vec<[f64; 3]>,
}

/// Integrate `n_steps` of size `dt`, recording every `cadence` steps.
pub fn run2d(initial: &PlanarState, mu: f64, dt: f64, n_steps: usize, cadence: usize, ws: &SpectralWorkspace) -> Result<PlanarTrajectory> {
    if cadence == 0 || !n_steps.is_multiple_of(cadence) {
        return Err(Error::Config(format!(
            "output cadence {cadence} must divide the step count {n_steps}"
        )));
    }
    let mut solver = PlanarSolver::new(ws, initial, mu, dt)?;
    let record = |s: PlanarState, t: &mut PlanarTrajectory| {
        t.rows.push([s.time, s.energy(ws), s.enstrophy(ws)]);
        t.snapshots.push(s);
    };
    let mut traj = PlanarTrajectory {
        snapshots: Vec::new(),
        rows: Vec::new(),
    };
    record(solver.state(), &mut traj);
    for n in 1..=n_steps {
        solver.step()?;
        if n % cadence == 0 {
            record(solver.state(), &mut traj);
        }
    }
    Ok(traj)
}

/// Taylor–Green vorticity `2 A sin(kx) sin(ky)` for `U = A (sin kx cos ky, -cos kx sin ky)`.
pub fn taylor_green_vorticity(ws: &SpectralWorkspace, amplitude: f64, k: f64) -> PlaneField {
    PlaneField::from_fn(&ws.grid, |x, y| 2.0 * amplitude * k * (k * x).sin() * (k * y).sin())
}
