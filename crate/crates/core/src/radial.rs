//! Radially symmetric limit equation for `m = 1`:
//!
//! ```text
//! d_t (r - div_h(rho_t grad_h R)) + mu Delta_h^2 R = 0,   R = P'(rho_t) r,
//! ```
//!
//! discretized on a cell-centered mesh in `s = |x_h|`.
//!
//! With `W = diag(s_j ds)` and `D = diag(P'_j)`, the flux-form operator obeys
//! `W L = -K D` for a symmetric stiffness `K`. Multiplying the equation by
//! `D W` gives the symmetric pencil
//!
//! ```text
//! M_A dr/dt = -mu M_B r,   M_A = D W + D K D,   M_B = D K0 W^-1 K0 D,
//! ```
//!
//! where `K0` is `K` with `rho_t = 1`. `M_A` is tridiagonal and SPD, `M_B`
//! pentadiagonal and positive semidefinite, and `1/2 r^T M_A r` is the energy
//! functional `1/2 int (P' r^2 + rho_t |d_s R|^2) s ds`.

use log::warn;

use crate::error::{Error, Result};
use crate::grid::{PlaneField, PlaneVector, SlabGrid};
use crate::io::{fmt_num, CsvTable};
use crate::spectral::SpectralWorkspace;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialMesh {
    pub ds: f64,
    pub nodes: Vec<f64>,
}

impl RadialMesh {
    pub fn new(ns: usize, s_max: f64) -> Result<Self> {
        if ns < 4 || !(s_max > 0.0) {
            return Err(Error::Config(format!("radial mesh needs ns >= 4 and s_max > 0, got {ns}, {s_max}")));
        }
        let ds = s_max / ns as f64;
        Ok(Self {
            ds,
            nodes: (0..ns).map(|j| (j as f64 + 0.5) * ds).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn s_max(&self) -> f64 {
        self.ds * self.nodes.len() as f64
    }

    /// Face `f` sits at `f * ds`, between nodes `f - 1` and `f`.
    pub fn face(&self, f: usize) -> f64 {
        f as f64 * self.ds
    }
}

/// Condition at `s = s_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterBoundary {
    /// `r = 0` at `s_max` through an odd ghost node.
    Dirichlet,
    /// No flux through `s_max`; constants are steady.
    ZeroFlux,
}

/// Symmetric banded matrix; `bands[d][i]` holds entry `(i, i + d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bands: Vec<Vec<f64>>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bands: (0..=bw).map(|d| vec![0.0; n.saturating_sub(d)]).collect(),
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.bands.get(b - a).map_or(0.0, |band| band[a])
    }

    fn add(&mut self, i: usize, j: usize, v: f64) {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        self.bands[b - a][a] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.bands[0].iter().zip(x).map(|(a, b)| a * b).collect();
        for (d, band) in self.bands.iter().enumerate().skip(1) {
            for (i, &a) in band.iter().enumerate() {
                y[i] += a * x[i + d];
                y[i + d] += a * x[i];
            }
        }
        y
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `self + c * other`.
    pub fn plus(&self, other: &SymBand, c: f64) -> SymBand {
        let bw = self.bandwidth().max(other.bandwidth());
        let mut out = SymBand::zeros(self.n, bw);
        for m in [(self, 1.0), (other, c)] {
            for (d, band) in m.0.bands.iter().enumerate() {
                for (i, &a) in band.iter().enumerate() {
                    out.bands[d][i] += m.1 * a;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Banded Cholesky `M = G G^T` with `G` lower triangular.
    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bandwidth());
        // g[i][d] = G(i, i - d)
        let mut g = vec![vec![0.0; bw + 1]; n];
        for i in 0..n {
            for d in (0..=bw.min(i)).rev() {
                let j = i - d;
                let mut v = self.get(i, j);
                for k in (i.saturating_sub(bw).max(j.saturating_sub(bw)))..j {
                    v -= g[i][i - k] * g[j][j - k];
                }
                if d == 0 {
                    if !(v > 0.0) {
                        return Err(Error::Solver(format!("banded Cholesky: non-positive pivot {v:e} at row {i}")));
                    }
                    g[i][0] = v.sqrt();
                } else {
                    g[i][d] = v / g[j][0];
                }
            }
        }
        Ok(BandCholesky { g, bw })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    g: Vec<Vec<f64>>,
    bw: usize,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.g.len();
        let mut y = b.to_vec();
        for i in 0..n {
            for d in 1..=self.bw.min(i) {
                y[i] -= self.g[i][d] * y[i - d];
            }
            y[i] /= self.g[i][0];
        }
        for i in (0..n).rev() {
            for d in 1..=self.bw.min(n - 1 - i) {
                y[i] -= self.g[i + d][d] * y[i + d];
            }
            y[i] /= self.g[i][0];
        }
        y
    }
}

/// Values `r_j` and `R_j = P'(rho_t(s_j)) r_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    pub r: Vec<f64>,
    pub big_r: Vec<f64>,
}

impl RadialField {
    pub fn from_r(r: Vec<f64>, ops: &RadialOperators) -> Self {
        let big_r = r.iter().zip(&ops.pp).map(|(a, b)| a * b).collect();
        Self { r, big_r }
    }

    pub fn zeros(ops: &RadialOperators) -> Self {
        Self::from_r(vec![0.0; ops.mesh.len()], ops)
    }

    /// `|r|` at the outermost node relative to `max |r|`.
    pub fn tail_ratio(&self) -> f64 {
        let max = self.r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if max == 0.0 {
            0.0
        } else {
            self.r.last().map_or(0.0, |v| v.abs()) / max
        }
    }
}

/// Discrete operators of the limit equation on one mesh.
#[derive(Debug, Clone)]
pub struct RadialOperators {
    pub mesh: RadialMesh,
    pub boundary: OuterBoundary,
    pub mu: f64,
    /// `rho_t` at the nodes.
    pub rho: Vec<f64>,
    /// `P'(rho_t)` at the nodes.
    pub pp: Vec<f64>,
    stiff_rho: SymBand,
    /// `M_A`.
    pub mass: SymBand,
    /// `M_B` (without the factor `mu`).
    pub bilap: SymBand,
}

fn stiffness(mesh: &RadialMesh, rho: &dyn Fn(f64) -> f64, boundary: OuterBoundary) -> SymBand {
    let n = mesh.len();
    let mut k = SymBand::zeros(n, 1);
    for f in 1..n {
        let sf = mesh.face(f);
        let c = sf * rho(sf) / mesh.ds;
        k.add(f - 1, f - 1, c);
        k.add(f, f, c);
        k.add(f - 1, f, -c);
    }
    if boundary == OuterBoundary::Dirichlet {
        let sf = mesh.s_max();
        k.add(n - 1, n - 1, 2.0 * sf * rho(sf) / mesh.ds);
    }
    k
}

impl RadialOperators {
    /// Operators for the profile `rho_t(s)` with `P'(rho_t(s)) = pp(s)`.
    pub fn new(
        mesh: RadialMesh,
        rho: impl Fn(f64) -> f64,
        pp: impl Fn(f64) -> f64,
        mu: f64,
        boundary: OuterBoundary,
    ) -> Result<Self> {
        if !(mu >= 0.0) {
            return Err(Error::Config(format!("mu must be non-negative, got {mu}")));
        }
        let n = mesh.len();
        let rho_n: Vec<f64> = mesh.nodes.iter().map(|&s| rho(s)).collect();
        let pp_n: Vec<f64> = mesh.nodes.iter().map(|&s| pp(s)).collect();
        if rho_n.iter().chain(&pp_n).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain("profile must be positive and finite on the mesh".into()));
        }
        let w: Vec<f64> = mesh.nodes.iter().map(|s| s * mesh.ds).collect();
        let stiff_rho = stiffness(&mesh, &rho, boundary);
        let stiff_one = stiffness(&mesh, &|_| 1.0, boundary);

        let mut mass = SymBand::zeros(n, 1);
        for i in 0..n {
            mass.add(i, i, pp_n[i] * w[i]);
            for d in 0..=1 {
                if i + d < n {
                    let v = pp_n[i] * stiff_rho.get(i, i + d) * pp_n[i + d];
                    mass.bands[d][i] += v;
                }
            }
        }
        // K0 W^-1 K0, pentadiagonal
        let mut bilap = SymBand::zeros(n, 2);
        for i in 0..n {
            for d in 0..=2 {
                let j = i + d;
                if j >= n {
                    continue;
                }
                let mut v = 0.0;
                for k in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                    if k + 1 >= j && k <= j + 1 {
                        v += stiff_one.get(i, k) * stiff_one.get(k, j) / w[k];
                    }
                }
                bilap.bands[d][i] = pp_n[i] * v * pp_n[j];
            }
        }
        Ok(Self {
            mesh,
            boundary,
            mu,
            rho: rho_n,
            pp: pp_n,
            stiff_rho,
            mass,
            bilap,
        })
    }

    fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.mesh.nodes.iter().map(move |s| s * self.mesh.ds)
    }

    /// `(L r)_j`, the flux-form `(1/s) d_s(s rho_t d_s(P' r))`.
    pub fn apply_l(&self, r: &[f64]) -> Vec<f64> {
        let big_r: Vec<f64> = r.iter().zip(&self.pp).map(|(a, b)| a * b).collect();
        self.stiff_rho
            .matvec(&big_r)
            .iter()
            .zip(self.weights())
            .map(|(k, w)| -k / w)
            .collect()
    }

    /// `A r = r - L r`.
    pub fn apply_a(&self, r: &[f64]) -> Vec<f64> {
        self.apply_l(r).iter().zip(r).map(|(l, v)| v - l).collect()
    }

    /// `B R = Delta_s^2 R`.
    pub fn apply_b(&self, big_r: &[f64]) -> Vec<f64> {
        let w: Vec<f64> = self.weights().collect();
        let lap = |v: &[f64]| -> Vec<f64> {
            self.apply_k0(v).iter().zip(&w).map(|(k, w)| -k / w).collect()
        };
        lap(&lap(big_r))
    }

    /// `K0 x` assembled from face differences, so constants map to exact zeros
    /// in the interior and under a zero-flux boundary.
    fn apply_k0(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mut out = vec![0.0; n];
        for f in 1..n {
            let flux = self.mesh.face(f) / self.mesh.ds * (x[f] - x[f - 1]);
            out[f - 1] -= flux;
            out[f] += flux;
        }
        if self.boundary == OuterBoundary::Dirichlet {
            out[n - 1] += 2.0 * self.mesh.s_max() / self.mesh.ds * x[n - 1];
        }
        out
    }

    /// `M_B r = D K0 W^-1 K0 D r`.
    pub fn apply_bilap(&self, r: &[f64]) -> Vec<f64> {
        let big: Vec<f64> = r.iter().zip(&self.pp).map(|(a, b)| a * b).collect();
        let inner: Vec<f64> = self.apply_k0(&big).iter().zip(self.weights()).map(|(k, w)| k / w).collect();
        self.apply_k0(&inner).iter().zip(&self.pp).map(|(k, p)| k * p).collect()
    }

    /// Weighted product `sum f g P' s ds`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter()
            .zip(g)
            .zip(self.pp.iter().zip(self.weights()))
            .map(|((a, b), (p, w))| a * b * p * w)
            .sum()
    }

    /// Solve `A r = a`.
    pub fn solve_a(&self, a: &[f64]) -> Result<RadialField> {
        let rhs: Vec<f64> = a
            .iter()
            .zip(self.pp.iter().zip(self.weights()))
            .map(|(v, (p, w))| v * p * w)
            .collect();
        let r = self.mass.cholesky()?.solve(&rhs);
        Ok(RadialField::from_r(r, self))
    }

    /// `1/2 int (P' r^2 + rho_t |d_s R|^2) s ds`.
    pub fn energy(&self, field: &RadialField) -> f64 {
        0.5 * self.mass.quad(&field.r)
    }

    /// `||r||_A`.
    pub fn a_norm(&self, r: &[f64]) -> f64 {
        self.mass.quad(r).sqrt()
    }
}

/// Crank-Nicolson stepper with a cached factorization.
#[derive(Debug, Clone)]
pub struct RadialStepper<'a> {
    ops: &'a RadialOperators,
    dt: f64,
    implicit: BandCholesky,
}

impl<'a> RadialStepper<'a> {
    pub fn new(ops: &'a RadialOperators, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let h = 0.5 * dt * ops.mu;
        Ok(Self {
            ops,
            dt,
            implicit: ops.mass.plus(&ops.bilap, h).cholesky()?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Written as an increment, `r - (M_A + h M_B)^-1 (2 h M_B r)`, so that
    /// near-steady states do not accumulate rounding from `M_A r`.
    pub fn step(&self, field: &RadialField) -> RadialField {
        let c = self.dt * self.ops.mu;
        let rhs: Vec<f64> = self.ops.apply_bilap(&field.r).iter().map(|v| c * v).collect();
        let inc = self.implicit.solve(&rhs);
        let r = field.r.iter().zip(&inc).map(|(a, b)| a - b).collect();
        RadialField::from_r(r, self.ops)
    }
}

/// One Crank-Nicolson step.
pub fn step_radial(field: &RadialField, dt: f64, ops: &RadialOperators) -> Result<RadialField> {
    Ok(RadialStepper::new(ops, dt)?.step(field))
}

#[derive(Debug, Clone)]
pub struct RadialTrajectory {
    pub snapshots: Vec<(f64, RadialField)>,
    /// `(time, energy)` after every step, starting at time 0.
    pub energy: Vec<(f64, f64)>,
}

impl RadialTrajectory {
    /// Largest step-to-step energy increase relative to the current value.
    pub fn max_energy_increase(&self) -> f64 {
        self.energy
            .windows(2)
            .map(|w| (w[1].1 - w[0].1) / w[0].1.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Wide CSV: `time, r_0.., R_0.., energy` at the snapshot times.
    pub fn to_csv(&self, ops: &RadialOperators) -> CsvTable {
        let n = ops.mesh.len();
        let mut header = vec!["time".to_string()];
        header.extend((0..n).map(|j| format!("r_{j}")));
        header.extend((0..n).map(|j| format!("R_{j}")));
        header.push("energy".into());
        let mut table = CsvTable::new(&header);
        for (t, f) in &self.snapshots {
            let mut row = vec![fmt_num(*t)];
            row.extend(f.r.iter().chain(&f.big_r).map(|v| fmt_num(*v)));
            row.push(fmt_num(ops.energy(f)));
            table.push(row);
        }
        table
    }
}

/// March `n_steps` Crank-Nicolson steps, keeping every `cadence`-th state.
pub fn run_radial(initial: &RadialField, ops: &RadialOperators, dt: f64, n_steps: usize, cadence: usize) -> Result<RadialTrajectory> {
    let stepper = RadialStepper::new(ops, dt)?;
    let cadence = cadence.max(1);
    let mut f = initial.clone();
    let mut snapshots = vec![(0.0, f.clone())];
    let mut energy = vec![(0.0, ops.energy(&f))];
    let mut warned = false;
    for n in 1..=n_steps {
        f = stepper.step(&f);
        let t = n as f64 * dt;
        if f.r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite radial state at t = {t}")));
        }
        energy.push((t, ops.energy(&f)));
        if n % cadence == 0 || n == n_steps {
            snapshots.push((t, f.clone()));
        }
        if !warned && f.tail_ratio() > 1e-3 {
            warn!("radial field does not decay toward s_max: tail ratio {:.2e} at t = {t}", f.tail_ratio());
            warned = true;
        }
    }
    Ok(RadialTrajectory { snapshots, energy })
}

/// Averages of `f` over the annuli `[s_j - ds/2, s_j + ds/2]`, by the
/// midpoint rule with two radial and `n_theta` angular points per cell.
pub fn annulus_average(mesh: &RadialMesh, n_theta: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let dth = std::f64::consts::TAU / n_theta as f64;
    mesh.nodes
        .iter()
        .map(|&s| {
            let mut acc = 0.0;
            let mut wsum = 0.0;
            for rad in [s - 0.25 * mesh.ds, s + 0.25 * mesh.ds] {
                for k in 0..n_theta {
                    let th = (k as f64 + 0.5) * dth;
                    acc += rad * f(rad * th.cos(), rad * th.sin());
                }
                wsum += rad * n_theta as f64;
            }
            acc / wsum
        })
        .collect()
}

/// Initial datum from `r0` and `U_0h`: solve `A r(0) = a` with `a` the
/// annulus average of `r0 - curl_h(rho_t U_0h)`.
///
/// The sign follows the weak formulation tested against `grad_h^perp psi`
/// with `(a, b)^perp = (-b, a)`; with it, balanced data
/// `U_0h = grad_h^perp(P' r0)` give back `r(0) = r0`.
pub fn init_from_data(
    r0: &PlaneField,
    u0h: &PlaneVector,
    rho_plane: &PlaneField,
    ops: &RadialOperators,
    ws: &SpectralWorkspace,
) -> Result<RadialField> {
    let flux = PlaneVector::new(
        u0h.comps[0].zip_with(rho_plane, |a, b| a * b),
        u0h.comps[1].zip_with(rho_plane, |a, b| a * b),
    );
    let q = r0.zip_with(&ws.plane_curl(&flux), |a, b| a - b);
    let spec = ws.forward_plane(&q.values);
    let a = annulus_average(&ops.mesh, 48, |x, y| ws.plane_interpolate(&spec, x, y));
    ops.solve_a(&a)
}

/// Smooth interpolant `sum_n c_n cos((n + 1/2) pi s / s_max)` through the
/// nodal values; even in `s` and zero at `s_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSeries {
    s_max: f64,
    coef: Vec<f64>,
}

impl RadialSeries {
    pub fn fit(mesh: &RadialMesh, values: &[f64]) -> Self {
        let n = mesh.len();
        let coef = (0..n)
            .map(|k| {
                2.0 / n as f64
                    * values
                        .iter()
                        .enumerate()
                        .map(|(j, v)| v * ((k as f64 + 0.5) * (j as f64 + 0.5) * std::f64::consts::PI / n as f64).cos())
                        .sum::<f64>()
            })
            .collect();
        Self { s_max: mesh.s_max(), coef }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s >= self.s_max {
            return 0.0;
        }
        let w = std::f64::consts::PI / self.s_max;
        self.coef
            .iter()
            .enumerate()
            .map(|(k, c)| c * ((k as f64 + 0.5) * w * s).cos())
            .sum()
    }

    pub fn slope(&self, s: f64) -> f64 {
        if s >= self.s_max {
            return 0.0;
        }
        let w = std::f64::consts::PI / self.s_max;
        self.coef
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let a = (k as f64 + 0.5) * w;
                -c * a * (a * s).sin()
            })
            .sum()
    }
}

/// Geostrophic velocity `U_h = grad_h^perp R = (-d_2 R, d_1 R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialVelocity {
    pub series: RadialSeries,
}

impl RadialVelocity {
    pub fn at(&self, x: f64, y: f64) -> [f64; 2] {
        let s = x.hypot(y);
        if s == 0.0 {
            return [0.0, 0.0];
        }
        let g = self.series.slope(s) / s;
        [-g * y, g * x]
    }

    pub fn to_plane(&self, grid: &SlabGrid) -> PlaneVector {
        PlaneVector::new(
            PlaneField::from_fn(grid, |x, y| self.at(x, y)[0]),
            PlaneField::from_fn(grid, |x, y| self.at(x, y)[1]),
        )
    }
}

pub fn reconstruct_velocity(field: &RadialField, mesh: &RadialMesh) -> RadialVelocity {
    RadialVelocity {
        series: RadialSeries::fit(mesh, &field.big_r),
    }
}

/// Sample a radial nodal profile on the horizontal grid.
pub fn radial_to_plane(values: &[f64], mesh: &RadialMesh, grid: &SlabGrid) -> PlaneField {
    let series = RadialSeries::fit(mesh, values);
    PlaneField::from_fn(grid, |x, y| series.eval(x.hypot(y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    // gamma = 3 with rho_t = 1 + s^2/2, so P' = 3 rho_t
    fn rho(s: f64) -> f64 {
        1.0 + 0.5 * s * s
    }
    fn pp(s: f64) -> f64 {
        3.0 * rho(s)
    }

    fn ops(ns: usize, bc: OuterBoundary) -> RadialOperators {
        RadialOperators::new(RadialMesh::new(ns, 6.0).unwrap(), rho, pp, 1.0, bc).unwrap()
    }

    /// `r* - L r*` in closed form for `r* = exp(-s^2)`.
    fn manufactured(s: f64) -> (f64, f64) {
        let g = (-s * s).exp();
        let (g1, g2) = (-2.0 * s * g, (4.0 * s * s - 2.0) * g);
        let (f, f1, f2) = (rho(s), s, 1.0);
        let r1 = 3.0 * (f1 * g + f * g1);
        let r2 = 3.0 * (f2 * g + 2.0 * f1 * g1 + f * g2);
        let l = f * r2 + (f / s + f1) * r1;
        (g, g - l)
    }

    #[test]
    fn banded_cholesky_matches_dense() {
        let o = ops(12, OuterBoundary::Dirichlet);
        let m = o.mass.plus(&o.bilap, 0.3);
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let x = m.cholesky().unwrap().solve(&b);
        let dense = m.to_dense().lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..12 {
            assert!((x[i] - dense[i]).abs() < 1e-12 * dense.amax());
        }
        let mut bad = SymBand::zeros(3, 1);
        bad.add(0, 0, -1.0);
        assert!(matches!(bad.cholesky(), Err(Error::Solver(_))));
    }

    #[test]
    fn weighted_operator_identities() {
        let o = ops(24, OuterBoundary::Dirichlet);
        let r: Vec<f64> = o.mesh.nodes.iter().map(|s| (-s * s).exp() * (1.0 + s)).collect();
        // energy = 1/2 (<r, r> + sum rho_f |dR|^2 s_f ds)
        let big: Vec<f64> = r.iter().zip(&o.pp).map(|(a, b)| a * b).collect();
        let mut grad = 0.0;
        for f in 1..24 {
            let sf = o.mesh.face(f);
            grad += rho(sf) * ((big[f] - big[f - 1]) / o.mesh.ds).powi(2) * sf * o.mesh.ds;
        }
        let sf = o.mesh.s_max();
        grad += rho(sf) * (2.0 * big[23] / o.mesh.ds).powi(2) * sf * o.mesh.ds * 0.5;
        let e = o.energy(&RadialField::from_r(r.clone(), &o));
        assert!((e - 0.5 * (o.inner(&r, &r) + grad)).abs() < 1e-12 * e);
        // M_B quadratic form is sum (Delta_s R)^2 s ds
        let mb = o.bilap.matvec(&r);
        for (a, b) in mb.iter().zip(o.apply_bilap(&r)) {
            assert!((a - b).abs() < 1e-10 * mb.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        let lap: Vec<f64> = o.apply_k0(&big).iter().zip(o.weights()).map(|(k, w)| -k / w).collect();
        let diss: f64 = lap.iter().zip(o.weights()).map(|(l, w)| l * l * w).sum();
        assert!((o.bilap.quad(&r) - diss).abs() < 1e-10 * diss);
        // <f, B R> weighted equals r^T M_B r / ... symmetric form
        let br = o.apply_b(&big);
        let lhs = o.inner(&r, &br);
        assert!((lhs - o.bilap.quad(&r)).abs() < 1e-10 * lhs.abs());
    }

    proptest! {
        #[test]
        fn a_is_spd_in_weighted_product(
            f in proptest::collection::vec(-1.0f64..1.0, 16),
            g in proptest::collection::vec(-1.0f64..1.0, 16),
        ) {
            let o = ops(16, OuterBoundary::Dirichlet);
            let fag = o.inner(&f, &o.apply_a(&g));
            let gaf = o.inner(&g, &o.apply_a(&f));
            prop_assert!((fag - gaf).abs() <= 1e-10 * (fag.abs() + 1.0));
            let faf = o.inner(&f, &o.apply_a(&f));
            let ff = o.inner(&f, &f);
            prop_assert!(faf >= ff * (1.0 - 1e-12));
        }

        #[test]
        fn crank_nicolson_contracts_in_a_norm(
            r in proptest::collection::vec(-1.0f64..1.0, 16),
            dt in 1e-4f64..10.0,
        ) {
            let o = ops(16, OuterBoundary::Dirichlet);
            let f0 = RadialField::from_r(r, &o);
            let f1 = step_radial(&f0, dt, &o).unwrap();
            prop_assert!(o.a_norm(&f1.r) <= o.a_norm(&f0.r) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn manufactured_init_converges_at_second_order() {
        let mut errs = Vec::new();
        for ns in [32, 64, 128] {
            let o = ops(ns, OuterBoundary::Dirichlet);
            let a: Vec<f64> = o.mesh.nodes.iter().map(|&s| manufactured(s).1).collect();
            let r = o.solve_a(&a).unwrap();
            let diff: Vec<f64> = o.mesh.nodes.iter().zip(&r.r).map(|(&s, v)| v - manufactured(s).0).collect();
            errs.push(o.inner(&diff, &diff).sqrt());
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((1.8..2.3).contains(&rate), "{errs:?}");
        }
        let o = ops(16, OuterBoundary::Dirichlet);
        assert!(o.solve_a(&[0.0; 16]).unwrap().r.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn init_refinement_agrees() {
        // the same planar datum through annulus averages at ns, 2ns, 4ns
        let q = |x: f64, y: f64| (-(x * x + y * y)).exp() * (1.0 + 0.3 * x);
        let sols: Vec<(RadialOperators, RadialField)> = [32, 64, 128]
            .iter()
            .map(|&ns| {
                let o = ops(ns, OuterBoundary::Dirichlet);
                let a = annulus_average(&o.mesh, 64, q);
                let r = o.solve_a(&a).unwrap();
                (o, r)
            })
            .collect();
        let diff = |c: &(RadialOperators, RadialField), f: &(RadialOperators, RadialField)| {
            let fine = RadialSeries::fit(&f.0.mesh, &f.1.r);
            let d: Vec<f64> = c.0.mesh.nodes.iter().zip(&c.1.r).map(|(&s, v)| v - fine.eval(s)).collect();
            c.0.inner(&d, &d).sqrt()
        };
        let d1 = diff(&sols[0], &sols[1]);
        let d2 = diff(&sols[1], &sols[2]);
        assert!(d1 < 1e-2 && d1 / d2 > 3.0, "{d1} {d2}");
    }

    #[test]
    fn constant_big_r_is_steady() {
        // gamma = 2: P' = 2 exactly
        let mesh = RadialMesh::new(32, 6.0).unwrap();
        let o = RadialOperators::new(mesh, rho, |_| 2.0, 1.0, OuterBoundary::ZeroFlux).unwrap();
        let r = vec![1.0; 32];
        let f0 = RadialField::from_r(r, &o);
        assert!(o.apply_b(&[2.0; 32]).iter().all(|v| *v == 0.0));
        let traj = run_radial(&f0, &o, 0.1, 50, 10).unwrap();
        let last = &traj.snapshots.last().unwrap().1;
        for (a, b) in last.r.iter().zip(&f0.r) {
            assert!((a - b).abs() <= 1e-12, "{}", a - b);
        }
        let z = RadialField::zeros(&o);
        assert_eq!(step_radial(&z, 0.1, &o).unwrap(), z);
    }

    #[test]
    fn slowest_mode_decay_matches_eigen_oracle() {
        let o = ops(64, OuterBoundary::Dirichlet);
        let a = o.mass.to_dense();
        let b = o.bilap.to_dense();
        let chol = a.clone().cholesky().unwrap();
        let l = chol.l();
        let linv = l.clone().try_inverse().unwrap();
        let s = &linv * &b * linv.transpose();
        let eig = nalgebra::SymmetricEigen::new(0.5 * (&s + s.transpose()));
        let (k, lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let y = eig.eigenvectors.column(k).into_owned();
        let v: DMatrix<f64> = linv.transpose() * DMatrix::from_column_slice(64, 1, y.as_slice());
        let f0 = RadialField::from_r(v.column(0).iter().copied().collect(), &o);
        let t_end = 1.0 / lambda;
        let n = 400;
        let traj = run_radial(&f0, &o, t_end / n as f64, n, n).unwrap();
        let f1 = &traj.snapshots.last().unwrap().1;
        let amp = o.inner(&f1.r, &f0.r) / o.inner(&f0.r, &f0.r);
        let expected = (-1.0f64).exp();
        assert!((amp - expected).abs() < 0.01 * expected, "{amp} vs {expected}");
    }

    #[test]
    fn energy_decays_by_the_discrete_identity() {
        let o = ops(48, OuterBoundary::Dirichlet);
        let r: Vec<f64> = o.mesh.nodes.iter().map(|s| (-s * s).exp() * (2.0 - s).cos()).collect();
        let dt = 0.05;
        let traj = run_radial(&RadialField::from_r(r, &o), &o, dt, 40, 1).unwrap();
        assert!(traj.max_energy_increase() <= 1e-12);
        for w in traj.snapshots.windows(2) {
            let (a, b) = (&w[0].1, &w[1].1);
            let sum: Vec<f64> = a.r.iter().zip(&b.r).map(|(x, y)| x + y).collect();
            let predicted = -0.25 * dt * o.mu * o.bilap.quad(&sum);
            let actual = o.energy(b) - o.energy(a);
            assert!((actual - predicted).abs() <= 1e-12 * o.energy(a));
        }
        assert_eq!(traj.to_csv(&o).header().len(), 2 + 2 * 48);
    }

    #[test]
    fn time_and_space_refinement() {
        let run = |ns: usize, dt: f64| {
            let o = ops(ns, OuterBoundary::Dirichlet);
            let r: Vec<f64> = o.mesh.nodes.iter().map(|s| (-s * s).exp()).collect();
            let n = (0.5 / dt).round() as usize;
            let traj = run_radial(&RadialField::from_r(r, &o), &o, dt, n, n).unwrap();
            (o.mesh.clone(), traj.snapshots.last().unwrap().1.r.clone())
        };
        let sols = [run(32, 0.02), run(64, 0.01), run(128, 0.005)];
        let diff = |c: &(RadialMesh, Vec<f64>), f: &(RadialMesh, Vec<f64>)| {
            let fine = RadialSeries::fit(&f.0, &f.1);
            c.0.nodes
                .iter()
                .zip(&c.1)
                .map(|(&s, v)| (v - fine.eval(s)).powi(2) * s * c.0.ds)
                .sum::<f64>()
                .sqrt()
        };
        let (d1, d2) = (diff(&sols[0], &sols[1]), diff(&sols[1], &sols[2]));
        assert!(d1 / d2 > 3.0, "{d1} {d2}");
    }

    const NS: usize = 256;
    #[test]
    fn velocity_reconstruction() {
        let mesh = RadialMesh::new(NS, 6.0).unwrap();
        let o = ops(NS, OuterBoundary::Dirichlet);
        let z = reconstruct_velocity(&RadialField::zeros(&o), &mesh);
        assert_eq!(z.at(0.3, -1.2), [0.0, 0.0]);

        // R = s^2/2 inside a flat window
        let win = |s: f64| 1.0 - crate::spectral::smooth_ramp((s - 3.0) / 2.0);
        let big: Vec<f64> = mesh.nodes.iter().map(|&s| 0.5 * s * s * win(s)).collect();
        let field = RadialField { r: vec![0.0; NS], big_r: big };
        let u = reconstruct_velocity(&field, &mesh);
        for (x, y) in [(0.5, 0.2), (-1.0, 1.5), (2.0, -2.0), (0.0, 2.9)] {
            let v = u.at(x, y);
            let s = f64::hypot(x, y);
            assert!((v[0].hypot(v[1]) - s).abs() < 1e-6, "{x} {y}: {}", v[0].hypot(v[1]) - s);
            assert!((v[0] * x + v[1] * y).abs() < 1e-12);
        }
    }

    #[test]
    fn tangency_circle_constancy_and_zero_divergence() {
        let o = ops(64, OuterBoundary::Dirichlet);
        let r: Vec<f64> = o.mesh.nodes.iter().map(|s| (-s * s / 2.0).exp()).collect();
        let u = reconstruct_velocity(&RadialField::from_r(r, &o), &o.mesh);
        let h = 1e-5;
        for s in [0.3, 1.0, 2.2, 4.0] {
            let mag0 = {
                let v = u.at(s, 0.0);
                v[0].hypot(v[1])
            };
            for k in 0..16 {
                let th = k as f64 * 0.41;
                let (x, y) = (s * th.cos(), s * th.sin());
                let v = u.at(x, y);
                let mag = v[0].hypot(v[1]);
                assert!((v[0] * x + v[1] * y).abs() <= 1e-8 * mag * s);
                assert!((mag - mag0).abs() <= 1e-8 * mag0.max(1.0));
                let div = (u.at(x + h, y)[0] - u.at(x - h, y)[0] + u.at(x, y + h)[1] - u.at(x, y - h)[1]) / (2.0 * h);
                assert!(div.abs() <= 1e-8, "{div}");
            }
        }
    }

    #[test]
    fn planar_resampling_round_trip() {
        let o = ops(64, OuterBoundary::Dirichlet);
        let r: Vec<f64> = o.mesh.nodes.iter().map(|s| (-s * s).exp() * (1.0 + s)).collect();
        let series = RadialSeries::fit(&o.mesh, &r);
        let back = annulus_average(&RadialMesh { ds: 0.0, nodes: o.mesh.nodes.clone() }, 16, |x, y| series.eval(x.hypot(y)));
        for (a, b) in back.iter().zip(&r) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn balanced_planar_data_are_recovered() {
        use crate::grid::SlabGrid;
        let grid = SlabGrid::new(64, 64, 4, 8.0).unwrap();
        let ws = SpectralWorkspace::new(&grid);
        let o = RadialOperators::new(RadialMesh::new(48, 6.0).unwrap(), rho, pp, 1.0, OuterBoundary::Dirichlet).unwrap();
        let r0 = |s: f64| 0.1 * (-s * s).exp();
        let r0p = PlaneField::from_fn(&grid, |x, y| r0(x.hypot(y)));
        let big = PlaneField::from_fn(&grid, |x, y| pp(x.hypot(y)) * r0(x.hypot(y)));
        let u0 = ws.plane_perp_grad(&big);
        let rho_p = PlaneField::from_fn(&grid, |x, y| rho(x.hypot(y)));
        let f = init_from_data(&r0p, &u0, &rho_p, &o, &ws).unwrap();
        let err = o.mesh.nodes.iter().zip(&f.r).fold(0.0f64, |m, (&s, v)| m.max((v - r0(s)).abs()));
        assert!(err < 2e-3 * 0.1, "{err}");
        let zero = PlaneField::zeros(64, 64);
        let z = init_from_data(&zero, &PlaneVector::zeros(64, 64), &rho_p, &o, &ws).unwrap();
        assert!(z.r.iter().all(|v| *v == 0.0));
    }
}
