//! Truncated slab domain, grids and field containers.
//!
//! The horizontal plane is truncated to the periodic box `[-L, L)^2`; the
//! vertical direction is the period-2 torus `[-1, 1)`. Complete slip on the
//! physical layer is encoded by vertical parity: density and horizontal
//! velocity are even in `x3`, the vertical velocity is odd.
//!
//! Arrays are stored x-fastest: `idx = i + nx * (j + ny * k)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Vertical measure of the torus `[-1, 1)`.
pub const VERTICAL_PERIOD: f64 = 2.0;

/// All scaling and physical parameters of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Rossby scale.
    pub epsilon: f64,
    /// Mach exponent: the Mach number is `epsilon^m`.
    pub m: f64,
    /// Adiabatic exponent of `p = rho^gamma`.
    pub gamma: f64,
    /// Shear viscosity.
    pub mu: f64,
    /// Horizontal half-width `L` of the box.
    pub half_width: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Cut-off exponent for the localization `chi_eps`.
    pub alpha: f64,
    /// Mollification scale.
    pub delta: f64,
    /// Coriolis term on/off. Off is only used for cross-checks against the
    /// incompressible planar solver.
    pub rotation: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            m: 1.0,
            gamma: 2.0,
            mu: 0.1,
            half_width: PI,
            nx: 64,
            ny: 64,
            nz: 8,
            dt: 1e-3,
            t_end: 1.0,
            alpha: 0.1,
            delta: 0.05,
            rotation: true,
        }
    }
}

/// Which asymptotic result an experiment is probing; used only for
/// hypothesis warnings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hypotheses {
    /// `m >> 1`, planar incompressible limit (needs `gamma > 3/2`).
    Anisotropic,
    /// `m = 1`, radial linear limit (needs `gamma > 3`).
    Isotropic,
    None,
}

impl SimParams {
    /// `epsilon^m`.
    pub fn mach(&self) -> f64 {
        self.epsilon.powf(self.m)
    }

    /// Hard invariants. Violations are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("mu", self.mu),
            ("dt", self.dt),
            ("half_width", self.half_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.m >= 1.0) {
            return Err(Error::Config(format!("m must be >= 1, got {}", self.m)));
        }
        if !(self.gamma > 1.0) {
            return Err(Error::Config(format!("gamma must be > 1, got {}", self.gamma)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Config(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if !(self.alpha > 0.0) || !(self.delta > 0.0) {
            return Err(Error::Config("alpha and delta must be positive".into()));
        }
        for (name, n) in [("nx", self.nx), ("ny", self.ny), ("nz", self.nz)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Config(format!("{name} must be even and >= 4, got {n}")));
            }
        }
        Ok(())
    }

    /// Soft checks against the parameter ranges in which each singular limit is
    /// known to hold. Runs outside them are allowed and only produce warnings.
    pub fn hypothesis_warnings(&self, h: Hypotheses) -> Vec<String> {
        let mut out = Vec::new();
        match h {
            Hypotheses::Anisotropic => {
                if self.gamma <= 1.5 {
                    out.push(format!("gamma = {} <= 3/2 (planar-limit hypothesis)", self.gamma));
                }
                if self.m <= 10.0 {
                    out.push(format!(
                        "m = {} <= 10: planar-limit convergence is tested as a trend only",
                        self.m
                    ));
                }
            }
            Hypotheses::Isotropic => {
                if self.gamma <= 3.0 {
                    out.push(format!("gamma = {} <= 3 (radial-limit hypothesis)", self.gamma));
                }
                if (self.m - 1.0).abs() > 1e-12 {
                    out.push(format!("m = {} but the radial limit needs m = 1", self.m));
                }
            }
            Hypotheses::None => {}
        }
        out
    }
}

/// Parity class in `x3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn code(self) -> u8 {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Parity::Even),
            1 => Ok(Parity::Odd),
            _ => Err(Error::Format(format!("unknown parity code {c}"))),
        }
    }

    /// Parity after one `x3` derivative.
    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    /// Index of the node mirrored through `x3 = 0`.
    #[inline]
    pub fn reflect_k(&self, k: usize) -> usize {
        (self.nz - k) % self.nz
    }
}

/// Discrete periodic slab with its wavenumber tables.
#[derive(Debug, Clone)]
pub struct SlabGrid {
    pub shape: Shape,
    pub half_width: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Wavenumbers in FFT order (`0, 1, .., n/2-1, -n/2, .., -1` times the base).
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
    /// Vertical wavenumbers `pi * k`.
    pub kz: Vec<f64>,
    /// Same tables with the Nyquist entry zeroed, used for odd derivatives.
    pub kx_d: Vec<f64>,
    pub ky_d: Vec<f64>,
    pub kz_d: Vec<f64>,
}

fn fft_wavenumbers(n: usize, base: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
            s as f64 * base
        })
        .collect()
}

fn without_nyquist(k: &[f64]) -> Vec<f64> {
    let mut out = k.to_vec();
    let n = out.len();
    out[n / 2] = 0.0;
    out
}

impl SlabGrid {
    pub fn new(nx: usize, ny: usize, nz: usize, half_width: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Config(format!("{name} must be even and >= 4, got {n}")));
            }
        }
        if !(half_width > 0.0) {
            return Err(Error::Config(format!("half_width must be positive, got {half_width}")));
        }
        let lx = 2.0 * half_width;
        let dx = lx / nx as f64;
        let dy = lx / ny as f64;
        let dz = VERTICAL_PERIOD / nz as f64;
        let x = (0..nx).map(|i| -half_width + i as f64 * dx).collect();
        let y = (0..ny).map(|j| -half_width + j as f64 * dy).collect();
        let z = (0..nz).map(|k| -1.0 + k as f64 * dz).collect();
        let kx = fft_wavenumbers(nx, 2.0 * PI / lx);
        let ky = fft_wavenumbers(ny, 2.0 * PI / lx);
        let kz = fft_wavenumbers(nz, 2.0 * PI / VERTICAL_PERIOD);
        Ok(Self {
            shape: Shape { nx, ny, nz },
            half_width,
            dx,
            dy,
            dz,
            kx_d: without_nyquist(&kx),
            ky_d: without_nyquist(&ky),
            kz_d: without_nyquist(&kz),
            x,
            y,
            z,
            kx,
            ky,
            kz,
        })
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dz
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Horizontal radius of node `(i, j)`.
    #[inline]
    pub fn radius(&self, i: usize, j: usize) -> f64 {
        self.x[i].hypot(self.y[j])
    }

    /// Radius of the analysis disk `K = {|x_h| <= 0.8 L}`.
    pub fn analysis_radius(&self) -> f64 {
        0.8 * self.half_width
    }
}

/// Discretize the slab described by `params`.
pub fn make_grid(params: &SimParams) -> Result<SlabGrid> {
    params.validate()?;
    SlabGrid::new(params.nx, params.ny, params.nz, params.half_width)
}

/// Real scalar field on the slab with a declared vertical parity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub shape: Shape,
    pub values: Vec<f64>,
    pub parity: Parity,
}

impl ScalarField {
    pub fn zeros(shape: Shape, parity: Parity) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
            parity,
        }
    }

    pub fn constant(shape: Shape, parity: Parity, c: f64) -> Self {
        Self {
            shape,
            values: vec![c; shape.len()],
            parity,
        }
    }

    /// Sample `f(x, y, z)` at the grid nodes.
    pub fn from_fn(grid: &SlabGrid, parity: Parity, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let s = grid.shape;
        let mut values = Vec::with_capacity(s.len());
        for k in 0..s.nz {
            for j in 0..s.ny {
                for i in 0..s.nx {
                    values.push(f(grid.x[i], grid.y[j], grid.z[k]));
                }
            }
        }
        Self {
            shape: s,
            values,
            parity,
        }
    }

    /// Extend a planar field as an `x3`-independent (even) field.
    pub fn from_plane(plane: &PlaneField, nz: usize) -> Self {
        let shape = Shape {
            nx: plane.nx,
            ny: plane.ny,
            nz,
        };
        let mut values = Vec::with_capacity(shape.len());
        for _ in 0..nz {
            values.extend_from_slice(&plane.values);
        }
        Self {
            shape,
            values,
            parity: Parity::Even,
        }
    }

    /// Values mirrored through `x3 = 0`.
    pub fn reflected(&self) -> Vec<f64> {
        let s = self.shape;
        let n2 = s.plane_len();
        let mut out = vec![0.0; s.len()];
        for k in 0..s.nz {
            let kr = s.reflect_k(k);
            out[k * n2..(k + 1) * n2].copy_from_slice(&self.values[kr * n2..(kr + 1) * n2]);
        }
        out
    }

    /// Projection onto the declared parity class.
    pub fn enforce_parity(&self) -> Self {
        self.project(self.parity)
    }

    /// Even or odd part `(v(x3) +- v(-x3)) / 2`, tagged with `parity`.
    pub fn project(&self, parity: Parity) -> Self {
        let sign = parity.sign();
        let refl = self.reflected();
        let values = self
            .values
            .iter()
            .zip(&refl)
            .map(|(a, b)| 0.5 * (a + sign * b))
            .collect();
        Self {
            shape: self.shape,
            values,
            parity,
        }
    }

    /// Largest deviation from the declared reflection symmetry.
    pub fn parity_defect(&self) -> f64 {
        let sign = self.parity.sign();
        self.values
            .iter()
            .zip(self.reflected())
            .map(|(a, b)| (a - sign * b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `sum(v) dV`.
    pub fn integral(&self, grid: &SlabGrid) -> f64 {
        self.values.iter().sum::<f64>() * grid.cell_volume()
    }

    /// Discrete `L^2(Omega)` norm.
    pub fn l2(&self, grid: &SlabGrid) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt()
    }

    /// Discrete `L^2` norm over `K x T^1` with `K = {|x_h| <= radius}`.
    pub fn l2_on_disk(&self, grid: &SlabGrid, radius: f64) -> f64 {
        let s = self.shape;
        let mut acc = 0.0;
        for k in 0..s.nz {
            for j in 0..s.ny {
                for i in 0..s.nx {
                    if grid.radius(i, j) <= radius {
                        let v = self.values[s.idx(i, j, k)];
                        acc += v * v;
                    }
                }
            }
        }
        (acc * grid.cell_volume()).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            values: self.values.iter().map(|&v| f(v)).collect(),
            parity: self.parity,
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self {
            shape: self.shape,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            parity: self.parity,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.shape.idx(i, j, k)]
    }
}

/// Three-component field. Components of a field in the symmetry class are
/// (even, even, odd).
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub comps: [ScalarField; 3],
}

impl VectorField {
    pub fn new(c0: ScalarField, c1: ScalarField, c2: ScalarField) -> Self {
        Self { comps: [c0, c1, c2] }
    }

    /// Zero field in the symmetry class.
    pub fn zeros(shape: Shape) -> Self {
        Self::new(
            ScalarField::zeros(shape, Parity::Even),
            ScalarField::zeros(shape, Parity::Even),
            ScalarField::zeros(shape, Parity::Odd),
        )
    }

    pub fn shape(&self) -> Shape {
        self.comps[0].shape
    }

    pub fn enforce_parity(&self) -> Self {
        Self {
            comps: [
                self.comps[0].enforce_parity(),
                self.comps[1].enforce_parity(),
                self.comps[2].enforce_parity(),
            ],
        }
    }

    /// True when the declared parities are the complete-slip class.
    pub fn is_symmetry_class(&self) -> bool {
        self.comps[0].parity == Parity::Even
            && self.comps[1].parity == Parity::Even
            && self.comps[2].parity == Parity::Odd
    }

    pub fn parity_defect(&self) -> f64 {
        self.comps.iter().map(|c| c.parity_defect()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    pub fn l2(&self, grid: &SlabGrid) -> f64 {
        self.comps
            .iter()
            .map(|c| c.l2(grid).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `<a, b>_{L^2}`.
    pub fn dot(&self, other: &VectorField, grid: &SlabGrid) -> f64 {
        self.comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>())
            .sum::<f64>()
            * grid.cell_volume()
    }

    pub fn zip_with(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self {
            comps: [
                self.comps[0].zip_with(&other.comps[0], f),
                self.comps[1].zip_with(&other.comps[1], f),
                self.comps[2].zip_with(&other.comps[2], f),
            ],
        }
    }

    /// Componentwise product with a scalar field.
    pub fn times(&self, s: &ScalarField) -> Self {
        Self {
            comps: [
                self.comps[0].zip_with(s, |a, b| a * b),
                self.comps[1].zip_with(s, |a, b| a * b),
                self.comps[2].zip_with(s, |a, b| a * b),
            ],
        }
    }
}

/// Field on the horizontal grid (a vertical average or an `x3`-independent
/// quantity).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneField {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl PlaneField {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self {
            nx,
            ny,
            values: vec![0.0; nx * ny],
        }
    }

    pub fn from_fn(grid: &SlabGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let s = grid.shape;
        let mut values = Vec::with_capacity(s.plane_len());
        for j in 0..s.ny {
            for i in 0..s.nx {
                values.push(f(grid.x[i], grid.y[j]));
            }
        }
        Self {
            nx: s.nx,
            ny: s.ny,
            values,
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.idx(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &PlaneField, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            nx: self.nx,
            ny: self.ny,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn l2(&self, grid: &SlabGrid) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_area()).sqrt()
    }

    /// Discrete `L^2` norm over `{|x_h| <= radius}`.
    pub fn l2_on_disk(&self, grid: &SlabGrid, radius: f64) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                if grid.radius(i, j) <= radius {
                    let v = self.at(i, j);
                    acc += v * v;
                }
            }
        }
        (acc * grid.cell_area()).sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Horizontal vector field on the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneVector {
    pub comps: [PlaneField; 2],
}

impl PlaneVector {
    pub fn new(a: PlaneField, b: PlaneField) -> Self {
        Self { comps: [a, b] }
    }

    pub fn zeros(nx: usize, ny: usize) -> Self {
        Self::new(PlaneField::zeros(nx, ny), PlaneField::zeros(nx, ny))
    }

    /// Planar rotation with the convention `(a, b)^perp = (-b, a)`, so that
    /// `b x u` has horizontal part `u_h^perp`.
    pub fn perp(&self) -> Self {
        Self::new(self.comps[1].map(|v| -v), self.comps[0].clone())
    }

    pub fn l2(&self, grid: &SlabGrid) -> f64 {
        self.comps
            .iter()
            .map(|c| c.l2(grid).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn l2_on_disk(&self, grid: &SlabGrid, radius: f64) -> f64 {
        self.comps
            .iter()
            .map(|c| c.l2_on_disk(grid, radius).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn zip_with(&self, other: &PlaneVector, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self::new(
            self.comps[0].zip_with(&other.comps[0], f),
            self.comps[1].zip_with(&other.comps[1], f),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.comps[0].max_abs().max(self.comps[1].max_abs())
    }
}

/// Density and momentum snapshot of the primitive system.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub rho: ScalarField,
    pub mom: VectorField,
    pub time: f64,
}

impl FluidState {
    pub fn shape(&self) -> Shape {
        self.rho.shape
    }

    /// Velocity `mom / rho`.
    pub fn velocity(&self) -> VectorField {
        let inv = self.rho.map(|r| 1.0 / r);
        self.mom.times(&inv)
    }

    /// `(rho - rho_tilde) / epsilon^m`.
    pub fn scaled_deviation(&self, rho_tilde: &ScalarField, params: &SimParams) -> ScalarField {
        let scale = 1.0 / params.mach();
        self.rho.zip_with(rho_tilde, |a, b| (a - b) * scale)
    }

    pub fn parity_defect(&self) -> f64 {
        self.rho.parity_defect().max(self.mom.parity_defect())
    }
}
