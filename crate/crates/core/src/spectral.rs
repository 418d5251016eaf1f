//! Fourier-side operators on the periodic slab.
//!
//! Derivatives use the wavenumber tables with the Nyquist entry removed, so
//! gradient, divergence, Laplacian and the Helmholtz projection are mutually
//! consistent on the discrete side: `div H[v] = 0` holds mode by mode.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{Parity, PlaneField, PlaneVector, ScalarField, Shape, SlabGrid, VectorField};

pub type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

struct AxisPlans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl AxisPlans {
    fn new(planner: &mut FftPlanner<f64>, n: usize) -> Self {
        Self {
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    fn get(&self, inverse: bool) -> &Arc<dyn Fft<f64>> {
        if inverse {
            &self.inv
        } else {
            &self.fwd
        }
    }
}

/// Transform plans, wavenumber tables and the 2/3-rule dealiasing masks.
pub struct SpectralWorkspace {
    pub grid: SlabGrid,
    px: AxisPlans,
    py: AxisPlans,
    pz: AxisPlans,
    mask: Vec<bool>,
    plane_mask: Vec<bool>,
}

fn keep_two_thirds(index: usize, n: usize) -> bool {
    let s = if index < n / 2 {
        index as i64
    } else {
        index as i64 - n as i64
    };
    3 * s.unsigned_abs() < n as u64
}

impl SpectralWorkspace {
    pub fn new(grid: &SlabGrid) -> Self {
        let s = grid.shape;
        let mut planner = FftPlanner::new();
        let px = AxisPlans::new(&mut planner, s.nx);
        let py = AxisPlans::new(&mut planner, s.ny);
        let pz = AxisPlans::new(&mut planner, s.nz);
        let mut mask = Vec::with_capacity(s.len());
        for k in 0..s.nz {
            for j in 0..s.ny {
                for i in 0..s.nx {
                    mask.push(
                        keep_two_thirds(i, s.nx)
                            && keep_two_thirds(j, s.ny)
                            && keep_two_thirds(k, s.nz),
                    );
                }
            }
        }
        let plane_mask = mask[..s.plane_len()].to_vec();
        Self {
            grid: grid.clone(),
            px,
            py,
            pz,
            mask,
            plane_mask,
        }
    }

    pub fn shape(&self) -> Shape {
        self.grid.shape
    }

    fn transform_xy(&self, data: &mut [C64], nz: usize, inverse: bool) {
        let Shape { nx, ny, .. } = self.grid.shape;
        let plane = nx * ny;
        self.px.get(inverse).process(data);
        let mut line = vec![C64::default(); plane];
        let fy = self.py.get(inverse);
        for k in 0..nz {
            let slab = &mut data[k * plane..(k + 1) * plane];
            for j in 0..ny {
                for i in 0..nx {
                    line[i * ny + j] = slab[i + nx * j];
                }
            }
            fy.process(&mut line);
            for j in 0..ny {
                for i in 0..nx {
                    slab[i + nx * j] = line[i * ny + j];
                }
            }
        }
    }

    fn transform3(&self, data: &mut [C64], inverse: bool) {
        let Shape { nx, ny, nz } = self.grid.shape;
        let plane = nx * ny;
        self.transform_xy(data, nz, inverse);
        let mut cols = vec![C64::default(); data.len()];
        for k in 0..nz {
            for p in 0..plane {
                cols[p * nz + k] = data[k * plane + p];
            }
        }
        self.pz.get(inverse).process(&mut cols);
        for k in 0..nz {
            for p in 0..plane {
                data[k * plane + p] = cols[p * nz + k];
            }
        }
    }

    /// Forward 3D transform of a real array (unnormalized).
    pub fn forward(&self, v: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.transform3(&mut data, false);
        data
    }

    /// Inverse 3D transform, normalized, real part.
    pub fn inverse(&self, h: &[C64]) -> Vec<f64> {
        let mut data = h.to_vec();
        self.transform3(&mut data, true);
        let norm = 1.0 / data.len() as f64;
        data.iter().map(|c| c.re * norm).collect()
    }

    pub fn forward_plane(&self, v: &[f64]) -> Vec<C64> {
        let mut data: Vec<C64> = v.iter().map(|&x| C64::new(x, 0.0)).collect();
        self.transform_xy(&mut data, 1, false);
        data
    }

    pub fn inverse_plane(&self, h: &[C64]) -> Vec<f64> {
        let mut data = h.to_vec();
        self.transform_xy(&mut data, 1, true);
        let norm = 1.0 / data.len() as f64;
        data.iter().map(|c| c.re * norm).collect()
    }

    /// Derivative wavenumbers `(kx, ky, kz)` of spectral index `idx`.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let s = self.grid.shape;
        let i = idx % s.nx;
        let j = (idx / s.nx) % s.ny;
        let k = idx / s.plane_len();
        [self.grid.kx_d[i], self.grid.ky_d[j], self.grid.kz_d[k]]
    }

    /// Full (Nyquist-retaining) squared wavenumber of spectral index `idx`.
    #[inline]
    pub fn full_k2(&self, idx: usize) -> f64 {
        let s = self.grid.shape;
        let i = idx % s.nx;
        let j = (idx / s.nx) % s.ny;
        let k = idx / s.plane_len();
        self.grid.kx[i].powi(2) + self.grid.ky[j].powi(2) + self.grid.kz[k].powi(2)
    }

    #[inline]
    pub fn plane_wavevector(&self, idx: usize) -> [f64; 2] {
        let nx = self.grid.shape.nx;
        [self.grid.kx_d[idx % nx], self.grid.ky_d[idx / nx]]
    }

    pub fn dealias_spectrum(&self, h: &mut [C64]) {
        for (c, &keep) in h.iter_mut().zip(&self.mask) {
            if !keep {
                *c = C64::default();
            }
        }
    }

    pub fn dealias_plane_spectrum(&self, h: &mut [C64]) {
        for (c, &keep) in h.iter_mut().zip(&self.plane_mask) {
            if !keep {
                *c = C64::default();
            }
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Parity projection performed on the spectral side: reflection in `x3`
    /// maps vertical index `k` to `-k`.
    pub fn project_parity_spectrum(&self, h: &mut [C64], parity: Parity) {
        let s = self.grid.shape;
        let plane = s.plane_len();
        let sign = if parity == Parity::Even { 1.0 } else { -1.0 };
        for k in 0..=s.nz / 2 {
            let kr = s.reflect_k(k);
            for p in 0..plane {
                let a = h[k * plane + p];
                let b = h[kr * plane + p];
                let even = 0.5 * (a + b * sign);
                h[k * plane + p] = even;
                h[kr * plane + p] = even * sign;
            }
        }
    }

    fn scalar(&self, values: Vec<f64>, parity: Parity) -> ScalarField {
        ScalarField {
            shape: self.grid.shape,
            values,
            parity,
        }
    }

    fn plane(&self, values: Vec<f64>) -> PlaneField {
        PlaneField {
            nx: self.grid.shape.nx,
            ny: self.grid.shape.ny,
            values,
        }
    }

    /// Spectral gradient; the vertical component flips parity.
    pub fn grad(&self, v: &ScalarField) -> VectorField {
        let h = self.forward(&v.values);
        let comp = |axis: usize| {
            let d: Vec<C64> = h
                .iter()
                .enumerate()
                .map(|(idx, &c)| I * self.wavevector(idx)[axis] * c)
                .collect();
            self.inverse(&d)
        };
        VectorField::new(
            self.scalar(comp(0), v.parity),
            self.scalar(comp(1), v.parity),
            self.scalar(comp(2), v.parity.flip()),
        )
    }

    /// Spectral divergence; parity taken from the first component.
    pub fn div(&self, v: &VectorField) -> ScalarField {
        let hs: Vec<Vec<C64>> = v.comps.iter().map(|c| self.forward(&c.values)).collect();
        let d: Vec<C64> = (0..hs[0].len())
            .map(|idx| {
                let k = self.wavevector(idx);
                I * (k[0] * hs[0][idx] + k[1] * hs[1][idx] + k[2] * hs[2][idx])
            })
            .collect();
        self.scalar(self.inverse(&d), v.comps[0].parity)
    }

    pub fn laplacian(&self, v: &ScalarField) -> ScalarField {
        let mut h = self.forward(&v.values);
        for (idx, c) in h.iter_mut().enumerate() {
            let k = self.wavevector(idx);
            *c *= -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]);
        }
        self.scalar(self.inverse(&h), v.parity)
    }

    /// Zero-mean solution of `Delta phi = v - mean(v)`.
    pub fn inverse_laplacian(&self, v: &ScalarField) -> ScalarField {
        let mut h = self.forward(&v.values);
        for (idx, c) in h.iter_mut().enumerate() {
            let k = self.wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            *c = if kk > 0.0 { -*c / kk } else { C64::default() };
        }
        self.scalar(self.inverse(&h), v.parity)
    }

    /// Helmholtz projection onto solenoidal fields. The mean mode is left in
    /// the solenoidal part.
    pub fn helmholtz_project(&self, v: &VectorField) -> VectorField {
        let mut hs: Vec<Vec<C64>> = v.comps.iter().map(|c| self.forward(&c.values)).collect();
        for idx in 0..hs[0].len() {
            let k = self.wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if kk == 0.0 {
                continue;
            }
            let proj = (k[0] * hs[0][idx] + k[1] * hs[1][idx] + k[2] * hs[2][idx]) / kk;
            for (a, h) in hs.iter_mut().enumerate() {
                h[idx] -= proj * k[a];
            }
        }
        VectorField {
            comps: [0, 1, 2].map(|a| self.scalar(self.inverse(&hs[a]), v.comps[a].parity)),
        }
    }

    /// Gradient part `v - H[v]`.
    pub fn helmholtz_complement(&self, v: &VectorField) -> VectorField {
        let h = self.helmholtz_project(v);
        v.zip_with(&h, |a, b| a - b)
    }

    /// Mean over the vertical torus (measure 2).
    pub fn vertical_average(&self, v: &ScalarField) -> PlaneField {
        let s = v.shape;
        let plane = s.plane_len();
        let mut out = vec![0.0; plane];
        for k in 0..s.nz {
            for (o, x) in out.iter_mut().zip(&v.values[k * plane..(k + 1) * plane]) {
                *o += x;
            }
        }
        let inv = 1.0 / s.nz as f64;
        out.iter_mut().for_each(|o| *o *= inv);
        self.plane(out)
    }

    /// Zero-vertical-mean `I[v]` with `d/dx3 I[v] = v - <v>`.
    pub fn vertical_primitive(&self, v: &ScalarField) -> ScalarField {
        let mut h = self.forward(&v.values);
        for (idx, c) in h.iter_mut().enumerate() {
            let kz = self.wavevector(idx)[2];
            *c = if kz != 0.0 { *c / (I * kz) } else { C64::default() };
        }
        self.scalar(self.inverse(&h), v.parity.flip())
    }

    /// Gaussian mollifier: multiplier `exp(-delta^2 |k|^2 / 2)`.
    pub fn mollify(&self, v: &ScalarField, delta: f64) -> ScalarField {
        let mut h = self.forward(&v.values);
        for (idx, c) in h.iter_mut().enumerate() {
            *c *= (-0.5 * delta * delta * self.full_k2(idx)).exp();
        }
        self.scalar(self.inverse(&h), v.parity)
    }

    /// 2/3-rule filtered copy.
    pub fn dealias(&self, v: &ScalarField) -> ScalarField {
        let mut h = self.forward(&v.values);
        self.dealias_spectrum(&mut h);
        self.scalar(self.inverse(&h), v.parity)
    }

    // ---- planar operators ----

    pub fn plane_grad(&self, v: &PlaneField) -> PlaneVector {
        let h = self.forward_plane(&v.values);
        let comp = |axis: usize| {
            let d: Vec<C64> = h
                .iter()
                .enumerate()
                .map(|(idx, &c)| I * self.plane_wavevector(idx)[axis] * c)
                .collect();
            self.plane(self.inverse_plane(&d))
        };
        PlaneVector::new(comp(0), comp(1))
    }

    /// `grad^perp v = (-d2 v, d1 v)`.
    pub fn plane_perp_grad(&self, v: &PlaneField) -> PlaneVector {
        self.plane_grad(v).perp()
    }

    pub fn plane_div(&self, v: &PlaneVector) -> PlaneField {
        let a = self.forward_plane(&v.comps[0].values);
        let b = self.forward_plane(&v.comps[1].values);
        let d: Vec<C64> = (0..a.len())
            .map(|idx| {
                let k = self.plane_wavevector(idx);
                I * (k[0] * a[idx] + k[1] * b[idx])
            })
            .collect();
        self.plane(self.inverse_plane(&d))
    }

    /// `curl_h v = d1 v2 - d2 v1`.
    pub fn plane_curl(&self, v: &PlaneVector) -> PlaneField {
        let a = self.forward_plane(&v.comps[0].values);
        let b = self.forward_plane(&v.comps[1].values);
        let d: Vec<C64> = (0..a.len())
            .map(|idx| {
                let k = self.plane_wavevector(idx);
                I * (k[0] * b[idx] - k[1] * a[idx])
            })
            .collect();
        self.plane(self.inverse_plane(&d))
    }

    /// Zero-mean solution of `Delta_h phi = v - mean(v)`.
    pub fn plane_inverse_laplacian(&self, v: &PlaneField) -> PlaneField {
        let mut h = self.forward_plane(&v.values);
        for (idx, c) in h.iter_mut().enumerate() {
            let k = self.plane_wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1];
            *c = if kk > 0.0 { -*c / kk } else { C64::default() };
        }
        self.plane(self.inverse_plane(&h))
    }

    /// Planar Leray projection.
    pub fn plane_helmholtz(&self, v: &PlaneVector) -> PlaneVector {
        let mut a = self.forward_plane(&v.comps[0].values);
        let mut b = self.forward_plane(&v.comps[1].values);
        for idx in 0..a.len() {
            let k = self.plane_wavevector(idx);
            let kk = k[0] * k[0] + k[1] * k[1];
            if kk == 0.0 {
                continue;
            }
            let proj = (k[0] * a[idx] + k[1] * b[idx]) / kk;
            a[idx] -= proj * k[0];
            b[idx] -= proj * k[1];
        }
        PlaneVector::new(
            self.plane(self.inverse_plane(&a)),
            self.plane(self.inverse_plane(&b)),
        )
    }

    pub fn plane_dealias(&self, v: &PlaneField) -> PlaneField {
        let mut h = self.forward_plane(&v.values);
        self.dealias_plane_spectrum(&mut h);
        self.plane(self.inverse_plane(&h))
    }

    /// Trigonometric interpolation of a planar spectrum at `(x, y)`.
    pub fn plane_interpolate(&self, h: &[C64], x: f64, y: f64) -> f64 {
        let g = &self.grid;
        let Shape { nx, ny, .. } = g.shape;
        let ox = x - g.x[0];
        let oy = y - g.y[0];
        let mut acc = C64::default();
        for j in 0..ny {
            let ky = if j == ny / 2 { 0.0 } else { g.ky[j] };
            let mut row = C64::default();
            for i in 0..nx {
                let kx = if i == nx / 2 { 0.0 } else { g.kx[i] };
                let c = h[i + nx * j];
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                row += c * C64::from_polar(1.0, kx * ox);
            }
            acc += row * C64::from_polar(1.0, ky * oy);
        }
        acc.re / (nx * ny) as f64
    }
}

/// Quintic smoothstep on `[0, 1]`, clamped. Its slope never exceeds 15/8.
pub fn smoothstep5(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

pub fn smoothstep5_slope(t: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return 0.0;
    }
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Localization `chi_eps`: 1 on `|x_h| <= eps^-alpha`, 0 on `|x_h| >= 2 eps^-alpha`.
pub fn cutoff_chi(eps: f64, alpha: f64, grid: &SlabGrid) -> Result<PlaneField> {
    if !(eps > 0.0) || !(alpha > 0.0) {
        return Err(Error::Config(format!(
            "cut-off needs eps, alpha > 0 (got {eps}, {alpha})"
        )));
    }
    let inner = eps.powf(-alpha);
    let outer = 2.0 * inner;
    if outer > 0.95 * grid.half_width {
        return Err(Error::Config(format!(
            "cut-off radius {outer:.4} exceeds 0.95 L = {:.4}",
            0.95 * grid.half_width
        )));
    }
    Ok(PlaneField::from_fn(grid, |x, y| {
        1.0 - smoothstep5((x.hypot(y) - inner) / (outer - inner))
    }))
}

/// Analytic gradient magnitude of the cut-off at radius `s`.
pub fn cutoff_chi_slope(eps: f64, alpha: f64, s: f64) -> f64 {
    let inner = eps.powf(-alpha);
    smoothstep5_slope((s - inner) / inner) / inner
}

/// Smooth radial bump: 1 on `|x| <= radius/2`, 0 on `|x| >= radius`.
pub fn bump(radius: f64, s: f64) -> f64 {
    1.0 - smoothstep5((s - 0.5 * radius) / (0.5 * radius))
}

/// `C^inf` ramp from 0 (t <= 0) to 1 (t >= 1).
pub fn smooth_ramp(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    a / (a + b)
}

pub fn smooth_ramp_slope(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    let da = a / (t * t);
    let db = -b / ((1.0 - t) * (1.0 - t));
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Unit of the vertical wavenumber lattice.
pub const VERTICAL_BASE: f64 = PI;
