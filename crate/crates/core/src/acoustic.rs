//! Localized acoustic subsystem: extraction of `(S, Psi, Y)` from a fluid
//! state, the exact wave propagator of
//!
//! ```text
//! eps^m d_t S + Delta Psi = F1,   eps^m d_t Psi + p'(1) S = F2,
//! ```
//!
//! its Duhamel extension, and local-energy measurements.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eos::StaticProfile;
use crate::error::{Error, Result};
use crate::grid::{FluidState, Parity, PlaneField, ScalarField, SimParams, VectorField};
use crate::spectral::{bump, cutoff_chi, SpectralWorkspace, C64};

#[derive(Debug, Clone)]
pub struct AcousticState {
    pub s: ScalarField,
    pub psi: ScalarField,
    /// Solenoidal part of the localized momentum.
    pub y: VectorField,
}

/// `S = chi (rho - rho_tilde) / eps^m`, `chi rho u = Y + grad Psi`.
pub fn extract_acoustic(state: &FluidState, profile: &StaticProfile, params: &SimParams, ws: &SpectralWorkspace) -> Result<AcousticState> {
    let chi_plane = cutoff_chi(params.epsilon, params.alpha, &ws.grid)?;
    let chi = ScalarField::from_plane(&chi_plane, ws.shape().nz);
    let inv_mach = 1.0 / params.mach();
    let dev = state.rho.zip_with(&profile.rho_tilde, |a, b| (a - b) * inv_mach);
    let s = dev.zip_with(&chi, |a, b| a * b);
    let m = state.mom.times(&chi);
    let y = ws.helmholtz_project(&m);
    let psi = ws.inverse_laplacian(&ws.div(&m));
    Ok(AcousticState { s, psi, y })
}

/// Constants of the wave system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    /// `eps^m`.
    pub mach: f64,
    /// `p'(1)`.
    pub c2: f64,
}

impl WaveParams {
    pub fn from_sim(params: &SimParams) -> Self {
        Self {
            mach: params.mach(),
            c2: params.gamma,
        }
    }

    pub fn speed(&self) -> f64 {
        self.c2.sqrt()
    }
}

fn mode_k(ws: &SpectralWorkspace, idx: usize) -> f64 {
    let k = ws.wavevector(idx);
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt()
}

/// Rotate one mode by the free evolution over physical time `t`.
#[inline]
fn rotate(s: C64, psi: C64, k: f64, c: f64, theta: f64) -> (C64, C64) {
    if k == 0.0 {
        return (s, psi);
    }
    let (sn, cs) = theta.sin_cos();
    (s * cs + psi * (k / c * sn), psi * cs - s * (c / k * sn))
}

/// Global acoustic energy `p'(1) ||S||^2 + ||grad Psi||^2`.
pub fn acoustic_energy(s: &ScalarField, psi: &ScalarField, wave: &WaveParams, ws: &SpectralWorkspace) -> f64 {
    let g = ws.grad(psi);
    wave.c2 * s.l2(&ws.grid).powi(2) + g.l2(&ws.grid).powi(2)
}

/// Spectral-space pair `(S^, Psi^)`.
#[derive(Debug, Clone)]
pub struct WaveSpectra {
    pub s: Vec<C64>,
    pub psi: Vec<C64>,
}

impl WaveSpectra {
    pub fn from_fields(s: &ScalarField, psi: &ScalarField, ws: &SpectralWorkspace) -> Self {
        Self {
            s: ws.forward(&s.values),
            psi: ws.forward(&psi.values),
        }
    }

    pub fn to_fields(&self, parity: Parity, ws: &SpectralWorkspace) -> (ScalarField, ScalarField) {
        let shape = ws.shape();
        (
            ScalarField { shape, values: ws.inverse(&self.s), parity },
            ScalarField { shape, values: ws.inverse(&self.psi), parity },
        )
    }

    /// Free evolution over physical time `t`.
    pub fn propagate(&self, t: f64, wave: &WaveParams, ws: &SpectralWorkspace) -> Self {
        let c = wave.speed();
        let mut out = self.clone();
        for idx in 0..self.s.len() {
            let k = mode_k(ws, idx);
            let (a, b) = rotate(self.s[idx], self.psi[idx], k, c, c * k * t / wave.mach);
            out.s[idx] = a;
            out.psi[idx] = b;
        }
        out
    }

    fn axpy(&mut self, other: &WaveSpectra, h: f64) {
        for (a, b) in self.s.iter_mut().zip(&other.s) {
            *a += b * h;
        }
        for (a, b) in self.psi.iter_mut().zip(&other.psi) {
            *a += b * h;
        }
    }

    /// `p'(1) ||S||^2 + ||grad Psi||^2` from the spectra (Parseval).
    pub fn energy(&self, wave: &WaveParams, ws: &SpectralWorkspace) -> f64 {
        let n = self.s.len();
        let mut acc = 0.0;
        for idx in 0..n {
            let k = mode_k(ws, idx);
            acc += wave.c2 * self.s[idx].norm_sqr() + k * k * self.psi[idx].norm_sqr();
        }
        acc * ws.grid.cell_volume() / n as f64
    }
}

/// Exact solution of the homogeneous system after time `t`. The mean of `Psi`
/// is a gauge and the zero mode is held fixed.
pub fn wave_propagate(s0: &ScalarField, psi0: &ScalarField, t: f64, wave: &WaveParams, ws: &SpectralWorkspace) -> (ScalarField, ScalarField) {
    WaveSpectra::from_fields(s0, psi0, ws)
        .propagate(t, wave, ws)
        .to_fields(s0.parity, ws)
}

/// Duhamel solution with forcing `(F1, F2)` sampled uniformly on `[0, t]`
/// (`forcing[0]` at time 0, the last sample at time `t`). The convolution is
/// evaluated by the composite trapezoid rule.
pub fn wave_propagate_forced(
    s0: &ScalarField,
    psi0: &ScalarField,
    forcing: &[(ScalarField, ScalarField)],
    t: f64,
    wave: &WaveParams,
    ws: &SpectralWorkspace,
) -> Result<(ScalarField, ScalarField)> {
    if forcing.len() < 2 {
        return Err(Error::Config("forcing needs at least two samples".into()));
    }
    let h = t / (forcing.len() - 1) as f64;
    let spec: Vec<WaveSpectra> = forcing
        .iter()
        .map(|(a, b)| WaveSpectra::from_fields(a, b, ws))
        .collect();
    let mut y = WaveSpectra::from_fields(s0, psi0, ws);
    let w = h / (2.0 * wave.mach);
    for j in 0..spec.len() - 1 {
        let mut moved = y.propagate(h, wave, ws);
        moved.axpy(&spec[j].propagate(h, wave, ws), w);
        moved.axpy(&spec[j + 1], w);
        y = moved;
    }
    Ok(y.to_fields(s0.parity, ws))
}

/// Localized energy density `phi^2 (p'(1) S^2 + |grad Psi|^2)` integrated in space.
fn localized_energy(spec: &WaveSpectra, phi2: &ScalarField, wave: &WaveParams, ws: &SpectralWorkspace) -> f64 {
    let s = ws.inverse(&spec.s);
    let mut acc = 0.0;
    for (v, w) in s.iter().zip(&phi2.values) {
        acc += wave.c2 * v * v * w;
    }
    for axis in 0..3 {
        let d: Vec<C64> = spec
            .psi
            .iter()
            .enumerate()
            .map(|(idx, &c)| C64::new(0.0, ws.wavevector(idx)[axis]) * c)
            .collect();
        let g = ws.inverse(&d);
        for (v, w) in g.iter().zip(&phi2.values) {
            acc += v * v * w;
        }
    }
    acc * ws.grid.cell_volume()
}

/// Squared smooth bump `phi^2` with `phi = 1` on `|x_h| <= K/2`, `0` beyond `K`.
pub fn bump_weight(radius: f64, ws: &SpectralWorkspace) -> ScalarField {
    let plane = PlaneField::from_fn(&ws.grid, |x, y| bump(radius, x.hypot(y)).powi(2));
    ScalarField::from_plane(&plane, ws.shape().nz)
}

/// Fast-time span before a front leaving `|x_h| <= radius` re-enters it
/// through the periodic boundary.
pub fn wrap_time(radius: f64, wave: &WaveParams, ws: &SpectralWorkspace) -> f64 {
    (2.0 * ws.grid.half_width - 2.0 * radius).max(0.0) / wave.speed()
}

/// Result of a local-energy measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalEnergy {
    /// Horizon actually integrated (capped below the wrap time).
    pub horizon: f64,
    /// `int_0^T int phi^2 e(t) dx dt`.
    pub value: f64,
    /// Largest relative change of the global acoustic energy over the samples.
    pub global_drift: f64,
}

/// `int_0^T int |phi wave(v)(t)|^2 dx dt` by the trapezoid rule on
/// `n_times` intervals, with `T` capped at `eps^m` times the wrap time.
pub fn local_energy(
    s0: &ScalarField,
    psi0: &ScalarField,
    radius: f64,
    horizon: f64,
    n_times: usize,
    wave: &WaveParams,
    ws: &SpectralWorkspace,
) -> Result<LocalEnergy> {
    if n_times == 0 || !(horizon > 0.0) || !(radius > 0.0) {
        return Err(Error::Config("local energy needs n_times > 0, horizon > 0 and radius > 0".into()));
    }
    let t_cap = horizon.min(wave.mach * wrap_time(radius, wave, ws));
    let phi2 = bump_weight(radius, ws);
    let y0 = WaveSpectra::from_fields(s0, psi0, ws);
    let e0 = y0.energy(wave, ws);
    let h = t_cap / n_times as f64;
    let mut acc = 0.0;
    let mut drift: f64 = 0.0;
    for j in 0..=n_times {
        let y = y0.propagate(j as f64 * h, wave, ws);
        let w = if j == 0 || j == n_times { 0.5 } else { 1.0 };
        acc += w * localized_energy(&y, &phi2, wave, ws);
        if e0 > 0.0 {
            drift = drift.max((y.energy(wave, ws) - e0).abs() / e0);
        }
    }
    Ok(LocalEnergy {
        horizon: t_cap,
        value: acc * h,
        global_drift: drift,
    })
}

/// Time-localized response of the forced system.
///
/// The forcing is `eps^m g(s)` with `g(s) = U(s) U(-t_star) g0`, where `U` is
/// the free evolution; `||g(s)||` is constant and the Duhamel response is
/// `t U(t - t_star) g0`, concentrated near `t_star`. The response is advanced
/// with the trapezoid Duhamel recursion over `[t_star - w, t_star + w]`,
/// `w = eps^m * wrap_time / 2`, and its localized energy is returned as an
/// `L^2`-in-time norm.
pub fn forced_local_response(
    g0: &WaveSpectra,
    t_star: f64,
    radius: f64,
    n_times: usize,
    wave: &WaveParams,
    ws: &SpectralWorkspace,
) -> Result<f64> {
    let half = 0.5 * wave.mach * wrap_time(radius, wave, ws);
    let (t0, t1) = ((t_star - half).max(0.0), t_star + half);
    let h = (t1 - t0) / n_times as f64;
    let phi2 = bump_weight(radius, ws);
    let pre = g0.propagate(-t_star, wave, ws);
    let forcing = |s: f64| {
        let mut f = pre.propagate(s, wave, ws);
        for c in f.s.iter_mut().chain(f.psi.iter_mut()) {
            *c *= wave.mach;
        }
        f
    };
    // response at t0 from the exact integral
    let mut y = g0.propagate(t0 - t_star, wave, ws);
    for c in y.s.iter_mut().chain(y.psi.iter_mut()) {
        *c *= t0;
    }
    let w = h / (2.0 * wave.mach);
    let mut acc = 0.5 * localized_energy(&y, &phi2, wave, ws);
    let mut f_prev = forcing(t0);
    for j in 1..=n_times {
        let t = t0 + j as f64 * h;
        let f_next = forcing(t);
        let mut moved = y.propagate(h, wave, ws);
        moved.axpy(&f_prev.propagate(h, wave, ws), w);
        moved.axpy(&f_next, w);
        y = moved;
        f_prev = f_next;
        let weight = if j == n_times { 0.5 } else { 1.0 };
        acc += weight * localized_energy(&y, &phi2, wave, ws);
    }
    Ok((acc * h).sqrt())
}

/// Random `x3`-independent band-limited data: a few Fourier modes of wave
/// number at most `k_max` under a Gaussian envelope of width `width`,
/// filtered by the 2/3 rule.
pub fn random_packet(rng: &mut ChaCha8Rng, width: f64, k_max: f64, ws: &SpectralWorkspace) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let kx = rng.random_range(-k_max..k_max);
            let ky = rng.random_range(-k_max..k_max);
            let amp = rng.random_range(-1.0..1.0);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (kx, ky, amp, phase)
        })
        .collect();
    let w2 = 2.0 * width * width;
    let plane = PlaneField::from_fn(&ws.grid, |x, y| {
        let env = (-(x * x + y * y) / w2).exp();
        env * modes
            .iter()
            .map(|&(kx, ky, a, p)| a * (kx * x + ky * y + p).cos())
            .sum::<f64>()
    });
    ws.dealias(&ScalarField::from_plane(&plane, ws.shape().nz))
}

/// One row of the decay study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRow {
    pub epsilon: f64,
    pub m: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub local_energy: f64,
    pub global_energy: f64,
    pub ratio: f64,
}

pub const DECAY_HEADER: [&str; 7] = ["epsilon", "m", "alpha", "T", "local_energy", "global_energy", "ratio"];

impl DecayRow {
    pub fn as_record(&self) -> [f64; 7] {
        [
            self.epsilon,
            self.m,
            self.alpha,
            self.horizon,
            self.local_energy,
            self.global_energy,
            self.ratio,
        ]
    }
}

/// Settings of an acoustic decay study.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayStudy {
    pub m: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Radius `K` of the observation disk.
    pub radius: f64,
    /// Physical horizon `T` before the wrap cap.
    pub horizon: f64,
    pub n_times: usize,
    pub packet_width: f64,
    pub k_max: f64,
    pub seed: u64,
}

/// Local energy of one random datum for every `eps`, plus the fitted
/// log-log slope of local energy against `eps`.
pub fn decay_study(study: &DecayStudy, epsilons: &[f64], ws: &SpectralWorkspace) -> Result<(Vec<DecayRow>, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(study.seed);
    let s_raw = random_packet(&mut rng, study.packet_width, study.k_max, ws);
    let psi_raw = random_packet(&mut rng, study.packet_width, study.k_max, ws);
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let chi = ScalarField::from_plane(&cutoff_chi(eps, study.alpha, &ws.grid)?, ws.shape().nz);
        let s0 = ws.dealias(&s_raw.zip_with(&chi, |a, b| a * b));
        let psi0 = ws.dealias(&psi_raw.zip_with(&chi, |a, b| a * b));
        let wave = WaveParams {
            mach: eps.powf(study.m),
            c2: study.gamma,
        };
        let norm = acoustic_energy(&s0, &psi0, &wave, ws);
        let le = local_energy(&s0, &psi0, study.radius, study.horizon, study.n_times, &wave, ws)?;
        rows.push(DecayRow {
            epsilon: eps,
            m: study.m,
            alpha: study.alpha,
            horizon: le.horizon,
            local_energy: le.value,
            global_energy: le.global_drift,
            ratio: le.value / (wave.mach * norm),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.local_energy.ln()).collect();
    Ok((rows, fit_slope(&xs, &ys)))
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressible::static_state;
    use crate::eos::{solve_static, Potential};
    use crate::grid::SlabGrid;
    use std::f64::consts::PI;

    fn ws(n: usize, nz: usize, l: f64) -> SpectralWorkspace {
        SpectralWorkspace::new(&SlabGrid::new(n, n, nz, l).unwrap())
    }

    const WAVE: WaveParams = WaveParams { mach: 0.1, c2: 2.0 };

    #[test]
    fn propagation_examples() {
        let w = ws(16, 4, PI);
        let g = &w.grid;
        let s0 = ScalarField::from_fn(g, Parity::Even, |x, y, z| (x + 2.0 * y).cos() * (PI * z).cos());
        let psi0 = ScalarField::from_fn(g, Parity::Even, |x, _, _| 0.3 * (3.0 * x).sin());
        let (s, p) = wave_propagate(&s0, &psi0, 0.0, &WAVE, &w);
        assert!(s.zip_with(&s0, |a, b| a - b).max_abs() < 1e-14);
        assert!(p.zip_with(&psi0, |a, b| a - b).max_abs() < 1e-14);

        let e0 = acoustic_energy(&s0, &psi0, &WAVE, &w);
        for t in [0.01, 0.37, 2.0] {
            let (s, p) = wave_propagate(&s0, &psi0, t, &WAVE, &w);
            let e = acoustic_energy(&s, &p, &WAVE, &w);
            assert!((e - e0).abs() <= 1e-12 * e0);
        }

        // quarter period of a pure-S mode: all of it moves into Psi
        let k = (1.0f64 + 4.0 + PI * PI).sqrt();
        let lambda = WAVE.speed() * k;
        let t = WAVE.mach * 0.5 * PI / lambda;
        let zero = ScalarField::zeros(g.shape, Parity::Even);
        let (s, p) = wave_propagate(&s0, &zero, t, &WAVE, &w);
        assert!(s.max_abs() < 1e-12);
        // amplitude transfer c/k
        assert!((p.max_abs() - WAVE.speed() / k).abs() < 1e-12);
    }

    #[test]
    fn system_is_satisfied() {
        // finite-difference check of eps^m dS/dt = -Delta Psi
        let w = ws(16, 4, PI);
        let g = &w.grid;
        let s0 = ScalarField::from_fn(g, Parity::Even, |x, y, _| (x - y).sin());
        let psi0 = ScalarField::from_fn(g, Parity::Even, |x, y, _| (2.0 * x).cos() * y.sin());
        let (t, h) = (0.05, 1e-6);
        let (sp, pp) = wave_propagate(&s0, &psi0, t + h, &WAVE, &w);
        let (sm, pm) = wave_propagate(&s0, &psi0, t - h, &WAVE, &w);
        let (s, p) = wave_propagate(&s0, &psi0, t, &WAVE, &w);
        let lap = w.laplacian(&p);
        for i in 0..g.shape.len() {
            let ds = WAVE.mach * (sp.values[i] - sm.values[i]) / (2.0 * h);
            let dp = WAVE.mach * (pp.values[i] - pm.values[i]) / (2.0 * h);
            assert!((ds + lap.values[i]).abs() < 1e-6);
            assert!((dp + WAVE.c2 * s.values[i]).abs() < 1e-6);
        }
    }

    fn samples(f1: &ScalarField, f2: &ScalarField, n: usize) -> Vec<(ScalarField, ScalarField)> {
        (0..=n).map(|_| (f1.clone(), f2.clone())).collect()
    }

    #[test]
    fn forced_examples() {
        let w = ws(8, 4, PI);
        let g = &w.grid;
        let s0 = ScalarField::from_fn(g, Parity::Even, |x, y, _| (x + y).cos());
        let psi0 = ScalarField::from_fn(g, Parity::Even, |x, _, _| x.sin());
        let zero = ScalarField::zeros(g.shape, Parity::Even);
        let t = 0.3;
        let (a, b) = wave_propagate_forced(&s0, &psi0, &samples(&zero, &zero, 10), t, &WAVE, &w).unwrap();
        let (c, d) = wave_propagate(&s0, &psi0, t, &WAVE, &w);
        assert!(a.zip_with(&c, |x, y| x - y).max_abs() < 1e-13);
        assert!(b.zip_with(&d, |x, y| x - y).max_abs() < 1e-13);

        // constant forcing on the mode cos(x + y): closed-form 2x2 solution
        // eps y' = M y + f, M = [[0, k^2], [-c2, 0]] has the steady state -M^-1 f
        let k2 = 2.0;
        let (f1a, f2a) = (0.7, -0.4);
        let f1 = s0.scaled(f1a);
        let f2 = s0.scaled(f2a);
        let (sp, pp) = (f2a / WAVE.c2, -f1a / k2);
        let n = 4000;
        let (s, p) = wave_propagate_forced(&zero, &zero, &samples(&f1, &f2, n), t, &WAVE, &w).unwrap();
        let lam = WAVE.speed() * k2.sqrt() * t / WAVE.mach;
        let (sn, cs) = lam.sin_cos();
        let c = WAVE.speed();
        let k = k2.sqrt();
        // y(t) = U(t)(0 - y_p) + y_p
        let s_exact = -(sp * cs + pp * (k / c) * sn) + sp;
        let p_exact = -(pp * cs - sp * (c / k) * sn) + pp;
        let i = g.shape.idx(3, 5, 0);
        let mode = s0.values[i];
        assert!((s.values[i] - s_exact * mode).abs() < 1e-5, "{} vs {}", s.values[i], s_exact * mode);
        assert!((p.values[i] - p_exact * mode).abs() < 1e-5);

        // linearity
        let g1 = ScalarField::from_fn(g, Parity::Even, |x, _, _| (2.0 * x).cos());
        let g2 = ScalarField::from_fn(g, Parity::Even, |_, y, _| y.sin());
        let run = |a: &ScalarField, b: &ScalarField| {
            wave_propagate_forced(&zero, &zero, &samples(a, b, 20), t, &WAVE, &w).unwrap()
        };
        let (x1, y1) = run(&g1, &g2);
        let (x2, y2) = run(&g2, &g1);
        let (x3, y3) = run(&g1.zip_with(&g2, |a, b| a + b), &g2.zip_with(&g1, |a, b| a + b));
        for i in 0..g.shape.len() {
            assert!((x1.values[i] + x2.values[i] - x3.values[i]).abs() < 1e-12);
            assert!((y1.values[i] + y2.values[i] - y3.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn extraction_examples() {
        let w = ws(64, 4, 8.0);
        let params = SimParams {
            nx: 64,
            ny: 64,
            nz: 4,
            half_width: 8.0,
            epsilon: 0.2,
            m: 2.0,
            alpha: 0.5,
            ..SimParams::default()
        };
        let prof = solve_static(&params, &Potential::tapered(&w.grid), &w).unwrap();
        let st = static_state(&prof);
        let a = extract_acoustic(&st, &prof, &params, &w).unwrap();
        assert!(a.s.max_abs() == 0.0 && a.psi.max_abs() < 1e-14 && a.y.max_abs() < 1e-14);

        // potential flow confined to the plateau of chi (radius 0.2^-0.5)
        let g = &w.grid;
        let phi = ScalarField::from_fn(g, Parity::Even, |x, y, _| (-2.0 * (x * x + y * y)).exp());
        let u = w.grad(&phi);
        let mut st2 = st.clone();
        st2.mom = u.times(&st.rho);
        let a = extract_acoustic(&st2, &prof, &params, &w).unwrap();
        let chi = ScalarField::from_plane(&cutoff_chi(0.2, 0.5, g).unwrap(), 4);
        let m = st2.mom.times(&chi);
        let gpsi = w.grad(&a.psi);
        let sum = a.y.zip_with(&gpsi, |x, y| x + y);
        assert!(sum.zip_with(&m, |x, y| x - y).max_abs() < 1e-10);
        assert!(a.y.max_abs() < 1e-3 * m.max_abs(), "{}", a.y.max_abs());
        assert!(a.y.dot(&gpsi, g).abs() < 1e-10 * a.y.l2(g) * gpsi.l2(g) + 1e-14);
        assert!(w.div(&a.y).max_abs() < 1e-10);
    }

    #[test]
    fn local_energy_basics_and_saturation() {
        let w = ws(128, 4, 8.0);
        let wave = WaveParams { mach: 1.0, c2: 2.0 };
        let zero = ScalarField::zeros(w.shape(), Parity::Even);
        let le = local_energy(&zero, &zero, 2.0, 1.0, 10, &wave, &w).unwrap();
        assert_eq!(le.value, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s0 = random_packet(&mut rng, 0.7, 3.0, &w);
        let psi0 = random_packet(&mut rng, 0.7, 3.0, &w);
        let a = local_energy(&s0, &psi0, 2.0, 4.0, 200, &wave, &w).unwrap();
        let b = local_energy(&s0, &psi0, 2.0, 8.0, 400, &wave, &w).unwrap();
        assert!(a.horizon == 4.0 && b.horizon == 8.0);
        let capped = local_energy(&s0, &psi0, 2.0, 20.0, 10, &wave, &w).unwrap();
        assert!((capped.horizon - wrap_time(2.0, &wave, &w)).abs() < 1e-12);
        assert!((b.value - a.value).abs() < 0.1 * a.value, "{} {}", a.value, b.value);
        assert!(a.global_drift < 1e-12 && b.global_drift < 1e-12);
    }

    fn study(m: f64, seed: u64) -> DecayStudy {
        DecayStudy {
            m,
            alpha: 0.1,
            gamma: 2.0,
            radius: 2.0,
            horizon: 1.0,
            n_times: 160,
            packet_width: 0.7,
            k_max: 3.0,
            seed,
        }
    }

    #[test]
    fn decay_slopes_follow_mach_power() {
        let w = ws(96, 4, 8.0);
        for m in [1.0, 2.0] {
            let (rows, slope) = decay_study(&study(m, 11), &[0.2, 0.1, 0.05], &w).unwrap();
            assert!((slope - m).abs() <= 0.3, "m = {m}: slope {slope}");
            for r in &rows {
                assert!(r.global_energy <= 1e-12);
                assert!(r.horizon <= 1.0);
            }
        }
    }

    #[test]
    fn local_energy_ratio_is_uniform_over_data() {
        let w = ws(64, 4, 8.0);
        let mut ratios: Vec<f64> = (0..20)
            .map(|seed| {
                let st = DecayStudy { n_times: 60, ..study(1.0, 100 + seed) };
                decay_study(&st, &[0.1], &w).unwrap().0[0].ratio
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        let median = 0.5 * (ratios[9] + ratios[10]);
        assert!(ratios[19] <= 3.0 * median, "{ratios:?}");
    }

    #[test]
    fn duhamel_of_transported_forcing() {
        // forcing eps^m U(s) U(-t*) g0 integrates to t U(t - t*) g0
        let w = ws(16, 4, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g0s = random_packet(&mut rng, 0.7, 2.0, &w);
        let g0p = random_packet(&mut rng, 0.7, 2.0, &w);
        let (t_star, t, n) = (0.2, 0.3, 12);
        let pre = WaveSpectra::from_fields(&g0s, &g0p, &w).propagate(-t_star, &WAVE, &w);
        let forcing: Vec<_> = (0..=n)
            .map(|j| {
                let (a, b) = pre.propagate(t * j as f64 / n as f64, &WAVE, &w).to_fields(Parity::Even, &w);
                (a.scaled(WAVE.mach), b.scaled(WAVE.mach))
            })
            .collect();
        let zero = ScalarField::zeros(w.shape(), Parity::Even);
        let (s, p) = wave_propagate_forced(&zero, &zero, &forcing, t, &WAVE, &w).unwrap();
        let (se, pe) = wave_propagate(&g0s, &g0p, t - t_star, &WAVE, &w);
        assert!(s.zip_with(&se, |a, b| a - t * b).max_abs() < 1e-12);
        assert!(p.zip_with(&pe, |a, b| a - t * b).max_abs() < 1e-12);
    }

    #[test]
    fn forced_response_slope_is_half_power() {
        let w = ws(96, 4, 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s0 = random_packet(&mut rng, 0.7, 3.0, &w);
        let psi0 = random_packet(&mut rng, 0.7, 3.0, &w);
        let g0 = WaveSpectra::from_fields(&s0, &psi0, &w);
        for m in [1.0, 2.0] {
            let eps = [0.2, 0.1, 0.05];
            let ys: Vec<f64> = eps
                .iter()
                .map(|&e| {
                    let wave = WaveParams { mach: f64::powf(e, m), c2: 2.0 };
                    forced_local_response(&g0, 0.5, 2.0, 120, &wave, &w).unwrap().ln()
                })
                .collect();
            let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
            let slope = fit_slope(&xs, &ys);
            assert!((slope - m / 2.0).abs() <= 0.3, "m = {m}: slope {slope}");
        }
    }
}
