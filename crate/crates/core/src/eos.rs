//! Barotropic pressure law, pressure potential, relative entropy and the
//! static density profile balancing pressure against the centrifugal force.

use crate::error::{Error, Result};
use crate::grid::{Parity, PlaneField, ScalarField, SimParams, SlabGrid, VectorField};
use crate::spectral::{smooth_ramp, smooth_ramp_slope, SpectralWorkspace};

/// `p(rho) = rho^gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    pub gamma: f64,
}

impl PressureLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Config(format!("gamma must be > 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        if !(rho >= 0.0) {
            return Err(Error::Domain(format!("pressure needs rho >= 0, got {rho}")));
        }
        Ok(self.p(rho))
    }

    /// Unchecked `rho^gamma` for inner loops.
    #[inline]
    pub fn p(&self, rho: f64) -> f64 {
        rho.powf(self.gamma)
    }

    /// `p'(rho)`.
    #[inline]
    pub fn dp(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 1.0)
    }

    pub fn pressure_potential(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain(format!("pressure potential needs rho > 0, got {rho}")));
        }
        Ok(self.big_p(rho))
    }

    /// `P(rho) = gamma/(gamma-1) (rho^(gamma-1) - 1)`, unchecked.
    #[inline]
    pub fn big_p(&self, rho: f64) -> f64 {
        let g = self.gamma;
        g / (g - 1.0) * (rho.powf(g - 1.0) - 1.0)
    }

    /// `P'(rho) = p'(rho) / rho`.
    #[inline]
    pub fn big_p_prime(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 2.0)
    }

    /// Inverse of `P`; fails when `q` is below the vacuum value `P(0)`.
    pub fn inverse_potential(&self, q: f64) -> Result<f64> {
        let g = self.gamma;
        let base = 1.0 + (g - 1.0) / g * q;
        if !(base > 0.0) {
            return Err(Error::Domain(format!("P^-1 undefined at {q}")));
        }
        Ok(base.powf(1.0 / (g - 1.0)))
    }

    /// `H(rho) = (rho^gamma - rho) / (gamma - 1)`.
    pub fn h(&self, rho: f64) -> f64 {
        (self.p(rho) - rho) / (self.gamma - 1.0)
    }

    pub fn relative_entropy(&self, rho: f64, rho_tilde: f64) -> Result<f64> {
        if !(rho > 0.0) || !(rho_tilde > 0.0) {
            return Err(Error::Domain(format!(
                "relative entropy needs positive densities, got ({rho}, {rho_tilde})"
            )));
        }
        Ok(self.entropy_density(rho, rho_tilde))
    }

    /// `E(rho, rho_tilde) = H(rho) - H'(rho_tilde)(rho - rho_tilde) - H(rho_tilde)`,
    /// evaluated as `rho_tilde^gamma ((1+x)^gamma - 1 - gamma x) / (gamma - 1)`
    /// with `x = (rho - rho_tilde) / rho_tilde` to avoid cancellation.
    #[inline]
    pub fn entropy_density(&self, rho: f64, rho_tilde: f64) -> f64 {
        let g = self.gamma;
        let x = (rho - rho_tilde) / rho_tilde;
        let bracket = if x.abs() < 1e-4 {
            // Taylor series; the remainder is O(x^6).
            let c2 = g * (g - 1.0) / 2.0;
            let c3 = c2 * (g - 2.0) / 3.0;
            let c4 = c3 * (g - 3.0) / 4.0;
            let c5 = c4 * (g - 4.0) / 5.0;
            x * x * (c2 + x * (c3 + x * (c4 + x * c5)))
        } else {
            (g * x.ln_1p()).exp_m1() - g * x
        };
        (rho_tilde.powf(g) * bracket / (g - 1.0)).max(0.0)
    }
}

/// Centrifugal potential `G(x_h) = |x_h|^2`, optionally tapered to zero near
/// the box edge so that it is periodic.
#[derive(Debug, Clone, PartialEq)]
pub enum RadialPotential {
    Zero,
    Quadratic,
    /// `|x_h|^2` times a `C^inf` ramp from 1 at `0.8 L` to 0 at `0.95 L`.
    TaperedQuadratic { half_width: f64 },
}

impl RadialPotential {
    fn taper(half_width: f64, s: f64) -> (f64, f64) {
        let a = 0.8 * half_width;
        let w = 0.15 * half_width;
        let t = (s - a) / w;
        (1.0 - smooth_ramp(t), -smooth_ramp_slope(t) / w)
    }

    /// `G` as a function of the horizontal radius.
    pub fn value(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic => s * s,
            Self::TaperedQuadratic { half_width } => s * s * Self::taper(*half_width, s).0,
        }
    }

    /// `dG/ds`.
    pub fn slope(&self, s: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Quadratic => 2.0 * s,
            Self::TaperedQuadratic { half_width } => {
                let (t, dt) = Self::taper(*half_width, s);
                2.0 * s * t + s * s * dt
            }
        }
    }
}

/// `G` sampled on the horizontal grid together with its radial form.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub radial: RadialPotential,
    pub values: PlaneField,
}

impl Potential {
    pub fn new(radial: RadialPotential, grid: &SlabGrid) -> Self {
        let values = PlaneField::from_fn(grid, |x, y| radial.value(x.hypot(y)));
        Self { radial, values }
    }

    /// The standard tapered `|x_h|^2` for this box.
    pub fn tapered(grid: &SlabGrid) -> Self {
        Self::new(
            RadialPotential::TaperedQuadratic {
                half_width: grid.half_width,
            },
            grid,
        )
    }

    /// Analytic horizontal gradient at node `(i, j)`.
    pub fn grad_at(&self, grid: &SlabGrid, i: usize, j: usize) -> [f64; 2] {
        let (x, y) = (grid.x[i], grid.y[j]);
        let s = x.hypot(y);
        if s == 0.0 {
            return [0.0, 0.0];
        }
        let d = self.radial.slope(s) / s;
        [d * x, d * y]
    }
}

/// Static density `rho_tilde` with `P(rho_tilde) = eps^{2(m-1)} G`.
#[derive(Debug, Clone)]
pub struct StaticProfile {
    pub law: PressureLaw,
    pub potential: Potential,
    /// `eps^{2(m-1)}`.
    pub scale: f64,
    pub rho_tilde: ScalarField,
    /// `P'(rho_tilde)`.
    pub pp_tilde: ScalarField,
    pub grad_rho_tilde: VectorField,
    pub rho_plane: PlaneField,
    pub pp_plane: PlaneField,
}

impl StaticProfile {
    /// `rho_tilde` as a function of the horizontal radius.
    pub fn rho_at(&self, s: f64) -> f64 {
        static_density(&self.law, self.scale * self.potential.radial.value(s))
    }

    /// `d rho_tilde / ds`.
    pub fn rho_slope_at(&self, s: f64) -> f64 {
        let rho = self.rho_at(s);
        self.scale * self.potential.radial.slope(s) / self.law.big_p_prime(rho)
    }

    /// `P'(rho_tilde)` at radius `s`.
    pub fn pp_at(&self, s: f64) -> f64 {
        self.law.big_p_prime(self.rho_at(s))
    }

    pub fn horizontal_mean_rho(&self) -> f64 {
        self.rho_plane.mean()
    }
}

fn static_density(law: &PressureLaw, q: f64) -> f64 {
    let g = law.gamma;
    (1.0 + (g - 1.0) / g * q).powf(1.0 / (g - 1.0))
}

/// Pointwise closed-form inversion of the static problem.
pub fn solve_static(
    params: &SimParams,
    potential: &Potential,
    ws: &SpectralWorkspace,
) -> Result<StaticProfile> {
    let law = PressureLaw::new(params.gamma)?;
    let scale = params.epsilon.powf(2.0 * (params.m - 1.0));
    let nz = ws.grid.shape.nz;
    if potential.values.values.iter().any(|g| !(*g >= 0.0)) {
        return Err(Error::Domain("centrifugal potential must be nonnegative".into()));
    }
    let rho_plane = potential.values.map(|g| static_density(&law, scale * g));
    let pp_plane = rho_plane.map(|r| law.big_p_prime(r));
    let rho_tilde = ScalarField::from_plane(&rho_plane, nz);
    let pp_tilde = ScalarField::from_plane(&pp_plane, nz);
    let grad_rho_tilde = ws.grad(&rho_tilde);
    Ok(StaticProfile {
        law,
        potential: potential.clone(),
        scale,
        rho_tilde,
        pp_tilde,
        grad_rho_tilde,
        rho_plane,
        pp_plane,
    })
}

/// Relative sup-norm of `eps^{-2m} grad p(rho_tilde) - eps^{-2} rho_tilde grad G`,
/// with the pressure gradient taken spectrally and `grad G` analytically.
pub fn static_balance_residual(
    profile: &StaticProfile,
    params: &SimParams,
    ws: &SpectralWorkspace,
) -> f64 {
    let grid = &ws.grid;
    let p = profile.rho_tilde.map(|r| profile.law.p(r));
    let gp = ws.grad(&p);
    let em2m = params.epsilon.powf(-2.0 * params.m);
    let em2 = params.epsilon.powi(-2);
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    let s = grid.shape;
    for j in 0..s.ny {
        for i in 0..s.nx {
            let g = profile.potential.grad_at(grid, i, j);
            let r = profile.rho_plane.at(i, j);
            for k in 0..s.nz {
                let idx = s.idx(i, j, k);
                for a in 0..2 {
                    let cent = em2 * r * g[a];
                    num = num.max((em2m * gp.comps[a].values[idx] - cent).abs());
                    den = den.max(cent.abs());
                }
                num = num.max((em2m * gp.comps[2].values[idx]).abs());
            }
        }
    }
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Even scalar field `eps^m r0` added to `rho_tilde`, clipped nowhere: callers
/// check positivity.
pub fn perturbed_density(profile: &StaticProfile, r0: &ScalarField, mach: f64) -> ScalarField {
    let mut rho = profile.rho_tilde.zip_with(r0, |a, b| a + mach * b);
    rho.parity = Parity::Even;
    rho
}
