//! Randomized checks of the spectral operator suite, shared by the property
//! tests and the acceptance run.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slabflow::grid::{Parity, ScalarField, SlabGrid, VectorField};
use slabflow::spectral::SpectralWorkspace;

pub fn workspace() -> SpectralWorkspace {
    SpectralWorkspace::new(&SlabGrid::new(16, 16, 8, PI).unwrap())
}

/// Sum of a few random modes inside the dealiased band, with the requested
/// vertical parity.
pub fn random_field(rng: &mut ChaCha8Rng, ws: &SpectralWorkspace, parity: Parity) -> ScalarField {
    let modes: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(-4i32..=4) as f64,
                rng.random_range(-4i32..=4) as f64,
                rng.random_range(0i32..=2) as f64,
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();
    ScalarField::from_fn(&ws.grid, parity, move |x, y, z| {
        modes
            .iter()
            .map(|&(kx, ky, kz, a, ph)| {
                let vert = match parity {
                    Parity::Even => (PI * kz * z).cos(),
                    Parity::Odd => (PI * (kz + 1.0) * z).sin(),
                };
                a * (kx * x + ky * y + ph).cos() * vert
            })
            .sum()
    })
}

pub fn random_vector(rng: &mut ChaCha8Rng, ws: &SpectralWorkspace) -> VectorField {
    VectorField::new(
        random_field(rng, ws, Parity::Even),
        random_field(rng, ws, Parity::Even),
        random_field(rng, ws, Parity::Odd),
    )
}

fn gap(a: &VectorField, b: &VectorField) -> f64 {
    a.zip_with(b, |x, y| x - y).max_abs()
}

fn scalar_gap(a: &ScalarField, b: &ScalarField) -> f64 {
    a.zip_with(b, |x, y| x - y).max_abs()
}

/// Largest defect over the operator identities for one random draw,
/// relative to the size of the data.
pub fn operator_defects(seed: u64) -> Vec<(&'static str, f64)> {
    let ws = workspace();
    let g = &ws.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = random_vector(&mut rng, &ws);
    let f = random_field(&mut rng, &ws, Parity::Even);
    let scale_v = v.max_abs().max(1e-300);
    let scale_f = f.max_abs().max(1e-300);

    let p = ws.helmholtz_project(&v);
    let q = ws.helmholtz_complement(&v);
    let idempotence = gap(&ws.helmholtz_project(&p), &p) / scale_v;
    let norm = (p.dot(&p, g) * q.dot(&q, g)).sqrt().max(1e-300);
    let orthogonality = p.dot(&q, g).abs() / norm;
    let solenoidal = ws.div(&p).max_abs() / (scale_v * 4.0);
    let split = gap(&p.zip_with(&q, |a, b| a + b), &v) / scale_v;

    let avg = ws.vertical_average(&f);
    let prim = ws.vertical_primitive(&f);
    let dz = ws.grad(&prim).comps[2].clone();
    let fluct = f.zip_with(&ScalarField::from_plane(&avg, g.shape.nz), |a, b| a - b);
    let primitive = scalar_gap(&dz, &fluct) / scale_f + ws.vertical_average(&prim).max_abs() / scale_f;

    let delta = rng.random_range(0.01..0.5);
    let mg = ws.grad(&ws.mollify(&f, delta));
    let gm = {
        let gf = ws.grad(&f);
        VectorField::new(ws.mollify(&gf.comps[0], delta), ws.mollify(&gf.comps[1], delta), ws.mollify(&gf.comps[2], delta))
    };
    let commutation = gap(&mg, &gm) / (scale_f * 4.0);

    let gf = ws.grad(&f);
    let parity = [
        gf.comps[0].parity_defect(),
        gf.comps[1].parity_defect(),
        gf.comps[2].parity_defect(),
        p.comps[0].parity_defect(),
        p.comps[2].parity_defect(),
        ws.mollify(&f, delta).parity_defect(),
        prim.parity_defect(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
        / scale_f.max(scale_v);
    let classes = gf.comps[2].parity == Parity::Odd && prim.parity == Parity::Odd && p.comps[2].parity == Parity::Odd;

    vec![
        ("helmholtz idempotence", idempotence),
        ("helmholtz orthogonality", orthogonality),
        ("helmholtz solenoidality", solenoidal),
        ("helmholtz split", split),
        ("vertical primitive", primitive),
        ("mollifier commutation", commutation),
        ("parity preservation", if classes { parity } else { f64::INFINITY }),
    ]
}
