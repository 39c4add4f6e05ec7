//! Seeded random inputs for the property sweeps: points, tensors, vectors and
//! finite element fields.

use crate::exponent::SpaceTimeBox;
use crate::mesh::{FEFunction, MeshLevel};
use crate::tensor::{SymTensor2, Vec2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use std::sync::Arc;

pub type SweepRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SweepRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Log-uniform magnitude in `[lo, hi]`.
pub fn log_uniform(rng: &mut SweepRng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

pub fn point_in(rng: &mut SweepRng, domain: &SpaceTimeBox) -> (f64, Vec2) {
    let t = rng.random_range(domain.t[0]..=domain.t[1]);
    let x1 = rng.random_range(domain.x1[0]..=domain.x1[1]);
    let x2 = rng.random_range(domain.x2[0]..=domain.x2[1]);
    (t, [x1, x2])
}

/// Symmetric tensor with uniformly distributed direction and log-uniform norm.
pub fn sym_tensor(rng: &mut SweepRng, lo: f64, hi: f64) -> SymTensor2 {
    let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-300);
    let m = log_uniform(rng, lo, hi) / n;
    SymTensor2::from_vector(&nalgebra::Vector3::new(m * v[0], m * v[1], m * v[2]))
}

/// Vector with uniformly distributed direction and log-uniform length.
pub fn vector(rng: &mut SweepRng, lo: f64, hi: f64) -> Vec2 {
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    let m = log_uniform(rng, lo, hi);
    [m * a.cos(), m * a.sin()]
}

/// Random FE field: a few low Fourier modes over the bounding box plus nodal
/// noise, scaled to a log-uniform amplitude in `[lo, hi]`.
pub fn fe_field(rng: &mut SweepRng, mesh: &Arc<MeshLevel>, lo: f64, hi: f64) -> FEFunction {
    let (bx, by) = mesh.domain().bounding_box();
    let modes: Vec<(f64, f64, Vec2)> = (0..4)
        .map(|_| {
            let k1 = rng.random_range(1..=3) as f64;
            let k2 = rng.random_range(1..=3) as f64;
            let c: Vec2 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
            (k1, k2, c)
        })
        .collect();
    let noise = 0.2 * rng.random::<f64>();
    let amplitude = log_uniform(rng, lo, hi);
    let coeffs = mesh
        .free_vertices()
        .iter()
        .map(|&v| {
            let x = mesh.vertices()[v];
            let s = (x[0] - bx[0]) / (bx[1] - bx[0]);
            let r = (x[1] - by[0]) / (by[1] - by[0]);
            let mut out = [0.0, 0.0];
            for &(k1, k2, c) in &modes {
                let phi = (k1 * std::f64::consts::PI * s).sin() * (k2 * std::f64::consts::PI * r).sin();
                out[0] += c[0] * phi;
                out[1] += c[1] * phi;
            }
            let n0: f64 = rng.sample(StandardNormal);
            let n1: f64 = rng.sample(StandardNormal);
            [amplitude * (out[0] + noise * n0), amplitude * (out[1] + noise * n1)]
        })
        .collect();
    FEFunction::from_coeffs(mesh, coeffs).expect("one coefficient per free vertex")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_norms_stay_in_range() {
        let mut r = rng(3);
        for _ in 0..1000 {
            let a = sym_tensor(&mut r, 1e-3, 1e2);
            let n = a.norm();
            assert!((1e-3 * (1.0 - 1e-12)..=1e2 * (1.0 + 1e-12)).contains(&n), "{n}");
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<f64> = (0..5).map(|_| log_uniform(&mut rng(9), 0.1, 10.0)).collect();
        let b: Vec<f64> = (0..5).map(|_| log_uniform(&mut rng(9), 0.1, 10.0)).collect();
        assert_eq!(a, b);
    }
}
