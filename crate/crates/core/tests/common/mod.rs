#![allow(dead_code)]

use mantensor::manifold::*;
use mantensor::{MvTensor, TangentTensor};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> ManifoldPoint {
    let a = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    ManifoldPoint::spd(&((&m + m.transpose()) * 0.5)).unwrap()
}

pub fn random_sphere(d: usize, rng: &mut ChaCha8Rng) -> ManifoldPoint {
    let v: Vec<f64> = (0..=d).map(|_| gauss(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    ManifoldPoint::sphere(v.iter().map(|x| x / n).collect()).unwrap()
}

/// Tensor of points `exp_p(v)` with isotropic tangents of the given variance.
pub fn scatter(p: &ManifoldPoint, shape: &[usize], variance: f64, rng: &mut ChaCha8Rng) -> MvTensor {
    let n: usize = shape.iter().product();
    let entries = (0..n)
        .map(|_| exp_map(p, &random_tangent(p, variance, rng).unwrap()).unwrap())
        .collect();
    MvTensor::new(shape.to_vec(), entries).unwrap()
}

/// Coefficients of `v` in a list of orthonormal tangent vectors.
pub fn coeffs(p: &ManifoldPoint, basis: &[TangentVector], v: &TangentVector) -> Vec<f64> {
    basis.iter().map(|b| inner(p, v, b).unwrap()).collect()
}

/// Coefficient matrix (entries × d) of a tangent tensor in the orthonormal basis.
pub fn coeff_matrix(x: &TangentTensor, basis: &[TangentVector]) -> DMatrix<f64> {
    let p = x.base();
    let rows: Vec<Vec<f64>> = (0..x.len()).map(|i| coeffs(p, basis, &x.entry(i))).collect();
    DMatrix::from_fn(rows.len(), basis.len(), |i, j| rows[i][j])
}

/// Another orthonormal basis: `orthonormal_basis(p)` rotated by a random orthogonal matrix.
pub fn rotated_basis(p: &ManifoldPoint, rng: &mut ChaCha8Rng) -> Vec<TangentVector> {
    let b = orthonormal_basis(p);
    let d = b.len();
    let q = DMatrix::from_fn(d, d, |_, _| gauss(rng)).qr().q();
    (0..d)
        .map(|j| {
            let mut acc = TangentVector::zero(p.clone());
            for i in 0..d {
                acc = acc.add_scaled(q[(i, j)], &b[i]).unwrap();
            }
            acc
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
