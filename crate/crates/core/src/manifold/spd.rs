use nalgebra::DMatrix;

use super::{complete_frame, ManifoldDescriptor, ManifoldPoint, SpdFactors, SymmetricSpace, VALIDATION_TOL};
use crate::error::{Error, Result};
use crate::linalg::{from_row_major, spd_log, sym_apply, sym_eigen_desc, sym_exp, to_row_major};

pub(crate) struct Spd;

fn size(p: &ManifoldPoint) -> usize {
    p.descriptor().matrix_size().unwrap_or(0)
}

fn asymmetry(n: usize, c: &[f64]) -> (f64, f64) {
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 1.0;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(c[i * n + j].abs());
            if j > i {
                worst = worst.max((c[i * n + j] - c[j * n + i]).abs());
            }
        }
    }
    (worst, scale)
}

pub(crate) fn factors(desc: &ManifoldDescriptor, coords: &[f64]) -> Result<SpdFactors> {
    let n = desc.matrix_size().unwrap_or(0);
    let m = from_row_major(n, coords);
    let (vals, vecs) = sym_eigen_desc(&m);
    if let Some(&low) = vals.last() {
        if !(low > 0.0) {
            return Err(Error::InvalidPoint(format!("smallest eigenvalue {low:e} is not positive")));
        }
    }
    Ok(SpdFactors {
        sqrt: sym_apply(&vals, &vecs, f64::sqrt),
        inv_sqrt: sym_apply(&vals, &vecs, |x| 1.0 / x.sqrt()),
    })
}

/// Orthonormal basis of symmetric `n × n` matrices under the Frobenius
/// product: `E_ii` first, then `(E_ij + E_ji)/√2` for `i < j`.
pub(crate) fn identity_basis(n: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        let mut e = DMatrix::zeros(n, n);
        e[(i, i)] = 1.0;
        out.push(e);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = s;
            e[(j, i)] = s;
            out.push(e);
        }
    }
    out
}

fn sandwich(a: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let out = a * m * a;
    (&out + out.transpose()) * 0.5
}

fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

impl Spd {
    fn white_mat(p: &ManifoldPoint, v: &[f64]) -> DMatrix<f64> {
        sandwich(&p.spd_factors().inv_sqrt, &from_row_major(size(p), v))
    }

    fn unwhite_mat(p: &ManifoldPoint, w: &DMatrix<f64>) -> Vec<f64> {
        to_row_major(&sandwich(&p.spd_factors().sqrt, w))
    }
}

impl SymmetricSpace for Spd {
    fn validate_point(&self, desc: &ManifoldDescriptor, coords: &[f64]) -> Result<()> {
        let n = desc.matrix_size().unwrap_or(0);
        let (worst, scale) = asymmetry(n, coords);
        if worst > VALIDATION_TOL * scale {
            return Err(Error::InvalidPoint(format!("matrix is not symmetric (defect {worst:e})")));
        }
        // positivity is checked when the factors are built
        Ok(())
    }

    fn check_tangent(&self, p: &ManifoldPoint, v: &[f64]) -> Result<()> {
        let (worst, scale) = asymmetry(size(p), v);
        if worst > VALIDATION_TOL * scale {
            return Err(Error::InvalidTangent(format!("matrix is not symmetric (defect {worst:e})")));
        }
        Ok(())
    }

    fn exp(&self, p: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint> {
        let e = sym_exp(&Self::white_mat(p, v));
        ManifoldPoint::trusted(p.descriptor(), Self::unwhite_mat(p, &e))
    }

    fn log(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> Result<Vec<f64>> {
        let y = Self::white_mat(p, x.coords());
        Ok(Self::unwhite_mat(p, &spd_log(&y)))
    }

    fn distance(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> f64 {
        let y = Self::white_mat(p, x.coords());
        let (vals, _) = sym_eigen_desc(&y);
        vals.iter().map(|l| l.ln().powi(2)).sum::<f64>().sqrt()
    }

    fn whiten(&self, p: &ManifoldPoint, v: &[f64]) -> Vec<f64> {
        to_row_major(&Self::white_mat(p, v))
    }

    fn unwhiten(&self, p: &ManifoldPoint, w: &[f64]) -> Vec<f64> {
        Self::unwhite_mat(p, &from_row_major(size(p), w))
    }

    fn transport_along(&self, p: &ManifoldPoint, dir: &[f64], w: &[f64]) -> Vec<f64> {
        let f = p.spd_factors();
        let half = sym_exp(&(Self::white_mat(p, dir) * 0.5));
        let e = &f.sqrt * half * &f.inv_sqrt;
        let out = &e * from_row_major(size(p), w) * e.transpose();
        to_row_major(&((&out + out.transpose()) * 0.5))
    }

    fn basis(&self, p: &ManifoldPoint) -> Vec<Vec<f64>> {
        identity_basis(size(p))
            .iter()
            .map(|b| Self::unwhite_mat(p, b))
            .collect()
    }

    fn curvature(&self, p: &ManifoldPoint, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let (u, v, w) = (Self::white_mat(p, u), Self::white_mat(p, v), Self::white_mat(p, w));
        let r = commutator(&commutator(&u, &v), &w) * -0.25;
        Self::unwhite_mat(p, &r)
    }

    fn eigenframe_white(&self, p: &ManifoldPoint, v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = size(p);
        let d = n * (n + 1) / 2;
        let vt = Self::white_mat(p, v);
        let t = vt.norm();
        if t == 0.0 {
            return (vec![0.0; d], identity_basis(n).iter().map(to_row_major).collect());
        }
        let nhat = vt / t;
        let (lam, w) = sym_eigen_desc(&nhat);
        let col = |c: usize| w.column(c).into_owned();
        let diag = (0..n).map(|c| {
            let wc = col(c);
            to_row_major(&(&wc * wc.transpose()))
        });
        let mut frame = complete_frame(vec![to_row_major(&nhat)], &[], diag, n);
        let mut kappas = vec![0.0; frame.len()];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for c in 0..n {
            for e in (c + 1)..n {
                let (wc, we) = (col(c), col(e));
                let m = (&wc * we.transpose() + &we * wc.transpose()) * s;
                frame.push(to_row_major(&m));
                kappas.push(-0.25 * (lam[c] - lam[e]).powi(2) * t * t);
            }
        }
        (kappas, frame)
    }
}
