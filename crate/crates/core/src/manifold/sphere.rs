use std::f64::consts::PI;

use super::frame::unit;
use super::{complete_frame, ManifoldDescriptor, ManifoldPoint, SymmetricSpace, CUT_LOCUS_TOL, VALIDATION_TOL};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};

pub(crate) struct Sphere;

impl Sphere {
    fn project(p: &[f64], mut c: Vec<f64>) -> Vec<f64> {
        let a = dot(&c, p);
        axpy(-a, p, &mut c);
        c
    }
}

impl SymmetricSpace for Sphere {
    fn validate_point(&self, _desc: &ManifoldDescriptor, coords: &[f64]) -> Result<()> {
        let n = norm(coords);
        if (n - 1.0).abs() > VALIDATION_TOL {
            return Err(Error::InvalidPoint(format!("sphere point has norm {n}")));
        }
        Ok(())
    }

    fn check_tangent(&self, p: &ManifoldPoint, v: &[f64]) -> Result<()> {
        let a = dot(p.coords(), v);
        if a.abs() > VALIDATION_TOL * norm(v).max(1.0) {
            return Err(Error::InvalidTangent(format!("not orthogonal to the base point (dot {a:e})")));
        }
        Ok(())
    }

    fn exp(&self, p: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint> {
        let t = norm(v);
        if t == 0.0 {
            return Ok(p.clone());
        }
        let (s, c) = t.sin_cos();
        let out: Vec<f64> = p.coords().iter().zip(v).map(|(pi, vi)| c * pi + s * vi / t).collect();
        ManifoldPoint::trusted(p.descriptor(), out)
    }

    fn log(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> Result<Vec<f64>> {
        let d = self.distance(p, x);
        if d >= PI - CUT_LOCUS_TOL {
            return Err(Error::CutLocus(None));
        }
        let u = Self::project(p.coords(), x.coords().to_vec());
        let n = norm(&u);
        if n == 0.0 || d == 0.0 {
            return Ok(p.zero_tangent());
        }
        Ok(u.into_iter().map(|x| d * x / n).collect())
    }

    fn distance(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> f64 {
        let (mut a, mut b) = (0.0, 0.0);
        for (pi, xi) in p.coords().iter().zip(x.coords()) {
            a += (xi - pi) * (xi - pi);
            b += (xi + pi) * (xi + pi);
        }
        2.0 * a.sqrt().atan2(b.sqrt())
    }

    fn whiten(&self, _p: &ManifoldPoint, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn unwhiten(&self, _p: &ManifoldPoint, w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }

    fn transport_along(&self, p: &ManifoldPoint, dir: &[f64], w: &[f64]) -> Vec<f64> {
        let t = norm(dir);
        if t == 0.0 {
            return w.to_vec();
        }
        let (s, c) = t.sin_cos();
        let a = dot(w, dir) / t;
        let mut out = w.to_vec();
        // the component along e = dir/t rotates into -sin t p + cos t e
        for ((o, pi), di) in out.iter_mut().zip(p.coords()).zip(dir) {
            let e = di / t;
            *o += a * (-s * pi + (c - 1.0) * e);
        }
        out
    }

    fn basis(&self, p: &ManifoldPoint) -> Vec<Vec<f64>> {
        let m = p.descriptor().embedding_dim();
        let d = p.descriptor().intrinsic_dim();
        let pc = p.coords().to_vec();
        let cands = (0..m).map(|i| Self::project(&pc, unit(m, i)));
        complete_frame(Vec::new(), std::slice::from_ref(&pc), cands, d)
    }

    fn curvature(&self, _p: &ManifoldPoint, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64> {
        let vw = dot(v, w);
        let uw = dot(u, w);
        u.iter().zip(v).map(|(ui, vi)| vw * ui - uw * vi).collect()
    }

    fn eigenframe_white(&self, p: &ManifoldPoint, v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = p.descriptor().intrinsic_dim();
        let t = norm(v);
        if t == 0.0 {
            return (vec![0.0; d], self.basis(p));
        }
        let m = p.descriptor().embedding_dim();
        let pc = p.coords().to_vec();
        let seed = vec![v.iter().map(|x| x / t).collect()];
        let cands = (0..m).map(|i| Self::project(&pc, unit(m, i)));
        let frame = complete_frame(seed, std::slice::from_ref(&pc), cands, d);
        let mut kappas = vec![t * t; d];
        kappas[0] = 0.0;
        (kappas, frame)
    }
}
