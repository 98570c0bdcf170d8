use super::frame::unit;
use super::{ManifoldDescriptor, ManifoldPoint, SymmetricSpace};
use crate::error::Result;
use crate::linalg::dist;

pub(crate) struct Euclidean;

impl SymmetricSpace for Euclidean {
    fn validate_point(&self, _desc: &ManifoldDescriptor, _coords: &[f64]) -> Result<()> {
        Ok(())
    }

    fn check_tangent(&self, _p: &ManifoldPoint, _v: &[f64]) -> Result<()> {
        Ok(())
    }

    fn exp(&self, p: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint> {
        let c = p.coords().iter().zip(v).map(|(a, b)| a + b).collect();
        ManifoldPoint::trusted(p.descriptor(), c)
    }

    fn log(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> Result<Vec<f64>> {
        Ok(x.coords().iter().zip(p.coords()).map(|(a, b)| a - b).collect())
    }

    fn distance(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> f64 {
        dist(p.coords(), x.coords())
    }

    fn whiten(&self, _p: &ManifoldPoint, v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn unwhiten(&self, _p: &ManifoldPoint, w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }

    fn transport_along(&self, _p: &ManifoldPoint, _dir: &[f64], w: &[f64]) -> Vec<f64> {
        w.to_vec()
    }

    fn basis(&self, p: &ManifoldPoint) -> Vec<Vec<f64>> {
        let d = p.descriptor().embedding_dim();
        (0..d).map(|i| unit(d, i)).collect()
    }

    fn curvature(&self, p: &ManifoldPoint, _u: &[f64], _v: &[f64], _w: &[f64]) -> Vec<f64> {
        p.zero_tangent()
    }

    fn eigenframe_white(&self, p: &ManifoldPoint, v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = p.descriptor().embedding_dim();
        let n = crate::linalg::norm(v);
        let frame = if n > 0.0 {
            let seed = vec![v.iter().map(|x| x / n).collect()];
            super::complete_frame(seed, &[], (0..d).map(|i| unit(d, i)), d)
        } else {
            self.basis(p)
        };
        (vec![0.0; d], frame)
    }
}
