//! Symmetric Riemannian manifolds in embedded coordinates.
//!
//! Points and tangent vectors are stored as flat coordinate vectors in an
//! ambient space: `ℝᵈ` for the Euclidean space, `ℝᵈ⁺¹` for the unit sphere
//! `𝕊ᵈ`, and row-major `n × n` symmetric matrices for `𝒫(n)` with the
//! affine-invariant metric `⟨U, V⟩_p = tr(p⁻¹ U p⁻¹ V)`.
//!
//! Every space implements [`SymmetricSpace`]; the public free functions in
//! this module validate their arguments and dispatch on the descriptor.

mod euclidean;
mod frame;
mod spd;
mod sphere;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use frame::complete_frame;

/// Sphere log maps are refused this close to the antipode.
pub const CUT_LOCUS_TOL: f64 = 1e-6;

/// Tolerance for point and tangent validation.
pub const VALIDATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ManifoldKind {
    Euclidean,
    Sphere,
    Spd,
}

/// Which manifold a point lives on, together with its dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManifoldDescriptor {
    kind: ManifoldKind,
    intrinsic_dim: usize,
    embedding_dim: usize,
}

impl ManifoldDescriptor {
    pub fn euclidean(d: usize) -> Self {
        Self {
            kind: ManifoldKind::Euclidean,
            intrinsic_dim: d,
            embedding_dim: d,
        }
    }

    /// The unit sphere `𝕊ᵈ ⊂ ℝᵈ⁺¹`.
    pub fn sphere(d: usize) -> Self {
        Self {
            kind: ManifoldKind::Sphere,
            intrinsic_dim: d,
            embedding_dim: d + 1,
        }
    }

    /// Symmetric positive definite `n × n` matrices.
    pub fn spd(n: usize) -> Self {
        Self {
            kind: ManifoldKind::Spd,
            intrinsic_dim: n * (n + 1) / 2,
            embedding_dim: n * n,
        }
    }

    /// Rebuilds a descriptor from stored dimensions, checking consistency.
    pub fn from_parts(kind: ManifoldKind, intrinsic_dim: usize, embedding_dim: usize) -> Result<Self> {
        let d = match kind {
            ManifoldKind::Euclidean => Self::euclidean(intrinsic_dim),
            ManifoldKind::Sphere => Self::sphere(intrinsic_dim),
            ManifoldKind::Spd => {
                let n = (embedding_dim as f64).sqrt().round() as usize;
                Self::spd(n)
            }
        };
        if d.intrinsic_dim != intrinsic_dim || d.embedding_dim != embedding_dim {
            return Err(Error::InvalidArgument(format!(
                "inconsistent dimensions for {kind:?}: intrinsic {intrinsic_dim}, embedding {embedding_dim}"
            )));
        }
        Ok(d)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    /// Matrix size `n` for `𝒫(n)`.
    pub fn matrix_size(&self) -> Option<usize> {
        match self.kind {
            ManifoldKind::Spd => Some((self.embedding_dim as f64).sqrt().round() as usize),
            _ => None,
        }
    }

    pub(crate) fn space(&self) -> &'static dyn SymmetricSpace {
        match self.kind {
            ManifoldKind::Euclidean => &euclidean::Euclidean,
            ManifoldKind::Sphere => &sphere::Sphere,
            ManifoldKind::Spd => &spd::Spd,
        }
    }
}

/// Cached square roots of an SPD point.
#[derive(Debug)]
pub(crate) struct SpdFactors {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

/// A point on a manifold, in embedded coordinates.
#[derive(Clone, Debug)]
pub struct ManifoldPoint {
    descriptor: ManifoldDescriptor,
    coords: Vec<f64>,
    spd: Option<Arc<SpdFactors>>,
}

impl PartialEq for ManifoldPoint {
    fn eq(&self, other: &Self) -> bool {
        self.descriptor == other.descriptor && self.coords == other.coords
    }
}

impl ManifoldPoint {
    /// Validates `coords` against the manifold invariants.
    pub fn new(descriptor: ManifoldDescriptor, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != descriptor.embedding_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} coordinates, got {}",
                descriptor.embedding_dim,
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinate {bad}")));
        }
        descriptor.space().validate_point(&descriptor, &coords)?;
        Self::assemble(descriptor, coords)
    }

    /// Builds a point whose coordinates are correct by construction (up to
    /// rounding); the sphere is renormalised and SPD matrices symmetrised.
    pub(crate) fn trusted(descriptor: ManifoldDescriptor, mut coords: Vec<f64>) -> Result<Self> {
        match descriptor.kind {
            ManifoldKind::Sphere => {
                let n = crate::linalg::norm(&coords);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::InvalidPoint("degenerate sphere point".into()));
                }
                coords.iter_mut().for_each(|x| *x /= n);
            }
            ManifoldKind::Spd => {
                let n = descriptor.matrix_size().unwrap_or(0);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let m = 0.5 * (coords[i * n + j] + coords[j * n + i]);
                        coords[i * n + j] = m;
                        coords[j * n + i] = m;
                    }
                }
            }
            ManifoldKind::Euclidean => {}
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        Self::assemble(descriptor, coords)
    }

    fn assemble(descriptor: ManifoldDescriptor, coords: Vec<f64>) -> Result<Self> {
        let spd = match descriptor.kind {
            ManifoldKind::Spd => Some(Arc::new(spd::factors(&descriptor, &coords)?)),
            _ => None,
        };
        Ok(Self {
            descriptor,
            coords,
            spd,
        })
    }

    pub fn euclidean(coords: Vec<f64>) -> Self {
        let d = ManifoldDescriptor::euclidean(coords.len());
        Self {
            descriptor: d,
            coords,
            spd: None,
        }
    }

    pub fn sphere(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidPoint("empty sphere point".into()));
        }
        Self::new(ManifoldDescriptor::sphere(coords.len() - 1), coords)
    }

    /// The point `e_{d+1} = (0, …, 0, 1)` of `𝕊ᵈ`.
    pub fn north_pole(d: usize) -> Self {
        let mut c = vec![0.0; d + 1];
        c[d] = 1.0;
        Self {
            descriptor: ManifoldDescriptor::sphere(d),
            coords: c,
            spd: None,
        }
    }

    pub fn spd(matrix: &DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::DimensionMismatch("SPD point must be square".into()));
        }
        Self::new(ManifoldDescriptor::spd(n), crate::linalg::to_row_major(matrix))
    }

    pub fn spd_identity(n: usize) -> Self {
        Self::spd(&DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn descriptor(&self) -> ManifoldDescriptor {
        self.descriptor
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// The point as an `n × n` matrix (SPD only).
    pub fn as_matrix(&self) -> Option<DMatrix<f64>> {
        self.descriptor
            .matrix_size()
            .map(|n| crate::linalg::from_row_major(n, &self.coords))
    }

    pub(crate) fn spd_factors(&self) -> &SpdFactors {
        self.spd.as_deref().expect("SPD point carries its factors")
    }

    pub(crate) fn space(&self) -> &'static dyn SymmetricSpace {
        self.descriptor.space()
    }

    pub(crate) fn check_same(&self, other: &ManifoldPoint) -> Result<()> {
        if self.descriptor != other.descriptor {
            return Err(Error::DescriptorMismatch(format!(
                "{:?} vs {:?}",
                self.descriptor, other.descriptor
            )));
        }
        Ok(())
    }

    pub(crate) fn zero_tangent(&self) -> Vec<f64> {
        vec![0.0; self.descriptor.embedding_dim]
    }
}

/// A tangent vector, stored in the ambient coordinates of its base point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    coords: Vec<f64>,
}

impl TangentVector {
    /// Validates that `coords` is tangent at `base`.
    pub fn new(base: ManifoldPoint, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != base.descriptor.embedding_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} tangent coordinates, got {}",
                base.descriptor.embedding_dim,
                coords.len()
            )));
        }
        base.space().check_tangent(&base, &coords)?;
        Ok(Self { base, coords })
    }

    pub(crate) fn trusted(base: ManifoldPoint, coords: Vec<f64>) -> Self {
        debug_assert_eq!(coords.len(), base.descriptor.embedding_dim);
        Self { base, coords }
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        let coords = base.zero_tangent();
        Self { base, coords }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            base: self.base.clone(),
            coords: self.coords.iter().map(|x| s * x).collect(),
        }
    }

    /// `self + s · other`; both must share the base point.
    pub fn add_scaled(&self, s: f64, other: &TangentVector) -> Result<Self> {
        if self.base != other.base {
            return Err(Error::BaseMismatch);
        }
        let mut coords = self.coords.clone();
        crate::linalg::axpy(s, &other.coords, &mut coords);
        Ok(Self {
            base: self.base.clone(),
            coords,
        })
    }
}

/// Kernels of a symmetric Riemannian manifold on raw ambient coordinates.
///
/// Arguments are assumed valid; the checked public API lives in the free
/// functions of this module.
pub(crate) trait SymmetricSpace: Sync {
    fn validate_point(&self, desc: &ManifoldDescriptor, coords: &[f64]) -> Result<()>;

    fn check_tangent(&self, p: &ManifoldPoint, v: &[f64]) -> Result<()>;

    fn exp(&self, p: &ManifoldPoint, v: &[f64]) -> Result<ManifoldPoint>;

    fn log(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> Result<Vec<f64>>;

    fn distance(&self, p: &ManifoldPoint, x: &ManifoldPoint) -> f64;

    /// Coordinates in which the metric at `p` is the Euclidean dot product.
    fn whiten(&self, p: &ManifoldPoint, v: &[f64]) -> Vec<f64>;

    /// Inverse of [`SymmetricSpace::whiten`].
    fn unwhiten(&self, p: &ManifoldPoint, w: &[f64]) -> Vec<f64>;

    fn inner(&self, p: &ManifoldPoint, u: &[f64], v: &[f64]) -> f64 {
        crate::linalg::dot(&self.whiten(p, u), &self.whiten(p, v))
    }

    /// Parallel transport of `w` along `t ↦ exp_p(t · dir)`, `t ∈ [0, 1]`.
    fn transport_along(&self, p: &ManifoldPoint, dir: &[f64], w: &[f64]) -> Vec<f64>;

    fn basis(&self, p: &ManifoldPoint) -> Vec<Vec<f64>>;

    /// `R(u, v) w`.
    fn curvature(&self, p: &ManifoldPoint, u: &[f64], v: &[f64], w: &[f64]) -> Vec<f64>;

    /// Eigenpairs of `θ ↦ R(θ, v) v` in whitened coordinates, first vector
    /// `v / ‖v‖` with eigenvalue 0.
    fn eigenframe_white(&self, p: &ManifoldPoint, v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>);

    fn eigenframe(&self, p: &ManifoldPoint, v: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (k, f) = self.eigenframe_white(p, v);
        (k, f.iter().map(|w| self.unwhiten(p, w)).collect())
    }
}

fn check_base(p: &ManifoldPoint, v: &TangentVector) -> Result<()> {
    if v.base.descriptor != p.descriptor || v.base.coords != p.coords {
        return Err(Error::BaseMismatch);
    }
    Ok(())
}

/// Exponential map `exp_p(v)`.
pub fn exp_map(p: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    check_base(p, v)?;
    p.space().exp(p, &v.coords)
}

/// Logarithmic map `log_p(x)`; fails with [`Error::CutLocus`] on the sphere
/// when `d(p, x) ≥ π − 1e-6`.
pub fn log_map(p: &ManifoldPoint, x: &ManifoldPoint) -> Result<TangentVector> {
    p.check_same(x)?;
    let coords = p.space().log(p, x)?;
    Ok(TangentVector::trusted(p.clone(), coords))
}

/// Geodesic distance.
pub fn distance(p: &ManifoldPoint, x: &ManifoldPoint) -> Result<f64> {
    p.check_same(x)?;
    Ok(p.space().distance(p, x))
}

/// Riemannian inner product at `p`.
pub fn inner(p: &ManifoldPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
    check_base(p, u)?;
    check_base(p, v)?;
    Ok(p.space().inner(p, &u.coords, &v.coords))
}

pub fn norm(v: &TangentVector) -> f64 {
    v.base.space().inner(&v.base, &v.coords, &v.coords).max(0.0).sqrt()
}

/// Parallel transport of `v` from `p` to `q` along the minimizing geodesic.
pub fn parallel_transport(p: &ManifoldPoint, q: &ManifoldPoint, v: &TangentVector) -> Result<TangentVector> {
    check_base(p, v)?;
    p.check_same(q)?;
    let dir = p.space().log(p, q)?;
    let coords = p.space().transport_along(p, &dir, &v.coords);
    Ok(TangentVector::trusted(q.clone(), coords))
}

/// Deterministic orthonormal basis of `T_p M` with `dim M` vectors.
pub fn orthonormal_basis(p: &ManifoldPoint) -> Vec<TangentVector> {
    p.space()
        .basis(p)
        .into_iter()
        .map(|c| TangentVector::trusted(p.clone(), c))
        .collect()
}

/// Riemann curvature tensor `R(u, v) w` at `p`.
pub fn curvature_operator(
    p: &ManifoldPoint,
    u: &TangentVector,
    v: &TangentVector,
    w: &TangentVector,
) -> Result<TangentVector> {
    check_base(p, u)?;
    check_base(p, v)?;
    check_base(p, w)?;
    let c = p.space().curvature(p, &u.coords, &v.coords, &w.coords);
    Ok(TangentVector::trusted(p.clone(), c))
}

/// Orthonormal eigenframe of `θ ↦ R(θ, v) v` with its eigenvalues.
///
/// The first vector is `v / ‖v‖` with eigenvalue 0, followed by the rest of
/// the frame in a fixed order. For `v = 0` the orthonormal basis is returned
/// with all eigenvalues zero.
pub fn curvature_eigenbasis(p: &ManifoldPoint, v: &TangentVector) -> Result<(Vec<f64>, Vec<TangentVector>)> {
    check_base(p, v)?;
    let (kappas, frame) = p.space().eigenframe(p, &v.coords);
    let frame = frame
        .into_iter()
        .map(|c| TangentVector::trusted(p.clone(), c))
        .collect();
    Ok((kappas, frame))
}

/// Isotropic Gaussian tangent vector with per-coordinate `variance` in the
/// coordinates of [`orthonormal_basis`].
pub fn random_tangent<R: Rng + ?Sized>(p: &ManifoldPoint, variance: f64, rng: &mut R) -> Result<TangentVector> {
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(Error::InvalidArgument(format!("variance must be nonnegative, got {variance}")));
    }
    let sd = variance.sqrt();
    let basis = p.space().basis(p);
    let mut coords = p.zero_tangent();
    for b in &basis {
        let z: f64 = StandardNormal.sample(rng);
        crate::linalg::axpy(sd * z, b, &mut coords);
    }
    Ok(TangentVector::trusted(p.clone(), coords))
}
