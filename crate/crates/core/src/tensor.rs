//! Manifold-valued tensors and tangent tensors at a shared base point.
//!
//! Entries are stored flat in row-major order. Mode indices are 0-based.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{ManifoldDescriptor, ManifoldPoint, TangentVector};
use crate::par;

pub fn num_entries(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major flat index of a multi-index.
pub fn flat_index(shape: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), idx.len());
    idx.iter().zip(shape).fold(0, |acc, (&i, &d)| acc * d + i)
}

/// Inverse of [`flat_index`].
pub fn multi_index(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::ShapeMismatch(format!("shape {shape:?} must be non-empty and positive")));
    }
    Ok(())
}

/// A tensor of points on a common manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct MvTensor {
    descriptor: ManifoldDescriptor,
    shape: Vec<usize>,
    entries: Vec<ManifoldPoint>,
}

impl MvTensor {
    pub fn new(shape: Vec<usize>, entries: Vec<ManifoldPoint>) -> Result<Self> {
        check_shape(&shape)?;
        if entries.len() != num_entries(&shape) {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {} entries, got {}",
                num_entries(&shape),
                entries.len()
            )));
        }
        let descriptor = entries[0].descriptor();
        if let Some(bad) = entries.iter().find(|e| e.descriptor() != descriptor) {
            return Err(Error::DescriptorMismatch(format!("{:?} vs {:?}", bad.descriptor(), descriptor)));
        }
        Ok(Self {
            descriptor,
            shape,
            entries,
        })
    }

    /// Every entry equal to `p`.
    pub fn constant(p: &ManifoldPoint, shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let entries = vec![p.clone(); num_entries(&shape)];
        Self::new(shape, entries)
    }

    pub fn descriptor(&self) -> ManifoldDescriptor {
        self.descriptor
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ManifoldPoint] {
        &self.entries
    }

    pub fn get(&self, idx: &[usize]) -> &ManifoldPoint {
        &self.entries[flat_index(&self.shape, idx)]
    }
}

/// A tensor of tangent vectors at one base point, stored as one flat block
/// of ambient coordinates (`entries × embedding_dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentTensor {
    base: ManifoldPoint,
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TangentTensor {
    pub fn zeros(base: ManifoldPoint, shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        let n = num_entries(&shape) * base.descriptor().embedding_dim();
        Ok(Self {
            base,
            shape,
            data: vec![0.0; n],
        })
    }

    pub fn from_entries(base: ManifoldPoint, shape: Vec<usize>, entries: &[TangentVector]) -> Result<Self> {
        check_shape(&shape)?;
        if entries.len() != num_entries(&shape) {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {} entries, got {}",
                num_entries(&shape),
                entries.len()
            )));
        }
        let mut data = Vec::with_capacity(entries.len() * base.descriptor().embedding_dim());
        for e in entries {
            if e.base() != &base {
                return Err(Error::BaseMismatch);
            }
            data.extend_from_slice(e.coords());
        }
        Ok(Self { base, shape, data })
    }

    /// Validates every entry as a tangent vector at `base`.
    pub fn from_coords(base: ManifoldPoint, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let m = base.descriptor().embedding_dim();
        if data.len() != num_entries(&shape) * m {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {} coordinates, got {}",
                num_entries(&shape) * m,
                data.len()
            )));
        }
        for chunk in data.chunks(m.max(1)) {
            TangentVector::new(base.clone(), chunk.to_vec())?;
        }
        Ok(Self { base, shape, data })
    }

    pub(crate) fn from_raw(base: ManifoldPoint, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), num_entries(&shape) * base.descriptor().embedding_dim());
        Self { base, shape, data }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        num_entries(&self.shape)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn entry_dim(&self) -> usize {
        self.base.descriptor().embedding_dim()
    }

    pub fn entry_coords(&self, i: usize) -> &[f64] {
        let m = self.entry_dim();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn entry(&self, i: usize) -> TangentVector {
        TangentVector::trusted(self.base.clone(), self.entry_coords(i).to_vec())
    }

    pub fn get(&self, idx: &[usize]) -> TangentVector {
        self.entry(flat_index(&self.shape, idx))
    }

    fn check_compatible(&self, other: &TangentTensor) -> Result<()> {
        if self.base != other.base {
            return Err(Error::BaseMismatch);
        }
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, s: f64, other: &TangentTensor) -> Result<Self> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Ok(Self::from_raw(self.base.clone(), self.shape.clone(), data))
    }

    pub fn sub(&self, other: &TangentTensor) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_raw(self.base.clone(), self.shape.clone(), self.data.iter().map(|x| s * x).collect())
    }

    /// Same entries under a new shape with the same number of entries.
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Self> {
        check_shape(&shape)?;
        if num_entries(&shape) != self.len() {
            return Err(Error::ShapeMismatch(format!("cannot reshape {:?} to {shape:?}", self.shape)));
        }
        Ok(Self::from_raw(self.base.clone(), shape, self.data.clone()))
    }

    /// Ambient coordinates in which the metric at the base is Euclidean.
    pub(crate) fn whitened(&self) -> Vec<f64> {
        let m = self.entry_dim();
        let space = self.base.space();
        if matches!(self.base.descriptor().kind(), crate::manifold::ManifoldKind::Spd) {
            let chunks = par::map_range(self.len(), |i| space.whiten(&self.base, &self.data[i * m..(i + 1) * m]));
            chunks.concat()
        } else {
            self.data.clone()
        }
    }
}

/// Entrywise `log_p`. A cut-locus failure reports the offending multi-index.
pub fn log_tensor(p: &ManifoldPoint, t: &MvTensor) -> Result<TangentTensor> {
    if p.descriptor() != t.descriptor {
        return Err(Error::DescriptorMismatch(format!("{:?} vs {:?}", p.descriptor(), t.descriptor)));
    }
    let space = p.space();
    let parts = par::try_map_range(t.len(), |i| {
        space.log(p, &t.entries[i]).map_err(|e| match e {
            Error::CutLocus(_) => Error::CutLocus(Some(multi_index(&t.shape, i))),
            other => other,
        })
    })?;
    Ok(TangentTensor::from_raw(p.clone(), t.shape.clone(), parts.concat()))
}

/// Entrywise `exp_p`.
pub fn exp_tensor(p: &ManifoldPoint, x: &TangentTensor) -> Result<MvTensor> {
    if x.base != *p {
        return Err(Error::BaseMismatch);
    }
    let space = p.space();
    let entries = par::try_map_range(x.len(), |i| space.exp(p, x.entry_coords(i)))?;
    MvTensor::new(x.shape.clone(), entries)
}

/// Product-metric distance `√(Σ d(Aᵢ, Bᵢ)²)`.
pub fn tensor_distance(a: &MvTensor, b: &MvTensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape, b.shape)));
    }
    if a.descriptor != b.descriptor {
        return Err(Error::DescriptorMismatch(format!("{:?} vs {:?}", a.descriptor, b.descriptor)));
    }
    let space = a.descriptor.space();
    let d2 = par::map_range(a.len(), |i| space.distance(&a.entries[i], &b.entries[i]).powi(2));
    Ok(d2.iter().sum::<f64>().sqrt())
}

/// Product-metric norm `√(Σ ‖Xᵢ‖²_p)`.
pub fn tangent_norm(x: &TangentTensor) -> f64 {
    tangent_norm_sq(x).sqrt()
}

pub(crate) fn tangent_norm_sq(x: &TangentTensor) -> f64 {
    let w = x.whitened();
    w.iter().map(|v| v * v).sum()
}

/// Mode-`k` unfolding to shape `(d_k, ∏_{l≠k} d_l)`; columns enumerate the
/// remaining indices in row-major order.
pub fn unfold(x: &TangentTensor, k: usize) -> Result<TangentTensor> {
    let n = x.order();
    if k >= n {
        return Err(Error::InvalidArgument(format!("mode {k} out of range for order {n}")));
    }
    let dk = x.shape[k];
    let cols = x.len() / dk;
    let m = x.entry_dim();
    let mut data = vec![0.0; x.data.len()];
    for flat in 0..x.len() {
        let idx = multi_index(&x.shape, flat);
        let row = idx[k];
        let col = idx
            .iter()
            .zip(&x.shape)
            .enumerate()
            .filter(|(l, _)| *l != k)
            .fold(0, |acc, (_, (&i, &d))| acc * d + i);
        let dst = row * cols + col;
        data[dst * m..(dst + 1) * m].copy_from_slice(x.entry_coords(flat));
    }
    Ok(TangentTensor::from_raw(x.base.clone(), vec![dk, cols], data))
}

/// Inverse of [`unfold`] for a tensor of the given `shape`.
pub fn fold(u: &TangentTensor, k: usize, shape: &[usize]) -> Result<TangentTensor> {
    check_shape(shape)?;
    if k >= shape.len() || u.shape != [shape[k], num_entries(shape) / shape[k]] {
        return Err(Error::ShapeMismatch(format!(
            "unfolding {:?} does not match mode {k} of {shape:?}",
            u.shape
        )));
    }
    let m = u.entry_dim();
    let cols = u.shape[1];
    let mut data = vec![0.0; u.data.len()];
    for flat in 0..num_entries(shape) {
        let idx = multi_index(shape, flat);
        let col = idx
            .iter()
            .zip(shape)
            .enumerate()
            .filter(|(l, _)| *l != k)
            .fold(0, |acc, (_, (&i, &d))| acc * d + i);
        let src = idx[k] * cols + col;
        data[flat * m..(flat + 1) * m].copy_from_slice(u.entry_coords(src));
    }
    Ok(TangentTensor::from_raw(u.base.clone(), shape.to_vec(), data))
}

/// Mode-`k` product `(X ×_k M)_{…j…} = Σ_s X_{…s…} M_{j,s}`.
pub fn mode_k_product(x: &TangentTensor, mat: &DMatrix<f64>, k: usize) -> Result<TangentTensor> {
    let (data, shape) = mode_product_raw(&x.data, &x.shape, x.entry_dim(), mat, k)?;
    Ok(TangentTensor::from_raw(x.base.clone(), shape, data))
}

/// Mode product on a raw row-major block whose entries have `m` components.
pub(crate) fn mode_product_raw(
    data: &[f64],
    shape: &[usize],
    m: usize,
    mat: &DMatrix<f64>,
    k: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if k >= shape.len() {
        return Err(Error::InvalidArgument(format!("mode {k} out of range for order {}", shape.len())));
    }
    if mat.ncols() != shape[k] {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, mode {k} has size {}",
            mat.ncols(),
            shape[k]
        )));
    }
    let dk = shape[k];
    let rows = mat.nrows();
    let outer: usize = shape[..k].iter().product();
    let inner: usize = shape[k + 1..].iter().product::<usize>() * m;
    let blocks = par::map_range(outer, |o| {
        let src = &data[o * dk * inner..(o + 1) * dk * inner];
        let mut out = vec![0.0; rows * inner];
        for j in 0..rows {
            let dst = &mut out[j * inner..(j + 1) * inner];
            for s in 0..dk {
                let a = mat[(j, s)];
                if a != 0.0 {
                    crate::linalg::axpy(a, &src[s * inner..(s + 1) * inner], dst);
                }
            }
        }
        out
    });
    let mut new_shape = shape.to_vec();
    new_shape[k] = rows;
    Ok((blocks.concat(), new_shape))
}

/// Applies `mats[i]` along `modes[i]` in sequence.
pub fn multi_mode_product(x: &TangentTensor, mats: &[DMatrix<f64>], modes: &[usize]) -> Result<TangentTensor> {
    if mats.len() != modes.len() {
        return Err(Error::InvalidArgument(format!(
            "{} matrices for {} modes",
            mats.len(),
            modes.len()
        )));
    }
    let mut out = x.clone();
    for (m, &k) in mats.iter().zip(modes) {
        out = mode_k_product(&out, m, k)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euc_tensor(shape: Vec<usize>, vals: &[f64]) -> TangentTensor {
        let p = ManifoldPoint::euclidean(vec![0.0]);
        TangentTensor::from_coords(p, shape, vals.to_vec()).unwrap()
    }

    #[test]
    fn index_round_trip() {
        let shape = [2, 3, 4];
        for f in 0..24 {
            assert_eq!(flat_index(&shape, &multi_index(&shape, f)), f);
        }
        assert_eq!(multi_index(&shape, 23), vec![1, 2, 3]);
    }

    #[test]
    fn unfold_2x3() {
        let x = euc_tensor(vec![2, 3], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let u0 = unfold(&x, 0).unwrap();
        assert_eq!(u0.shape(), &[2, 3]);
        assert_eq!(u0.data(), x.data());
        let u1 = unfold(&x, 1).unwrap();
        assert_eq!(u1.shape(), &[3, 2]);
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(u1.get(&[j, i]).coords(), x.get(&[i, j]).coords());
            }
        }
        assert!(unfold(&x, 2).is_err());
        assert_eq!(fold(&u1, 1, &[2, 3]).unwrap(), x);
    }

    #[test]
    fn mode_product_identity_and_zero() {
        let x = euc_tensor(vec![2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(mode_k_product(&x, &DMatrix::identity(3, 3), 1).unwrap(), x);
        let z = mode_k_product(&x, &DMatrix::zeros(4, 2), 0).unwrap();
        assert_eq!(z.shape(), &[4, 3]);
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(mode_k_product(&x, &DMatrix::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn empty_product_is_identity() {
        let x = euc_tensor(vec![2], &[1.0, 2.0]);
        assert_eq!(multi_mode_product(&x, &[], &[]).unwrap(), x);
    }

    #[test]
    fn distance_pythagoras() {
        let e = |v: f64| ManifoldPoint::euclidean(vec![v]);
        let a = MvTensor::new(vec![2], vec![e(0.0), e(0.0)]).unwrap();
        let b = MvTensor::new(vec![2], vec![e(3.0), e(4.0)]).unwrap();
        assert_eq!(tensor_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(tensor_distance(&a, &a).unwrap(), 0.0);
    }
}
