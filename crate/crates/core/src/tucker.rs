//! Tangent-space HOSVD, truncation and Tucker reconstruction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::manifold::ManifoldPoint;
use crate::par;
use crate::tensor::{log_tensor, mode_product_raw, MvTensor, TangentTensor};

/// Relative threshold on squared singular values for rank detection.
pub const RANK_TOL: f64 = 1e-12;

/// Tucker decomposition `core ×₁ U¹ ⋯ ×ₙ Uⁿ` of a tangent tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerFactors {
    /// Core of shape `(r₁, …, rₙ)`.
    pub core: TangentTensor,
    /// `d_k × r_k` matrices with orthonormal columns.
    pub factors: Vec<DMatrix<f64>>,
    /// All `d_k` singular values of each mode, descending.
    pub singular_values: Vec<Vec<f64>>,
    /// Detected multilinear ranks.
    pub ranks: Vec<usize>,
}

impl TuckerFactors {
    pub fn base(&self) -> &ManifoldPoint {
        self.core.base()
    }

    pub fn core_shape(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn data_shape(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }
}

/// Gram matrix of mode `k` of a row-major block with `m` components per entry,
/// already expressed in whitened coordinates.
pub(crate) fn mode_gram(data: &[f64], shape: &[usize], m: usize, k: usize) -> DMatrix<f64> {
    let dk = shape[k];
    let outer: usize = shape[..k].iter().product();
    let inner: usize = shape[k + 1..].iter().product::<usize>() * m;
    let blocks = par::map_range(outer, |o| {
        let b = DMatrix::from_row_slice(dk, inner, &data[o * dk * inner..(o + 1) * dk * inner]);
        &b * b.transpose()
    });
    let g = par::tree_sum(blocks, |a, b| a + b).unwrap_or_else(|| DMatrix::zeros(dk, dk));
    (&g + g.transpose()) * 0.5
}

/// `G_ab = ⟨X_a, X_b⟩_p` summed over the columns of a mode unfolding.
pub fn gram_matrix(p: &ManifoldPoint, x: &TangentTensor) -> Result<DMatrix<f64>> {
    if x.base() != p {
        return Err(Error::BaseMismatch);
    }
    if x.order() != 2 {
        return Err(Error::ShapeMismatch(format!("expected an unfolding, got shape {:?}", x.shape())));
    }
    Ok(mode_gram(&x.whitened(), x.shape(), x.entry_dim(), 0))
}

fn svd_from_gram(g: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, usize) {
    let (vals, vecs) = sym_eigen_desc(g);
    let sigma: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    let rank = if top > 0.0 {
        vals.iter().filter(|&&v| v > RANK_TOL * top).count()
    } else {
        0
    };
    (vecs, sigma, rank)
}

fn mode_svd(log: &TangentTensor, white: &[f64], k: usize) -> (DMatrix<f64>, Vec<f64>, usize) {
    svd_from_gram(&mode_gram(white, log.shape(), log.entry_dim(), k))
}

/// Left singular vectors, singular values and detected rank of mode `k` of
/// `log_p T`. All `d_k` singular vectors are returned.
pub fn tangent_svd(p: &ManifoldPoint, t: &MvTensor, k: usize) -> Result<(DMatrix<f64>, Vec<f64>, usize)> {
    if k >= t.order() {
        return Err(Error::InvalidArgument(format!("mode {k} out of range for order {}", t.order())));
    }
    let log = log_tensor(p, t)?;
    Ok(mode_svd(&log, &log.whitened(), k))
}

/// Tangent-space HOSVD of `log_p T`.
pub fn thosvd(p: &ManifoldPoint, t: &MvTensor) -> Result<TuckerFactors> {
    Ok(thosvd_of_log(&log_tensor(p, t)?))
}

/// HOSVD of a given tangent tensor. Each factor keeps `max(R_k, 1)` columns.
pub fn thosvd_of_log(log: &TangentTensor) -> TuckerFactors {
    let white = log.whitened();
    let n = log.order();
    let mut factors = Vec::with_capacity(n);
    let mut singular_values = Vec::with_capacity(n);
    let mut ranks = Vec::with_capacity(n);
    for k in 0..n {
        let (u, s, r) = mode_svd(log, &white, k);
        factors.push(u.columns(0, r.max(1)).into_owned());
        singular_values.push(s);
        ranks.push(r);
    }
    let core = project_core(log, &factors);
    TuckerFactors {
        core,
        factors,
        singular_values,
        ranks,
    }
}

/// `X ×₁ (U¹)ᵀ ⋯ ×ₙ (Uⁿ)ᵀ`.
pub fn project_core(x: &TangentTensor, factors: &[DMatrix<f64>]) -> TangentTensor {
    let m = x.entry_dim();
    let mut data = x.data().to_vec();
    let mut shape = x.shape().to_vec();
    for (k, u) in factors.iter().enumerate() {
        let (d, s) = mode_product_raw(&data, &shape, m, &u.transpose(), k).expect("factor matches shape");
        data = d;
        shape = s;
    }
    TangentTensor::from_raw(x.base().clone(), shape, data)
}

/// Keeps the leading `r_k` columns of each factor and the matching core block.
/// Ranks above the available column count are clamped with a warning.
pub fn truncate(f: &TuckerFactors, r: &[usize]) -> Result<TuckerFactors> {
    if r.len() != f.factors.len() {
        return Err(Error::InvalidArgument(format!(
            "rank tuple has {} entries, tensor has order {}",
            r.len(),
            f.factors.len()
        )));
    }
    if r.contains(&0) {
        return Err(Error::InvalidArgument("ranks must be at least 1".into()));
    }
    let m = f.core.entry_dim();
    let mut data = f.core.data().to_vec();
    let mut shape = f.core.shape().to_vec();
    let mut factors = Vec::with_capacity(r.len());
    for (k, (&want, u)) in r.iter().zip(&f.factors).enumerate() {
        let avail = u.ncols();
        let keep = if want > avail {
            log::warn!("rank {want} in mode {k} exceeds detected rank {avail}; clamped");
            avail
        } else {
            want
        };
        factors.push(u.columns(0, keep).into_owned());
        if keep < avail {
            let sel = DMatrix::identity(keep, avail);
            let (d, s) = mode_product_raw(&data, &shape, m, &sel, k)?;
            data = d;
            shape = s;
        }
    }
    Ok(TuckerFactors {
        core: TangentTensor::from_raw(f.core.base().clone(), shape, data),
        factors,
        singular_values: f.singular_values.clone(),
        ranks: f.ranks.clone(),
    })
}

/// `core ×₁ U¹ ⋯ ×ₙ Uⁿ`.
pub fn reconstruct(f: &TuckerFactors) -> TangentTensor {
    let m = f.core.entry_dim();
    let mut data = f.core.data().to_vec();
    let mut shape = f.core.shape().to_vec();
    for (k, u) in f.factors.iter().enumerate() {
        let (d, s) = mode_product_raw(&data, &shape, m, u, k).expect("factor matches core");
        data = d;
        shape = s;
    }
    TangentTensor::from_raw(f.core.base().clone(), shape, data)
}
