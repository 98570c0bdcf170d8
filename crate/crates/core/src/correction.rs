//! Curvature-corrected loss `F(·; κ)` and CC-tHOSVD.
//!
//! With `θ_ej` the curvature eigenframe of entry `e` and `κ_ej` its
//! eigenvalues, the loss is `F(Ξ; κ) = Σ β(κ_ej)² ⟨Ξ_e − log_p T_e, θ_ej⟩²`.
//! For fixed factors `Uᵏ` it is quadratic in the core coefficients `𝓥`
//! (core `= Σ_i 𝓥[·, i] φ_i` for an orthonormal basis `φ` at `p`), and the
//! minimiser solves the normal system `𝓐 𝓥 = rhs`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::manifold::{ManifoldPoint, TangentVector};
use crate::par;
use crate::tensor::{log_tensor, mode_product_raw, multi_index, num_entries, MvTensor, TangentTensor};
use crate::tucker::{thosvd_of_log, truncate, TuckerFactors};

/// Above this many unknowns the normal operator is applied matrix-free.
pub const DENSE_LIMIT: usize = 4096;
/// Relative tolerance of the conjugate gradient solve.
pub const CG_TOL: f64 = 1e-10;
/// Accepted relative residual of a solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Curvature eigenvalues at or above `π² − KAPPA_MARGIN` are rejected.
pub const KAPPA_MARGIN: f64 = 1e-9;

/// `sin(√κ)/√κ` for `κ > 0`, `sinh(√−κ)/√−κ` for `κ < 0`, and 1 at 0.
pub fn beta(kappa: f64) -> f64 {
    if kappa.abs() < 1e-6 {
        1.0 - kappa / 6.0 + kappa * kappa / 120.0 - kappa * kappa * kappa / 5040.0
    } else if kappa > 0.0 {
        let s = kappa.sqrt();
        s.sin() / s
    } else {
        let s = (-kappa).sqrt();
        s.sinh() / s
    }
}

/// An orthonormal basis `φ` of `T_p M`, kept in ambient and whitened form.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentBasis {
    base: ManifoldPoint,
    ambient: Vec<Vec<f64>>,
    white: Vec<Vec<f64>>,
}

impl TangentBasis {
    /// The deterministic basis of [`crate::manifold::orthonormal_basis`].
    pub fn orthonormal(p: &ManifoldPoint) -> Self {
        let space = p.space();
        let ambient = space.basis(p);
        let white = ambient.iter().map(|b| space.whiten(p, b)).collect();
        Self {
            base: p.clone(),
            ambient,
            white,
        }
    }

    /// Any orthonormal basis with `dim M` members.
    pub fn from_vectors(p: &ManifoldPoint, vectors: &[TangentVector]) -> Result<Self> {
        let d = p.descriptor().intrinsic_dim();
        if vectors.len() != d {
            return Err(Error::DimensionMismatch(format!("basis needs {d} vectors, got {}", vectors.len())));
        }
        let space = p.space();
        let mut ambient = Vec::with_capacity(d);
        let mut white: Vec<Vec<f64>> = Vec::with_capacity(d);
        for v in vectors {
            if v.base() != p {
                return Err(Error::BaseMismatch);
            }
            ambient.push(v.coords().to_vec());
            white.push(space.whiten(p, v.coords()));
        }
        for i in 0..d {
            for j in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot(&white[i], &white[j]) - want).abs() > 1e-10 {
                    return Err(Error::InvalidArgument("basis is not orthonormal".into()));
                }
            }
        }
        Ok(Self {
            base: p.clone(),
            ambient,
            white,
        })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn len(&self) -> usize {
        self.ambient.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ambient.is_empty()
    }

    pub fn vectors(&self) -> Vec<TangentVector> {
        self.ambient
            .iter()
            .map(|c| TangentVector::trusted(self.base.clone(), c.clone()))
            .collect()
    }
}

/// Per-entry curvature eigenvalues and eigenframes of `log_p T`.
#[derive(Clone, Debug)]
pub struct CurvatureSystem {
    log: TangentTensor,
    d: usize,
    kappas: Vec<f64>,
    // whitened frames, entries × d × embedding_dim
    frames: Vec<f64>,
    // ⟨log_p T_e, θ_ej⟩, entries × d
    log_coeffs: Vec<f64>,
}

/// Computes `log_p T` and the curvature eigenframe of every entry.
pub fn build_curvature_system(p: &ManifoldPoint, t: &MvTensor) -> Result<CurvatureSystem> {
    Ok(CurvatureSystem::from_log(log_tensor(p, t)?))
}

impl CurvatureSystem {
    pub fn from_log(log: TangentTensor) -> Self {
        let p = log.base().clone();
        let space = p.space();
        let d = p.descriptor().intrinsic_dim();
        let parts = par::map_range(log.len(), |e| {
            let v = log.entry_coords(e);
            let (k, f) = space.eigenframe_white(&p, v);
            let w = space.whiten(&p, v);
            let c: Vec<f64> = f.iter().map(|t| dot(&w, t)).collect();
            (k, f.concat(), c)
        });
        let mut kappas = Vec::with_capacity(log.len() * d);
        let mut frames = Vec::with_capacity(log.len() * d * log.entry_dim());
        let mut log_coeffs = Vec::with_capacity(log.len() * d);
        for (k, f, c) in parts {
            kappas.extend(k);
            frames.extend(f);
            log_coeffs.extend(c);
        }
        Self {
            log,
            d,
            kappas,
            frames,
            log_coeffs,
        }
    }

    pub fn base(&self) -> &ManifoldPoint {
        self.log.base()
    }

    /// Shape of the data tensor.
    pub fn shape(&self) -> &[usize] {
        self.log.shape()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.d
    }

    pub fn log_tensor(&self) -> &TangentTensor {
        &self.log
    }

    /// `κ` as a flat row-major tensor of shape `(d₁, …, dₙ, d)`.
    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn kappa(&self, entry: usize, j: usize) -> f64 {
        self.kappas[entry * self.d + j]
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn frame_white(&self, entry: usize, j: usize) -> &[f64] {
        let m = self.log.entry_dim();
        let at = (entry * self.d + j) * m;
        &self.frames[at..at + m]
    }

    /// `θ_ej` as a tangent vector at `p`.
    pub fn theta(&self, entry: usize, j: usize) -> TangentVector {
        let p = self.base();
        TangentVector::trusted(p.clone(), p.space().unwhiten(p, self.frame_white(entry, j)))
    }

    pub fn thetas(&self, entry: usize) -> Vec<TangentVector> {
        (0..self.d).map(|j| self.theta(entry, j)).collect()
    }

    /// `⟨X_e, θ_ej⟩` for every entry and frame member, entries × d.
    pub fn frame_coefficients(&self, x: &TangentTensor) -> Result<Vec<f64>> {
        if x.base() != self.base() {
            return Err(Error::BaseMismatch);
        }
        if x.shape() != self.shape() {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", x.shape(), self.shape())));
        }
        let white = x.whitened();
        let m = x.entry_dim();
        let rows = par::map_range(x.len(), |e| {
            let w = &white[e * m..(e + 1) * m];
            (0..self.d).map(|j| dot(w, self.frame_white(e, j))).collect::<Vec<_>>()
        });
        Ok(rows.concat())
    }

    /// `β(κ)²` for every entry and frame member.
    pub fn beta_sq(&self) -> Vec<f64> {
        self.kappas.iter().map(|&k| beta(k).powi(2)).collect()
    }

    fn check_kappas(&self) -> Result<()> {
        let limit = PI * PI - KAPPA_MARGIN;
        if let Some(pos) = self.kappas.iter().position(|&k| !(k < limit)) {
            let mut index = multi_index(self.shape(), pos / self.d);
            index.push(pos % self.d);
            return Err(Error::CurvatureTooLarge {
                kappa: self.kappas[pos],
                index,
            });
        }
        Ok(())
    }
}

/// Core coefficients `𝓥` of shape `(r₁, …, rₙ, d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientTensor {
    shape: Vec<usize>,
    d: usize,
    values: Vec<f64>,
}

impl CoefficientTensor {
    pub fn new(shape: Vec<usize>, d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_entries(&shape) * d {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for shape {shape:?} × {d}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient tensor".into()));
        }
        Ok(Self { shape, d, values })
    }

    pub fn zeros(shape: Vec<usize>, d: usize) -> Self {
        let n = num_entries(&shape) * d;
        Self {
            shape,
            d,
            values: vec![0.0; n],
        }
    }

    /// Core shape `(r₁, …, rₙ)`.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    /// Coefficients of a core tangent tensor in `phi`.
    pub fn from_core(core: &TangentTensor, phi: &TangentBasis) -> Result<Self> {
        if core.base() != phi.base() {
            return Err(Error::BaseMismatch);
        }
        let white = core.whitened();
        let m = core.entry_dim();
        let mut values = Vec::with_capacity(core.len() * phi.len());
        for e in 0..core.len() {
            let w = &white[e * m..(e + 1) * m];
            values.extend(phi.white.iter().map(|b| dot(w, b)));
        }
        Ok(Self {
            shape: core.shape().to_vec(),
            d: phi.len(),
            values,
        })
    }

    /// The core tangent tensor `Σ_i 𝓥[·, i] φ_i`.
    pub fn to_core(&self, phi: &TangentBasis) -> Result<TangentTensor> {
        if phi.len() != self.d {
            return Err(Error::DimensionMismatch(format!("basis of {} for d = {}", phi.len(), self.d)));
        }
        let m = phi.base().descriptor().embedding_dim();
        let n = num_entries(&self.shape);
        let mut data = vec![0.0; n * m];
        for a in 0..n {
            let out = &mut data[a * m..(a + 1) * m];
            for (i, b) in phi.ambient.iter().enumerate() {
                crate::linalg::axpy(self.values[a * self.d + i], b, out);
            }
        }
        Ok(TangentTensor::from_raw(phi.base().clone(), self.shape.clone(), data))
    }
}

/// `F(Ξ; κ) = Σ β(κ)² ⟨Ξ − log_p T, θ⟩²`.
pub fn cc_loss(xi: &TangentTensor, sys: &CurvatureSystem) -> Result<f64> {
    let x = sys.frame_coefficients(xi)?;
    Ok(weighted_loss(&x, sys, true))
}

fn weighted_loss(x: &[f64], sys: &CurvatureSystem, weighted: bool) -> f64 {
    let d = sys.d;
    let partial = par::map_range(sys.log.len(), |e| {
        (0..d)
            .map(|j| {
                let at = e * d + j;
                let r = x[at] - sys.log_coeffs[at];
                let w = if weighted { beta(sys.kappas[at]).powi(2) } else { 1.0 };
                w * r * r
            })
            .sum::<f64>()
    });
    partial.iter().sum()
}

/// `M_e[i, j] = ⟨φ_i, θ_ej⟩`, entries × d × d.
fn frame_overlaps(phi: &TangentBasis, sys: &CurvatureSystem) -> Vec<f64> {
    let d = sys.d;
    par::map_range(sys.log.len(), |e| {
        let mut m = vec![0.0; d * d];
        for (i, b) in phi.white.iter().enumerate() {
            for j in 0..d {
                m[i * d + j] = dot(b, sys.frame_white(e, j));
            }
        }
        m
    })
    .concat()
}

/// Row `e` of `U¹ ⊗ ⋯ ⊗ Uⁿ`: `u_e[a] = ∏_k Uᵏ[e_k, a_k]`.
fn kron_row(factors: &[DMatrix<f64>], idx: &[usize]) -> Vec<f64> {
    let mut out = vec![1.0];
    for (u, &e) in factors.iter().zip(idx) {
        let r = u.ncols();
        let mut next = Vec::with_capacity(out.len() * r);
        for &x in &out {
            for a in 0..r {
                next.push(x * u[(e, a)]);
            }
        }
        out = next;
    }
    out
}

fn check_factors(factors: &[DMatrix<f64>], shape: &[usize]) -> Result<Vec<usize>> {
    if factors.len() != shape.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors for order {}",
            factors.len(),
            shape.len()
        )));
    }
    for (k, (u, &dk)) in factors.iter().zip(shape).enumerate() {
        if u.nrows() != dk {
            return Err(Error::DimensionMismatch(format!("factor {k} has {} rows, mode size {dk}", u.nrows())));
        }
    }
    Ok(factors.iter().map(|u| u.ncols()).collect())
}

/// The real tensor `𝓑[e, j, a, i] = ∏_k Uᵏ[e_k, a_k] ⟨φ_i, θ_ej⟩`, stored
/// densely as a matrix with rows `(e, j)` and columns `(a, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BTensor {
    pub data_shape: Vec<usize>,
    pub core_shape: Vec<usize>,
    pub d: usize,
    pub matrix: DMatrix<f64>,
}

impl BTensor {
    pub fn get(&self, entry: usize, j: usize, a: usize, i: usize) -> f64 {
        self.matrix[(entry * self.d + j, a * self.d + i)]
    }
}

pub fn build_b(factors: &[DMatrix<f64>], phi: &TangentBasis, sys: &CurvatureSystem) -> Result<BTensor> {
    let core_shape = check_factors(factors, sys.shape())?;
    if phi.base() != sys.base() {
        return Err(Error::BaseMismatch);
    }
    let d = sys.d;
    let n = sys.log.len();
    let r = num_entries(&core_shape);
    let overlaps = frame_overlaps(phi, sys);
    let mut matrix = DMatrix::zeros(n * d, r * d);
    for e in 0..n {
        let u = kron_row(factors, &multi_index(sys.shape(), e));
        let m = &overlaps[e * d * d..(e + 1) * d * d];
        for j in 0..d {
            for (a, &ua) in u.iter().enumerate() {
                for i in 0..d {
                    matrix[(e * d + j, a * d + i)] = ua * m[i * d + j];
                }
            }
        }
    }
    Ok(BTensor {
        data_shape: sys.shape().to_vec(),
        core_shape,
        d,
        matrix,
    })
}

#[derive(Clone, Debug)]
enum Operator {
    Dense(DMatrix<f64>),
    MatrixFree {
        factors: Vec<DMatrix<f64>>,
        data_shape: Vec<usize>,
        // W_e = M_e diag(β²) M_eᵀ, entries × d × d
        weights: Vec<f64>,
    },
}

/// The normal system `𝓐 𝓥 = rhs` of the curvature-corrected loss.
#[derive(Clone, Debug)]
pub struct NormalSystem {
    core_shape: Vec<usize>,
    d: usize,
    operator: Operator,
    rhs: Vec<f64>,
    beta_sq: Vec<f64>,
}

/// Assembles `𝓐 = Σ β² 𝓑 ⊗ 𝓑` and `rhs = Σ β² 𝓑 ⟨log_p T, θ⟩`.
///
/// Only the per-entry blocks `W_e = M_e diag(β_e²) M_eᵀ` are formed, with
/// `M_e[i, j] = ⟨φ_i, θ_ej⟩`; `𝓐 = Σ_e (u_e u_eᵀ) ⊗ W_e` is then materialised
/// when it has at most [`DENSE_LIMIT`] rows and applied matrix-free otherwise.
pub fn build_normal_system(
    factors: &[DMatrix<f64>],
    phi: &TangentBasis,
    sys: &CurvatureSystem,
) -> Result<NormalSystem> {
    build_normal_system_with_limit(factors, phi, sys, DENSE_LIMIT)
}

/// [`build_normal_system`] with a custom dense/matrix-free threshold.
#[doc(hidden)]
pub fn build_normal_system_with_limit(
    factors: &[DMatrix<f64>],
    phi: &TangentBasis,
    sys: &CurvatureSystem,
    dense_limit: usize,
) -> Result<NormalSystem> {
    let core_shape = check_factors(factors, sys.shape())?;
    if phi.base() != sys.base() {
        return Err(Error::BaseMismatch);
    }
    sys.check_kappas()?;
    let d = sys.d;
    let n = sys.log.len();
    let beta_sq = sys.beta_sq();
    let overlaps = frame_overlaps(phi, sys);

    let blocks = par::map_range(n, |e| {
        let m = &overlaps[e * d * d..(e + 1) * d * d];
        let b = &beta_sq[e * d..(e + 1) * d];
        let c = &sys.log_coeffs[e * d..(e + 1) * d];
        let mut w = vec![0.0; d * d];
        let mut r = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                let bm = b[j] * m[i * d + j];
                r[i] += bm * c[j];
                if bm != 0.0 {
                    for i2 in 0..d {
                        w[i * d + i2] += bm * m[i2 * d + j];
                    }
                }
            }
        }
        (w, r)
    });
    let mut weights = Vec::with_capacity(n * d * d);
    let mut rvec = Vec::with_capacity(n * d);
    for (w, r) in blocks {
        weights.extend(w);
        rvec.extend(r);
    }

    let rhs = project_coefficients(&rvec, sys.shape(), factors, d)?;
    let unknowns = num_entries(&core_shape) * d;
    let operator = if unknowns <= dense_limit {
        Operator::Dense(assemble_dense(factors, sys.shape(), &weights, d))
    } else {
        Operator::MatrixFree {
            factors: factors.to_vec(),
            data_shape: sys.shape().to_vec(),
            weights,
        }
    };
    Ok(NormalSystem {
        core_shape,
        d,
        operator,
        rhs,
        beta_sq,
    })
}

/// `Y ×₁ (U¹)ᵀ ⋯ ×ₙ (Uⁿ)ᵀ` for a data-shaped tensor of `d`-vectors.
fn project_coefficients(y: &[f64], shape: &[usize], factors: &[DMatrix<f64>], d: usize) -> Result<Vec<f64>> {
    let mut data = y.to_vec();
    let mut sh = shape.to_vec();
    for (k, u) in factors.iter().enumerate() {
        let (nd, ns) = mode_product_raw(&data, &sh, d, &u.transpose(), k)?;
        data = nd;
        sh = ns;
    }
    Ok(data)
}

/// `V ×₁ U¹ ⋯ ×ₙ Uⁿ` for a core-shaped tensor of `d`-vectors.
fn expand_coefficients(v: &[f64], core_shape: &[usize], factors: &[DMatrix<f64>], d: usize) -> Result<Vec<f64>> {
    let mut data = v.to_vec();
    let mut sh = core_shape.to_vec();
    for (k, u) in factors.iter().enumerate() {
        let (nd, ns) = mode_product_raw(&data, &sh, d, u, k)?;
        data = nd;
        sh = ns;
    }
    Ok(data)
}

/// Entries are split into a fixed number of contiguous chunks (depending on
/// sizes only); each chunk accumulates sequentially and the chunk sums are
/// combined by a fixed pairwise tree.
fn assemble_dense(factors: &[DMatrix<f64>], shape: &[usize], weights: &[f64], d: usize) -> DMatrix<f64> {
    let n = num_entries(shape);
    let r: usize = factors.iter().map(|u| u.ncols()).product();
    let side = r * d;
    let budget = 1usize << 26;
    let chunks = (budget / (side * side).max(1)).clamp(1, 16).min(n.max(1));
    let per = n.div_ceil(chunks);
    let partial = par::map_range(chunks, |c| {
        let mut a = vec![0.0; side * side];
        for e in (c * per)..((c + 1) * per).min(n) {
            let u = kron_row(factors, &multi_index(shape, e));
            let w = &weights[e * d * d..(e + 1) * d * d];
            for (ia, &ua) in u.iter().enumerate() {
                if ua == 0.0 {
                    continue;
                }
                for (ib, &ub) in u.iter().enumerate().skip(ia) {
                    let s = ua * ub;
                    if s == 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        let row = &mut a[(ia * d + i) * side + ib * d..(ia * d + i) * side + ib * d + d];
                        let wrow = &w[i * d..(i + 1) * d];
                        for (x, &wv) in row.iter_mut().zip(wrow) {
                            *x += s * wv;
                        }
                    }
                }
            }
        }
        a
    });
    let upper = par::tree_sum(partial, |mut a, b| {
        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        a
    })
    .unwrap_or_else(|| vec![0.0; side * side]);
    // mirror the upper block triangle; diagonal blocks are symmetric already
    DMatrix::from_fn(side, side, |row, col| {
        let (ra, ca) = (row / d, col / d);
        if ra <= ca {
            upper[row * side + col]
        } else {
            upper[col * side + row]
        }
    })
}

impl NormalSystem {
    pub fn core_shape(&self) -> &[usize] {
        &self.core_shape
    }

    pub fn unknowns(&self) -> usize {
        self.rhs.len()
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `β(κ)²` per data entry and frame member.
    pub fn beta_sq(&self) -> &[f64] {
        &self.beta_sq
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.operator, Operator::Dense(_))
    }

    /// `𝓐 v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.operator {
            Operator::Dense(a) => (a * DVector::from_column_slice(v)).as_slice().to_vec(),
            Operator::MatrixFree {
                factors,
                data_shape,
                weights,
            } => {
                let d = self.d;
                let y = expand_coefficients(v, &self.core_shape, factors, d).expect("shapes checked at assembly");
                let z = par::map_range(num_entries(data_shape), |e| {
                    let w = &weights[e * d * d..(e + 1) * d * d];
                    let ye = &y[e * d..(e + 1) * d];
                    (0..d).map(|i| dot(&w[i * d..(i + 1) * d], ye)).collect::<Vec<_>>()
                })
                .concat();
                project_coefficients(&z, data_shape, factors, d).expect("shapes checked at assembly")
            }
        }
    }

    /// `𝓐` as a dense matrix (materialised column by column when matrix-free).
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.operator {
            Operator::Dense(a) => a.clone(),
            Operator::MatrixFree { .. } => {
                let n = self.unknowns();
                let mut a = DMatrix::zeros(n, n);
                let mut e = vec![0.0; n];
                for c in 0..n {
                    e[c] = 1.0;
                    a.set_column(c, &DVector::from_vec(self.apply(&e)));
                    e[c] = 0.0;
                }
                a
            }
        }
    }

    fn relative_residual(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        let r: f64 = ax.iter().zip(&self.rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let scale = norm(&self.rhs);
        if scale == 0.0 {
            r
        } else {
            r / scale
        }
    }
}

/// Solves the normal system by Cholesky (dense) or conjugate gradients
/// (matrix-free). A failed Cholesky falls back to an SVD least-squares solve.
pub fn solve_normal_system(ns: &NormalSystem) -> Result<CoefficientTensor> {
    let n = ns.unknowns();
    if norm(&ns.rhs) == 0.0 {
        return CoefficientTensor::new(ns.core_shape.clone(), ns.d, vec![0.0; n]);
    }
    let x = match &ns.operator {
        Operator::Dense(a) => {
            let b = DVector::from_column_slice(&ns.rhs);
            let first = Cholesky::new(a.clone()).map(|c| c.solve(&b));
            match first {
                Some(x) if ns.relative_residual(x.as_slice()) <= RESIDUAL_TOL => x.as_slice().to_vec(),
                _ => {
                    log::warn!("Cholesky failed on the normal system; using least squares");
                    let svd = a.clone().svd(true, true);
                    let x = svd
                        .solve(&b, f64::EPSILON * a.norm())
                        .map_err(|_| Error::NotPositiveDefinite { residual: f64::INFINITY })?;
                    x.as_slice().to_vec()
                }
            }
        }
        Operator::MatrixFree { .. } => conjugate_gradient(ns),
    };
    let residual = ns.relative_residual(&x);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::NotPositiveDefinite { residual });
    }
    CoefficientTensor::new(ns.core_shape.clone(), ns.d, x)
}

fn conjugate_gradient(ns: &NormalSystem) -> Vec<f64> {
    let n = ns.unknowns();
    let b = &ns.rhs;
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..(10 * n).max(100) {
        if rr.sqrt() <= CG_TOL * bnorm {
            break;
        }
        let ap = ns.apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        crate::linalg::axpy(alpha, &p, &mut x);
        crate::linalg::axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    x
}

/// Output of [`cc_refit`].
#[derive(Clone, Debug)]
pub struct CcSolution {
    pub factors: TuckerFactors,
    pub coefficients: CoefficientTensor,
}

/// Replaces the core of `truncated` by the minimiser of `F(·; κ)` over cores
/// with the same factors.
pub fn cc_refit(sys: &CurvatureSystem, truncated: &TuckerFactors) -> Result<CcSolution> {
    let phi = TangentBasis::orthonormal(sys.base());
    let ns = build_normal_system(&truncated.factors, &phi, sys)?;
    let coefficients = solve_normal_system(&ns)?;
    let core = coefficients.to_core(&phi)?;
    Ok(CcSolution {
        factors: TuckerFactors {
            core,
            factors: truncated.factors.clone(),
            singular_values: truncated.singular_values.clone(),
            ranks: truncated.ranks.clone(),
        },
        coefficients,
    })
}

/// Curvature-corrected truncated HOSVD at multilinear rank `r`.
pub fn cc_thosvd(p: &ManifoldPoint, t: &MvTensor, r: &[usize]) -> Result<TuckerFactors> {
    let sys = build_curvature_system(p, t)?;
    let full = thosvd_of_log(sys.log_tensor());
    let trunc = truncate(&full, r)?;
    Ok(cc_refit(&sys, &trunc)?.factors)
}

/// `β(κ_max)² · naive_err`, a floor for `F` over any admissible set on which
/// the plain tangent error is at least `naive_err`.
pub fn zero_delta_lower_bound(kappa_max: f64, naive_err: f64) -> f64 {
    beta(kappa_max).powi(2) * naive_err
}

/// Both sides of the lower and upper bound inequalities for `F`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsReport {
    pub f_kappa: f64,
    pub f_zero: f64,
    pub lower_bound: f64,
    pub upper_gap: f64,
    pub upper_bound: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// Checks `F(Ξ;κ) ≥ β(κ_max)² F(Ξ;0)` and
/// `|F(Ξ;κ) − F(Ξ;0)| ≤ max{β(κ_min)² − 1, 1 − β(κ_max)²} ‖Ξ‖²`, slack 1e-9.
pub fn sandwich_bounds_check(xi: &TangentTensor, sys: &CurvatureSystem) -> Result<BoundsReport> {
    let x = sys.frame_coefficients(xi)?;
    let f_kappa = weighted_loss(&x, sys, true);
    let f_zero = weighted_loss(&x, sys, false);
    let (kmin, kmax) = (sys.kappa_min(), sys.kappa_max());
    let lower_bound = beta(kmax).powi(2) * f_zero;
    let xi_sq = crate::tensor::tangent_norm_sq(xi);
    let upper_bound = (beta(kmin).powi(2) - 1.0).max(1.0 - beta(kmax).powi(2)) * xi_sq;
    let upper_gap = (f_kappa - f_zero).abs();
    Ok(BoundsReport {
        f_kappa,
        f_zero,
        lower_bound,
        upper_gap,
        upper_bound,
        lower_holds: f_kappa >= lower_bound - 1e-9,
        upper_holds: upper_gap <= upper_bound + 1e-9,
    })
}

/// `δ_abs = F(Ξ;κ) − d(T, exp_p Ξ)²` and `δ_rel = δ_abs / ‖Ξ − log_p T‖³`
/// (0 when `Ξ = log_p T`).
pub fn discrepancy(t: &MvTensor, xi: &TangentTensor, sys: &CurvatureSystem) -> Result<(f64, f64)> {
    let f = cc_loss(xi, sys)?;
    let approx = crate::tensor::exp_tensor(sys.base(), xi)?;
    let d2 = crate::tensor::tensor_distance(t, &approx)?.powi(2);
    let delta_abs = f - d2;
    let gap = crate::tensor::tangent_norm(&xi.sub(sys.log_tensor())?);
    let denom = gap.powi(3);
    // an exact tangent fit leaves only round-off in δ_abs
    let delta_rel = if denom == 0.0 {
        0.0
    } else {
        delta_abs / denom
    };
    Ok((delta_abs, delta_rel))
}
