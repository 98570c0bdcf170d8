//! MC-tHOSVD: fixed-step gradient descent on the exact approximation error
//! `g(𝓥) = d(T, exp_p(𝓥 ×₁ U¹ ⋯ ×ₙ Uⁿ ×_{n+1} φ))²` over the core coefficients.

use nalgebra::DMatrix;

use crate::correction::{beta, CoefficientTensor, TangentBasis};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::manifold::ManifoldPoint;
use crate::par;
use crate::tensor::{mode_product_raw, multi_index, num_entries, MvTensor};
use crate::tucker::{thosvd, truncate, TuckerFactors};

/// Descent stops when the loss exceeds this multiple of the initial loss.
pub const DIVERGENCE_FACTOR: f64 = 10.0;
/// Candidate steps `2⁰, 2⁻¹, …, 2^-AUTOTUNE_MAX_EXP`.
pub const AUTOTUNE_MAX_EXP: i32 = 20;
/// Iterations probed per candidate step.
pub const AUTOTUNE_ITERS: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub tau: f64,
    pub grad_tol_rel: f64,
    pub max_iter: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            tau: 2f64.powi(-6),
            grad_tol_rel: 1e-2,
            max_iter: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McRecord {
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Per-iteration history of a descent run.
#[derive(Clone, Debug, PartialEq)]
pub struct McTrace {
    pub records: Vec<McRecord>,
    pub converged: bool,
    /// Iteration whose iterate had the lowest loss; that iterate is returned.
    pub best_iteration: usize,
    pub coefficients: CoefficientTensor,
}

impl McTrace {
    /// Number of gradient steps taken.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

fn check_inputs(v: &CoefficientTensor, t: &MvTensor, factors: &[DMatrix<f64>], phi: &TangentBasis) -> Result<()> {
    if phi.base().descriptor() != t.descriptor() {
        return Err(Error::DescriptorMismatch(format!(
            "{:?} vs {:?}",
            phi.base().descriptor(),
            t.descriptor()
        )));
    }
    if factors.len() != t.order() {
        return Err(Error::DimensionMismatch(format!("{} factors for order {}", factors.len(), t.order())));
    }
    for (k, u) in factors.iter().enumerate() {
        if u.nrows() != t.shape()[k] || u.ncols() != v.shape().get(k).copied().unwrap_or(0) {
            return Err(Error::DimensionMismatch(format!(
                "factor {k} is {}×{}, data {:?}, core {:?}",
                u.nrows(),
                u.ncols(),
                t.shape(),
                v.shape()
            )));
        }
    }
    if v.intrinsic_dim() != phi.len() {
        return Err(Error::DimensionMismatch(format!("{} coefficients per entry, basis of {}", v.intrinsic_dim(), phi.len())));
    }
    Ok(())
}

/// Ambient coordinates of `𝓥 ×₁ U¹ ⋯ ×ₙ Uⁿ ×_{n+1} φ`, one block per data entry.
fn expand(v: &CoefficientTensor, factors: &[DMatrix<f64>], phi: &TangentBasis) -> Result<Vec<f64>> {
    let core = v.to_core(phi)?;
    let m = core.entry_dim();
    let mut data = core.data().to_vec();
    let mut shape = core.shape().to_vec();
    for (k, u) in factors.iter().enumerate() {
        let (d, s) = mode_product_raw(&data, &shape, m, u, k)?;
        data = d;
        shape = s;
    }
    Ok(data)
}

/// `g(𝓥) = d(T, exp_p(𝓥 ×U ×φ))²`.
pub fn mc_loss(v: &CoefficientTensor, t: &MvTensor, factors: &[DMatrix<f64>], phi: &TangentBasis) -> Result<f64> {
    check_inputs(v, t, factors, phi)?;
    let p = phi.base();
    let space = p.space();
    let x = expand(v, factors, phi)?;
    let m = p.descriptor().embedding_dim();
    let d2 = par::try_map_range(t.len(), |e| {
        let y = space.exp(p, &x[e * m..(e + 1) * m])?;
        Ok::<f64, Error>(space.distance(&t.entries()[e], &y).powi(2))
    })?;
    Ok(d2.iter().sum())
}

/// Loss and gradient of `g` with respect to `𝓥`.
///
/// Per entry, with `X = (𝓥 ×U ×φ)_e`, `Y = exp_p X` and `(λ_j, Ψ_j)` the
/// curvature eigenpairs of `X` at `p`, the gradient in `X` is
/// `−2 Σ_j β(λ_j) ⟨log_Y T_e, P Ψ_j⟩_Y Ψ_j` where `P` transports along the
/// geodesic to `Y`. It is pulled back through `φ` and the factors.
pub fn mc_loss_and_gradient(
    v: &CoefficientTensor,
    t: &MvTensor,
    factors: &[DMatrix<f64>],
    phi: &TangentBasis,
) -> Result<(f64, CoefficientTensor)> {
    check_inputs(v, t, factors, phi)?;
    let p = phi.base();
    let space = p.space();
    let d = phi.len();
    let m = p.descriptor().embedding_dim();
    let x = expand(v, factors, phi)?;
    let phi_white: Vec<Vec<f64>> = phi.vectors().iter().map(|b| space.whiten(p, b.coords())).collect();
    let parts = par::try_map_range(t.len(), |e| {
        let xe = &x[e * m..(e + 1) * m];
        let y = space.exp(p, xe)?;
        let target = &t.entries()[e];
        let l = space.log(&y, target).map_err(|err| match err {
            Error::CutLocus(_) => Error::CutLocus(Some(multi_index(t.shape(), e))),
            other => other,
        })?;
        let loss = space.inner(&y, &l, &l);
        let (lambdas, frame) = space.eigenframe_white(p, xe);
        let mut g_white = vec![0.0; m];
        for (lam, psi_w) in lambdas.iter().zip(&frame) {
            let psi = space.unwhiten(p, psi_w);
            let moved = space.transport_along(p, xe, &psi);
            let a = space.inner(&y, &l, &moved);
            axpy(-2.0 * beta(*lam) * a, psi_w, &mut g_white);
        }
        let coeffs: Vec<f64> = phi_white.iter().map(|b| dot(&g_white, b)).collect();
        Ok::<(f64, Vec<f64>), Error>((loss, coeffs))
    })?;
    let loss: f64 = parts.iter().map(|(l, _)| l).sum();
    let per_entry: Vec<f64> = parts.into_iter().flat_map(|(_, c)| c).collect();
    let mut data = per_entry;
    let mut shape = t.shape().to_vec();
    for (k, u) in factors.iter().enumerate() {
        let (nd, ns) = mode_product_raw(&data, &shape, d, &u.transpose(), k)?;
        data = nd;
        shape = ns;
    }
    debug_assert_eq!(data.len(), num_entries(v.shape()) * d);
    let grad = CoefficientTensor::new(v.shape().to_vec(), d, data)
        .map_err(|_| Error::NonFinite("MC gradient".into()))?;
    Ok((loss, grad))
}

/// Gradient of [`mc_loss`].
pub fn mc_gradient(
    v: &CoefficientTensor,
    t: &MvTensor,
    factors: &[DMatrix<f64>],
    phi: &TangentBasis,
) -> Result<CoefficientTensor> {
    Ok(mc_loss_and_gradient(v, t, factors, phi)?.1)
}

fn descend(
    v0: CoefficientTensor,
    t: &MvTensor,
    factors: &[DMatrix<f64>],
    phi: &TangentBasis,
    opts: &McOptions,
) -> Result<McTrace> {
    if !(opts.tau > 0.0) || !opts.tau.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {}", opts.tau)));
    }
    let d = v0.intrinsic_dim();
    let shape = v0.shape().to_vec();
    let mut v = v0;
    let mut records = Vec::new();
    let mut best = (f64::INFINITY, 0usize, v.clone());
    let mut initial = (0.0, 0.0);
    let mut converged = false;
    for it in 0..=opts.max_iter {
        let (loss, grad) = mc_loss_and_gradient(&v, t, factors, phi)?;
        let gn = grad.norm();
        if it == 0 {
            initial = (loss, gn);
        }
        records.push(McRecord {
            iteration: it,
            loss,
            grad_norm: gn,
            step: if it == 0 { 0.0 } else { opts.tau },
        });
        if !loss.is_finite() || !gn.is_finite() || loss > DIVERGENCE_FACTOR * initial.0 {
            return Err(Error::Diverged {
                iteration: it,
                loss,
                initial: initial.0,
            });
        }
        if loss < best.0 {
            best = (loss, it, v.clone());
        }
        // a gradient at round-off level counts as already optimal
        let negligible = gn <= 1e-10 * (1.0 + v.norm());
        if negligible || gn < opts.grad_tol_rel * initial.1 {
            converged = true;
            break;
        }
        if it == opts.max_iter {
            break;
        }
        let next: Vec<f64> = v
            .values()
            .iter()
            .zip(grad.values())
            .map(|(a, g)| a - opts.tau * g)
            .collect();
        v = CoefficientTensor::new(shape.clone(), d, next).map_err(|_| Error::Diverged {
            iteration: it + 1,
            loss: f64::NAN,
            initial: initial.0,
        })?;
    }
    Ok(McTrace {
        records,
        converged,
        best_iteration: best.1,
        coefficients: best.2,
    })
}

/// Initial coefficients and factors: the truncated tHOSVD.
fn initialise(p: &ManifoldPoint, t: &MvTensor, r: &[usize]) -> Result<(TuckerFactors, TangentBasis, CoefficientTensor)> {
    let trunc = truncate(&thosvd(p, t)?, r)?;
    let phi = TangentBasis::orthonormal(p);
    let v0 = CoefficientTensor::from_core(&trunc.core, &phi)?;
    Ok((trunc, phi, v0))
}

/// Metric-corrected truncated HOSVD. Returns the best iterate seen.
pub fn mc_thosvd(p: &ManifoldPoint, t: &MvTensor, r: &[usize], opts: &McOptions) -> Result<(TuckerFactors, McTrace)> {
    let (trunc, phi, v0) = initialise(p, t, r)?;
    let trace = descend(v0, t, &trunc.factors, &phi, opts)?;
    let core = trace.coefficients.to_core(&phi)?;
    let factors = TuckerFactors { core, ..trunc };
    Ok((factors, trace))
}

/// Largest `τ ∈ {2⁰, …, 2⁻²⁰}` whose first 20 iterations neither diverge,
/// produce non-finite values, nor leave the injectivity domain.
pub fn autotune_step(p: &ManifoldPoint, t: &MvTensor, r: &[usize]) -> Result<f64> {
    let (trunc, phi, v0) = initialise(p, t, r)?;
    for e in 0..=AUTOTUNE_MAX_EXP {
        let tau = 2f64.powi(-e);
        let opts = McOptions {
            tau,
            grad_tol_rel: 0.0,
            max_iter: AUTOTUNE_ITERS,
        };
        match descend(v0.clone(), t, &trunc.factors, &phi, &opts) {
            Ok(_) => return Ok(tau),
            Err(Error::Diverged { .. }) | Err(Error::CutLocus(_)) | Err(Error::NonFinite(_)) => continue,
            Err(other) => return Err(other),
        }
    }
    Err(Error::NoStableStep)
}
