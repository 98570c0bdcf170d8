//! Curvature-corrected low-rank approximation of manifold-valued tensors.
//!
//! The crate provides geometry kernels for the Euclidean space, the unit
//! sphere and the SPD cone ([`manifold`]), tensors of manifold points
//! ([`tensor`]), tangent-space HOSVD ([`tucker`]), the curvature-corrected
//! and metric-corrected truncated HOSVD ([`correction`], [`metric`]),
//! synthetic experiments ([`experiments`]) and file formats ([`io`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod metric;
pub mod par;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use manifold::{
    curvature_eigenbasis, curvature_operator, distance, exp_map, inner, log_map, orthonormal_basis,
    parallel_transport, random_tangent, ManifoldDescriptor, ManifoldKind, ManifoldPoint, TangentVector,
};
pub use tensor::{
    exp_tensor, log_tensor, mode_k_product, multi_mode_product, tangent_norm, tensor_distance, unfold, MvTensor,
    TangentTensor,
};
pub use tucker::{gram_matrix, reconstruct, tangent_svd, thosvd, truncate, TuckerFactors};
pub use correction::{
    beta, build_b, build_curvature_system, build_normal_system, cc_loss, cc_thosvd, discrepancy,
    sandwich_bounds_check, solve_normal_system, zero_delta_lower_bound, CoefficientTensor, CurvatureSystem,
    NormalSystem, TangentBasis,
};
pub use metric::{autotune_step, mc_gradient, mc_loss, mc_loss_and_gradient, mc_thosvd, McOptions, McRecord, McTrace};
