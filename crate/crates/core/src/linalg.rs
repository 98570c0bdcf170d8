//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order.
///
/// Ties keep the order of the index of each eigenvector's largest component,
/// and every eigenvector is flipped so that its largest-magnitude component
/// is positive. The result is therefore a deterministic function of the input.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    let lead: Vec<usize> = (0..n).map(|j| lead_index(&eig.eigenvectors.column(j))).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(lead[a].cmp(&lead[b]))
    });
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let sign = if col[lead[src]] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    (values, vectors)
}

fn lead_index<S>(col: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S>) -> usize
where
    S: nalgebra::storage::Storage<f64, nalgebra::Dyn, nalgebra::U1>,
{
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, v) in col.iter().enumerate() {
        // a small relative margin keeps near-ties on the lower index
        if v.abs() > best_abs * (1.0 + 1e-12) {
            best_abs = v.abs();
            best = i;
        }
    }
    best
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Applies a scalar function to the spectrum of a symmetric matrix.
pub fn sym_apply(values: &[f64], vectors: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let n = values.len();
    let scaled = DMatrix::from_fn(n, n, |i, j| vectors[(i, j)] * f(values[j]));
    let out = scaled * vectors.transpose();
    symmetrize(&out)
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    sym_apply(&vals, &vecs, f64::exp)
}

/// Principal matrix logarithm of a symmetric positive definite matrix.
pub fn spd_log(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(m);
    sym_apply(&vals, &vecs, f64::ln)
}

/// Row-major flat view of a square matrix.
pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(n: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, data)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Frobenius norm of the difference of two equally sized slices.
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
