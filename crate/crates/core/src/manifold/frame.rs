use crate::linalg::{axpy, dot, norm};

/// Candidates shorter than this after orthogonalisation are dropped.
pub const DISCARD_TOL: f64 = 1e-8;

/// Completes `frame` to `target` orthonormal vectors by two-pass modified
/// Gram-Schmidt over `candidates`, also orthogonalising against the unit
/// vectors in `constraints` (which are not added to the frame).
pub(crate) fn complete_frame<I>(
    mut frame: Vec<Vec<f64>>,
    constraints: &[Vec<f64>],
    candidates: I,
    target: usize,
) -> Vec<Vec<f64>>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    for mut c in candidates {
        if frame.len() >= target {
            break;
        }
        let scale = norm(&c);
        if scale == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in constraints.iter().chain(frame.iter()) {
                let a = dot(&c, b);
                axpy(-a, b, &mut c);
            }
        }
        let n = norm(&c);
        if n > DISCARD_TOL * scale {
            c.iter_mut().for_each(|x| *x /= n);
            frame.push(c);
        }
    }
    frame
}

/// The `i`-th canonical vector of length `n`.
pub(crate) fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}
