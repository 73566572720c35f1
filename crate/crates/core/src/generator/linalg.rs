//! Dense symmetric eigendecomposition (cyclic Jacobi) and Cholesky
//! factorization for the copula's correlation matrices. Matrices here are
//! tiny (one row/column per table column), so simplicity beats speed.

use ndarray::{Array1, Array2};

/// Eigendecomposition of a symmetric matrix: returns (eigenvalues,
/// eigenvectors-as-columns) with `a ≈ V · diag(λ) · Vᵀ`.
pub(crate) fn jacobi_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(n);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                // Classic Jacobi rotation annihilating m[(p, q)].
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = Array1::from_iter((0..n).map(|i| m[(i, i)]));
    (eigenvalues, v)
}

/// Lower-triangular L with `a = L · Lᵀ`, or None if a pivot is
/// non-positive (matrix not positive definite).
pub(crate) fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = a[(i, i)] - s;
                if d <= 0.0 {
                    return None;
                }
                l[(i, j)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Cholesky with escalating diagonal jitter for matrices that are PSD only
/// up to rounding. Panics only if even a heavily regularized matrix fails,
/// which cannot happen after [`nearest_psd_correlation`].
pub(crate) fn cholesky_with_jitter(a: &Array2<f64>) -> Array2<f64> {
    if let Some(l) = cholesky(a) {
        return l;
    }
    let mut jitter = 1e-12;
    while jitter <= 1e-3 {
        let mut m = a.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(l) = cholesky(&m) {
            return l;
        }
        jitter *= 10.0;
    }
    panic!("correlation matrix not factorizable even with jitter");
}

/// Project an estimated correlation matrix to the nearest (in the spectral
/// sense) symmetric PSD matrix with unit diagonal: clamp negative
/// eigenvalues, reconstruct, and rescale the diagonal back to 1.
pub(crate) fn nearest_psd_correlation(r: &Array2<f64>) -> Array2<f64> {
    let n = r.nrows();
    // Symmetrize first; estimation should already be symmetric.
    let mut sym = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            sym[(i, j)] = 0.5 * (r[(i, j)] + r[(j, i)]);
        }
    }
    let (mut lambda, v) = jacobi_eigen(&sym);
    let floor = 1e-10;
    let mut clipped = false;
    for l in lambda.iter_mut() {
        if *l < floor {
            *l = floor;
            clipped = true;
        }
    }
    if !clipped {
        return sym;
    }
    // V · diag(λ) · Vᵀ
    let mut rebuilt = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += v[(i, k)] * lambda[k] * v[(j, k)];
            }
            rebuilt[(i, j)] = s;
        }
    }
    // Rescale to unit diagonal (congruence keeps it PSD).
    let d: Vec<f64> = (0..n).map(|i| rebuilt[(i, i)].sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            rebuilt[(i, j)] /= d[i] * d[j];
        }
    }
    // Exact symmetry and exact unit diagonal, clearing rounding residue.
    for i in 0..n {
        rebuilt[(i, i)] = 1.0;
        for j in 0..i {
            let avg = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
            rebuilt[(i, j)] = avg;
            rebuilt[(j, i)] = avg;
        }
    }
    rebuilt
}
