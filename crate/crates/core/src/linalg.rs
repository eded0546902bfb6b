//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations,
/// eigenvalues ascending. Returns (eigenvalues, eigenvectors as columns).
///
/// Jacobi is used instead of the QR-based solver for its reconstruction
/// accuracy on clustered and paired spectra; matrices here stay small.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::validation("symmetric_eigen: matrix not square"));
    }
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    let mut w = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-15 * norm.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += w[[p, q]] * w[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = w[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (w[[q, q]] - w[[p, p]]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let (app, aqq) = (w[[p, p]], w[[q, q]]);
                w[[p, p]] = app - t * apq;
                w[[q, q]] = aqq + t * apq;
                w[[p, q]] = 0.0;
                w[[q, p]] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let (aip, aiq) = (w[[i, p]], w[[i, q]]);
                        w[[i, p]] = c * aip - s * aiq;
                        w[[p, i]] = w[[i, p]];
                        w[[i, q]] = s * aip + c * aiq;
                        w[[q, i]] = w[[i, q]];
                    }
                }
                for i in 0..n {
                    let (vip, viq) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[[i, i]].partial_cmp(&w[[j, j]]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| w[[i, i]]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = v[[row, src]];
        }
    }
    Ok((vals, vecs))
}

/// Solve the SPD system `G x = b` by Cholesky, with a ridge fallback when the
/// Gram matrix is numerically singular. Returns (solution, regularized flag).
pub fn solve_gram(g: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, bool) {
    if let Some(chol) = g.clone().cholesky() {
        return (chol.solve(b), false);
    }
    let n = g.nrows();
    let ridge = 1e-10 * (g.trace().abs() / n as f64).max(1e-30);
    let mut gr = g.clone();
    for i in 0..n {
        gr[(i, i)] += ridge;
    }
    let chol = gr
        .cholesky()
        .expect("ridge-regularized Gram matrix must be SPD");
    (chol.solve(b), true)
}

/// Solve `G X = B` column-wise for SPD `G` (see [`solve_gram`]).
pub fn solve_gram_mat(g: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(chol) = g.clone().cholesky() {
        return (chol.solve(b), false);
    }
    let n = g.nrows();
    let ridge = 1e-10 * (g.trace().abs() / n as f64).max(1e-30);
    let mut gr = g.clone();
    for i in 0..n {
        gr[(i, i)] += ridge;
    }
    let chol = gr
        .cholesky()
        .expect("ridge-regularized Gram matrix must be SPD");
    (chol.solve(b), true)
}

/// Ordinary least squares for `y ~ a*x + b`. Returns (a, b).
pub fn fit_affine(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::validation("fit_affine: need at least two points"));
    }
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    if det.abs() <= 1e-12 * n * sxx.max(1.0) {
        return Err(Error::numerical("fit_affine: degenerate design matrix"));
    }
    let a = (n * sxy - sx * sy) / det;
    let b = (sy - a * sx) / n;
    Ok((a, b))
}

/// Least-squares slope and intercept on log-log axes: `ln y ~ s*ln x + c`.
/// Returns (slope, intercept).
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.iter().any(|&v| v <= 0.0) || y.iter().any(|&v| v <= 0.0) {
        return Err(Error::validation("fit_loglog: values must be positive"));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_affine(&lx, &ly)
}

/// Frobenius norm of the difference of two equally-shaped slices.
pub fn frob_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Random orthogonal matrix from Gram-Schmidt on a seeded Gaussian matrix.
pub fn random_orthogonal(n: usize, seed: u64) -> Array2<f64> {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for c in &cols {
            let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= dot * ci;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue; // near-dependent draw, resample
        }
        for vi in &mut v {
            *vi /= norm;
        }
        cols.push(v);
    }
    Array2::from_shape_fn((n, n), |(i, j)| cols[j][i])
}
