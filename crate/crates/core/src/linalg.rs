//! Small dense linear algebra, always evaluated in `f64`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Principal components of centered samples.
pub struct Pca {
    /// Unit-norm principal directions, ordered by decreasing variance.
    pub directions: Vec<Vec<f64>>,
    /// Sample variances (`1/(n-1)` normalization) per direction.
    pub variances: Vec<f64>,
    /// Total variance (trace of the sample covariance).
    pub total: f64,
}

/// PCA of `n` centered samples of dimension `d` (rows of `samples`).
///
/// Works through the `n x n` Gram matrix when `n < d`. Directions with
/// variance below `1e-12` of the largest are treated as numerically null.
pub fn pca(samples: &[Vec<f64>]) -> Pca {
    let n = samples.len();
    let d = samples.first().map_or(0, |s| s.len());
    let denom = (n.max(2) - 1) as f64;
    let total: f64 = samples.iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>() / denom;
    let empty = Pca { directions: Vec::new(), variances: Vec::new(), total };
    if n == 0 || d == 0 || total <= 0.0 {
        return empty;
    }

    let (mut pairs, via_gram) = if n < d {
        let gram = DMatrix::from_fn(n, n, |i, j| dot(&samples[i], &samples[j]));
        (eigen_pairs(gram), true)
    } else {
        let mut cov = DMatrix::zeros(d, d);
        for s in samples {
            for i in 0..d {
                for j in i..d {
                    cov[(i, j)] += s[i] * s[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        (eigen_pairs(cov), false)
    };
    let lmax = pairs.first().map_or(0.0, |p| p.0);
    if lmax <= 0.0 {
        return empty;
    }
    pairs.retain(|p| p.0 > 1e-12 * lmax);

    let mut directions = Vec::with_capacity(pairs.len());
    let mut variances = Vec::with_capacity(pairs.len());
    for (lambda, vec) in pairs {
        let dir = if via_gram {
            let mut v = vec![0.0; d];
            for (coef, s) in vec.iter().zip(samples) {
                for (acc, x) in v.iter_mut().zip(s) {
                    *acc += coef * x;
                }
            }
            v
        } else {
            vec
        };
        directions.push(dir);
        variances.push(lambda / denom);
    }
    orthonormalize(&mut directions);
    Pca { directions, variances, total }
}

/// Number of leading components whose cumulative variance reaches `fraction` of `total`.
pub fn retained_count(variances: &[f64], total: f64, fraction: f64) -> usize {
    if total <= 0.0 {
        return 0;
    }
    let mut cum = 0.0;
    for (i, v) in variances.iter().enumerate() {
        cum += v;
        if cum / total >= fraction - 1e-12 {
            return i + 1;
        }
    }
    variances.len()
}

fn eigen_pairs(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, Vec<f64>)> =
        eig.eigenvalues.iter().enumerate().map(|(k, &l)| (l, eig.eigenvectors.column(k).iter().copied().collect())).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Modified Gram-Schmidt, run twice for orthonormality to working precision.
/// Vectors that collapse to (numerically) zero are dropped.
pub fn orthonormalize(vectors: &mut Vec<Vec<f64>>) {
    orthonormalize_against(vectors, &[]);
}

/// Orthonormalizes `vectors` among themselves and against an already
/// orthonormal `fixed` set.
pub fn orthonormalize_against(vectors: &mut Vec<Vec<f64>>, fixed: &[Vec<f64>]) {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors.drain(..) {
        let mut v = v;
        let n0 = norm(&v);
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for u in fixed.iter().chain(out.iter()) {
                let c = dot(&v, u);
                for (a, b) in v.iter_mut().zip(u) {
                    *a -= c * b;
                }
            }
        }
        let n = norm(&v);
        if n <= 1e-10 * n0 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= n);
        out.push(v);
    }
    *vectors = out;
}

#[cfg(test)]
/// Largest `|G - I|` entry of the Gram matrix of `vectors`.
pub fn orthonormality_error(vectors: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - target).abs());
        }
    }
    worst
}

/// Inverse of a symmetric positive definite matrix (row-major, `n x n`),
/// rejecting matrices with condition number above `max_condition`.
pub fn spd_inverse(m: &[f64], n: usize, max_condition: f64) -> Result<Vec<f64>> {
    let mat = DMatrix::from_row_slice(n, n, m);
    let eig = SymmetricEigen::new(mat.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let cond = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(cond <= max_condition) {
        return Err(Error::SingularHessian(cond));
    }
    let chol = mat.cholesky().ok_or(Error::SingularHessian(cond))?;
    let inv = chol.inverse();
    Ok((0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| inv[(i, j)]).collect())
}
