//! Point-distribution shape model with a global similarity component.
//!
//! Parameters are laid out as `[p_1 .. p_m, q_1 .. q_4]`. A shape is
//! instantiated as `N_q(s0 + sum p_i s_i)` where
//! `N_q(x) = c + [[1 + a, -b], [b, 1 + a]] (x - c) + t`, `c` is the centroid
//! of `s0`, `a = q_1 / |s0 - c|`, `b = q_2 / |s0 - c|` and
//! `t = (q_3, q_4) / sqrt(L)`. At `p = 0` the four similarity vectors are the
//! exact derivatives of the instance with respect to `q`.

use serde::{Deserialize, Serialize};

use super::landmarks::LandmarkSet;
use crate::error::{Error, Result};
use crate::linalg::{dot, orthonormalize_against, pca, retained_count};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ShapeModel<T> {
    /// Mean shape `s0` in canonical-frame pixels.
    pub mean: LandmarkSet<T>,
    /// Orthonormal shape modes, each flattened as `[x0, y0, x1, y1, ...]`.
    pub basis: Vec<Vec<T>>,
    pub variances: Vec<T>,
    /// Orthonormal similarity vectors: scale, rotation, x and y translation.
    pub similarity: Vec<Vec<T>>,
}

fn similarity_vectors(mean: &[f64]) -> Result<(Vec<Vec<f64>>, [f64; 2], f64)> {
    let l = mean.len() / 2;
    let cx = mean.iter().step_by(2).sum::<f64>() / l as f64;
    let cy = mean.iter().skip(1).step_by(2).sum::<f64>() / l as f64;
    let mut v1 = Vec::with_capacity(2 * l);
    let mut v2 = Vec::with_capacity(2 * l);
    for c in mean.chunks_exact(2) {
        let (dx, dy) = (c[0] - cx, c[1] - cy);
        v1.extend([dx, dy]);
        v2.extend([-dy, dx]);
    }
    let n1 = dot(&v1, &v1).sqrt();
    if !(n1 > 1e-12) {
        return Err(Error::DegenerateShape);
    }
    v1.iter_mut().for_each(|v| *v /= n1);
    v2.iter_mut().for_each(|v| *v /= n1);
    let r = 1.0 / (l as f64).sqrt();
    let tx: Vec<f64> = (0..2 * l).map(|i| if i % 2 == 0 { r } else { 0.0 }).collect();
    let ty: Vec<f64> = (0..2 * l).map(|i| if i % 2 == 1 { r } else { 0.0 }).collect();
    Ok((vec![v1, v2, tx, ty], [cx, cy], n1))
}

/// PCA shape model from shapes that already share one frame (Procrustes
/// aligned, then placed in the canonical frame). Residuals are taken in the
/// tangent space orthogonal to the similarity vectors of the mean.
pub fn train_shape_model<T: Real>(aligned: &[LandmarkSet<T>], variance_fraction: f64) -> Result<ShapeModel<T>> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("variance fraction {variance_fraction} outside (0, 1]")));
    }
    if aligned.len() < 2 {
        return Err(Error::InvalidParameter("shape model needs at least 2 shapes".into()));
    }
    let l = aligned[0].len();
    if l < 3 || aligned.iter().any(|s| s.len() != l) {
        return Err(Error::DimensionMismatch("shapes must share a landmark count of at least 3".into()));
    }
    let vecs: Vec<Vec<f64>> = aligned.iter().map(|s| s.to_vector().iter().map(|v| v.as_f64()).collect()).collect();
    let n = vecs.len() as f64;
    let mut mean = vec![0.0; 2 * l];
    for v in &vecs {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n;
        }
    }
    let (sim, _, _) = similarity_vectors(&mean)?;
    let residuals: Vec<Vec<f64>> = vecs
        .iter()
        .map(|v| {
            let mut r: Vec<f64> = v.iter().zip(&mean).map(|(a, b)| a - b).collect();
            for u in &sim {
                let c = dot(&r, u);
                r.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
            }
            r
        })
        .collect();
    let p = pca(&residuals);
    let keep = retained_count(&p.variances, p.total, variance_fraction);
    let mut basis: Vec<Vec<f64>> = p.directions.into_iter().take(keep).collect();
    orthonormalize_against(&mut basis, &sim);
    let variances: Vec<f64> = p.variances.into_iter().take(basis.len()).collect();
    let cast = |v: &Vec<f64>| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
    Ok(ShapeModel {
        mean: LandmarkSet::from_vector(&cast(&mean)),
        basis: basis.iter().map(cast).collect(),
        variances: variances.into_iter().map(T::lit).collect(),
        similarity: sim.iter().map(cast).collect(),
    })
}

impl<T: Real> ShapeModel<T> {
    pub fn n_points(&self) -> usize {
        self.mean.len()
    }

    /// Number of shape modes `m`.
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    /// Total parameter count `m + 4`.
    pub fn n_params(&self) -> usize {
        self.basis.len() + 4
    }

    fn mean_f64(&self) -> Vec<f64> {
        self.mean.to_vector().iter().map(|v| v.as_f64()).collect()
    }

    fn frame(&self) -> ([f64; 2], f64, f64) {
        let m = self.mean_f64();
        let l = self.n_points();
        let cx = m.iter().step_by(2).sum::<f64>() / l as f64;
        let cy = m.iter().skip(1).step_by(2).sum::<f64>() / l as f64;
        let n1 = m.chunks_exact(2).map(|c| (c[0] - cx).powi(2) + (c[1] - cy).powi(2)).sum::<f64>().sqrt();
        ([cx, cy], n1, (l as f64).sqrt())
    }

    /// Derivative of every vertex coordinate with respect to parameter `j` at
    /// `p = 0`, flattened.
    pub fn param_direction(&self, j: usize) -> &[T] {
        if j < self.basis.len() {
            &self.basis[j]
        } else {
            &self.similarity[j - self.basis.len()]
        }
    }

    /// Shape instance for the full parameter vector (`f64` coordinates).
    pub fn instance_f64(&self, p: &[f64]) -> Result<Vec<[f64; 2]>> {
        if p.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!("{} parameters for a model with {}", p.len(), self.n_params())));
        }
        let m = self.n_modes();
        let mut s = self.mean_f64();
        for (pi, b) in p[..m].iter().zip(&self.basis) {
            for (x, bv) in s.iter_mut().zip(b) {
                *x += pi * bv.as_f64();
            }
        }
        let (c, n1, sl) = self.frame();
        let (a, b) = (p[m] / n1, p[m + 1] / n1);
        let t = [p[m + 2] / sl, p[m + 3] / sl];
        Ok(s.chunks_exact(2)
            .map(|q| {
                let (dx, dy) = (q[0] - c[0], q[1] - c[1]);
                [c[0] + (1.0 + a) * dx - b * dy + t[0], c[1] + b * dx + (1.0 + a) * dy + t[1]]
            })
            .collect())
    }

    pub fn instance(&self, p: &[f64]) -> Result<LandmarkSet<T>> {
        let pts = self.instance_f64(p)?;
        Ok(LandmarkSet::new(pts.iter().map(|q| [T::lit(q[0]), T::lit(q[1])]).collect()))
    }

    /// Parameters of `shape`: the similarity part is recovered exactly, the
    /// shape part by least squares on the orthonormal basis.
    pub fn project_points(&self, shape: &[[f64; 2]]) -> Result<Vec<f64>> {
        let l = self.n_points();
        if shape.len() != l {
            return Err(Error::DimensionMismatch(format!("{} landmarks for a model with {l}", shape.len())));
        }
        let mean = self.mean_f64();
        let flat: Vec<f64> = shape.iter().flat_map(|q| [q[0], q[1]]).collect();
        let diff: Vec<f64> = flat.iter().zip(&mean).map(|(a, b)| a - b).collect();
        let q: Vec<f64> = self.similarity.iter().map(|u| diff.iter().zip(u).map(|(d, v)| d * v.as_f64()).sum()).collect();
        let (c, n1, sl) = self.frame();
        let (a, b) = (q[0] / n1, q[1] / n1);
        let t = [q[2] / sl, q[3] / sl];
        let det = (1.0 + a).powi(2) + b * b;
        if !(det > 1e-300) {
            return Err(Error::DegenerateShape);
        }
        // N^-1(x) = c + M^-1 (x - c - t), with M^-1 = [[1+a, b], [-b, 1+a]] / det.
        let mut resid = Vec::with_capacity(2 * l);
        for (pt, m0) in shape.iter().zip(mean.chunks_exact(2)) {
            let (dx, dy) = (pt[0] - c[0] - t[0], pt[1] - c[1] - t[1]);
            let ux = c[0] + ((1.0 + a) * dx + b * dy) / det;
            let uy = c[1] + (-b * dx + (1.0 + a) * dy) / det;
            resid.extend([ux - m0[0], uy - m0[1]]);
        }
        let mut p: Vec<f64> = self.basis.iter().map(|bv| resid.iter().zip(bv).map(|(r, v)| r * v.as_f64()).sum()).collect();
        p.extend(q);
        Ok(p)
    }

    pub fn project(&self, shape: &LandmarkSet<T>) -> Result<Vec<f64>> {
        let pts: Vec<[f64; 2]> = shape.points.iter().map(|q| [q[0].as_f64(), q[1].as_f64()]).collect();
        self.project_points(&pts)
    }

    /// Similarity part `q` for `x -> c + scale R(angle) (x - c) + translation`
    /// about the mean-shape centroid `c`.
    pub fn similarity_params(&self, scale: f64, angle: f64, translation: [f64; 2]) -> [f64; 4] {
        let (_, n1, sl) = self.frame();
        [(scale * angle.cos() - 1.0) * n1, scale * angle.sin() * n1, translation[0] * sl, translation[1] * sl]
    }

    /// Centroid of the mean shape.
    pub fn centroid(&self) -> [f64; 2] {
        self.frame().0
    }
}

/// `s = N_q(s0 + sum p_i s_i)`.
pub fn shape_from_params<T: Real>(model: &ShapeModel<T>, p: &[f64]) -> Result<LandmarkSet<T>> {
    model.instance(p)
}
