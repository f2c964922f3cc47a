//! Canonical-frame appearance model.

use serde::{Deserialize, Serialize};

use super::landmarks::LandmarkSet;
use super::mesh::{signed_area, MeshRaster, TriangulatedMesh};
use super::warp::warp_raster;
use crate::error::{Error, Result};
use crate::imaging::ThermalImage;
use crate::linalg::{orthonormalize, pca, retained_count};
use crate::scalar::Real;

/// Mean appearance and orthonormal modes, stored as vectors over the
/// canonical raster pixels (row-major order of the mesh interior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AppearanceModel<T> {
    pub mean: Vec<T>,
    pub basis: Vec<Vec<T>>,
    pub variances: Vec<T>,
}

impl<T: Real> AppearanceModel<T> {
    pub fn n_modes(&self) -> usize {
        self.basis.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.mean.len()
    }

    /// Coefficients of `v - A0` on the basis.
    pub fn project(&self, v: &[T]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| b.iter().zip(v.iter().zip(&self.mean)).map(|(bi, (x, m))| bi.as_f64() * (x.as_f64() - m.as_f64())).sum())
            .collect()
    }

    /// `A0 + sum alpha_i A_i`.
    pub fn instance(&self, alpha: &[f64]) -> Vec<T> {
        let mut out: Vec<f64> = self.mean.iter().map(|v| v.as_f64()).collect();
        for (a, b) in alpha.iter().zip(&self.basis) {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += a * bi.as_f64();
            }
        }
        out.into_iter().map(T::lit).collect()
    }
}

/// Places a raster-ordered vector into a canonical-frame image (0 off-mesh).
pub fn raster_to_image<T: Real>(v: &[T], raster: &MeshRaster<T>) -> ThermalImage<T> {
    let mut img = ThermalImage::zeros(raster.width, raster.height);
    for (px, &x) in raster.pixels.iter().zip(v) {
        img.set(px.x, px.y, x);
    }
    img
}

/// Raster-ordered values of a canonical-frame image.
pub fn image_to_raster<T: Real>(img: &ThermalImage<T>, raster: &MeshRaster<T>) -> Vec<T> {
    raster.pixels.iter().map(|px| img.get(px.x, px.y)).collect()
}

/// Warps each image onto the canonical raster, subtracts the mean and keeps
/// the leading principal components explaining `variance_fraction`.
pub fn train_appearance_model<T: Real>(
    images: &[ThermalImage<T>],
    landmarks: &[LandmarkSet<T>],
    mesh: &TriangulatedMesh,
    raster: &MeshRaster<T>,
    variance_fraction: f64,
) -> Result<AppearanceModel<T>> {
    if images.len() != landmarks.len() {
        return Err(Error::DimensionMismatch(format!("{} images vs {} landmark sets", images.len(), landmarks.len())));
    }
    if images.is_empty() {
        return Err(Error::InvalidParameter("empty appearance corpus".into()));
    }
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("variance fraction {variance_fraction} outside (0, 1]")));
    }
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(images.len());
    for (img, lm) in images.iter().zip(landmarks) {
        for (k, t) in mesh.triangles.iter().enumerate() {
            if signed_area(lm, t).abs() <= 1e-9 {
                return Err(Error::DegenerateTriangle(k));
            }
        }
        let (warped, _) = warp_raster(img, lm, mesh, raster);
        samples.push(image_to_raster(&warped, raster).iter().map(|v| v.as_f64()).collect());
    }
    let n = samples.len() as f64;
    let d = raster.len();
    let mut mean = vec![0.0; d];
    for s in &samples {
        for (m, x) in mean.iter_mut().zip(s) {
            *m += x / n;
        }
    }
    for s in &mut samples {
        s.iter_mut().zip(&mean).for_each(|(x, m)| *x -= m);
    }
    let p = pca(&samples);
    let keep = retained_count(&p.variances, p.total, variance_fraction);
    let mut basis: Vec<Vec<f64>> = p.directions.into_iter().take(keep).collect();
    orthonormalize(&mut basis);
    let variances = p.variances.into_iter().take(basis.len()).map(T::lit).collect();
    Ok(AppearanceModel {
        mean: mean.into_iter().map(T::lit).collect(),
        basis: basis.into_iter().map(|b| b.into_iter().map(T::lit).collect()).collect(),
        variances,
    })
}
