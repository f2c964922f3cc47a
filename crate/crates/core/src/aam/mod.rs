//! Active appearance model: shape and appearance PCA over a triangulated
//! landmark mesh, trained on detail-enhanced images.

pub mod appearance;
pub mod landmarks;
pub mod mesh;
pub mod procrustes;
pub mod shape;
pub mod warp;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use appearance::{image_to_raster, raster_to_image, train_appearance_model, AppearanceModel};
pub use landmarks::{mirror_augment, mirror_shape, LandmarkSet, PointDefinition};
pub use mesh::{MeshRaster, RasterPixel, TriangulatedMesh};
pub use procrustes::procrustes_align;
pub use shape::{shape_from_params, train_shape_model, ShapeModel};
pub use warp::{piecewise_affine_warp, piecewise_affine_warp_with_support};

use crate::error::{Error, Result};
use crate::imaging::{Mask, ThermalImage};
use crate::scalar::Real;

const MODEL_FORMAT: &str = "thermoface-aam";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AamTrainConfig {
    pub shape_variance: f64,
    pub appearance_variance: f64,
    /// Add a horizontally mirrored copy of every training image.
    pub mirror: bool,
    /// Longest side of the mean shape's bounding box in the canonical frame.
    pub frame_size: f64,
    pub margin: f64,
}

impl Default for AamTrainConfig {
    fn default() -> Self {
        Self { shape_variance: 0.99, appearance_variance: 0.99, mirror: true, frame_size: 128.0, margin: 4.0 }
    }
}

/// A trained model. Immutable after training; share it freely across fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Aam<T> {
    pub width: usize,
    pub height: usize,
    pub points: PointDefinition,
    pub mesh: TriangulatedMesh,
    pub shape: ShapeModel<T>,
    pub appearance: AppearanceModel<T>,
    raster: MeshRaster<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct ModelFile<T> {
    format: String,
    version: u32,
    width: usize,
    height: usize,
    points: PointDefinition,
    mesh: TriangulatedMesh,
    shape: ShapeModel<T>,
    appearance: AppearanceModel<T>,
}

impl<T: Real> Aam<T> {
    pub fn from_parts(
        width: usize,
        height: usize,
        points: PointDefinition,
        mesh: TriangulatedMesh,
        shape: ShapeModel<T>,
        appearance: AppearanceModel<T>,
    ) -> Result<Self> {
        if points.len() != shape.n_points() {
            return Err(Error::DimensionMismatch("point definition vs shape model".into()));
        }
        mesh.validate(&shape.mean)?;
        let raster = MeshRaster::new(&mesh, &shape.mean, width, height)?;
        if appearance.n_pixels() != raster.len() || appearance.basis.iter().any(|b| b.len() != raster.len()) {
            return Err(Error::DimensionMismatch(format!(
                "appearance has {} pixels, canonical mesh interior has {}",
                appearance.n_pixels(),
                raster.len()
            )));
        }
        Ok(Self { width, height, points, mesh, shape, appearance, raster })
    }

    /// Mesh-interior pixels of the canonical frame with their barycentrics.
    pub fn raster(&self) -> &MeshRaster<T> {
        &self.raster
    }

    pub fn canonical_mask(&self) -> Mask {
        self.raster.mask()
    }

    /// Mean appearance as a canonical-frame image.
    pub fn mean_appearance(&self) -> ThermalImage<T> {
        raster_to_image(&self.appearance.mean, &self.raster)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            width: self.width,
            height: self.height,
            points: self.points.clone(),
            mesh: self.mesh.clone(),
            shape: self.shape.clone(),
            appearance: self.appearance.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile<T> = serde_json::from_str(text)?;
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model file {} v{}", f.format, f.version)));
        }
        Self::from_parts(f.width, f.height, f.points, f.mesh, f.shape, f.appearance)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Landmarks of a horizontally flipped image of width `width`.
fn flip_landmarks<T: Real>(lm: &LandmarkSet<T>, width: usize, mirror: &[usize]) -> LandmarkSet<T> {
    let w1 = T::from_usize_lossy(width - 1);
    LandmarkSet::new(mirror.iter().map(|&src| [w1 - lm.points[src][0], lm.points[src][1]]).collect())
}

/// Trains shape and appearance models from enhanced images and their landmarks.
pub fn train_aam<T: Real>(
    images: &[ThermalImage<T>],
    landmarks: &[LandmarkSet<T>],
    points: &PointDefinition,
    cfg: &AamTrainConfig,
) -> Result<Aam<T>> {
    if images.len() != landmarks.len() {
        return Err(Error::DimensionMismatch(format!("{} images vs {} landmark sets", images.len(), landmarks.len())));
    }
    if let Some(bad) = landmarks.iter().find(|l| l.len() != points.len()) {
        return Err(Error::DimensionMismatch(format!(
            "landmark set with {} points, point definition has {}",
            bad.len(),
            points.len()
        )));
    }
    if !(cfg.frame_size >= 8.0) || !(cfg.margin >= 0.0) {
        return Err(Error::InvalidParameter("canonical frame too small".into()));
    }
    let mut imgs = images.to_vec();
    let mut lms = landmarks.to_vec();
    if cfg.mirror {
        for (img, lm) in images.iter().zip(landmarks) {
            imgs.push(img.flipped_horizontally());
            lms.push(flip_landmarks(lm, img.width(), &points.mirror));
        }
    }
    let (aligned, mean) = procrustes_align(&lms)?;

    let xs = mean.points.iter().map(|p| p[0].as_f64());
    let ys = mean.points.iter().map(|p| p[1].as_f64());
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let scale = cfg.frame_size / (x1 - x0).max(y1 - y0);
    let place =
        |p: [T; 2]| [T::lit(cfg.margin + (p[0].as_f64() - x0) * scale), T::lit(cfg.margin + (p[1].as_f64() - y0) * scale)];
    let width = (2.0 * cfg.margin + (x1 - x0) * scale).ceil() as usize + 1;
    let height = (2.0 * cfg.margin + (y1 - y0) * scale).ceil() as usize + 1;
    let canonical: Vec<LandmarkSet<T>> = aligned.iter().map(|s| s.map(place)).collect();

    let shape = train_shape_model(&canonical, cfg.shape_variance)?;
    let mesh = TriangulatedMesh::delaunay(&shape.mean)?;
    let raster = MeshRaster::new(&mesh, &shape.mean, width, height)?;
    let appearance = train_appearance_model(&imgs, &lms, &mesh, &raster, cfg.appearance_variance)?;
    log::info!(
        "trained AAM on {} images: {} shape and {} appearance components, frame {width}x{height}",
        imgs.len(),
        shape.n_modes(),
        appearance.n_modes()
    );
    Aam::from_parts(width, height, points.clone(), mesh, shape, appearance)
}

/// Warps `img` from the fitted landmarks onto the mean shape in the canonical frame.
pub fn synthesize_frontal<T: Real>(img: &ThermalImage<T>, fitted: &LandmarkSet<T>, model: &Aam<T>) -> Result<ThermalImage<T>> {
    if fitted.len() != model.shape.n_points() {
        return Err(Error::DimensionMismatch("fitted landmarks vs model".into()));
    }
    let (out, _) = warp::warp_raster(img, fitted, &model.mesh, &model.raster);
    Ok(out)
}
