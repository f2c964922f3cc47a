//! End-to-end signature extraction and the versioned pipeline config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aam::{warp::warp_raster, Aam, LandmarkSet};
use crate::enhancement::{enhance_detail, DiffusionConfig};
use crate::error::{Error, Result, Stage, StageExt};
use crate::fit::{fit, init_from_mask, FitConfig, FitResult, Precomputed};
use crate::hashing::{content_hash, num};
use crate::imaging::{io, Mask, ThermalImage};
use crate::recognition::Signature;
use crate::scalar::Real;
use crate::segmentation::{morphology::erode, segment_face, SegmentationConfig, ThresholdMode};
use crate::vesselness::{extract_signature, VesselnessConfig, VesselnessMap};

pub const CONFIG_VERSION: u32 = 1;

/// Order of frontal warping and vesselness filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpOrder {
    /// Warp the image to the canonical frame, then filter.
    #[default]
    WarpFirst,
    /// Filter the input image, then warp the vesselness map.
    VesselnessFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub version: u32,
    pub segmentation: SegmentationConfig,
    pub diffusion: DiffusionConfig,
    pub fit: FitConfig,
    pub vesselness: VesselnessConfig,
    pub warp_order: WarpOrder,
    /// Band (pixels) inside the canonical face boundary left out of the
    /// signature.
    pub signature_margin: f64,
    pub model_path: Option<PathBuf>,
    pub gallery_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            segmentation: SegmentationConfig::default(),
            diffusion: DiffusionConfig::default(),
            fit: FitConfig::default(),
            vesselness: VesselnessConfig::default(),
            warp_order: WarpOrder::default(),
            signature_margin: 3.0,
            model_path: None,
            gallery_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Format(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version)));
        }
        self.segmentation.validate()?;
        self.diffusion.validate()?;
        self.fit.validate()?;
        if !(self.signature_margin >= 0.0) || !self.signature_margin.is_finite() {
            return Err(Error::InvalidParameter("signature_margin must be finite and non-negative".into()));
        }
        self.vesselness.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Every parameter that affects signatures, in a fixed order.
    pub fn canonical_string(&self) -> String {
        let s = &self.segmentation;
        let thresholds = match s.thresholds {
            ThresholdMode::Explicit { t_low, t_up } => format!("explicit:{}:{}", num(t_low), num(t_up)),
            ThresholdMode::Auto => "auto".into(),
        };
        let d = &self.diffusion;
        let f = &self.fit;
        format!(
            "v={};seg={},{};diff={},{},{},{:?};fit={},{},{},{},{},{},{};ves={};order={:?};margin={}",
            self.version,
            thresholds,
            num(s.se_area_fraction),
            num(d.k),
            d.iterations,
            num(d.dt),
            d.exponent_mode,
            f.max_iterations,
            num(f.param_tol),
            num(f.error_tol),
            f.damping,
            num(f.smoothing),
            f.coarse_levels,
            num(f.boundary_margin),
            self.vesselness.canonical_string(),
            self.warp_order,
            num(self.signature_margin)
        )
    }

    pub fn hash(&self) -> String {
        content_hash(&self.canonical_string())
    }
}

/// Everything a pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub mask: Mask,
    pub fit: FitResult<T>,
    pub frontal: ThermalImage<T>,
    /// Canonical pixels covered by the fitted mesh inside the input image,
    /// less the signature margin.
    pub support: Mask,
    pub signature: VesselnessMap<T>,
}

impl<T: Real> PipelineOutput<T> {
    pub fn into_signature(self, subject_id: impl Into<String>, image_id: impl Into<String>) -> Signature<T> {
        let mut sig = Signature::new(subject_id, image_id, self.signature, self.support);
        sig.fit_error = Some(self.fit.e_icaam);
        sig.converged = Some(self.fit.converged);
        sig
    }
}

/// Segment, enhance, fit, frontalize and extract the signature of one image.
/// Errors carry the stage that raised them. A fit that does not converge is
/// logged and flagged in the output, not raised.
pub fn run_pipeline<T: Real>(
    img: &ThermalImage<T>,
    model: &Aam<T>,
    pre: &Precomputed,
    cfg: &PipelineConfig,
    dump_dir: Option<&Path>,
) -> Result<PipelineOutput<T>> {
    let (mask, segmented) = segment_face(img, &cfg.segmentation).stage(Stage::Segmentation)?;
    let enhanced = enhance_detail(&segmented, &cfg.diffusion).stage(Stage::Enhancement)?;
    let init = init_from_mask(&mask, model).stage(Stage::Initialization)?;
    let fitted = fit(&enhanced, &init, model, pre, &cfg.fit).stage(Stage::Fitting)?;
    if !fitted.converged {
        log::warn!(
            "fit did not converge after {} iterations (e = {:.4e}, overlap {:.2})",
            fitted.iterations,
            fitted.e_icaam,
            fitted.overlap
        );
    }
    let (frontal, in_image) = warp_raster(img, &fitted.landmarks, &model.mesh, model.raster());
    let mut support = model.canonical_mask().and(&in_image).stage(Stage::Frontalization)?;
    if cfg.signature_margin > 0.0 {
        support = erode(&support, cfg.signature_margin);
    }
    let signature = match cfg.warp_order {
        WarpOrder::WarpFirst => extract_signature(&frontal, &support, &cfg.vesselness),
        WarpOrder::VesselnessFirst => extract_signature(img, &mask, &cfg.vesselness).map(|v| {
            let (warped, _) = warp_raster(&v.image, &fitted.landmarks, &model.mesh, model.raster());
            VesselnessMap { image: warped, ..v }
        }),
    }
    .stage(Stage::Vesselness)?;
    let signature = VesselnessMap { config_hash: cfg.hash(), ..signature };

    if let Some(dir) = dump_dir {
        dump(dir, &mask, &segmented, &enhanced, &fitted.landmarks, &frontal, &signature.image)?;
    }
    Ok(PipelineOutput { mask, fit: fitted, frontal, support, signature })
}

fn dump<T: Real>(
    dir: &Path,
    mask: &Mask,
    segmented: &ThermalImage<T>,
    enhanced: &ThermalImage<T>,
    landmarks: &LandmarkSet<T>,
    frontal: &ThermalImage<T>,
    signature: &ThermalImage<T>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_mask_pgm(mask, dir.join("01_mask.pgm"))?;
    io::write_pgm16_rescaled(segmented, dir.join("02_segmented.pgm"))?;
    io::write_pgm16_rescaled(enhanced, dir.join("03_enhanced.pgm"))?;
    landmarks.save(dir.join("04_landmarks.txt"))?;
    io::write_pgm16_rescaled(frontal, dir.join("05_frontal.pgm"))?;
    io::write_pgm16(signature, dir.join("06_signature.pgm"))?;
    Ok(())
}
