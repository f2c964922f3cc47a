//! Face foreground segmentation: intensity band thresholding, moment-based
//! ellipse fitting and disc-morphology refinement.

pub mod morphology;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Mask, ThermalImage};
use crate::scalar::Real;

pub type SegmentationMask = Mask;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    Explicit {
        t_low: f64,
        t_up: f64,
    },
    /// Otsu lower threshold, maximum intensity as upper threshold.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub thresholds: ThresholdMode,
    /// Structuring disc area as a fraction of the fitted face ellipse area.
    pub se_area_fraction: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { thresholds: ThresholdMode::Auto, se_area_fraction: 0.06 }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if let ThresholdMode::Explicit { t_low, t_up } = self.thresholds {
            if !(t_low < t_up) {
                return Err(Error::InvalidParameter(format!("t_low ({t_low}) must be below t_up ({t_up})")));
            }
        }
        if !(self.se_area_fraction > 0.0 && self.se_area_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!("se_area_fraction must lie in (0, 1), got {}", self.se_area_fraction)));
        }
        Ok(())
    }
}

/// Moment-equivalent ellipse; `theta` is the major-axis angle from the +x axis
/// in pixel coordinates (y down), normalized to `(-pi/2, pi/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceEllipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl FaceEllipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.a * self.b
    }
}

/// Foreground iff `t_low <= I <= t_up`.
pub fn threshold_band<T: Real>(img: &ThermalImage<T>, t_low: f64, t_up: f64) -> Result<Mask> {
    if !(t_low < t_up) {
        return Err(Error::InvalidParameter(format!("t_low ({t_low}) must be below t_up ({t_up})")));
    }
    let (lo, hi) = (T::lit(t_low), T::lit(t_up));
    Mask::new(img.width(), img.height(), img.data().iter().map(|&v| v >= lo && v <= hi).collect())
}

const OTSU_BINS: usize = 256;

/// Otsu threshold over a 256-bin histogram of the intensity range as `t_low`,
/// and the maximum intensity as `t_up`.
///
/// When several cut points maximize the between-class variance the middle of
/// that plateau is used.
pub fn auto_thresholds<T: Real>(img: &ThermalImage<T>) -> Result<(f64, f64)> {
    let (lo, hi) = img.min_max();
    let (lo, hi) = (lo.as_f64(), hi.as_f64());
    if !(hi > lo) {
        return Err(Error::ConstantImage);
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0u64; OTSU_BINS];
    for v in img.data() {
        let k = (((v.as_f64() - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[k] += 1;
    }
    let total = img.len() as f64;
    let centre = |k: usize| lo + (k as f64 + 0.5) * width;
    let sum_all: f64 = hist.iter().enumerate().map(|(k, &c)| c as f64 * centre(k)).sum();

    let mut best = f64::NEG_INFINITY;
    let (mut first, mut last) = (0usize, 0usize);
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    // Cut after bin k: class 0 = bins 0..=k.
    for (k, &count) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += count as f64;
        sum0 += count as f64 * centre(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        let tol = if best.is_finite() { 1e-12 * best.abs() } else { 0.0 };
        if best == f64::NEG_INFINITY || between > best + tol {
            best = between;
            first = k;
            last = k;
        } else if (between - best).abs() <= tol {
            last = k;
        }
    }
    if best == f64::NEG_INFINITY {
        return Err(Error::ConstantImage);
    }
    let cut = 0.5 * (first + last) as f64 + 1.0;
    Ok((lo + cut * width, hi))
}

/// Ellipse with the zeroth, first and second moments of the largest
/// 8-connected foreground component.
pub fn fit_face_ellipse(mask: &Mask) -> Result<FaceEllipse> {
    let comp = morphology::largest_component(mask);
    let n = comp.count();
    if n < 5 {
        return Err(Error::TooFewPixels { found: n, required: 5 });
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for y in 0..comp.height() {
        for x in 0..comp.width() {
            if comp.get(x, y) {
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    let nf = n as f64;
    let (cx, cy) = (sx / nf, sy / nf);
    let (mut mxx, mut mxy, mut myy) = (0.0, 0.0, 0.0);
    for y in 0..comp.height() {
        for x in 0..comp.width() {
            if comp.get(x, y) {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                mxx += dx * dx;
                mxy += dx * dy;
                myy += dy * dy;
            }
        }
    }
    // Unit pixels carry 1/12 of extra variance along each axis.
    let (mxx, mxy, myy) = (mxx / nf - 1.0 / 12.0, mxy / nf, myy / nf - 1.0 / 12.0);
    let half_tr = 0.5 * (mxx + myy);
    let rad = (0.25 * (mxx - myy) * (mxx - myy) + mxy * mxy).sqrt();
    let (l1, l2) = (half_tr + rad, (half_tr - rad).max(0.0));
    let mut theta = 0.5 * (2.0 * mxy).atan2(mxx - myy);
    if theta <= -std::f64::consts::FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }
    let a = 2.0 * l1.sqrt();
    let b = (2.0 * l2.sqrt()).max(f64::MIN_POSITIVE);
    Ok(FaceEllipse { cx, cy, a, b, theta })
}

/// Radius of the disc whose area is `fraction` of the ellipse area.
pub fn structuring_radius(ellipse: &FaceEllipse, fraction: f64) -> f64 {
    (fraction * ellipse.a * ellipse.b).sqrt()
}

/// Closing then opening with a disc of area `se_area_fraction` of the face
/// ellipse; only the largest connected component is kept.
pub fn morph_refine(mask: &Mask, ellipse: &FaceEllipse, se_area_fraction: f64) -> Result<Mask> {
    let r = structuring_radius(ellipse, se_area_fraction);
    if !(r >= 1.0) {
        return Err(Error::StructuringElementTooSmall(r));
    }
    morph_refine_with_radius(mask, r)
}

pub fn morph_refine_with_radius(mask: &Mask, radius: f64) -> Result<Mask> {
    if !(radius >= 1.0) {
        return Err(Error::StructuringElementTooSmall(radius));
    }
    let closed = morphology::closing(mask, radius);
    let opened = morphology::opening(&closed, radius);
    Ok(morphology::largest_component(&opened))
}

/// Face mask plus the input with everything off-mask set to zero.
pub fn segment_face<T: Real>(img: &ThermalImage<T>, cfg: &SegmentationConfig) -> Result<(Mask, ThermalImage<T>)> {
    cfg.validate()?;
    let (t_low, t_up) = match cfg.thresholds {
        ThresholdMode::Explicit { t_low, t_up } => (t_low, t_up),
        ThresholdMode::Auto => auto_thresholds(img)?,
    };
    let provisional = threshold_band(img, t_low, t_up)?;
    let ellipse = fit_face_ellipse(&provisional)?;
    let mask = morph_refine(&provisional, &ellipse, cfg.se_area_fraction)?;
    if mask.count() == 0 {
        return Err(Error::TooFewPixels { found: 0, required: 1 });
    }
    let suppressed = img.masked(&mask)?;
    Ok((mask, suppressed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellipse_mask(w: usize, h: usize, e: &FaceEllipse) -> Mask {
        let (c, s) = (e.theta.cos(), e.theta.sin());
        Mask::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f64 - e.cx, y as f64 - e.cy);
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            (u / e.a).powi(2) + (v / e.b).powi(2) <= 1.0
        })
    }

    fn warm_ellipse(w: usize, h: usize, e: &FaceEllipse) -> (ThermalImage<f64>, Mask) {
        let m = ellipse_mask(w, h, e);
        let img = ThermalImage::from_fn(w, h, |x, y| if m.get(x, y) { 0.8 } else { 0.1 });
        (img, m)
    }

    #[test]
    fn band_threshold_cases() {
        let img = ThermalImage::<f64>::from_fn(4, 4, |x, _| 0.5 + 0.1 * x as f64);
        assert_eq!(threshold_band(&img, 0.0, 1.0).unwrap().count(), 16);
        assert_eq!(threshold_band(&img, 0.95, 1.0).unwrap().count(), 0);
        assert!(threshold_band(&img, 0.5, 0.5).is_err());
        let e = FaceEllipse { cx: 30.0, cy: 25.0, a: 20.0, b: 12.0, theta: 0.3 };
        let (img, truth) = warm_ellipse(64, 50, &e);
        assert_eq!(threshold_band(&img, 0.5, 1.0).unwrap(), truth);
    }

    #[test]
    fn otsu_cases() {
        let img = ThermalImage::<f64>::from_fn(10, 10, |x, _| if x < 5 { 0.1 } else { 0.9 });
        let (lo, hi) = auto_thresholds(&img).unwrap();
        assert!(lo > 0.1 && lo < 0.9, "{lo}");
        assert_eq!(hi, 0.9);
        assert!(matches!(auto_thresholds(&ThermalImage::<f64>::filled(4, 4, 0.3)), Err(Error::ConstantImage)));
    }

    #[test]
    fn ellipse_moments() {
        let disc = FaceEllipse { cx: 50.0, cy: 40.0, a: 20.0, b: 20.0, theta: 0.0 };
        let f = fit_face_ellipse(&ellipse_mask(100, 80, &disc)).unwrap();
        assert!((f.cx - 50.0).abs() < 0.05 && (f.cy - 40.0).abs() < 0.05);
        assert!((f.a / 20.0 - 1.0).abs() < 0.02 && (f.b / 20.0 - 1.0).abs() < 0.02);

        let e = FaceEllipse { cx: 60.0, cy: 50.0, a: 40.0, b: 20.0, theta: 0.0 };
        let f = fit_face_ellipse(&ellipse_mask(120, 100, &e)).unwrap();
        assert!((f.a / 40.0 - 1.0).abs() < 0.02 && (f.b / 20.0 - 1.0).abs() < 0.02);
        assert!(f.theta.abs() < 1f64.to_radians());

        let rot = FaceEllipse { theta: 30f64.to_radians(), ..e };
        let f = fit_face_ellipse(&ellipse_mask(120, 100, &rot)).unwrap();
        assert!((f.theta - rot.theta).abs() < 2f64.to_radians(), "{}", f.theta.to_degrees());

        assert!(fit_face_ellipse(&Mask::empty(10, 10)).is_err());
        let few = Mask::from_fn(10, 10, |x, y| y == 0 && x < 4);
        assert!(matches!(fit_face_ellipse(&few), Err(Error::TooFewPixels { found: 4, .. })));
    }

    #[test]
    fn refine_removes_specks_and_fills_holes() {
        let e = FaceEllipse { cx: 40.0, cy: 40.0, a: 25.0, b: 18.0, theta: 0.0 };
        let mut m = ellipse_mask(90, 90, &e);
        m.set(85, 5, true);
        m.set(40, 40, false);
        m.set(41, 40, false);
        let r = morph_refine(&m, &e, 0.06).unwrap();
        assert!(!r.get(85, 5));
        assert!(r.get(40, 40) && r.get(41, 40));

        let full = Mask::full(30, 30);
        assert_eq!(morph_refine(&full, &e, 0.06).unwrap(), full);

        let tiny = FaceEllipse { a: 2.0, b: 1.0, ..e };
        assert!(matches!(morph_refine(&m, &tiny, 0.06), Err(Error::StructuringElementTooSmall(_))));
    }

    #[test]
    fn segment_suppresses_background() {
        let e = FaceEllipse { cx: 50.0, cy: 45.0, a: 30.0, b: 22.0, theta: 0.2 };
        let (img, truth) = warm_ellipse(100, 90, &e);
        let (mask, out) = segment_face(&img, &SegmentationConfig::default()).unwrap();
        assert!(mask.iou(&truth) > 0.97);
        for i in 0..img.len() {
            if mask.data()[i] {
                assert_eq!(out.data()[i], img.data()[i]);
            } else {
                assert_eq!(out.data()[i], 0.0);
            }
        }
        let flat = ThermalImage::<f64>::filled(20, 20, 0.4);
        assert!(matches!(segment_face(&flat, &SegmentationConfig::default()), Err(Error::ConstantImage)));
    }
}
