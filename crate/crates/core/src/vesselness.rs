//! Multi-scale Hessian vesselness of warm (bright) tubular structures.
//!
//! With magnitude-ordered eigenvalues `|l1| <= |l2|` of the scale-normalized
//! Hessian, `R_A = |l1| / |l2|` and `S = sqrt(l1^2 + l2^2)`:
//!
//! * [`FormulaMode::Frangi`]: `exp(-R_A^2 / 2b^2) (1 - exp(-S^2 / 2c^2))`
//! * [`FormulaMode::Paper`]: `(1 - exp(-R_A / 2b^2)) (1 - exp(-S / 2c^2))`
//!
//! Pixels with `l2 >= 0` (dark or flat structure) score 0.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{content_hash, num};
use crate::imaging::{eigen2x2_sorted, hessian_at_scale, Mask, ThermalImage};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    Paper,
    #[default]
    Frangi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VesselnessConfig {
    pub beta: f64,
    /// Structureness sensitivity; `None` uses half the largest Hessian
    /// Frobenius norm of the image at each scale.
    pub c_struct: Option<f64>,
    pub s_min: f64,
    pub s_max: f64,
    pub s_step: f64,
    pub gamma: f64,
    pub formula_mode: FormulaMode,
}

impl Default for VesselnessConfig {
    fn default() -> Self {
        Self { beta: 0.5, c_struct: None, s_min: 3.0, s_max: 5.0, s_step: 1.0, gamma: 2.0, formula_mode: FormulaMode::Frangi }
    }
}

impl VesselnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min >= 1.0 && self.s_min <= self.s_max && self.s_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scales must satisfy 1 <= s_min <= s_max, got {}..{}",
                self.s_min, self.s_max
            )));
        }
        if !(self.s_step > 0.0) {
            return Err(Error::InvalidParameter("s_step must be positive".into()));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter("beta must be positive".into()));
        }
        if let Some(c) = self.c_struct {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidParameter("c_struct must be positive".into()));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::InvalidParameter("gamma must be finite".into()));
        }
        Ok(())
    }

    /// `s_min, s_min + s_step, ...` up to `s_max` (inclusive, with a small
    /// tolerance for accumulated rounding).
    pub fn scales(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let s = self.s_min + k as f64 * self.s_step;
            if s > self.s_max + 1e-9 * self.s_step {
                break;
            }
            out.push(s);
            k += 1;
        }
        out
    }

    pub fn canonical_string(&self) -> String {
        format!(
            "beta={};c={};s_min={};s_max={};s_step={};gamma={};mode={:?}",
            num(self.beta),
            self.c_struct.map_or("auto".to_string(), num),
            num(self.s_min),
            num(self.s_max),
            num(self.s_step),
            num(self.gamma),
            self.formula_mode
        )
    }

    pub fn hash(&self) -> String {
        content_hash(&self.canonical_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselnessMap<T> {
    pub image: ThermalImage<T>,
    pub scales: Vec<f64>,
    pub config_hash: String,
}

/// Vesselness of one eigenvalue pair.
pub fn vesselness_value<T: Real>(lambda1: T, lambda2: T, beta: T, c: T, mode: FormulaMode) -> T {
    if lambda2 >= T::zero() {
        return T::zero();
    }
    let two = T::lit(2.0);
    let ra = lambda1.abs() / lambda2.abs();
    let s2 = lambda1 * lambda1 + lambda2 * lambda2;
    let v = match mode {
        FormulaMode::Frangi => (-(ra * ra) / (two * beta * beta)).exp() * (T::one() - (-s2 / (two * c * c)).exp()),
        FormulaMode::Paper => (T::one() - (-ra / (two * beta * beta)).exp()) * (T::one() - (-s2.sqrt() / (two * c * c)).exp()),
    };
    v.max(T::zero()).min(T::one() - T::epsilon())
}

fn at_scale_unchecked<T: Real>(img: &ThermalImage<T>, s: f64, cfg: &VesselnessConfig) -> Result<ThermalImage<T>> {
    let hess = hessian_at_scale(img, s, cfg.gamma)?;
    let c = match cfg.c_struct {
        Some(c) => T::lit(c),
        None => T::lit(0.5) * hess.max_frobenius(),
    };
    let mut out = ThermalImage::zeros(img.width(), img.height());
    if c <= T::zero() {
        return Ok(out);
    }
    let beta = T::lit(cfg.beta);
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let e = eigen2x2_sorted(hess.xx[i], hess.xy[i], hess.yy[i]);
        *v = vesselness_value(e.lambda1, e.lambda2, beta, c, cfg.formula_mode);
    }
    Ok(out)
}

pub fn vesselness_at_scale<T: Real>(img: &ThermalImage<T>, s: f64, cfg: &VesselnessConfig) -> Result<VesselnessMap<T>> {
    cfg.validate()?;
    if !(s >= cfg.s_min - 1e-12 && s <= cfg.s_max + 1e-12) {
        return Err(Error::InvalidParameter(format!("scale {s} outside [{}, {}]", cfg.s_min, cfg.s_max)));
    }
    Ok(VesselnessMap { image: at_scale_unchecked(img, s, cfg)?, scales: vec![s], config_hash: cfg.hash() })
}

/// Pointwise maximum over all configured scales, plus the index of the
/// maximizing scale per pixel (the smallest on ties).
pub fn vesselness_multiscale_argmax<T: Real>(
    img: &ThermalImage<T>,
    cfg: &VesselnessConfig,
) -> Result<(VesselnessMap<T>, Vec<usize>)> {
    cfg.validate()?;
    let scales = cfg.scales();
    let maps: Vec<ThermalImage<T>> = scales.par_iter().map(|&s| at_scale_unchecked(img, s, cfg)).collect::<Result<_>>()?;
    let mut best = maps[0].clone();
    let mut arg = vec![0usize; best.len()];
    for (k, m) in maps.iter().enumerate().skip(1) {
        for ((b, a), &v) in best.data_mut().iter_mut().zip(arg.iter_mut()).zip(m.data()) {
            if v > *b {
                *b = v;
                *a = k;
            }
        }
    }
    Ok((VesselnessMap { image: best, scales, config_hash: cfg.hash() }, arg))
}

pub fn vesselness_multiscale<T: Real>(img: &ThermalImage<T>, cfg: &VesselnessConfig) -> Result<VesselnessMap<T>> {
    Ok(vesselness_multiscale_argmax(img, cfg)?.0)
}

/// Multi-scale vesselness of a canonical frontal image, zero off `mask`.
///
/// The image is first extended outward from the mask so the mask border does
/// not itself register as structure.
pub fn extract_signature<T: Real>(frontal: &ThermalImage<T>, mask: &Mask, cfg: &VesselnessConfig) -> Result<VesselnessMap<T>> {
    frontal.check_same_size(mask.width(), mask.height())?;
    if mask.count() == 0 {
        return Err(Error::TooFewPixels { found: 0, required: 1 });
    }
    let extended = frontal.extend_from_mask(mask)?;
    let mut map = vesselness_multiscale(&extended, cfg)?;
    map.image = map.image.masked(mask)?;
    Ok(map)
}
