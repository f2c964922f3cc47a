use super::ThermalImage;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Kernel half-width in standard deviations.
const TRUNCATION: f64 = 4.0;

/// Sampled, unit-sum Gaussian kernel truncated at `±ceil(4 sigma)`.
pub fn gaussian_kernel<T: Real>(sigma: f64) -> Vec<T> {
    let radius = (TRUNCATION * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::lit(v / sum)).collect()
}

/// Separable Gaussian convolution with edge-replicating borders.
///
/// `sigma == 0` returns the input unchanged.
pub fn gaussian_blur<T: Real>(img: &ThermalImage<T>, sigma: f64) -> Result<ThermalImage<T>> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::InvalidParameter(format!("blur sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel::<T>(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());

    let mut horiz = ThermalImage::zeros(w, h).with_units(img.units());
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * img.get_clamped(x as isize + k as isize - r, y as isize);
            }
            horiz.set(x, y, acc);
        }
    }
    let mut out = ThermalImage::zeros(w, h).with_units(img.units());
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * horiz.get_clamped(x as isize, y as isize + k as isize - r);
            }
            out.set(x, y, acc);
        }
    }
    Ok(out)
}

/// Per-pixel symmetric Hessian `(Hxx, Hxy, Hyy)` at one analysis scale.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField<T> {
    pub width: usize,
    pub height: usize,
    pub scale: f64,
    pub xx: Vec<T>,
    pub xy: Vec<T>,
    pub yy: Vec<T>,
}

impl<T: Real> HessianField<T> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (T, T, T) {
        let i = y * self.width + x;
        (self.xx[i], self.xy[i], self.yy[i])
    }

    /// Largest Frobenius norm `sqrt(Hxx^2 + 2 Hxy^2 + Hyy^2)` over the field.
    pub fn max_frobenius(&self) -> T {
        let two = T::lit(2.0);
        (0..self.xx.len())
            .map(|i| (self.xx[i] * self.xx[i] + two * self.xy[i] * self.xy[i] + self.yy[i] * self.yy[i]).sqrt())
            .fold(T::zero(), T::max)
    }
}

/// Scale-normalized Hessian: blur with `sigma = s`, central second differences,
/// multiplied by `s^gamma`.
pub fn hessian_at_scale<T: Real>(img: &ThermalImage<T>, s: f64, gamma: f64) -> Result<HessianField<T>> {
    if !(s >= 1.0) || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("Hessian scale must be >= 1, got {s}")));
    }
    if !gamma.is_finite() {
        return Err(Error::InvalidParameter("scale normalization gamma must be finite".into()));
    }
    let blurred = gaussian_blur(img, s)?;
    let norm = T::lit(s.powf(gamma));
    let quarter = T::lit(0.25);
    let two = T::lit(2.0);
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let (mut xx, mut xy, mut yy) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = blurred.get_clamped(x, y);
            let dxx = blurred.get_clamped(x + 1, y) - two * c + blurred.get_clamped(x - 1, y);
            let dyy = blurred.get_clamped(x, y + 1) - two * c + blurred.get_clamped(x, y - 1);
            let dxy = (blurred.get_clamped(x + 1, y + 1) - blurred.get_clamped(x + 1, y - 1) - blurred.get_clamped(x - 1, y + 1)
                + blurred.get_clamped(x - 1, y - 1))
                * quarter;
            xx.push(dxx * norm);
            xy.push(dxy * norm);
            yy.push(dyy * norm);
        }
    }
    Ok(HessianField { width: w, height: h, scale: s, xx, xy, yy })
}

/// Eigenvalues of a symmetric 2x2 matrix ordered by magnitude: `|lambda1| <= |lambda2|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair<T> {
    pub lambda1: T,
    pub lambda2: T,
}

/// Closed-form eigenvalues of `[[a, b], [b, c]]`, magnitude-ordered.
///
/// Equal magnitudes are returned as (algebraically smaller, larger).
pub fn eigen2x2_sorted<T: Real>(a: T, b: T, c: T) -> EigenPair<T> {
    let half = T::lit(0.5);
    let mean = (a + c) * half;
    let radius = ((a - c) * half).hypot(b);
    let lo = mean - radius;
    let hi = mean + radius;
    if lo.abs() <= hi.abs() {
        EigenPair { lambda1: lo, lambda2: hi }
    } else {
        EigenPair { lambda1: hi, lambda2: lo }
    }
}
