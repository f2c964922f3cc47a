//! Image containers, binary masks, Gaussian scale space and Hessian analysis.

mod filter;
pub mod io;

pub use filter::{eigen2x2_sorted, gaussian_blur, gaussian_kernel, hessian_at_scale, EigenPair, HessianField};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// How intensities of a [`ThermalImage`] should be interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Intensities normalized to `[0, 1]` (what the file readers produce).
    #[default]
    Normalized,
    /// Raw counts on the 8-bit `0..=255` scale.
    Counts,
}

impl Units {
    /// Factor converting intensities in these units to the 0–255 scale.
    pub fn to_8bit_scale(self) -> f64 {
        match self {
            Units::Normalized => 255.0,
            Units::Counts => 1.0,
        }
    }
}

/// Single-channel image of real radiometric intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
    units: Units,
}

impl<T: Real> ThermalImage<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!("image dimensions must be positive, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} samples for a {width}x{height} image", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pixel {} of image", i)));
        }
        Ok(Self { width, height, data, units: Units::Normalized })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![value; width * height], units: Units::Normalized }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, T::zero())
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut img = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn with_units(mut self, units: Units) -> Self {
        self.units = units;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn units(&self) -> Units {
        self.units
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel access with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear interpolation; `None` when `(x, y)` lies outside the pixel grid.
    pub fn sample_bilinear(&self, x: T, y: T) -> Option<T> {
        let w1 = T::from_usize_lossy(self.width - 1);
        let h1 = T::from_usize_lossy(self.height - 1);
        if !(x >= T::zero() && y >= T::zero() && x <= w1 && y <= h1) {
            return None;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0.to_usize().unwrap_or(0);
        let yi = y0.to_usize().unwrap_or(0);
        let xj = (xi + 1).min(self.width - 1);
        let yj = (yi + 1).min(self.height - 1);
        let a = self.get(xi, yi);
        let b = self.get(xj, yi);
        let c = self.get(xi, yj);
        let d = self.get(xj, yj);
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        Some(top + (bottom - top) * fy)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect(), units: self.units }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_size(other.width, other.height)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            units: self.units,
        })
    }

    pub fn check_same_size(&self, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", self.width, self.height, width, height)));
        }
        Ok(())
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::from_usize_lossy(self.data.len())
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> ThermalImage<U> {
        ThermalImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
            units: self.units,
        }
    }

    /// Copy with every pixel outside `mask` set to zero.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        self.check_same_size(mask.width(), mask.height())?;
        let mut out = self.clone();
        for (v, &m) in out.data.iter_mut().zip(mask.data()) {
            if !m {
                *v = T::zero();
            }
        }
        Ok(out)
    }

    /// Horizontal flip (`x -> width - 1 - x`).
    pub fn flipped_horizontally(&self) -> Self {
        let w = self.width;
        Self::from_fn(w, self.height, |x, y| self.get(w - 1 - x, y)).with_units(self.units)
    }

    /// Fills the pixels outside `mask` by propagating values outward from the
    /// mask, one 8-neighbourhood ring at a time (each new pixel takes the mean
    /// of its already-filled neighbours). Removes the artificial step at the
    /// mask border before derivative filtering.
    pub fn extend_from_mask(&self, mask: &Mask) -> Result<Self> {
        self.check_same_size(mask.width(), mask.height())?;
        if mask.count() == 0 {
            return Err(Error::TooFewPixels { found: 0, required: 1 });
        }
        let (w, h) = (self.width, self.height);
        let mut out = self.clone();
        let mut filled: Vec<bool> = mask.data().to_vec();
        let mut frontier: Vec<usize> = Vec::new();
        loop {
            frontier.clear();
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if filled[i] {
                        continue;
                    }
                    if neighbours8(x, y, w, h).any(|j| filled[j]) {
                        frontier.push(i);
                    }
                }
            }
            if frontier.is_empty() {
                break;
            }
            let values: Vec<T> = frontier
                .iter()
                .map(|&i| {
                    let (x, y) = (i % w, i / w);
                    let mut sum = T::zero();
                    let mut n = 0usize;
                    for j in neighbours8(x, y, w, h) {
                        if filled[j] {
                            sum += out.data[j];
                            n += 1;
                        }
                    }
                    sum / T::from_usize_lossy(n)
                })
                .collect();
            for (&i, v) in frontier.iter().zip(values) {
                out.data[i] = v;
                filled[i] = true;
            }
        }
        Ok(out)
    }
}

pub(crate) fn neighbours8(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (x as isize, y as isize);
    (-1isize..=1).flat_map(move |dy| (-1isize..=1).map(move |dx| (dx, dy))).filter(|&(dx, dy)| dx != 0 || dy != 0).filter_map(
        move |(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                Some(ny as usize * w + nx as usize)
            } else {
                None
            }
        },
    )
}

/// Binary pixel membership map (foreground = `true`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} mask samples for {width}x{height}", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y * width + x] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch("mask sizes differ".into()));
        }
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }

    /// `true` when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Intersection over union with another mask of the same size.
    pub fn iou(&self, other: &Mask) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}
