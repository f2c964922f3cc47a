//! Piecewise affine warps between two placements of one mesh.

use super::landmarks::LandmarkSet;
use super::mesh::{MeshRaster, TriangulatedMesh};
use crate::error::Result;
use crate::imaging::{Mask, ThermalImage};
use crate::scalar::Real;

/// Bilinear sample with the coordinates clamped into the pixel grid.
pub(crate) fn sample_clamped<T: Real>(img: &ThermalImage<T>, x: T, y: T) -> T {
    let xm = T::from_usize_lossy(img.width() - 1);
    let ym = T::from_usize_lossy(img.height() - 1);
    let xc = x.max(T::zero()).min(xm);
    let yc = y.max(T::zero()).min(ym);
    img.sample_bilinear(xc, yc).unwrap_or_else(T::zero)
}

/// Source location of each raster pixel under the barycentric map onto `src`.
pub(crate) fn source_point<T: Real>(src: &LandmarkSet<T>, tri: &[usize; 3], bary: &[T; 3]) -> [T; 2] {
    let (a, b, c) = (src.points[tri[0]], src.points[tri[1]], src.points[tri[2]]);
    [bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0], bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1]]
}

/// Warps `img` so that the mesh placed at `src` lands on the mesh placed at
/// `dst`, producing a `width x height` image. Pixels outside the `dst` mesh
/// are 0; source samples falling off the image replicate its border.
pub fn piecewise_affine_warp<T: Real>(
    img: &ThermalImage<T>,
    src: &LandmarkSet<T>,
    dst: &LandmarkSet<T>,
    mesh: &TriangulatedMesh,
    width: usize,
    height: usize,
) -> Result<ThermalImage<T>> {
    Ok(piecewise_affine_warp_with_support(img, src, dst, mesh, width, height)?.0)
}

/// As [`piecewise_affine_warp`], also returning the pixels whose source
/// location lies inside the input image.
pub fn piecewise_affine_warp_with_support<T: Real>(
    img: &ThermalImage<T>,
    src: &LandmarkSet<T>,
    dst: &LandmarkSet<T>,
    mesh: &TriangulatedMesh,
    width: usize,
    height: usize,
) -> Result<(ThermalImage<T>, Mask)> {
    let raster = MeshRaster::new(mesh, dst, width, height)?;
    Ok(warp_raster(img, src, mesh, &raster))
}

pub(crate) fn warp_raster<T: Real>(
    img: &ThermalImage<T>,
    src: &LandmarkSet<T>,
    mesh: &TriangulatedMesh,
    raster: &MeshRaster<T>,
) -> (ThermalImage<T>, Mask) {
    let mut out = ThermalImage::zeros(raster.width, raster.height).with_units(img.units());
    let mut support = Mask::empty(raster.width, raster.height);
    for px in &raster.pixels {
        let [x, y] = source_point(src, &mesh.triangles[px.triangle], &px.bary);
        let v = match img.sample_bilinear(x, y) {
            Some(v) => {
                support.set(px.x, px.y, true);
                v
            }
            None => sample_clamped(img, x, y),
        };
        out.set(px.x, px.y, v);
    }
    (out, support)
}
