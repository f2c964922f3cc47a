//! Triangle meshes over landmark sets and their pixel rasterization.

use serde::{Deserialize, Serialize};
use spade::{DelaunayTriangulation, Point2, Triangulation};

use super::landmarks::LandmarkSet;
use crate::error::{Error, Result};
use crate::imaging::Mask;
use crate::scalar::Real;

/// Triangles as index triples into the landmark ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangulatedMesh {
    pub triangles: Vec<[usize; 3]>,
}

const AREA_EPS: f64 = 1e-9;

impl TriangulatedMesh {
    /// Delaunay triangulation of `shape`, with every triangle oriented to
    /// positive signed area in pixel coordinates.
    pub fn delaunay<T: Real>(shape: &LandmarkSet<T>) -> Result<Self> {
        let mut tri: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::new();
        for (i, p) in shape.points.iter().enumerate() {
            let handle = tri
                .insert(Point2::new(p[0].as_f64(), p[1].as_f64()))
                .map_err(|e| Error::InvalidParameter(format!("landmark {i}: {e:?}")))?;
            if handle.index() != i {
                return Err(Error::InvalidParameter(format!("landmark {i} duplicates landmark {}", handle.index())));
            }
        }
        let mut triangles: Vec<[usize; 3]> = tri
            .inner_faces()
            .map(|f| {
                let v = f.vertices();
                [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()]
            })
            .collect();
        for t in &mut triangles {
            if signed_area(shape, t) < 0.0 {
                t.swap(1, 2);
            }
        }
        triangles.sort_unstable();
        let mesh = Self { triangles };
        mesh.validate(shape)?;
        Ok(mesh)
    }

    /// Checks index validity, vertex coverage and non-degeneracy on `shape`.
    pub fn validate<T: Real>(&self, shape: &LandmarkSet<T>) -> Result<()> {
        let n = shape.len();
        let mut used = vec![false; n];
        for (k, t) in self.triangles.iter().enumerate() {
            for &i in t {
                if i >= n {
                    return Err(Error::InvalidParameter(format!("triangle {k} references landmark {i} of {n}")));
                }
                used[i] = true;
            }
            if signed_area(shape, t).abs() <= AREA_EPS {
                return Err(Error::DegenerateTriangle(k));
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::InvalidParameter(format!("landmark {i} belongs to no triangle")));
        }
        Ok(())
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self, n_points: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); n_points];
        for (k, t) in self.triangles.iter().enumerate() {
            for &i in t {
                out[i].push(k);
            }
        }
        out
    }

    /// Containing triangle and barycentric weights of `p`, first match wins.
    pub fn locate<T: Real>(&self, shape: &LandmarkSet<T>, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        self.triangles.iter().enumerate().find_map(|(k, t)| {
            let w = barycentric(shape, t, p)?;
            (w.iter().all(|&c| c >= -1e-9)).then_some((k, w))
        })
    }
}

pub(crate) fn vertex<T: Real>(shape: &LandmarkSet<T>, i: usize) -> [f64; 2] {
    let p = shape.points[i];
    [p[0].as_f64(), p[1].as_f64()]
}

pub(crate) fn signed_area<T: Real>(shape: &LandmarkSet<T>, t: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertex(shape, t[0]), vertex(shape, t[1]), vertex(shape, t[2]));
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Barycentric weights of `p` in triangle `t`; `None` when degenerate.
pub(crate) fn barycentric<T: Real>(shape: &LandmarkSet<T>, t: &[usize; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let (a, b, c) = (vertex(shape, t[0]), vertex(shape, t[1]), vertex(shape, t[2]));
    let (v0, v1, v2) = ([b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]], [p[0] - a[0], p[1] - a[1]]);
    let d = v0[0] * v1[1] - v1[0] * v0[1];
    if d.abs() <= 2.0 * AREA_EPS {
        return None;
    }
    let beta = (v2[0] * v1[1] - v1[0] * v2[1]) / d;
    let gamma = (v0[0] * v2[1] - v2[0] * v0[1]) / d;
    Some([1.0 - beta - gamma, beta, gamma])
}

/// One mesh-interior pixel with its triangle and barycentric weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterPixel<T> {
    pub x: usize,
    pub y: usize,
    pub triangle: usize,
    pub bary: [T; 3],
}

/// Pixels of a `width x height` frame covered by a mesh placed at `vertices`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshRaster<T> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<RasterPixel<T>>,
}

impl<T: Real> MeshRaster<T> {
    pub fn new(mesh: &TriangulatedMesh, vertices: &LandmarkSet<T>, width: usize, height: usize) -> Result<Self> {
        let mut owner: Vec<Option<(usize, [f64; 3])>> = vec![None; width * height];
        for (k, t) in mesh.triangles.iter().enumerate() {
            if signed_area(vertices, t).abs() <= AREA_EPS {
                return Err(Error::DegenerateTriangle(k));
            }
            let pts = [vertex(vertices, t[0]), vertex(vertices, t[1]), vertex(vertices, t[2])];
            let xmin = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
            let ymin = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
            let xmax = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil();
            let ymax = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil();
            if xmax < 0.0 || ymax < 0.0 {
                continue;
            }
            let xmax = (xmax as usize).min(width.saturating_sub(1));
            let ymax = (ymax as usize).min(height.saturating_sub(1));
            for y in ymin..=ymax {
                for x in xmin..=xmax {
                    let slot = &mut owner[y * width + x];
                    if slot.is_some() {
                        continue;
                    }
                    if let Some(w) = barycentric(vertices, t, [x as f64, y as f64]) {
                        if w.iter().all(|&c| c >= -1e-9) {
                            *slot = Some((k, w));
                        }
                    }
                }
            }
        }
        let pixels = owner
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                o.map(|(k, w)| RasterPixel {
                    x: i % width,
                    y: i / width,
                    triangle: k,
                    bary: [T::lit(w[0]), T::lit(w[1]), T::lit(w[2])],
                })
            })
            .collect();
        Ok(Self { width, height, pixels })
    }

    pub fn mask(&self) -> Mask {
        let mut m = Mask::empty(self.width, self.height);
        for p in &self.pixels {
            m.set(p.x, p.y, true);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}
