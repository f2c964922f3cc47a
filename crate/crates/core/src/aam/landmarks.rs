//! Landmark sets, the point-definition file and mirror augmentation.
//!
//! Landmark file:
//! ```text
//! L 3
//! 10.5 20.0
//! 30.0 20.0
//! 20.0 40.25
//! ```
//!
//! Point-definition file (one point per line, in landmark order; `#` starts a
//! comment): `<name> <mirror-index>`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Ordered landmark coordinates in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LandmarkSet<T> {
    pub points: Vec<[T; 2]>,
    /// Free-form subject/pose annotation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<String>,
}

impl<T: Real> LandmarkSet<T> {
    pub fn new(points: Vec<[T; 2]>) -> Self {
        Self { points, meta: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Flattened `[x0, y0, x1, y1, ...]`.
    pub fn to_vector(&self) -> Vec<T> {
        self.points.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    pub fn from_vector(v: &[T]) -> Self {
        Self::new(v.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn centroid(&self) -> [T; 2] {
        let n = T::from_usize_lossy(self.points.len());
        let (sx, sy) = self.points.iter().fold((T::zero(), T::zero()), |(a, b), p| (a + p[0], b + p[1]));
        [sx / n, sy / n]
    }

    /// Root mean square distance to another set of the same length.
    pub fn rms_distance(&self, other: &Self) -> T {
        let n = T::from_usize_lossy(self.points.len());
        let ss: T = self.points.iter().zip(&other.points).map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sum();
        (ss / n).sqrt()
    }

    pub fn map(&self, f: impl Fn([T; 2]) -> [T; 2]) -> Self {
        Self { points: self.points.iter().map(|&p| f(p)).collect(), meta: self.meta.clone() }
    }

    pub fn cast<U: Real>(&self) -> LandmarkSet<U> {
        LandmarkSet {
            points: self.points.iter().map(|p| [U::lit(p[0].as_f64()), U::lit(p[1].as_f64())]).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("L {}\n", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:?} {:?}", p[0].as_f64(), p[1].as_f64());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("empty landmark file".into()))?;
        let count: usize = header
            .strip_prefix('L')
            .map(str::trim)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::Format(format!("landmark header must be `L <count>`, got {header:?}")))?;
        let mut points = Vec::with_capacity(count);
        for line in lines.by_ref().take(count) {
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y))) if x.is_finite() && y.is_finite() => points.push([T::lit(x), T::lit(y)]),
                _ => return Err(Error::Format(format!("bad landmark line {line:?}"))),
            }
        }
        if points.len() != count {
            return Err(Error::Format(format!("expected {count} landmarks, found {}", points.len())));
        }
        Ok(Self::new(points))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Named landmark layout shared by every shape of one corpus, with the
/// left/right mirror permutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointDefinition {
    pub names: Vec<String>,
    pub mirror: Vec<usize>,
}

impl PointDefinition {
    pub fn new(names: Vec<String>, mirror: Vec<usize>) -> Result<Self> {
        if names.len() != mirror.len() {
            return Err(Error::DimensionMismatch("point names vs mirror map".into()));
        }
        if names.len() < 3 {
            return Err(Error::InvalidParameter("at least 3 landmarks required".into()));
        }
        check_involution(&mirror)?;
        Ok(Self { names, mirror })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut mirror = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(name), Some(m)) = (it.next(), it.next()) else {
                return Err(Error::Format(format!("point definition line {line:?} needs `<name> <mirror-index>`")));
            };
            names.push(name.to_string());
            mirror.push(m.parse().map_err(|_| Error::Format(format!("bad mirror index {m:?}")))?);
        }
        Self::new(names, mirror)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# name mirror-index\n");
        for (n, m) in self.names.iter().zip(&self.mirror) {
            let _ = writeln!(s, "{n} {m}");
        }
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn check_involution(map: &[usize]) -> Result<()> {
    for (i, &j) in map.iter().enumerate() {
        if j >= map.len() || map[j] != i {
            return Err(Error::NonInvolutive);
        }
    }
    Ok(())
}

/// Reflects one shape about the vertical line through its centroid and
/// re-indexes the points with `symmetry_map`.
pub fn mirror_shape<T: Real>(shape: &LandmarkSet<T>, symmetry_map: &[usize]) -> Result<LandmarkSet<T>> {
    if symmetry_map.len() != shape.len() {
        return Err(Error::DimensionMismatch("symmetry map length".into()));
    }
    check_involution(symmetry_map)?;
    let cx = shape.centroid()[0];
    let two_cx = cx + cx;
    let points = symmetry_map
        .iter()
        .map(|&src| {
            let p = shape.points[src];
            [two_cx - p[0], p[1]]
        })
        .collect();
    Ok(LandmarkSet { points, meta: shape.meta.as_ref().map(|m| format!("{m} (mirrored)")) })
}

/// Every input shape followed by its mirrored copy (`2 n` shapes).
pub fn mirror_augment<T: Real>(shapes: &[LandmarkSet<T>], symmetry_map: &[usize]) -> Result<Vec<LandmarkSet<T>>> {
    let mut out = shapes.to_vec();
    for s in shapes {
        out.push(mirror_shape(s, symmetry_map)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> LandmarkSet<f64> {
        LandmarkSet::new(vec![[0.0, 0.0], [4.0, 0.0], [1.0, 3.0]])
    }

    #[test]
    fn text_round_trip() {
        let s = LandmarkSet::new(vec![[0.1f64, 2.5], [3.0, -4.125], [1e-3, 7.0]]);
        assert_eq!(LandmarkSet::<f64>::parse(&s.to_text()).unwrap(), s);
        assert!(LandmarkSet::<f64>::parse("L 2\n1 2\n").is_err());
        assert!(LandmarkSet::<f64>::parse("3\n1 2\n").is_err());
    }

    #[test]
    fn point_definitions() {
        let pd = PointDefinition::parse("left 1\nright 0 # pair\nnose 2\n").unwrap();
        assert_eq!(pd.mirror, vec![1, 0, 2]);
        assert_eq!(PointDefinition::parse(&pd.to_text()).unwrap(), pd);
        assert!(matches!(PointDefinition::parse("a 1\nb 2\nc 0\n"), Err(Error::NonInvolutive)));
    }

    #[test]
    fn mirror_twice_is_identity() {
        let map = [0, 1, 2];
        let s = tri();
        let twice = mirror_shape(&mirror_shape(&s, &map).unwrap(), &map).unwrap();
        assert_eq!(twice.points, s.points);
        assert!(matches!(mirror_shape(&s, &[1, 2, 0]), Err(Error::NonInvolutive)));
    }

    #[test]
    fn symmetric_shape_is_mirror_fixed() {
        let s = LandmarkSet::new(vec![[-2.0f64, 0.0], [2.0, 0.0], [0.0, 3.0], [-1.0, 5.0], [1.0, 5.0]]);
        let m = mirror_shape(&s, &[1, 0, 2, 4, 3]).unwrap();
        for (a, b) in m.points.iter().zip(&s.points) {
            assert!((a[0] - b[0]).abs() < 1e-9 && (a[1] - b[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn augment_doubles() {
        let shapes: Vec<_> = (0..90).map(|i| tri().map(|p| [p[0] + i as f64, p[1]])).collect();
        let out = mirror_augment(&shapes, &[0, 1, 2]).unwrap();
        assert_eq!(out.len(), 180);
    }
}
