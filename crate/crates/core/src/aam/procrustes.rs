//! Generalized Procrustes alignment.

use super::landmarks::LandmarkSet;
use crate::error::{Error, Result};
use crate::scalar::Real;

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

type Pts = Vec<[f64; 2]>;

fn to_f64<T: Real>(s: &LandmarkSet<T>) -> Pts {
    s.points.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect()
}

fn from_f64<T: Real>(p: &Pts) -> LandmarkSet<T> {
    LandmarkSet::new(p.iter().map(|q| [T::lit(q[0]), T::lit(q[1])]).collect())
}

/// Centres and scales to unit RMS distance from the centroid.
fn normalize(p: &mut Pts) -> Result<()> {
    let n = p.len() as f64;
    let cx = p.iter().map(|q| q[0]).sum::<f64>() / n;
    let cy = p.iter().map(|q| q[1]).sum::<f64>() / n;
    let rms = (p.iter().map(|q| (q[0] - cx).powi(2) + (q[1] - cy).powi(2)).sum::<f64>() / n).sqrt();
    if !(rms > 1e-12) || !rms.is_finite() {
        return Err(Error::DegenerateShape);
    }
    for q in p.iter_mut() {
        *q = [(q[0] - cx) / rms, (q[1] - cy) / rms];
    }
    Ok(())
}

/// Rotates the centred `p` to best match the centred `target` in least squares.
fn rotate_onto(p: &mut Pts, target: &Pts) {
    let (mut sdot, mut scross) = (0.0, 0.0);
    for (a, b) in p.iter().zip(target) {
        sdot += a[0] * b[0] + a[1] * b[1];
        scross += a[0] * b[1] - a[1] * b[0];
    }
    let theta = scross.atan2(sdot);
    let (c, s) = (theta.cos(), theta.sin());
    for q in p.iter_mut() {
        *q = [c * q[0] - s * q[1], s * q[0] + c * q[1]];
    }
}

fn rms_between(a: &Pts, b: &Pts) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Removes translation, scale and rotation from every shape. Returns the
/// aligned shapes (centred, unit RMS size) and their mean, whose orientation
/// is pinned to the first input shape.
pub fn procrustes_align<T: Real>(shapes: &[LandmarkSet<T>]) -> Result<(Vec<LandmarkSet<T>>, LandmarkSet<T>)> {
    if shapes.len() < 2 {
        return Err(Error::InvalidParameter("procrustes alignment needs at least 2 shapes".into()));
    }
    let l = shapes[0].len();
    if l < 3 {
        return Err(Error::InvalidParameter("at least 3 landmarks required".into()));
    }
    if shapes.iter().any(|s| s.len() != l) {
        return Err(Error::DimensionMismatch("shapes have different landmark counts".into()));
    }
    let mut aligned: Vec<Pts> = shapes.iter().map(to_f64).collect();
    for p in &mut aligned {
        normalize(p)?;
    }
    let reference = aligned[0].clone();
    let mut mean = reference.clone();
    for _ in 0..MAX_ITERATIONS {
        for p in &mut aligned {
            rotate_onto(p, &mean);
        }
        let mut next: Pts = vec![[0.0; 2]; l];
        for p in &aligned {
            for (m, q) in next.iter_mut().zip(p) {
                m[0] += q[0];
                m[1] += q[1];
            }
        }
        let n = aligned.len() as f64;
        next.iter_mut().for_each(|m| *m = [m[0] / n, m[1] / n]);
        normalize(&mut next)?;
        rotate_onto(&mut next, &reference);
        let moved = rms_between(&next, &mean);
        mean = next;
        if moved < TOLERANCE {
            break;
        }
    }
    for p in &mut aligned {
        rotate_onto(p, &mean);
    }
    Ok((aligned.iter().map(from_f64).collect(), from_f64(&mean)))
}
