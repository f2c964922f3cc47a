//! Inverse compositional fitting of an [`Aam`] in project-out form.
//!
//! The iterated objective is `|| P (I(W(x; p)) - A0(x)) ||^2` over the
//! canonical raster, where `P` projects orthogonally to the appearance
//! basis. It is reported per pixel as `e_icaam`.
//!
//! Fitting runs coarse to fine: at each level the image and the canonical
//! templates are blurred with the same Gaussian.

use serde::{Deserialize, Serialize};

use crate::aam::{Aam, LandmarkSet};
use crate::error::{Error, Result};
use crate::imaging::{gaussian_blur, Mask, ThermalImage};
use crate::linalg::{orthonormalize, spd_inverse};
use crate::scalar::Real;
use crate::segmentation::{fit_face_ellipse, morphology::erode};

const BLUR_MARGIN: f64 = 2.0;
const MAX_CONDITION: f64 = 1e12;
const MAX_HALVINGS: usize = 8;
const MIN_OVERLAP: f64 = 0.5;
const MAX_INIT_ROTATION: f64 = 20.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Threshold on the norm of the accepted warp update.
    pub param_tol: f64,
    /// Threshold on the relative decrease of `e_icaam`.
    pub error_tol: f64,
    /// Halve rejected steps (up to 8 times) until the error decreases.
    pub damping: bool,
    /// Gaussian sigma (pixels) applied to the image and to the canonical
    /// templates at the finest level. 0 fits the raw enhanced image.
    pub smoothing: f64,
    /// Extra coarse levels run first, each doubling the sigma of the next.
    pub coarse_levels: usize,
    /// Width (pixels) of the band inside the canonical face boundary left out
    /// of the iterated error. Smoothed levels widen it by twice their sigma.
    pub boundary_margin: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            param_tol: 1e-3,
            error_tol: 1e-5,
            damping: true,
            smoothing: 0.0,
            coarse_levels: 1,
            boundary_margin: 3.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidParameter("max_iterations must be at least 1".into()));
        }
        if !(self.param_tol > 0.0) || !(self.error_tol > 0.0) {
            return Err(Error::InvalidParameter("fit tolerances must be positive".into()));
        }
        if !(self.smoothing >= 0.0) || !self.smoothing.is_finite() {
            return Err(Error::InvalidParameter("smoothing must be finite and non-negative".into()));
        }
        if !(self.boundary_margin >= 0.0) || !self.boundary_margin.is_finite() {
            return Err(Error::InvalidParameter("boundary_margin must be finite and non-negative".into()));
        }
        if self.coarse_levels > 6 {
            return Err(Error::InvalidParameter("at most 6 coarse levels".into()));
        }
        Ok(())
    }

    /// Smoothing sigma of every level, coarsest first.
    pub fn level_sigmas(&self) -> Vec<f64> {
        let base = if self.smoothing > 0.0 { self.smoothing } else { 1.0 };
        (1..=self.coarse_levels).rev().map(|l| base * (1u32 << l) as f64).chain(std::iter::once(self.smoothing)).collect()
    }
}

/// Model-only quantities of one smoothing level.
#[derive(Debug, Clone)]
pub struct Level {
    pub sigma: f64,
    /// Raster pixels entering the error; the vectors below follow this order.
    pub pixels: Vec<usize>,
    /// `A0` per pixel.
    pub mean: Vec<f64>,
    /// Orthonormal appearance basis.
    pub basis: Vec<Vec<f64>>,
    /// Gradient of `A0` per pixel.
    pub grad: Vec<[f64; 2]>,
    /// Steepest-descent images, projected orthogonal to the appearance basis.
    pub steepest_descent: Vec<Vec<f64>>,
    /// Gauss-Newton Hessian, row-major.
    pub hessian: Vec<f64>,
    pub hessian_inv: Vec<f64>,
}

/// Model-only quantities of the inverse compositional algorithm, one
/// [`Level`] per smoothing sigma, coarsest first.
#[derive(Debug, Clone)]
pub struct Precomputed {
    pub boundary_margin: f64,
    pub levels: Vec<Level>,
}

impl Precomputed {
    pub fn finest(&self) -> &Level {
        self.levels.last().expect("at least one level")
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.sigma).collect()
    }
}

/// Warp Jacobian `dW/dp_j` at `p = 0` for one raster pixel.
pub fn warp_jacobian<T: Real>(model: &Aam<T>, pixel: usize, j: usize) -> [f64; 2] {
    let px = &model.raster().pixels[pixel];
    let tri = &model.mesh.triangles[px.triangle];
    let dir = model.shape.param_direction(j);
    let mut out = [0.0; 2];
    for (w, &v) in px.bary.iter().zip(tri) {
        out[0] += w.as_f64() * dir[2 * v].as_f64();
        out[1] += w.as_f64() * dir[2 * v + 1].as_f64();
    }
    out
}

/// Unsmoothed precomputation over the whole raster.
pub fn precompute<T: Real>(model: &Aam<T>) -> Result<Precomputed> {
    precompute_levels(model, &[0.0], 0.0)
}

/// Precomputation for the levels of `cfg`.
pub fn precompute_for<T: Real>(model: &Aam<T>, cfg: &FitConfig) -> Result<Precomputed> {
    cfg.validate()?;
    precompute_levels(model, &cfg.level_sigmas(), cfg.boundary_margin)
}

/// Levels for `sigmas`. Each level leaves out a band of
/// `boundary_margin + 2 sigma` pixels inside the canonical face boundary.
pub fn precompute_levels<T: Real>(model: &Aam<T>, sigmas: &[f64], boundary_margin: f64) -> Result<Precomputed> {
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter("no fitting levels".into()));
    }
    let levels = sigmas
        .iter()
        .map(|&s| precompute_level(model, s, &interior_pixels(model, boundary_margin + BLUR_MARGIN * s)?))
        .collect::<Result<_>>()?;
    Ok(Precomputed { boundary_margin, levels })
}

/// Raster pixels at least `margin` pixels inside the canonical mask.
fn interior_pixels<T: Real>(model: &Aam<T>, margin: f64) -> Result<Vec<usize>> {
    let raster = model.raster();
    if margin <= 0.0 {
        return Ok((0..raster.len()).collect());
    }
    let inner = erode(&model.canonical_mask(), margin);
    let pixels: Vec<usize> = (0..raster.len()).filter(|&i| inner.get(raster.pixels[i].x, raster.pixels[i].y)).collect();
    if pixels.len() < model.shape.n_params() + model.appearance.n_modes() + 1 {
        return Err(Error::TooFewPixels {
            found: pixels.len(),
            required: model.shape.n_params() + model.appearance.n_modes() + 1,
        });
    }
    Ok(pixels)
}

fn smooth_canonical<T: Real>(v: &[f64], model: &Aam<T>, mask: &Mask, sigma: f64) -> Result<ThermalImage<f64>> {
    let raster = model.raster();
    let mut img = ThermalImage::<f64>::zeros(raster.width, raster.height);
    for (px, &x) in raster.pixels.iter().zip(v) {
        img.set(px.x, px.y, x);
    }
    let img = img.extend_from_mask(mask)?;
    if sigma > 0.0 {
        gaussian_blur(&img, sigma)
    } else {
        Ok(img)
    }
}

fn precompute_level<T: Real>(model: &Aam<T>, sigma: f64, pixels: &[usize]) -> Result<Level> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid level sigma {sigma}")));
    }
    let raster = model.raster();
    let mask = model.canonical_mask();
    let to_f64 = |v: &[T]| -> Vec<f64> { v.iter().map(|x| x.as_f64()).collect() };
    let a0 = smooth_canonical(&to_f64(&model.appearance.mean), model, &mask, sigma)?;
    let at = |img: &ThermalImage<f64>| -> Vec<f64> {
        pixels.iter().map(|&i| img.get(raster.pixels[i].x, raster.pixels[i].y)).collect()
    };
    let mean = at(&a0);
    let full = pixels.len() == raster.len();
    let mut basis: Vec<Vec<f64>> = model
        .appearance
        .basis
        .iter()
        .map(|b| {
            let b = to_f64(b);
            if sigma > 0.0 {
                Ok(at(&smooth_canonical(&b, model, &mask, sigma)?))
            } else if full {
                Ok(b)
            } else {
                Ok(pixels.iter().map(|&i| b[i]).collect())
            }
        })
        .collect::<Result<_>>()?;
    if sigma > 0.0 || !full {
        orthonormalize(&mut basis);
    }
    let grad: Vec<[f64; 2]> = pixels
        .iter()
        .map(|&i| {
            let px = &raster.pixels[i];
            let (x, y) = (px.x as isize, px.y as isize);
            [
                0.5 * (a0.get_clamped(x + 1, y) - a0.get_clamped(x - 1, y)),
                0.5 * (a0.get_clamped(x, y + 1) - a0.get_clamped(x, y - 1)),
            ]
        })
        .collect();
    let n = model.shape.n_params();
    let mut sd = Vec::with_capacity(n);
    for j in 0..n {
        let mut img: Vec<f64> = pixels
            .iter()
            .zip(&grad)
            .map(|(&i, g)| {
                let jac = warp_jacobian(model, i, j);
                g[0] * jac[0] + g[1] * jac[1]
            })
            .collect();
        project_out(&mut img, &basis);
        sd.push(img);
    }
    let mut hessian = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v: f64 = sd[a].iter().zip(&sd[b]).map(|(x, y)| x * y).sum();
            hessian[a * n + b] = v;
            hessian[b * n + a] = v;
        }
    }
    let hessian_inv = spd_inverse(&hessian, n, MAX_CONDITION)?;
    Ok(Level { sigma, pixels: pixels.to_vec(), mean, basis, grad, steepest_descent: sd, hessian, hessian_inv })
}

fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
}

/// Initial parameters: zero shape modes and the similarity mapping the
/// moment ellipse of the canonical mask onto that of `mask` (centre, area,
/// orientation clamped to +-20 degrees).
pub fn init_from_mask<T: Real>(mask: &Mask, model: &Aam<T>) -> Result<Vec<f64>> {
    let target = fit_face_ellipse(mask)?;
    let reference = fit_face_ellipse(&model.canonical_mask())?;
    let scale = ((target.a * target.b) / (reference.a * reference.b)).sqrt();
    let mut angle = target.theta - reference.theta;
    while angle > std::f64::consts::FRAC_PI_2 {
        angle -= std::f64::consts::PI;
    }
    while angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    let angle = angle.clamp(-MAX_INIT_ROTATION, MAX_INIT_ROTATION);
    let c = model.shape.centroid();
    let (cs, sn) = (scale * angle.cos(), scale * angle.sin());
    let (dx, dy) = (reference.cx - c[0], reference.cy - c[1]);
    let t = [target.cx - c[0] - (cs * dx - sn * dy), target.cy - c[1] - (sn * dx + cs * dy)];
    let mut p = vec![0.0; model.shape.n_modes()];
    p.extend(model.shape.similarity_params(scale, angle, t));
    Ok(p)
}

/// `W(x; p) <- W(x; p) o W(x; dp)^-1`, evaluated on the mesh vertices and
/// re-projected onto the parameters. Each vertex of `W(s0; -dp)` is mapped
/// through the current warp with the mean of the affine maps of its incident
/// triangles.
pub fn compose_inverse_warp<T: Real>(p: &[f64], dp: &[f64], model: &Aam<T>) -> Result<Vec<f64>> {
    let n = model.shape.n_params();
    if p.len() != n || dp.len() != n {
        return Err(Error::DimensionMismatch(format!("{} and {} parameters for a model with {n}", p.len(), dp.len())));
    }
    let s0: Vec<[f64; 2]> = model.shape.mean.points.iter().map(|q| [q[0].as_f64(), q[1].as_f64()]).collect();
    let cur = model.shape.instance_f64(p)?;
    let neg: Vec<f64> = dp.iter().map(|v| -v).collect();
    let inv = model.shape.instance_f64(&neg)?;
    let maps: Vec<[f64; 4]> = model.mesh.triangles.iter().map(|t| affine_linear(&s0, &cur, t)).collect::<Result<_>>()?;
    let incident = model.mesh.vertex_triangles(s0.len());
    let mut out = Vec::with_capacity(s0.len());
    for i in 0..s0.len() {
        let mut m = [0.0; 4];
        for &k in &incident[i] {
            m.iter_mut().zip(&maps[k]).for_each(|(a, b)| *a += b);
        }
        let cnt = incident[i].len() as f64;
        m.iter_mut().for_each(|a| *a /= cnt);
        let (dx, dy) = (inv[i][0] - s0[i][0], inv[i][1] - s0[i][1]);
        out.push([cur[i][0] + m[0] * dx + m[1] * dy, cur[i][1] + m[2] * dx + m[3] * dy]);
    }
    model.shape.project_points(&out)
}

/// Linear part `[m00, m01, m10, m11]` of the affine map taking triangle `t`
/// of `from` onto the same triangle of `to`.
fn affine_linear(from: &[[f64; 2]], to: &[[f64; 2]], t: &[usize; 3]) -> Result<[f64; 4]> {
    let e = |s: &[[f64; 2]], i: usize| [s[t[i]][0] - s[t[0]][0], s[t[i]][1] - s[t[0]][1]];
    let (u1, u2) = (e(from, 1), e(from, 2));
    let (v1, v2) = (e(to, 1), e(to, 2));
    let det = u1[0] * u2[1] - u2[0] * u1[1];
    if det.abs() < 1e-12 {
        return Err(Error::DegenerateShape);
    }
    // [v1 v2] [u1 u2]^-1
    let inv = [u2[1] / det, -u2[0] / det, -u1[1] / det, u1[0] / det];
    Ok([
        v1[0] * inv[0] + v2[0] * inv[2],
        v1[0] * inv[1] + v2[0] * inv[3],
        v1[1] * inv[0] + v2[1] * inv[2],
        v1[1] * inv[1] + v2[1] * inv[3],
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub landmarks: LandmarkSet<T>,
    pub params: Vec<f64>,
    /// Appearance coefficients of the final unsmoothed error image.
    pub alpha: Vec<f64>,
    /// Project-out residual of the final parameters on the unsmoothed image.
    pub e_icaam: f64,
    /// Iterations summed over all levels.
    pub iterations: usize,
    pub converged: bool,
    /// Error of the initial and every accepted iterate of the finest level.
    pub history: Vec<f64>,
    /// Fraction of canonical pixels sampled inside the image at the end.
    pub overlap: f64,
}

struct Eval {
    error: Vec<f64>,
    e: f64,
    overlap: f64,
}

fn evaluate<T: Real>(
    img: &ThermalImage<T>,
    p: &[f64],
    model: &Aam<T>,
    pixels: &[usize],
    mean: &[f64],
    basis: &[Vec<f64>],
) -> Result<Eval> {
    let shape = model.shape.instance_f64(p)?;
    let raster = model.raster();
    let mut inside = 0usize;
    let mut error = Vec::with_capacity(pixels.len());
    for (&i, a0) in pixels.iter().zip(mean) {
        let px = &raster.pixels[i];
        let t = &model.mesh.triangles[px.triangle];
        let mut q = [0.0; 2];
        for (w, &v) in px.bary.iter().zip(t) {
            q[0] += w.as_f64() * shape[v][0];
            q[1] += w.as_f64() * shape[v][1];
        }
        match img.sample_bilinear(T::lit(q[0]), T::lit(q[1])) {
            Some(v) => {
                inside += 1;
                error.push(v.as_f64() - a0);
            }
            None => error.push(0.0),
        }
    }
    let mut projected = error.clone();
    project_out(&mut projected, basis);
    let e = projected.iter().map(|v| v * v).sum::<f64>() / pixels.len() as f64;
    if !e.is_finite() {
        return Err(Error::NonFinite("fit error image".into()));
    }
    Ok(Eval { error, e, overlap: inside as f64 / pixels.len() as f64 })
}

struct LevelRun {
    p: Vec<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
    overlap: f64,
}

fn run_level<T: Real>(
    img: &ThermalImage<T>,
    mut p: Vec<f64>,
    model: &Aam<T>,
    level: &Level,
    cfg: &FitConfig,
    budget: usize,
) -> Result<LevelRun> {
    let n = model.shape.n_params();
    let eval = |p: &[f64]| evaluate(img, p, model, &level.pixels, &level.mean, &level.basis);
    let mut cur = eval(&p)?;
    let mut history = vec![cur.e];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < budget && cur.overlap >= MIN_OVERLAP {
        iterations += 1;
        let g: Vec<f64> = level.steepest_descent.iter().map(|sd| sd.iter().zip(&cur.error).map(|(a, b)| a * b).sum()).collect();
        let dp: Vec<f64> = (0..n).map(|r| (0..n).map(|c| level.hessian_inv[r * n + c] * g[c]).sum()).collect();
        let norm = dp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < cfg.param_tol {
            let cand = compose_inverse_warp(&p, &dp, model)?;
            let next = eval(&cand)?;
            if next.e <= cur.e {
                p = cand;
                cur = next;
                history.push(cur.e);
            }
            converged = true;
            break;
        }
        let attempts = if cfg.damping { MAX_HALVINGS + 1 } else { 1 };
        let mut step = 1.0;
        let mut accepted = None;
        let mut last_move = f64::INFINITY;
        let mut plateau = false;
        for _ in 0..attempts {
            let scaled: Vec<f64> = dp.iter().map(|v| v * step).collect();
            let cand = compose_inverse_warp(&p, &scaled, model)?;
            let next = eval(&cand)?;
            if !cfg.damping || next.e < cur.e {
                accepted = Some((cand, next, step * norm));
                break;
            }
            last_move = step * norm;
            plateau |= next.e == cur.e;
            step *= 0.5;
        }
        let Some((cand, next, moved)) = accepted else {
            // No step along the update lowers the error. Every step raising
            // it marks a minimum along the update; an unchanged error marks a
            // plateau with nothing to fit against.
            converged = last_move < cfg.param_tol || !plateau;
            log::debug!("fit stalled after {iterations} iterations at e = {:.3e}", cur.e);
            break;
        };
        let rel = if cur.e > 0.0 { (cur.e - next.e) / cur.e } else { 0.0 };
        p = cand;
        cur = next;
        history.push(cur.e);
        if cur.overlap < MIN_OVERLAP {
            break;
        }
        if moved < cfg.param_tol || (rel >= 0.0 && rel < cfg.error_tol) {
            converged = true;
            break;
        }
    }
    Ok(LevelRun { p, iterations, converged: converged && cur.overlap >= MIN_OVERLAP, history, overlap: cur.overlap })
}

/// Fits `model` to the enhanced image `img` from `init`, level by level.
/// `pre` must hold the levels of `cfg` (see [`precompute_for`]).
pub fn fit<T: Real>(
    img: &ThermalImage<T>,
    init: &[f64],
    model: &Aam<T>,
    pre: &Precomputed,
    cfg: &FitConfig,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    let n = model.shape.n_params();
    if init.len() != n {
        return Err(Error::DimensionMismatch(format!("{} initial parameters for a model with {n}", init.len())));
    }
    if pre.sigmas() != cfg.level_sigmas() || pre.boundary_margin != cfg.boundary_margin {
        return Err(Error::InvalidParameter(format!(
            "precomputed levels {:?} (margin {}) do not match the fit configuration {:?} (margin {})",
            pre.sigmas(),
            pre.boundary_margin,
            cfg.level_sigmas(),
            cfg.boundary_margin
        )));
    }
    let all: Vec<usize> = (0..model.raster().len()).collect();
    let mean: Vec<f64> = model.appearance.mean.iter().map(|v| v.as_f64()).collect();
    let basis: Vec<Vec<f64>> = model.appearance.basis.iter().map(|b| b.iter().map(|v| v.as_f64()).collect()).collect();
    if evaluate(img, init, model, &all, &mean, &basis)?.overlap == 0.0 {
        return Err(Error::NoOverlap);
    }

    let mut p = init.to_vec();
    let mut iterations = 0;
    let mut last = None;
    for level in &pre.levels {
        let smoothed;
        let target = if level.sigma > 0.0 {
            smoothed = gaussian_blur(img, level.sigma)?;
            &smoothed
        } else {
            img
        };
        let run = run_level(target, p, model, level, cfg, cfg.max_iterations - iterations)?;
        iterations += run.iterations;
        p = run.p.clone();
        let stop = run.overlap < MIN_OVERLAP || iterations >= cfg.max_iterations;
        last = Some(run);
        if stop {
            break;
        }
    }
    let last = last.expect("at least one level");
    let fin = evaluate(img, &p, model, &all, &mean, &basis)?;
    let alpha = basis.iter().map(|b| b.iter().zip(&fin.error).map(|(x, y)| x * y).sum()).collect();
    Ok(FitResult {
        landmarks: model.shape.instance(&p)?,
        params: p,
        alpha,
        e_icaam: fin.e,
        iterations,
        converged: last.converged && fin.overlap >= MIN_OVERLAP,
        history: last.history,
        overlap: fin.overlap,
    })
}
