//! Seeded synthetic thermal faces and the closed-set evaluation harness.
//!
//! Faces are drawn in a template plane (origin at the face centre, y down,
//! roughly 100 x 128 px) with 26 landmarks: 14 contour points, eye corners,
//! nose bridge, nose tip, nostrils and four mouth points. A rendering maps
//! every output pixel inside the landmark mesh back to the template through
//! the piecewise affine warp and evaluates the subject's appearance there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aam::{
    image_to_raster, raster_to_image, train_aam, warp::warp_raster, Aam, AamTrainConfig, LandmarkSet, MeshRaster,
    PointDefinition, TriangulatedMesh,
};
use crate::enhancement::enhance_detail;
use crate::error::{Error, Result};
use crate::fit::{fit, precompute_for, FitConfig};
use crate::imaging::{gaussian_blur, ThermalImage};
use crate::pipeline::{run_pipeline, PipelineConfig};
use crate::recognition::{cmc_from_results, identify, ncc_values, Gallery, MatchResult, Signature};
use crate::scalar::Real;
use crate::segmentation::morphology::erode;
use crate::segmentation::segment_face;
use crate::vesselness::extract_signature;

const CONTOUR_POINTS: usize = 14;
/// Intensity of 1 unit on the 0–255 scale in normalized image units.
const UNIT: f64 = 1.0 / 255.0;

/// Template landmarks and their point definition.
pub fn face_template() -> (LandmarkSet<f64>, PointDefinition) {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(26);
    let mut names: Vec<String> = Vec::with_capacity(26);
    let mut mirror: Vec<usize> = Vec::with_capacity(26);
    for k in 0..CONTOUR_POINTS {
        let phi = 2.0 * std::f64::consts::PI * k as f64 / CONTOUR_POINTS as f64;
        let rx = 47.0 + 3.0 * phi.cos();
        pts.push([rx * phi.sin(), -64.0 * phi.cos()]);
        names.push(format!("contour_{k}"));
        mirror.push((CONTOUR_POINTS - k) % CONTOUR_POINTS);
    }
    let features: [(&str, f64, f64); 8] = [
        ("eye_outer", 32.0, -12.0),
        ("eye_inner", 12.0, -12.0),
        ("nose_bridge", 0.0, -10.0),
        ("nose_tip", 0.0, 12.0),
        ("nostril", 10.0, 18.0),
        ("mouth_corner", 18.0, 36.0),
        ("mouth_top", 0.0, 31.0),
        ("mouth_bottom", 0.0, 42.0),
    ];
    for &(name, x, y) in &features {
        let i = pts.len();
        if x == 0.0 {
            pts.push([0.0, y]);
            names.push(name.to_string());
            mirror.push(i);
        } else {
            pts.extend([[-x, y], [x, y]]);
            names.extend([format!("{name}_left"), format!("{name}_right")]);
            mirror.extend([i + 1, i]);
        }
    }
    let pd = PointDefinition::new(names, mirror).expect("template point definition is an involution");
    (LandmarkSet::new(pts), pd)
}

/// Symmetric smooth deformation fields of the template, one displacement per
/// landmark with unit maximum magnitude.
fn deformation_modes(template: &LandmarkSet<f64>) -> Vec<Vec<[f64; 2]>> {
    let n = template.len();
    let feature = |i: usize| i >= CONTOUR_POINTS;
    let mut modes = Vec::new();
    // Face width, face height, jaw width.
    modes.push(template.points.iter().map(|p| [p[0] / 50.0, 0.0]).collect());
    modes.push(template.points.iter().map(|p| [0.0, p[1] / 64.0]).collect());
    modes.push(template.points.iter().map(|p| [p[0] / 50.0 * (p[1] / 64.0).max(0.0), 0.0]).collect());
    // Eye separation, eye height.
    modes.push((0..n).map(|i| if (14..18).contains(&i) { [template.points[i][0].signum(), 0.0] } else { [0.0; 2] }).collect());
    modes.push((0..n).map(|i| if (14..19).contains(&i) { [0.0, 1.0] } else { [0.0; 2] }).collect());
    // Nose length, mouth width and height.
    modes.push((0..n).map(|i| if (19..22).contains(&i) { [0.0, 1.0] } else { [0.0; 2] }).collect());
    modes.push((0..n).map(|i| if feature(i) && i >= 22 { [template.points[i][0] / 18.0, 0.5] } else { [0.0; 2] }).collect());
    modes
}

/// Seeded vessel-tree appearance parameters of one synthetic subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VesselTreeParams {
    pub branches: usize,
    /// Gaussian ridge width range (sigma, template pixels).
    pub width: (f64, f64),
    /// Ridge contrast range on the 0–255 scale.
    pub contrast: (f64, f64),
}

impl Default for VesselTreeParams {
    fn default() -> Self {
        Self { branches: 5, width: (1.6, 2.6), contrast: (3.0, 8.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSubjectSpec {
    pub seed: u64,
    pub vessels: VesselTreeParams,
}

impl SyntheticSubjectSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, vessels: VesselTreeParams::default() }
    }
}

/// Pose of one rendering: shape coefficients of the model plus a similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub shape: Vec<f64>,
    pub scale: f64,
    /// Radians.
    pub rotation: f64,
    /// Offset of the face centre from the image centre, pixels.
    pub translation: [f64; 2],
}

impl Pose {
    pub fn frontal(n_modes: usize) -> Self {
        Self { shape: vec![0.0; n_modes], scale: 1.0, rotation: 0.0, translation: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub background: f64,
    /// Sensor noise standard deviation on the 0–255 scale.
    pub noise: f64,
    /// Optical blur applied before noise.
    pub psf_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { width: 200, height: 240, background: 0.15, noise: 0.5, psf_sigma: 0.7 }
    }
}

#[derive(Debug, Clone)]
struct Segment {
    a: [f64; 2],
    b: [f64; 2],
    sigma: f64,
    contrast: f64,
}

impl Segment {
    fn value(&self, p: [f64; 2]) -> f64 {
        let (dx, dy) = (self.b[0] - self.a[0], self.b[1] - self.a[1]);
        let len2 = dx * dx + dy * dy;
        let t = (((p[0] - self.a[0]) * dx + (p[1] - self.a[1]) * dy) / len2).clamp(0.0, 1.0);
        let (ex, ey) = (p[0] - self.a[0] - t * dx, p[1] - self.a[1] - t * dy);
        let d2 = ex * ex + ey * ey;
        if d2 > 16.0 * self.sigma * self.sigma {
            return 0.0;
        }
        self.contrast * (-d2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

fn in_face(p: [f64; 2]) -> bool {
    (p[0] / 42.0).powi(2) + (p[1] / 56.0).powi(2) < 1.0
}

/// A subject's template-plane appearance.
#[derive(Debug, Clone)]
pub struct SubjectAppearance {
    segments: Vec<Segment>,
}

impl SubjectAppearance {
    pub fn new(spec: &SyntheticSubjectSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let v = spec.vessels;
        let mut segments = Vec::new();
        let mut stack: Vec<([f64; 2], f64, f64, f64, usize)> = Vec::new();
        for _ in 0..v.branches {
            let start = loop {
                let p = [rng.gen_range(-36.0..36.0), rng.gen_range(-50.0..50.0)];
                if in_face(p) {
                    break p;
                }
            };
            let sigma = rng.gen_range(v.width.0..=v.width.1);
            let contrast = rng.gen_range(v.contrast.0..=v.contrast.1) * UNIT;
            stack.push((start, rng.gen_range(0.0..std::f64::consts::TAU), sigma, contrast, rng.gen_range(8..15)));
        }
        let turn = Normal::new(0.0, 0.35).expect("finite sigma");
        while let Some((mut p, mut dir, sigma, contrast, steps)) = stack.pop() {
            for _ in 0..steps {
                dir += turn.sample(&mut rng);
                let q = [p[0] + 6.0 * dir.cos(), p[1] + 6.0 * dir.sin()];
                if !in_face(q) {
                    break;
                }
                segments.push(Segment { a: p, b: q, sigma, contrast });
                if rng.gen_bool(0.12) && sigma > v.width.0 + 0.2 {
                    let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    stack.push((q, dir + side * rng.gen_range(0.5..1.0), sigma - 0.3, contrast * 0.8, rng.gen_range(4..8)));
                }
                p = q;
            }
        }
        Self { segments }
    }

    /// Face temperature (normalized units) at template point `p`.
    pub fn value(&self, p: [f64; 2]) -> f64 {
        let g = |dx: f64, dy: f64, sx: f64, sy: f64| (-0.5 * ((dx / sx).powi(2) + (dy / sy).powi(2))).exp();
        let (x, y) = (p[0], p[1]);
        let mut v = 0.55 + 0.02 * g(0.0, y + 42.0, 1e9, 16.0);
        for s in [-1.0, 1.0] {
            v -= 0.05 * g(x - s * 22.0, y + 12.0, 7.0, 3.5);
            v += 0.03 * g(x - s * 13.0, y + 11.0, 2.5, 2.5);
            v -= 0.025 * g(x - s * 10.0, y - 18.0, 2.5, 2.5);
        }
        v -= 0.03 * g(x, y - 12.0, 5.0, 5.0);
        v -= 0.03 * g(x, y - 36.0, 14.0, 3.5);
        v + self.segments.iter().map(|s| s.value(p)).fold(0.0, f64::max)
    }
}

/// Renders a subject with its template landmarks placed at `landmarks`.
pub fn render_with_landmarks<T: Real>(
    spec: &SyntheticSubjectSpec,
    landmarks: &LandmarkSet<f64>,
    cfg: &RenderConfig,
    noise_seed: u64,
) -> Result<ThermalImage<T>> {
    let (template, _) = face_template();
    let mesh = TriangulatedMesh::delaunay(&template)?;
    let raster = MeshRaster::new(&mesh, landmarks, cfg.width, cfg.height)?;
    let face = SubjectAppearance::new(spec);
    let mut img = ThermalImage::<f64>::filled(cfg.width, cfg.height, cfg.background);
    for px in &raster.pixels {
        let t = &mesh.triangles[px.triangle];
        let mut u = [0.0; 2];
        for (w, &v) in px.bary.iter().zip(t) {
            u[0] += w * template.points[v][0];
            u[1] += w * template.points[v][1];
        }
        img.set(px.x, px.y, face.value(u));
    }
    let mut img = gaussian_blur(&img, cfg.psf_sigma)?;
    if cfg.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        let n = Normal::new(0.0, cfg.noise * UNIT).expect("finite sigma");
        img.data_mut().iter_mut().for_each(|v| *v += n.sample(&mut rng));
    }
    Ok(img.cast())
}

/// Landmarks of `pose` in an image of the given size.
pub fn pose_landmarks<T: Real>(model: &Aam<T>, pose: &Pose, width: usize, height: usize) -> Result<LandmarkSet<f64>> {
    if pose.shape.len() != model.shape.n_modes() {
        return Err(Error::DimensionMismatch("pose shape coefficients vs model".into()));
    }
    let c = model.shape.centroid();
    let t = [0.5 * (width as f64 - 1.0) + pose.translation[0] - c[0], 0.5 * (height as f64 - 1.0) + pose.translation[1] - c[1]];
    let mut p = pose.shape.clone();
    p.extend(model.shape.similarity_params(pose.scale, pose.rotation, t));
    Ok(LandmarkSet::new(model.shape.instance_f64(&p)?))
}

/// Renders `spec` in `pose`, posed through the model's shape space.
pub fn render_synthetic_subject<T: Real>(
    spec: &SyntheticSubjectSpec,
    pose: &Pose,
    model: &Aam<T>,
    cfg: &RenderConfig,
    noise_seed: u64,
) -> Result<ThermalImage<T>> {
    let lm = pose_landmarks(model, pose, cfg.width, cfg.height)?;
    render_with_landmarks(spec, &lm, cfg, noise_seed)
}

/// Image generated by the model itself: appearance `A0 + sum alpha_i A_i`
/// warped onto the shape `p` and extended outward past the face.
pub fn model_generated_face<T: Real>(
    model: &Aam<T>,
    p: &[f64],
    alpha: &[f64],
    width: usize,
    height: usize,
) -> Result<ThermalImage<T>> {
    let canonical = raster_to_image(&model.appearance.instance(alpha), model.raster());
    let canonical = canonical.extend_from_mask(&model.canonical_mask())?;
    let shape = model.shape.instance(p)?;
    let (out, support) =
        crate::aam::piecewise_affine_warp_with_support(&canonical, &model.shape.mean, &shape, &model.mesh, width, height)?;
    out.extend_from_mask(&support)
}

/// 64-bit mix of a base seed and two indices.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub subjects: usize,
    /// Standard deviation of each template deformation mode, pixels.
    pub deformation: f64,
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self { subjects: 24, deformation: 2.5, max_rotation_deg: 15.0, scale_range: (0.9, 1.1), seed: 0x7f_ace }
    }
}

/// Trains an AAM on seeded renderings of randomly deformed templates,
/// segmented and detail-enhanced exactly as the pipeline does.
pub fn train_toy_aam<T: Real>(toy: &ToyModelConfig, render: &RenderConfig, pipeline: &PipelineConfig) -> Result<Aam<T>> {
    let (template, pd) = face_template();
    let modes = deformation_modes(&template);
    let samples: Vec<(ThermalImage<T>, LandmarkSet<T>)> = (0..toy.subjects)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(toy.seed, i as u64, 0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let normal = Normal::new(0.0, toy.deformation).expect("finite sigma");
            let coeffs: Vec<f64> = modes.iter().map(|_| normal.sample(&mut rng)).collect();
            let rot = rng.gen_range(-toy.max_rotation_deg..=toy.max_rotation_deg).to_radians();
            let scale = rng.gen_range(toy.scale_range.0..=toy.scale_range.1);
            let shift = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let (c, s) = (rot.cos(), rot.sin());
            let centre = [0.5 * (render.width as f64 - 1.0) + shift[0], 0.5 * (render.height as f64 - 1.0) + shift[1]];
            let pts = template
                .points
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    let mut q = *p;
                    for (m, a) in modes.iter().zip(&coeffs) {
                        q[0] += a * m[k][0];
                        q[1] += a * m[k][1];
                    }
                    [centre[0] + scale * (c * q[0] - s * q[1]), centre[1] + scale * (s * q[0] + c * q[1])]
                })
                .collect();
            let lm = LandmarkSet::new(pts);
            let spec = SyntheticSubjectSpec::new(derive_seed(toy.seed, i as u64, 1));
            let img: ThermalImage<T> = render_with_landmarks(&spec, &lm, render, derive_seed(toy.seed, i as u64, 2))?;
            let (_, segmented) = segment_face(&img, &pipeline.segmentation)?;
            let enhanced = enhance_detail(&segmented, &pipeline.diffusion)?;
            Ok((enhanced, lm.cast()))
        })
        .collect::<Result<_>>()?;
    let (imgs, lms): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    train_aam(&imgs, &lms, &pd, &AamTrainConfig::default())
}

/// Random pose: shape coefficients `N(0, var_i)` clipped at `+-2 sigma`,
/// rotation within `+-max_rotation_deg`, scale within `scale_range`, and a
/// shift of up to 5 px per axis.
pub fn random_pose<T: Real>(model: &Aam<T>, rng: &mut impl Rng, max_rotation_deg: f64, scale_range: (f64, f64)) -> Pose {
    let shape = model
        .shape
        .variances
        .iter()
        .map(|v| {
            let sd = v.as_f64().sqrt();
            let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
            sd * z.clamp(-2.0, 2.0)
        })
        .collect();
    Pose {
        shape,
        scale: rng.gen_range(scale_range.0..=scale_range.1),
        rotation: rng.gen_range(-max_rotation_deg..=max_rotation_deg).to_radians(),
        translation: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub subjects: usize,
    pub poses_per_subject: usize,
    pub seed: u64,
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub render: RenderConfig,
    pub toy: ToyModelConfig,
    /// Subject ids whose seeds duplicate the previous subject's seed.
    pub duplicate_last: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            subjects: 10,
            poses_per_subject: 3,
            seed: 1,
            max_rotation_deg: 15.0,
            scale_range: (0.9, 1.1),
            render: RenderConfig::default(),
            toy: ToyModelConfig::default(),
            duplicate_last: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLog {
    pub subject: String,
    pub image: String,
    pub iterations: usize,
    pub converged: bool,
    pub e_icaam: f64,
    pub rank: usize,
    pub top: String,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub cmc: Vec<f64>,
    pub probes: Vec<ProbeLog>,
}

impl EvaluationReport {
    pub fn rank1(&self) -> f64 {
        self.cmc.first().copied().unwrap_or(0.0)
    }

    pub fn cmc_csv(&self) -> String {
        crate::recognition::cmc_csv(&self.cmc)
    }

    pub fn probe_log_csv(&self) -> String {
        let mut s = String::from("subject,image,iterations,converged,e_icaam,rank,top,margin\n");
        for p in &self.probes {
            s.push_str(&format!(
                "{},{},{},{},{:.6e},{},{},{:.6}\n",
                p.subject, p.image, p.iterations, p.converged, p.e_icaam, p.rank, p.top, p.margin
            ));
        }
        s
    }
}

fn subject_seed(cfg: &EvaluationConfig, i: usize) -> u64 {
    let j = if cfg.duplicate_last && i + 1 == cfg.subjects && i > 0 { i - 1 } else { i };
    derive_seed(cfg.seed, j as u64, 0)
}

/// Pose `k` of subject `s` as rendered by [`evaluate_synthetic`], with its
/// true landmarks.
pub fn harness_image<T: Real>(
    model: &Aam<T>,
    cfg: &EvaluationConfig,
    s: usize,
    k: usize,
) -> Result<(ThermalImage<T>, LandmarkSet<f64>)> {
    let seed = subject_seed(cfg, s);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64, 7));
    let pose = random_pose(model, &mut rng, cfg.max_rotation_deg, cfg.scale_range);
    let lm = pose_landmarks(model, &pose, cfg.render.width, cfg.render.height)?;
    let img = render_with_landmarks(&SyntheticSubjectSpec::new(seed), &lm, &cfg.render, derive_seed(seed, k as u64, 8))?;
    Ok((img, lm))
}

/// Enrolls pose 0 of every subject and identifies the remaining poses.
/// Poses and noise are derived from each subject's seed.
pub fn evaluate_synthetic<T: Real>(
    model: &Aam<T>,
    pipeline: &PipelineConfig,
    cfg: &EvaluationConfig,
) -> Result<EvaluationReport> {
    if cfg.subjects < 2 {
        return Err(Error::InvalidParameter("evaluation needs at least 2 subjects".into()));
    }
    if cfg.poses_per_subject < 2 {
        return Err(Error::InvalidParameter("at least 2 poses per subject required (one enrolled, one probe)".into()));
    }
    let pre = precompute_for(model, &pipeline.fit)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.subjects).flat_map(|s| (0..cfg.poses_per_subject).map(move |k| (s, k))).collect();
    let sigs: Vec<(Signature<T>, usize, bool, f64)> = jobs
        .par_iter()
        .map(|&(s, k)| {
            let (img, _) = harness_image(model, cfg, s, k)?;
            let out = run_pipeline(&img, model, &pre, pipeline, None)?;
            let (it, conv, e) = (out.fit.iterations, out.fit.converged, out.fit.e_icaam);
            Ok((out.into_signature(format!("s{s:02}"), format!("s{s:02}_p{k}")), it, conv, e))
        })
        .collect::<Result<_>>()?;
    let mut gallery = Gallery::new(pipeline.hash());
    for (sig, ..) in sigs.iter().filter(|(sig, ..)| sig.image_id.ends_with("_p0")) {
        gallery.enroll(sig.clone())?;
    }
    let probes: Vec<&(Signature<T>, usize, bool, f64)> = sigs.iter().filter(|(sig, ..)| !sig.image_id.ends_with("_p0")).collect();
    let results: Vec<MatchResult> = probes.iter().map(|(sig, ..)| identify(&gallery, sig)).collect::<Result<_>>()?;
    let cmc = cmc_from_results(&results, gallery.subjects().len())?;
    let logs = probes
        .iter()
        .zip(&results)
        .map(|((sig, it, conv, e), r)| ProbeLog {
            subject: sig.subject_id.clone(),
            image: sig.image_id.clone(),
            iterations: *it,
            converged: *conv,
            e_icaam: *e,
            rank: r.correct_rank.unwrap_or(0),
            top: r.ranked[0].0.clone(),
            margin: r.margin(),
        })
        .collect();
    Ok(EvaluationReport { cmc, probes: logs })
}

/// Raster-ordered values of `img` in the model's canonical frame.
pub fn canonical_values<T: Real>(img: &ThermalImage<T>, model: &Aam<T>) -> Vec<T> {
    image_to_raster(img, model.raster())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRobustnessConfig {
    pub subjects: usize,
    pub seed: u64,
    /// Relative scale of the second rendering.
    pub reduced_scale: f64,
    pub threshold: f64,
    pub render: RenderConfig,
}

impl Default for ScaleRobustnessConfig {
    fn default() -> Self {
        Self { subjects: 10, seed: 3, reduced_scale: 0.8, threshold: 0.5, render: RenderConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalePair {
    pub real: f64,
    pub binary: f64,
}

/// Renders each subject frontally at full and reduced scale, aligns both to
/// the canonical frame through their true landmarks and correlates the two
/// signatures, real-valued and thresholded. A thresholded map without any
/// pixel on one side of the threshold scores 0.
pub fn scale_robustness<T: Real>(
    model: &Aam<T>,
    pipeline: &PipelineConfig,
    cfg: &ScaleRobustnessConfig,
) -> Result<Vec<ScalePair>> {
    if !(cfg.reduced_scale > 0.0) || !(cfg.threshold > 0.0 && cfg.threshold < 1.0) {
        return Err(Error::InvalidParameter("reduced_scale must be positive and threshold in (0, 1)".into()));
    }
    let r = &cfg.render;
    (0..cfg.subjects)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, i as u64, 0);
            let spec = SyntheticSubjectSpec::new(seed);
            let mut frontals = Vec::new();
            let mut support = model.canonical_mask();
            for (k, scale) in [1.0, cfg.reduced_scale].into_iter().enumerate() {
                let pose = Pose { scale, ..Pose::frontal(model.shape.n_modes()) };
                let lm = pose_landmarks(model, &pose, r.width, r.height)?;
                let img: ThermalImage<T> = render_with_landmarks(&spec, &lm, r, derive_seed(seed, k as u64, 8))?;
                let (frontal, inside) = warp_raster(&img, &lm.cast(), &model.mesh, model.raster());
                support = support.and(&inside)?;
                frontals.push(frontal);
            }
            if pipeline.signature_margin > 0.0 {
                support = erode(&support, pipeline.signature_margin);
            }
            let maps = frontals
                .iter()
                .map(|f| extract_signature(f, &support, &pipeline.vesselness).map(|m| m.image))
                .collect::<Result<Vec<_>>>()?;
            let real = ncc_values(maps[0].data(), maps[1].data(), support.data())?;
            let t = T::lit(cfg.threshold);
            let bin: Vec<Vec<T>> =
                maps.iter().map(|m| m.data().iter().map(|&v| if v >= t { T::one() } else { T::zero() }).collect()).collect();
            let binary = match ncc_values(&bin[0], &bin[1], support.data()) {
                Err(Error::ZeroVariance) => 0.0,
                other => other?,
            };
            Ok(ScalePair { real, binary })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryConfig {
    pub trials: usize,
    pub seed: u64,
    /// Largest initial shape error per mode, in standard deviations.
    pub shape_perturbation: f64,
    /// Largest relative initial scale error.
    pub scale_perturbation: f64,
    /// Largest initial translation error, pixels.
    pub translation_perturbation: f64,
    /// Appearance coefficients drawn uniformly within this many standard deviations.
    pub appearance: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 5,
            shape_perturbation: 0.5,
            scale_perturbation: 0.05,
            translation_perturbation: 5.0,
            appearance: 1.0,
            width: 200,
            height: 240,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryTrial {
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits model-generated faces in random poses from perturbed ground truth.
pub fn recovery_trials<T: Real>(model: &Aam<T>, fit_cfg: &FitConfig, cfg: &RecoveryConfig) -> Result<Vec<RecoveryTrial>> {
    let pre = precompute_for(model, fit_cfg)?;
    let c = model.shape.centroid();
    let centre = [0.5 * (cfg.width as f64 - 1.0) - c[0], 0.5 * (cfg.height as f64 - 1.0) - c[1]];
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64, 0));
            let pose = random_pose(model, &mut rng, 15.0, (0.9, 1.1));
            let mut truth = pose.shape.clone();
            let t = [centre[0] + pose.translation[0], centre[1] + pose.translation[1]];
            truth.extend(model.shape.similarity_params(pose.scale, pose.rotation, t));
            let alpha: Vec<f64> = model
                .appearance
                .variances
                .iter()
                .map(|v| cfg.appearance * rng.gen_range(-1.0..=1.0) * v.as_f64().sqrt())
                .collect();
            let img = model_generated_face(model, &truth, &alpha, cfg.width, cfg.height)?;

            let mut init: Vec<f64> = pose
                .shape
                .iter()
                .zip(&model.shape.variances)
                .map(|(p, v)| p + cfg.shape_perturbation * rng.gen_range(-1.0..=1.0) * v.as_f64().sqrt())
                .collect();
            let scale = pose.scale * (1.0 + cfg.scale_perturbation * rng.gen_range(-1.0..=1.0));
            let dir = rng.gen_range(0.0..std::f64::consts::TAU);
            let dist = cfg.translation_perturbation * rng.gen_range(0.0..=1.0);
            let t0 = [t[0] + dist * dir.cos(), t[1] + dist * dir.sin()];
            init.extend(model.shape.similarity_params(scale, pose.rotation, t0));

            let r = fit(&img, &init, model, &pre, fit_cfg)?;
            Ok(RecoveryTrial {
                rms: r.landmarks.rms_distance(&model.shape.instance(&truth)?).as_f64(),
                iterations: r.iterations,
                converged: r.converged,
            })
        })
        .collect()
}
